use std::panic::{catch_unwind, AssertUnwindSafe};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::audit::{AuditSink, Component, EventKind};
use crate::canonical::{hash_of, hash_value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubjectKind {
    Goal,
    Plan,
    Call,
    Simulation,
    Record,
    Message,
}

/// The thing being judged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub subject_ref: String,
    pub kind: SubjectKind,
    pub document: Value,
}

impl Subject {
    pub fn new(subject_ref: impl Into<String>, kind: SubjectKind, document: Value) -> Self {
        Self {
            subject_ref: subject_ref.into(),
            kind,
            document,
        }
    }
}

/// Immutable judgement. Aggregates list their constituent verdict ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub verdict_id: String,
    pub verifier_id: String,
    pub verifier_version: String,
    pub subject_ref: String,
    pub pass: bool,
    pub reason_codes: Vec<String>,
    pub evidence_refs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constituents: Vec<String>,
}

impl Verdict {
    fn sealed(
        verifier_id: &str,
        verifier_version: &str,
        subject: &Subject,
        pass: bool,
        reason_codes: Vec<String>,
        evidence_refs: Vec<String>,
        constituents: Vec<String>,
    ) -> Self {
        let id_src = json!({
            "constituents": constituents,
            "evidence": evidence_refs,
            "pass": pass,
            "reasons": reason_codes,
            "subject": subject.subject_ref,
            "subject_hash": hash_value(&subject.document),
            "verifier": verifier_id,
            "version": verifier_version,
        });
        Self {
            verdict_id: format!("vd-{}", hash_value(&id_src).short()),
            verifier_id: verifier_id.to_string(),
            verifier_version: verifier_version.to_string(),
            subject_ref: subject.subject_ref.clone(),
            pass,
            reason_codes,
            evidence_refs,
            constituents,
        }
    }

    /// Digest of the verdict document.
    pub fn digest(&self) -> crate::canonical::Digest {
        hash_of(self)
    }
}

/// What a single verifier reports.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Finding {
    pub pass: bool,
    pub reason_codes: Vec<String>,
    pub evidence_refs: Vec<String>,
}

impl Finding {
    pub fn pass() -> Self {
        Self {
            pass: true,
            ..Self::default()
        }
    }

    pub fn fail(reason: impl Into<String>) -> Self {
        Self {
            pass: false,
            reason_codes: vec![reason.into()],
            evidence_refs: Vec::new(),
        }
    }

    pub fn with_evidence(mut self, evidence: impl Into<String>) -> Self {
        self.evidence_refs.push(evidence.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("verifier crashed: {0}")]
pub struct VerifierCrash(pub String);

/// A deterministic, versioned judge.
pub trait Verifier {
    fn id(&self) -> &str;
    fn version(&self) -> &str;
    fn check(&self, subject: &Subject) -> Result<Finding, VerifierCrash>;
}

/// Verifier backed by a closure.
pub struct FnVerifier<F> {
    id: String,
    version: String,
    f: F,
}

impl<F> FnVerifier<F>
where
    F: Fn(&Subject) -> Result<Finding, VerifierCrash>,
{
    pub fn new(id: impl Into<String>, version: impl Into<String>, f: F) -> Self {
        Self {
            id: id.into(),
            version: version.into(),
            f,
        }
    }
}

impl<F> Verifier for FnVerifier<F>
where
    F: Fn(&Subject) -> Result<Finding, VerifierCrash>,
{
    fn id(&self) -> &str {
        &self.id
    }

    fn version(&self) -> &str {
        &self.version
    }

    fn check(&self, subject: &Subject) -> Result<Finding, VerifierCrash> {
        (self.f)(subject)
    }
}

pub const AGGREGATE_VERIFIER: &str = "aggregate";

/// Runs `verifiers` in order and aggregates: pass iff all pass, reason codes
/// concatenated in verifier order. A crash (error or panic) fails closed
/// with `verifier_error`. Every constituent and the aggregate are logged.
pub fn verify(subject: &Subject, verifiers: &[&dyn Verifier], sink: &dyn AuditSink) -> Verdict {
    let mut constituents = Vec::with_capacity(verifiers.len());
    for v in verifiers {
        let outcome = catch_unwind(AssertUnwindSafe(|| v.check(subject)));
        let finding = match outcome {
            Ok(Ok(f)) => {
                if !f.pass && f.reason_codes.is_empty() {
                    Finding::fail("unspecified_failure")
                } else {
                    f
                }
            }
            Ok(Err(crash)) => Finding::fail("verifier_error").with_evidence(crash.0),
            Err(_) => Finding::fail("verifier_error").with_evidence("panic"),
        };
        let verdict = Verdict::sealed(
            v.id(),
            v.version(),
            subject,
            finding.pass,
            finding.reason_codes,
            finding.evidence_refs,
            Vec::new(),
        );
        sink.emit(Component::Assurance, EventKind::VerdictIssued, json!({ "verdict": verdict }));
        constituents.push(verdict);
    }

    let pass = constituents.iter().all(|v| v.pass);
    let mut reasons: Vec<String> = constituents.iter().flat_map(|v| v.reason_codes.clone()).collect();
    if constituents.is_empty() {
        reasons.push("no_verifiers".into());
    }
    let evidence: Vec<String> = constituents.iter().flat_map(|v| v.evidence_refs.clone()).collect();
    let aggregate = Verdict::sealed(
        AGGREGATE_VERIFIER,
        "1",
        subject,
        pass,
        reasons,
        evidence,
        constituents.iter().map(|v| v.verdict_id.clone()).collect(),
    );
    sink.emit(
        Component::Assurance,
        EventKind::VerdictIssued,
        json!({ "verdict": aggregate, "subject_kind": subject.kind }),
    );
    aggregate
}
