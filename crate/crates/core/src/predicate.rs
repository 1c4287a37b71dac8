//! Small comparison language used for plan pre/postconditions, guards and
//! reconsideration triggers: `path op literal`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::canonical::lookup_path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompareOp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "exists")]
    Exists,
}

impl CompareOp {
    fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "==",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
            CompareOp::Exists => "exists",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub path: String,
    pub op: CompareOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse predicate {0:?}")]
pub struct PredicateParseError(pub String);

impl Predicate {
    pub fn new(path: impl Into<String>, op: CompareOp, value: Option<Value>) -> Self {
        Self {
            path: path.into(),
            op,
            value,
        }
    }

    /// First path segment; for plan predicates this is the step id.
    pub fn root(&self) -> &str {
        self.path.split('.').next().unwrap_or("")
    }

    /// Evaluates against `doc`. A missing path makes every comparison false.
    pub fn eval(&self, doc: &Value) -> bool {
        let Some(found) = lookup_path(doc, &self.path) else {
            return false;
        };
        if self.op == CompareOp::Exists {
            return !found.is_null();
        }
        let Some(lit) = &self.value else {
            return false;
        };
        match self.op {
            CompareOp::Eq => values_equal(found, lit),
            CompareOp::Ne => !values_equal(found, lit),
            op => match compare(found, lit) {
                Some(ord) => match op {
                    CompareOp::Lt => ord == Ordering::Less,
                    CompareOp::Le => ord != Ordering::Greater,
                    CompareOp::Gt => ord == Ordering::Greater,
                    CompareOp::Ge => ord != Ordering::Less,
                    _ => unreachable!(),
                },
                None => false,
            },
        }
    }
}

fn values_equal(a: &Value, b: &Value) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) if a.is_number() && b.is_number() => x == y,
        _ => a == b,
    }
}

fn compare(a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => x.as_f64()?.partial_cmp(&y.as_f64()?),
        (Value::String(x), Value::String(y)) => Some(x.cmp(y)),
        _ => None,
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.value {
            Some(v) => write!(f, "{} {} {}", self.path, self.op.symbol(), v),
            None => write!(f, "{} {}", self.path, self.op.symbol()),
        }
    }
}

impl FromStr for Predicate {
    type Err = PredicateParseError;

    /// Parses `path op literal` where the literal is JSON (`E2.risk > 0.6`,
    /// `E1.mode == "derate"`), or `path exists`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || PredicateParseError(s.to_string());
        let s = s.trim();
        let (path, rest) = s.split_once(char::is_whitespace).ok_or_else(err)?;
        let rest = rest.trim_start();
        if rest == "exists" {
            return Ok(Predicate::new(path, CompareOp::Exists, None));
        }
        let (op, lit) = ["==", "!=", "<=", ">=", "<", ">"]
            .iter()
            .find_map(|sym| rest.strip_prefix(sym).map(|lit| (*sym, lit)))
            .ok_or_else(err)?;
        let op = match op {
            "==" => CompareOp::Eq,
            "!=" => CompareOp::Ne,
            "<=" => CompareOp::Le,
            ">=" => CompareOp::Ge,
            "<" => CompareOp::Lt,
            _ => CompareOp::Gt,
        };
        let value: Value = serde_json::from_str(lit.trim()).map_err(|_| err())?;
        Ok(Predicate::new(path, op, Some(value)))
    }
}
