use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    Text,
    Integer,
    Decimal,
    Boolean,
    Enumeration,
    NestedDocument,
    List,
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FieldKind::Text => "text",
            FieldKind::Integer => "integer",
            FieldKind::Decimal => "decimal",
            FieldKind::Boolean => "boolean",
            FieldKind::Enumeration => "enumeration",
            FieldKind::NestedDocument => "nested-document",
            FieldKind::List => "list",
        })
    }
}

/// One argument field. `List` fields validate every element against their
/// single child; `NestedDocument` fields validate against all children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSchema {
    pub name: String,
    pub kind: FieldKind,
    #[serde(default)]
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub allowed: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<FieldSchema>,
}

impl FieldSchema {
    pub fn new(name: impl Into<String>, kind: FieldKind) -> Self {
        Self {
            name: name.into(),
            kind,
            required: false,
            min: None,
            max: None,
            allowed: Vec::new(),
            max_len: None,
            children: Vec::new(),
        }
    }

    pub fn required(mut self) -> Self {
        self.required = true;
        self
    }

    pub fn range(mut self, min: Option<f64>, max: Option<f64>) -> Self {
        self.min = min;
        self.max = max;
        self
    }

    pub fn allowed<I, S>(mut self, values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.allowed = values.into_iter().map(Into::into).collect();
        self
    }

    pub fn max_len(mut self, n: usize) -> Self {
        self.max_len = Some(n);
        self
    }

    pub fn children(mut self, children: Vec<FieldSchema>) -> Self {
        self.children = children;
        self
    }
}

/// Checks schema invariants; returns one message per violation.
pub fn check_schema(fields: &[FieldSchema]) -> Vec<String> {
    let mut problems = Vec::new();
    check_level(fields, "", &mut problems);
    problems
}

fn check_level(fields: &[FieldSchema], prefix: &str, problems: &mut Vec<String>) {
    let mut seen = BTreeSet::new();
    for f in fields {
        let path = if prefix.is_empty() {
            f.name.clone()
        } else {
            format!("{prefix}.{}", f.name)
        };
        if f.name.is_empty() || f.name.contains(['.', '[', ']']) {
            problems.push(format!("{path}: invalid field name"));
        }
        if !seen.insert(f.name.as_str()) {
            problems.push(format!("{path}: duplicate field name"));
        }
        if let (Some(lo), Some(hi)) = (f.min, f.max) {
            if lo > hi {
                problems.push(format!("{path}: min {lo} > max {hi}"));
            }
        }
        match f.kind {
            FieldKind::Enumeration if f.allowed.is_empty() => {
                problems.push(format!("{path}: enumeration without allowed values"))
            }
            FieldKind::NestedDocument if f.children.is_empty() => {
                problems.push(format!("{path}: nested document without children"))
            }
            FieldKind::List if f.children.len() != 1 => {
                problems.push(format!("{path}: list needs exactly one element schema"))
            }
            _ => {}
        }
        if !f.children.is_empty() {
            check_level(&f.children, &path, problems);
        }
    }
}

/// Finds the schema field addressed by a dotted path (list elements are
/// addressed through their element schema, so `items.speed` works).
pub fn field_at<'a>(fields: &'a [FieldSchema], path: &str) -> Option<&'a FieldSchema> {
    let mut level = fields;
    let mut found = None;
    for seg in path.split('.') {
        let f = level.iter().find(|f| f.name == seg)?;
        found = Some(f);
        level = match f.kind {
            FieldKind::List => f.children.first().map(|c| c.children.as_slice()).unwrap_or(&[]),
            _ => &f.children,
        };
    }
    found
}
