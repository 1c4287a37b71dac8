use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SanitizeFlag {
    pub label: String,
    pub pattern: String,
    /// Byte offset of the match in the input text.
    pub offset: usize,
    pub len: usize,
    /// Location inside a structured document; empty for plain text.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SanitizerConfig {
    #[serde(default = "default_control_tokens")]
    pub control_tokens: Vec<String>,
    #[serde(default = "default_deny_patterns")]
    pub deny_patterns: Vec<String>,
}

impl Default for SanitizerConfig {
    fn default() -> Self {
        Self {
            control_tokens: default_control_tokens(),
            deny_patterns: default_deny_patterns(),
        }
    }
}

fn default_control_tokens() -> Vec<String> {
    ["<|im_start|>", "<|im_end|>", "<|endoftext|>", "<|system|>", "[INST]", "[/INST]", "<<SYS>>", "<</SYS>>"]
        .map(String::from)
        .to_vec()
}

fn default_deny_patterns() -> Vec<String> {
    [
        "ignore previous instructions",
        "ignore all previous instructions",
        "disregard the system prompt",
    ]
    .map(String::from)
    .to_vec()
}

pub const CONTROL_TOKEN: &str = "control_token";
pub const DENY_LIST: &str = "deny_list";

fn marker(label: &str) -> String {
    format!("⟦filtered:{label}⟧")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SanitizerError {
    #[error("empty pattern")]
    EmptyPattern,
    #[error("pattern {0:?} could match replacement markers")]
    MarkerCollision(String),
}

/// Case-insensitive literal matcher. Every match is replaced by a marker
/// naming its list; patterns that could match a marker are refused, which
/// is what makes `sanitize` idempotent.
#[derive(Debug, Clone)]
pub struct Sanitizer {
    patterns: Vec<Pattern>,
    regex: Option<Regex>,
}

#[derive(Debug, Clone)]
struct Pattern {
    literal: String,
    label: &'static str,
    exact: Regex,
}

impl Default for Sanitizer {
    fn default() -> Self {
        Self::new(&SanitizerConfig::default()).expect("default patterns are valid")
    }
}

impl Sanitizer {
    pub fn new(config: &SanitizerConfig) -> Result<Self, SanitizerError> {
        let mut raw: Vec<(String, &'static str)> = Vec::new();
        raw.extend(config.control_tokens.iter().map(|p| (p.clone(), CONTROL_TOKEN)));
        raw.extend(config.deny_patterns.iter().map(|p| (p.clone(), DENY_LIST)));
        // Longest first so overlapping literals prefer the fuller match.
        raw.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));

        let markers = [marker(CONTROL_TOKEN), marker(DENY_LIST)];
        let mut patterns: Vec<Pattern> = Vec::new();
        for (literal, label) in raw {
            if literal.is_empty() {
                return Err(SanitizerError::EmptyPattern);
            }
            let anywhere = build(&literal, false);
            if literal.contains(['⟦', '⟧']) || markers.iter().any(|m| anywhere.is_match(m)) {
                return Err(SanitizerError::MarkerCollision(literal));
            }
            if patterns.iter().any(|p| p.exact.is_match(&literal)) {
                continue;
            }
            let exact = build(&literal, true);
            patterns.push(Pattern { literal, label, exact });
        }
        let regex = if patterns.is_empty() {
            None
        } else {
            let alternation = patterns.iter().map(|p| regex::escape(&p.literal)).collect::<Vec<_>>().join("|");
            Some(compile(&alternation))
        };
        Ok(Self { patterns, regex })
    }

    fn pattern_for(&self, matched: &str) -> &Pattern {
        self.patterns
            .iter()
            .find(|p| p.exact.is_match(matched))
            .expect("every match comes from some pattern")
    }

    pub fn sanitize(&self, text: &str) -> (String, Vec<SanitizeFlag>) {
        let Some(re) = &self.regex else {
            return (text.to_string(), Vec::new());
        };
        let mut clean = String::with_capacity(text.len());
        let mut flags = Vec::new();
        let mut last = 0;
        for m in re.find_iter(text) {
            let pattern = self.pattern_for(m.as_str());
            clean.push_str(&text[last..m.start()]);
            clean.push_str(&marker(pattern.label));
            flags.push(SanitizeFlag {
                label: pattern.label.to_string(),
                pattern: pattern.literal.clone(),
                offset: m.start(),
                len: m.len(),
                path: String::new(),
            });
            last = m.end();
        }
        clean.push_str(&text[last..]);
        (clean, flags)
    }

    /// Sanitizes every string leaf of a document.
    pub fn sanitize_value(&self, v: &Value) -> (Value, Vec<SanitizeFlag>) {
        let mut flags = Vec::new();
        let out = self.walk(v, "", &mut flags);
        (out, flags)
    }

    fn walk(&self, v: &Value, path: &str, flags: &mut Vec<SanitizeFlag>) -> Value {
        match v {
            Value::String(s) => {
                let (clean, fs) = self.sanitize(s);
                flags.extend(fs.into_iter().map(|mut f| {
                    f.path = path.to_string();
                    f
                }));
                Value::String(clean)
            }
            Value::Array(items) => Value::Array(
                items
                    .iter()
                    .enumerate()
                    .map(|(i, item)| self.walk(item, &join(path, &i.to_string()), flags))
                    .collect(),
            ),
            Value::Object(map) => Value::Object(
                map.iter()
                    .map(|(k, item)| (k.clone(), self.walk(item, &join(path, k), flags)))
                    .collect(),
            ),
            other => other.clone(),
        }
    }
}

fn join(path: &str, seg: &str) -> String {
    if path.is_empty() {
        seg.to_string()
    } else {
        format!("{path}.{seg}")
    }
}

fn build(literal: &str, anchored: bool) -> Regex {
    let body = regex::escape(literal);
    if anchored {
        compile(&format!("^(?:{body})$"))
    } else {
        compile(&body)
    }
}

fn compile(pattern: &str) -> Regex {
    RegexBuilder::new(pattern)
        .case_insensitive(true)
        .build()
        .expect("escaped literals always compile")
}

/// Sanitizes with the default pattern lists.
pub fn sanitize(text: &str) -> (String, Vec<SanitizeFlag>) {
    Sanitizer::default().sanitize(text)
}
