//! Canonical JSON encoding and content digests.
//!
//! Canonical form is compact JSON with object keys sorted bytewise, integers
//! printed as shortest decimal and floats as their shortest round-trip
//! representation. Every hash in the kernel (audit chain, idempotency
//! fingerprints, memory content hashes) is taken over this encoding.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use sha2::{Digest as _, Sha256};

/// Digest algorithm recorded in trace headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HashAlgorithm {
    #[default]
    Sha256,
}

impl HashAlgorithm {
    pub fn digest(self, bytes: &[u8]) -> Digest {
        match self {
            HashAlgorithm::Sha256 => {
                let out: [u8; 32] = Sha256::digest(bytes).into();
                Digest(out)
            }
        }
    }
}

/// A 256-bit digest, serialized as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Digest> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; 32] = bytes.try_into().ok()?;
        Some(Digest(arr))
    }

    /// First 16 hex characters, used for derived identifiers.
    pub fn short(&self) -> String {
        self.to_hex()[..16].to_string()
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.short())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Digest::from_hex(&s).ok_or_else(|| serde::de::Error::custom("invalid 256-bit hex digest"))
    }
}

/// Canonical text of a JSON value.
///
/// `serde_json::Map` is a `BTreeMap` in this build (the `preserve_order`
/// feature is never enabled), so plain compact serialization is already
/// key-sorted.
pub fn canonical_string(value: &Value) -> String {
    serde_json::to_string(value).expect("serializing a Value cannot fail")
}

/// Converts any serializable value to a JSON value.
pub fn to_value<T: Serialize + ?Sized>(value: &T) -> Value {
    serde_json::to_value(value).expect("kernel types always serialize")
}

/// Canonical text of any serializable value.
pub fn canonical_of<T: Serialize + ?Sized>(value: &T) -> String {
    canonical_string(&to_value(value))
}

pub fn sha256(bytes: &[u8]) -> Digest {
    HashAlgorithm::Sha256.digest(bytes)
}

/// Digest of the canonical encoding of `value`.
pub fn hash_value(value: &Value) -> Digest {
    sha256(canonical_string(value).as_bytes())
}

pub fn hash_of<T: Serialize + ?Sized>(value: &T) -> Digest {
    hash_value(&to_value(value))
}

/// Deterministic 64-bit value derived from a list of string parts; used for
/// seeded jitter and derived ids.
pub fn seeded_u64(seed: u64, parts: &[&str]) -> u64 {
    let mut buf = Vec::with_capacity(64);
    buf.extend_from_slice(&seed.to_be_bytes());
    for p in parts {
        buf.extend_from_slice(&(p.len() as u64).to_be_bytes());
        buf.extend_from_slice(p.as_bytes());
    }
    let d = sha256(&buf);
    u64::from_be_bytes(d.0[..8].try_into().unwrap())
}

/// Resolves a dotted path (`a.b.0.c`) inside a document. Numeric segments
/// index arrays.
pub fn lookup_path<'a>(doc: &'a Value, path: &str) -> Option<&'a Value> {
    if path.is_empty() {
        return Some(doc);
    }
    let mut cur = doc;
    for seg in path.split('.') {
        cur = match cur {
            Value::Object(map) => map.get(seg)?,
            Value::Array(items) => items.get(seg.parse::<usize>().ok()?)?,
            _ => return None,
        };
    }
    Some(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_are_sorted_and_compact() {
        let v = json!({"b": 1, "a": {"d": [1, 2.5], "c": "x"}});
        assert_eq!(canonical_string(&v), r#"{"a":{"c":"x","d":[1,2.5]},"b":1}"#);
    }

    #[test]
    fn floats_use_shortest_round_trip() {
        let v = json!([0.1, 1.0, 1e21, -0.0, 123456789.125]);
        assert_eq!(canonical_string(&v), "[0.1,1.0,1e+21,-0.0,123456789.125]");
    }

    #[test]
    fn same_logical_payload_same_digest() {
        let a: Value = serde_json::from_str(r#"{"x": 1, "y": [true, null]}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{ "y":[true,null],"x":1 }"#).unwrap();
        assert_eq!(hash_value(&a), hash_value(&b));
    }

    #[test]
    fn digest_hex_round_trip() {
        let d = sha256(b"abc");
        assert_eq!(
            d.to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(Digest::from_hex(&d.to_hex()), Some(d));
        assert_eq!(Digest::from_hex("zz"), None);
    }

    #[test]
    fn path_lookup() {
        let v = json!({"E1": {"features": {"t": 3}, "xs": [{"a": 1}]}});
        assert_eq!(lookup_path(&v, "E1.features.t"), Some(&json!(3)));
        assert_eq!(lookup_path(&v, "E1.xs.0.a"), Some(&json!(1)));
        assert_eq!(lookup_path(&v, "E1.missing"), None);
    }
}
