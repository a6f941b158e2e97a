//! The configuration document tree and its canonical byte form.
//!
//! A [`Document`] is the JSON-like representation of every manifest spec and
//! resource body. It deliberately has no floating-point variant: signer and
//! verifier must agree on bytes, and integers and strings are enough for mesh
//! configuration (percentages are integer basis points).
//!
//! Maps preserve insertion order in memory so that manifests round-trip
//! through YAML readably. Only [`canonicalize`] output is order-independent.

use std::fmt;

use indexmap::IndexMap;
use serde::de::{self, Deserialize, Deserializer, MapAccess, SeqAccess, Visitor};
use serde::ser::{Serialize, SerializeMap, SerializeSeq, Serializer};

use crate::error::{Error, Result};

/// String-keyed map with insertion order preserved.
pub type Map = IndexMap<String, Document>;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Document {
    #[default]
    Null,
    Bool(bool),
    Int(i64),
    Str(String),
    Array(Vec<Document>),
    Map(Map),
}

impl Document {
    pub fn map() -> Self {
        Document::Map(Map::new())
    }

    pub fn get(&self, key: &str) -> Option<&Document> {
        match self {
            Document::Map(m) => m.get(key),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Document::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Document::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Document::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_array(&self) -> Option<&[Document]> {
        match self {
            Document::Array(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_map(&self) -> Option<&Map> {
        match self {
            Document::Map(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_map_mut(&mut self) -> Option<&mut Map> {
        match self {
            Document::Map(m) => Some(m),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Document::Null)
    }

    /// Short type name used in error messages.
    pub fn type_name(&self) -> &'static str {
        match self {
            Document::Null => "null",
            Document::Bool(_) => "boolean",
            Document::Int(_) => "integer",
            Document::Str(_) => "string",
            Document::Array(_) => "array",
            Document::Map(_) => "map",
        }
    }

    /// Builder-style insert; panics if `self` is not a map.
    pub fn with(mut self, key: impl Into<String>, value: impl Into<Document>) -> Self {
        match &mut self {
            Document::Map(m) => {
                m.insert(key.into(), value.into());
            }
            other => panic!("Document::with on a {}", other.type_name()),
        }
        self
    }

    /// Canonical bytes of this document. See [`canonicalize`].
    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonicalize(self)
    }
}

impl From<bool> for Document {
    fn from(b: bool) -> Self {
        Document::Bool(b)
    }
}

impl From<i64> for Document {
    fn from(i: i64) -> Self {
        Document::Int(i)
    }
}

impl From<&str> for Document {
    fn from(s: &str) -> Self {
        Document::Str(s.to_owned())
    }
}

impl From<String> for Document {
    fn from(s: String) -> Self {
        Document::Str(s)
    }
}

impl From<Vec<Document>> for Document {
    fn from(a: Vec<Document>) -> Self {
        Document::Array(a)
    }
}

impl From<Map> for Document {
    fn from(m: Map) -> Self {
        Document::Map(m)
    }
}

impl<T: Into<Document>> From<Option<T>> for Document {
    fn from(o: Option<T>) -> Self {
        o.map_or(Document::Null, Into::into)
    }
}

impl fmt::Display for Document {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&String::from_utf8_lossy(&canonicalize(self)))
    }
}

/// Serializes the document with its maps in insertion order.
impl Serialize for Document {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serialize_doc(self, serializer, false)
    }
}

/// Serializes with map keys sorted by code point.
struct Sorted<'a>(&'a Document);

impl Serialize for Sorted<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serialize_doc(self.0, serializer, true)
    }
}

fn serialize_doc<S: Serializer>(doc: &Document, serializer: S, sorted: bool) -> std::result::Result<S::Ok, S::Error> {
    match doc {
        Document::Null => serializer.serialize_unit(),
        Document::Bool(b) => serializer.serialize_bool(*b),
        Document::Int(i) => serializer.serialize_i64(*i),
        Document::Str(s) => serializer.serialize_str(s),
        Document::Array(items) => {
            let mut seq = serializer.serialize_seq(Some(items.len()))?;
            for item in items {
                if sorted {
                    seq.serialize_element(&Sorted(item))?;
                } else {
                    seq.serialize_element(item)?;
                }
            }
            seq.end()
        }
        Document::Map(m) => {
            let mut out = serializer.serialize_map(Some(m.len()))?;
            if sorted {
                // `str` ordering is byte-wise on UTF-8, which is code point order.
                let mut entries: Vec<_> = m.iter().collect();
                entries.sort_unstable_by(|a, b| a.0.cmp(b.0));
                for (k, v) in entries {
                    out.serialize_entry(k, &Sorted(v))?;
                }
            } else {
                for (k, v) in m {
                    out.serialize_entry(k, v)?;
                }
            }
            out.end()
        }
    }
}

impl<'de> Deserialize<'de> for Document {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        deserializer.deserialize_any(DocumentVisitor)
    }
}

struct DocumentVisitor;

impl<'de> Visitor<'de> for DocumentVisitor {
    type Value = Document;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("null, boolean, integer, string, sequence or string-keyed map")
    }

    fn visit_unit<E: de::Error>(self) -> std::result::Result<Document, E> {
        Ok(Document::Null)
    }

    fn visit_none<E: de::Error>(self) -> std::result::Result<Document, E> {
        Ok(Document::Null)
    }

    fn visit_some<D: Deserializer<'de>>(self, d: D) -> std::result::Result<Document, D::Error> {
        Document::deserialize(d)
    }

    fn visit_bool<E: de::Error>(self, v: bool) -> std::result::Result<Document, E> {
        Ok(Document::Bool(v))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Document, E> {
        Ok(Document::Int(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Document, E> {
        i64::try_from(v)
            .map(Document::Int)
            .map_err(|_| E::custom(format!("integer {v} exceeds the signed 64-bit range")))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Document, E> {
        Err(E::custom(format!("floating-point value {v} is not allowed")))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Document, E> {
        Ok(Document::Str(v.to_owned()))
    }

    fn visit_string<E: de::Error>(self, v: String) -> std::result::Result<Document, E> {
        Ok(Document::Str(v))
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<Document, A::Error> {
        let mut items = Vec::with_capacity(seq.size_hint().unwrap_or(0).min(4096));
        while let Some(item) = seq.next_element::<Document>()? {
            items.push(item);
        }
        Ok(Document::Array(items))
    }

    fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> std::result::Result<Document, A::Error> {
        let mut map = Map::new();
        while let Some(key) = access.next_key::<String>()? {
            if map.contains_key(&key) {
                return Err(de::Error::custom(format!("duplicate map key {key:?}")));
            }
            let value = access.next_value::<Document>()?;
            map.insert(key, value);
        }
        Ok(Document::Map(map))
    }
}

/// Deterministic byte form: keys sorted by code point, no insignificant
/// whitespace, minimal string escaping, shortest decimal integers, UTF-8.
pub fn canonicalize(doc: &Document) -> Vec<u8> {
    serde_json::to_vec(&Sorted(doc)).expect("document serialization is infallible")
}

/// Parses JSON bytes (canonical or not) into a document.
pub fn parse_json(bytes: &[u8]) -> Result<Document> {
    serde_json::from_slice(bytes).map_err(|e| Error::MalformedDocument(e.to_string()))
}

/// Parses the YAML-compatible configuration subset into a document.
pub fn parse_yaml(text: &str) -> Result<Document> {
    serde_yaml::from_str(text).map_err(|e| Error::MalformedDocument(e.to_string()))
}

/// Renders a document as YAML, keeping map insertion order.
pub fn to_yaml(doc: &Document) -> String {
    serde_yaml::to_string(doc).expect("document serialization is infallible")
}
