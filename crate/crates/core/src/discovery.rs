//! State-of-the-world discovery messages exchanged between control plane and proxies.
//!
//! Every frame body is the canonical bytes of `{type, payload}` where `type`
//! is `"response"` (control plane → proxy) or `"request"` (proxy → control
//! plane).

use crate::document::Document;
use crate::error::{Error, Result};
use crate::resource::ResourceConfig;
use crate::tombstone::Tombstone;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscoveryResponse {
    pub version: String,
    pub nonce: String,
    pub resources: Vec<ResourceConfig>,
    pub tombstones: Vec<Tombstone>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DiscoveryRequest {
    pub node_id: String,
    /// Empty on the first request.
    pub acked_version: String,
    /// Echo of the last response nonce; empty initially.
    pub nonce: String,
    /// Present when some of the acked push was not applied.
    pub error_detail: Option<String>,
}

impl DiscoveryRequest {
    pub fn initial(node_id: impl Into<String>) -> Self {
        Self {
            node_id: node_id.into(),
            ..Self::default()
        }
    }

    pub fn is_nack(&self) -> bool {
        self.error_detail.as_deref().is_some_and(|d| !d.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Response(DiscoveryResponse),
    Request(DiscoveryRequest),
}

fn str_field<'a>(doc: &'a Document, key: &str) -> Result<&'a str> {
    doc.get(key)
        .and_then(Document::as_str)
        .ok_or_else(|| Error::Protocol(format!("field {key:?} must be a string")))
}

fn array_field<'a>(doc: &'a Document, key: &str) -> Result<&'a [Document]> {
    doc.get(key)
        .and_then(Document::as_array)
        .ok_or_else(|| Error::Protocol(format!("field {key:?} must be an array")))
}

impl DiscoveryResponse {
    pub fn to_document(&self) -> Document {
        Document::map()
            .with("version", self.version.as_str())
            .with("nonce", self.nonce.as_str())
            .with(
                "resources",
                self.resources
                    .iter()
                    .map(ResourceConfig::to_document)
                    .collect::<Vec<_>>(),
            )
            .with(
                "tombstones",
                self.tombstones.iter().map(Tombstone::to_document).collect::<Vec<_>>(),
            )
    }

    pub fn from_document(doc: &Document) -> Result<Self> {
        Ok(Self {
            version: str_field(doc, "version")?.to_owned(),
            nonce: str_field(doc, "nonce")?.to_owned(),
            resources: array_field(doc, "resources")?
                .iter()
                .map(ResourceConfig::from_document)
                .collect::<Result<_>>()?,
            tombstones: array_field(doc, "tombstones")?
                .iter()
                .map(|t| Tombstone::from_document(t).map_err(|e| Error::Protocol(e.to_string())))
                .collect::<Result<_>>()?,
        })
    }
}

impl DiscoveryRequest {
    pub fn to_document(&self) -> Document {
        Document::map()
            .with("node_id", self.node_id.as_str())
            .with("acked_version", self.acked_version.as_str())
            .with("nonce", self.nonce.as_str())
            .with("error_detail", self.error_detail.clone())
    }

    pub fn from_document(doc: &Document) -> Result<Self> {
        let error_detail = match doc.get("error_detail") {
            None | Some(Document::Null) => None,
            Some(Document::Str(s)) => Some(s.clone()),
            Some(_) => return Err(Error::Protocol("error_detail must be a string or null".into())),
        };
        Ok(Self {
            node_id: str_field(doc, "node_id")?.to_owned(),
            acked_version: str_field(doc, "acked_version")?.to_owned(),
            nonce: str_field(doc, "nonce")?.to_owned(),
            error_detail,
        })
    }
}

impl Message {
    pub fn to_document(&self) -> Document {
        let (kind, payload) = match self {
            Message::Response(r) => ("response", r.to_document()),
            Message::Request(r) => ("request", r.to_document()),
        };
        Document::map().with("type", kind).with("payload", payload)
    }

    pub fn from_document(doc: &Document) -> Result<Self> {
        let payload = doc
            .get("payload")
            .ok_or_else(|| Error::Protocol("message without payload".into()))?;
        match str_field(doc, "type")? {
            "response" => DiscoveryResponse::from_document(payload).map(Message::Response),
            "request" => DiscoveryRequest::from_document(payload).map(Message::Request),
            other => Err(Error::Protocol(format!("unknown message type {other:?}"))),
        }
    }
}
