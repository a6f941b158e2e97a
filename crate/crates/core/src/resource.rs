//! Wire resources: the typed, named units pushed to proxies.

use std::fmt;
use std::str::FromStr;

use crate::crypto::SignatureEnvelope;
use crate::document::Document;
use crate::error::{Error, Result};

/// The discovery resource catalogue. Translation only emits the first three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ResourceType {
    RouteConfiguration,
    Cluster,
    Listener,
    ScopedRoute,
    VirtualHost,
    ClusterLoadAssignment,
    Secret,
    Runtime,
}

impl ResourceType {
    pub const ALL: [ResourceType; 8] = [
        ResourceType::RouteConfiguration,
        ResourceType::Cluster,
        ResourceType::Listener,
        ResourceType::ScopedRoute,
        ResourceType::VirtualHost,
        ResourceType::ClusterLoadAssignment,
        ResourceType::Secret,
        ResourceType::Runtime,
    ];

    /// Stable tag used on the wire and inside signing payloads.
    pub fn tag(self) -> &'static str {
        match self {
            ResourceType::RouteConfiguration => "RouteConfiguration",
            ResourceType::Cluster => "Cluster",
            ResourceType::Listener => "Listener",
            ResourceType::ScopedRoute => "ScopedRoute",
            ResourceType::VirtualHost => "VirtualHost",
            ResourceType::ClusterLoadAssignment => "ClusterLoadAssignment",
            ResourceType::Secret => "Secret",
            ResourceType::Runtime => "Runtime",
        }
    }
}

impl fmt::Display for ResourceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ResourceType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ResourceType::ALL
            .into_iter()
            .find(|t| t.tag() == s)
            .ok_or_else(|| Error::Protocol(format!("unknown resource type {s:?}")))
    }
}

/// `(rtype, name)`: the identity of a resource slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ResourceRef {
    pub rtype: ResourceType,
    pub name: String,
}

impl ResourceRef {
    pub fn new(rtype: ResourceType, name: impl Into<String>) -> Self {
        Self {
            rtype,
            name: name.into(),
        }
    }
}

impl fmt::Display for ResourceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.rtype, self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceConfig {
    pub rtype: ResourceType,
    pub name: String,
    pub body: Document,
    pub envelopes: Vec<SignatureEnvelope>,
}

impl ResourceConfig {
    pub fn resource_ref(&self) -> ResourceRef {
        ResourceRef::new(self.rtype, self.name.clone())
    }

    pub fn to_document(&self) -> Document {
        Document::map()
            .with("rtype", self.rtype.tag())
            .with("name", self.name.as_str())
            .with("body", self.body.clone())
            .with(
                "envelopes",
                self.envelopes
                    .iter()
                    .map(SignatureEnvelope::to_document)
                    .collect::<Vec<_>>(),
            )
    }

    pub fn from_document(doc: &Document) -> Result<Self> {
        let field = |k: &str| {
            doc.get(k)
                .ok_or_else(|| Error::Protocol(format!("resource missing field {k:?}")))
        };
        let str_field = |k: &str| {
            field(k)?
                .as_str()
                .ok_or_else(|| Error::Protocol(format!("resource field {k:?} must be a string")))
        };
        let envelopes = field("envelopes")?
            .as_array()
            .ok_or_else(|| Error::Protocol("resource envelopes must be an array".into()))?
            .iter()
            .map(SignatureEnvelope::from_document)
            .collect::<Result<_>>()?;
        Ok(Self {
            rtype: str_field("rtype")?.parse()?,
            name: str_field("name")?.to_owned(),
            body: field("body")?.clone(),
            envelopes,
        })
    }
}
