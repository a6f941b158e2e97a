//! Control-plane admin commands, carried with the same framing as discovery.
//!
//! Commands are `{cmd: "apply", manifest: {...}}`, `{cmd: "delete", kind,
//! name, tombstone: {...}|null}` and `{cmd: "status"}`. Replies are
//! `{ok: true, version: n, status?: {...}}` or `{ok: false, error: "..."}`.

use crate::document::Document;
use crate::error::{Error, Result};
use crate::manifest::{Manifest, ManifestKind};
use crate::tombstone::Tombstone;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdminCommand {
    Apply(Manifest),
    Delete {
        kind: ManifestKind,
        name: String,
        tombstone: Option<Tombstone>,
    },
    Status,
}

impl AdminCommand {
    pub fn to_document(&self) -> Document {
        match self {
            AdminCommand::Apply(m) => Document::map().with("cmd", "apply").with("manifest", m.to_document()),
            AdminCommand::Delete { kind, name, tombstone } => Document::map()
                .with("cmd", "delete")
                .with("kind", kind.as_str())
                .with("name", name.as_str())
                .with("tombstone", tombstone.as_ref().map(Tombstone::to_document)),
            AdminCommand::Status => Document::map().with("cmd", "status"),
        }
    }

    /// Manifest problems surface as `MalformedManifest`/`UnknownKind`/`InvalidName`.
    pub fn from_document(doc: &Document) -> Result<Self> {
        let cmd = doc
            .get("cmd")
            .and_then(Document::as_str)
            .ok_or_else(|| Error::Protocol("admin command without cmd".into()))?;
        match cmd {
            "apply" => {
                let m = doc
                    .get("manifest")
                    .ok_or_else(|| Error::MalformedManifest("apply without manifest".into()))?;
                Manifest::from_document(m).map(AdminCommand::Apply)
            }
            "delete" => {
                let kind = doc
                    .get("kind")
                    .and_then(Document::as_str)
                    .ok_or_else(|| Error::Protocol("delete without kind".into()))?
                    .parse()?;
                let name = doc
                    .get("name")
                    .and_then(Document::as_str)
                    .ok_or_else(|| Error::Protocol("delete without name".into()))?
                    .to_owned();
                let tombstone = match doc.get("tombstone") {
                    None | Some(Document::Null) => None,
                    Some(t) => Some(Tombstone::from_document(t)?),
                };
                Ok(AdminCommand::Delete { kind, name, tombstone })
            }
            "status" => Ok(AdminCommand::Status),
            other => Err(Error::Protocol(format!("unknown admin command {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdminReply {
    pub ok: bool,
    pub version: Option<u64>,
    pub error: Option<String>,
    pub status: Option<Document>,
}

impl AdminReply {
    pub fn ok(version: u64) -> Self {
        Self {
            ok: true,
            version: Some(version),
            error: None,
            status: None,
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Self {
            ok: false,
            version: None,
            error: Some(message.into()),
            status: None,
        }
    }

    pub fn to_document(&self) -> Document {
        let mut doc = Document::map().with("ok", self.ok);
        if let Some(v) = self.version {
            doc = doc.with("version", i64::try_from(v).unwrap_or(i64::MAX));
        }
        if let Some(e) = &self.error {
            doc = doc.with("error", e.as_str());
        }
        if let Some(s) = &self.status {
            doc = doc.with("status", s.clone());
        }
        doc
    }

    pub fn from_document(doc: &Document) -> Result<Self> {
        Ok(Self {
            ok: doc
                .get("ok")
                .and_then(Document::as_bool)
                .ok_or_else(|| Error::Protocol("admin reply without ok".into()))?,
            version: doc
                .get("version")
                .and_then(Document::as_int)
                .and_then(|v| u64::try_from(v).ok()),
            error: doc.get("error").and_then(Document::as_str).map(str::to_owned),
            status: doc.get("status").cloned(),
        })
    }
}
