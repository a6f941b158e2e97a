//! Owner-signed deletion authorizations.
//!
//! A tombstone reuses the fragment signing payload with the reserved path
//! `"\0tombstone\0<serial>"` and an all-zero digest; no fragment path can
//! start with a NUL byte, so a tombstone signature never verifies as a
//! fragment signature or vice versa.

use crate::crypto::{decode_hex_array, signing_payload, Digest, PublicKey, Verdict};
use crate::document::Document;
use crate::error::{Error, Result};
use crate::resource::{ResourceRef, ResourceType};

pub const TOMBSTONE_DIGEST: Digest = [0; 32];

/// Serials are carried as document integers.
pub const MAX_SERIAL: u64 = i64::MAX as u64;

pub fn tombstone_path(serial: u64) -> String {
    format!("\0tombstone\0{serial}")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Tombstone {
    pub rtype: ResourceType,
    pub resource_name: String,
    pub serial: u64,
    pub key_id: String,
    pub signature: [u8; 64],
}

impl Tombstone {
    pub fn resource_ref(&self) -> ResourceRef {
        ResourceRef::new(self.rtype, self.resource_name.clone())
    }

    pub fn payload(&self) -> Vec<u8> {
        signing_payload(
            self.rtype,
            &self.resource_name,
            &tombstone_path(self.serial),
            &TOMBSTONE_DIGEST,
        )
    }

    /// Whether this tombstone authorizes deleting `target` under `owner_key`.
    pub fn verify(&self, target: &ResourceRef, owner_key: &PublicKey) -> Verdict {
        if self.rtype != target.rtype || self.resource_name != target.name {
            return Verdict::WrongContext;
        }
        if self.key_id != owner_key.key_id() {
            return Verdict::UnknownKey;
        }
        if !owner_key.verify(&self.payload(), &self.signature) {
            return Verdict::BadSignature;
        }
        Verdict::Accepted
    }

    pub fn to_document(&self) -> Document {
        Document::map()
            .with("rtype", self.rtype.tag())
            .with("name", self.resource_name.as_str())
            .with(
                "serial",
                i64::try_from(self.serial).expect("tombstone serial exceeds i64::MAX"),
            )
            .with("key_id", self.key_id.as_str())
            .with("signature", hex::encode(self.signature))
    }

    pub fn from_document(doc: &Document) -> Result<Self> {
        let bad = |m: String| Error::MalformedTombstone(m);
        let map = doc.as_map().ok_or_else(|| bad("tombstone must be a map".into()))?;
        if let Some(k) = map
            .keys()
            .find(|k| !matches!(k.as_str(), "rtype" | "name" | "serial" | "key_id" | "signature"))
        {
            return Err(bad(format!("unknown field {k:?}")));
        }
        let field = |k: &str| {
            map.get(k)
                .and_then(Document::as_str)
                .ok_or_else(|| bad(format!("field {k:?} must be a string")))
        };
        let serial = map
            .get("serial")
            .and_then(Document::as_int)
            .and_then(|s| u64::try_from(s).ok())
            .ok_or_else(|| bad("serial must be a non-negative integer".into()))?;
        Ok(Self {
            rtype: field("rtype")?.parse().map_err(|e: Error| bad(e.to_string()))?,
            resource_name: field("name")?.to_owned(),
            serial,
            key_id: field("key_id")?.to_owned(),
            signature: decode_hex_array(field("signature")?).map_err(bad)?,
        })
    }
}
