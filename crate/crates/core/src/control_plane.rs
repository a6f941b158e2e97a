//! The untrusted control plane's store and snapshot builder.
//!
//! The store accepts any well-formed manifest and forwards signature
//! annotations untouched. It performs no verification and never consults
//! the verifiable configuration; that is the proxy's job.

use std::collections::BTreeMap;

use crate::discovery::DiscoveryResponse;
use crate::document::Document;
use crate::error::{Error, Result};
use crate::manifest::{Manifest, ManifestKind};
use crate::resource::ResourceRef;
use crate::tombstone::Tombstone;
use crate::translate::translate;

#[derive(Debug, Clone, Default)]
pub struct Store {
    manifests: BTreeMap<(ManifestKind, String), Manifest>,
    tombstones: BTreeMap<ResourceRef, Tombstone>,
    version: u64,
}

/// A manifest left out of a snapshot because it failed translation.
#[derive(Debug)]
pub struct SkippedManifest {
    pub manifest: String,
    pub error: Error,
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn manifests(&self) -> impl Iterator<Item = &Manifest> {
        self.manifests.values()
    }

    pub fn tombstones(&self) -> impl Iterator<Item = &Tombstone> {
        self.tombstones.values()
    }

    /// Creates or replaces; re-applying identical content still bumps the version.
    pub fn apply_manifest(&mut self, manifest: Manifest) -> u64 {
        self.manifests.insert((manifest.kind, manifest.name.clone()), manifest);
        self.version += 1;
        self.version
    }

    /// Removes a manifest and records the tombstone, if one is supplied.
    pub fn delete_manifest(&mut self, kind: ManifestKind, name: &str, tombstone: Option<Tombstone>) -> Result<u64> {
        self.manifests
            .remove(&(kind, name.to_owned()))
            .ok_or_else(|| Error::NotFound(format!("{kind}/{name}")))?;
        if let Some(t) = tombstone {
            self.tombstones.insert(t.resource_ref(), t);
        }
        self.version += 1;
        Ok(self.version)
    }

    /// Full state of the world at the current version.
    pub fn build_response(&self, nonce: &str) -> (DiscoveryResponse, Vec<SkippedManifest>) {
        let mut resources = Vec::new();
        let mut skipped = Vec::new();
        for m in self.manifests.values() {
            match translate(m) {
                Ok(rs) => resources.extend(rs),
                Err(error) => skipped.push(SkippedManifest {
                    manifest: m.display_name(),
                    error,
                }),
            }
        }
        let response = DiscoveryResponse {
            version: self.version.to_string(),
            nonce: nonce.to_owned(),
            resources,
            tombstones: self.tombstones.values().cloned().collect(),
        };
        (response, skipped)
    }

    pub fn status_document(&self) -> Document {
        let manifests = self
            .manifests
            .values()
            .map(|m| {
                Document::map()
                    .with("kind", m.kind.as_str())
                    .with("name", m.name.as_str())
                    .with("signatures", m.signature_annotations().count() as i64)
            })
            .collect::<Vec<_>>();
        Document::map()
            .with("version", self.version as i64)
            .with("manifests", manifests)
            .with(
                "tombstones",
                self.tombstones.values().map(Tombstone::to_document).collect::<Vec<_>>(),
            )
    }
}

/// 16 random hex characters.
pub fn fresh_nonce() -> String {
    hex::encode(rand::random::<[u8; 8]>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::parse_manifest;

    fn dr(name: &str) -> Manifest {
        parse_manifest(&format!(
            "kind: DestinationRule\nname: {name}\nspec: {{host: {name}.svc}}\n"
        ))
        .unwrap()
    }

    #[test]
    fn versions_increment_per_mutation() {
        let mut store = Store::new();
        assert_eq!(store.version(), 0);
        assert_eq!(store.apply_manifest(dr("a")), 1);
        assert_eq!(store.apply_manifest(dr("a")), 2);
        assert_eq!(
            store.delete_manifest(ManifestKind::DestinationRule, "a", None).unwrap(),
            3
        );
    }

    #[test]
    fn delete_unknown() {
        let mut store = Store::new();
        let err = store
            .delete_manifest(ManifestKind::VirtualService, "nope", None)
            .unwrap_err();
        assert!(matches!(err, Error::NotFound(_)));
        assert_eq!(store.version(), 0);
    }

    #[test]
    fn responses_carry_full_state() {
        let mut store = Store::new();
        let (empty, _) = store.build_response("n0");
        assert!(empty.resources.is_empty());
        assert_eq!(empty.version, "0");
        store.apply_manifest(dr("a"));
        store.apply_manifest(dr("b"));
        let (resp, skipped) = store.build_response("n1");
        assert!(skipped.is_empty());
        assert_eq!(resp.version, "2");
        assert_eq!(resp.nonce, "n1");
        let names: Vec<_> = resp.resources.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["dr/a", "dr/b"]);
    }

    #[test]
    fn untranslatable_manifest_is_skipped() {
        let mut store = Store::new();
        store.apply_manifest(parse_manifest("kind: DestinationRule\nname: bad\nspec: {}\n").unwrap());
        store.apply_manifest(dr("ok"));
        let (resp, skipped) = store.build_response("n");
        assert_eq!(resp.resources.len(), 1);
        assert_eq!(skipped.len(), 1);
        assert_eq!(skipped[0].manifest, "DestinationRule/bad");
    }

    #[test]
    fn nonces_are_16_hex() {
        let a = fresh_nonce();
        assert_eq!(a.len(), 16);
        assert!(a.bytes().all(|b| b.is_ascii_hexdigit()));
        assert_ne!(a, fresh_nonce());
    }
}
