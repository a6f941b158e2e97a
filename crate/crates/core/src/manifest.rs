//! Source manifests, the custom-resource analogues an administrator applies.
//!
//! File layout (YAML subset, JSON also accepted):
//!
//! ```yaml
//! kind: VirtualService
//! name: reviews
//! annotations:
//!   meshguard.sig/request-mirroring-0: <base64 envelope>
//! spec:
//!   hosts: [reviews.default.svc]
//!   http: [...]
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::crypto::SignatureEnvelope;
use crate::document::{self, Document};
use crate::error::{Error, Result};

/// Annotation key prefix under which signature envelopes are embedded.
pub const SIGNATURE_ANNOTATION_PREFIX: &str = "meshguard.sig/";

const MAX_NAME_LEN: usize = 253;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ManifestKind {
    VirtualService,
    AuthorizationPolicy,
    DestinationRule,
}

impl ManifestKind {
    pub const ALL: [ManifestKind; 3] = [
        ManifestKind::VirtualService,
        ManifestKind::AuthorizationPolicy,
        ManifestKind::DestinationRule,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ManifestKind::VirtualService => "VirtualService",
            ManifestKind::AuthorizationPolicy => "AuthorizationPolicy",
            ManifestKind::DestinationRule => "DestinationRule",
        }
    }

    /// Prefix of the translated resource's name.
    pub fn tag(self) -> &'static str {
        match self {
            ManifestKind::VirtualService => "vs",
            ManifestKind::AuthorizationPolicy => "ap",
            ManifestKind::DestinationRule => "dr",
        }
    }
}

impl fmt::Display for ManifestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ManifestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ManifestKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownKind(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub kind: ManifestKind,
    pub name: String,
    pub spec: Document,
    pub annotations: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(kind: ManifestKind, name: impl Into<String>, spec: Document) -> Result<Self> {
        let name = name.into();
        validate_name(&name)?;
        Ok(Self {
            kind,
            name,
            spec,
            annotations: BTreeMap::new(),
        })
    }

    /// `kind/name`, for logs and errors.
    pub fn display_name(&self) -> String {
        format!("{}/{}", self.kind, self.name)
    }

    pub fn from_document(doc: &Document) -> Result<Self> {
        let map = doc
            .as_map()
            .ok_or_else(|| Error::MalformedManifest("top level must be a map".into()))?;
        if let Some(unknown) = map
            .keys()
            .find(|k| !matches!(k.as_str(), "kind" | "name" | "spec" | "annotations"))
        {
            return Err(Error::MalformedManifest(format!("unknown top-level field {unknown:?}")));
        }
        let required = |k: &str| {
            map.get(k)
                .ok_or_else(|| Error::MalformedManifest(format!("missing required field {k:?}")))
        };
        let kind = required("kind")?
            .as_str()
            .ok_or_else(|| Error::MalformedManifest("kind must be a string".into()))?
            .parse()?;
        let name = required("name")?
            .as_str()
            .ok_or_else(|| Error::MalformedManifest("name must be a string".into()))?
            .to_owned();
        validate_name(&name)?;
        let spec = required("spec")?.clone();

        let mut annotations = BTreeMap::new();
        match map.get("annotations") {
            None | Some(Document::Null) => {}
            Some(Document::Map(entries)) => {
                for (k, v) in entries {
                    let v = v
                        .as_str()
                        .ok_or_else(|| Error::MalformedManifest(format!("annotation {k:?} must be a string")))?;
                    if k.starts_with(SIGNATURE_ANNOTATION_PREFIX) {
                        SignatureEnvelope::from_annotation_value(v)
                            .map_err(|e| Error::MalformedManifest(format!("annotation {k:?}: {e}")))?;
                    }
                    annotations.insert(k.clone(), v.to_owned());
                }
            }
            Some(_) => return Err(Error::MalformedManifest("annotations must be a map".into())),
        }
        Ok(Self {
            kind,
            name,
            spec,
            annotations,
        })
    }

    pub fn to_document(&self) -> Document {
        let mut doc = Document::map()
            .with("kind", self.kind.as_str())
            .with("name", self.name.as_str());
        if !self.annotations.is_empty() {
            let annotations = self
                .annotations
                .iter()
                .map(|(k, v)| (k.clone(), Document::from(v.as_str())))
                .collect::<document::Map>();
            doc = doc.with("annotations", annotations);
        }
        doc.with("spec", self.spec.clone())
    }

    pub fn to_yaml(&self) -> String {
        document::to_yaml(&self.to_document())
    }

    /// Decoded signature envelopes, in annotation-key order.
    pub fn signature_envelopes(&self) -> Result<Vec<SignatureEnvelope>> {
        self.signature_annotations()
            .map(|(_, v)| SignatureEnvelope::from_annotation_value(v))
            .collect()
    }

    pub fn signature_annotations(&self) -> impl Iterator<Item = (&String, &String)> {
        self.annotations
            .iter()
            .filter(|(k, _)| k.starts_with(SIGNATURE_ANNOTATION_PREFIX))
    }

    /// Removes every signature annotation, leaving other annotations intact.
    pub fn strip_signatures(&mut self) {
        self.annotations
            .retain(|k, _| !k.starts_with(SIGNATURE_ANNOTATION_PREFIX));
    }
}

/// Parses a manifest file.
pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let doc = document::parse_yaml(text).map_err(|e| Error::MalformedManifest(e.to_string()))?;
    Manifest::from_document(&doc)
}

/// DNS-subdomain style: lowercase alphanumerics, `-` and `.`, alphanumeric at both ends.
fn validate_name(name: &str) -> Result<()> {
    let invalid = |reason| Error::InvalidName {
        name: name.to_owned(),
        reason,
    };
    if name.is_empty() {
        return Err(invalid("empty"));
    }
    if name.len() > MAX_NAME_LEN {
        return Err(invalid("longer than 253 characters"));
    }
    if !name
        .bytes()
        .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-' || b == b'.')
    {
        return Err(invalid("only lowercase letters, digits, '-' and '.' are allowed"));
    }
    let alnum = |b: u8| b.is_ascii_lowercase() || b.is_ascii_digit();
    if !alnum(name.as_bytes()[0]) || !alnum(name.as_bytes()[name.len() - 1]) {
        return Err(invalid("must start and end with a letter or digit"));
    }
    Ok(())
}
