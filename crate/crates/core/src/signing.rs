//! Owner-side signing tool operations.

use std::collections::BTreeMap;
use std::fmt;

use crate::crypto::{sign_fragment, KeyPair, PublicKey};
use crate::document::Document;
use crate::error::Result;
use crate::filter::{check_resource, FragmentOutcome};
use crate::manifest::{Manifest, SIGNATURE_ANNOTATION_PREFIX};
use crate::resource::{ResourceRef, ResourceType};
use crate::selector::{match_resource, VerifiableConfiguration};
use crate::tombstone::{tombstone_path, Tombstone, TOMBSTONE_DIGEST};
use crate::translate::translate;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragmentReport {
    pub label: String,
    pub resource: ResourceRef,
    pub path: String,
    pub outcome: FragmentOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SigningReport {
    pub manifest_name: String,
    /// Annotations added when signing; fragments that verified when checking.
    pub fragments_signed: usize,
    /// Selector labels that matched, in first-match order.
    pub labels: Vec<String>,
    pub tombstone: bool,
    pub fragments: Vec<FragmentReport>,
}

impl SigningReport {
    pub fn all_accepted(&self) -> bool {
        self.fragments.iter().all(|f| f.outcome == FragmentOutcome::Accepted)
    }

    pub fn to_document(&self) -> Document {
        let fragments = self
            .fragments
            .iter()
            .map(|f| {
                let outcome = match f.outcome {
                    FragmentOutcome::Accepted => "Accepted",
                    FragmentOutcome::MissingSignature => "MissingSignature",
                    FragmentOutcome::Rejected(v) => v.as_str(),
                };
                Document::map()
                    .with("label", f.label.as_str())
                    .with("rtype", f.resource.rtype.tag())
                    .with("name", f.resource.name.as_str())
                    .with("path", f.path.as_str())
                    .with("outcome", outcome)
            })
            .collect::<Vec<_>>();
        Document::map()
            .with("manifest_name", self.manifest_name.as_str())
            .with("fragments_signed", self.fragments_signed as i64)
            .with(
                "labels",
                self.labels
                    .iter()
                    .map(|l| Document::from(l.as_str()))
                    .collect::<Vec<_>>(),
            )
            .with("tombstone", self.tombstone)
            .with("fragments", fragments)
    }
}

impl fmt::Display for SigningReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.tombstone {
            return writeln!(f, "{}: tombstone signed", self.manifest_name);
        }
        writeln!(
            f,
            "{}: {} fragment(s) signed/verified, labels [{}]",
            self.manifest_name,
            self.fragments_signed,
            self.labels.join(", ")
        )?;
        for frag in &self.fragments {
            let outcome = match frag.outcome {
                FragmentOutcome::Accepted => "Accepted".to_owned(),
                FragmentOutcome::MissingSignature => "MissingSignature".to_owned(),
                FragmentOutcome::Rejected(v) => v.to_string(),
            };
            writeln!(f, "  {:<16} {} {} ({})", outcome, frag.resource, frag.path, frag.label)?;
        }
        Ok(())
    }
}

fn push_label(labels: &mut Vec<String>, label: &str) {
    if !labels.iter().any(|l| l == label) {
        labels.push(label.to_owned());
    }
}

/// Signs every confidential fragment of `manifest` and embeds the envelopes
/// as `meshguard.sig/<label>-<n>` annotations, replacing any previous ones.
pub fn sign_manifest(
    manifest: &Manifest,
    vc: &VerifiableConfiguration,
    keys: &KeyPair,
) -> Result<(Manifest, SigningReport)> {
    let mut signed = manifest.clone();
    signed.strip_signatures();
    let resources = translate(&signed)?;

    let mut report = SigningReport {
        manifest_name: manifest.name.clone(),
        ..SigningReport::default()
    };
    let mut per_label: BTreeMap<String, usize> = BTreeMap::new();
    let mut annotations = Vec::new();
    for resource in &resources {
        for m in match_resource(resource, vc) {
            let n = per_label.entry(m.selector_label.clone()).or_default();
            let key = format!("{SIGNATURE_ANNOTATION_PREFIX}{}-{n}", m.selector_label);
            *n += 1;
            annotations.push((key, sign_fragment(&m, keys).to_annotation_value()));
            push_label(&mut report.labels, &m.selector_label);
            report.fragments.push(FragmentReport {
                label: m.selector_label.clone(),
                resource: m.resource_ref(),
                path: m.concrete_path.to_string(),
                outcome: FragmentOutcome::Accepted,
            });
        }
    }
    report.fragments_signed = annotations.len();
    signed.annotations.extend(annotations);
    Ok((signed, report))
}

/// Authorizes deletion of one resource slot.
pub fn sign_tombstone(rtype: ResourceType, resource_name: &str, serial: u64, keys: &KeyPair) -> Tombstone {
    let payload = crate::crypto::signing_payload(rtype, resource_name, &tombstone_path(serial), &TOMBSTONE_DIGEST);
    Tombstone {
        rtype,
        resource_name: resource_name.to_owned(),
        serial,
        key_id: keys.key_id.clone(),
        signature: keys.sign(&payload),
    }
}

/// Predicts what a proxy booted with `vc` and `owner_key` will decide for this manifest.
pub fn verify_manifest(
    manifest: &Manifest,
    vc: &VerifiableConfiguration,
    owner_key: &PublicKey,
) -> Result<SigningReport> {
    let mut report = SigningReport {
        manifest_name: manifest.name.clone(),
        ..SigningReport::default()
    };
    for resource in translate(manifest)? {
        for check in check_resource(&resource, vc, owner_key) {
            push_label(&mut report.labels, &check.matched.selector_label);
            if check.outcome == FragmentOutcome::Accepted {
                report.fragments_signed += 1;
            }
            report.fragments.push(FragmentReport {
                label: check.matched.selector_label.clone(),
                resource: check.matched.resource_ref(),
                path: check.matched.concrete_path.to_string(),
                outcome: check.outcome,
            });
        }
    }
    Ok(report)
}

/// Report for a tombstone produced by the tool.
pub fn tombstone_report(t: &Tombstone) -> SigningReport {
    SigningReport {
        manifest_name: t.resource_name.clone(),
        fragments_signed: 0,
        labels: Vec::new(),
        tombstone: true,
        fragments: Vec::new(),
    }
}
