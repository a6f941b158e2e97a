//! Proxy-side message filter.
//!
//! The proxy trusts exactly two inputs it received at boot: the owner public
//! key and the verifiable configuration (together, the [`TrustBundle`]).
//! Everything arriving from the control plane is checked against them:
//!
//! * a resource with no confidential fragments passes unchanged;
//! * a resource with confidential fragments is applied only if every
//!   fragment carries an envelope that verifies, otherwise it is discarded
//!   and the previously applied version (if any) stays in place;
//! * a resource of a type the configuration covers can only disappear when
//!   the push carries a valid owner tombstone whose serial is not older than
//!   the last one honored for that slot. Other resources delete freely.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use crate::crypto::{sha256, verify_fragment, Digest, PublicKey, SignatureEnvelope, Verdict};
use crate::discovery::{DiscoveryRequest, DiscoveryResponse};
use crate::document::{self, Document};
use crate::error::{Error, Result};
use crate::resource::{ResourceConfig, ResourceRef};
use crate::selector::{match_resource, FragmentMatch, VerifiableConfiguration};
use crate::tombstone::Tombstone;

/// Rejection log entries kept per proxy; older entries are dropped first.
pub const REJECTION_LOG_CAPACITY: usize = 4096;

#[derive(Debug, Clone)]
pub struct TrustBundle {
    pub owner_public_key: PublicKey,
    pub verifiable_config: VerifiableConfiguration,
    pub bundle_digest: Digest,
}

impl TrustBundle {
    pub fn new(owner_public_key: PublicKey, verifiable_config: VerifiableConfiguration) -> Result<Self> {
        let derived = owner_public_key.key_id();
        if derived != verifiable_config.owner_key_id {
            return Err(Error::KeyIdMismatch {
                derived,
                declared: verifiable_config.owner_key_id.clone(),
            });
        }
        let doc = bundle_document(&owner_public_key, &verifiable_config);
        Ok(Self {
            owner_public_key,
            verifiable_config,
            bundle_digest: sha256(&doc.canonical_bytes()),
        })
    }

    /// Parses bundle file content: `{owner_public_key: hex, verifiable_config: {...}}`.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: String| Error::MalformedBundle(m);
        let doc = document::parse_yaml(text).map_err(|e| bad(e.to_string()))?;
        let map = doc.as_map().ok_or_else(|| bad("top level must be a map".into()))?;
        if let Some(k) = map
            .keys()
            .find(|k| !matches!(k.as_str(), "owner_public_key" | "verifiable_config"))
        {
            return Err(bad(format!("unknown field {k:?}")));
        }
        let key = map
            .get("owner_public_key")
            .and_then(Document::as_str)
            .ok_or_else(|| bad("owner_public_key must be a hex string".into()))?;
        let key = PublicKey::from_hex(key).map_err(|e| bad(e.to_string()))?;
        let vc = map
            .get("verifiable_config")
            .ok_or_else(|| bad("verifiable_config is required".into()))?;
        let vc = VerifiableConfiguration::from_document(vc).map_err(|e| bad(e.to_string()))?;
        let bundle = Self::new(key, vc)?;
        debug_assert_eq!(bundle.bundle_digest, sha256(&doc.canonical_bytes()));
        Ok(bundle)
    }

    pub fn to_document(&self) -> Document {
        bundle_document(&self.owner_public_key, &self.verifiable_config)
    }

    pub fn to_yaml(&self) -> String {
        document::to_yaml(&self.to_document())
    }
}

fn bundle_document(key: &PublicKey, vc: &VerifiableConfiguration) -> Document {
    Document::map()
        .with("owner_public_key", key.to_hex())
        .with("verifiable_config", vc.to_document())
}

/// Loads the trust bundle a proxy boots with.
pub fn bootstrap(bundle_file: &Path) -> Result<TrustBundle> {
    let text = std::fs::read_to_string(bundle_file)
        .map_err(|e| Error::MalformedBundle(format!("{}: {e}", bundle_file.display())))?;
    TrustBundle::parse(&text)
}

/// Result of checking one confidential fragment against a resource's envelopes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FragmentOutcome {
    Accepted,
    MissingSignature,
    Rejected(Verdict),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragmentCheck {
    pub matched: FragmentMatch,
    pub outcome: FragmentOutcome,
}

/// One accepted envelope suffices; with none, the reported verdict prefers
/// envelopes aimed at this exact location over ones bound elsewhere.
pub fn check_fragment(m: &FragmentMatch, envelopes: &[SignatureEnvelope], owner_key: &PublicKey) -> FragmentOutcome {
    let mut worst: Option<Verdict> = None;
    for env in envelopes {
        match verify_fragment(m, env, owner_key) {
            Verdict::Accepted => return FragmentOutcome::Accepted,
            Verdict::WrongContext => {
                worst.get_or_insert(Verdict::WrongContext);
            }
            v => {
                if matches!(worst, None | Some(Verdict::WrongContext)) {
                    worst = Some(v);
                }
            }
        }
    }
    worst.map_or(FragmentOutcome::MissingSignature, FragmentOutcome::Rejected)
}

/// Every confidential fragment of `resource` with its verification outcome.
pub fn check_resource(
    resource: &ResourceConfig,
    vc: &VerifiableConfiguration,
    owner_key: &PublicKey,
) -> Vec<FragmentCheck> {
    match_resource(resource, vc)
        .into_iter()
        .map(|matched| {
            let outcome = check_fragment(&matched, &resource.envelopes, owner_key);
            FragmentCheck { matched, outcome }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeletionRefusal {
    NoTombstone,
    Tombstone(Verdict),
    StaleSerial { serial: u64, pinned: u64 },
}

impl fmt::Display for DeletionRefusal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeletionRefusal::NoTombstone => f.write_str("no tombstone"),
            DeletionRefusal::Tombstone(v) => write!(f, "tombstone {v}"),
            DeletionRefusal::StaleSerial { serial, pinned } => {
                write!(f, "tombstone serial {serial} older than pinned {pinned}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    MissingSignature {
        label: String,
        path: String,
    },
    InvalidSignature {
        label: String,
        path: String,
        verdict: Verdict,
    },
    DeletionRefused(DeletionRefusal),
}

impl RejectReason {
    /// Short machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::MissingSignature { .. } => "MissingSignature",
            RejectReason::InvalidSignature { verdict, .. } => verdict.as_str(),
            RejectReason::DeletionRefused(_) => "DeletionRefused",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::MissingSignature { label, path } => {
                write!(f, "MissingSignature {path} ({label})")
            }
            RejectReason::InvalidSignature { label, path, verdict } => {
                write!(f, "{verdict} {path} ({label})")
            }
            RejectReason::DeletionRefused(r) => write!(f, "DeletionRefused ({r})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub version: String,
    pub resource: ResourceRef,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FilterDecision {
    pub accepted: Vec<ResourceConfig>,
    pub rejected: Vec<(ResourceConfig, RejectReason)>,
    /// With the tombstone serial for confidential slots, `None` otherwise.
    pub deletions_honored: Vec<(ResourceRef, Option<u64>)>,
    pub deletions_refused: Vec<(ResourceRef, DeletionRefusal)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProxyState {
    pub applied: BTreeMap<ResourceRef, ResourceConfig>,
    pub applied_version: String,
    pub pinned_serials: BTreeMap<ResourceRef, u64>,
    pub rejection_log: Vec<Rejection>,
}

impl ProxyState {
    /// `/state` view: version, applied resources and pinned serials.
    pub fn to_document(&self) -> Document {
        let pinned = self
            .pinned_serials
            .iter()
            .map(|(r, s)| {
                Document::map()
                    .with("rtype", r.rtype.tag())
                    .with("name", r.name.as_str())
                    .with("serial", i64::try_from(*s).unwrap_or(i64::MAX))
            })
            .collect::<Vec<_>>();
        Document::map()
            .with("version", self.applied_version.as_str())
            .with(
                "applied",
                self.applied
                    .values()
                    .map(ResourceConfig::to_document)
                    .collect::<Vec<_>>(),
            )
            .with("pinned_serials", pinned)
    }

    /// `/rejections` view.
    pub fn rejections_document(&self) -> Document {
        let entries = self
            .rejection_log
            .iter()
            .map(|r| {
                Document::map()
                    .with("version", r.version.as_str())
                    .with("rtype", r.resource.rtype.tag())
                    .with("name", r.resource.name.as_str())
                    .with("reason", r.reason.code())
                    .with("detail", r.reason.to_string())
            })
            .collect::<Vec<_>>();
        Document::map().with("rejections", entries)
    }
}

/// Decides what a proxy may apply from one push.
pub trait ResponseFilter: Send + Sync {
    fn filter(&self, response: &DiscoveryResponse, state: &ProxyState) -> FilterDecision;
}

/// The verifying filter.
#[derive(Debug, Clone)]
pub struct VerifyingFilter {
    pub bundle: TrustBundle,
}

impl ResponseFilter for VerifyingFilter {
    fn filter(&self, response: &DiscoveryResponse, state: &ProxyState) -> FilterDecision {
        filter_response(response, &self.bundle, state)
    }
}

/// Applies everything and honors every deletion; the trust model of an
/// unmodified mesh. Used to check that scenarios actually exercise the defense.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassThroughFilter;

impl ResponseFilter for PassThroughFilter {
    fn filter(&self, response: &DiscoveryResponse, state: &ProxyState) -> FilterDecision {
        let present: BTreeSet<_> = response.resources.iter().map(ResourceConfig::resource_ref).collect();
        FilterDecision {
            accepted: response.resources.clone(),
            deletions_honored: state
                .applied
                .keys()
                .filter(|r| !present.contains(*r))
                .map(|r| (r.clone(), None))
                .collect(),
            ..FilterDecision::default()
        }
    }
}

pub fn filter_response(response: &DiscoveryResponse, bundle: &TrustBundle, state: &ProxyState) -> FilterDecision {
    let vc = &bundle.verifiable_config;
    let key = &bundle.owner_public_key;
    let mut decision = FilterDecision::default();

    for resource in &response.resources {
        let failure = check_resource(resource, vc, key).into_iter().find_map(|c| {
            let label = c.matched.selector_label;
            let path = c.matched.concrete_path.to_string();
            match c.outcome {
                FragmentOutcome::Accepted => None,
                FragmentOutcome::MissingSignature => Some(RejectReason::MissingSignature { label, path }),
                FragmentOutcome::Rejected(verdict) => Some(RejectReason::InvalidSignature { label, path, verdict }),
            }
        });
        match failure {
            None => decision.accepted.push(resource.clone()),
            Some(reason) => decision.rejected.push((resource.clone(), reason)),
        }
    }

    let present: BTreeSet<_> = response.resources.iter().map(ResourceConfig::resource_ref).collect();
    for slot in state.applied.keys().filter(|r| !present.contains(*r)) {
        if !vc.covers(slot.rtype) {
            decision.deletions_honored.push((slot.clone(), None));
            continue;
        }
        match authorize_deletion(slot, &response.tombstones, key, state.pinned_serials.get(slot).copied()) {
            Ok(serial) => decision.deletions_honored.push((slot.clone(), Some(serial))),
            Err(refusal) => decision.deletions_refused.push((slot.clone(), refusal)),
        }
    }
    decision
}

/// Highest acceptable tombstone serial for `slot`, or why there is none.
fn authorize_deletion(
    slot: &ResourceRef,
    tombstones: &[Tombstone],
    key: &PublicKey,
    pinned: Option<u64>,
) -> std::result::Result<u64, DeletionRefusal> {
    let mut refusal = DeletionRefusal::NoTombstone;
    let mut best = None;
    for t in tombstones
        .iter()
        .filter(|t| t.rtype == slot.rtype && t.resource_name == slot.name)
    {
        match t.verify(slot, key) {
            Verdict::Accepted => match pinned {
                Some(p) if t.serial < p => {
                    refusal = DeletionRefusal::StaleSerial {
                        serial: t.serial,
                        pinned: p,
                    };
                }
                _ => best = best.max(Some(t.serial)),
            },
            v => {
                if !matches!(refusal, DeletionRefusal::StaleSerial { .. }) {
                    refusal = DeletionRefusal::Tombstone(v);
                }
            }
        }
    }
    best.ok_or(refusal)
}

/// Folds a decision into the state and produces the ACK for `version`.
///
/// Partial acceptance still ACKs the version; `error_detail` lists every
/// rejected resource and refused deletion.
pub fn apply_decision(
    mut state: ProxyState,
    decision: FilterDecision,
    version: &str,
    nonce: &str,
    node_id: &str,
) -> (ProxyState, DiscoveryRequest) {
    let mut problems = Vec::new();
    for resource in decision.accepted {
        state.applied.insert(resource.resource_ref(), resource);
    }
    for (slot, serial) in decision.deletions_honored {
        state.applied.remove(&slot);
        if let Some(serial) = serial {
            state.pinned_serials.insert(slot, serial);
        }
    }
    for (resource, reason) in decision.rejected {
        let r = resource.resource_ref();
        problems.push(format!("rejected {r}: {reason}"));
        state.rejection_log.push(Rejection {
            version: version.to_owned(),
            resource: r,
            reason,
        });
    }
    for (slot, refusal) in decision.deletions_refused {
        problems.push(format!("deletion refused {slot}: {refusal}"));
        state.rejection_log.push(Rejection {
            version: version.to_owned(),
            resource: slot,
            reason: RejectReason::DeletionRefused(refusal),
        });
    }
    if state.rejection_log.len() > REJECTION_LOG_CAPACITY {
        let excess = state.rejection_log.len() - REJECTION_LOG_CAPACITY;
        state.rejection_log.drain(..excess);
    }
    state.applied_version = version.to_owned();
    let request = DiscoveryRequest {
        node_id: node_id.to_owned(),
        acked_version: version.to_owned(),
        nonce: nonce.to_owned(),
        error_detail: (!problems.is_empty()).then(|| problems.join("; ")),
    };
    (state, request)
}

/// Re-verifies every applied resource; returns the fragments that would not pass.
pub fn unverified_fragments(state: &ProxyState, bundle: &TrustBundle) -> Vec<FragmentCheck> {
    state
        .applied
        .values()
        .flat_map(|r| check_resource(r, &bundle.verifiable_config, &bundle.owner_public_key))
        .filter(|c| c.outcome != FragmentOutcome::Accepted)
        .collect()
}
