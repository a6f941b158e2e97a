//! Threat scenarios replayed against real control-plane and proxy processes.
//!
//! Each scenario is a list of steps run in order against a fresh cluster
//! (one control plane, N proxies) in its own workspace directory. The
//! harness plays both parts: the owner (keygen, sign, tombstone via the
//! `sign-tool` binary) and the cluster administrator (editing manifest
//! files and sending admin commands).

mod catalog;
mod cluster;
mod report;
mod runner;

use meshguard_core::{Document, ManifestKind, ResourceRef};

pub use catalog::{catalog, scenario, OUT_OF_SCOPE_TECHNIQUES};
pub use cluster::Binaries;
pub use report::{RunReport, ScenarioReport, StepOutcome};
pub use runner::{run_all, run_scenario, write_report, RunOptions};

/// Whose secret key signs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signer {
    Owner,
    /// A key the administrator generated; not in any trust bundle.
    Rogue,
}

/// Edits an administrator makes to a manifest file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tamper {
    /// Points the first route's mirror at `host`, leaving signatures alone.
    RetargetMirror { host: String },
    /// Drops every signature annotation and points the first mirror at `host`.
    StripSignatures { host: String },
    /// Replaces the slot's signatures with those of another slot.
    CopySignaturesFrom { slot: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Predicate {
    Present(ResourceRef),
    Absent(ResourceRef),
    /// The fragment at `path` of an applied resource's body equals `value`.
    FragmentEquals {
        resource: ResourceRef,
        path: String,
        value: Document,
    },
    /// Applied resources equal what they were at the last checkpoint.
    UnchangedSinceCheckpoint,
    ChangedSinceCheckpoint,
    /// The rejection log holds an entry for `resource` with this reason code.
    Rejected {
        resource: ResourceRef,
        code: String,
    },
    Pinned {
        resource: ResourceRef,
        serial: u64,
    },
    /// Every confidential fragment in the applied state re-verifies.
    AllVerified,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    /// Generates owner and rogue keys, the verifiable configuration and the trust bundle.
    Keygen,
    /// Writes a manifest file into `slot`.
    Author {
        slot: String,
        manifest: String,
    },
    Sign {
        slot: String,
        signer: Signer,
    },
    Tamper {
        slot: String,
        kind: Tamper,
    },
    /// Admin-applies the manifest in `slot` and waits for every proxy to process the push.
    Apply {
        slot: String,
    },
    /// Admin-deletes a manifest, optionally with a tombstone of this serial.
    Delete {
        kind: ManifestKind,
        name: String,
        tombstone: Option<(u64, Signer)>,
    },
    /// Records every proxy's applied state.
    Checkpoint,
    Assert(Predicate),
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub summary: &'static str,
    pub steps: Vec<Step>,
    pub technique_refs: Vec<&'static str>,
    /// Whether this scenario plays an attack that the filter must stop.
    pub adversarial: bool,
    pub min_proxies: usize,
}

impl Step {
    pub fn describe(&self) -> String {
        match self {
            Step::Keygen => "keygen".into(),
            Step::Author { slot, .. } => format!("author {slot}"),
            Step::Sign { slot, signer } => format!("sign {slot} ({signer:?} key)"),
            Step::Tamper { slot, kind } => format!("tamper {slot}: {}", kind.describe()),
            Step::Apply { slot } => format!("apply {slot}"),
            Step::Delete { kind, name, tombstone } => match tombstone {
                Some((serial, signer)) => format!("delete {kind}/{name} (tombstone #{serial}, {signer:?} key)"),
                None => format!("delete {kind}/{name} (no tombstone)"),
            },
            Step::Checkpoint => "checkpoint".into(),
            Step::Assert(p) => format!("assert {}", p.describe()),
        }
    }
}

impl Tamper {
    fn describe(&self) -> String {
        match self {
            Tamper::RetargetMirror { host } => format!("mirror -> {host}"),
            Tamper::StripSignatures { host } => format!("strip signatures, mirror -> {host}"),
            Tamper::CopySignaturesFrom { slot } => format!("signatures copied from {slot}"),
        }
    }
}

impl Predicate {
    fn describe(&self) -> String {
        match self {
            Predicate::Present(r) => format!("present {r}"),
            Predicate::Absent(r) => format!("absent {r}"),
            Predicate::FragmentEquals { resource, path, value } => format!("{resource} {path} == {value}"),
            Predicate::UnchangedSinceCheckpoint => "unchanged since checkpoint".into(),
            Predicate::ChangedSinceCheckpoint => "changed since checkpoint".into(),
            Predicate::Rejected { resource, code } => format!("rejected {resource} {code}"),
            Predicate::Pinned { resource, serial } => format!("pinned {resource} #{serial}"),
            Predicate::AllVerified => "all applied fragments verify".into(),
        }
    }
}
