//! Owner-signed service mesh configuration.
//!
//! An application owner declares which policy fragments are confidential
//! (a [`VerifiableConfiguration`]), signs those fragments offline, and ships
//! the signatures inside the manifests the cluster administrator applies.
//! The control plane forwards them untouched; each proxy verifies them
//! against the owner key it received at boot and discards anything that
//! does not verify.
//!
//! Module map:
//!
//! * [`document`], [`path`], [`manifest`], [`resource`], [`translate`]: the
//!   configuration model and its canonical byte form.
//! * [`selector`]: the verifiable configuration and fragment matching.
//! * [`crypto`], [`tombstone`]: keys, context-bound payloads, signatures.
//! * [`signing`]: the owner's signing tool operations.
//! * [`control_plane`], [`admin`], [`discovery`], [`wire`]: the untrusted
//!   store and the protocol it speaks.
//! * [`filter`]: the proxy-side verifying filter and its state machine.

pub mod admin;
pub mod control_plane;
pub mod crypto;
pub mod discovery;
pub mod document;
pub mod error;
pub mod filter;
pub mod manifest;
pub mod path;
pub mod resource;
pub mod selector;
pub mod signing;
pub mod tombstone;
pub mod translate;
pub mod wire;

pub use crypto::{generate_keypair, KeyPair, PublicKey, SignatureEnvelope, Verdict};
pub use discovery::{DiscoveryRequest, DiscoveryResponse, Message};
pub use document::{canonicalize, Document};
pub use error::{Error, Result};
pub use filter::{apply_decision, filter_response, FilterDecision, ProxyState, TrustBundle};
pub use manifest::{parse_manifest, Manifest, ManifestKind};
pub use path::{extract_fragment, FragmentPath};
pub use resource::{ResourceConfig, ResourceRef, ResourceType};
pub use selector::{match_resource, parse_verifiable_config, FragmentMatch, VerifiableConfiguration};
pub use signing::{sign_manifest, sign_tombstone, verify_manifest, SigningReport};
pub use tombstone::Tombstone;
pub use translate::translate;
