mod common;

use std::io::Write;

use common::*;
use meshguard_core::control_plane::Store;
use meshguard_core::filter::{
    bootstrap, unverified_fragments, DeletionRefusal, FragmentOutcome, PassThroughFilter, RejectReason, ResponseFilter,
};
use meshguard_core::{
    apply_decision, filter_response, sign_manifest, sign_tombstone, translate, verify_manifest, Error, Manifest,
    ManifestKind, ProxyState, ResourceRef, ResourceType, TrustBundle, Verdict,
};

fn signed(m: &Manifest) -> Manifest {
    let keys = owner();
    sign_manifest(m, &vc_for(&keys), &keys).unwrap().0
}

/// Runs one push from `store` through the verifying filter.
fn push(store: &Store, bundle: &TrustBundle, state: ProxyState) -> (ProxyState, meshguard_core::DiscoveryRequest) {
    let (response, _) = store.build_response("nonce");
    let decision = filter_response(&response, bundle, &state);
    apply_decision(state, decision, &response.version, &response.nonce, "node-a")
}

fn vs_ref(name: &str) -> ResourceRef {
    ResourceRef::new(ResourceType::RouteConfiguration, format!("vs/{name}"))
}

#[test]
fn unsigned_mirror_is_rejected_others_unaffected() {
    let bundle = bundle_for(&owner());
    let mut store = Store::new();
    store.apply_manifest(virtual_service("evil", 1, "attacker.svc"));
    store.apply_manifest(signed(&virtual_service("good", 1, "shadow.svc")));
    store.apply_manifest(destination_rule("ratings"));
    let (response, _) = store.build_response("n");

    let decision = filter_response(&response, &bundle, &ProxyState::default());
    assert_eq!(decision.accepted.len(), 2);
    assert_eq!(decision.rejected.len(), 1);
    let (rejected, reason) = &decision.rejected[0];
    assert_eq!(rejected.name, "vs/evil");
    assert_eq!(
        reason,
        &RejectReason::MissingSignature {
            label: "request-mirroring".into(),
            path: "routes[0].mirror".into()
        }
    );
}

#[test]
fn non_confidential_cluster_passes_without_verification() {
    let bundle = bundle_for(&owner());
    let mut store = Store::new();
    store.apply_manifest(destination_rule("ratings"));
    let (response, _) = store.build_response("n");
    let decision = filter_response(&response, &bundle, &ProxyState::default());
    assert_eq!(decision.accepted.len(), 1);
    assert!(decision.rejected.is_empty());
}

#[test]
fn partition_never_invents_or_mutates() {
    let bundle = bundle_for(&owner());
    let mut store = Store::new();
    store.apply_manifest(virtual_service("a", 2, "x.svc"));
    store.apply_manifest(signed(&virtual_service("b", 2, "x.svc")));
    store.apply_manifest(authorization_policy("c", "/admin"));
    let (response, _) = store.build_response("n");
    let decision = filter_response(&response, &bundle, &ProxyState::default());
    let mut seen: Vec<_> = decision
        .accepted
        .iter()
        .chain(decision.rejected.iter().map(|(r, _)| r))
        .map(|r| r.to_document().canonical_bytes())
        .collect();
    let mut expected: Vec<_> = response
        .resources
        .iter()
        .map(|r| r.to_document().canonical_bytes())
        .collect();
    seen.sort();
    expected.sort();
    assert_eq!(seen, expected);
}

#[test]
fn all_accepted_acks_cleanly() {
    let bundle = bundle_for(&owner());
    let mut store = Store::new();
    store.apply_manifest(signed(&virtual_service("a", 1, "x.svc")));
    let (state, ack) = push(&store, &bundle, ProxyState::default());
    assert_eq!(ack.acked_version, "1");
    assert_eq!(ack.nonce, "nonce");
    assert_eq!(ack.node_id, "node-a");
    assert_eq!(ack.error_detail, None);
    assert_eq!(state.applied.len(), 1);
    assert_eq!(state.applied_version, "1");
}

#[test]
fn one_of_three_rejected_is_a_partial_ack() {
    let bundle = bundle_for(&owner());
    let mut store = Store::new();
    store.apply_manifest(signed(&virtual_service("a", 1, "x.svc")));
    store.apply_manifest(virtual_service("b", 1, "x.svc"));
    store.apply_manifest(destination_rule("c"));
    let (state, ack) = push(&store, &bundle, ProxyState::default());
    assert_eq!(ack.acked_version, "3");
    let detail = ack.error_detail.unwrap();
    assert!(detail.contains("RouteConfiguration:vs/b"), "{detail}");
    assert_eq!(detail.matches("rejected").count(), 1);
    assert_eq!(state.applied.len(), 2);
    assert_eq!(state.rejection_log.len(), 1);
    assert_eq!(state.rejection_log[0].version, "3");
}

#[test]
fn rogue_modification_keeps_last_known_good() {
    let bundle = bundle_for(&owner());
    let mut store = Store::new();
    let good = signed(&virtual_service("a", 1, "shadow.svc"));
    store.apply_manifest(good.clone());
    let (state, _) = push(&store, &bundle, ProxyState::default());
    let before = state.applied.clone();

    let mut tampered = good;
    let text = tampered.to_yaml().replace("shadow.svc", "attacker.svc");
    tampered = meshguard_core::parse_manifest(&text).unwrap();
    store.apply_manifest(tampered);
    let (state, ack) = push(&store, &bundle, state);
    assert_eq!(state.applied, before);
    assert!(ack.error_detail.unwrap().contains("DigestMismatch"));
    assert_eq!(state.rejection_log.last().unwrap().reason.code(), "DigestMismatch");
}

#[test]
fn copied_signatures_are_wrong_context() {
    let bundle = bundle_for(&owner());
    let original = signed(&virtual_service("a", 1, "shadow.svc"));
    let mut copy = virtual_service("b", 1, "shadow.svc");
    copy.annotations = original.annotations.clone();
    let mut store = Store::new();
    store.apply_manifest(copy);
    let (state, _) = push(&store, &bundle, ProxyState::default());
    assert!(state.applied.is_empty());
    assert_eq!(state.rejection_log[0].reason.code(), "WrongContext");
}

#[test]
fn rogue_key_signatures_are_unknown_key() {
    let bundle = bundle_for(&owner());
    let keys = rogue();
    let mut vc = vc_for(&keys);
    vc.owner_key_id = keys.key_id.clone();
    let (m, _) = sign_manifest(&virtual_service("a", 1, "x.svc"), &vc, &keys).unwrap();
    let mut store = Store::new();
    store.apply_manifest(m);
    let (state, _) = push(&store, &bundle, ProxyState::default());
    assert!(state.applied.is_empty());
    assert_eq!(state.rejection_log[0].reason.code(), "UnknownKey");
}

#[test]
fn deletion_without_tombstone_is_refused() {
    let bundle = bundle_for(&owner());
    let mut store = Store::new();
    store.apply_manifest(signed(&virtual_service("app", 1, "x.svc")));
    let (state, _) = push(&store, &bundle, ProxyState::default());

    store
        .delete_manifest(ManifestKind::VirtualService, "app", None)
        .unwrap();
    let (response, _) = store.build_response("n2");
    assert!(response.resources.is_empty());
    let decision = filter_response(&response, &bundle, &state);
    assert_eq!(
        decision.deletions_refused,
        vec![(vs_ref("app"), DeletionRefusal::NoTombstone)]
    );
    let (state, ack) = apply_decision(state, decision, &response.version, &response.nonce, "n");
    assert!(state.applied.contains_key(&vs_ref("app")));
    assert!(ack.error_detail.unwrap().contains("deletion refused"));
}

#[test]
fn tombstone_deletion_and_serial_pinning() {
    let keys = owner();
    let bundle = bundle_for(&keys);
    let mut store = Store::new();
    let m = signed(&virtual_service("app", 1, "x.svc"));
    store.apply_manifest(m.clone());
    let (state, _) = push(&store, &bundle, ProxyState::default());

    let t2 = sign_tombstone(ResourceType::RouteConfiguration, "vs/app", 2, &keys);
    store
        .delete_manifest(ManifestKind::VirtualService, "app", Some(t2))
        .unwrap();
    let (state, ack) = push(&store, &bundle, state);
    assert!(state.applied.is_empty());
    assert_eq!(ack.error_detail, None);
    assert_eq!(state.pinned_serials[&vs_ref("app")], 2);

    // Re-created, then deleted again with an older tombstone.
    let mut store = Store::new();
    store.apply_manifest(m);
    let (state, _) = push(&store, &bundle, state);
    assert!(state.applied.contains_key(&vs_ref("app")));
    let t1 = sign_tombstone(ResourceType::RouteConfiguration, "vs/app", 1, &keys);
    store
        .delete_manifest(ManifestKind::VirtualService, "app", Some(t1))
        .unwrap();
    let (response, _) = store.build_response("n");
    let decision = filter_response(&response, &bundle, &state);
    assert_eq!(
        decision.deletions_refused,
        vec![(vs_ref("app"), DeletionRefusal::StaleSerial { serial: 1, pinned: 2 })]
    );
}

#[test]
fn tombstone_for_other_resource_or_key_is_refused() {
    let keys = owner();
    let bundle = bundle_for(&keys);
    let mut store = Store::new();
    store.apply_manifest(signed(&virtual_service("app", 1, "x.svc")));
    let (state, _) = push(&store, &bundle, ProxyState::default());

    let mut forged = sign_tombstone(ResourceType::RouteConfiguration, "vs/app", 5, &rogue());
    forged.key_id = keys.key_id.clone();
    store
        .delete_manifest(ManifestKind::VirtualService, "app", Some(forged))
        .unwrap();
    let (response, _) = store.build_response("n");
    let decision = filter_response(&response, &bundle, &state);
    assert_eq!(
        decision.deletions_refused,
        vec![(vs_ref("app"), DeletionRefusal::Tombstone(Verdict::BadSignature))]
    );
}

#[test]
fn empty_push_retains_confidential_but_drops_the_rest() {
    let bundle = bundle_for(&owner());
    let mut store = Store::new();
    store.apply_manifest(signed(&virtual_service("app", 1, "x.svc")));
    store.apply_manifest(destination_rule("ratings"));
    let (state, _) = push(&store, &bundle, ProxyState::default());
    assert_eq!(state.applied.len(), 2);

    let (state, ack) = push(&Store::new(), &bundle, state);
    assert_eq!(state.applied.keys().cloned().collect::<Vec<_>>(), vec![vs_ref("app")]);
    assert!(ack.error_detail.unwrap().contains("deletion refused"));
}

#[test]
fn pass_through_filter_accepts_everything() {
    let bundle = bundle_for(&owner());
    let mut store = Store::new();
    store.apply_manifest(virtual_service("evil", 1, "attacker.svc"));
    let (response, _) = store.build_response("n");
    let decision = PassThroughFilter.filter(&response, &ProxyState::default());
    let (state, _) = apply_decision(ProxyState::default(), decision, "1", "n", "x");
    assert_eq!(unverified_fragments(&state, &bundle).len(), 1);
}

#[test]
fn control_plane_forwards_envelopes_byte_identical() {
    let m = signed(&virtual_service("a", 2, "x.svc"));
    let mut store = Store::new();
    store.apply_manifest(m.clone());
    let (response, _) = store.build_response("n");
    let forwarded: Vec<_> = response.resources[0]
        .envelopes
        .iter()
        .map(|e| e.to_annotation_value())
        .collect();
    let stored: Vec<_> = m.signature_annotations().map(|(_, v)| v.clone()).collect();
    assert_eq!(forwarded, stored);
}

#[test]
fn bootstrap_errors() {
    let keys = owner();
    let dir = std::env::temp_dir().join(format!("meshguard-bootstrap-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();

    let good = dir.join("bundle.yaml");
    std::fs::write(&good, bundle_for(&keys).to_yaml()).unwrap();
    let loaded = bootstrap(&good).unwrap();
    assert_eq!(loaded.owner_public_key, keys.public);
    assert_eq!(loaded.bundle_digest, bundle_for(&keys).bundle_digest);

    let mismatched = dir.join("mismatch.yaml");
    let mut f = std::fs::File::create(&mismatched).unwrap();
    let text = bundle_for(&keys).to_yaml().replace(&keys.key_id, &rogue().key_id);
    f.write_all(text.as_bytes()).unwrap();
    assert!(matches!(bootstrap(&mismatched), Err(Error::KeyIdMismatch { .. })));

    assert!(matches!(
        bootstrap(&dir.join("missing.yaml")),
        Err(Error::MalformedBundle(_))
    ));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn sign_manifest_annotation_counts() {
    let keys = owner();
    let vc = vc_for(&keys);
    let (m, report) = sign_manifest(&virtual_service("a", 1, "x.svc"), &vc, &keys).unwrap();
    assert_eq!(report.fragments_signed, 1);
    assert_eq!(m.signature_annotations().count(), 1);
    assert!(m.annotations.contains_key("meshguard.sig/request-mirroring-0"));
    assert_eq!(report.labels, ["request-mirroring"]);

    let (m, report) = sign_manifest(&virtual_service("a", 3, "x.svc"), &vc, &keys).unwrap();
    assert_eq!(report.fragments_signed, 3);
    assert_eq!(m.signature_annotations().count(), 3);

    let dr = destination_rule("ratings");
    let (m, report) = sign_manifest(&dr, &vc, &keys).unwrap();
    assert_eq!(report.fragments_signed, 0);
    assert_eq!(m, dr);
}

#[test]
fn resigning_replaces_old_annotations() {
    let keys = owner();
    let vc = vc_for(&keys);
    let (once, _) = sign_manifest(&virtual_service("a", 3, "x.svc"), &vc, &keys).unwrap();
    // Shrink to one mirror but keep the stale annotations, then re-sign.
    let mut shrunk = virtual_service("a", 1, "x.svc");
    shrunk.annotations = once.annotations.clone();
    let (twice, report) = sign_manifest(&shrunk, &vc, &keys).unwrap();
    assert_eq!(report.fragments_signed, 1);
    assert_eq!(twice.signature_annotations().count(), 1);
}

#[test]
fn verify_manifest_reports() {
    let keys = owner();
    let vc = vc_for(&keys);
    let (m, _) = sign_manifest(&virtual_service("a", 2, "x.svc"), &vc, &keys).unwrap();
    let report = verify_manifest(&m, &vc, &keys.public).unwrap();
    assert!(report.all_accepted());
    assert_eq!(report.fragments_signed, 2);

    let edited = meshguard_core::parse_manifest(&m.to_yaml().replacen("x.svc", "y.svc", 1)).unwrap();
    let report = verify_manifest(&edited, &vc, &keys.public).unwrap();
    assert!(!report.all_accepted());
    assert!(report
        .fragments
        .iter()
        .any(|f| f.outcome == FragmentOutcome::Rejected(Verdict::DigestMismatch)));

    let report = verify_manifest(&virtual_service("a", 1, "x.svc"), &vc, &keys.public).unwrap();
    assert_eq!(report.fragments[0].outcome, FragmentOutcome::MissingSignature);
}

#[test]
fn translate_attaches_all_envelopes() {
    let m = signed(&virtual_service("a", 2, "x.svc"));
    let resources = translate(&m).unwrap();
    assert_eq!(resources[0].envelopes.len(), 2);
}
