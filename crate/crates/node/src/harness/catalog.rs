//! The built-in scenarios.

use meshguard_core::{Document, ManifestKind, ResourceRef, ResourceType};

use super::{Predicate, Scenario, Signer, Step, Tamper};

/// Threat-matrix techniques this artifact does not address; the paper covers
/// them with confidential containers, which are not simulated here.
pub const OUT_OF_SCOPE_TECHNIQUES: &[&str] = &[
    "Exec into container",
    "bash/cmd inside container",
    "Compromised images in registry",
];

const SHADOW: &str = "shadow.reviews.svc";
const ATTACKER: &str = "collector.attacker.example";

fn vs(name: &str, mirror: Option<&str>) -> String {
    let mirror = mirror
        .map(|h| format!("      mirror: {{host: {h}, port: 9080}}\n      mirrorPercentBp: 10000\n"))
        .unwrap_or_default();
    format!(
        "kind: VirtualService\nname: {name}\nspec:\n  hosts: [{name}.svc]\n  http:\n    - name: primary\n      match: {{prefix: /}}\n      route: [{{host: {name}-v1.svc, port: 9080, weight: 100}}]\n{mirror}    - name: canary\n      match: {{prefix: /canary}}\n      route: [{{host: {name}-v2.svc}}]\n"
    )
}

fn ap(name: &str, denied: &str) -> String {
    format!(
        "kind: AuthorizationPolicy\nname: {name}\nspec:\n  selector: {{app: {name}}}\n  action: DENY\n  rules:\n    - from: [cluster.local/ns/default/sa/public]\n      to: {{paths: ['{denied}'], methods: [GET]}}\n"
    )
}

fn dr(name: &str, lb: &str) -> String {
    format!(
        "kind: DestinationRule\nname: {name}\nspec:\n  host: {name}.svc\n  trafficPolicy:\n    loadBalancer: {lb}\n"
    )
}

fn route(name: &str) -> ResourceRef {
    ResourceRef::new(ResourceType::RouteConfiguration, format!("vs/{name}"))
}

fn author(slot: &str, manifest: String) -> Step {
    Step::Author {
        slot: slot.into(),
        manifest,
    }
}

fn sign(slot: &str, signer: Signer) -> Step {
    Step::Sign {
        slot: slot.into(),
        signer,
    }
}

fn apply(slot: &str) -> Step {
    Step::Apply { slot: slot.into() }
}

fn tamper(slot: &str, kind: Tamper) -> Step {
    Step::Tamper {
        slot: slot.into(),
        kind,
    }
}

fn check(p: Predicate) -> Step {
    Step::Assert(p)
}

fn mirror_host(name: &str, host: &str) -> Step {
    check(Predicate::FragmentEquals {
        resource: route(name),
        path: "routes[0].mirror.host".into(),
        value: Document::from(host),
    })
}

fn rejected(resource: ResourceRef, code: &str) -> Step {
    check(Predicate::Rejected {
        resource,
        code: code.into(),
    })
}

/// Keys, then an owner-signed `reviews` VirtualService with a mirror, applied.
fn signed_baseline() -> Vec<Step> {
    vec![
        Step::Keygen,
        author("reviews", vs("reviews", Some(SHADOW))),
        sign("reviews", Signer::Owner),
        apply("reviews"),
        check(Predicate::Present(route("reviews"))),
        mirror_host("reviews", SHADOW),
    ]
}

fn with(mut steps: Vec<Step>, more: impl IntoIterator<Item = Step>) -> Vec<Step> {
    steps.extend(more);
    steps
}

pub fn catalog() -> Vec<Scenario> {
    let rogue_vs = route("exfil");
    vec![
        Scenario {
            name: "legit-signed-update",
            summary: "owner re-signs a changed mirror; every proxy applies it",
            steps: with(
                signed_baseline(),
                [
                    Step::Checkpoint,
                    author("reviews", vs("reviews", Some("shadow-v2.reviews.svc"))),
                    sign("reviews", Signer::Owner),
                    apply("reviews"),
                    check(Predicate::ChangedSinceCheckpoint),
                    mirror_host("reviews", "shadow-v2.reviews.svc"),
                    check(Predicate::AllVerified),
                ],
            ),
            technique_refs: vec!["Resource hijacking"],
            adversarial: false,
            min_proxies: 1,
        },
        Scenario {
            name: "legit-tombstone-delete",
            summary: "owner authorizes a deletion with a tombstone; proxies drop the resource and pin the serial",
            steps: with(
                signed_baseline(),
                [
                    Step::Checkpoint,
                    Step::Delete {
                        kind: ManifestKind::VirtualService,
                        name: "reviews".into(),
                        tombstone: Some((1, Signer::Owner)),
                    },
                    check(Predicate::ChangedSinceCheckpoint),
                    check(Predicate::Absent(route("reviews"))),
                    check(Predicate::Pinned {
                        resource: route("reviews"),
                        serial: 1,
                    }),
                ],
            ),
            technique_refs: vec!["Data destruction"],
            adversarial: false,
            min_proxies: 1,
        },
        Scenario {
            name: "rogue-create",
            summary: "administrator creates mirroring routes, unsigned and signed with its own key",
            steps: with(
                signed_baseline(),
                [
                    Step::Checkpoint,
                    author("exfil", vs("exfil", Some(ATTACKER))),
                    sign("exfil", Signer::Rogue),
                    apply("exfil"),
                    check(Predicate::Absent(rogue_vs.clone())),
                    author("exfil-unsigned", vs("exfil-unsigned", Some(ATTACKER))),
                    apply("exfil-unsigned"),
                    check(Predicate::Absent(route("exfil-unsigned"))),
                    check(Predicate::UnchangedSinceCheckpoint),
                    check(Predicate::AllVerified),
                    rejected(rogue_vs.clone(), "UnknownKey"),
                    rejected(route("exfil-unsigned"), "MissingSignature"),
                ],
            ),
            technique_refs: vec!["Resource hijacking", "Using cloud credentials"],
            adversarial: true,
            min_proxies: 1,
        },
        Scenario {
            name: "rogue-modify",
            summary: "administrator points a signed mirror at its own collector and re-applies",
            steps: with(
                signed_baseline(),
                [
                    Step::Checkpoint,
                    tamper("reviews", Tamper::RetargetMirror { host: ATTACKER.into() }),
                    apply("reviews"),
                    check(Predicate::UnchangedSinceCheckpoint),
                    mirror_host("reviews", SHADOW),
                    check(Predicate::AllVerified),
                    rejected(route("reviews"), "DigestMismatch"),
                ],
            ),
            technique_refs: vec!["Resource hijacking", "Lateral movement"],
            adversarial: true,
            min_proxies: 1,
        },
        Scenario {
            name: "rogue-delete",
            summary: "administrator deletes a signed manifest without the owner's tombstone",
            steps: with(
                signed_baseline(),
                [
                    Step::Checkpoint,
                    Step::Delete {
                        kind: ManifestKind::VirtualService,
                        name: "reviews".into(),
                        tombstone: None,
                    },
                    check(Predicate::Present(route("reviews"))),
                    check(Predicate::UnchangedSinceCheckpoint),
                    rejected(route("reviews"), "DeletionRefused"),
                    apply("reviews"),
                    Step::Delete {
                        kind: ManifestKind::VirtualService,
                        name: "reviews".into(),
                        tombstone: Some((1, Signer::Rogue)),
                    },
                    check(Predicate::Present(route("reviews"))),
                    check(Predicate::UnchangedSinceCheckpoint),
                ],
            ),
            technique_refs: vec!["Data destruction"],
            adversarial: true,
            min_proxies: 1,
        },
        Scenario {
            name: "strip-signatures",
            summary: "administrator removes the signature annotations and changes the mirror",
            steps: with(
                signed_baseline(),
                [
                    Step::Checkpoint,
                    tamper("reviews", Tamper::StripSignatures { host: ATTACKER.into() }),
                    apply("reviews"),
                    check(Predicate::UnchangedSinceCheckpoint),
                    mirror_host("reviews", SHADOW),
                    rejected(route("reviews"), "MissingSignature"),
                ],
            ),
            technique_refs: vec!["Resource hijacking", "Sidecar injection"],
            adversarial: true,
            min_proxies: 1,
        },
        Scenario {
            name: "cross-resource-signature-replay",
            summary: "administrator copies a valid envelope onto another route with the same mirror",
            steps: with(
                signed_baseline(),
                [
                    Step::Checkpoint,
                    author("ratings", vs("ratings", Some(SHADOW))),
                    tamper("ratings", Tamper::CopySignaturesFrom { slot: "reviews".into() }),
                    apply("ratings"),
                    check(Predicate::Absent(route("ratings"))),
                    check(Predicate::UnchangedSinceCheckpoint),
                    rejected(route("ratings"), "WrongContext"),
                ],
            ),
            technique_refs: vec!["Resource hijacking"],
            adversarial: true,
            min_proxies: 1,
        },
        Scenario {
            name: "nonconfidential-passthrough",
            summary: "unsigned configuration no selector covers flows and deletes freely next to a rejected route",
            steps: vec![
                Step::Keygen,
                author("lb", dr("reviews", "ROUND_ROBIN")),
                apply("lb"),
                author("plain", vs("plain", None)),
                apply("plain"),
                check(Predicate::Present(ResourceRef::new(
                    ResourceType::Cluster,
                    "dr/reviews",
                ))),
                check(Predicate::Present(route("plain"))),
                author("exfil", vs("exfil", Some(ATTACKER))),
                apply("exfil"),
                rejected(route("exfil"), "MissingSignature"),
                Step::Checkpoint,
                author("lb", dr("reviews", "LEAST_REQUEST")),
                apply("lb"),
                check(Predicate::ChangedSinceCheckpoint),
                Step::Checkpoint,
                Step::Delete {
                    kind: ManifestKind::DestinationRule,
                    name: "reviews".into(),
                    tombstone: None,
                },
                check(Predicate::ChangedSinceCheckpoint),
                check(Predicate::Absent(ResourceRef::new(ResourceType::Cluster, "dr/reviews"))),
                check(Predicate::AllVerified),
            ],
            technique_refs: vec!["Denial of service"],
            adversarial: false,
            min_proxies: 1,
        },
        Scenario {
            name: "multi-proxy-fanout",
            summary: "signed updates reach every proxy; a tampered push is rejected by every proxy",
            steps: with(
                signed_baseline(),
                [
                    author("deny-admin", ap("reviews", "/admin")),
                    sign("deny-admin", Signer::Owner),
                    apply("deny-admin"),
                    check(Predicate::Present(ResourceRef::new(
                        ResourceType::Listener,
                        "ap/reviews",
                    ))),
                    Step::Checkpoint,
                    tamper("reviews", Tamper::RetargetMirror { host: ATTACKER.into() }),
                    apply("reviews"),
                    check(Predicate::UnchangedSinceCheckpoint),
                    rejected(route("reviews"), "DigestMismatch"),
                    author("reviews", vs("reviews", Some("shadow-v2.reviews.svc"))),
                    sign("reviews", Signer::Owner),
                    apply("reviews"),
                    check(Predicate::ChangedSinceCheckpoint),
                    mirror_host("reviews", "shadow-v2.reviews.svc"),
                    check(Predicate::AllVerified),
                ],
            ),
            technique_refs: vec!["Lateral movement"],
            adversarial: true,
            min_proxies: 2,
        },
    ]
}

pub fn scenario(name: &str) -> Option<Scenario> {
    catalog().into_iter().find(|s| s.name == name)
}
