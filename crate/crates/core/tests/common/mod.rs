#![allow(dead_code)]

use meshguard_core::{
    generate_keypair, parse_manifest, parse_verifiable_config, KeyPair, Manifest, TrustBundle, VerifiableConfiguration,
};

pub fn owner() -> KeyPair {
    generate_keypair(Some(&[0x11; 32])).unwrap()
}

pub fn rogue() -> KeyPair {
    generate_keypair(Some(&[0x66; 32])).unwrap()
}

pub fn vc_for(keys: &KeyPair) -> VerifiableConfiguration {
    parse_verifiable_config(&format!(
        "owner_key_id: {}\nselectors:\n  - label: request-mirroring\n    resource_type: RouteConfiguration\n    path: routes[*].mirror\n  - label: authorization\n    resource_type: Listener\n    path: rbac\n",
        keys.key_id
    ))
    .unwrap()
}

pub fn bundle_for(keys: &KeyPair) -> TrustBundle {
    TrustBundle::new(keys.public, vc_for(keys)).unwrap()
}

/// VirtualService with `mirrors` mirrored routes (all to `mirror_host`) and one plain route.
pub fn virtual_service(name: &str, mirrors: usize, mirror_host: &str) -> Manifest {
    let mut text = format!("kind: VirtualService\nname: {name}\nspec:\n  hosts: [{name}.svc]\n  http:\n");
    for i in 0..mirrors {
        text.push_str(&format!(
            "    - name: m{i}\n      route: [{{host: {name}-v1.svc, port: 9080}}]\n      mirror: {{host: {mirror_host}}}\n"
        ));
    }
    text.push_str(&format!("    - name: plain\n      route: [{{host: {name}-v1.svc}}]\n"));
    parse_manifest(&text).unwrap()
}

pub fn authorization_policy(name: &str, denied_path: &str) -> Manifest {
    parse_manifest(&format!(
        "kind: AuthorizationPolicy\nname: {name}\nspec:\n  action: DENY\n  rules:\n    - to: {{paths: ['{denied_path}']}}\n"
    ))
    .unwrap()
}

pub fn destination_rule(name: &str) -> Manifest {
    parse_manifest(&format!(
        "kind: DestinationRule\nname: {name}\nspec:\n  host: {name}.svc\n  trafficPolicy: {{loadBalancer: RANDOM}}\n"
    ))
    .unwrap()
}
