//! Control plane and proxies talking over loopback sockets.

use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use meshguard_core::admin::AdminCommand;
use meshguard_core::{
    generate_keypair, parse_manifest, parse_verifiable_config, sign_manifest, sign_tombstone, Document, KeyPair,
    Manifest, ManifestKind, ProxyState, ResourceRef, ResourceType, TrustBundle, VerifiableConfiguration,
};
use meshguard_node::client::{fetch_status, AdminClient};
use meshguard_node::proxy::{FilterMode, Proxy, ProxyOptions};
use meshguard_node::server::ControlPlane;

fn owner() -> KeyPair {
    generate_keypair(Some(&[0x11; 32])).unwrap()
}

fn vc(keys: &KeyPair) -> VerifiableConfiguration {
    parse_verifiable_config(&format!(
        "owner_key_id: {}\nselectors:\n  - {{label: request-mirroring, resource_type: RouteConfiguration, path: 'routes[*].mirror'}}\n",
        keys.key_id
    ))
    .unwrap()
}

fn vs(name: &str, mirror: &str) -> Manifest {
    parse_manifest(&format!(
        "kind: VirtualService\nname: {name}\nspec:\n  hosts: [{name}.svc]\n  http:\n    - route: [{{host: {name}.svc}}]\n      mirror: {{host: {mirror}}}\n"
    ))
    .unwrap()
}

fn start_proxy(cp: &str, node_id: &str) -> Proxy {
    let keys = owner();
    Proxy::start_with_bundle(
        TrustBundle::new(keys.public, vc(&keys)).unwrap(),
        ProxyOptions {
            node_id: node_id.into(),
            control_plane: cp.into(),
            status: "127.0.0.1:0".into(),
            mode: FilterMode::Verifying,
        },
    )
    .unwrap()
}

fn wait_for(proxy: &Proxy, version: u64) -> ProxyState {
    let deadline = Instant::now() + Duration::from_secs(5);
    loop {
        let state = proxy.state();
        if state.applied_version == version.to_string() {
            return state;
        }
        assert!(
            Instant::now() < deadline,
            "stuck at {:?}, want {version}",
            state.applied_version
        );
        thread::sleep(Duration::from_millis(2));
    }
}

fn route(name: &str) -> ResourceRef {
    ResourceRef::new(ResourceType::RouteConfiguration, format!("vs/{name}"))
}

#[test]
fn empty_control_plane_gives_empty_state_at_version_0() {
    let cp = ControlPlane::start("127.0.0.1:0", "127.0.0.1:0").unwrap();
    let proxy = start_proxy(&cp.discovery_addr().to_string(), "p");
    let state = wait_for(&proxy, 0);
    assert!(state.applied.is_empty());

    let status = fetch_status(&proxy.status_addr().to_string(), "/state").unwrap();
    assert_eq!(status.get("version").and_then(Document::as_str), Some("0"));
    let rejections = fetch_status(&proxy.status_addr().to_string(), "/rejections").unwrap();
    assert_eq!(
        rejections
            .get("rejections")
            .and_then(Document::as_array)
            .map(<[_]>::len),
        Some(0)
    );
    assert!(fetch_status(&proxy.status_addr().to_string(), "/nope").is_err());
}

#[test]
fn fan_out_filtering_and_acks() {
    let keys = owner();
    let cp = ControlPlane::start("127.0.0.1:0", "127.0.0.1:0").unwrap();
    let addr = cp.discovery_addr().to_string();
    let proxies = [start_proxy(&addr, "p0"), start_proxy(&addr, "p1")];
    for p in &proxies {
        wait_for(p, 0);
    }
    let mut admin = AdminClient::connect(cp.admin_addr()).unwrap();
    admin
        .apply(sign_manifest(&vs("good", "shadow.svc"), &vc(&keys), &keys).unwrap().0)
        .unwrap();
    let v = admin.apply(vs("evil", "attacker.example")).unwrap();
    assert_eq!(v, 2);
    for p in &proxies {
        let state = wait_for(p, v);
        assert!(state.applied.contains_key(&route("good")));
        assert!(!state.applied.contains_key(&route("evil")));
        assert_eq!(state.rejection_log.last().unwrap().resource, route("evil"));
    }

    // The control plane records each node's partial-accept ACK.
    let deadline = Instant::now() + Duration::from_secs(5);
    loop {
        let status = admin.status().unwrap();
        let nodes = status.get("nodes").and_then(Document::as_array).unwrap().to_vec();
        let acked = nodes
            .iter()
            .filter(|n| n.get("acked_version").and_then(Document::as_str) == Some("2"))
            .count();
        if acked == 2 {
            let detail = nodes[0].get("error_detail").and_then(Document::as_str).unwrap();
            assert!(detail.contains("RouteConfiguration:vs/evil"), "{detail}");
            assert_eq!(status.get("connected").and_then(Document::as_int), Some(2));
            break;
        }
        assert!(Instant::now() < deadline, "{status}");
        thread::sleep(Duration::from_millis(5));
    }
}

#[test]
fn deletions_need_owner_tombstones() {
    let keys = owner();
    let cp = ControlPlane::start("127.0.0.1:0", "127.0.0.1:0").unwrap();
    let proxy = start_proxy(&cp.discovery_addr().to_string(), "p");
    let mut admin = AdminClient::connect(cp.admin_addr()).unwrap();
    let signed = sign_manifest(&vs("app", "shadow.svc"), &vc(&keys), &keys).unwrap().0;

    admin.apply(signed.clone()).unwrap();
    let v = admin.delete(ManifestKind::VirtualService, "app", None).unwrap();
    let state = wait_for(&proxy, v);
    assert!(
        state.applied.contains_key(&route("app")),
        "rogue delete must be refused"
    );

    admin.apply(signed).unwrap();
    let t = sign_tombstone(ResourceType::RouteConfiguration, "vs/app", 4, &keys);
    let v = admin.delete(ManifestKind::VirtualService, "app", Some(t)).unwrap();
    let state = wait_for(&proxy, v);
    assert!(!state.applied.contains_key(&route("app")));
    assert_eq!(state.pinned_serials.get(&route("app")), Some(&4));
}

#[test]
fn admin_errors_are_replies() {
    let cp = ControlPlane::start("127.0.0.1:0", "127.0.0.1:0").unwrap();
    let mut admin = AdminClient::connect(cp.admin_addr()).unwrap();
    let err = admin.delete(ManifestKind::DestinationRule, "ghost", None).unwrap_err();
    assert!(err.to_string().contains("ghost"), "{err}");

    let reply = admin
        .send(&AdminCommand::Apply(
            parse_manifest("kind: DestinationRule\nname: bad\nspec: {}\n").unwrap(),
        ))
        .unwrap();
    assert!(reply.ok, "the store accepts anything well-formed");
    assert_eq!(
        admin.status().unwrap().get("version").and_then(Document::as_int),
        Some(1)
    );
}

struct Killed(Child);

impl Drop for Killed {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn spawn_control_plane(listen: &str, admin: &str) -> (Killed, String) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_control-plane"))
        .args(["--listen", listen, "--admin", admin])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    (Killed(child), line)
}

fn free_port() -> String {
    TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .to_string()
}

#[test]
fn proxy_keeps_state_across_control_plane_restart() {
    let keys = owner();
    let listen = free_port();
    let admin_addr = free_port();
    let (cp, line) = spawn_control_plane(&listen, &admin_addr);
    assert_eq!(line.trim(), format!("discovery={listen} admin={admin_addr}"));

    let proxy = start_proxy(&listen, "p");
    wait_for(&proxy, 0);
    let mut admin = AdminClient::connect(&admin_addr).unwrap();
    let v = admin
        .apply(sign_manifest(&vs("app", "shadow.svc"), &vc(&keys), &keys).unwrap().0)
        .unwrap();
    wait_for(&proxy, v);
    drop(admin);
    drop(cp);

    // A fresh, empty control plane is a rogue mass deletion from the proxy's
    // point of view; the signed route stays.
    let (_cp, _) = spawn_control_plane(&listen, &admin_addr);
    let state = wait_for(&proxy, 0);
    assert!(state.applied.contains_key(&route("app")));

    let mut admin = AdminClient::connect(&admin_addr).unwrap();
    let v = admin.apply(vs("other", "shadow.svc")).unwrap();
    let state = wait_for(&proxy, v);
    assert!(state.applied.contains_key(&route("app")));
    assert!(!state.applied.contains_key(&route("other")));
}

#[test]
fn proxy_binary_rejects_bad_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("bundle.yaml");
    let rogue = generate_keypair(Some(&[0x66; 32])).unwrap();
    // Key id names the owner, key is someone else's.
    std::fs::write(
        &bundle,
        format!(
            "owner_public_key: {}\nverifiable_config:\n  owner_key_id: {}\n  selectors: []\n",
            rogue.public.to_hex(),
            owner().key_id
        ),
    )
    .unwrap();
    for path in [bundle.clone(), dir.path().join("missing.yaml")] {
        let out = Command::new(env!("CARGO_BIN_EXE_proxy"))
            .arg("--bundle")
            .arg(&path)
            .args(["--control-plane", "127.0.0.1:1", "--status", "127.0.0.1:0"])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(2));
        assert!(out.stdout.is_empty());
    }
}
