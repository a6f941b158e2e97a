//! The control-plane process: a discovery listener pushing state-of-the-world
//! responses and an admin listener mutating the store.
//!
//! One mutex guards the store and the session table, so a mutation and the
//! pushes it triggers complete before the next admin command is looked at.

use std::collections::BTreeMap;
use std::io::BufWriter;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{self, Sender};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread;

use meshguard_core::admin::{AdminCommand, AdminReply};
use meshguard_core::control_plane::{fresh_nonce, Store};
use meshguard_core::wire::{read_frame, write_frame};
use meshguard_core::{Document, Message};
use tracing::{debug, info, warn};

use crate::error::Result;

struct Session {
    id: u64,
    peer: SocketAddr,
    outbox: Sender<Document>,
}

/// Last thing each node told us.
#[derive(Debug, Clone, Default)]
struct NodeReport {
    acked_version: String,
    error_detail: Option<String>,
}

#[derive(Default)]
struct Hub {
    store: Store,
    sessions: Vec<Session>,
    next_session: u64,
    nodes: BTreeMap<String, NodeReport>,
}

impl Hub {
    fn push_to(&self, session: &Session) -> bool {
        let nonce = fresh_nonce();
        let (response, skipped) = self.store.build_response(&nonce);
        for s in skipped {
            warn!(manifest = %s.manifest, error = %s.error, "manifest left out of snapshot");
        }
        debug!(peer = %session.peer, version = %response.version, %nonce, "push");
        session.outbox.send(Message::Response(response).to_document()).is_ok()
    }

    fn push_all(&mut self) {
        let sessions = std::mem::take(&mut self.sessions);
        let live: Vec<_> = sessions.into_iter().filter(|s| self.push_to(s)).collect();
        self.sessions = live;
    }

    fn status(&self) -> Document {
        let nodes = self
            .nodes
            .iter()
            .map(|(node, r)| {
                Document::map()
                    .with("node_id", node.as_str())
                    .with("acked_version", r.acked_version.as_str())
                    .with("error_detail", r.error_detail.clone())
            })
            .collect::<Vec<_>>();
        let mut doc = self.store.status_document();
        if let Some(m) = doc.as_map_mut() {
            m.insert("connected".into(), Document::Int(self.sessions.len() as i64));
            m.insert("nodes".into(), Document::Array(nodes));
        }
        doc
    }

    fn execute(&mut self, cmd: AdminCommand) -> AdminReply {
        match cmd {
            AdminCommand::Apply(m) => {
                let name = m.display_name();
                let version = self.store.apply_manifest(m);
                info!(manifest = %name, version, "applied");
                self.push_all();
                AdminReply::ok(version)
            }
            AdminCommand::Delete { kind, name, tombstone } => {
                let with_tombstone = tombstone.is_some();
                match self.store.delete_manifest(kind, &name, tombstone) {
                    Ok(version) => {
                        info!(manifest = %format!("{kind}/{name}"), version, with_tombstone, "deleted");
                        self.push_all();
                        AdminReply::ok(version)
                    }
                    Err(e) => AdminReply::error(e.to_string()),
                }
            }
            AdminCommand::Status => AdminReply {
                status: Some(self.status()),
                ..AdminReply::ok(self.store.version())
            },
        }
    }
}

/// A running control plane. Listener threads live for the rest of the process.
pub struct ControlPlane {
    hub: Arc<Mutex<Hub>>,
    discovery_addr: SocketAddr,
    admin_addr: SocketAddr,
}

impl ControlPlane {
    /// Binds both listeners and starts serving in background threads.
    pub fn start(discovery: &str, admin: &str) -> Result<Self> {
        let discovery = TcpListener::bind(discovery)?;
        let admin = TcpListener::bind(admin)?;
        let cp = Self {
            hub: Arc::default(),
            discovery_addr: discovery.local_addr()?,
            admin_addr: admin.local_addr()?,
        };
        let hub = cp.hub.clone();
        thread::spawn(move || accept_loop(discovery, hub, discovery_session));
        let hub = cp.hub.clone();
        thread::spawn(move || accept_loop(admin, hub, admin_session));
        info!(discovery = %cp.discovery_addr, admin = %cp.admin_addr, "control plane listening");
        Ok(cp)
    }

    pub fn discovery_addr(&self) -> SocketAddr {
        self.discovery_addr
    }

    pub fn admin_addr(&self) -> SocketAddr {
        self.admin_addr
    }

    /// Runs an admin command in-process, exactly as the admin listener would.
    pub fn execute(&self, cmd: AdminCommand) -> AdminReply {
        lock(&self.hub).execute(cmd)
    }
}

fn lock(hub: &Mutex<Hub>) -> MutexGuard<'_, Hub> {
    hub.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

fn accept_loop(listener: TcpListener, hub: Arc<Mutex<Hub>>, session: fn(TcpStream, Arc<Mutex<Hub>>)) {
    for conn in listener.incoming() {
        match conn {
            Ok(stream) => {
                let hub = hub.clone();
                thread::spawn(move || session(stream, hub));
            }
            Err(e) => warn!(error = %e, "accept failed"),
        }
    }
}

fn discovery_session(stream: TcpStream, hub: Arc<Mutex<Hub>>) {
    let _ = stream.set_nodelay(true);
    let peer = match stream.peer_addr() {
        Ok(p) => p,
        Err(_) => return,
    };
    let mut writer = match stream.try_clone() {
        Ok(w) => BufWriter::new(w),
        Err(e) => {
            warn!(%peer, error = %e, "cannot split connection");
            return;
        }
    };
    let (tx, rx) = mpsc::channel::<Document>();
    let id = {
        let mut hub = lock(&hub);
        let id = hub.next_session;
        hub.next_session += 1;
        let session = Session { id, peer, outbox: tx };
        if hub.push_to(&session) {
            hub.sessions.push(session);
        }
        id
    };
    info!(%peer, session = id, "proxy connected");

    thread::spawn(move || {
        for doc in rx {
            if let Err(e) = write_frame(&mut writer, &doc) {
                debug!(%peer, error = %e, "push failed");
                break;
            }
        }
        let _ = writer.get_ref().shutdown(std::net::Shutdown::Both);
    });

    let mut reader = stream;
    loop {
        let doc = match read_frame(&mut reader) {
            Ok(Some(doc)) => doc,
            Ok(None) => break,
            Err(e) => {
                warn!(%peer, error = %e, "dropping connection");
                break;
            }
        };
        match Message::from_document(&doc) {
            Ok(Message::Request(req)) => {
                if req.is_nack() {
                    // No retry: the same version would be rejected again.
                    warn!(node = %req.node_id, version = %req.acked_version, detail = req.error_detail.as_deref().unwrap_or(""), "NACK");
                } else {
                    info!(node = %req.node_id, version = %req.acked_version, "ACK");
                }
                lock(&hub).nodes.insert(
                    req.node_id,
                    NodeReport {
                        acked_version: req.acked_version,
                        error_detail: req.error_detail,
                    },
                );
            }
            Ok(Message::Response(_)) => warn!(%peer, "proxy sent a response; ignored"),
            Err(e) => warn!(%peer, error = %e, "unreadable message"),
        }
    }
    lock(&hub).sessions.retain(|s| s.id != id);
    info!(%peer, session = id, "proxy disconnected");
}

fn admin_session(mut stream: TcpStream, hub: Arc<Mutex<Hub>>) {
    let _ = stream.set_nodelay(true);
    loop {
        let doc = match read_frame(&mut stream) {
            Ok(Some(doc)) => doc,
            Ok(None) => return,
            Err(e) => {
                warn!(error = %e, "admin connection dropped");
                return;
            }
        };
        let reply = match AdminCommand::from_document(&doc) {
            Ok(cmd) => lock(&hub).execute(cmd),
            Err(e) => AdminReply::error(e.to_string()),
        };
        if write_frame(&mut stream, &reply.to_document()).is_err() {
            return;
        }
    }
}
