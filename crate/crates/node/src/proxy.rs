//! The proxy process: one discovery session running receive, filter, apply,
//! ACK in order, plus an HTTP status endpoint over the same state.

use std::io::BufWriter;
use std::net::{SocketAddr, TcpStream};
use std::path::Path;
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};
use std::thread;
use std::time::Duration;

use meshguard_core::filter::{bootstrap, PassThroughFilter, ResponseFilter, VerifyingFilter};
use meshguard_core::wire::{read_frame, write_frame};
use meshguard_core::{apply_decision, DiscoveryRequest, DiscoveryResponse, Document, Message, ProxyState, TrustBundle};
use tiny_http::{Header, Method, Response, Server};
use tracing::{debug, info, warn};

use crate::error::{NodeError, Result};

const RECONNECT_MIN: Duration = Duration::from_millis(20);
const RECONNECT_MAX: Duration = Duration::from_secs(1);

/// Which filter sits between the control plane and the proxy state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FilterMode {
    #[default]
    Verifying,
    /// Trust everything the control plane sends. Only for checking that
    /// scenarios depend on the verifying filter.
    PassThrough,
}

pub type SharedState = Arc<RwLock<ProxyState>>;

pub fn read_state(state: &SharedState) -> RwLockReadGuard<'_, ProxyState> {
    state.read().unwrap_or_else(|p| p.into_inner())
}

fn write_state(state: &SharedState) -> RwLockWriteGuard<'_, ProxyState> {
    state.write().unwrap_or_else(|p| p.into_inner())
}

/// Filters one response into the shared state and returns the ACK to send.
///
/// The write lock is held across filter and apply, so status readers see
/// either the state before this push or the state after it.
pub fn handle_response(
    state: &SharedState,
    filter: &dyn ResponseFilter,
    response: &DiscoveryResponse,
    node_id: &str,
) -> DiscoveryRequest {
    let mut guard = write_state(state);
    let decision = filter.filter(response, &guard);
    for (r, reason) in &decision.rejected {
        warn!(resource = %r.resource_ref(), version = %response.version, %reason, "rejected");
    }
    for (slot, refusal) in &decision.deletions_refused {
        warn!(resource = %slot, version = %response.version, %refusal, "deletion refused");
    }
    let (next, ack) = apply_decision(
        std::mem::take(&mut *guard),
        decision,
        &response.version,
        &response.nonce,
        node_id,
    );
    *guard = next;
    ack
}

pub struct ProxyOptions {
    pub node_id: String,
    pub control_plane: String,
    pub status: String,
    pub mode: FilterMode,
}

/// A running proxy. Its threads live for the rest of the process.
pub struct Proxy {
    state: SharedState,
    status_addr: SocketAddr,
}

impl Proxy {
    /// Loads the trust bundle, binds the status endpoint and starts the session loop.
    pub fn start(bundle_file: &Path, opts: ProxyOptions) -> Result<Self> {
        let bundle = bootstrap(bundle_file)?;
        Self::start_with_bundle(bundle, opts)
    }

    pub fn start_with_bundle(bundle: TrustBundle, opts: ProxyOptions) -> Result<Self> {
        info!(
            node = %opts.node_id,
            bundle_digest = %hex::encode(bundle.bundle_digest),
            owner_key_id = %bundle.verifiable_config.owner_key_id,
            selectors = bundle.verifiable_config.selectors().len(),
            "trust bundle loaded"
        );
        let filter: Box<dyn ResponseFilter> = match opts.mode {
            FilterMode::Verifying => Box::new(VerifyingFilter { bundle }),
            FilterMode::PassThrough => {
                warn!("signature verification disabled");
                Box::new(PassThroughFilter)
            }
        };
        let state = SharedState::default();
        let server = Server::http(opts.status.as_str()).map_err(|e| NodeError::Status(e.to_string()))?;
        let status_addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| NodeError::Status("status endpoint is not an IP socket".into()))?;

        let s = state.clone();
        thread::spawn(move || serve_status(server, s));
        let s = state.clone();
        thread::spawn(move || session_loop(&opts.control_plane, &opts.node_id, filter.as_ref(), &s));
        Ok(Self { state, status_addr })
    }

    pub fn status_addr(&self) -> SocketAddr {
        self.status_addr
    }

    pub fn state(&self) -> ProxyState {
        read_state(&self.state).clone()
    }
}

fn session_loop(addr: &str, node_id: &str, filter: &dyn ResponseFilter, state: &SharedState) {
    let mut backoff = RECONNECT_MIN;
    loop {
        match TcpStream::connect(addr) {
            Ok(stream) => {
                backoff = RECONNECT_MIN;
                info!(control_plane = addr, "connected");
                if let Err(e) = run_session(stream, node_id, filter, state) {
                    warn!(error = %e, "session ended");
                } else {
                    info!("control plane closed the session");
                }
            }
            Err(e) => debug!(control_plane = addr, error = %e, "connect failed"),
        }
        thread::sleep(backoff);
        backoff = (backoff * 2).min(RECONNECT_MAX);
    }
}

fn run_session(stream: TcpStream, node_id: &str, filter: &dyn ResponseFilter, state: &SharedState) -> Result<()> {
    stream.set_nodelay(true)?;
    let mut writer = BufWriter::new(stream.try_clone()?);
    let mut reader = stream;

    // After a reconnect this reports what we hold; the fresh push reconciles.
    let mut hello = DiscoveryRequest::initial(node_id);
    hello.acked_version = read_state(state).applied_version.clone();
    write_frame(&mut writer, &Message::Request(hello).to_document())?;

    while let Some(doc) = read_frame(&mut reader)? {
        let response = match Message::from_document(&doc)? {
            Message::Response(r) => r,
            Message::Request(_) => {
                warn!("control plane sent a request; ignored");
                continue;
            }
        };
        let ack = handle_response(state, filter, &response, node_id);
        if ack.is_nack() {
            info!(version = %ack.acked_version, "partial accept");
        } else {
            debug!(version = %ack.acked_version, "ACK");
        }
        write_frame(&mut writer, &Message::Request(ack).to_document())?;
    }
    Ok(())
}

fn serve_status(server: Server, state: SharedState) {
    let content_type = Header::from_bytes("Content-Type", "application/json").expect("static header");
    for request in server.incoming_requests() {
        let body: Option<Document> = match (request.method(), request.url()) {
            (Method::Get, "/state") => Some(read_state(&state).to_document()),
            (Method::Get, "/rejections") => Some(read_state(&state).rejections_document()),
            _ => None,
        };
        let result = match body {
            Some(doc) => request.respond(Response::from_data(doc.canonical_bytes()).with_header(content_type.clone())),
            None => request.respond(Response::from_string("not found\n").with_status_code(404)),
        };
        if let Err(e) = result {
            debug!(error = %e, "status response failed");
        }
    }
}
