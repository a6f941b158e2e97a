//! Child processes: one control plane and N proxies on loopback ports.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use meshguard_core::Document;

use crate::client::{fetch_status, AdminClient};
use crate::error::{NodeError, Result};
use crate::proxy::FilterMode;

const STARTUP_TIMEOUT: Duration = Duration::from_secs(10);
const POLL: Duration = Duration::from_millis(3);

/// Paths of the executables the harness drives.
#[derive(Debug, Clone)]
pub struct Binaries {
    pub sign_tool: PathBuf,
    pub control_plane: PathBuf,
    pub proxy: PathBuf,
}

impl Binaries {
    /// The binaries installed next to the running executable.
    pub fn beside_current_exe() -> Result<Self> {
        let exe = std::env::current_exe()?;
        let dir = exe
            .parent()
            .ok_or_else(|| NodeError::Setup("executable has no parent directory".into()))?;
        let bin = |name: &str| dir.join(format!("{name}{}", std::env::consts::EXE_SUFFIX));
        let found = Self {
            sign_tool: bin("sign-tool"),
            control_plane: bin("control-plane"),
            proxy: bin("proxy"),
        };
        for p in [&found.sign_tool, &found.control_plane, &found.proxy] {
            if !p.is_file() {
                return Err(NodeError::Setup(format!("{} not found", p.display())));
            }
        }
        Ok(found)
    }
}

/// Killed when dropped.
struct ChildGuard(Child);

impl Drop for ChildGuard {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

/// Spawns `cmd` with stderr to `log` and returns it with its first stdout line.
fn spawn(mut cmd: Command, log: &Path) -> Result<(ChildGuard, String)> {
    let stderr = File::create(log)?;
    cmd.stdin(Stdio::null()).stdout(Stdio::piped()).stderr(stderr);
    let mut child = ChildGuard(
        cmd.spawn()
            .map_err(|e| NodeError::Setup(format!("spawn {:?}: {e}", cmd.get_program())))?,
    );
    let stdout = child.0.stdout.take().expect("piped stdout");
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut line = String::new();
        let _ = tx.send(BufReader::new(stdout).read_line(&mut line).map(|_| line));
    });
    match rx.recv_timeout(STARTUP_TIMEOUT) {
        Ok(Ok(line)) if !line.is_empty() => Ok((child, line.trim().to_owned())),
        _ => Err(NodeError::Setup(format!(
            "{:?} did not report its address; see {}",
            cmd.get_program(),
            log.display()
        ))),
    }
}

fn field<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(key)?.strip_prefix('='))
        .ok_or_else(|| NodeError::Setup(format!("no {key}= in {line:?}")))
}

pub struct ProxyHandle {
    pub node_id: String,
    pub status: String,
    _child: ChildGuard,
}

pub struct Cluster {
    pub admin: AdminClient,
    pub proxies: Vec<ProxyHandle>,
    // Dropped after the proxies so they do not spin on reconnects.
    _control_plane: ChildGuard,
}

impl Cluster {
    pub fn start(bins: &Binaries, dir: &Path, bundle: &Path, proxies: usize, mode: FilterMode) -> Result<Self> {
        let mut cmd = Command::new(&bins.control_plane);
        cmd.args(["--listen", "127.0.0.1:0", "--admin", "127.0.0.1:0"]);
        let (cp, line) = spawn(cmd, &dir.join("control-plane.log"))?;
        let discovery = field(&line, "discovery")?.to_owned();
        let admin = AdminClient::connect(field(&line, "admin")?)
            .map_err(|e| NodeError::Setup(format!("admin connect: {e}")))?;

        let mut handles = Vec::with_capacity(proxies);
        for i in 0..proxies {
            let node_id = format!("proxy-{i}");
            let mut cmd = Command::new(&bins.proxy);
            cmd.arg("--bundle").arg(bundle).args([
                "--control-plane",
                &discovery,
                "--status",
                "127.0.0.1:0",
                "--node-id",
                &node_id,
            ]);
            if mode == FilterMode::PassThrough {
                cmd.arg("--insecure-pass-through");
            }
            let (child, line) = spawn(cmd, &dir.join(format!("{node_id}.log")))?;
            handles.push(ProxyHandle {
                node_id,
                status: field(&line, "status")?.to_owned(),
                _child: child,
            });
        }
        let mut cluster = Self {
            admin,
            proxies: handles,
            _control_plane: cp,
        };
        let version = cluster
            .admin
            .status()
            .map_err(|e| NodeError::Setup(format!("control plane status: {e}")))?
            .get("version")
            .and_then(Document::as_int)
            .unwrap_or(0);
        cluster
            .wait_for_version(version as u64, STARTUP_TIMEOUT)
            .map_err(|e| NodeError::Setup(e.to_string()))?;
        Ok(cluster)
    }

    /// Blocks until every proxy has processed the push for `version` (or a later one).
    pub fn wait_for_version(&self, version: u64, timeout: Duration) -> Result<()> {
        let deadline = Instant::now() + timeout;
        for p in &self.proxies {
            loop {
                let seen = fetch_status(&p.status, "/state")
                    .ok()
                    .and_then(|d| d.get("version").and_then(Document::as_str).map(str::to_owned));
                if seen.as_deref().and_then(|v| v.parse::<u64>().ok()) >= Some(version) {
                    break;
                }
                if Instant::now() >= deadline {
                    return Err(NodeError::Status(format!(
                        "{} did not reach version {version} (at {seen:?})",
                        p.node_id
                    )));
                }
                thread::sleep(POLL);
            }
        }
        Ok(())
    }
}
