use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use meshguard_core::crypto::sha256;
use meshguard_core::document::parse_yaml;
use meshguard_core::filter::unverified_fragments;
use meshguard_core::translate::{resource_name_for, resource_type_for};
use meshguard_core::{
    parse_manifest, parse_verifiable_config, Document, FragmentPath, Manifest, ProxyState, PublicKey, ResourceConfig,
    ResourceRef, Tombstone, TrustBundle,
};

use super::cluster::{Binaries, Cluster};
use super::report::{RunReport, ScenarioReport, StepOutcome};
use super::{Predicate, Scenario, Signer, Step, Tamper};
use crate::client::fetch_status;
use crate::error::{NodeError, Result};
use crate::proxy::FilterMode;

/// How long a proxy may take to process one push before the step fails.
const PUSH_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub workspace: PathBuf,
    /// Key seeds are derived from this.
    pub seed: Vec<u8>,
    pub proxies: usize,
    pub mode: FilterMode,
    pub binaries: Binaries,
}

enum StepError {
    /// The scenario's expectation did not hold, or an action the scenario relies on failed.
    Failed(String),
    /// The environment could not be brought up.
    Setup(NodeError),
}

impl From<NodeError> for StepError {
    fn from(e: NodeError) -> Self {
        StepError::Failed(e.to_string())
    }
}

impl From<meshguard_core::Error> for StepError {
    fn from(e: meshguard_core::Error) -> Self {
        StepError::Failed(e.to_string())
    }
}

impl From<std::io::Error> for StepError {
    fn from(e: std::io::Error) -> Self {
        StepError::Failed(e.to_string())
    }
}

type StepResult = std::result::Result<String, StepError>;

/// Selectors every scenario's owner declares confidential.
const SELECTORS: &str = "selectors:
  - label: request-mirroring
    resource_type: RouteConfiguration
    path: routes[*].mirror
  - label: authorization
    resource_type: Listener
    path: rbac
";

struct Run<'a> {
    opts: &'a RunOptions,
    scenario: &'a Scenario,
    dir: PathBuf,
    bundle: Option<TrustBundle>,
    cluster: Option<Cluster>,
    checkpoint: Vec<Document>,
}

impl<'a> Run<'a> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn slot(&self, slot: &str) -> PathBuf {
        self.dir.join("manifests").join(format!("{slot}.yaml"))
    }

    fn key_file(&self, signer: Signer) -> PathBuf {
        match signer {
            Signer::Owner => self.path("owner.key"),
            Signer::Rogue => self.path("rogue.key"),
        }
    }

    fn cluster(&mut self) -> std::result::Result<&mut Cluster, StepError> {
        self.cluster
            .as_mut()
            .ok_or_else(|| StepError::Failed("no cluster: keygen has not run".into()))
    }

    fn sign_tool(&self, args: &[&std::ffi::OsStr]) -> StepResult {
        let out = Command::new(&self.opts.binaries.sign_tool)
            .args(args)
            .output()
            .map_err(|e| StepError::Setup(NodeError::Setup(format!("sign-tool: {e}"))))?;
        let stdout = String::from_utf8_lossy(&out.stdout).trim().to_owned();
        if out.status.success() {
            Ok(stdout.lines().next().unwrap_or_default().to_owned())
        } else {
            Err(StepError::Failed(format!(
                "sign-tool exited with {}: {}",
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )))
        }
    }

    fn keygen(&mut self) -> StepResult {
        let mut ids = Vec::new();
        for who in ["owner", "rogue"] {
            let mut seed_input = who.as_bytes().to_vec();
            seed_input.extend_from_slice(&self.opts.seed);
            let seed = hex::encode(sha256(&seed_input));
            let prefix = self.path(who);
            ids.push(self.sign_tool(&[
                "keygen".as_ref(),
                "--seed-hex".as_ref(),
                seed.as_ref(),
                "--out-prefix".as_ref(),
                prefix.as_os_str(),
            ])?);
        }
        let setup = |e: String| StepError::Setup(NodeError::Setup(e));
        let owner = PublicKey::from_file_string(&fs::read_to_string(self.path("owner.pub"))?)
            .map_err(|e| setup(e.to_string()))?;
        let vc_text = format!("owner_key_id: {}\n{SELECTORS}", owner.key_id());
        let vc = parse_verifiable_config(&vc_text).map_err(|e| setup(e.to_string()))?;
        fs::write(self.path("vc.yaml"), &vc_text)?;
        let bundle = TrustBundle::new(owner, vc).map_err(|e| setup(e.to_string()))?;
        fs::write(self.path("bundle.yaml"), bundle.to_yaml())?;
        self.bundle = Some(bundle);

        let proxies = self.opts.proxies.max(self.scenario.min_proxies);
        let cluster = Cluster::start(
            &self.opts.binaries,
            &self.dir,
            &self.path("bundle.yaml"),
            proxies,
            self.opts.mode,
        )
        .map_err(StepError::Setup)?;
        self.cluster = Some(cluster);
        Ok(format!("owner {} rogue {}; {proxies} proxies up", ids[0], ids[1]))
    }

    fn load(&self, slot: &str) -> std::result::Result<Manifest, StepError> {
        Ok(parse_manifest(&fs::read_to_string(self.slot(slot))?)?)
    }

    fn tamper(&self, slot: &str, kind: &Tamper) -> StepResult {
        let mut m = self.load(slot)?;
        match kind {
            Tamper::RetargetMirror { host } => retarget_mirror(&mut m, host)?,
            Tamper::StripSignatures { host } => {
                m.strip_signatures();
                retarget_mirror(&mut m, host)?;
            }
            Tamper::CopySignaturesFrom { slot: from } => {
                let source = self.load(from)?;
                m.strip_signatures();
                m.annotations
                    .extend(source.signature_annotations().map(|(k, v)| (k.clone(), v.clone())));
            }
        }
        fs::write(self.slot(slot), m.to_yaml())?;
        Ok(format!(
            "{} signature annotation(s) left",
            m.signature_annotations().count()
        ))
    }

    fn settle(&mut self, version: u64) -> StepResult {
        self.cluster()?.wait_for_version(version, PUSH_TIMEOUT)?;
        Ok(format!("version {version} processed by every proxy"))
    }

    fn states(&mut self) -> std::result::Result<Vec<(String, Document)>, StepError> {
        let cluster = self.cluster()?;
        let mut out = Vec::new();
        for p in &cluster.proxies {
            out.push((p.node_id.clone(), fetch_status(&p.status, "/state")?));
        }
        Ok(out)
    }

    fn execute(&mut self, step: &Step) -> StepResult {
        match step {
            Step::Keygen => self.keygen(),
            Step::Author { slot, manifest } => {
                parse_manifest(manifest)?;
                let path = self.slot(slot);
                fs::write(&path, manifest)?;
                Ok(path.display().to_string())
            }
            Step::Sign { slot, signer } => {
                let path = self.slot(slot);
                self.sign_tool(&[
                    "sign".as_ref(),
                    "--manifest".as_ref(),
                    path.as_os_str(),
                    "--verifiable-config".as_ref(),
                    self.path("vc.yaml").as_os_str(),
                    "--key".as_ref(),
                    self.key_file(*signer).as_os_str(),
                    "--out".as_ref(),
                    path.as_os_str(),
                ])
            }
            Step::Tamper { slot, kind } => self.tamper(slot, kind),
            Step::Apply { slot } => {
                let m = self.load(slot)?;
                let version = self.cluster()?.admin.apply(m)?;
                self.settle(version)
            }
            Step::Delete { kind, name, tombstone } => {
                let tombstone = match tombstone {
                    None => None,
                    Some((serial, signer)) => {
                        let out = self.path(&format!("tombstone-{kind}-{name}-{serial}.yaml"));
                        self.sign_tool(&[
                            "tombstone".as_ref(),
                            "--type".as_ref(),
                            resource_type_for(*kind).tag().as_ref(),
                            "--name".as_ref(),
                            resource_name_for(*kind, name).as_ref(),
                            "--serial".as_ref(),
                            serial.to_string().as_ref(),
                            "--key".as_ref(),
                            self.key_file(*signer).as_os_str(),
                            "--out".as_ref(),
                            out.as_os_str(),
                        ])?;
                        Some(Tombstone::from_document(&parse_yaml(&fs::read_to_string(&out)?)?)?)
                    }
                };
                let version = self.cluster()?.admin.delete(*kind, name, tombstone)?;
                self.settle(version)
            }
            Step::Checkpoint => {
                self.checkpoint = self
                    .states()?
                    .into_iter()
                    .map(|(_, s)| s.get("applied").cloned().unwrap_or(Document::Null))
                    .collect();
                Ok(format!("{} proxies recorded", self.checkpoint.len()))
            }
            Step::Assert(p) => self.assert(p),
        }
    }

    fn assert(&mut self, p: &Predicate) -> StepResult {
        let states = self.states()?;
        let rejections = if matches!(p, Predicate::Rejected { .. }) {
            let cluster = self.cluster()?;
            let mut out = Vec::new();
            for proxy in &cluster.proxies {
                out.push(fetch_status(&proxy.status, "/rejections")?);
            }
            out
        } else {
            Vec::new()
        };
        for (i, (node, state)) in states.iter().enumerate() {
            let applied = parse_applied(state).map_err(StepError::Failed)?;
            let fail = |why: String| Err(StepError::Failed(format!("{node}: {why}")));
            match p {
                Predicate::Present(r) if !applied.contains_key(r) => return fail(format!("{r} not applied")),
                Predicate::Absent(r) if applied.contains_key(r) => return fail(format!("{r} is applied")),
                Predicate::FragmentEquals { resource, path, value } => {
                    let path = FragmentPath::parse(path)?;
                    let found = applied.get(resource).and_then(|r| path.navigate(&r.body));
                    if found != Some(value) {
                        return fail(format!(
                            "{resource} {path} is {}",
                            found.map_or("absent".into(), |d| d.to_string())
                        ));
                    }
                }
                Predicate::UnchangedSinceCheckpoint | Predicate::ChangedSinceCheckpoint => {
                    let before = self
                        .checkpoint
                        .get(i)
                        .ok_or_else(|| StepError::Failed("no checkpoint recorded".into()))?;
                    let now = state.get("applied").unwrap_or(&Document::Null);
                    let want_same = matches!(p, Predicate::UnchangedSinceCheckpoint);
                    if (now == before) != want_same {
                        return fail(if want_same {
                            "applied state changed".into()
                        } else {
                            "applied state did not change".into()
                        });
                    }
                }
                Predicate::Rejected { resource, code } => {
                    let hit = rejections[i]
                        .get("rejections")
                        .and_then(Document::as_array)
                        .unwrap_or_default()
                        .iter()
                        .any(|e| {
                            e.get("rtype").and_then(Document::as_str) == Some(resource.rtype.tag())
                                && e.get("name").and_then(Document::as_str) == Some(resource.name.as_str())
                                && e.get("reason").and_then(Document::as_str) == Some(code.as_str())
                        });
                    if !hit {
                        return fail(format!("no {code} rejection logged for {resource}"));
                    }
                }
                Predicate::Pinned { resource, serial } => {
                    let pinned = state
                        .get("pinned_serials")
                        .and_then(Document::as_array)
                        .unwrap_or_default()
                        .iter()
                        .any(|e| {
                            e.get("rtype").and_then(Document::as_str) == Some(resource.rtype.tag())
                                && e.get("name").and_then(Document::as_str) == Some(resource.name.as_str())
                                && e.get("serial").and_then(Document::as_int) == i64::try_from(*serial).ok()
                        });
                    if !pinned {
                        return fail(format!("{resource} not pinned at #{serial}"));
                    }
                }
                Predicate::AllVerified => {
                    let bundle = self
                        .bundle
                        .as_ref()
                        .ok_or_else(|| StepError::Failed("no trust bundle".into()))?;
                    let proxy_state = ProxyState {
                        applied: applied.clone(),
                        ..ProxyState::default()
                    };
                    if let Some(bad) = unverified_fragments(&proxy_state, bundle).first() {
                        return fail(format!(
                            "{} {} does not verify",
                            bad.matched.resource_ref(),
                            bad.matched.concrete_path
                        ));
                    }
                }
                _ => {}
            }
        }
        Ok(format!("holds on {} proxies", states.len()))
    }
}

fn parse_applied(state: &Document) -> std::result::Result<BTreeMap<ResourceRef, ResourceConfig>, String> {
    let mut out = BTreeMap::new();
    for doc in state
        .get("applied")
        .and_then(Document::as_array)
        .ok_or("status has no applied list")?
    {
        let r = ResourceConfig::from_document(doc).map_err(|e| e.to_string())?;
        out.insert(r.resource_ref(), r);
    }
    Ok(out)
}

fn retarget_mirror(m: &mut Manifest, host: &str) -> std::result::Result<(), StepError> {
    let name = m.display_name();
    let target = m
        .spec
        .as_map_mut()
        .and_then(|s| s.get_mut("http"))
        .and_then(|h| match h {
            Document::Array(routes) => routes.first_mut(),
            _ => None,
        })
        .and_then(Document::as_map_mut)
        .and_then(|r| r.get_mut("mirror"))
        .and_then(Document::as_map_mut)
        .ok_or_else(|| StepError::Failed(format!("{name} has no mirror on its first route")))?;
    target.insert("host".into(), Document::from(host));
    Ok(())
}

/// Runs one scenario in `<workspace>/<name>` against a fresh cluster.
///
/// `Err` means the cluster could not be set up; a scenario whose
/// expectations fail still yields `Ok` with `passed == false`.
pub fn run_scenario(scenario: &Scenario, opts: &RunOptions) -> Result<ScenarioReport> {
    let started = Instant::now();
    let dir = opts.workspace.join(scenario.name);
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    fs::create_dir_all(dir.join("manifests"))?;

    let mut run = Run {
        opts,
        scenario,
        dir,
        bundle: None,
        cluster: None,
        checkpoint: Vec::new(),
    };
    let mut steps = Vec::with_capacity(scenario.steps.len());
    let mut passed = true;
    for step in &scenario.steps {
        let (ok, detail) = match run.execute(step) {
            Ok(detail) => (true, detail),
            Err(StepError::Failed(why)) => (false, why),
            Err(StepError::Setup(e)) => {
                return Err(match e {
                    NodeError::Setup(_) => e,
                    other => NodeError::Setup(format!("{}: {other}", scenario.name)),
                })
            }
        };
        steps.push(StepOutcome {
            step: step.describe(),
            ok,
            detail,
        });
        if !ok {
            passed = false;
            // Later asserts would only restate the failure; later actions may depend on it.
            break;
        }
    }
    let proxies = run.cluster.as_ref().map_or(0, |c| c.proxies.len());
    drop(run);
    Ok(ScenarioReport {
        name: scenario.name.to_owned(),
        steps,
        passed,
        technique_refs: scenario.technique_refs.iter().map(|t| t.to_string()).collect(),
        proxies,
        elapsed: started.elapsed(),
    })
}

pub fn run_all(scenarios: &[Scenario], opts: &RunOptions) -> Result<RunReport> {
    let mut reports = Vec::with_capacity(scenarios.len());
    for s in scenarios {
        reports.push(run_scenario(s, opts)?);
    }
    Ok(RunReport {
        filter: match opts.mode {
            FilterMode::Verifying => "verifying".into(),
            FilterMode::PassThrough => "pass-through".into(),
        },
        scenarios: reports,
    })
}

/// Writes `report.json` (canonical bytes) and `report.txt` into the workspace.
pub fn write_report(report: &RunReport, workspace: &Path) -> Result<()> {
    fs::create_dir_all(workspace)?;
    fs::write(workspace.join("report.json"), report.to_document().canonical_bytes())?;
    fs::write(workspace.join("report.txt"), report.to_string())?;
    Ok(())
}
