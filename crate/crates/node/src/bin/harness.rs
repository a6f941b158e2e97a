//! Runs the built-in threat scenarios against real control-plane and proxy processes.
//!
//! Exit codes: 0 all scenarios passed, 1 some failed, 2 usage or setup error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use meshguard_node::harness::{self, Binaries, RunOptions};
use meshguard_node::proxy::FilterMode;

#[derive(Parser)]
#[command(
    name = "harness",
    version,
    about = "Replay rogue-administrator scenarios against the verifying proxy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario, or `all`.
    Run {
        scenario: String,
        /// Directory for keys, manifests, logs and the report.
        #[arg(long)]
        workspace: PathBuf,
        /// Hex seed the owner and rogue keys are derived from.
        #[arg(long, default_value = "6d657368")]
        seed: String,
        /// Proxies per scenario (some scenarios need at least 2).
        #[arg(long, default_value_t = 2)]
        proxies: usize,
        /// Run proxies without signature verification.
        #[arg(long, hide = true)]
        pass_through: bool,
    },
    /// List the built-in scenarios.
    List,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    meshguard_node::init_logging("warn");
    match cli.command {
        Command::List => {
            for s in harness::catalog() {
                println!("{:<32} {}  [{}]", s.name, s.summary, s.technique_refs.join(", "));
            }
            ExitCode::SUCCESS
        }
        Command::Run {
            scenario,
            workspace,
            seed,
            proxies,
            pass_through,
        } => {
            let seed = match hex::decode(&seed) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("harness: --seed: {e}");
                    return ExitCode::from(2);
                }
            };
            let scenarios = if scenario == "all" {
                harness::catalog()
            } else {
                match harness::scenario(&scenario) {
                    Some(s) => vec![s],
                    None => {
                        eprintln!("harness: unknown scenario {scenario:?}; see `harness list`");
                        return ExitCode::from(2);
                    }
                }
            };
            let binaries = match Binaries::beside_current_exe() {
                Ok(b) => b,
                Err(e) => {
                    eprintln!("harness: {e}");
                    return ExitCode::from(2);
                }
            };
            let opts = RunOptions {
                workspace: workspace.clone(),
                seed,
                proxies: proxies.max(1),
                mode: if pass_through {
                    FilterMode::PassThrough
                } else {
                    FilterMode::Verifying
                },
                binaries,
            };
            let report = match harness::run_all(&scenarios, &opts) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("harness: {e}");
                    return ExitCode::from(2);
                }
            };
            print!("{report}");
            if let Err(e) = harness::write_report(&report, &workspace) {
                eprintln!("harness: writing report: {e}");
                return ExitCode::from(2);
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
