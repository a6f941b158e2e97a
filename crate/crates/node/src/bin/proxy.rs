//! Proxy with the verifying filter. Prints the status address on stdout, then runs forever.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use meshguard_node::proxy::{FilterMode, Proxy, ProxyOptions};

#[derive(Parser)]
#[command(
    name = "proxy",
    version,
    about = "Apply only owner-verified configuration from the control plane"
)]
struct Cli {
    /// Trust bundle: owner public key and verifiable configuration.
    #[arg(long)]
    bundle: PathBuf,
    /// Control-plane discovery address.
    #[arg(long)]
    control_plane: String,
    /// HTTP status listener (GET /state, /rejections).
    #[arg(long)]
    status: String,
    #[arg(long, default_value = "proxy")]
    node_id: String,
    /// Apply everything unverified. Exists to check that tests depend on the filter.
    #[arg(long, hide = true)]
    insecure_pass_through: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    meshguard_node::init_logging("info");
    let mode = if cli.insecure_pass_through {
        FilterMode::PassThrough
    } else {
        FilterMode::Verifying
    };
    let opts = ProxyOptions {
        node_id: cli.node_id,
        control_plane: cli.control_plane,
        status: cli.status,
        mode,
    };
    let proxy = match Proxy::start(&cli.bundle, opts) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("proxy: {e}");
            return ExitCode::from(2);
        }
    };
    println!("status={}", proxy.status_addr());
    loop {
        std::thread::park();
    }
}
