//! Untrusted control-plane simulator. Prints the bound addresses on stdout, then serves forever.

use std::process::ExitCode;

use clap::Parser;
use meshguard_node::server::ControlPlane;

#[derive(Parser)]
#[command(
    name = "control-plane",
    version,
    about = "Store manifests and push them to proxies, unverified"
)]
struct Cli {
    /// Discovery listener, e.g. 127.0.0.1:15010 (port 0 picks one).
    #[arg(long)]
    listen: String,
    /// Admin listener.
    #[arg(long)]
    admin: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    meshguard_node::init_logging("info");
    let cp = match ControlPlane::start(&cli.listen, &cli.admin) {
        Ok(cp) => cp,
        Err(e) => {
            eprintln!("control-plane: {e}");
            return ExitCode::from(2);
        }
    };
    println!("discovery={} admin={}", cp.discovery_addr(), cp.admin_addr());
    loop {
        std::thread::park();
    }
}
