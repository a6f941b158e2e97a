//! Processes around `meshguard-core`: the control plane, the verifying
//! proxy, their clients, and the scenario harness that drives them.

pub mod client;
pub mod error;
pub mod harness;
pub mod proxy;
pub mod server;

pub use error::{NodeError, Result};

/// Logs to stderr; `RUST_LOG` overrides `default`.
pub fn init_logging(default: &str) {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_target(false)
        .try_init();
}
