//! Offline signing tool for the application owner.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or I/O error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use meshguard_core::signing::tombstone_report;
use meshguard_core::tombstone::MAX_SERIAL;
use meshguard_core::{
    document, generate_keypair, parse_manifest, parse_verifiable_config, sign_manifest, sign_tombstone,
    verify_manifest, KeyPair, PublicKey, ResourceType, VerifiableConfiguration,
};

#[derive(Parser)]
#[command(
    name = "sign-tool",
    version,
    about = "Sign and check owner-confidential configuration fragments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sign every confidential fragment and embed the signatures as annotations.
    Sign {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        verifiable_config: PathBuf,
        /// Secret key file.
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict what a proxy will decide for a manifest.
    Verify {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        verifiable_config: PathBuf,
        /// Owner public key file.
        #[arg(long = "pub")]
        public: PathBuf,
    },
    /// Authorize deletion of one resource.
    Tombstone {
        /// Resource type, e.g. RouteConfiguration.
        #[arg(long = "type")]
        rtype: ResourceType,
        /// Resource name, e.g. vs/reviews.
        #[arg(long)]
        name: String,
        #[arg(long, value_parser = clap::value_parser!(u64).range(..=MAX_SERIAL))]
        serial: u64,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate an owner key pair as <prefix>.key and <prefix>.pub.
    Keygen {
        /// 32-byte seed as 64 hex characters; random if absent.
        #[arg(long)]
        seed_hex: Option<String>,
        #[arg(long)]
        out_prefix: PathBuf,
    },
}

/// A failed command: exit code and message.
struct Failure(u8, String);

impl From<meshguard_core::Error> for Failure {
    fn from(e: meshguard_core::Error) -> Self {
        Failure(2, e.to_string())
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure(2, format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure(2, format!("{}: {e}", path.display())))
}

fn load_vc(path: &Path) -> Result<VerifiableConfiguration, Failure> {
    parse_verifiable_config(&read(path)?).map_err(|e| Failure(2, format!("{}: {e}", path.display())))
}

fn load_manifest(path: &Path) -> Result<meshguard_core::Manifest, Failure> {
    parse_manifest(&read(path)?).map_err(|e| Failure(2, format!("{}: {e}", path.display())))
}

fn load_secret(path: &Path) -> Result<KeyPair, Failure> {
    KeyPair::from_secret_file_string(&read(path)?).map_err(|e| Failure(2, format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Sign {
            manifest,
            verifiable_config,
            key,
            out,
        } => {
            let vc = load_vc(&verifiable_config)?;
            let keys = load_secret(&key)?;
            if keys.key_id != vc.owner_key_id {
                eprintln!(
                    "warning: key {} is not the owner key {} named by the verifiable configuration",
                    keys.key_id, vc.owner_key_id
                );
            }
            let (signed, report) = sign_manifest(&load_manifest(&manifest)?, &vc, &keys)?;
            write(&out, &signed.to_yaml())?;
            print!("{report}");
        }
        Command::Verify {
            manifest,
            verifiable_config,
            public,
        } => {
            let vc = load_vc(&verifiable_config)?;
            let key = PublicKey::from_file_string(&read(&public)?)
                .map_err(|e| Failure(2, format!("{}: {e}", public.display())))?;
            let report = verify_manifest(&load_manifest(&manifest)?, &vc, &key)?;
            print!("{report}");
            if !report.all_accepted() {
                return Err(Failure(1, "verification failed".into()));
            }
        }
        Command::Tombstone {
            rtype,
            name,
            serial,
            key,
            out,
        } => {
            let t = sign_tombstone(rtype, &name, serial, &load_secret(&key)?);
            write(&out, &document::to_yaml(&t.to_document()))?;
            print!("{}", tombstone_report(&t));
        }
        Command::Keygen { seed_hex, out_prefix } => {
            let seed = seed_hex
                .map(|s| hex::decode(s.trim()).map_err(|e| Failure(2, format!("--seed-hex: {e}"))))
                .transpose()?;
            let keys = generate_keypair(seed.as_deref())?;
            let secret = out_prefix.with_extension("key");
            let public = out_prefix.with_extension("pub");
            write_secret(&secret, &keys.to_secret_file_string())?;
            write(&public, &keys.public.to_file_string())?;
            println!("{}", keys.key_id);
        }
    }
    Ok(())
}

#[cfg(unix)]
fn write_secret(path: &Path, contents: &str) -> Result<(), Failure> {
    use std::io::Write;
    use std::os::unix::fs::OpenOptionsExt;
    let mut f = fs::OpenOptions::new()
        .write(true)
        .create(true)
        .truncate(true)
        .mode(0o600)
        .open(path)
        .map_err(|e| Failure(2, format!("{}: {e}", path.display())))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| Failure(2, format!("{}: {e}", path.display())))
}

#[cfg(not(unix))]
fn write_secret(path: &Path, contents: &str) -> Result<(), Failure> {
    write(path, contents)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, message)) => {
            eprintln!("sign-tool: {message}");
            ExitCode::from(code)
        }
    }
}
