//! `muckle` — endpoints and tooling for the Muckle# handshake.
//!
//! Subcommands: `keygen` writes a long-term identity (certificate plus KEM
//! secret key); `responder` serves handshakes on a TCP listener;
//! `initiator` runs handshakes against a responder and reports wire bytes
//! and wall-clock timing; `vectors` writes a deterministic full-handshake
//! test-vector file; `kms` serves quantum keys over HTTP.

mod config;
mod net;
mod vectors;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::rngs::OsRng;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_core::CryptoRngCore;

use muckle_core::crypto::suite;
use muckle_core::protocol::generate_identity;
use muckle_core::qkd::{MissPolicy, QkdStore};

use config::{parse_label_binding, parse_rats_mode, seed_bytes, Overrides};

#[derive(Parser)]
#[command(name = "muckle", version, about = "Hybrid authenticated key exchange over TCP")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Overrides shared by the two endpoint subcommands.
#[derive(Args, Debug)]
struct EndpointFlags {
    /// Endpoint configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Quantum-key source: "inproc" or an http(s) URL; overrides the config.
    #[arg(long)]
    qkd_endpoint: Option<String>,
    /// Schedule label binding: "table" or "figure"; overrides the config.
    #[arg(long)]
    label_binding: Option<String>,
    /// Responder application-traffic derivation: "figure" or "uniform";
    /// overrides the config.
    #[arg(long)]
    rats_mode: Option<String>,
}

impl EndpointFlags {
    fn load(&self) -> Result<config::Endpoint> {
        let overrides = Overrides {
            qkd_endpoint: self.qkd_endpoint.clone(),
            label_binding: self
                .label_binding
                .as_deref()
                .map(parse_label_binding)
                .transpose()?,
            rats_mode: self.rats_mode.as_deref().map(parse_rats_mode).transpose()?,
        };
        config::load(&self.config, &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a long-term identity: a certificate and its KEM secret key.
    Keygen {
        #[arg(long, default_value = "toy")]
        suite: String,
        /// Subject identity the certificate binds the key to.
        #[arg(long)]
        subject: String,
        #[arg(long, default_value = "muckle-ca")]
        issuer: String,
        /// Simulated attestation payload size carried in the certificate.
        #[arg(long, default_value_t = 0)]
        attestation_len: usize,
        /// Deterministic generation seed; omitted means OS randomness.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_cert: PathBuf,
        #[arg(long)]
        out_key: PathBuf,
    },
    /// Serve handshakes: one TCP connection per session.
    Responder {
        #[command(flatten)]
        flags: EndpointFlags,
        #[arg(long, default_value = "127.0.0.1:7844")]
        listen: String,
        /// Exit after this many connections (runs forever if omitted).
        #[arg(long)]
        max_conns: Option<usize>,
    },
    /// Run handshakes against a responder and report bytes and timing.
    Initiator {
        #[command(flatten)]
        flags: EndpointFlags,
        #[arg(long, default_value = "127.0.0.1:7844")]
        connect: String,
        /// Handshake stages per session.
        #[arg(long, default_value_t = 1)]
        stages: u32,
        /// Number of benchmarked handshake runs.
        #[arg(long, default_value_t = 1)]
        bench: usize,
    },
    /// Write a deterministic full-handshake test-vector file.
    Vectors {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "toy")]
        suite: String,
        /// Output path; omitted means stdout.
        #[arg(long)]
        vectors: Option<PathBuf>,
        /// Confirm writing secret material.
        #[arg(long)]
        dump_secrets: bool,
        #[arg(long)]
        label_binding: Option<String>,
        #[arg(long)]
        rats_mode: Option<String>,
    },
    /// Serve quantum keys over HTTP.
    Kms {
        #[arg(long, default_value = "127.0.0.1:8441")]
        listen: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Unknown-id handling: "strict" or "derive-on-miss".
        #[arg(long, default_value = "strict")]
        policy: String,
        /// Pair to open a link for, as "A,B"; repeatable.
        #[arg(long)]
        open_link: Vec<String>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Keygen {
            suite: suite_id,
            subject,
            issuer,
            attestation_len,
            seed,
            out_cert,
            out_key,
        } => {
            let suite_obj = suite(&suite_id)?;
            let mut rng: Box<dyn CryptoRngCore> = match seed {
                Some(s) => Box::new(ChaCha20Rng::seed_from_u64(s)),
                None => Box::new(OsRng),
            };
            let mut attestation = vec![0u8; attestation_len];
            rng.fill_bytes(&mut attestation);
            let (cert, secret) =
                generate_identity(&suite_obj, &subject, &issuer, attestation, rng.as_mut());
            let encoded = cert.encode()?;
            std::fs::write(&out_cert, &encoded)
                .with_context(|| format!("writing {}", out_cert.display()))?;
            std::fs::write(&out_key, &secret)
                .with_context(|| format!("writing {}", out_key.display()))?;
            println!(
                "wrote certificate for {subject:?} ({} bytes) and secret key ({} bytes)",
                encoded.len(),
                secret.len()
            );
            Ok(())
        }
        Command::Responder {
            flags,
            listen,
            max_conns,
        } => net::serve_responder(flags.load()?, &listen, max_conns),
        Command::Initiator {
            flags,
            connect,
            stages,
            bench,
        } => {
            let endpoint = flags.load()?;
            let report = net::run_initiator(&endpoint, &connect, stages, bench)?;
            net::print_report(&report)
        }
        Command::Vectors {
            seed,
            suite: suite_id,
            vectors: out,
            dump_secrets,
            label_binding,
            rats_mode,
        } => {
            let params = vectors::VectorParams {
                seed,
                suite_id,
                label_binding: label_binding
                    .as_deref()
                    .map(parse_label_binding)
                    .transpose()?
                    .unwrap_or_default(),
                rats_mode: rats_mode
                    .as_deref()
                    .map(parse_rats_mode)
                    .transpose()?
                    .unwrap_or_default(),
            };
            vectors::emit(&params, out.as_deref(), dump_secrets)
        }
        Command::Kms {
            listen,
            seed,
            policy,
            open_link,
        } => {
            let policy = match policy.as_str() {
                "strict" => MissPolicy::Strict,
                "derive-on-miss" => MissPolicy::DeriveOnMiss,
                other => anyhow::bail!(
                    "unknown policy {other:?} (expected \"strict\" or \"derive-on-miss\")"
                ),
            };
            let store = QkdStore::with_seed(seed_bytes(seed), policy);
            for link in &open_link {
                let (a, b) = link
                    .split_once(',')
                    .with_context(|| format!("--open-link {link:?} must be \"A,B\""))?;
                store.open_link(a.trim(), b.trim());
            }
            let handle = muckle_kms::spawn_server(store, &listen)
                .with_context(|| format!("binding key service on {listen}"))?;
            println!("serving quantum keys on {}", handle.base_url());
            handle.wait();
            Ok(())
        }
    }
}
