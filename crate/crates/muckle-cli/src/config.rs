//! Endpoint configuration: a single TOML file naming the suite, the two
//! identities, credential and trust-anchor files, and the quantum-key
//! source, plus command-line overrides for the schedule variant flags and
//! the QKD endpoint.
//!
//! Paths in the file resolve relative to the file's own directory. The QKD
//! endpoint is either `"inproc"` — a process-local simulator derived from
//! `qkd_seed`, which two processes can share by using the same seed — or an
//! HTTP URL of a key-management service.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use muckle_core::crypto::{suite, CipherSuite};
use muckle_core::keyschedule::{LabelBinding, RatsMode};
use muckle_core::protocol::{SessionConfig, TrustStore};
use muckle_core::qkd::{MissPolicy, QkdClient, QkdStore};
use muckle_core::wire::Certificate;
use muckle_kms::HttpQkdClient;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub suite: String,
    pub self_id: String,
    pub peer_id: String,
    /// Own certificate, in the wire encoding.
    pub certificate: PathBuf,
    /// Own long-term KEM secret key, raw bytes.
    pub secret_key: PathBuf,
    /// Certificates accepted from peers (pinned, byte-exact).
    pub trust_store: Vec<PathBuf>,
    #[serde(default = "default_qkd_endpoint")]
    pub qkd_endpoint: String,
    #[serde(default)]
    pub qkd_seed: u64,
    pub label_binding: Option<String>,
    pub rats_mode: Option<String>,
}

fn default_qkd_endpoint() -> String {
    "inproc".to_string()
}

pub fn parse_label_binding(s: &str) -> Result<LabelBinding> {
    match s {
        "table" => Ok(LabelBinding::Table),
        "figure" => Ok(LabelBinding::Figure),
        other => bail!("unknown label binding {other:?} (expected \"table\" or \"figure\")"),
    }
}

pub fn parse_rats_mode(s: &str) -> Result<RatsMode> {
    match s {
        "figure" => Ok(RatsMode::Figure),
        "uniform" => Ok(RatsMode::Uniform),
        other => bail!("unknown RATS mode {other:?} (expected \"figure\" or \"uniform\")"),
    }
}

/// Flag-level overrides applied on top of the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub qkd_endpoint: Option<String>,
    pub label_binding: Option<LabelBinding>,
    pub rats_mode: Option<RatsMode>,
}

/// A fully resolved endpoint: everything needed to build sessions.
pub struct Endpoint {
    pub suite: CipherSuite,
    pub session_config: SessionConfig,
    pub qkd: Arc<dyn QkdClient>,
    pub qkd_endpoint: String,
}

impl Endpoint {
    pub fn self_id(&self) -> &str {
        &self.session_config.self_id
    }
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

/// Expand a numeric seed into simulator seed bytes.
pub fn seed_bytes(seed: u64) -> [u8; 32] {
    let mut out = [0u8; 32];
    out[..8].copy_from_slice(&seed.to_be_bytes());
    out
}

pub fn load(config_path: &Path, overrides: &Overrides) -> Result<Endpoint> {
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading config {}", config_path.display()))?;
    let file: ConfigFile = toml::from_str(&text)
        .with_context(|| format!("parsing config {}", config_path.display()))?;
    let base = config_path.parent().unwrap_or_else(|| Path::new("."));

    let suite_obj =
        suite(&file.suite).with_context(|| format!("suite {:?} from config", file.suite))?;

    let cert_path = resolve(base, &file.certificate);
    let cert_bytes = std::fs::read(&cert_path)
        .with_context(|| format!("reading certificate {}", cert_path.display()))?;
    let certificate = Certificate::decode(&cert_bytes)
        .with_context(|| format!("decoding certificate {}", cert_path.display()))?;
    if certificate.subject_id != file.self_id {
        bail!(
            "certificate subject {:?} does not match self_id {:?}",
            certificate.subject_id,
            file.self_id
        );
    }
    if certificate.kem_alg_id != suite_obj.static_kem.alg_id() {
        bail!(
            "certificate algorithm {:?} does not match the suite's long-term KEM {:?}",
            certificate.kem_alg_id,
            suite_obj.static_kem.alg_id()
        );
    }

    let key_path = resolve(base, &file.secret_key);
    let long_term_secret = std::fs::read(&key_path)
        .with_context(|| format!("reading secret key {}", key_path.display()))?;

    let mut anchors = Vec::new();
    for p in &file.trust_store {
        let p = resolve(base, p);
        let bytes = std::fs::read(&p)
            .with_context(|| format!("reading trust anchor {}", p.display()))?;
        anchors.push(
            Certificate::decode(&bytes)
                .with_context(|| format!("decoding trust anchor {}", p.display()))?,
        );
    }

    let mut session_config = SessionConfig::new(
        file.self_id.clone(),
        file.peer_id.clone(),
        suite_obj.clone(),
        certificate,
        long_term_secret,
        TrustStore::Pinned(anchors),
    );
    if let Some(binding) = overrides.label_binding {
        session_config.label_binding = binding;
    } else if let Some(s) = &file.label_binding {
        session_config.label_binding = parse_label_binding(s)?;
    }
    if let Some(mode) = overrides.rats_mode {
        session_config.rats_mode = mode;
    } else if let Some(s) = &file.rats_mode {
        session_config.rats_mode = parse_rats_mode(s)?;
    }

    let endpoint_str = overrides
        .qkd_endpoint
        .clone()
        .unwrap_or_else(|| file.qkd_endpoint.clone());
    let qkd: Arc<dyn QkdClient> = if endpoint_str == "inproc" {
        // Derive-on-miss lets the two endpoint processes agree on key bytes
        // through the shared seed alone.
        let store = QkdStore::with_seed(seed_bytes(file.qkd_seed), MissPolicy::DeriveOnMiss);
        store.open_link(&file.self_id, &file.peer_id);
        store
    } else if endpoint_str.starts_with("http://") || endpoint_str.starts_with("https://") {
        Arc::new(HttpQkdClient::new(&endpoint_str))
    } else {
        bail!("qkd endpoint must be \"inproc\" or an http(s) URL, got {endpoint_str:?}");
    };

    Ok(Endpoint {
        suite: suite_obj,
        session_config,
        qkd,
        qkd_endpoint: endpoint_str,
    })
}
