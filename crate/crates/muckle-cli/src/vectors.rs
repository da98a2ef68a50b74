//! Deterministic full-handshake test vectors.
//!
//! Runs one complete in-process stage between two freshly generated
//! identities, all randomness drawn from a seeded generator, and writes a
//! line-oriented `name = hex` file: the six schedule inputs, the eight wire
//! messages, and every derived value, in derivation order. The same seed
//! always yields a byte-identical file. Because the file contains every
//! stage secret, emission is gated behind an explicit flag.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{ensure, Context, Result};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use muckle_core::crypto::suite;
use muckle_core::keyschedule::{LabelBinding, RatsMode};
use muckle_core::protocol::{generate_identity, Session, SessionConfig, TrustStore};
use muckle_core::qkd::{MissPolicy, QkdStore};

pub struct VectorParams {
    pub seed: u64,
    pub suite_id: String,
    pub label_binding: LabelBinding,
    pub rats_mode: RatsMode,
}

pub fn emit(params: &VectorParams, out: Option<&Path>, dump_secrets: bool) -> Result<()> {
    ensure!(
        dump_secrets,
        "a vector file contains every derived secret; pass --dump-secrets to confirm"
    );
    let text = render(params)?;
    match out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing vectors to {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn render(params: &VectorParams) -> Result<String> {
    let suite_obj = suite(&params.suite_id)?;
    let mut rng = ChaCha20Rng::seed_from_u64(params.seed);

    let mut qkd_seed = [0u8; 32];
    rng.fill_bytes(&mut qkd_seed);
    let store = QkdStore::with_seed(qkd_seed, MissPolicy::Strict);
    store.open_link("alice", "bob");

    let (cert_i, secret_i) = generate_identity(&suite_obj, "alice", "vector-ca", Vec::new(), &mut rng);
    let (cert_r, secret_r) = generate_identity(&suite_obj, "bob", "vector-ca", Vec::new(), &mut rng);
    let trust = TrustStore::Pinned(vec![cert_i.clone(), cert_r.clone()]);

    let mut config_i = SessionConfig::new(
        "alice",
        "bob",
        suite_obj.clone(),
        cert_i,
        secret_i,
        trust.clone(),
    );
    config_i.label_binding = params.label_binding;
    config_i.rats_mode = params.rats_mode;
    let mut config_r = SessionConfig::new("bob", "alice", suite_obj, cert_r, secret_r, trust);
    config_r.label_binding = params.label_binding;
    config_r.rats_mode = params.rats_mode;

    let mut initiator = Session::new_initiator(config_i, store.clone());
    let mut responder = Session::new_responder(config_r, store);

    // Honest single-stage pump; exactly eight messages in transmission order.
    let mut wire: Vec<Vec<u8>> = Vec::with_capacity(8);
    let mut to_resp: std::collections::VecDeque<Vec<u8>> =
        initiator.start(&mut rng)?.into_iter().collect();
    let mut to_init: std::collections::VecDeque<Vec<u8>> = std::collections::VecDeque::new();
    while !(to_resp.is_empty() && to_init.is_empty()) {
        if let Some(m) = to_resp.pop_front() {
            wire.push(m.clone());
            to_init.extend(responder.process(&m, &mut rng)?);
        }
        if let Some(m) = to_init.pop_front() {
            wire.push(m.clone());
            to_resp.extend(initiator.process(&m, &mut rng)?);
        }
    }
    ensure!(
        initiator.accepted_stages() == 1 && responder.accepted_stages() == 1,
        "vector handshake did not complete"
    );
    ensure!(wire.len() == 8, "a stage exchanges exactly eight messages");

    let mut text = String::new();
    let w = &mut text;
    writeln!(w, "# muckle handshake test vectors")?;
    writeln!(w, "# suite = {}", params.suite_id)?;
    writeln!(w, "# seed = {}", params.seed)?;
    writeln!(
        w,
        "# label_binding = {}",
        match params.label_binding {
            LabelBinding::Table => "table",
            LabelBinding::Figure => "figure",
        }
    )?;
    writeln!(
        w,
        "# rats_mode = {}",
        match params.rats_mode {
            RatsMode::Figure => "figure",
            RatsMode::Uniform => "uniform",
        }
    )?;
    writeln!(w, "# stage = 1")?;
    for (name, value) in initiator.key_schedule().input_values() {
        writeln!(w, "{name} = {}", hex::encode(value))?;
    }
    for (i, msg) in wire.iter().enumerate() {
        writeln!(w, "m{} = {}", i + 1, hex::encode(msg))?;
    }
    let derived = initiator.key_schedule().derived_values();
    for (name, value) in &derived {
        writeln!(w, "{name} = {}", hex::encode(value))?;
    }
    // Both sides must agree before the file is worth anything.
    ensure!(
        derived == responder.key_schedule().derived_values(),
        "initiator and responder disagree on derived values"
    );
    Ok(text)
}
