//! Shared helpers for the integration suites: an independent straight-line
//! recomputation of the secret-derivation chain (written directly against
//! HMAC-SHA-256, deliberately not reusing the library's schedule code), a
//! deterministic session-pair builder, and message pumps for honest and
//! tampered stage runs.

use std::collections::VecDeque;

use hmac::{Hmac, Mac as _};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use muckle_core::crypto::suite;
use muckle_core::error::RejectReason;
use muckle_core::keyschedule::{LabelBinding, RatsMode};
use muckle_core::protocol::{generate_identity, Session, SessionConfig, TrustStore};
use muckle_core::qkd::{MissPolicy, QkdStore};

pub fn rng(seed: u64) -> ChaCha20Rng {
    let mut s = [0u8; 32];
    s[..8].copy_from_slice(&seed.to_le_bytes());
    ChaCha20Rng::from_seed(s)
}

// ---------------------------------------------------------------------------
// Straight-line reference computation of the full derivation chain.
// ---------------------------------------------------------------------------

pub struct ScheduleInputs {
    pub ss_c: Vec<u8>,
    pub ss_pq: Vec<u8>,
    pub k_q: Vec<u8>,
    pub ss_i: Vec<u8>,
    pub ss_r: Vec<u8>,
    pub sec_state_in: Vec<u8>,
    pub messages: Vec<Vec<u8>>,
    pub figure_binding: bool,
    pub uniform_rats: bool,
}

pub struct ScheduleOutputs {
    /// Transcript digests over messages 1..=0, 1..=2, 1..=4, 1..=6, 1..=7,
    /// and 1..=8, in that order.
    pub digests: [Vec<u8>; 6],
    /// All nineteen derived values as `(name, bytes)`, in derivation order,
    /// using the same names the library reports.
    pub values: Vec<(&'static str, Vec<u8>)>,
}

fn prf(key: &[u8], label: &[u8], context: &[u8]) -> Vec<u8> {
    let mut mac = <Hmac<Sha256> as hmac::Mac>::new_from_slice(key).expect("any key length");
    mac.update(label);
    mac.update(context);
    mac.finalize().into_bytes().to_vec()
}

fn digest_of(messages: &[Vec<u8>]) -> Vec<u8> {
    let mut h = Sha256::new();
    for m in messages {
        h.update(m);
    }
    h.finalize().to_vec()
}

/// Recompute every schedule value with explicit, sequential code. Each line
/// mirrors one derivation; nothing is table-driven or shared with the
/// library implementation.
pub fn straight_line_schedule(inp: &ScheduleInputs) -> ScheduleOutputs {
    assert_eq!(inp.messages.len(), 8, "the chain spans an eight-message stage");

    let h0 = digest_of(&[]);
    let h1 = digest_of(&inp.messages[..2]);
    let h2 = digest_of(&inp.messages[..4]);
    let h3 = digest_of(&inp.messages[..6]);
    let h4 = digest_of(&inp.messages[..7]);
    let h5 = digest_of(&inp.messages[..8]);

    let k_c = prf(&inp.ss_c, b"derive k c", &h1);
    let k_pq = prf(&inp.ss_pq, b"derive k pq", &h1);
    let k0 = prf(&k_pq, b"first ck", &h1);
    let k1 = prf(&k_c, b"second ck", &k0);
    let k2 = prf(&inp.k_q, b"third ck", &k1);
    let k3 = prf(&inp.sec_state_in, b"fourth ck", &k2);

    let (ihts, rhts, dhs) = if inp.figure_binding {
        (
            prf(&k3, b"r hs traffic", &h1),
            prf(&k3, b"hs derived", &h1),
            prf(&k3, b"i hs traffic", &h0),
        )
    } else {
        (
            prf(&k3, b"i hs traffic", &h1),
            prf(&k3, b"r hs traffic", &h1),
            prf(&k3, b"hs derived", &h0),
        )
    };

    let ahs = prf(&dhs, b"first ak", &inp.ss_i);
    let iahts = prf(&ahs, b"i ahs traffic", &h2);
    let rahts = prf(&ahs, b"r ahs traffic", &h2);
    let dahs = prf(&ahs, b"ahs derived", &h0);

    let ms = prf(&dahs, b"second ak", &inp.ss_r);
    let fk_i = prf(&ms, b"derive i fk", &h3);
    let fk_r = prf(&ms, b"derive r fk", &h3);

    let iats = prf(&ms, b"i app traffic", &h4);
    let rats = if inp.uniform_rats {
        prf(&ms, b"r app traffic", &h5)
    } else {
        prf(&dahs, b"r app traffic", &h5)
    };
    let sec_state_next = prf(&ms, b"secstate", &h5);

    ScheduleOutputs {
        digests: [h0, h1, h2, h3, h4, h5],
        values: vec![
            ("k_c", k_c),
            ("k_pq", k_pq),
            ("k0", k0),
            ("k1", k1),
            ("k2", k2),
            ("k3", k3),
            ("ihts", ihts),
            ("rhts", rhts),
            ("dhs", dhs),
            ("ahs", ahs),
            ("iahts", iahts),
            ("rahts", rahts),
            ("dahs", dahs),
            ("ms", ms),
            ("fk_i", fk_i),
            ("fk_r", fk_r),
            ("iats", iats),
            ("rats", rats),
            ("sec_state_next", sec_state_next),
        ],
    }
}

// ---------------------------------------------------------------------------
// Session-pair construction and message pumps.
// ---------------------------------------------------------------------------

pub struct Pair {
    pub init: Session,
    pub resp: Session,
}

pub struct PairParams {
    pub suite_id: String,
    pub binding: LabelBinding,
    pub rats: RatsMode,
    /// Attestation blob embedded in both certificates.
    pub attestation: Vec<u8>,
}

impl PairParams {
    pub fn new(suite_id: &str) -> PairParams {
        PairParams {
            suite_id: suite_id.to_string(),
            binding: LabelBinding::default(),
            rats: RatsMode::default(),
            attestation: Vec::new(),
        }
    }
}

/// Build an initiator/responder pair with mutually pinned certificates and a
/// fresh strict QKD store holding one open link. All key material is drawn
/// from `rng`, so a seed fully determines the pair.
pub fn build_pair_with(params: &PairParams, rng: &mut ChaCha20Rng) -> Pair {
    let suite = suite(&params.suite_id).expect("known suite id");
    let mut store_seed = [0u8; 32];
    rand_core::RngCore::fill_bytes(rng, &mut store_seed);
    let store = QkdStore::with_seed(store_seed, MissPolicy::Strict);
    store.open_link("alice", "bob");

    let (cert_i, sk_i) = generate_identity(&suite, "alice", "test-ca", params.attestation.clone(), rng);
    let (cert_r, sk_r) = generate_identity(&suite, "bob", "test-ca", params.attestation.clone(), rng);
    let trust = TrustStore::Pinned(vec![cert_i.clone(), cert_r.clone()]);

    let mut config_i = SessionConfig::new(
        "alice",
        "bob",
        suite.clone(),
        cert_i,
        sk_i,
        trust.clone(),
    );
    config_i.label_binding = params.binding;
    config_i.rats_mode = params.rats;
    let mut config_r = SessionConfig::new("bob", "alice", suite, cert_r, sk_r, trust);
    config_r.label_binding = params.binding;
    config_r.rats_mode = params.rats;

    Pair {
        init: Session::new_initiator(config_i, store.clone()),
        resp: Session::new_responder(config_r, store),
    }
}

pub fn build_pair(suite_id: &str, rng: &mut ChaCha20Rng) -> Pair {
    build_pair_with(&PairParams::new(suite_id), rng)
}

/// Drive one full stage with every message delivered verbatim. Panics if any
/// step rejects. Returns the eight wire messages in transmission order.
pub fn run_honest_stage(pair: &mut Pair, rng: &mut ChaCha20Rng) -> Vec<Vec<u8>> {
    let before_i = pair.init.accepted_stages();
    let before_r = pair.resp.accepted_stages();
    let result = run_stage_with(pair, rng, None);
    assert!(
        result.init_reject.is_none() && result.resp_reject.is_none(),
        "honest stage rejected: init {:?} resp {:?}",
        result.init_reject,
        result.resp_reject
    );
    assert_eq!(pair.init.accepted_stages(), before_i + 1);
    assert_eq!(pair.resp.accepted_stages(), before_r + 1);
    assert_eq!(result.wire.len(), 8);
    result.wire
}

/// Flip `mask` into byte `byte` of the `msg_index`-th message (0-based) in
/// flight.
#[derive(Debug, Clone, Copy)]
pub struct TamperSpec {
    pub msg_index: usize,
    pub byte: usize,
    pub mask: u8,
}

pub struct StageRun {
    /// Messages as actually delivered, tampered form included.
    pub wire: Vec<Vec<u8>>,
    pub init_reject: Option<RejectReason>,
    pub resp_reject: Option<RejectReason>,
}

/// Pump one stage through both sessions, optionally tampering one byte of
/// one message in flight, until all queued messages are consumed or a side
/// rejects. The pump stops at the first reject; the peer's queued flights
/// are discarded at that point (the connection is torn down).
pub fn run_stage_with(
    pair: &mut Pair,
    rng: &mut ChaCha20Rng,
    tamper: Option<TamperSpec>,
) -> StageRun {
    let mut wire: Vec<Vec<u8>> = Vec::new();
    let mut to_resp: VecDeque<Vec<u8>> = VecDeque::new();
    let mut to_init: VecDeque<Vec<u8>> = VecDeque::new();

    match pair.init.start(rng) {
        Ok(out) => to_resp.extend(out),
        Err(_) => {
            return StageRun {
                wire,
                init_reject: pair.init.reject_reason(),
                resp_reject: pair.resp.reject_reason(),
            }
        }
    }

    while !(to_resp.is_empty() && to_init.is_empty()) {
        if let Some(mut m) = to_resp.pop_front() {
            apply_tamper(&mut m, wire.len(), tamper);
            wire.push(m.clone());
            match pair.resp.process(&m, rng) {
                Ok(out) => to_init.extend(out),
                Err(_) => break,
            }
        }
        if let Some(mut m) = to_init.pop_front() {
            apply_tamper(&mut m, wire.len(), tamper);
            wire.push(m.clone());
            match pair.init.process(&m, rng) {
                Ok(out) => to_resp.extend(out),
                Err(_) => break,
            }
        }
    }

    StageRun {
        wire,
        init_reject: pair.init.reject_reason(),
        resp_reject: pair.resp.reject_reason(),
    }
}

fn apply_tamper(m: &mut [u8], index: usize, tamper: Option<TamperSpec>) {
    if let Some(t) = tamper {
        if t.msg_index == index {
            m[t.byte] ^= t.mask;
        }
    }
}
