//! The staged secret-derivation chain: transcript hashes, the label table,
//! chaining keys, traffic secrets, finished keys, master secret, and the
//! next-stage secret state.
//!
//! Derivation is monotone: every value is written exactly once, and only
//! after its dependencies exist. Requesting or deriving anything out of
//! order fails with a schedule-order error instead of yielding garbage.
//!
//! All derivations evaluate the suite's dual PRF as `F(key, label ‖ context)`
//! with raw byte concatenation — no extra length framing — and ASCII labels.

use std::sync::Arc;

use crate::crypto::{AeadScheme, DualPrf, HashScheme};
use crate::error::ProtocolError;

/// The 19 derivation labels, in index order. All pairwise distinct; the
/// handshake only needs uniqueness, and these spellings follow the TLS 1.3
/// naming tradition the schedule descends from.
pub const LABELS: [&[u8]; 19] = [
    b"derive k c",
    b"derive k pq",
    b"first ck",
    b"second ck",
    b"third ck",
    b"fourth ck",
    b"i hs traffic",
    b"r hs traffic",
    b"hs derived",
    b"first ak",
    b"i ahs traffic",
    b"r ahs traffic",
    b"ahs derived",
    b"second ak",
    b"derive i fk",
    b"derive r fk",
    b"i app traffic",
    b"r app traffic",
    b"secstate",
];

/// Which label strings feed the three handshake-traffic derivations.
///
/// Labels 6–8 can bind to IHTS/RHTS/dHS in two orders; both are supported.
/// `Table` binds by label semantics (IHTS gets "i hs traffic", RHTS gets
/// "r hs traffic", dHS gets "hs derived") and is the default.
/// `Figure` reproduces the alternative index assignment (IHTS ← label 7,
/// RHTS ← label 8, dHS ← label 6) for auditability. Both peers must agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelBinding {
    #[default]
    Table,
    Figure,
}

/// Which upstream secret keys the responder application-traffic secret.
///
/// `Figure` (default) derives RATS from dAHS; `Uniform` derives it from the
/// master secret like IATS. Both peers must agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RatsMode {
    #[default]
    Figure,
    Uniform,
}

/// Running transcript of wire messages with cached boundary digests.
///
/// Digest `H0` is the hash of the empty string and always available; `H1`
/// covers messages 1–2, `H2` covers 1–4, `H3` covers 1–6, `H4` covers 1–7,
/// and `H5` covers 1–8. A digest is readable only once every message it
/// covers has been recorded. Messages are hashed exactly as transmitted
/// (headers included; ciphertext form for the encrypted ones).
pub struct Transcript {
    hash: Arc<dyn HashScheme>,
    buf: Vec<u8>,
    count: usize,
    digests: [Option<Vec<u8>>; 6],
}

/// Number of wire messages after which each digest H1..H5 becomes available.
const DIGEST_BOUNDARIES: [usize; 5] = [2, 4, 6, 7, 8];

impl Transcript {
    pub fn new(hash: Arc<dyn HashScheme>) -> Self {
        let h0 = hash.hash(b"");
        let mut digests: [Option<Vec<u8>>; 6] = Default::default();
        digests[0] = Some(h0);
        Transcript {
            hash,
            buf: Vec::new(),
            count: 0,
            digests,
        }
    }

    /// Record wire message number `index` (1-based). Messages must be
    /// recorded strictly in order.
    pub fn record(&mut self, index: usize, wire: &[u8]) -> Result<(), ProtocolError> {
        if index != self.count + 1 || index > 8 {
            return Err(ProtocolError::ScheduleOrder(
                "transcript messages must be recorded in order 1..=8",
            ));
        }
        self.buf.extend_from_slice(wire);
        self.count = index;
        for (slot, boundary) in DIGEST_BOUNDARIES.iter().enumerate() {
            if *boundary == index {
                self.digests[slot + 1] = Some(self.hash.hash(&self.buf));
            }
        }
        Ok(())
    }

    pub fn message_count(&self) -> usize {
        self.count
    }

    /// Digest `H<i>` for `i` in 0..=5, if its messages are all recorded.
    pub fn digest(&self, i: usize) -> Result<&[u8], ProtocolError> {
        self.digests
            .get(i)
            .and_then(|d| d.as_deref())
            .ok_or(ProtocolError::ScheduleOrder("transcript digest not yet available"))
    }
}

/// One stage's secret-derivation state: write-once inputs, write-once
/// derived values, and the staged derivation steps connecting them.
pub struct KeySchedule {
    prf: Arc<dyn DualPrf>,
    binding: LabelBinding,
    rats_mode: RatsMode,

    // Inputs. `sec_state_in` is fixed at construction (empty on the first
    // stage); the shared secrets arrive as the handshake progresses. An
    // empty `ss_c` is a real value: it encodes "no classical KEM".
    sec_state_in: Vec<u8>,
    ss_c: Option<Vec<u8>>,
    ss_pq: Option<Vec<u8>>,
    k_q: Option<Vec<u8>>,
    ss_i: Option<Vec<u8>>,
    ss_r: Option<Vec<u8>>,

    // Derived values, in chain order.
    k_c: Option<Vec<u8>>,
    k_pq: Option<Vec<u8>>,
    k0: Option<Vec<u8>>,
    k1: Option<Vec<u8>>,
    k2: Option<Vec<u8>>,
    k3: Option<Vec<u8>>,
    ihts: Option<Vec<u8>>,
    rhts: Option<Vec<u8>>,
    dhs: Option<Vec<u8>>,
    ahs: Option<Vec<u8>>,
    iahts: Option<Vec<u8>>,
    rahts: Option<Vec<u8>>,
    dahs: Option<Vec<u8>>,
    ms: Option<Vec<u8>>,
    fk_i: Option<Vec<u8>>,
    fk_r: Option<Vec<u8>>,
    iats: Option<Vec<u8>>,
    rats: Option<Vec<u8>>,
    sec_state_next: Option<Vec<u8>>,
}

fn set_once(
    slot: &mut Option<Vec<u8>>,
    value: Vec<u8>,
    name: &'static str,
) -> Result<(), ProtocolError> {
    if slot.is_some() {
        return Err(ProtocolError::ScheduleOrder(name));
    }
    *slot = Some(value);
    Ok(())
}

fn get<'a>(slot: &'a Option<Vec<u8>>, name: &'static str) -> Result<&'a [u8], ProtocolError> {
    slot.as_deref().ok_or(ProtocolError::ScheduleOrder(name))
}

impl KeySchedule {
    pub fn new(
        prf: Arc<dyn DualPrf>,
        binding: LabelBinding,
        rats_mode: RatsMode,
        sec_state_in: Vec<u8>,
    ) -> Self {
        KeySchedule {
            prf,
            binding,
            rats_mode,
            sec_state_in,
            ss_c: None,
            ss_pq: None,
            k_q: None,
            ss_i: None,
            ss_r: None,
            k_c: None,
            k_pq: None,
            k0: None,
            k1: None,
            k2: None,
            k3: None,
            ihts: None,
            rhts: None,
            dhs: None,
            ahs: None,
            iahts: None,
            rahts: None,
            dahs: None,
            ms: None,
            fk_i: None,
            fk_r: None,
            iats: None,
            rats: None,
            sec_state_next: None,
        }
    }

    /// Classical shared secret; pass an empty slice when no classical KEM
    /// is configured.
    pub fn set_ss_c(&mut self, v: &[u8]) -> Result<(), ProtocolError> {
        set_once(&mut self.ss_c, v.to_vec(), "ss_c already set")
    }
    pub fn set_ss_pq(&mut self, v: &[u8]) -> Result<(), ProtocolError> {
        set_once(&mut self.ss_pq, v.to_vec(), "ss_pq already set")
    }
    pub fn set_k_q(&mut self, v: &[u8]) -> Result<(), ProtocolError> {
        set_once(&mut self.k_q, v.to_vec(), "k_q already set")
    }
    pub fn set_ss_i(&mut self, v: &[u8]) -> Result<(), ProtocolError> {
        set_once(&mut self.ss_i, v.to_vec(), "ss_i already set")
    }
    pub fn set_ss_r(&mut self, v: &[u8]) -> Result<(), ProtocolError> {
        set_once(&mut self.ss_r, v.to_vec(), "ss_r already set")
    }

    fn f(&self, key: &[u8], label: &[u8], context: &[u8]) -> Vec<u8> {
        let mut input = Vec::with_capacity(label.len() + context.len());
        input.extend_from_slice(label);
        input.extend_from_slice(context);
        self.prf.eval(key, &input)
    }

    /// First derivation block: chaining keys and handshake-traffic secrets.
    /// Needs `ss_c`, `ss_pq`, `k_q`, and the digest over messages 1–2.
    pub fn derive_handshake_secrets(&mut self, ts: &Transcript) -> Result<(), ProtocolError> {
        if self.k_c.is_some() {
            return Err(ProtocolError::ScheduleOrder("handshake secrets already derived"));
        }
        let ss_c = get(&self.ss_c, "ss_c not set")?.to_vec();
        let ss_pq = get(&self.ss_pq, "ss_pq not set")?.to_vec();
        let k_q = get(&self.k_q, "k_q not set")?.to_vec();
        let h0 = ts.digest(0)?.to_vec();
        let h1 = ts.digest(1)?.to_vec();

        let (l_ihts, l_rhts, l_dhs) = match self.binding {
            LabelBinding::Table => (LABELS[6], LABELS[7], LABELS[8]),
            LabelBinding::Figure => (LABELS[7], LABELS[8], LABELS[6]),
        };

        let k_c = self.f(&ss_c, LABELS[0], &h1);
        let k_pq = self.f(&ss_pq, LABELS[1], &h1);
        let k0 = self.f(&k_pq, LABELS[2], &h1);
        let k1 = self.f(&k_c, LABELS[3], &k0);
        let k2 = self.f(&k_q, LABELS[4], &k1);
        let k3 = self.f(&self.sec_state_in.clone(), LABELS[5], &k2);
        let ihts = self.f(&k3, l_ihts, &h1);
        let rhts = self.f(&k3, l_rhts, &h1);
        let dhs = self.f(&k3, l_dhs, &h0);

        self.k_c = Some(k_c);
        self.k_pq = Some(k_pq);
        self.k0 = Some(k0);
        self.k1 = Some(k1);
        self.k2 = Some(k2);
        self.k3 = Some(k3);
        self.ihts = Some(ihts);
        self.rhts = Some(rhts);
        self.dhs = Some(dhs);
        Ok(())
    }

    /// Second block: authenticated-handshake secrets. Needs `dHS`, `ss_i`,
    /// and the digest over messages 1–4.
    pub fn derive_authenticated_secrets(&mut self, ts: &Transcript) -> Result<(), ProtocolError> {
        if self.ahs.is_some() {
            return Err(ProtocolError::ScheduleOrder(
                "authenticated secrets already derived",
            ));
        }
        let dhs = get(&self.dhs, "dHS not derived")?.to_vec();
        let ss_i = get(&self.ss_i, "ss_i not set")?.to_vec();
        let h0 = ts.digest(0)?.to_vec();
        let h2 = ts.digest(2)?.to_vec();

        let ahs = self.f(&dhs, LABELS[9], &ss_i);
        let iahts = self.f(&ahs, LABELS[10], &h2);
        let rahts = self.f(&ahs, LABELS[11], &h2);
        let dahs = self.f(&ahs, LABELS[12], &h0);

        self.ahs = Some(ahs);
        self.iahts = Some(iahts);
        self.rahts = Some(rahts);
        self.dahs = Some(dahs);
        Ok(())
    }

    /// Third block: master secret and finished keys. Needs `dAHS`, `ss_r`,
    /// and the digest over messages 1–6.
    pub fn derive_master_and_finished(&mut self, ts: &Transcript) -> Result<(), ProtocolError> {
        if self.ms.is_some() {
            return Err(ProtocolError::ScheduleOrder("master secret already derived"));
        }
        let dahs = get(&self.dahs, "dAHS not derived")?.to_vec();
        let ss_r = get(&self.ss_r, "ss_r not set")?.to_vec();
        let h3 = ts.digest(3)?.to_vec();

        let ms = self.f(&dahs, LABELS[13], &ss_r);
        let fk_i = self.f(&ms, LABELS[14], &h3);
        let fk_r = self.f(&ms, LABELS[15], &h3);

        self.ms = Some(ms);
        self.fk_i = Some(fk_i);
        self.fk_r = Some(fk_r);
        Ok(())
    }

    /// Initiator application-traffic secret. Needs the master secret and the
    /// digest over messages 1–7.
    pub fn derive_application_traffic(&mut self, ts: &Transcript) -> Result<(), ProtocolError> {
        if self.iats.is_some() {
            return Err(ProtocolError::ScheduleOrder("IATS already derived"));
        }
        let ms = get(&self.ms, "MS not derived")?.to_vec();
        let h4 = ts.digest(4)?.to_vec();
        self.iats = Some(self.f(&ms, LABELS[16], &h4));
        Ok(())
    }

    /// Responder application-traffic secret and next-stage secret state.
    /// Needs the master secret (and `dAHS` in the default RATS mode) and the
    /// digest over messages 1–8.
    pub fn derive_final_state(&mut self, ts: &Transcript) -> Result<(), ProtocolError> {
        if self.rats.is_some() {
            return Err(ProtocolError::ScheduleOrder("final state already derived"));
        }
        let ms = get(&self.ms, "MS not derived")?.to_vec();
        let h5 = ts.digest(5)?.to_vec();
        let rats_key = match self.rats_mode {
            RatsMode::Figure => get(&self.dahs, "dAHS not derived")?.to_vec(),
            RatsMode::Uniform => ms.clone(),
        };
        self.rats = Some(self.f(&rats_key, LABELS[17], &h5));
        self.sec_state_next = Some(self.f(&ms, LABELS[18], &h5));
        Ok(())
    }

    pub fn ihts(&self) -> Result<&[u8], ProtocolError> {
        get(&self.ihts, "IHTS not derived")
    }
    pub fn rhts(&self) -> Result<&[u8], ProtocolError> {
        get(&self.rhts, "RHTS not derived")
    }
    pub fn iahts(&self) -> Result<&[u8], ProtocolError> {
        get(&self.iahts, "IAHTS not derived")
    }
    pub fn rahts(&self) -> Result<&[u8], ProtocolError> {
        get(&self.rahts, "RAHTS not derived")
    }
    pub fn ms(&self) -> Result<&[u8], ProtocolError> {
        get(&self.ms, "MS not derived")
    }
    pub fn fk_i(&self) -> Result<&[u8], ProtocolError> {
        get(&self.fk_i, "fk_i not derived")
    }
    pub fn fk_r(&self) -> Result<&[u8], ProtocolError> {
        get(&self.fk_r, "fk_r not derived")
    }
    pub fn iats(&self) -> Result<&[u8], ProtocolError> {
        get(&self.iats, "IATS not derived")
    }
    pub fn rats(&self) -> Result<&[u8], ProtocolError> {
        get(&self.rats, "RATS not derived")
    }
    pub fn sec_state_next(&self) -> Result<&[u8], ProtocolError> {
        get(&self.sec_state_next, "next secret state not derived")
    }

    /// All input secrets currently set, as `(name, bytes)` pairs.
    pub fn input_values(&self) -> Vec<(&'static str, Vec<u8>)> {
        let mut out = vec![("sec_state_in", self.sec_state_in.clone())];
        for (name, slot) in [
            ("ss_c", &self.ss_c),
            ("ss_pq", &self.ss_pq),
            ("k_q", &self.k_q),
            ("ss_i", &self.ss_i),
            ("ss_r", &self.ss_r),
        ] {
            if let Some(v) = slot {
                out.push((name, v.clone()));
            }
        }
        out
    }

    /// All derived values currently set, in chain order.
    pub fn derived_values(&self) -> Vec<(&'static str, Vec<u8>)> {
        [
            ("k_c", &self.k_c),
            ("k_pq", &self.k_pq),
            ("k0", &self.k0),
            ("k1", &self.k1),
            ("k2", &self.k2),
            ("k3", &self.k3),
            ("ihts", &self.ihts),
            ("rhts", &self.rhts),
            ("dhs", &self.dhs),
            ("ahs", &self.ahs),
            ("iahts", &self.iahts),
            ("rahts", &self.rahts),
            ("dahs", &self.dahs),
            ("ms", &self.ms),
            ("fk_i", &self.fk_i),
            ("fk_r", &self.fk_r),
            ("iats", &self.iats),
            ("rats", &self.rats),
            ("sec_state_next", &self.sec_state_next),
        ]
        .into_iter()
        .filter_map(|(name, slot)| slot.as_ref().map(|v| (name, v.clone())))
        .collect()
    }
}

/// AEAD key material expanded from one traffic secret.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficKeys {
    pub key: Vec<u8>,
    pub iv_base: Vec<u8>,
}

/// Expand a traffic secret into an AEAD key and nonce base:
/// `key = F(secret, "key")` and `iv_base = F(secret, "iv")`, each truncated
/// to the AEAD's declared length.
pub fn traffic_key_expand(
    secret: &[u8],
    aead: &dyn AeadScheme,
    prf: &dyn DualPrf,
) -> TrafficKeys {
    let mut key = prf.eval(secret, b"key");
    key.truncate(aead.key_len());
    let mut iv_base = prf.eval(secret, b"iv");
    iv_base.truncate(aead.nonce_len());
    TrafficKeys { key, iv_base }
}

/// Per-record nonce: the base IV XORed with the record sequence number as a
/// big-endian 64-bit value, right-aligned into the nonce.
pub fn record_nonce(iv_base: &[u8], seq: u64) -> Vec<u8> {
    let mut nonce = iv_base.to_vec();
    let seq_bytes = seq.to_be_bytes();
    let n = nonce.len();
    let take = seq_bytes.len().min(n);
    for i in 0..take {
        nonce[n - take + i] ^= seq_bytes[8 - take + i];
    }
    nonce
}

/// Line-oriented test-vector format: one `name = hex` pair per line.
/// Lines starting with `#` and blank lines are ignored when parsing.
pub mod vectors {
    /// Render pairs into the vector file format.
    pub fn format_lines(pairs: &[(String, Vec<u8>)]) -> String {
        let mut out = String::new();
        for (name, bytes) in pairs {
            out.push_str(name);
            out.push_str(" = ");
            out.push_str(&hex::encode(bytes));
            out.push('\n');
        }
        out
    }

    /// Parse the vector file format back into pairs.
    pub fn parse_lines(s: &str) -> Result<Vec<(String, Vec<u8>)>, String> {
        let mut out = Vec::new();
        for (lineno, line) in s.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: missing '='", lineno + 1))?;
            let bytes = hex::decode(value.trim())
                .map_err(|e| format!("line {}: bad hex: {e}", lineno + 1))?;
            out.push((name.trim().to_string(), bytes));
        }
        Ok(out)
    }
}
