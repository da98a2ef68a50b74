//! The hybrid-handshake session state machine.
//!
//! A [`Session`] is a synchronous message-in/messages-out driver for one
//! party. The transport feeds it raw wire bytes via [`Session::process`]
//! (the initiator first emits its opening flight from [`Session::start`]);
//! it returns the wire bytes to send back. Eight messages complete a stage:
//!
//! 1. initiator → responder: ephemeral public keys, nonce, QKD key id
//! 2. responder → initiator: ephemeral ciphertexts, nonce
//! 3. responder → initiator: responder certificate (encrypted)
//! 4. initiator → responder: long-term-KEM ciphertext to the responder key
//! 5. initiator → responder: initiator certificate (encrypted)
//! 6. responder → initiator: long-term-KEM ciphertext to the initiator key
//! 7. initiator → responder: key-confirmation MAC over the transcript
//! 8. responder → initiator: key-confirmation MAC over the transcript
//!
//! Authentication is implicit via the long-term KEM (each side proves it can
//! decapsulate to its certified key) and made explicit by the two MACs. A
//! party never accepts before verifying its peer's MAC. Any failure moves
//! the stage to a terminal reject state carrying a machine-readable reason.
//!
//! Accepted stages chain: the derived secret state seeds the next stage's
//! key schedule, so each stage's keys depend on every earlier stage.

use std::sync::Arc;

use rand_core::CryptoRngCore;

use crate::crypto::{check_len, CipherSuite};
use crate::error::{ProtocolError, RejectReason, WireError};
use crate::keyschedule::{
    record_nonce, traffic_key_expand, KeySchedule, LabelBinding, RatsMode, Transcript,
};
use crate::qkd::{QkdClient, QKD_KEY_ID_LEN};
use crate::wire::{
    framed_len, record_ad, Certificate, HelloInit, HelloResp, Message, Record, MSG_HEADER_LEN,
    NONCE_LEN, RECORD_OVERHEAD,
};

/// Pluggable attestation check for certificate chains.
pub trait CertVerifier: Send + Sync {
    /// Return `Err` with a human-readable reason to reject the certificate.
    fn verify(&self, cert: &Certificate) -> Result<(), String>;
}

/// How a peer certificate is judged trustworthy.
///
/// `Pinned` accepts only certificates that byte-for-byte equal a stored
/// entry (attestation bytes are carried but not interpreted). `Verifier`
/// delegates to an injected attestation checker, which is how a real
/// signature-chain PKI plugs in.
#[derive(Clone)]
pub enum TrustStore {
    Pinned(Vec<Certificate>),
    Verifier(Arc<dyn CertVerifier>),
}

impl std::fmt::Debug for TrustStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrustStore::Pinned(certs) => f.debug_tuple("Pinned").field(&certs.len()).finish(),
            TrustStore::Verifier(_) => f.write_str("Verifier(..)"),
        }
    }
}

/// Everything one party needs to run sessions: identities, algorithms,
/// long-term credentials, trust anchors, and schedule variant flags.
#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub self_id: String,
    pub peer_id: String,
    pub suite: CipherSuite,
    pub certificate: Certificate,
    /// Secret key matching `certificate.public_key` under the suite's
    /// long-term KEM.
    pub long_term_secret: Vec<u8>,
    pub trust: TrustStore,
    pub label_binding: LabelBinding,
    pub rats_mode: RatsMode,
}

impl SessionConfig {
    pub fn new(
        self_id: impl Into<String>,
        peer_id: impl Into<String>,
        suite: CipherSuite,
        certificate: Certificate,
        long_term_secret: Vec<u8>,
        trust: TrustStore,
    ) -> Self {
        SessionConfig {
            self_id: self_id.into(),
            peer_id: peer_id.into(),
            suite,
            certificate,
            long_term_secret,
            trust,
            label_binding: LabelBinding::default(),
            rats_mode: RatsMode::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Initiator,
    Responder,
}

/// Stage status. `Pending` before the stage's first message, `Active`
/// mid-handshake, then exactly one of `Accepted` or `Rejected` — a rejected
/// stage never recovers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pending,
    Active,
    Accepted,
    Rejected(RejectReason),
}

/// What an accepted stage outputs: the 64-byte stage key (initiator and
/// responder application-traffic secrets concatenated) and the secret state
/// seeding the next stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutput {
    pub key: Vec<u8>,
    pub sec_state: Vec<u8>,
}

/// Per-stage ephemeral secret material, exposed for the security-model
/// compromise queries. Each field holds the most-evolved form known: a
/// generated secret key until decapsulation, then the shared secret.
#[derive(Debug, Clone, Default)]
pub struct EphemeralSecrets {
    /// Post-quantum ephemeral secret.
    pub pq: Option<Vec<u8>>,
    /// Classical ephemeral secret (empty bytes when no classical KEM).
    pub classical: Option<Vec<u8>>,
    /// The out-of-band quantum key for this stage.
    pub quantum: Option<Vec<u8>>,
}

/// One party's protocol endpoint across all stages of a session.
pub struct Session {
    config: SessionConfig,
    qkd: Arc<dyn QkdClient>,
    role: Role,
    stid: u32,
    status: Status,
    /// Message number the peer must send next; 0 when nothing is expected.
    next_expected: u8,
    transcript: Transcript,
    ks: KeySchedule,
    /// Wire bytes sent / received, per stage (index `stid - 1`).
    sent: Vec<Vec<Vec<u8>>>,
    received: Vec<Vec<Vec<u8>>>,
    eph: Vec<EphemeralSecrets>,
    /// Outputs of accepted stages, in stage order.
    stage_keys: Vec<StageOutput>,
}

impl Session {
    pub fn new(role: Role, config: SessionConfig, qkd: Arc<dyn QkdClient>) -> Session {
        let transcript = Transcript::new(config.suite.hash.clone());
        let ks = KeySchedule::new(
            config.suite.prf.clone(),
            config.label_binding,
            config.rats_mode,
            Vec::new(),
        );
        let next_expected = match role {
            Role::Initiator => 0,
            Role::Responder => 1,
        };
        Session {
            config,
            qkd,
            role,
            stid: 1,
            status: Status::Pending,
            next_expected,
            transcript,
            ks,
            sent: vec![Vec::new()],
            received: vec![Vec::new()],
            eph: vec![EphemeralSecrets::default()],
            stage_keys: Vec::new(),
        }
    }

    pub fn new_initiator(config: SessionConfig, qkd: Arc<dyn QkdClient>) -> Session {
        Session::new(Role::Initiator, config, qkd)
    }

    pub fn new_responder(config: SessionConfig, qkd: Arc<dyn QkdClient>) -> Session {
        Session::new(Role::Responder, config, qkd)
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn reject_reason(&self) -> Option<RejectReason> {
        match self.status {
            Status::Rejected(reason) => Some(reason),
            _ => None,
        }
    }

    /// Current stage counter, 1-based.
    pub fn current_stage(&self) -> u32 {
        self.stid
    }

    /// Number of stages that have reached accept.
    pub fn accepted_stages(&self) -> u32 {
        self.stage_keys.len() as u32
    }

    /// Stage key and next secret state for stage `stid` — available only
    /// once that stage accepted.
    pub fn stage_output(&self, stid: u32) -> Option<&StageOutput> {
        if stid == 0 {
            return None;
        }
        self.stage_keys.get(stid as usize - 1)
    }

    /// Wire bytes this party sent during stage `stid`, in order.
    pub fn sent_transcript(&self, stid: u32) -> &[Vec<u8>] {
        stage_slice(&self.sent, stid)
    }

    /// Wire bytes this party received during stage `stid`, in order.
    pub fn received_transcript(&self, stid: u32) -> &[Vec<u8>] {
        stage_slice(&self.received, stid)
    }

    /// Ephemeral secret material for stage `stid`.
    pub fn ephemeral_secrets(&self, stid: u32) -> Option<&EphemeralSecrets> {
        if stid == 0 {
            return None;
        }
        self.eph.get(stid as usize - 1)
    }

    /// Read access to the current stage's derivation state (for test
    /// vectors and schedule introspection).
    pub fn key_schedule(&self) -> &KeySchedule {
        &self.ks
    }

    /// Read access to the current stage's transcript digests.
    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    /// Initiator only: open the stage by emitting the first flight. If the
    /// previous stage accepted, the next stage begins automatically.
    pub fn start(&mut self, rng: &mut dyn CryptoRngCore) -> Result<Vec<Vec<u8>>, ProtocolError> {
        if let Status::Rejected(_) = self.status {
            return Err(ProtocolError::State("stage already rejected".into()));
        }
        match self.start_inner(rng) {
            Ok(out) => Ok(out),
            Err(err) => {
                self.status = Status::Rejected(err.reject_reason());
                Err(err)
            }
        }
    }

    /// Feed one received wire message; returns the messages to send back.
    /// On error the stage is rejected with the error's reason class.
    pub fn process(
        &mut self,
        wire: &[u8],
        rng: &mut dyn CryptoRngCore,
    ) -> Result<Vec<Vec<u8>>, ProtocolError> {
        if let Status::Rejected(_) = self.status {
            return Err(ProtocolError::State("stage already rejected".into()));
        }
        match self.step(wire, rng) {
            Ok(out) => Ok(out),
            Err(err) => {
                self.status = Status::Rejected(err.reject_reason());
                Err(err)
            }
        }
    }

    /// Explicitly move an accepted session to its next stage. [`Session::start`]
    /// and [`Session::process`] do this on their own when a new stage opens,
    /// so calling it is only needed to reset state eagerly.
    pub fn advance_stage(&mut self) -> Result<(), ProtocolError> {
        self.begin_next_stage()
    }

    fn start_inner(&mut self, rng: &mut dyn CryptoRngCore) -> Result<Vec<Vec<u8>>, ProtocolError> {
        if self.role != Role::Initiator {
            return Err(ProtocolError::State(
                "only the initiator opens a stage".into(),
            ));
        }
        match self.status {
            Status::Pending => {}
            Status::Accepted => self.begin_next_stage()?,
            Status::Active => {
                return Err(ProtocolError::State("handshake already in progress".into()))
            }
            Status::Rejected(_) => unreachable!("checked by caller"),
        }

        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut nonce);

        let classical_pk = match &self.config.suite.classical_kem {
            Some(kem) => {
                let kp = kem.keygen(rng);
                self.eph_mut().classical = Some(kp.secret_key);
                kp.public_key
            }
            None => Vec::new(),
        };
        let pq_kp = self.config.suite.pq_kem.keygen(rng);
        self.eph_mut().pq = Some(pq_kp.secret_key);

        let handle = self.qkd.get_key(&self.config.self_id, &self.config.peer_id)?;
        self.ks.set_k_q(&handle.key)?;
        self.eph_mut().quantum = Some(handle.key);

        let wire = Message::HelloInit(HelloInit {
            classical_pk,
            pq_pk: pq_kp.public_key,
            nonce,
            qkd_key_id: handle.key_id,
        })
        .encode()?;
        self.transcript.record(1, &wire)?;
        self.sent_mut().push(wire.clone());
        self.status = Status::Active;
        self.next_expected = 2;
        Ok(vec![wire])
    }

    fn step(
        &mut self,
        wire: &[u8],
        rng: &mut dyn CryptoRngCore,
    ) -> Result<Vec<Vec<u8>>, ProtocolError> {
        if self.status == Status::Accepted {
            // A fresh first message at the responder opens the next stage;
            // anything else on an accepted stage is a state error.
            if self.role == Role::Responder && wire.first() == Some(&1u8) {
                self.begin_next_stage()?;
            } else {
                return Err(ProtocolError::State(
                    "stage already accepted; no further messages expected".into(),
                ));
            }
        }

        let msg = Message::decode(wire)?;
        let msg_type = msg.msg_type();
        if msg_type != self.next_expected {
            return Err(ProtocolError::State(format!(
                "received message {msg_type} while expecting message {}",
                self.next_expected
            )));
        }
        self.transcript.record(msg_type as usize, wire)?;
        self.received_mut().push(wire.to_vec());
        self.status = Status::Active;

        match (self.role, msg) {
            (Role::Responder, Message::HelloInit(hello)) => self.handle_m1(hello, rng),
            (Role::Initiator, Message::HelloResp(resp)) => self.handle_m2(resp),
            (Role::Initiator, Message::Record(rec)) if rec.msg_type == 3 => {
                self.handle_m3(rec, rng)
            }
            (Role::Responder, Message::Record(rec)) if rec.msg_type == 4 => self.handle_m4(rec),
            (Role::Responder, Message::Record(rec)) if rec.msg_type == 5 => {
                self.handle_m5(rec, rng)
            }
            (Role::Initiator, Message::Record(rec)) if rec.msg_type == 6 => self.handle_m6(rec),
            (Role::Responder, Message::Record(rec)) if rec.msg_type == 7 => self.handle_m7(rec),
            (Role::Initiator, Message::Record(rec)) if rec.msg_type == 8 => self.handle_m8(rec),
            _ => Err(ProtocolError::State(
                "message is not valid for this role".into(),
            )),
        }
    }

    fn handle_m1(
        &mut self,
        hello: HelloInit,
        rng: &mut dyn CryptoRngCore,
    ) -> Result<Vec<Vec<u8>>, ProtocolError> {
        let suite = self.config.suite.clone();
        match &suite.classical_kem {
            Some(kem) => check_len(
                kem.alg_id(),
                "ephemeral public key",
                &hello.classical_pk,
                kem.public_key_len(),
            )?,
            None => {
                if !hello.classical_pk.is_empty() {
                    return Err(ProtocolError::Decode(WireError::FieldLength {
                        what: "classical public key",
                        got: hello.classical_pk.len(),
                        expected: 0,
                    }));
                }
            }
        }
        check_len(
            suite.pq_kem.alg_id(),
            "ephemeral public key",
            &hello.pq_pk,
            suite.pq_kem.public_key_len(),
        )?;

        let k_q = self.qkd.get_key_by_id(
            &self.config.self_id,
            &self.config.peer_id,
            &hello.qkd_key_id,
        )?;
        self.eph_mut().quantum = Some(k_q.clone());

        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        let (classical_ct, ss_c) = match &suite.classical_kem {
            Some(kem) => kem.encaps(&hello.classical_pk, rng)?,
            None => (Vec::new(), Vec::new()),
        };
        let (pq_ct, ss_pq) = suite.pq_kem.encaps(&hello.pq_pk, rng)?;
        self.eph_mut().classical = Some(ss_c.clone());
        self.eph_mut().pq = Some(ss_pq.clone());

        let m2 = Message::HelloResp(HelloResp {
            classical_ct,
            pq_ct,
            nonce,
        })
        .encode()?;
        self.transcript.record(2, &m2)?;
        self.sent_mut().push(m2.clone());

        self.ks.set_ss_c(&ss_c)?;
        self.ks.set_ss_pq(&ss_pq)?;
        self.ks.set_k_q(&k_q)?;
        self.ks.derive_handshake_secrets(&self.transcript)?;

        let cert_bytes = self.config.certificate.encode()?;
        let rhts = self.ks.rhts()?.to_vec();
        let m3 = self.seal_and_send(3, 0, &rhts, &cert_bytes)?;

        self.next_expected = 4;
        Ok(vec![m2, m3])
    }

    fn handle_m2(&mut self, resp: HelloResp) -> Result<Vec<Vec<u8>>, ProtocolError> {
        let suite = self.config.suite.clone();
        let ss_c = match &suite.classical_kem {
            Some(kem) => {
                check_len(
                    kem.alg_id(),
                    "ephemeral ciphertext",
                    &resp.classical_ct,
                    kem.ciphertext_len(),
                )?;
                let sk = self.take_eph_classical()?;
                kem.decaps(&sk, &resp.classical_ct)?
            }
            None => {
                if !resp.classical_ct.is_empty() {
                    return Err(ProtocolError::Decode(WireError::FieldLength {
                        what: "classical ciphertext",
                        got: resp.classical_ct.len(),
                        expected: 0,
                    }));
                }
                Vec::new()
            }
        };
        check_len(
            suite.pq_kem.alg_id(),
            "ephemeral ciphertext",
            &resp.pq_ct,
            suite.pq_kem.ciphertext_len(),
        )?;
        let sk_pq = self.take_eph_pq()?;
        let ss_pq = suite.pq_kem.decaps(&sk_pq, &resp.pq_ct)?;

        self.eph_mut().classical = Some(ss_c.clone());
        self.eph_mut().pq = Some(ss_pq.clone());
        self.ks.set_ss_c(&ss_c)?;
        self.ks.set_ss_pq(&ss_pq)?;
        self.ks.derive_handshake_secrets(&self.transcript)?;

        self.next_expected = 3;
        Ok(Vec::new())
    }

    fn handle_m3(
        &mut self,
        rec: Record,
        rng: &mut dyn CryptoRngCore,
    ) -> Result<Vec<Vec<u8>>, ProtocolError> {
        let rhts = self.ks.rhts()?.to_vec();
        let cert_bytes = self.open_record(&rec, &rhts, "message 3")?;
        let cert = self.check_peer_certificate(&cert_bytes)?;

        let (ct_i, ss_i) = self
            .config
            .suite
            .static_kem
            .encaps(&cert.public_key, rng)?;
        self.ks.set_ss_i(&ss_i)?;

        let ihts = self.ks.ihts()?.to_vec();
        let m4 = self.seal_and_send(4, 0, &ihts, &ct_i)?;

        self.ks.derive_authenticated_secrets(&self.transcript)?;
        let iahts = self.ks.iahts()?.to_vec();
        let own_cert = self.config.certificate.encode()?;
        let m5 = self.seal_and_send(5, 0, &iahts, &own_cert)?;

        self.next_expected = 6;
        Ok(vec![m4, m5])
    }

    fn handle_m4(&mut self, rec: Record) -> Result<Vec<Vec<u8>>, ProtocolError> {
        let ihts = self.ks.ihts()?.to_vec();
        let ct_i = self.open_record(&rec, &ihts, "message 4")?;
        let ss_i = self
            .config
            .suite
            .static_kem
            .decaps(&self.config.long_term_secret, &ct_i)?;
        self.ks.set_ss_i(&ss_i)?;
        self.ks.derive_authenticated_secrets(&self.transcript)?;
        self.next_expected = 5;
        Ok(Vec::new())
    }

    fn handle_m5(
        &mut self,
        rec: Record,
        rng: &mut dyn CryptoRngCore,
    ) -> Result<Vec<Vec<u8>>, ProtocolError> {
        let iahts = self.ks.iahts()?.to_vec();
        let cert_bytes = self.open_record(&rec, &iahts, "message 5")?;
        let cert = self.check_peer_certificate(&cert_bytes)?;

        let (ct_r, ss_r) = self
            .config
            .suite
            .static_kem
            .encaps(&cert.public_key, rng)?;
        self.ks.set_ss_r(&ss_r)?;

        let rahts = self.ks.rahts()?.to_vec();
        let m6 = self.seal_and_send(6, 0, &rahts, &ct_r)?;
        self.ks.derive_master_and_finished(&self.transcript)?;

        self.next_expected = 7;
        Ok(vec![m6])
    }

    fn handle_m6(&mut self, rec: Record) -> Result<Vec<Vec<u8>>, ProtocolError> {
        let rahts = self.ks.rahts()?.to_vec();
        let ct_r = self.open_record(&rec, &rahts, "message 6")?;
        let ss_r = self
            .config
            .suite
            .static_kem
            .decaps(&self.config.long_term_secret, &ct_r)?;
        self.ks.set_ss_r(&ss_r)?;
        self.ks.derive_master_and_finished(&self.transcript)?;

        let tag = self
            .config
            .suite
            .mac
            .auth(self.ks.fk_i()?, self.transcript.digest(3)?);
        let iahts = self.ks.iahts()?.to_vec();
        let m7 = self.seal_and_send(7, 1, &iahts, &tag)?;
        self.ks.derive_application_traffic(&self.transcript)?;

        self.next_expected = 8;
        Ok(vec![m7])
    }

    fn handle_m7(&mut self, rec: Record) -> Result<Vec<Vec<u8>>, ProtocolError> {
        let iahts = self.ks.iahts()?.to_vec();
        let tag = self.open_record(&rec, &iahts, "message 7")?;
        // Explicit authentication of the initiator: verify before anything
        // that could lead to accept.
        if !self
            .config
            .suite
            .mac
            .verify(self.ks.fk_i()?, self.transcript.digest(3)?, &tag)
        {
            return Err(ProtocolError::Mac);
        }
        self.ks.derive_application_traffic(&self.transcript)?;

        let rf = self
            .config
            .suite
            .mac
            .auth(self.ks.fk_r()?, self.transcript.digest(4)?);
        let rahts = self.ks.rahts()?.to_vec();
        let m8 = self.seal_and_send(8, 1, &rahts, &rf)?;
        self.ks.derive_final_state(&self.transcript)?;

        self.accept()?;
        Ok(vec![m8])
    }

    fn handle_m8(&mut self, rec: Record) -> Result<Vec<Vec<u8>>, ProtocolError> {
        let rahts = self.ks.rahts()?.to_vec();
        let rf = self.open_record(&rec, &rahts, "message 8")?;
        // Explicit authentication of the responder: verify before accept.
        if !self
            .config
            .suite
            .mac
            .verify(self.ks.fk_r()?, self.transcript.digest(4)?, &rf)
        {
            return Err(ProtocolError::Mac);
        }
        self.ks.derive_final_state(&self.transcript)?;
        self.accept()?;
        Ok(Vec::new())
    }

    fn accept(&mut self) -> Result<(), ProtocolError> {
        let mut key = self.ks.iats()?.to_vec();
        key.extend_from_slice(self.ks.rats()?);
        let sec_state = self.ks.sec_state_next()?.to_vec();
        self.stage_keys.push(StageOutput { key, sec_state });
        self.status = Status::Accepted;
        self.next_expected = 0;
        Ok(())
    }

    fn begin_next_stage(&mut self) -> Result<(), ProtocolError> {
        if self.status != Status::Accepted {
            return Err(ProtocolError::State(
                "advancing requires the current stage to be accepted".into(),
            ));
        }
        let sec_state = self
            .stage_keys
            .last()
            .expect("accepted stage has an output")
            .sec_state
            .clone();
        self.stid += 1;
        self.transcript = Transcript::new(self.config.suite.hash.clone());
        self.ks = KeySchedule::new(
            self.config.suite.prf.clone(),
            self.config.label_binding,
            self.config.rats_mode,
            sec_state,
        );
        self.sent.push(Vec::new());
        self.received.push(Vec::new());
        self.eph.push(EphemeralSecrets::default());
        self.status = Status::Pending;
        self.next_expected = match self.role {
            Role::Initiator => 0,
            Role::Responder => 1,
        };
        Ok(())
    }

    /// Decode, identity-check, and trust-check a received certificate.
    /// Subject binding is checked first: a certificate naming anyone except
    /// the configured partner is rejected no matter how valid it is.
    fn check_peer_certificate(&self, cert_bytes: &[u8]) -> Result<Certificate, ProtocolError> {
        let cert = Certificate::decode(cert_bytes)
            .map_err(|e| ProtocolError::Cert(format!("certificate decode: {e}")))?;
        if cert.subject_id != self.config.peer_id {
            return Err(ProtocolError::IdentityMismatch {
                got: cert.subject_id,
                want: self.config.peer_id.clone(),
            });
        }
        let static_kem = &self.config.suite.static_kem;
        if cert.kem_alg_id != static_kem.alg_id() {
            return Err(ProtocolError::Cert(format!(
                "certificate algorithm {:?} does not match the suite's long-term KEM {:?}",
                cert.kem_alg_id,
                static_kem.alg_id()
            )));
        }
        if cert.public_key.len() != static_kem.public_key_len() {
            return Err(ProtocolError::Cert(format!(
                "certificate public key has length {}, expected {}",
                cert.public_key.len(),
                static_kem.public_key_len()
            )));
        }
        match &self.config.trust {
            TrustStore::Pinned(pinned) => {
                if !pinned.iter().any(|p| p == &cert) {
                    return Err(ProtocolError::Cert(
                        "certificate does not match any pinned entry".into(),
                    ));
                }
            }
            TrustStore::Verifier(verifier) => {
                verifier.verify(&cert).map_err(ProtocolError::Cert)?;
            }
        }
        Ok(cert)
    }

    /// Seal `plaintext` into record message `msg_type` under `secret`,
    /// record it in the transcript, and queue it as sent.
    fn seal_and_send(
        &mut self,
        msg_type: u8,
        seq: u64,
        secret: &[u8],
        plaintext: &[u8],
    ) -> Result<Vec<u8>, ProtocolError> {
        let suite = &self.config.suite;
        let tk = traffic_key_expand(secret, suite.aead.as_ref(), suite.prf.as_ref());
        let nonce = record_nonce(&tk.iv_base, seq);
        let ciphertext = suite
            .aead
            .seal(&tk.key, &nonce, &record_ad(msg_type), plaintext)?;
        let wire = Message::Record(Record {
            msg_type,
            seq,
            ciphertext,
        })
        .encode()?;
        self.transcript.record(msg_type as usize, &wire)?;
        self.sent_mut().push(wire.clone());
        Ok(wire)
    }

    /// Open a received record under `secret`. The transmitted sequence
    /// number feeds the nonce as-is, so any mismatch surfaces as an AEAD
    /// authentication failure rather than a separate check.
    fn open_record(
        &self,
        rec: &Record,
        secret: &[u8],
        context: &'static str,
    ) -> Result<Vec<u8>, ProtocolError> {
        let suite = &self.config.suite;
        let tk = traffic_key_expand(secret, suite.aead.as_ref(), suite.prf.as_ref());
        let nonce = record_nonce(&tk.iv_base, rec.seq);
        suite
            .aead
            .open(&tk.key, &nonce, &record_ad(rec.msg_type), &rec.ciphertext)
            .map_err(|_| ProtocolError::Aead { context })
    }

    fn eph_mut(&mut self) -> &mut EphemeralSecrets {
        self.eph.last_mut().expect("stage ephemeral slot exists")
    }

    fn sent_mut(&mut self) -> &mut Vec<Vec<u8>> {
        self.sent.last_mut().expect("stage sent slot exists")
    }

    fn received_mut(&mut self) -> &mut Vec<Vec<u8>> {
        self.received.last_mut().expect("stage received slot exists")
    }

    fn take_eph_classical(&mut self) -> Result<Vec<u8>, ProtocolError> {
        self.eph_mut()
            .classical
            .take()
            .ok_or_else(|| ProtocolError::State("classical ephemeral secret missing".into()))
    }

    fn take_eph_pq(&mut self) -> Result<Vec<u8>, ProtocolError> {
        self.eph_mut()
            .pq
            .take()
            .ok_or_else(|| ProtocolError::State("post-quantum ephemeral secret missing".into()))
    }
}

fn stage_slice(stages: &[Vec<Vec<u8>>], stid: u32) -> &[Vec<u8>] {
    if stid == 0 {
        return &[];
    }
    stages
        .get(stid as usize - 1)
        .map(Vec::as_slice)
        .unwrap_or(&[])
}

/// Generate a long-term key pair for `suite`'s long-term KEM and wrap the
/// public half in a certificate.
pub fn generate_identity(
    suite: &CipherSuite,
    subject: &str,
    issuer: &str,
    attestation: Vec<u8>,
    rng: &mut dyn CryptoRngCore,
) -> (Certificate, Vec<u8>) {
    let kp = suite.static_kem.keygen(rng);
    (
        Certificate {
            subject_id: subject.to_string(),
            kem_alg_id: suite.static_kem.alg_id().to_string(),
            public_key: kp.public_key,
            issuer_id: issuer.to_string(),
            attestation,
        },
        kp.secret_key,
    )
}

/// Exact wire sizes of the eight messages for `suite`, given the encoded
/// lengths of the two certificates. Every handshake with those parameters
/// produces messages of exactly these sizes.
pub fn predicted_message_sizes(
    suite: &CipherSuite,
    initiator_cert_len: usize,
    responder_cert_len: usize,
) -> [usize; 8] {
    let classical_pk = suite.classical_kem.as_ref().map_or(0, |k| k.public_key_len());
    let classical_ct = suite.classical_kem.as_ref().map_or(0, |k| k.ciphertext_len());
    let record = |plaintext_len: usize| RECORD_OVERHEAD + plaintext_len + suite.aead.tag_overhead();
    [
        MSG_HEADER_LEN
            + framed_len(classical_pk)
            + framed_len(suite.pq_kem.public_key_len())
            + framed_len(NONCE_LEN)
            + framed_len(QKD_KEY_ID_LEN),
        MSG_HEADER_LEN
            + framed_len(classical_ct)
            + framed_len(suite.pq_kem.ciphertext_len())
            + framed_len(NONCE_LEN),
        record(responder_cert_len),
        record(suite.static_kem.ciphertext_len()),
        record(initiator_cert_len),
        record(suite.static_kem.ciphertext_len()),
        record(suite.mac.tag_len()),
        record(suite.mac.tag_len()),
    ]
}
