//! Executable key-exchange security experiment: parties, sessions, the full
//! adversary query interface, transcript matching, the session-cleanness
//! predicate, and real-or-random Test bookkeeping.
//!
//! An [`Experiment`] hosts `n_parties` parties that run sessions of the
//! handshake against each other. An adversary strategy interacts only
//! through the query methods — creating sessions, relaying or tampering
//! with messages, revealing keys, corrupting long-term or per-stage secret
//! material — and finally guesses the challenge bit. The adversary wins iff
//! the guess is right *and* the tested stage is clean: the cleanness
//! predicate rules out trivial wins such as revealing the tested key or
//! stripping away all sources of secrecy at once.
//!
//! Queries follow a ⊥-result contract: misuse that the model anticipates
//! (duplicate creation, revealing an unaccepted stage, repeating a
//! corruption) answers `None` rather than failing; only out-of-range
//! coordinates and a second Test are harness errors.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;

use rand_core::CryptoRngCore;

use crate::crypto::CipherSuite;
use crate::error::ExperimentError;
use crate::protocol::{Role, Session, SessionConfig, TrustStore};
use crate::qkd::{MissPolicy, QkdStore};
use crate::wire::Certificate;

/// Size bounds for one experiment run: parties, sessions per party, stages
/// per session. Queries addressing anything outside these bounds are
/// harness errors.
#[derive(Debug, Clone)]
pub struct ExperimentParams {
    pub n_parties: usize,
    pub n_sessions: usize,
    pub n_stages: usize,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        ExperimentParams {
            n_parties: 2,
            n_sessions: 4,
            n_stages: 4,
        }
    }
}

/// One adversary query, as recorded in the ordered experiment log.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum QueryKind {
    Create { i: usize, j: usize, role: Role },
    Send { i: usize, s: usize, msg_len: usize },
    Reveal { i: usize, s: usize, t: usize },
    Test { i: usize, s: usize, t: usize },
    CorruptQk { i: usize },
    CorruptCk { i: usize },
    CorruptSk { i: usize },
    CompromiseQk { i: usize, s: usize, t: usize },
    CompromiseCk { i: usize, s: usize, t: usize },
    CompromiseSk { i: usize, s: usize, t: usize },
    CompromiseSs { i: usize, s: usize, t: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryOutcome {
    /// The query returned key material, a session handle, or messages.
    Answered,
    /// The query returned ⊥.
    Bot,
}

/// Immutable log entry. `index` is a global ordering counter shared with
/// stage-acceptance events, so "issued before stage X accepted" is decided
/// by comparing indices.
#[derive(Debug, Clone)]
pub struct QueryRecord {
    pub index: u64,
    pub kind: QueryKind,
    pub outcome: QueryOutcome,
    /// For stage-addressed queries: whether the addressed stage had already
    /// accepted when the query was issued.
    pub target_accepted: Option<bool>,
}

struct Party {
    id: String,
    certificate: Certificate,
    long_term_secret: Vec<u8>,
    qk_corrupted: bool,
}

/// The experiment environment. Holds every party and session, the challenge
/// bit, the query log, and acceptance timestamps.
pub struct Experiment<'r> {
    params: ExperimentParams,
    rng: &'r mut dyn CryptoRngCore,
    suite: CipherSuite,
    trusted_certs: Vec<Certificate>,
    qkd: Arc<QkdStore>,
    parties: Vec<Party>,
    /// Sessions per party, in creation order.
    sessions: Vec<Vec<Session>>,
    created: HashSet<(usize, usize, Role)>,
    b: u8,
    test_target: Option<(usize, usize, usize)>,
    random_key: Option<Vec<u8>>,
    log: Vec<QueryRecord>,
    counter: u64,
    /// (party, session, stage) -> ordering index at which it accepted.
    accept_stamp: HashMap<(usize, usize, usize), u64>,
    compromised: HashSet<QueryKind>,
}

impl<'r> Experiment<'r> {
    /// Set up parties with long-term identities, pinned mutual trust, and a
    /// quantum-key link between every pair. The challenge bit is sampled
    /// here.
    pub fn new(
        suite: CipherSuite,
        params: ExperimentParams,
        rng: &'r mut dyn CryptoRngCore,
    ) -> Result<Experiment<'r>, ExperimentError> {
        if params.n_parties < 2 {
            return Err(ExperimentError::OutOfRange(
                "an experiment needs at least two parties".into(),
            ));
        }
        let mut qkd_seed = [0u8; 32];
        rng.fill_bytes(&mut qkd_seed);
        let qkd = QkdStore::with_seed(qkd_seed, MissPolicy::Strict);

        let mut parties = Vec::with_capacity(params.n_parties);
        for i in 0..params.n_parties {
            let id = format!("P{i}");
            let (certificate, long_term_secret) = crate::protocol::generate_identity(
                &suite,
                &id,
                "experiment-ca",
                Vec::new(),
                rng,
            );
            parties.push(Party {
                id,
                certificate,
                long_term_secret,
                qk_corrupted: false,
            });
        }
        for i in 0..params.n_parties {
            for j in (i + 1)..params.n_parties {
                qkd.open_link(&parties[i].id, &parties[j].id);
            }
        }
        let all_certs: Vec<Certificate> =
            parties.iter().map(|p| p.certificate.clone()).collect();
        let b = (rng.next_u32() & 1) as u8;

        let mut sessions = Vec::with_capacity(params.n_parties);
        sessions.resize_with(params.n_parties, Vec::new);
        Ok(Experiment {
            params,
            rng,
            suite,
            trusted_certs: all_certs,
            qkd,
            parties,
            sessions,
            created: HashSet::new(),
            b,
            test_target: None,
            random_key: None,
            log: Vec::new(),
            counter: 0,
            accept_stamp: HashMap::new(),
            compromised: HashSet::new(),
        })
    }

    pub fn params(&self) -> &ExperimentParams {
        &self.params
    }

    pub fn query_log(&self) -> &[QueryRecord] {
        &self.log
    }

    /// Initialize a session at party `i` talking to party `j` in `role`.
    /// Returns the session index, or `None` if an identical session (same
    /// party, partner, and role) already exists.
    pub fn create(
        &mut self,
        i: usize,
        j: usize,
        role: Role,
    ) -> Result<Option<usize>, ExperimentError> {
        self.check_party(i)?;
        self.check_party(j)?;
        if i == j {
            return Err(ExperimentError::OutOfRange(
                "a party cannot run a session with itself".into(),
            ));
        }
        let kind = QueryKind::Create { i, j, role };
        if self.created.contains(&(i, j, role)) {
            self.push_log(kind, QueryOutcome::Bot, None);
            return Ok(None);
        }
        if self.sessions[i].len() >= self.params.n_sessions {
            return Err(ExperimentError::OutOfRange(format!(
                "party {i} exceeded its session budget of {}",
                self.params.n_sessions
            )));
        }
        let config = SessionConfig::new(
            self.parties[i].id.clone(),
            self.parties[j].id.clone(),
            self.suite.clone(),
            self.parties[i].certificate.clone(),
            self.parties[i].long_term_secret.clone(),
            TrustStore::Pinned(self.trusted_certs.clone()),
        );
        let session = Session::new(role, config, self.qkd.clone());
        self.created.insert((i, j, role));
        self.sessions[i].push(session);
        let s = self.sessions[i].len() - 1;
        self.push_log(kind, QueryOutcome::Answered, None);
        Ok(Some(s))
    }

    /// Deliver `msg` to session `(i, s)` and return its response messages.
    /// An empty `msg` to an initiator session triggers its opening flight.
    /// Returns `None` if the session is rejected or the message makes it
    /// reject.
    pub fn send(
        &mut self,
        i: usize,
        s: usize,
        msg: &[u8],
    ) -> Result<Option<Vec<Vec<u8>>>, ExperimentError> {
        self.check_session(i, s)?;
        let kind = QueryKind::Send {
            i,
            s,
            msg_len: msg.len(),
        };
        let session = &mut self.sessions[i][s];
        let result = if msg.is_empty() && session.role() == Role::Initiator {
            session.start(&mut *self.rng)
        } else {
            session.process(msg, &mut *self.rng)
        };
        let out = match result {
            Ok(messages) => Some(messages),
            Err(_) => None,
        };
        let outcome = if out.is_some() {
            QueryOutcome::Answered
        } else {
            QueryOutcome::Bot
        };
        self.push_log(kind, outcome, None);
        self.stamp_accepts(i, s);
        Ok(out)
    }

    /// Reveal the stage-`t` session key of `(i, s)`, if that stage accepted.
    pub fn reveal(
        &mut self,
        i: usize,
        s: usize,
        t: usize,
    ) -> Result<Option<Vec<u8>>, ExperimentError> {
        self.check_stage(i, s, t)?;
        let key = self.sessions[i][s]
            .stage_output(t as u32)
            .map(|out| out.key.clone());
        let outcome = if key.is_some() {
            QueryOutcome::Answered
        } else {
            QueryOutcome::Bot
        };
        let accepted = self.accept_stamp.contains_key(&(i, s, t));
        self.push_log(QueryKind::Reveal { i, s, t }, outcome, Some(accepted));
        Ok(key)
    }

    /// Real-or-random challenge on stage `t` of `(i, s)`. Returns the real
    /// stage key if the challenge bit is 1, an independent uniform key if 0.
    /// ⊥ before accept; a second successful Test is a harness error.
    pub fn test(
        &mut self,
        i: usize,
        s: usize,
        t: usize,
    ) -> Result<Option<Vec<u8>>, ExperimentError> {
        self.check_stage(i, s, t)?;
        if self.test_target.is_some() {
            return Err(ExperimentError::TestAlreadyIssued);
        }
        let Some(real) = self.sessions[i][s]
            .stage_output(t as u32)
            .map(|out| out.key.clone())
        else {
            self.push_log(QueryKind::Test { i, s, t }, QueryOutcome::Bot, Some(false));
            return Ok(None);
        };
        self.test_target = Some((i, s, t));
        let answer = if self.b == 1 {
            real
        } else {
            if self.random_key.is_none() {
                let mut k = vec![0u8; 64];
                self.rng.fill_bytes(&mut k);
                self.random_key = Some(k);
            }
            self.random_key.clone().unwrap()
        };
        self.push_log(QueryKind::Test { i, s, t }, QueryOutcome::Answered, Some(true));
        Ok(Some(answer))
    }

    /// Reveal party `i`'s long-term KEM secret key, once.
    pub fn corrupt_qk(&mut self, i: usize) -> Result<Option<Vec<u8>>, ExperimentError> {
        self.check_party(i)?;
        let kind = QueryKind::CorruptQk { i };
        if self.parties[i].qk_corrupted {
            self.push_log(kind, QueryOutcome::Bot, None);
            return Ok(None);
        }
        self.parties[i].qk_corrupted = true;
        let sk = self.parties[i].long_term_secret.clone();
        self.push_log(kind, QueryOutcome::Answered, None);
        Ok(Some(sk))
    }

    /// There is no long-term classical secret in this protocol: always ⊥.
    pub fn corrupt_ck(&mut self, i: usize) -> Result<Option<Vec<u8>>, ExperimentError> {
        self.check_party(i)?;
        self.push_log(QueryKind::CorruptCk { i }, QueryOutcome::Bot, None);
        Ok(None)
    }

    /// There is no long-term symmetric secret (PSK) in this protocol:
    /// always ⊥.
    pub fn corrupt_sk(&mut self, i: usize) -> Result<Option<Vec<u8>>, ExperimentError> {
        self.check_party(i)?;
        self.push_log(QueryKind::CorruptSk { i }, QueryOutcome::Bot, None);
        Ok(None)
    }

    /// Reveal the post-quantum ephemeral secrets of stages up to and
    /// including `t`.
    pub fn compromise_qk(
        &mut self,
        i: usize,
        s: usize,
        t: usize,
    ) -> Result<Option<Vec<Vec<u8>>>, ExperimentError> {
        let kind = QueryKind::CompromiseQk { i, s, t };
        self.compromise_stage_secrets(kind, i, s, t, |eph| eph.pq.clone())
    }

    /// Reveal the classical ephemeral secrets of stages up to and including
    /// `t`.
    pub fn compromise_ck(
        &mut self,
        i: usize,
        s: usize,
        t: usize,
    ) -> Result<Option<Vec<Vec<u8>>>, ExperimentError> {
        let kind = QueryKind::CompromiseCk { i, s, t };
        self.compromise_stage_secrets(kind, i, s, t, |eph| eph.classical.clone())
    }

    /// Reveal the per-stage quantum keys of stages up to and including `t`.
    pub fn compromise_sk(
        &mut self,
        i: usize,
        s: usize,
        t: usize,
    ) -> Result<Option<Vec<Vec<u8>>>, ExperimentError> {
        let kind = QueryKind::CompromiseSk { i, s, t };
        self.compromise_stage_secrets(kind, i, s, t, |eph| eph.quantum.clone())
    }

    /// Reveal the chained secret states created strictly before stage `t`
    /// (the outputs of stages 1..t).
    pub fn compromise_ss(
        &mut self,
        i: usize,
        s: usize,
        t: usize,
    ) -> Result<Option<Vec<Vec<u8>>>, ExperimentError> {
        self.check_stage(i, s, t)?;
        let kind = QueryKind::CompromiseSs { i, s, t };
        if self.compromised.contains(&kind) {
            self.push_log(kind, QueryOutcome::Bot, None);
            return Ok(None);
        }
        self.compromised.insert(kind.clone());
        let session = &self.sessions[i][s];
        let states: Vec<Vec<u8>> = (1..t)
            .filter_map(|stage| session.stage_output(stage as u32))
            .map(|out| out.sec_state.clone())
            .collect();
        let accepted = self.accept_stamp.contains_key(&(i, s, t));
        if states.is_empty() {
            self.push_log(kind, QueryOutcome::Bot, Some(accepted));
            Ok(None)
        } else {
            self.push_log(kind, QueryOutcome::Answered, Some(accepted));
            Ok(Some(states))
        }
    }

    fn compromise_stage_secrets(
        &mut self,
        kind: QueryKind,
        i: usize,
        s: usize,
        t: usize,
        pick: impl Fn(&crate::protocol::EphemeralSecrets) -> Option<Vec<u8>>,
    ) -> Result<Option<Vec<Vec<u8>>>, ExperimentError> {
        self.check_stage(i, s, t)?;
        if self.compromised.contains(&kind) {
            self.push_log(kind, QueryOutcome::Bot, None);
            return Ok(None);
        }
        self.compromised.insert(kind.clone());
        let session = &self.sessions[i][s];
        let secrets: Vec<Vec<u8>> = (1..=t)
            .filter_map(|stage| session.ephemeral_secrets(stage as u32))
            .filter_map(|eph| pick(eph))
            .collect();
        let accepted = self.accept_stamp.contains_key(&(i, s, t));
        if secrets.is_empty() {
            self.push_log(kind, QueryOutcome::Bot, Some(accepted));
            Ok(None)
        } else {
            self.push_log(kind, QueryOutcome::Answered, Some(accepted));
            Ok(Some(secrets))
        }
    }

    /// Finish the experiment: the adversary wins iff its guess equals the
    /// challenge bit and the tested stage is clean. Without a successful
    /// Test there is nothing to win.
    pub fn finish(&self, guess: u8) -> Result<bool, ExperimentError> {
        let Some((i, s, t)) = self.test_target else {
            return Ok(false);
        };
        if guess != self.b {
            return Ok(false);
        }
        self.clean(i, s, t)
    }

    /// Stage-`t` transcripts of `(j, r)` and `(i, s)` match: everything one
    /// side sent is exactly what the other received, in both directions.
    pub fn matching(
        &self,
        j: usize,
        r: usize,
        i: usize,
        s: usize,
        t: usize,
    ) -> bool {
        let Some(a) = self.session(j, r) else { return false };
        let Some(b) = self.session(i, s) else { return false };
        let t = t as u32;
        let a_sent = a.sent_transcript(t);
        let b_sent = b.sent_transcript(t);
        if a_sent.is_empty() && b_sent.is_empty() {
            return false;
        }
        a_sent == b.received_transcript(t) && b_sent == a.received_transcript(t)
    }

    /// Stage-`t` prefix match from `(j, r)` to `(i, s)`: what `(j, r)` sent
    /// equals what `(i, s)` received, truncated to the sender's length.
    pub fn prefix_match(
        &self,
        j: usize,
        r: usize,
        i: usize,
        s: usize,
        t: usize,
    ) -> bool {
        let Some(a) = self.session(j, r) else { return false };
        let Some(b) = self.session(i, s) else { return false };
        let t = t as u32;
        let sent = a.sent_transcript(t);
        if sent.is_empty() {
            return false;
        }
        let received = b.received_transcript(t);
        if received.len() < sent.len() {
            return false;
        }
        &received[..sent.len()] == sent
    }

    /// Whether any other session originated the stage-`t` messages that
    /// `(i, s)` received (full match or prefix match).
    pub fn origin_exists(&self, i: usize, s: usize, t: usize) -> bool {
        self.other_sessions(i, s).into_iter().any(|(j, r)| {
            self.matching(j, r, i, s, t) || self.prefix_match(j, r, i, s, t)
        })
    }

    /// The session-cleanness predicate for stage `t` of `(i, s)`, evaluated
    /// over the query log:
    ///
    /// 1. the tested stage key was not revealed;
    /// 2. no matching session's stage key was revealed;
    /// 3. if a matching session exists, the initiator side kept either its
    ///    post-quantum ephemeral secret (not compromised before that session
    ///    accepted the stage) or its quantum key (never compromised);
    /// 4. if no origin session exists, the tested party kept either its
    ///    long-term key (not corrupted before the tested stage accepted) or
    ///    its quantum key (never compromised).
    pub fn clean(&self, i: usize, s: usize, t: usize) -> Result<bool, ExperimentError> {
        self.check_stage(i, s, t)?;

        // Condition 1: the tested stage key was never the subject of a
        // Reveal query.
        if self.reveal_issued(i, s, t) {
            return Ok(false);
        }

        let matches: Vec<(usize, usize)> = self
            .other_sessions(i, s)
            .into_iter()
            .filter(|&(j, r)| self.matching(j, r, i, s, t))
            .collect();

        // Condition 2: no Reveal on any session matching at stage t.
        for &(j, r) in &matches {
            if self.reveal_issued(j, r, t) {
                return Ok(false);
            }
        }

        // Condition 3: with a matching session, the initiator-side stage
        // secrets must not be entirely stripped.
        if !matches.is_empty() {
            let tested_role = self.session(i, s).unwrap().role();
            for &(j, r) in &matches {
                let (qi, qs) = match tested_role {
                    Role::Initiator => (i, s),
                    Role::Responder => (j, r),
                };
                let qk_kept = !self.compromise_issued_before_accept(
                    |k| matches_compromise_qk(k, qi, qs, t),
                    (qi, qs, t),
                );
                let sk_kept = !self.compromise_issued(|k| matches_compromise_sk(k, qi, qs, t));
                if !(qk_kept || sk_kept) {
                    return Ok(false);
                }
            }
        }

        // Condition 4: with no origin session, the tested party must keep
        // its long-term key or its quantum key.
        if !self.origin_exists(i, s, t) {
            let ltk_kept = !self.corrupt_qk_issued_before_accept(i, (i, s, t));
            let sk_kept = !self.compromise_issued(|k| matches_compromise_sk(k, i, s, t));
            if !(ltk_kept || sk_kept) {
                return Ok(false);
            }
        }

        Ok(true)
    }

    /// Line-oriented trace of the query log, for debugging predicate
    /// decisions.
    pub fn trace(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        for record in &self.log {
            let outcome = match record.outcome {
                QueryOutcome::Answered => "ok",
                QueryOutcome::Bot => "bot",
            };
            let _ = writeln!(out, "{:>5} {:?} -> {outcome}", record.index, record.kind);
        }
        out
    }

    fn session(&self, i: usize, s: usize) -> Option<&Session> {
        self.sessions.get(i).and_then(|list| list.get(s))
    }

    /// All (party, session) coordinates except `(i, s)` itself.
    fn other_sessions(&self, i: usize, s: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (j, list) in self.sessions.iter().enumerate() {
            for r in 0..list.len() {
                if (j, r) != (i, s) {
                    out.push((j, r));
                }
            }
        }
        out
    }

    fn reveal_issued(&self, i: usize, s: usize, t: usize) -> bool {
        self.log.iter().any(|rec| {
            matches!(rec.kind, QueryKind::Reveal { i: qi, s: qs, t: qt }
                if qi == i && qs == s && qt == t)
        })
    }

    fn compromise_issued(&self, pred: impl Fn(&QueryKind) -> bool) -> bool {
        self.log.iter().any(|rec| pred(&rec.kind))
    }

    fn compromise_issued_before_accept(
        &self,
        pred: impl Fn(&QueryKind) -> bool,
        stage: (usize, usize, usize),
    ) -> bool {
        self.log
            .iter()
            .filter(|rec| pred(&rec.kind))
            .any(|rec| self.issued_before_accept(rec.index, stage))
    }

    fn corrupt_qk_issued_before_accept(&self, i: usize, stage: (usize, usize, usize)) -> bool {
        self.log
            .iter()
            .filter(|rec| matches!(rec.kind, QueryKind::CorruptQk { i: qi } if qi == i))
            .any(|rec| self.issued_before_accept(rec.index, stage))
    }

    /// A query "happened before stage X accepted" if the stage never
    /// accepted at all, or the query's index precedes the acceptance stamp.
    fn issued_before_accept(&self, index: u64, stage: (usize, usize, usize)) -> bool {
        match self.accept_stamp.get(&stage) {
            Some(stamp) => index < *stamp,
            None => true,
        }
    }

    fn stamp_accepts(&mut self, i: usize, s: usize) {
        let accepted = self.sessions[i][s].accepted_stages() as usize;
        for t in 1..=accepted {
            if !self.accept_stamp.contains_key(&(i, s, t)) {
                let stamp = self.next_index();
                self.accept_stamp.insert((i, s, t), stamp);
            }
        }
    }

    fn push_log(&mut self, kind: QueryKind, outcome: QueryOutcome, target_accepted: Option<bool>) {
        let index = self.next_index();
        self.log.push(QueryRecord {
            index,
            kind,
            outcome,
            target_accepted,
        });
    }

    fn next_index(&mut self) -> u64 {
        let index = self.counter;
        self.counter += 1;
        index
    }

    fn check_party(&self, i: usize) -> Result<(), ExperimentError> {
        if i >= self.params.n_parties {
            return Err(ExperimentError::OutOfRange(format!(
                "party index {i} out of range (n_parties = {})",
                self.params.n_parties
            )));
        }
        Ok(())
    }

    fn check_session(&self, i: usize, s: usize) -> Result<(), ExperimentError> {
        self.check_party(i)?;
        if self.session(i, s).is_none() {
            return Err(ExperimentError::OutOfRange(format!(
                "session ({i}, {s}) does not exist"
            )));
        }
        Ok(())
    }

    fn check_stage(&self, i: usize, s: usize, t: usize) -> Result<(), ExperimentError> {
        self.check_session(i, s)?;
        if t == 0 || t > self.params.n_stages {
            return Err(ExperimentError::OutOfRange(format!(
                "stage index {t} out of range (n_stages = {})",
                self.params.n_stages
            )));
        }
        Ok(())
    }
}

fn matches_compromise_qk(kind: &QueryKind, i: usize, s: usize, t: usize) -> bool {
    // A compromise at stage t' reveals stage secrets up to and including
    // t', so it covers stage t whenever t' >= t.
    matches!(kind, QueryKind::CompromiseQk { i: qi, s: qs, t: qt }
        if *qi == i && *qs == s && *qt >= t)
}

fn matches_compromise_sk(kind: &QueryKind, i: usize, s: usize, t: usize) -> bool {
    matches!(kind, QueryKind::CompromiseSk { i: qi, s: qs, t: qt }
        if *qi == i && *qs == s && *qt >= t)
}

/// Run one experiment: the adversary drives queries and returns a guess.
/// The result is whether the adversary won.
pub fn run_experiment<F>(
    suite: CipherSuite,
    params: ExperimentParams,
    rng: &mut dyn CryptoRngCore,
    adversary: F,
) -> Result<bool, ExperimentError>
where
    F: FnOnce(&mut Experiment<'_>) -> Result<u8, ExperimentError>,
{
    let mut experiment = Experiment::new(suite, params, rng)?;
    let guess = adversary(&mut experiment)?;
    experiment.finish(guess)
}

/// Passively relay one full handshake stage between an initiator session
/// `(i, s)` and a responder session `(j, r)`, returning whether both
/// accepted a new stage.
pub fn passive_relay_stage(
    experiment: &mut Experiment<'_>,
    (i, s): (usize, usize),
    (j, r): (usize, usize),
) -> Result<bool, ExperimentError> {
    let before_i = accepted(experiment, i, s);
    let before_j = accepted(experiment, j, r);
    let Some(first) = experiment.send(i, s, &[])? else {
        return Ok(false);
    };
    let mut to_resp: VecDeque<Vec<u8>> = first.into_iter().collect();
    let mut to_init: VecDeque<Vec<u8>> = VecDeque::new();
    while !(to_resp.is_empty() && to_init.is_empty()) {
        if let Some(m) = to_resp.pop_front() {
            match experiment.send(j, r, &m)? {
                Some(out) => to_init.extend(out),
                None => return Ok(false),
            }
        }
        if let Some(m) = to_init.pop_front() {
            match experiment.send(i, s, &m)? {
                Some(out) => to_resp.extend(out),
                None => return Ok(false),
            }
        }
    }
    Ok(accepted(experiment, i, s) == before_i + 1 && accepted(experiment, j, r) == before_j + 1)
}

fn accepted(experiment: &Experiment<'_>, i: usize, s: usize) -> u32 {
    experiment
        .sessions
        .get(i)
        .and_then(|list| list.get(s))
        .map(|sess| sess.accepted_stages())
        .unwrap_or(0)
}
