//! Simulated out-of-band quantum key delivery.
//!
//! Models the two-sided delivery pattern of a key-management service: the
//! initiator reserves a fresh key and receives `(key_id, key)`, then the
//! responder fetches the same key by id. Keys belong to an unordered party
//! pair, are delivered at most once to each side, and are never released to
//! a third party except through the explicit test-harness corruption hook.
//!
//! The simulator derives key material deterministically from a seed, so two
//! independent store instances built from the same seed agree on every key —
//! that is what makes the derive-on-miss policy usable across processes.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};
use std::time::{Instant, SystemTime};

use crate::crypto::hmac_sha256;
use crate::error::QkdError;

pub const QKD_KEY_LEN: usize = 32;
pub const QKD_KEY_ID_LEN: usize = 16;

pub type QkdKeyId = [u8; QKD_KEY_ID_LEN];

/// A freshly reserved key together with its delivery id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QkdKeyHandle {
    pub key_id: QkdKeyId,
    pub key: Vec<u8>,
}

/// The two delivery calls a handshake needs. Implemented by the in-process
/// store and by the networked service client.
pub trait QkdClient: Send + Sync {
    /// Reserve a fresh key for the unordered pair `{requester, partner}`.
    /// Counts as the requester's one delivery of that key.
    fn get_key(&self, requester: &str, partner: &str) -> Result<QkdKeyHandle, QkdError>;

    /// Fetch an already-issued key by id. Counts as the requester's one
    /// delivery of that key.
    fn get_key_by_id(
        &self,
        requester: &str,
        partner: &str,
        key_id: &QkdKeyId,
    ) -> Result<Vec<u8>, QkdError>;
}

/// What to do when `get_key_by_id` names an id this store never issued.
///
/// `Strict` refuses (`NotFound`). `DeriveOnMiss` re-derives the key bytes
/// from the link secret, which lets two processes share a logical link by
/// seed alone; delivery bookkeeping is then per-process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissPolicy {
    #[default]
    Strict,
    DeriveOnMiss,
}

/// One key's lifecycle in the store.
#[derive(Debug, Clone)]
pub struct QkdKeyRecord {
    pub key_id: QkdKeyId,
    pub key: Vec<u8>,
    pub owner_pair: (String, String),
    pub consumed_by: HashSet<String>,
    pub created_at: SystemTime,
    pub corrupted: bool,
}

/// Store-side events, for tests and the security-model bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuditEvent {
    Issued { key_id: QkdKeyId, pair: (String, String) },
    Delivered { key_id: QkdKeyId, to: String },
    Corrupted { key_id: QkdKeyId },
}

struct LinkState {
    up: bool,
    /// Fresh issuances still allowed on this link.
    pool_remaining: usize,
    counter: u64,
}

struct StoreInner {
    seed: [u8; 32],
    policy: MissPolicy,
    links: HashMap<(String, String), LinkState>,
    keys: HashMap<QkdKeyId, QkdKeyRecord>,
    audit: Vec<AuditEvent>,
    rate_limit: Option<u32>,
    window_start: Instant,
    issued_in_window: u32,
}

/// In-memory key store. Safe for concurrent use; all record updates happen
/// under one lock, so a key is never delivered twice to the same party even
/// under racing fetches.
pub struct QkdStore {
    inner: Mutex<StoreInner>,
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

fn link_secret(seed: &[u8; 32], pair: &(String, String)) -> Vec<u8> {
    let mut msg = Vec::with_capacity(5 + pair.0.len() + 1 + pair.1.len());
    msg.extend_from_slice(b"link ");
    msg.extend_from_slice(pair.0.as_bytes());
    msg.push(0);
    msg.extend_from_slice(pair.1.as_bytes());
    hmac_sha256(seed, &msg)
}

fn derive_key_id(link_secret: &[u8], counter: u64) -> QkdKeyId {
    let mut msg = Vec::with_capacity(3 + 8);
    msg.extend_from_slice(b"id ");
    msg.extend_from_slice(&counter.to_be_bytes());
    let full = hmac_sha256(link_secret, &msg);
    full[..QKD_KEY_ID_LEN].try_into().unwrap()
}

fn derive_key(link_secret: &[u8], key_id: &QkdKeyId) -> Vec<u8> {
    let mut msg = Vec::with_capacity(4 + QKD_KEY_ID_LEN);
    msg.extend_from_slice(b"key ");
    msg.extend_from_slice(key_id);
    hmac_sha256(link_secret, &msg)
}

impl QkdStore {
    pub fn with_seed(seed: [u8; 32], policy: MissPolicy) -> Arc<QkdStore> {
        Arc::new(QkdStore {
            inner: Mutex::new(StoreInner {
                seed,
                policy,
                links: HashMap::new(),
                keys: HashMap::new(),
                audit: Vec::new(),
                rate_limit: None,
                window_start: Instant::now(),
                issued_in_window: 0,
            }),
        })
    }

    /// Create (or reset) the simulated link for an unordered pair.
    pub fn open_link(&self, a: &str, b: &str) {
        let mut inner = self.inner.lock().unwrap();
        inner.links.entry(pair_key(a, b)).or_insert(LinkState {
            up: true,
            pool_remaining: usize::MAX,
            counter: 0,
        });
    }

    /// Cap how many fresh keys the link may still issue.
    pub fn set_pool_cap(&self, a: &str, b: &str, cap: usize) {
        let mut inner = self.inner.lock().unwrap();
        if let Some(link) = inner.links.get_mut(&pair_key(a, b)) {
            link.pool_remaining = cap;
        }
    }

    /// Simulate the link going down (or back up).
    pub fn set_link_up(&self, a: &str, b: &str, up: bool) {
        let mut inner = self.inner.lock().unwrap();
        if let Some(link) = inner.links.get_mut(&pair_key(a, b)) {
            link.up = up;
        }
    }

    /// Cap fresh-key issuance per second across the store; `None` removes
    /// the cap. Emulates a constrained quantum-channel key rate.
    pub fn set_rate_limit(&self, keys_per_second: Option<u32>) {
        let mut inner = self.inner.lock().unwrap();
        inner.rate_limit = keys_per_second;
        inner.window_start = Instant::now();
        inner.issued_in_window = 0;
    }

    /// Test-harness hook: reveal a key's bytes without consuming a delivery,
    /// marking the record corrupted and logging the event.
    pub fn corrupt_key(&self, key_id: &QkdKeyId) -> Result<Vec<u8>, QkdError> {
        let mut inner = self.inner.lock().unwrap();
        let record = inner.keys.get_mut(key_id).ok_or(QkdError::NotFound)?;
        record.corrupted = true;
        let key = record.key.clone();
        inner.audit.push(AuditEvent::Corrupted { key_id: *key_id });
        Ok(key)
    }

    pub fn audit_log(&self) -> Vec<AuditEvent> {
        self.inner.lock().unwrap().audit.clone()
    }

    /// Ids recorded as corrupted, for the security-model bookkeeping.
    pub fn corrupted_ids(&self) -> Vec<QkdKeyId> {
        self.inner
            .lock()
            .unwrap()
            .audit
            .iter()
            .filter_map(|e| match e {
                AuditEvent::Corrupted { key_id } => Some(*key_id),
                _ => None,
            })
            .collect()
    }

    pub fn record(&self, key_id: &QkdKeyId) -> Option<QkdKeyRecord> {
        self.inner.lock().unwrap().keys.get(key_id).cloned()
    }
}

impl StoreInner {
    fn check_rate(&mut self) -> Result<(), QkdError> {
        let Some(cap) = self.rate_limit else {
            return Ok(());
        };
        let now = Instant::now();
        if now.duration_since(self.window_start).as_secs() >= 1 {
            self.window_start = now;
            self.issued_in_window = 0;
        }
        if self.issued_in_window >= cap {
            return Err(QkdError::Unavailable("key rate limit reached".into()));
        }
        self.issued_in_window += 1;
        Ok(())
    }

    /// Deliver `key_id` to `requester`, enforcing pair membership and
    /// at-most-once delivery.
    fn deliver(&mut self, requester: &str, partner: &str, key_id: &QkdKeyId) -> Result<Vec<u8>, QkdError> {
        let record = self.keys.get_mut(key_id).ok_or(QkdError::NotFound)?;
        if pair_key(requester, partner) != record.owner_pair {
            return Err(QkdError::Unauthorized);
        }
        if !record.consumed_by.insert(requester.to_string()) {
            return Err(QkdError::AlreadyConsumed);
        }
        let key = record.key.clone();
        self.audit.push(AuditEvent::Delivered {
            key_id: *key_id,
            to: requester.to_string(),
        });
        Ok(key)
    }
}

impl QkdClient for QkdStore {
    fn get_key(&self, requester: &str, partner: &str) -> Result<QkdKeyHandle, QkdError> {
        let mut inner = self.inner.lock().unwrap();
        let pair = pair_key(requester, partner);
        let seed = inner.seed;
        {
            let link = inner
                .links
                .get_mut(&pair)
                .ok_or_else(|| QkdError::Unavailable("no link for pair".into()))?;
            if !link.up {
                return Err(QkdError::Unavailable("link is down".into()));
            }
            if link.pool_remaining == 0 {
                return Err(QkdError::Unavailable("key pool exhausted".into()));
            }
        }
        inner.check_rate()?;
        let link = inner.links.get_mut(&pair).unwrap();
        link.pool_remaining -= 1;
        let counter = link.counter;
        link.counter += 1;

        let secret = link_secret(&seed, &pair);
        let key_id = derive_key_id(&secret, counter);
        let key = derive_key(&secret, &key_id);
        inner.keys.insert(
            key_id,
            QkdKeyRecord {
                key_id,
                key: key.clone(),
                owner_pair: pair.clone(),
                consumed_by: HashSet::new(),
                created_at: SystemTime::now(),
                corrupted: false,
            },
        );
        inner.audit.push(AuditEvent::Issued { key_id, pair });
        inner.deliver(requester, partner, &key_id)?;
        Ok(QkdKeyHandle { key_id, key })
    }

    fn get_key_by_id(
        &self,
        requester: &str,
        partner: &str,
        key_id: &QkdKeyId,
    ) -> Result<Vec<u8>, QkdError> {
        let mut inner = self.inner.lock().unwrap();
        if !inner.keys.contains_key(key_id) && inner.policy == MissPolicy::DeriveOnMiss {
            let pair = pair_key(requester, partner);
            let link = inner
                .links
                .get(&pair)
                .ok_or_else(|| QkdError::Unavailable("no link for pair".into()))?;
            if !link.up {
                return Err(QkdError::Unavailable("link is down".into()));
            }
            let seed = inner.seed;
            let key = derive_key(&link_secret(&seed, &pair), key_id);
            inner.keys.insert(
                *key_id,
                QkdKeyRecord {
                    key_id: *key_id,
                    key,
                    owner_pair: pair,
                    consumed_by: HashSet::new(),
                    created_at: SystemTime::now(),
                    corrupted: false,
                },
            );
        }
        inner.deliver(requester, partner, key_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> Arc<QkdStore> {
        let s = QkdStore::with_seed([7; 32], MissPolicy::Strict);
        s.open_link("alice", "bob");
        s
    }

    #[test]
    fn matched_delivery_returns_identical_key() {
        let s = store();
        let handle = s.get_key("alice", "bob").unwrap();
        assert_eq!(handle.key.len(), QKD_KEY_LEN);
        let key = s.get_key_by_id("bob", "alice", &handle.key_id).unwrap();
        assert_eq!(key, handle.key);
    }

    #[test]
    fn successive_keys_are_distinct() {
        let s = store();
        let a = s.get_key("alice", "bob").unwrap();
        let b = s.get_key("alice", "bob").unwrap();
        assert_ne!(a.key_id, b.key_id);
        assert_ne!(a.key, b.key);
    }

    #[test]
    fn missing_link_is_unavailable() {
        let s = store();
        assert!(matches!(
            s.get_key("alice", "mallory"),
            Err(QkdError::Unavailable(_))
        ));
        assert!(matches!(
            s.get_key_by_id("alice", "mallory", &[0; QKD_KEY_ID_LEN]),
            Err(QkdError::NotFound)
        ));
    }

    #[test]
    fn each_party_gets_one_delivery() {
        let s = store();
        let handle = s.get_key("alice", "bob").unwrap();
        // The issuing call consumed alice's delivery.
        assert_eq!(
            s.get_key_by_id("alice", "bob", &handle.key_id),
            Err(QkdError::AlreadyConsumed)
        );
        s.get_key_by_id("bob", "alice", &handle.key_id).unwrap();
        assert_eq!(
            s.get_key_by_id("bob", "alice", &handle.key_id),
            Err(QkdError::AlreadyConsumed)
        );
    }

    #[test]
    fn third_party_is_unauthorized() {
        let s = store();
        s.open_link("bob", "carol");
        let handle = s.get_key("alice", "bob").unwrap();
        assert_eq!(
            s.get_key_by_id("carol", "bob", &handle.key_id),
            Err(QkdError::Unauthorized)
        );
        // The record never lists a third party.
        let record = s.record(&handle.key_id).unwrap();
        assert!(record.consumed_by.iter().all(|p| p == "alice"));
    }

    #[test]
    fn unknown_id_is_not_found_under_strict_policy() {
        let s = store();
        assert_eq!(
            s.get_key_by_id("bob", "alice", &[9; QKD_KEY_ID_LEN]),
            Err(QkdError::NotFound)
        );
    }

    #[test]
    fn derive_on_miss_agrees_across_store_instances() {
        let a = QkdStore::with_seed([3; 32], MissPolicy::DeriveOnMiss);
        let b = QkdStore::with_seed([3; 32], MissPolicy::DeriveOnMiss);
        a.open_link("alice", "bob");
        b.open_link("alice", "bob");
        let handle = a.get_key("alice", "bob").unwrap();
        let key = b.get_key_by_id("bob", "alice", &handle.key_id).unwrap();
        assert_eq!(key, handle.key);
        // A different seed yields a different link entirely.
        let c = QkdStore::with_seed([4; 32], MissPolicy::DeriveOnMiss);
        c.open_link("alice", "bob");
        assert_ne!(
            c.get_key_by_id("bob", "alice", &handle.key_id).unwrap(),
            handle.key
        );
    }

    #[test]
    fn pool_cap_limits_fresh_issuance() {
        let s = store();
        s.set_pool_cap("alice", "bob", 3);
        for _ in 0..3 {
            s.get_key("alice", "bob").unwrap();
        }
        assert!(matches!(
            s.get_key("alice", "bob"),
            Err(QkdError::Unavailable(_))
        ));
    }

    #[test]
    fn link_down_is_unavailable() {
        let s = store();
        s.set_link_up("alice", "bob", false);
        assert!(matches!(
            s.get_key("alice", "bob"),
            Err(QkdError::Unavailable(_))
        ));
        s.set_link_up("alice", "bob", true);
        s.get_key("alice", "bob").unwrap();
    }

    #[test]
    fn corruption_reveals_without_consuming() {
        let s = store();
        let handle = s.get_key("alice", "bob").unwrap();
        let leaked = s.corrupt_key(&handle.key_id).unwrap();
        assert_eq!(leaked, handle.key);
        // The honest responder delivery still works afterwards.
        s.get_key_by_id("bob", "alice", &handle.key_id).unwrap();
        assert_eq!(s.corrupted_ids(), vec![handle.key_id]);
        assert!(s
            .audit_log()
            .contains(&AuditEvent::Corrupted { key_id: handle.key_id }));
        assert_eq!(s.corrupt_key(&[1; QKD_KEY_ID_LEN]), Err(QkdError::NotFound));
    }

    #[test]
    fn rate_limit_caps_issuance_per_window() {
        let s = store();
        s.set_rate_limit(Some(2));
        s.get_key("alice", "bob").unwrap();
        s.get_key("alice", "bob").unwrap();
        assert!(matches!(
            s.get_key("alice", "bob"),
            Err(QkdError::Unavailable(_))
        ));
        s.set_rate_limit(None);
        s.get_key("alice", "bob").unwrap();
    }

    #[test]
    fn concurrent_fetches_deliver_exactly_once() {
        let s = store();
        let handle = s.get_key("alice", "bob").unwrap();
        let mut threads = Vec::new();
        for _ in 0..8 {
            let s = Arc::clone(&s);
            let id = handle.key_id;
            threads.push(std::thread::spawn(move || {
                s.get_key_by_id("bob", "alice", &id).is_ok()
            }));
        }
        let successes: usize = threads
            .into_iter()
            .map(|t| t.join().unwrap() as usize)
            .sum();
        assert_eq!(successes, 1);
    }
}
