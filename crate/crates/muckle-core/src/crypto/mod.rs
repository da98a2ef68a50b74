//! Algorithm-agnostic primitive interfaces (KEM, dual PRF, MAC, AEAD, hash),
//! cipher-suite bundles, and a registry of built-in instantiations.
//!
//! Every algorithm is addressed by a short string id so that alternative
//! implementations (e.g. a hardware-backed KEM) can be swapped in without
//! touching the handshake logic. All algorithm objects are stateless and
//! safe to share across threads; randomness is always injected by the caller.

mod experiments;
#[cfg(feature = "mlkem")]
mod mlkem;
mod primitives;
mod toy;

pub use experiments::{
    run_euf_cma_experiment, run_ind_cca_experiment, KemAttackMode, KemChallenge, KemOracles,
    MacOracles,
};
#[cfg(feature = "mlkem")]
pub use mlkem::{MlKem512Kem, X25519Kem};
pub use primitives::{ChaCha20Poly1305Aead, HmacSha256Mac, HmacSha256Prf, Sha256Hash, WeakMac};
pub(crate) use primitives::hmac_sha256;
pub use toy::ToyKem;

use std::sync::Arc;

use rand_core::CryptoRngCore;

use crate::error::CryptoError;

/// A freshly generated KEM key pair, as raw encoded byte strings.
#[derive(Debug, Clone)]
pub struct KemKeyPair {
    pub public_key: Vec<u8>,
    pub secret_key: Vec<u8>,
}

/// Key-encapsulation mechanism: key generation, encapsulation against a
/// public key, decapsulation with the secret key.
///
/// All inputs and outputs are length-checked against the declared sizes;
/// implementations must emit byte strings of exactly those lengths.
pub trait Kem: Send + Sync {
    fn alg_id(&self) -> &'static str;
    fn public_key_len(&self) -> usize;
    fn secret_key_len(&self) -> usize;
    fn ciphertext_len(&self) -> usize;
    fn shared_secret_len(&self) -> usize;

    fn keygen(&self, rng: &mut dyn CryptoRngCore) -> KemKeyPair;

    /// Returns `(ciphertext, shared_secret)`.
    fn encaps(
        &self,
        public_key: &[u8],
        rng: &mut dyn CryptoRngCore,
    ) -> Result<(Vec<u8>, Vec<u8>), CryptoError>;

    fn decaps(&self, secret_key: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError>;
}

/// Dual PRF: pseudorandom when keyed by either argument. The handshake key
/// schedule evaluates it as `F(key, input)` with a fixed 32-byte output.
///
/// The empty byte string is an accepted key: the first handshake stage keys
/// one evaluation with an empty chaining state.
pub trait DualPrf: Send + Sync {
    fn alg_id(&self) -> &'static str;
    fn output_len(&self) -> usize;
    fn eval(&self, key: &[u8], input: &[u8]) -> Vec<u8>;
}

/// Message authentication code with fixed-length tags.
pub trait MacScheme: Send + Sync {
    fn alg_id(&self) -> &'static str;
    fn tag_len(&self) -> usize;
    fn auth(&self, key: &[u8], msg: &[u8]) -> Vec<u8>;
    /// Constant-time comparison against a freshly computed tag.
    fn verify(&self, key: &[u8], msg: &[u8], tag: &[u8]) -> bool;
}

/// Unkeyed cryptographic hash with a 32-byte digest.
pub trait HashScheme: Send + Sync {
    fn alg_id(&self) -> &'static str;
    fn output_len(&self) -> usize;
    fn hash(&self, data: &[u8]) -> Vec<u8>;
}

/// Authenticated encryption with associated data.
pub trait AeadScheme: Send + Sync {
    fn alg_id(&self) -> &'static str;
    fn key_len(&self) -> usize;
    fn nonce_len(&self) -> usize;
    /// Ciphertext expansion: `|ct| = |pt| + tag_overhead()`.
    fn tag_overhead(&self) -> usize;
    fn seal(
        &self,
        key: &[u8],
        nonce: &[u8],
        ad: &[u8],
        plaintext: &[u8],
    ) -> Result<Vec<u8>, CryptoError>;
    /// Fails with [`CryptoError::AeadAuth`] on any tamper; never returns
    /// unauthenticated plaintext.
    fn open(
        &self,
        key: &[u8],
        nonce: &[u8],
        ad: &[u8],
        ciphertext: &[u8],
    ) -> Result<Vec<u8>, CryptoError>;
}

/// The full set of algorithms one handshake configuration runs with.
///
/// `classical_kem` is optional: without it the handshake carries empty
/// classical key/ciphertext fields and an empty classical shared secret.
/// `static_kem` is the long-term KEM used for implicit authentication and is
/// always required.
#[derive(Clone)]
pub struct CipherSuite {
    pub id: String,
    pub classical_kem: Option<Arc<dyn Kem>>,
    pub pq_kem: Arc<dyn Kem>,
    pub static_kem: Arc<dyn Kem>,
    pub prf: Arc<dyn DualPrf>,
    pub mac: Arc<dyn MacScheme>,
    pub hash: Arc<dyn HashScheme>,
    pub aead: Arc<dyn AeadScheme>,
}

impl std::fmt::Debug for CipherSuite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CipherSuite")
            .field("id", &self.id)
            .field(
                "classical_kem",
                &self.classical_kem.as_ref().map(|k| k.alg_id()),
            )
            .field("pq_kem", &self.pq_kem.alg_id())
            .field("static_kem", &self.static_kem.alg_id())
            .field("prf", &self.prf.alg_id())
            .field("mac", &self.mac.alg_id())
            .field("hash", &self.hash.alg_id())
            .field("aead", &self.aead.alg_id())
            .finish()
    }
}

/// Ids of the suites [`suite`] can construct with the compiled feature set.
pub fn builtin_suite_ids() -> Vec<&'static str> {
    #[allow(unused_mut)]
    let mut ids = vec!["toy", "toy-pq-only"];
    #[cfg(feature = "mlkem")]
    ids.push("mlkem512-x25519");
    ids
}

/// Look up a built-in cipher suite by id.
pub fn suite(id: &str) -> Result<CipherSuite, CryptoError> {
    let toy: Arc<dyn Kem> = Arc::new(ToyKem);
    let prf: Arc<dyn DualPrf> = Arc::new(HmacSha256Prf);
    let mac: Arc<dyn MacScheme> = Arc::new(HmacSha256Mac);
    let hash: Arc<dyn HashScheme> = Arc::new(Sha256Hash);
    let aead: Arc<dyn AeadScheme> = Arc::new(ChaCha20Poly1305Aead);
    match id {
        "toy" => Ok(CipherSuite {
            id: id.to_string(),
            classical_kem: Some(toy.clone()),
            pq_kem: toy.clone(),
            static_kem: toy,
            prf,
            mac,
            hash,
            aead,
        }),
        "toy-pq-only" => Ok(CipherSuite {
            id: id.to_string(),
            classical_kem: None,
            pq_kem: toy.clone(),
            static_kem: toy,
            prf,
            mac,
            hash,
            aead,
        }),
        #[cfg(feature = "mlkem")]
        "mlkem512-x25519" => Ok(CipherSuite {
            id: id.to_string(),
            classical_kem: Some(Arc::new(X25519Kem)),
            pq_kem: Arc::new(MlKem512Kem),
            static_kem: Arc::new(MlKem512Kem),
            prf,
            mac,
            hash,
            aead,
        }),
        other => Err(CryptoError::UnknownAlgorithm(other.to_string())),
    }
}

/// Look up a registered KEM by algorithm id (used when validating the
/// algorithm named inside a received certificate).
pub fn kem(alg_id: &str) -> Result<Arc<dyn Kem>, CryptoError> {
    match alg_id {
        "toy-kem" => Ok(Arc::new(ToyKem)),
        #[cfg(feature = "mlkem")]
        "x25519" => Ok(Arc::new(X25519Kem)),
        #[cfg(feature = "mlkem")]
        "ml-kem-512" => Ok(Arc::new(MlKem512Kem)),
        other => Err(CryptoError::UnknownAlgorithm(other.to_string())),
    }
}

/// Check that `bytes` has the declared length for `what`, for `alg`.
pub(crate) fn check_len(
    alg: &'static str,
    what: &'static str,
    bytes: &[u8],
    expected: usize,
) -> Result<(), CryptoError> {
    if bytes.len() != expected {
        return Err(CryptoError::Length {
            alg,
            what,
            got: bytes.len(),
            expected,
        });
    }
    Ok(())
}
