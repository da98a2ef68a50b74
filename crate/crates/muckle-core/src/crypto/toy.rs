//! Deterministic toy KEM for desk-scale testing.
//!
//! INSECURE — TEST ONLY. The shared secret is a public function of the
//! public key and the ciphertext, so anyone observing the wire can recompute
//! it. That is intentional: the security-model harness uses this breakability
//! to prove it can detect real key-distinguishing attacks. Never deploy.

use rand_core::CryptoRngCore;
use sha2::{Digest, Sha256};

use super::{check_len, Kem, KemKeyPair};
use crate::error::CryptoError;

const LEN: usize = 32;

/// Toy KEM: `sk` random, `pk = H("pk-derive" ‖ sk)`, `ct = r`,
/// `ss = H("ss" ‖ pk ‖ r)`. Perfectly correct, trivially breakable.
#[derive(Debug, Clone, Copy)]
pub struct ToyKem;

fn pk_from_sk(sk: &[u8]) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update(b"pk-derive");
    h.update(sk);
    h.finalize().to_vec()
}

/// The toy shared secret is recomputable from public values alone; exposed
/// so harnesses can script the attack that exploits it.
pub(crate) fn toy_shared_secret(pk: &[u8], ct: &[u8]) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update(b"ss");
    h.update(pk);
    h.update(ct);
    h.finalize().to_vec()
}

impl ToyKem {
    /// Recover the shared secret from the public key and ciphertext alone —
    /// the deliberate break in this KEM. Attack harnesses call this to show
    /// the security experiments detect a genuinely broken primitive.
    pub fn recover_shared_secret(public_key: &[u8], ciphertext: &[u8]) -> Vec<u8> {
        toy_shared_secret(public_key, ciphertext)
    }
}

impl Kem for ToyKem {
    fn alg_id(&self) -> &'static str {
        "toy-kem"
    }
    fn public_key_len(&self) -> usize {
        LEN
    }
    fn secret_key_len(&self) -> usize {
        LEN
    }
    fn ciphertext_len(&self) -> usize {
        LEN
    }
    fn shared_secret_len(&self) -> usize {
        LEN
    }

    fn keygen(&self, rng: &mut dyn CryptoRngCore) -> KemKeyPair {
        let mut sk = vec![0u8; LEN];
        rng.fill_bytes(&mut sk);
        KemKeyPair {
            public_key: pk_from_sk(&sk),
            secret_key: sk,
        }
    }

    fn encaps(
        &self,
        public_key: &[u8],
        rng: &mut dyn CryptoRngCore,
    ) -> Result<(Vec<u8>, Vec<u8>), CryptoError> {
        check_len(self.alg_id(), "public key", public_key, LEN)?;
        let mut r = vec![0u8; LEN];
        rng.fill_bytes(&mut r);
        let ss = toy_shared_secret(public_key, &r);
        Ok((r, ss))
    }

    fn decaps(&self, secret_key: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        check_len(self.alg_id(), "secret key", secret_key, LEN)?;
        check_len(self.alg_id(), "ciphertext", ciphertext, LEN)?;
        Ok(toy_shared_secret(&pk_from_sk(secret_key), ciphertext))
    }
}
