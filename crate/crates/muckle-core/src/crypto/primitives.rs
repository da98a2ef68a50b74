//! Default symmetric primitives: SHA-256, HMAC-SHA-256 as dual PRF and MAC,
//! ChaCha20-Poly1305 AEAD, and a deliberately weakened 1-byte-tag MAC used
//! only to prove the forgery experiment can detect weak MACs.

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Nonce};
use hmac::{Hmac, Mac};
use sha2::{Digest, Sha256};
use subtle::ConstantTimeEq;

use super::{check_len, AeadScheme, DualPrf, HashScheme, MacScheme};
use crate::error::CryptoError;

type HmacSha256 = Hmac<Sha256>;

pub(crate) fn hmac_sha256(key: &[u8], msg: &[u8]) -> Vec<u8> {
    // HMAC accepts keys of any length, including empty (it pads/hashes).
    let mut mac =
        <HmacSha256 as Mac>::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(msg);
    mac.finalize().into_bytes().to_vec()
}

/// SHA-256 with a 32-byte digest.
#[derive(Debug, Clone, Copy)]
pub struct Sha256Hash;

impl HashScheme for Sha256Hash {
    fn alg_id(&self) -> &'static str {
        "sha-256"
    }
    fn output_len(&self) -> usize {
        32
    }
    fn hash(&self, data: &[u8]) -> Vec<u8> {
        Sha256::digest(data).to_vec()
    }
}

/// HMAC-SHA-256 evaluated as `F(key, input)`; the standard realization of a
/// dual PRF (pseudorandom keyed by either argument).
#[derive(Debug, Clone, Copy)]
pub struct HmacSha256Prf;

impl DualPrf for HmacSha256Prf {
    fn alg_id(&self) -> &'static str {
        "hmac-sha256"
    }
    fn output_len(&self) -> usize {
        32
    }
    fn eval(&self, key: &[u8], input: &[u8]) -> Vec<u8> {
        hmac_sha256(key, input)
    }
}

/// HMAC-SHA-256 as a MAC with full 32-byte tags.
#[derive(Debug, Clone, Copy)]
pub struct HmacSha256Mac;

impl MacScheme for HmacSha256Mac {
    fn alg_id(&self) -> &'static str {
        "hmac-sha256"
    }
    fn tag_len(&self) -> usize {
        32
    }
    fn auth(&self, key: &[u8], msg: &[u8]) -> Vec<u8> {
        hmac_sha256(key, msg)
    }
    fn verify(&self, key: &[u8], msg: &[u8], tag: &[u8]) -> bool {
        let expected = hmac_sha256(key, msg);
        tag.len() == expected.len() && bool::from(expected.ct_eq(tag))
    }
}

/// INSECURE — TEST ONLY. HMAC-SHA-256 truncated to a single tag byte, so a
/// forger succeeds within 256 verification attempts. Exists to validate that
/// the forgery experiment harness actually detects weak MACs.
#[derive(Debug, Clone, Copy)]
pub struct WeakMac;

impl MacScheme for WeakMac {
    fn alg_id(&self) -> &'static str {
        "weak-mac-8"
    }
    fn tag_len(&self) -> usize {
        1
    }
    fn auth(&self, key: &[u8], msg: &[u8]) -> Vec<u8> {
        hmac_sha256(key, msg)[..1].to_vec()
    }
    fn verify(&self, key: &[u8], msg: &[u8], tag: &[u8]) -> bool {
        let expected = self.auth(key, msg);
        tag.len() == expected.len() && bool::from(expected.ct_eq(tag))
    }
}

/// ChaCha20-Poly1305: 32-byte key, 12-byte nonce, 16-byte tag.
#[derive(Debug, Clone, Copy)]
pub struct ChaCha20Poly1305Aead;

impl AeadScheme for ChaCha20Poly1305Aead {
    fn alg_id(&self) -> &'static str {
        "chacha20-poly1305"
    }
    fn key_len(&self) -> usize {
        32
    }
    fn nonce_len(&self) -> usize {
        12
    }
    fn tag_overhead(&self) -> usize {
        16
    }

    fn seal(
        &self,
        key: &[u8],
        nonce: &[u8],
        ad: &[u8],
        plaintext: &[u8],
    ) -> Result<Vec<u8>, CryptoError> {
        check_len(self.alg_id(), "key", key, self.key_len())?;
        check_len(self.alg_id(), "nonce", nonce, self.nonce_len())?;
        let cipher = ChaCha20Poly1305::new_from_slice(key).expect("length checked");
        cipher
            .encrypt(
                Nonce::from_slice(nonce),
                Payload {
                    msg: plaintext,
                    aad: ad,
                },
            )
            .map_err(|_| CryptoError::AeadAuth)
    }

    fn open(
        &self,
        key: &[u8],
        nonce: &[u8],
        ad: &[u8],
        ciphertext: &[u8],
    ) -> Result<Vec<u8>, CryptoError> {
        check_len(self.alg_id(), "key", key, self.key_len())?;
        check_len(self.alg_id(), "nonce", nonce, self.nonce_len())?;
        let cipher = ChaCha20Poly1305::new_from_slice(key).expect("length checked");
        cipher
            .decrypt(
                Nonce::from_slice(nonce),
                Payload {
                    msg: ciphertext,
                    aad: ad,
                },
            )
            .map_err(|_| CryptoError::AeadAuth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    // RFC 4231 test case 1: HMAC-SHA-256(key = 20×0x0b, "Hi There").
    #[test]
    fn hmac_matches_published_vector() {
        let key = [0x0b_u8; 20];
        let out = HmacSha256Prf.eval(&key, b"Hi There");
        assert_eq!(
            hex::encode(out),
            "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7"
        );
    }

    // Same function keyed with 32×0x0b, frozen from an independent script;
    // this is the keying shape the key schedule uses (32-byte keys).
    #[test]
    fn hmac_32_byte_key_vector() {
        let key = [0x0b_u8; 32];
        let out = HmacSha256Prf.eval(&key, b"Hi There");
        assert_eq!(
            hex::encode(out),
            "198a607eb44bfbc69903a0f1cf2bbdc5ba0aa3f3d9ae3c1c7a3b1696a0b68cf7"
        );
    }

    #[test]
    fn prf_is_deterministic_and_input_sensitive() {
        let k = b"some key";
        let a = HmacSha256Prf.eval(k, b"input");
        let b = HmacSha256Prf.eval(k, b"input");
        let c = HmacSha256Prf.eval(k, b"input\x00");
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 32);
        // Empty key is accepted (first-stage chaining state is empty).
        assert_eq!(HmacSha256Prf.eval(b"", b"x").len(), 32);
    }

    #[test]
    fn mac_round_trip_and_bit_flips() {
        let mut rng = ChaCha20Rng::from_seed([9u8; 32]);
        for _ in 0..100 {
            let key: [u8; 32] = rng.gen();
            let mut msg = [0u8; 48];
            rng.fill(&mut msg[..]);
            let tag = HmacSha256Mac.auth(&key, &msg);
            assert!(HmacSha256Mac.verify(&key, &msg, &tag));
            let wrong_key: [u8; 32] = rng.gen();
            assert!(!HmacSha256Mac.verify(&wrong_key, &msg, &tag));
        }
        // Exhaustive single-bit flips over one tag.
        let key = [1u8; 32];
        let tag = HmacSha256Mac.auth(&key, b"msg");
        for byte in 0..tag.len() {
            for bit in 0..8 {
                let mut bad = tag.clone();
                bad[byte] ^= 1 << bit;
                assert!(!HmacSha256Mac.verify(&key, b"msg", &bad));
            }
        }
    }

    #[test]
    fn weak_mac_has_one_byte_tags() {
        let tag = WeakMac.auth(b"key", b"msg");
        assert_eq!(tag.len(), 1);
        assert!(WeakMac.verify(b"key", b"msg", &tag));
        assert!(!WeakMac.verify(b"key", b"msg", &[tag[0] ^ 1]));
        // Wrong tag length never verifies.
        assert!(!WeakMac.verify(b"key", b"msg", &[tag[0], 0]));
    }

    #[test]
    fn aead_round_trip_including_empty() {
        let key = [7u8; 32];
        let nonce = [2u8; 12];
        for pt in [&b""[..], b"hello", &[0u8; 100]] {
            let ct = ChaCha20Poly1305Aead.seal(&key, &nonce, b"ad", pt).unwrap();
            assert_eq!(ct.len(), pt.len() + 16);
            let back = ChaCha20Poly1305Aead.open(&key, &nonce, b"ad", &ct).unwrap();
            assert_eq!(back, pt);
        }
    }

    #[test]
    fn aead_rejects_every_single_byte_tamper() {
        let key = [7u8; 32];
        let nonce = [2u8; 12];
        let ad = b"associated";
        let pt = b"sixteen byte msg";
        let ct = ChaCha20Poly1305Aead.seal(&key, &nonce, ad, pt).unwrap();
        for i in 0..ct.len() {
            let mut bad = ct.clone();
            bad[i] ^= 0x01;
            assert!(ChaCha20Poly1305Aead.open(&key, &nonce, ad, &bad).is_err());
        }
        for i in 0..nonce.len() {
            let mut bad = nonce;
            bad[i] ^= 0x01;
            assert!(ChaCha20Poly1305Aead.open(&key, &bad, ad, &ct).is_err());
        }
        for i in 0..ad.len() {
            let mut bad = ad.to_vec();
            bad[i] ^= 0x01;
            assert!(ChaCha20Poly1305Aead.open(&key, &nonce, &bad, &ct).is_err());
        }
    }

    #[test]
    fn aead_rejects_bad_lengths() {
        assert!(ChaCha20Poly1305Aead.seal(&[0; 31], &[0; 12], b"", b"").is_err());
        assert!(ChaCha20Poly1305Aead.seal(&[0; 32], &[0; 11], b"", b"").is_err());
    }
}
