//! Real key-exchange algorithms behind the `mlkem` feature: ML-KEM-512
//! (FIPS 203, security level 1) and X25519 wrapped as a KEM.

use kem::{Decapsulate, Encapsulate};
use ml_kem::kem::{DecapsulationKey, EncapsulationKey};
use ml_kem::{Encoded, EncodedSizeUser, KemCore, MlKem512, MlKem512Params};
use rand_core::CryptoRngCore;
use x25519_dalek::{PublicKey, StaticSecret};

use super::{check_len, Kem, KemKeyPair};
use crate::error::CryptoError;

const MLKEM512_EK_LEN: usize = 800;
const MLKEM512_DK_LEN: usize = 1632;
const MLKEM512_CT_LEN: usize = 768;

/// ML-KEM-512 with keys and ciphertexts in their standard byte encodings.
#[derive(Debug, Clone, Copy)]
pub struct MlKem512Kem;

impl Kem for MlKem512Kem {
    fn alg_id(&self) -> &'static str {
        "ml-kem-512"
    }
    fn public_key_len(&self) -> usize {
        MLKEM512_EK_LEN
    }
    fn secret_key_len(&self) -> usize {
        MLKEM512_DK_LEN
    }
    fn ciphertext_len(&self) -> usize {
        MLKEM512_CT_LEN
    }
    fn shared_secret_len(&self) -> usize {
        32
    }

    fn keygen(&self, rng: &mut dyn CryptoRngCore) -> KemKeyPair {
        let (dk, ek) = MlKem512::generate(&mut &mut *rng);
        KemKeyPair {
            public_key: ek.as_bytes().to_vec(),
            secret_key: dk.as_bytes().to_vec(),
        }
    }

    fn encaps(
        &self,
        public_key: &[u8],
        rng: &mut dyn CryptoRngCore,
    ) -> Result<(Vec<u8>, Vec<u8>), CryptoError> {
        check_len(self.alg_id(), "public key", public_key, MLKEM512_EK_LEN)?;
        let encoded = Encoded::<EncapsulationKey<MlKem512Params>>::try_from(public_key)
            .expect("length checked");
        let ek = EncapsulationKey::<MlKem512Params>::from_bytes(&encoded);
        let (ct, ss) = ek
            .encapsulate(&mut &mut *rng)
            .map_err(|()| CryptoError::DecapsFailure)?;
        Ok((ct.to_vec(), ss.to_vec()))
    }

    fn decaps(&self, secret_key: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        check_len(self.alg_id(), "secret key", secret_key, MLKEM512_DK_LEN)?;
        check_len(self.alg_id(), "ciphertext", ciphertext, MLKEM512_CT_LEN)?;
        let encoded = Encoded::<DecapsulationKey<MlKem512Params>>::try_from(secret_key)
            .expect("length checked");
        let dk = DecapsulationKey::<MlKem512Params>::from_bytes(&encoded);
        let ct = ml_kem::Ciphertext::<MlKem512>::try_from(ciphertext).expect("length checked");
        let ss = dk.decapsulate(&ct).map_err(|()| CryptoError::DecapsFailure)?;
        Ok(ss.to_vec())
    }
}

/// X25519 Diffie-Hellman in KEM form: the ciphertext is an ephemeral public
/// key and the shared secret is the raw DH output.
#[derive(Debug, Clone, Copy)]
pub struct X25519Kem;

impl Kem for X25519Kem {
    fn alg_id(&self) -> &'static str {
        "x25519"
    }
    fn public_key_len(&self) -> usize {
        32
    }
    fn secret_key_len(&self) -> usize {
        32
    }
    fn ciphertext_len(&self) -> usize {
        32
    }
    fn shared_secret_len(&self) -> usize {
        32
    }

    fn keygen(&self, rng: &mut dyn CryptoRngCore) -> KemKeyPair {
        let sk = StaticSecret::random_from_rng(&mut *rng);
        let pk = PublicKey::from(&sk);
        KemKeyPair {
            public_key: pk.as_bytes().to_vec(),
            secret_key: sk.to_bytes().to_vec(),
        }
    }

    fn encaps(
        &self,
        public_key: &[u8],
        rng: &mut dyn CryptoRngCore,
    ) -> Result<(Vec<u8>, Vec<u8>), CryptoError> {
        check_len(self.alg_id(), "public key", public_key, 32)?;
        let their_pk = PublicKey::from(<[u8; 32]>::try_from(public_key).expect("length checked"));
        let eph = StaticSecret::random_from_rng(&mut *rng);
        let ct = PublicKey::from(&eph).as_bytes().to_vec();
        let ss = eph.diffie_hellman(&their_pk).as_bytes().to_vec();
        Ok((ct, ss))
    }

    fn decaps(&self, secret_key: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        check_len(self.alg_id(), "secret key", secret_key, 32)?;
        check_len(self.alg_id(), "ciphertext", ciphertext, 32)?;
        let sk = StaticSecret::from(<[u8; 32]>::try_from(secret_key).expect("length checked"));
        let their_pk = PublicKey::from(<[u8; 32]>::try_from(ciphertext).expect("length checked"));
        Ok(sk.diffie_hellman(&their_pk).as_bytes().to_vec())
    }
}
