//! Muckle# hybrid authenticated key exchange.
//!
//! The session key of each handshake stage mixes three independent secret
//! sources — an ephemeral classical KEM, an ephemeral post-quantum KEM, and a
//! symmetric key delivered out-of-band by a QKD key service — so the key
//! stays secure while at least one source holds. Long-term KEM keys carried
//! in certificates authenticate both peers implicitly; MAC tags over the
//! transcript confirm the keys explicitly; and a chained secret state links
//! successive stages of one session.
//!
//! Crate layout:
//! - [`crypto`]: primitive interfaces, built-in suites, security-experiment
//!   drivers for MAC forgery and KEM distinguishing games.
//! - [`keyschedule`]: the staged secret-derivation chain and transcript
//!   hashing.
//! - [`wire`]: message and certificate codecs.
//! - [`qkd`]: simulated QKD key store and the client interface the
//!   handshake uses to fetch keys.
//! - [`protocol`]: the per-session handshake state machine.
//! - [`hake`]: an executable key-indistinguishability experiment environment
//!   driving real sessions under an adversary's schedule.

pub mod crypto;
pub mod error;
pub mod hake;
pub mod keyschedule;
pub mod protocol;
pub mod qkd;
pub mod wire;

pub use error::{
    CryptoError, ExperimentError, ProtocolError, QkdError, RejectReason, WireError,
};
