//! Error types shared across the crate, and the machine-readable reject
//! reasons the session state machine reports when a handshake fails.

use thiserror::Error;

/// Failures inside a primitive (KEM, MAC, AEAD, hash, PRF).
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    /// An input byte string does not have the length the algorithm declares.
    #[error("{alg}: {what} has length {got}, expected {expected}")]
    Length {
        alg: &'static str,
        what: &'static str,
        got: usize,
        expected: usize,
    },
    /// AEAD decryption failed authentication; no plaintext is released.
    #[error("AEAD authentication failed")]
    AeadAuth,
    /// The KEM reported a decapsulation failure.
    #[error("KEM decapsulation failed")]
    DecapsFailure,
    /// Lookup of an algorithm or suite id that is not registered.
    #[error("unknown algorithm or suite id {0:?}")]
    UnknownAlgorithm(String),
}

/// Failures while decoding wire bytes into messages or certificates.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    /// Input ended before a declared length was satisfied.
    #[error("input truncated: {context}")]
    Truncated { context: &'static str },
    /// Message type byte outside the known range.
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    /// Bytes remained after the structure was fully parsed.
    #[error("{0} trailing bytes after end of structure")]
    TrailingBytes(usize),
    /// A length field exceeds what encoding permits.
    #[error("length field overflows the encodable range: {context}")]
    LengthOverflow { context: &'static str },
    /// An identifier field is not valid UTF-8.
    #[error("identifier field is not valid UTF-8")]
    InvalidString,
    /// A field that must have a fixed length has a different one.
    #[error("{what} has length {got}, expected {expected}")]
    FieldLength {
        what: &'static str,
        got: usize,
        expected: usize,
    },
}

/// Failures reported by a QKD key source.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QkdError {
    /// The key id was never issued (or has expired from the store).
    #[error("QKD key id not found")]
    NotFound,
    /// The requesting party already fetched this key once.
    #[error("QKD key already consumed by this party")]
    AlreadyConsumed,
    /// The requester is not a member of the pair the key was issued for.
    #[error("requester is not authorized for this QKD key")]
    Unauthorized,
    /// No link for the pair, pool exhausted, or the service is down.
    #[error("QKD key source unavailable: {0}")]
    Unavailable(String),
    /// Transport-level failure talking to a networked key service.
    #[error("QKD transport failure: {0}")]
    Transport(String),
}

/// Machine-readable classification of why a session rejected.
///
/// The byte-flip tamper tests key on these classes, so the mapping from
/// [`ProtocolError`] variants must stay stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    DecodeError,
    ScheduleOrder,
    AeadFailure,
    CertFailure,
    IdentityMismatch,
    MacFailure,
    QkdUnavailable,
    StateError,
}

impl RejectReason {
    /// Stable string form, used in logs and CLI output.
    pub fn code(self) -> &'static str {
        match self {
            RejectReason::DecodeError => "decode-error",
            RejectReason::ScheduleOrder => "schedule-order",
            RejectReason::AeadFailure => "aead-failure",
            RejectReason::CertFailure => "cert-failure",
            RejectReason::IdentityMismatch => "identity-mismatch",
            RejectReason::MacFailure => "mac-failure",
            RejectReason::QkdUnavailable => "qkd-unavailable",
            RejectReason::StateError => "state-error",
        }
    }
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// Failures in the session state machine. Every variant maps onto exactly one
/// [`RejectReason`] via [`ProtocolError::reject_reason`].
#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("decode: {0}")]
    Decode(#[from] WireError),
    /// A key-schedule value was requested or derived before its dependencies.
    #[error("key schedule dependency not satisfied: {0}")]
    ScheduleOrder(&'static str),
    #[error("AEAD open failed on {context}")]
    Aead { context: &'static str },
    #[error("certificate check failed: {0}")]
    Cert(String),
    #[error("peer certificate subject {got:?} does not match intended partner {want:?}")]
    IdentityMismatch { got: String, want: String },
    #[error("key-confirmation MAC verification failed")]
    Mac,
    #[error("QKD: {0}")]
    Qkd(#[from] QkdError),
    #[error("session state: {0}")]
    State(String),
    #[error("crypto: {0}")]
    Crypto(#[from] CryptoError),
}

impl ProtocolError {
    /// The reject class reported to the peer-visible session status.
    pub fn reject_reason(&self) -> RejectReason {
        match self {
            ProtocolError::Decode(_) => RejectReason::DecodeError,
            ProtocolError::ScheduleOrder(_) => RejectReason::ScheduleOrder,
            ProtocolError::Aead { .. } => RejectReason::AeadFailure,
            ProtocolError::Cert(_) => RejectReason::CertFailure,
            ProtocolError::IdentityMismatch { .. } => RejectReason::IdentityMismatch,
            ProtocolError::Mac => RejectReason::MacFailure,
            ProtocolError::Qkd(_) => RejectReason::QkdUnavailable,
            ProtocolError::State(_) => RejectReason::StateError,
            // A malformed cryptographic field is a decoding problem except for
            // an authentication failure, which keeps its own class.
            ProtocolError::Crypto(CryptoError::AeadAuth) => RejectReason::AeadFailure,
            ProtocolError::Crypto(_) => RejectReason::DecodeError,
        }
    }
}

/// Misuse of a security-experiment harness by an adversary strategy.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExperimentError {
    /// The decapsulation oracle was queried in a mode where it does not exist.
    #[error("decapsulation oracle is not available in CPA mode")]
    OracleUnavailable,
    /// A query used out-of-range party/session/stage coordinates.
    #[error("query out of range: {0}")]
    OutOfRange(String),
    /// A second Test query was issued in the same experiment run.
    #[error("Test was already issued in this experiment")]
    TestAlreadyIssued,
}
