//! Wire encoding for the eight handshake messages and certificates, plus
//! stream framing helpers for running the handshake over TCP.
//!
//! Layout conventions (all integers big-endian):
//! - message  = `msg_type (1) ‖ body_len (3) ‖ body`
//! - field    = `len (2) ‖ bytes`
//! - message 1 body = framed public keys (classical, post-quantum), framed
//!   32-byte nonce, framed 16-byte QKD key id
//! - message 2 body = framed ciphertexts (classical, post-quantum), framed
//!   32-byte nonce
//! - messages 3–8 body = raw 8-byte record sequence number, then one framed
//!   AEAD ciphertext
//!
//! Decoding consumes input exactly: any missing or surplus byte is an error,
//! and fixed-length fields are checked against their declared lengths.

use crate::error::WireError;

pub const MSG_HEADER_LEN: usize = 4;
pub const FIELD_HEADER_LEN: usize = 2;
/// Raw (unframed) record sequence number width in messages 3–8.
pub const RECORD_SEQ_LEN: usize = 8;
pub const NONCE_LEN: usize = 32;
pub const MAX_BODY_LEN: usize = (1 << 24) - 1;
pub const MAX_FIELD_LEN: usize = u16::MAX as usize;
/// Bytes a record message adds around its AEAD ciphertext.
pub const RECORD_OVERHEAD: usize = MSG_HEADER_LEN + RECORD_SEQ_LEN + FIELD_HEADER_LEN;

/// Encoded size of one framed field.
pub fn framed_len(body: usize) -> usize {
    FIELD_HEADER_LEN + body
}

/// First flight: ephemeral public keys, initiator nonce, QKD key id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HelloInit {
    /// Empty when the suite has no classical KEM.
    pub classical_pk: Vec<u8>,
    pub pq_pk: Vec<u8>,
    pub nonce: [u8; NONCE_LEN],
    pub qkd_key_id: [u8; crate::qkd::QKD_KEY_ID_LEN],
}

/// Second flight: ephemeral ciphertexts and responder nonce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HelloResp {
    /// Empty when the suite has no classical KEM.
    pub classical_ct: Vec<u8>,
    pub pq_ct: Vec<u8>,
    pub nonce: [u8; NONCE_LEN],
}

/// Messages 3–8: an encrypted record under the current traffic key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    /// Message number, 3..=8.
    pub msg_type: u8,
    /// Sender-side record sequence number, used in nonce construction.
    pub seq: u64,
    pub ciphertext: Vec<u8>,
}

/// Associated data bound into the AEAD of record message `msg_type`.
pub fn record_ad(msg_type: u8) -> Vec<u8> {
    format!("Message {msg_type}").into_bytes()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    HelloInit(HelloInit),
    HelloResp(HelloResp),
    Record(Record),
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        match self {
            Message::HelloInit(_) => 1,
            Message::HelloResp(_) => 2,
            Message::Record(r) => r.msg_type,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        let mut body = Vec::new();
        match self {
            Message::HelloInit(m) => {
                push_framed(&mut body, &m.classical_pk, "classical public key")?;
                push_framed(&mut body, &m.pq_pk, "post-quantum public key")?;
                push_framed(&mut body, &m.nonce, "initiator nonce")?;
                push_framed(&mut body, &m.qkd_key_id, "QKD key id")?;
            }
            Message::HelloResp(m) => {
                push_framed(&mut body, &m.classical_ct, "classical ciphertext")?;
                push_framed(&mut body, &m.pq_ct, "post-quantum ciphertext")?;
                push_framed(&mut body, &m.nonce, "responder nonce")?;
            }
            Message::Record(r) => {
                if !(3..=8).contains(&r.msg_type) {
                    return Err(WireError::UnknownType(r.msg_type));
                }
                body.extend_from_slice(&r.seq.to_be_bytes());
                push_framed(&mut body, &r.ciphertext, "record ciphertext")?;
            }
        }
        if body.len() > MAX_BODY_LEN {
            return Err(WireError::LengthOverflow {
                context: "message body",
            });
        }
        let mut out = Vec::with_capacity(MSG_HEADER_LEN + body.len());
        out.push(self.msg_type());
        out.extend_from_slice(&(body.len() as u32).to_be_bytes()[1..]);
        out.extend_from_slice(&body);
        Ok(out)
    }

    /// Decode exactly one message from `bytes`, consuming all of it.
    pub fn decode(bytes: &[u8]) -> Result<Message, WireError> {
        let mut cur = Cursor::new(bytes);
        let msg_type = cur.take_u8("message header")?;
        let body_len = cur.take_u24("message header")?;
        if cur.remaining() < body_len {
            return Err(WireError::Truncated {
                context: "message body",
            });
        }
        let msg = match msg_type {
            1 => {
                let classical_pk = cur.take_framed("classical public key")?.to_vec();
                let pq_pk = cur.take_framed("post-quantum public key")?.to_vec();
                let nonce = take_fixed(&mut cur, "initiator nonce")?;
                let qkd_key_id = take_fixed(&mut cur, "QKD key id")?;
                Message::HelloInit(HelloInit {
                    classical_pk,
                    pq_pk,
                    nonce,
                    qkd_key_id,
                })
            }
            2 => {
                let classical_ct = cur.take_framed("classical ciphertext")?.to_vec();
                let pq_ct = cur.take_framed("post-quantum ciphertext")?.to_vec();
                let nonce = take_fixed(&mut cur, "responder nonce")?;
                Message::HelloResp(HelloResp {
                    classical_ct,
                    pq_ct,
                    nonce,
                })
            }
            3..=8 => {
                let seq_bytes = cur.take(RECORD_SEQ_LEN, "record sequence number")?;
                let seq = u64::from_be_bytes(seq_bytes.try_into().unwrap());
                let ciphertext = cur.take_framed("record ciphertext")?.to_vec();
                Message::Record(Record {
                    msg_type,
                    seq,
                    ciphertext,
                })
            }
            other => return Err(WireError::UnknownType(other)),
        };
        // The declared body length and the actual input must both be spent.
        let consumed_body = bytes.len() - cur.remaining() - MSG_HEADER_LEN;
        if consumed_body < body_len {
            return Err(WireError::TrailingBytes(body_len - consumed_body));
        }
        if consumed_body > body_len {
            // The fields ran past the declared body end.
            return Err(WireError::Truncated {
                context: "message body",
            });
        }
        cur.finish()?;
        Ok(msg)
    }
}

/// A long-term KEM public key binding: subject identity, algorithm, key,
/// issuer, and the issuer's attestation bytes. Encoded as five framed
/// fields with no outer header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub subject_id: String,
    pub kem_alg_id: String,
    pub public_key: Vec<u8>,
    pub issuer_id: String,
    pub attestation: Vec<u8>,
}

impl Certificate {
    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        let mut out = Vec::with_capacity(self.encoded_len());
        push_framed(&mut out, self.subject_id.as_bytes(), "subject id")?;
        push_framed(&mut out, self.kem_alg_id.as_bytes(), "KEM algorithm id")?;
        push_framed(&mut out, &self.public_key, "certificate public key")?;
        push_framed(&mut out, self.issuer_id.as_bytes(), "issuer id")?;
        push_framed(&mut out, &self.attestation, "attestation")?;
        Ok(out)
    }

    /// Decode from `bytes`, consuming all of it.
    pub fn decode(bytes: &[u8]) -> Result<Certificate, WireError> {
        let mut cur = Cursor::new(bytes);
        let subject_id = take_string(&mut cur, "subject id")?;
        let kem_alg_id = take_string(&mut cur, "KEM algorithm id")?;
        let public_key = cur.take_framed("certificate public key")?.to_vec();
        let issuer_id = take_string(&mut cur, "issuer id")?;
        let attestation = cur.take_framed("attestation")?.to_vec();
        cur.finish()?;
        Ok(Certificate {
            subject_id,
            kem_alg_id,
            public_key,
            issuer_id,
            attestation,
        })
    }

    pub fn encoded_len(&self) -> usize {
        5 * FIELD_HEADER_LEN
            + self.subject_id.len()
            + self.kem_alg_id.len()
            + self.public_key.len()
            + self.issuer_id.len()
            + self.attestation.len()
    }
}

fn push_framed(out: &mut Vec<u8>, bytes: &[u8], context: &'static str) -> Result<(), WireError> {
    if bytes.len() > MAX_FIELD_LEN {
        return Err(WireError::LengthOverflow { context });
    }
    out.extend_from_slice(&(bytes.len() as u16).to_be_bytes());
    out.extend_from_slice(bytes);
    Ok(())
}

fn take_fixed<const N: usize>(cur: &mut Cursor<'_>, what: &'static str) -> Result<[u8; N], WireError> {
    let bytes = cur.take_framed(what)?;
    bytes.try_into().map_err(|_| WireError::FieldLength {
        what,
        got: bytes.len(),
        expected: N,
    })
}

fn take_string(cur: &mut Cursor<'_>, what: &'static str) -> Result<String, WireError> {
    let bytes = cur.take_framed(what)?;
    String::from_utf8(bytes.to_vec()).map_err(|_| WireError::InvalidString)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Cursor { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize, context: &'static str) -> Result<&'a [u8], WireError> {
        if self.remaining() < n {
            return Err(WireError::Truncated { context });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn take_u8(&mut self, context: &'static str) -> Result<u8, WireError> {
        Ok(self.take(1, context)?[0])
    }

    fn take_u24(&mut self, context: &'static str) -> Result<usize, WireError> {
        let b = self.take(3, context)?;
        Ok(((b[0] as usize) << 16) | ((b[1] as usize) << 8) | b[2] as usize)
    }

    fn take_framed(&mut self, context: &'static str) -> Result<&'a [u8], WireError> {
        let b = self.take(FIELD_HEADER_LEN, context)?;
        let len = u16::from_be_bytes([b[0], b[1]]) as usize;
        self.take(len, context)
    }

    fn finish(self) -> Result<(), WireError> {
        if self.pos != self.buf.len() {
            return Err(WireError::TrailingBytes(self.buf.len() - self.pos));
        }
        Ok(())
    }
}

/// Read one length-framed message from a byte stream. Returns the raw wire
/// bytes (header included) so callers can feed them to the transcript
/// unchanged, or `None` on clean end-of-stream at a message boundary.
pub fn read_message<R: std::io::Read>(r: &mut R) -> std::io::Result<Option<Vec<u8>>> {
    let mut header = [0u8; MSG_HEADER_LEN];
    let mut filled = 0;
    while filled < header.len() {
        let n = r.read(&mut header[filled..])?;
        if n == 0 {
            if filled == 0 {
                return Ok(None);
            }
            return Err(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "stream ended inside a message header",
            ));
        }
        filled += n;
    }
    let body_len = ((header[1] as usize) << 16) | ((header[2] as usize) << 8) | header[3] as usize;
    let mut wire = Vec::with_capacity(MSG_HEADER_LEN + body_len);
    wire.extend_from_slice(&header);
    wire.resize(MSG_HEADER_LEN + body_len, 0);
    r.read_exact(&mut wire[MSG_HEADER_LEN..])?;
    Ok(Some(wire))
}

/// Write raw wire bytes to a stream.
pub fn write_message<W: std::io::Write>(w: &mut W, wire: &[u8]) -> std::io::Result<()> {
    w.write_all(wire)
}
