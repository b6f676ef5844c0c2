//! Canonical tag-length-value encoding and SHA-256 hashing.
//!
//! Every file this crate writes is a TLV body: per field, one tag byte, a
//! 4-byte big-endian length and the value bytes. Tags must be strictly
//! ascending inside a body, so each message has exactly one encoding and can
//! be hashed or signed without a separate canonicalization pass.

use std::fmt;

use sha2::{Digest as _, Sha256};
use thiserror::Error;

/// Size of a field header: tag byte plus 4-byte length.
const HEADER_LEN: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("malformed TLV data")]
    Malformed,
    #[error("duplicate tag 0x{0:02x}")]
    DuplicateTag(u8),
    #[error("tag 0x{next:02x} follows 0x{prev:02x}")]
    NonAscendingTags { prev: u8, next: u8 },
    #[error("value of tag 0x{0:02x} exceeds the 32-bit length field")]
    ValueTooLong(u8),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TlvField {
    pub tag: u8,
    pub value: Vec<u8>,
}

impl TlvField {
    pub fn new(tag: u8, value: impl Into<Vec<u8>>) -> Self {
        Self {
            tag,
            value: value.into(),
        }
    }
}

fn check_order(prev: Option<u8>, next: u8) -> Result<(), CodecError> {
    match prev {
        Some(p) if p == next => Err(CodecError::DuplicateTag(next)),
        Some(p) if p > next => Err(CodecError::NonAscendingTags { prev: p, next }),
        _ => Ok(()),
    }
}

pub fn encode_tlv(fields: &[TlvField]) -> Result<Vec<u8>, CodecError> {
    let mut prev = None;
    let mut len = 0usize;
    for field in fields {
        check_order(prev, field.tag)?;
        if u32::try_from(field.value.len()).is_err() {
            return Err(CodecError::ValueTooLong(field.tag));
        }
        prev = Some(field.tag);
        len += HEADER_LEN + field.value.len();
    }

    let mut out = Vec::with_capacity(len);
    for field in fields {
        out.push(field.tag);
        out.extend_from_slice(&(field.value.len() as u32).to_be_bytes());
        out.extend_from_slice(&field.value);
    }
    Ok(out)
}

pub fn decode_tlv(data: &[u8]) -> Result<Vec<TlvField>, CodecError> {
    let mut fields = Vec::new();
    let mut prev = None;
    let mut rest = data;
    while !rest.is_empty() {
        if rest.len() < HEADER_LEN {
            return Err(CodecError::Malformed);
        }
        let tag = rest[0];
        let len = u32::from_be_bytes([rest[1], rest[2], rest[3], rest[4]]) as usize;
        let body = &rest[HEADER_LEN..];
        if body.len() < len {
            return Err(CodecError::Malformed);
        }
        check_order(prev, tag)?;
        prev = Some(tag);
        fields.push(TlvField::new(tag, &body[..len]));
        rest = &body[len..];
    }
    Ok(fields)
}

/// Decodes a body whose tag set is exactly `tags` (ascending), returning
/// the values in that order. Any missing or extra tag is `Malformed`.
pub fn decode_exact(data: &[u8], tags: &[u8]) -> Result<Vec<Vec<u8>>, CodecError> {
    let fields = decode_tlv(data)?;
    if fields.len() != tags.len() || fields.iter().zip(tags).any(|(f, t)| f.tag != *t) {
        return Err(CodecError::Malformed);
    }
    Ok(fields.into_iter().map(|f| f.value).collect())
}

/// A SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const LEN: usize = 32;

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        <[u8; 32]>::try_from(bytes).ok().map(Self)
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

pub fn digest(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}
