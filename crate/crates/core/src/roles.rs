//! Customer and supplier protocol steps, and the filesystem mailbox that
//! carries sealed requests, binaries and certificates between them.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::amanat::{
    certify, open_request_bytes, AmanatIdentity, Certificate, CertificateError, ChallengeRequest,
    Refusal, RequestError, Verdict, NONCE_LEN, PROTOCOL_VERSION,
};
use crate::codec::{self, digest, Digest, TlvField};
use crate::crypto::{self, valid_owner_id, CryptoError, EncryptionKey, SealedEnvelope, VerifyingKey};
use crate::minisrc::{canonical_spec_text, parse_spec};

pub const REQUEST_NAME: &str = "request.sealed";
pub const BINARY_NAME: &str = "program.amnt";
pub const CERT_NAME: &str = "result.cert";

const TAG_SESS_NONCE: u8 = 0x31;
const TAG_SESS_SPEC_HASH: u8 = 0x32;
const TAG_SESS_CUSTOMER_ID: u8 = 0x33;
const TAG_SESS_AMANAT_ID: u8 = 0x34;
const TAG_SESS_CLOSED: u8 = 0x35;

/// The customer's half of one challenge. Accepts at most one certificate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CustomerSession {
    pub nonce: [u8; NONCE_LEN],
    pub spec_hash: Digest,
    pub customer_id: String,
    pub amanat_key: VerifyingKey,
    pub expected_amanat_id: String,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("malformed session file")]
    Malformed,
}

impl CustomerSession {
    /// Session file body. The amanat key is not stored; it is supplied
    /// again on load.
    pub fn encode(&self) -> Vec<u8> {
        codec::encode_tlv(&[
            TlvField::new(TAG_SESS_NONCE, self.nonce),
            TlvField::new(TAG_SESS_SPEC_HASH, *self.spec_hash.as_bytes()),
            TlvField::new(TAG_SESS_CUSTOMER_ID, self.customer_id.as_bytes()),
            TlvField::new(TAG_SESS_AMANAT_ID, self.expected_amanat_id.as_bytes()),
            TlvField::new(TAG_SESS_CLOSED, [self.closed as u8]),
        ])
        .expect("session tags are ascending")
    }

    pub fn decode(data: &[u8], amanat_key: VerifyingKey) -> Result<Self, SessionError> {
        let values = codec::decode_exact(
            data,
            &[
                TAG_SESS_NONCE,
                TAG_SESS_SPEC_HASH,
                TAG_SESS_CUSTOMER_ID,
                TAG_SESS_AMANAT_ID,
                TAG_SESS_CLOSED,
            ],
        )
        .map_err(|_| SessionError::Malformed)?;
        let [nonce, spec_hash, customer_id, amanat_id, closed]: [Vec<u8>; 5] =
            values.try_into().expect("one value per tag");
        let closed = match closed.as_slice() {
            [0] => false,
            [1] => true,
            _ => return Err(SessionError::Malformed),
        };
        let text = |v: Vec<u8>| {
            String::from_utf8(v)
                .ok()
                .filter(|s| valid_owner_id(s))
                .ok_or(SessionError::Malformed)
        };
        Ok(Self {
            nonce: nonce.try_into().map_err(|_| SessionError::Malformed)?,
            spec_hash: Digest::from_slice(&spec_hash).ok_or(SessionError::Malformed)?,
            customer_id: text(customer_id)?,
            expected_amanat_id: text(amanat_id)?,
            amanat_key,
            closed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    OkPass,
    RejectFailVerdict,
    RejectMismatchVerdict,
    RejectBadSignature,
    RejectNonce,
    RejectSpecHash,
    RejectBinaryHash,
    RejectAmanatId,
    RejectVersion,
    RejectMalformed,
    RejectSessionClosed,
}

impl RejectReason {
    pub const ALL: [RejectReason; 11] = [
        RejectReason::OkPass,
        RejectReason::RejectFailVerdict,
        RejectReason::RejectMismatchVerdict,
        RejectReason::RejectBadSignature,
        RejectReason::RejectNonce,
        RejectReason::RejectSpecHash,
        RejectReason::RejectBinaryHash,
        RejectReason::RejectAmanatId,
        RejectReason::RejectVersion,
        RejectReason::RejectMalformed,
        RejectReason::RejectSessionClosed,
    ];

    pub fn code(self) -> &'static str {
        match self {
            RejectReason::OkPass => "OK_PASS",
            RejectReason::RejectFailVerdict => "REJECT_FAIL_VERDICT",
            RejectReason::RejectMismatchVerdict => "REJECT_MISMATCH_VERDICT",
            RejectReason::RejectBadSignature => "REJECT_BAD_SIGNATURE",
            RejectReason::RejectNonce => "REJECT_NONCE",
            RejectReason::RejectSpecHash => "REJECT_SPEC_HASH",
            RejectReason::RejectBinaryHash => "REJECT_BINARY_HASH",
            RejectReason::RejectAmanatId => "REJECT_AMANAT_ID",
            RejectReason::RejectVersion => "REJECT_VERSION",
            RejectReason::RejectMalformed => "REJECT_MALFORMED",
            RejectReason::RejectSessionClosed => "REJECT_SESSION_CLOSED",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.code() == code)
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ValidationResult {
    pub accepted: bool,
    pub reason: RejectReason,
}

impl ValidationResult {
    fn of(reason: RejectReason) -> Self {
        Self {
            accepted: reason == RejectReason::OkPass,
            reason,
        }
    }
}

/// Which validation checks run. Every check is on by default; turning one
/// off is only for demonstrating that the harness notices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidationChecks {
    pub signature: bool,
    pub nonce: bool,
}

impl Default for ValidationChecks {
    fn default() -> Self {
        Self {
            signature: true,
            nonce: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RequestCreateError {
    #[error("specification does not parse")]
    SpecSyntaxError,
    #[error("bad customer or amanat id")]
    BadId,
    #[error("sealing failed: {0}")]
    Crypto(#[from] CryptoError),
}

pub fn customer_create_request<R: RngCore + CryptoRng>(
    spec_text: &str,
    customer_id: &str,
    amanat_enc_pub: &EncryptionKey,
    amanat_sign_pub: &VerifyingKey,
    expected_amanat_id: &str,
    rng: &mut R,
) -> Result<(SealedEnvelope, CustomerSession), RequestCreateError> {
    let spec = parse_spec(spec_text).map_err(|_| RequestCreateError::SpecSyntaxError)?;
    if !valid_owner_id(customer_id) || !valid_owner_id(expected_amanat_id) {
        return Err(RequestCreateError::BadId);
    }
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let request = ChallengeRequest {
        version: PROTOCOL_VERSION,
        customer_id: customer_id.to_owned(),
        nonce,
        spec_text: spec_text.to_owned(),
    };
    let envelope = crypto::seal(amanat_enc_pub, &request.encode(), rng)?;
    let session = CustomerSession {
        nonce,
        spec_hash: digest(canonical_spec_text(&spec).as_bytes()),
        customer_id: customer_id.to_owned(),
        amanat_key: amanat_sign_pub.clone(),
        expected_amanat_id: expected_amanat_id.to_owned(),
        closed: false,
    };
    Ok((envelope, session))
}

pub fn customer_validate(session: &mut CustomerSession, cert_bytes: &[u8], binary_bytes: &[u8]) -> ValidationResult {
    customer_validate_with(session, cert_bytes, binary_bytes, ValidationChecks::default())
}

/// Checks run in a fixed order and the first failure decides the reason.
/// The session closes once a structurally valid, correctly signed
/// certificate carrying the session nonce has been seen.
pub fn customer_validate_with(
    session: &mut CustomerSession,
    cert_bytes: &[u8],
    binary_bytes: &[u8],
    checks: ValidationChecks,
) -> ValidationResult {
    use RejectReason::*;
    if session.closed {
        return ValidationResult::of(RejectSessionClosed);
    }
    let cert = match Certificate::decode(cert_bytes) {
        Ok(cert) => cert,
        Err(CertificateError::BadVersion(_)) => return ValidationResult::of(RejectVersion),
        Err(_) => return ValidationResult::of(RejectMalformed),
    };
    if cert.version != PROTOCOL_VERSION {
        return ValidationResult::of(RejectVersion);
    }
    if cert.amanat_id != session.expected_amanat_id {
        return ValidationResult::of(RejectAmanatId);
    }
    if checks.signature && !cert.verify_signature(&session.amanat_key) {
        return ValidationResult::of(RejectBadSignature);
    }
    if checks.nonce && cert.nonce != session.nonce {
        return ValidationResult::of(RejectNonce);
    }
    session.closed = true;
    let reason = if cert.spec_hash != session.spec_hash {
        RejectSpecHash
    } else if cert.binary_hash != digest(binary_bytes) {
        RejectBinaryHash
    } else {
        match cert.verdict {
            Verdict::Pass => OkPass,
            Verdict::Fail => RejectFailVerdict,
            Verdict::Mismatch => RejectMismatchVerdict,
        }
    };
    ValidationResult::of(reason)
}

#[derive(Debug, Error)]
pub enum SubmitError {
    #[error("{0}")]
    Refused(Refusal),
    #[error("request rejected: {0}")]
    Request(RequestError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn read(path: &Path) -> Result<Vec<u8>, SubmitError> {
    fs::read(path).map_err(|source| SubmitError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Runs the amanat at the supplier's site against a sealed request and
/// writes the certificate. On refusal nothing is written.
pub fn supplier_submit(
    source_path: &Path,
    binary_path: &Path,
    sealed_request_path: &Path,
    identity: &AmanatIdentity,
    out_cert_path: &Path,
    max_states: u64,
) -> Result<Certificate, SubmitError> {
    let source = read(source_path)?;
    let binary = read(binary_path)?;
    let sealed = read(sealed_request_path)?;
    let request = open_request_bytes(&sealed, identity).map_err(SubmitError::Request)?;
    let source = std::str::from_utf8(&source).map_err(|_| SubmitError::Refused(Refusal::SourceSyntaxError))?;
    let cert = certify(&request, source, &binary, identity, max_states).map_err(SubmitError::Refused)?;
    write_atomic(out_cert_path, &cert.encode()).map_err(|source| SubmitError::Io {
        path: out_cert_path.to_owned(),
        source,
    })?;
    Ok(cert)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

#[derive(Debug, Error)]
pub enum MailboxError {
    #[error("no message named {0}")]
    NotFound(String),
    #[error("invalid message name")]
    NameInvalid,
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

pub fn valid_mailbox_name(name: &str) -> bool {
    (1..=64).contains(&name.len())
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'))
        && name != "."
        && name != ".."
}

pub fn mailbox_put(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), MailboxError> {
    if !valid_mailbox_name(name) {
        return Err(MailboxError::NameInvalid);
    }
    fs::create_dir_all(dir)?;
    write_atomic(&dir.join(name), bytes)?;
    Ok(())
}

pub fn mailbox_get(dir: &Path, name: &str) -> Result<Vec<u8>, MailboxError> {
    if !valid_mailbox_name(name) {
        return Err(MailboxError::NameInvalid);
    }
    match fs::read(dir.join(name)) {
        Ok(bytes) => Ok(bytes),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Err(MailboxError::NotFound(name.to_owned())),
        Err(e) => Err(e.into()),
    }
}
