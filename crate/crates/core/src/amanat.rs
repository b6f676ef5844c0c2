//! The trusted agent: opens sealed challenges, certifies source against
//! delivered binaries, and signs certificates.
//!
//! Nothing derived from the source leaves [`certify`] except the verdict
//! inside a signed certificate. Refusals are bare codes.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::checker::{self, CheckError, CheckVerdict};
use crate::codec::{self, digest, Digest, TlvField};
use crate::compiler::{compile, encode_binary};
use crate::crypto::{
    self, generate_encryption_keypair, generate_signing_keypair, valid_owner_id, CryptoError,
    DecryptionKey, EncryptionKey, EncryptionKeyPair, SealedEnvelope, Signature, SigningKey,
    SigningKeyPair, VerifyingKey,
};
use crate::minisrc::{canonical_spec_text, check_spec_interface, parse_program, parse_spec};

pub const PROTOCOL_VERSION: u16 = 1;
pub const NONCE_LEN: usize = 32;
pub const MAX_STATES_ENV: &str = "AMANAT_MAX_STATES";

pub const TAG_CERT_VERSION: u8 = 0x01;
pub const TAG_CERT_AMANAT_ID: u8 = 0x02;
pub const TAG_CERT_SPEC_HASH: u8 = 0x03;
pub const TAG_CERT_BINARY_HASH: u8 = 0x04;
pub const TAG_CERT_VERDICT: u8 = 0x05;
pub const TAG_CERT_NONCE: u8 = 0x06;
pub const TAG_CERT_SIGNATURE: u8 = 0x07;

const TAG_REQ_VERSION: u8 = 0x11;
const TAG_REQ_CUSTOMER_ID: u8 = 0x12;
const TAG_REQ_NONCE: u8 = 0x13;
const TAG_REQ_SPEC: u8 = 0x14;

/// Key directory layout written by [`AmanatIdentity::write_key_dir`].
pub const SIGNING_KEY_FILE: &str = "signing.key.pem";
pub const SIGNING_PUB_FILE: &str = "signing.pub.pem";
pub const ENCRYPTION_KEY_FILE: &str = "encryption.key.pem";
pub const ENCRYPTION_PUB_FILE: &str = "encryption.pub.pem";
pub const ID_FILE: &str = "amanat.id";

/// State cap for the checker: `AMANAT_MAX_STATES` if set to a positive
/// integer, else the checker default.
pub fn max_states_from_env() -> u64 {
    std::env::var(MAX_STATES_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<u64>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(checker::DEFAULT_MAX_STATES)
}

#[derive(Debug, Error)]
pub enum KeyDirError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("bad key file {0}")]
    BadKey(String),
    #[error("amanat id must be 1 to 64 bytes")]
    BadId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmanatIdentity {
    pub id: String,
    pub signing: SigningKeyPair,
    pub decryption: EncryptionKeyPair,
}

fn read_file(dir: &Path, name: &str) -> Result<String, KeyDirError> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(|source| KeyDirError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), KeyDirError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| KeyDirError::Io {
        path: path.display().to_string(),
        source,
    })
}

impl AmanatIdentity {
    pub fn generate(id: &str, seed: Option<&[u8; 32]>) -> Result<Self, CryptoError> {
        Ok(Self {
            id: id.to_owned(),
            signing: generate_signing_keypair(seed, id)?,
            decryption: generate_encryption_keypair(seed)?,
        })
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        self.signing.public()
    }

    pub fn encryption_key(&self) -> EncryptionKey {
        self.decryption.public()
    }

    pub fn write_key_dir(&self, dir: &Path) -> Result<(), KeyDirError> {
        fs::create_dir_all(dir).map_err(|source| KeyDirError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        write_file(dir, SIGNING_KEY_FILE, &self.signing.private.to_pem())?;
        write_file(dir, SIGNING_PUB_FILE, &self.verifying_key().to_pem())?;
        write_file(dir, ENCRYPTION_KEY_FILE, &self.decryption.private.to_pem())?;
        write_file(dir, ENCRYPTION_PUB_FILE, &self.encryption_key().to_pem())?;
        write_file(dir, ID_FILE, &format!("{}\n", self.id))
    }

    pub fn load_key_dir(dir: &Path) -> Result<Self, KeyDirError> {
        let id = read_file(dir, ID_FILE)?.trim_end_matches(['\n', '\r']).to_owned();
        if !valid_owner_id(&id) {
            return Err(KeyDirError::BadId);
        }
        let signing = SigningKey::from_pem(&read_file(dir, SIGNING_KEY_FILE)?)
            .map_err(|_| KeyDirError::BadKey(SIGNING_KEY_FILE.into()))?;
        let decryption = DecryptionKey::from_pem(&read_file(dir, ENCRYPTION_KEY_FILE)?)
            .map_err(|_| KeyDirError::BadKey(ENCRYPTION_KEY_FILE.into()))?;
        Ok(Self {
            signing: SigningKeyPair {
                owner_id: id.clone(),
                private: signing,
            },
            decryption: EncryptionKeyPair { private: decryption },
            id,
        })
    }
}

/// Signs certificate bodies. The pipeline only reaches this after every
/// refusal check has passed.
pub trait CertificateSigner {
    fn signer_id(&self) -> &str;
    fn sign_body(&self, body: &[u8]) -> Signature;
}

impl CertificateSigner for AmanatIdentity {
    fn signer_id(&self) -> &str {
        &self.id
    }

    fn sign_body(&self, body: &[u8]) -> Signature {
        crypto::sign(&self.signing.private, body)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChallengeRequest {
    pub version: u16,
    pub customer_id: String,
    pub nonce: [u8; NONCE_LEN],
    pub spec_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RequestError {
    #[error("key unwrap failed")]
    DecryptFailure,
    #[error("authentication failed")]
    AuthFailure,
    #[error("malformed request")]
    MalformedRequest,
    #[error("unsupported request version {0}")]
    BadVersion(u16),
}

impl ChallengeRequest {
    pub fn encode(&self) -> Vec<u8> {
        codec::encode_tlv(&[
            TlvField::new(TAG_REQ_VERSION, self.version.to_be_bytes()),
            TlvField::new(TAG_REQ_CUSTOMER_ID, self.customer_id.as_bytes()),
            TlvField::new(TAG_REQ_NONCE, self.nonce),
            TlvField::new(TAG_REQ_SPEC, self.spec_text.as_bytes()),
        ])
        .expect("request tags are ascending")
    }

    pub fn decode(data: &[u8]) -> Result<Self, RequestError> {
        let values = codec::decode_exact(
            data,
            &[TAG_REQ_VERSION, TAG_REQ_CUSTOMER_ID, TAG_REQ_NONCE, TAG_REQ_SPEC],
        )
        .map_err(|_| RequestError::MalformedRequest)?;
        let [version, customer_id, nonce, spec_text]: [Vec<u8>; 4] =
            values.try_into().expect("decode_exact returns one value per tag");
        let version: [u8; 2] = version.try_into().map_err(|_| RequestError::MalformedRequest)?;
        let version = u16::from_be_bytes(version);
        if version != PROTOCOL_VERSION {
            return Err(RequestError::BadVersion(version));
        }
        let customer_id = String::from_utf8(customer_id).map_err(|_| RequestError::MalformedRequest)?;
        if !valid_owner_id(&customer_id) {
            return Err(RequestError::MalformedRequest);
        }
        Ok(Self {
            version,
            customer_id,
            nonce: nonce.try_into().map_err(|_| RequestError::MalformedRequest)?,
            spec_text: String::from_utf8(spec_text).map_err(|_| RequestError::MalformedRequest)?,
        })
    }
}

pub fn open_request(env: &SealedEnvelope, identity: &AmanatIdentity) -> Result<ChallengeRequest, RequestError> {
    let plaintext = crypto::open(&identity.decryption.private, env).map_err(|e| match e {
        CryptoError::AuthFailure => RequestError::AuthFailure,
        _ => RequestError::DecryptFailure,
    })?;
    ChallengeRequest::decode(&plaintext)
}

/// Like [`open_request`], starting from the envelope file bytes.
pub fn open_request_bytes(bytes: &[u8], identity: &AmanatIdentity) -> Result<ChallengeRequest, RequestError> {
    let env = SealedEnvelope::decode(bytes).map_err(|_| RequestError::MalformedRequest)?;
    open_request(&env, identity)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Verdict {
    Fail = 0x00,
    Pass = 0x01,
    Mismatch = 0x02,
}

impl Verdict {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0x00 => Some(Verdict::Fail),
            0x01 => Some(Verdict::Pass),
            0x02 => Some(Verdict::Mismatch),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Fail => "FAIL",
            Verdict::Pass => "PASS",
            Verdict::Mismatch => "MISMATCH",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub version: u16,
    pub amanat_id: String,
    pub spec_hash: Digest,
    pub binary_hash: Digest,
    pub verdict: Verdict,
    pub nonce: [u8; NONCE_LEN],
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CertificateError {
    #[error("malformed certificate")]
    MalformedCertificate,
    #[error("unsupported certificate version {0}")]
    BadVersion(u16),
    #[error("unknown verdict byte 0x{0:02x}")]
    UnknownVerdict(u8),
}

fn body_fields(
    version: u16,
    amanat_id: &str,
    spec_hash: &Digest,
    binary_hash: &Digest,
    verdict: Verdict,
    nonce: &[u8; NONCE_LEN],
) -> Vec<TlvField> {
    vec![
        TlvField::new(TAG_CERT_VERSION, version.to_be_bytes()),
        TlvField::new(TAG_CERT_AMANAT_ID, amanat_id.as_bytes()),
        TlvField::new(TAG_CERT_SPEC_HASH, *spec_hash.as_bytes()),
        TlvField::new(TAG_CERT_BINARY_HASH, *binary_hash.as_bytes()),
        TlvField::new(TAG_CERT_VERDICT, [verdict as u8]),
        TlvField::new(TAG_CERT_NONCE, *nonce),
    ]
}

impl Certificate {
    /// The signed bytes: tags 0x01 through 0x06.
    pub fn body(&self) -> Vec<u8> {
        let fields = body_fields(
            self.version,
            &self.amanat_id,
            &self.spec_hash,
            &self.binary_hash,
            self.verdict,
            &self.nonce,
        );
        codec::encode_tlv(&fields).expect("certificate tags are ascending")
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.body();
        let sig = codec::encode_tlv(&[TlvField::new(TAG_CERT_SIGNATURE, *self.signature.as_bytes())])
            .expect("single field");
        out.extend_from_slice(&sig);
        out
    }

    /// Structural decode. The signature is not checked here.
    pub fn decode(data: &[u8]) -> Result<Self, CertificateError> {
        use CertificateError::MalformedCertificate as Bad;
        let values = codec::decode_exact(
            data,
            &[
                TAG_CERT_VERSION,
                TAG_CERT_AMANAT_ID,
                TAG_CERT_SPEC_HASH,
                TAG_CERT_BINARY_HASH,
                TAG_CERT_VERDICT,
                TAG_CERT_NONCE,
                TAG_CERT_SIGNATURE,
            ],
        )
        .map_err(|_| Bad)?;
        let [version, amanat_id, spec_hash, binary_hash, verdict, nonce, signature]: [Vec<u8>; 7] =
            values.try_into().expect("decode_exact returns one value per tag");

        let version: [u8; 2] = version.try_into().map_err(|_| Bad)?;
        let version = u16::from_be_bytes(version);
        if version != PROTOCOL_VERSION {
            return Err(CertificateError::BadVersion(version));
        }
        let amanat_id = String::from_utf8(amanat_id).map_err(|_| Bad)?;
        if !valid_owner_id(&amanat_id) {
            return Err(Bad);
        }
        let verdict = match verdict.as_slice() {
            [b] => Verdict::from_byte(*b).ok_or(CertificateError::UnknownVerdict(*b))?,
            _ => return Err(Bad),
        };
        Ok(Self {
            version,
            amanat_id,
            spec_hash: Digest::from_slice(&spec_hash).ok_or(Bad)?,
            binary_hash: Digest::from_slice(&binary_hash).ok_or(Bad)?,
            verdict,
            nonce: nonce.try_into().map_err(|_| Bad)?,
            signature: Signature::from_slice(&signature).ok_or(Bad)?,
        })
    }

    pub fn verify_signature(&self, key: &VerifyingKey) -> bool {
        crypto::verify(key, &self.body(), &self.signature)
    }
}

/// Why the amanat declined to issue a certificate. Carries no detail:
/// any message text could leak source content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error)]
pub enum Refusal {
    #[error("SOURCE_SYNTAX_ERROR")]
    SourceSyntaxError,
    #[error("SPEC_SYNTAX_ERROR")]
    SpecSyntaxError,
    #[error("SPEC_INTERFACE_MISMATCH")]
    SpecInterfaceMismatch,
    #[error("STATE_LIMIT_EXCEEDED")]
    StateLimitExceeded,
    #[error("COMPILE_ERROR")]
    CompileError,
    #[error("RUNTIME_FAULT")]
    RuntimeFault,
}

impl Refusal {
    pub fn code(self) -> &'static str {
        match self {
            Refusal::SourceSyntaxError => "SOURCE_SYNTAX_ERROR",
            Refusal::SpecSyntaxError => "SPEC_SYNTAX_ERROR",
            Refusal::SpecInterfaceMismatch => "SPEC_INTERFACE_MISMATCH",
            Refusal::StateLimitExceeded => "STATE_LIMIT_EXCEEDED",
            Refusal::CompileError => "COMPILE_ERROR",
            Refusal::RuntimeFault => "RUNTIME_FAULT",
        }
    }
}

/// Runs the certification pipeline and signs the result.
///
/// The delivered binary is compared to a fresh compilation of the source
/// first; on any difference the verdict is MISMATCH and the checker does
/// not run.
pub fn certify(
    request: &ChallengeRequest,
    source_text: &str,
    delivered_binary: &[u8],
    identity: &AmanatIdentity,
    max_states: u64,
) -> Result<Certificate, Refusal> {
    certify_with(request, source_text, delivered_binary, identity, max_states)
}

pub fn certify_with(
    request: &ChallengeRequest,
    source_text: &str,
    delivered_binary: &[u8],
    signer: &dyn CertificateSigner,
    max_states: u64,
) -> Result<Certificate, Refusal> {
    let spec = parse_spec(&request.spec_text).map_err(|_| Refusal::SpecSyntaxError)?;
    let program = parse_program(source_text).map_err(|_| Refusal::SourceSyntaxError)?;
    let image = compile(&program).map_err(|_| Refusal::CompileError)?;
    let compiled = encode_binary(&image);

    let binary_hash = digest(delivered_binary);
    let verdict = if digest(&compiled) != binary_hash {
        Verdict::Mismatch
    } else {
        check_spec_interface(&spec, &image.inputs, &image.outputs)
            .map_err(|_| Refusal::SpecInterfaceMismatch)?;
        match checker::check(&image, &spec, max_states) {
            Ok(report) if report.verdict == CheckVerdict::Pass => Verdict::Pass,
            Ok(_) => Verdict::Fail,
            Err(CheckError::StateLimitExceeded(_)) => return Err(Refusal::StateLimitExceeded),
            Err(CheckError::UnboundIdentifier(_)) => return Err(Refusal::SpecInterfaceMismatch),
            Err(CheckError::RuntimeFault(_)) => return Err(Refusal::RuntimeFault),
        }
    };

    let spec_hash = digest(canonical_spec_text(&spec).as_bytes());
    let amanat_id = signer.signer_id().to_owned();
    let body = codec::encode_tlv(&body_fields(
        PROTOCOL_VERSION,
        &amanat_id,
        &spec_hash,
        &binary_hash,
        verdict,
        &request.nonce,
    ))
    .expect("certificate tags are ascending");
    let signature = signer.sign_body(&body);

    Ok(Certificate {
        version: PROTOCOL_VERSION,
        amanat_id,
        spec_hash,
        binary_hash,
        verdict,
        nonce: request.nonce,
        signature,
    })
}
