//! Adversarial scenarios run against a freshly seeded protocol world.
//!
//! Layout of a world directory: the directory itself is the mailbox
//! (`request.sealed`, `program.amnt`, `result.cert`); `supplier/` holds the
//! secret source, `amanat/` the agent's keys and `customer/` the session.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::amanat::{self, certify, AmanatIdentity, Certificate, Verdict, TAG_CERT_VERDICT};
use crate::codec::digest;
use crate::compiler::{compile, encode_binary};
use crate::crypto::{self, generate_signing_keypair, CryptoError};
use crate::minisrc::parse_program;
use crate::roles::{
    customer_create_request, customer_validate_with, mailbox_get, mailbox_put, supplier_submit,
    CustomerSession, MailboxError, RejectReason, SubmitError, ValidationChecks, BINARY_NAME,
    CERT_NAME, REQUEST_NAME,
};

pub const AMANAT_ID: &str = "amanat-0";
pub const CUSTOMER_ID: &str = "customer-0";
pub const SOURCE_FILE: &str = "program.msrc";
pub const SESSION_FILE: &str = "session.sess";

/// Minimum shared run length that counts as a leak.
pub const LEAK_WINDOW: usize = 8;

const SOURCE: &str = "\
// Proprietary copy routine, revision 7. Confidential.
input x;
output y;
var staging_register_alpha;
// the staging step hides our clever trick
staging_register_alpha = x;
y = staging_register_alpha;
";

const SOURCE_RECOMMENTED: &str = "\
input x; // sample
output y;
var staging_register_alpha;
staging_register_alpha = x; // rewritten commentary
y = staging_register_alpha;
";

/// Same interface, different behaviour: what a dishonest supplier ships.
const DOCTORED_SOURCE: &str = "input x; output y; y = x + 1;";

const SPEC_PASS: &str = "y == x";
const SPEC_FAIL: &str = "y == x + 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    Happy,
    Replay,
    Tamper,
    Forge,
    Mismatch,
    Secrecy,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Happy,
        Scenario::Replay,
        Scenario::Tamper,
        Scenario::Forge,
        Scenario::Mismatch,
        Scenario::Secrecy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Happy => "happy",
            Scenario::Replay => "replay",
            Scenario::Tamper => "tamper",
            Scenario::Forge => "forge",
            Scenario::Mismatch => "mismatch",
            Scenario::Secrecy => "secrecy",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown scenario `{0}`")]
pub struct UnknownScenario(pub String);

impl FromStr for Scenario {
    type Err = UnknownScenario;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| UnknownScenario(s.to_owned()))
    }
}

/// Deliberately disabled defenses, for checking that scenarios notice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mutation {
    #[default]
    None,
    SkipNonceCheck,
    SkipSignatureCheck,
}

impl Mutation {
    fn checks(self) -> ValidationChecks {
        let mut checks = ValidationChecks::default();
        match self {
            Mutation::None => {}
            Mutation::SkipNonceCheck => checks.nonce = false,
            Mutation::SkipSignatureCheck => checks.signature = false,
        }
        checks
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioOutcome {
    pub scenario: Scenario,
    pub expected: String,
    pub observed: String,
    pub defended: bool,
}

impl ScenarioOutcome {
    fn new(scenario: Scenario, expected: impl Into<String>, observed: impl Into<String>) -> Self {
        let (expected, observed) = (expected.into(), observed.into());
        Self {
            scenario,
            defended: expected == observed,
            expected,
            observed,
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("mailbox: {0}")]
    Mailbox(#[from] MailboxError),
    #[error("key generation: {0}")]
    Crypto(#[from] CryptoError),
    #[error("supplier submission: {0}")]
    Submit(#[from] SubmitError),
    #[error("setup: {0}")]
    Setup(String),
}

fn seed_bytes(seed: u64, salt: u8) -> [u8; 32] {
    let mut s = [0u8; 32];
    s[..8].copy_from_slice(&seed.to_le_bytes());
    s[31] = salt;
    s
}

/// Length-`LEAK_WINDOW` runs of `secret` that occur in `haystack`.
pub fn shared_windows(secret: &[u8], haystack: &[u8]) -> Vec<Vec<u8>> {
    if secret.len() < LEAK_WINDOW || haystack.len() < LEAK_WINDOW {
        return Vec::new();
    }
    let hay: std::collections::HashSet<&[u8]> = haystack.windows(LEAK_WINDOW).collect();
    secret
        .windows(LEAK_WINDOW)
        .filter(|w| hay.contains(w))
        .map(|w| w.to_vec())
        .collect()
}

struct World {
    root: PathBuf,
    identity: AmanatIdentity,
    checks: ValidationChecks,
    rng: ChaCha20Rng,
    max_states: u64,
}

impl World {
    fn build(root: &Path, seed: u64, mutation: Mutation) -> Result<Self, HarnessError> {
        for sub in ["supplier", "amanat", "customer"] {
            fs::create_dir_all(root.join(sub))?;
        }
        // stale messages from a previous run would confuse the scan
        for name in [REQUEST_NAME, BINARY_NAME, CERT_NAME] {
            let _ = fs::remove_file(root.join(name));
        }
        let identity = AmanatIdentity::generate(AMANAT_ID, Some(&seed_bytes(seed, 0)))?;
        identity
            .write_key_dir(&root.join("amanat"))
            .map_err(|e| HarnessError::Setup(e.to_string()))?;
        fs::write(root.join("supplier").join(SOURCE_FILE), SOURCE)?;
        let world = Self {
            root: root.to_owned(),
            identity,
            checks: mutation.checks(),
            rng: ChaCha20Rng::seed_from_u64(seed),
            max_states: amanat::max_states_from_env(),
        };
        mailbox_put(&world.root, BINARY_NAME, &compile_source(SOURCE)?)?;
        Ok(world)
    }

    fn source_path(&self) -> PathBuf {
        self.root.join("supplier").join(SOURCE_FILE)
    }

    fn open_session(&mut self, spec: &str) -> Result<CustomerSession, HarnessError> {
        let (envelope, session) = customer_create_request(
            spec,
            CUSTOMER_ID,
            &self.identity.encryption_key(),
            &self.identity.verifying_key(),
            AMANAT_ID,
            &mut self.rng,
        )
        .map_err(|e| HarnessError::Setup(e.to_string()))?;
        mailbox_put(&self.root, REQUEST_NAME, &envelope.encode())?;
        fs::write(self.root.join("customer").join(SESSION_FILE), session.encode())?;
        Ok(session)
    }

    /// Supplier runs the amanat on the current mailbox contents.
    fn submit(&self) -> Result<Vec<u8>, HarnessError> {
        supplier_submit(
            &self.source_path(),
            &self.root.join(BINARY_NAME),
            &self.root.join(REQUEST_NAME),
            &self.identity,
            &self.root.join(CERT_NAME),
            self.max_states,
        )?;
        Ok(mailbox_get(&self.root, CERT_NAME)?)
    }

    fn validate(&self, session: &mut CustomerSession, cert: &[u8]) -> Result<RejectReason, HarnessError> {
        let binary = mailbox_get(&self.root, BINARY_NAME)?;
        let result = customer_validate_with(session, cert, &binary, self.checks);
        fs::write(self.root.join("customer").join(SESSION_FILE), session.encode())?;
        Ok(result.reason)
    }

    /// Every byte that passed through the mailbox.
    fn mailbox_bytes(&self) -> Result<Vec<(String, Vec<u8>)>, HarnessError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let entry = entry?;
            if entry.file_type()?.is_file() {
                out.push((entry.file_name().to_string_lossy().into_owned(), fs::read(entry.path())?));
            }
        }
        out.sort();
        Ok(out)
    }
}

fn compile_source(src: &str) -> Result<Vec<u8>, HarnessError> {
    let program = parse_program(src).map_err(|e| HarnessError::Setup(e.to_string()))?;
    let image = compile(&program).map_err(|e| HarnessError::Setup(e.to_string()))?;
    Ok(encode_binary(&image))
}

pub fn run_scenario(
    scenario: Scenario,
    workdir: &Path,
    seed: u64,
    mutation: Mutation,
) -> Result<ScenarioOutcome, HarnessError> {
    let mut world = World::build(workdir, seed, mutation)?;
    match scenario {
        Scenario::Happy => {
            let mut session = world.open_session(SPEC_PASS)?;
            let cert = world.submit()?;
            let reason = world.validate(&mut session, &cert)?;
            Ok(ScenarioOutcome::new(scenario, RejectReason::OkPass.code(), reason.code()))
        }
        Scenario::Replay => {
            let mut first = world.open_session(SPEC_PASS)?;
            let old_cert = world.submit()?;
            let reason = world.validate(&mut first, &old_cert)?;
            if reason != RejectReason::OkPass {
                return Ok(ScenarioOutcome::new(scenario, RejectReason::OkPass.code(), reason.code()));
            }
            let mut second = world.open_session(SPEC_PASS)?;
            let reason = world.validate(&mut second, &old_cert)?;
            Ok(ScenarioOutcome::new(scenario, RejectReason::RejectNonce.code(), reason.code()))
        }
        Scenario::Tamper => {
            // a genuine FAIL certificate, edited to claim PASS
            let mut session = world.open_session(SPEC_FAIL)?;
            let mut cert = world.submit()?;
            let verdict_at = verdict_offset(&cert)?;
            if cert[verdict_at] != Verdict::Fail as u8 {
                return Err(HarnessError::Setup("expected a FAIL certificate".into()));
            }
            cert[verdict_at] = Verdict::Pass as u8;
            let reason = world.validate(&mut session, &cert)?;
            Ok(ScenarioOutcome::new(scenario, RejectReason::RejectBadSignature.code(), reason.code()))
        }
        Scenario::Forge => {
            // the supplier ships a doctored binary with a self-signed PASS
            let mut session = world.open_session(SPEC_PASS)?;
            let genuine = Certificate::decode(&world.submit()?)
                .map_err(|e| HarnessError::Setup(e.to_string()))?;
            let doctored = compile_source(DOCTORED_SOURCE)?;
            mailbox_put(&world.root, BINARY_NAME, &doctored)?;
            let forger = generate_signing_keypair(Some(&seed_bytes(seed, 0xf0)), AMANAT_ID)?;
            let mut forged = Certificate {
                binary_hash: digest(&doctored),
                verdict: Verdict::Pass,
                ..genuine
            };
            forged.signature = crypto::sign(&forger.private, &forged.body());
            let cert = forged.encode();
            mailbox_put(&world.root, CERT_NAME, &cert)?;
            let reason = world.validate(&mut session, &cert)?;
            Ok(ScenarioOutcome::new(scenario, RejectReason::RejectBadSignature.code(), reason.code()))
        }
        Scenario::Mismatch => {
            let mut session = world.open_session(SPEC_PASS)?;
            mailbox_put(&world.root, BINARY_NAME, &compile_source(DOCTORED_SOURCE)?)?;
            let cert = world.submit()?;
            let verdict = Certificate::decode(&cert)
                .map_err(|e| HarnessError::Setup(e.to_string()))?
                .verdict;
            if verdict != Verdict::Mismatch {
                return Ok(ScenarioOutcome::new(scenario, "MISMATCH", verdict.as_str()));
            }
            let reason = world.validate(&mut session, &cert)?;
            Ok(ScenarioOutcome::new(scenario, RejectReason::RejectMismatchVerdict.code(), reason.code()))
        }
        Scenario::Secrecy => {
            let mut session = world.open_session(SPEC_PASS)?;
            let cert = world.submit()?;
            let reason = world.validate(&mut session, &cert)?;
            if reason != RejectReason::OkPass {
                return Ok(ScenarioOutcome::new(scenario, "NO_LEAK", reason.code()));
            }
            for (name, bytes) in world.mailbox_bytes()? {
                if name.ends_with(".msrc") {
                    return Ok(ScenarioOutcome::new(scenario, "NO_LEAK", format!("SOURCE_FILE_IN_MAILBOX {name}")));
                }
                if !shared_windows(SOURCE.as_bytes(), &bytes).is_empty() {
                    return Ok(ScenarioOutcome::new(scenario, "NO_LEAK", format!("LEAK_IN {name}")));
                }
            }
            // comment-only edits to the source must not change the certificate
            let sealed = mailbox_get(&world.root, REQUEST_NAME)?;
            let request = amanat::open_request_bytes(&sealed, &world.identity)
                .map_err(|e| HarnessError::Setup(e.to_string()))?;
            let binary = mailbox_get(&world.root, BINARY_NAME)?;
            let recommented = certify(&request, SOURCE_RECOMMENTED, &binary, &world.identity, world.max_states)
                .map_err(|e| HarnessError::Setup(e.to_string()))?;
            if recommented.encode() != cert {
                return Ok(ScenarioOutcome::new(scenario, "NO_LEAK", "CERTIFICATE_DEPENDS_ON_COMMENTS"));
            }
            Ok(ScenarioOutcome::new(scenario, "NO_LEAK", "NO_LEAK"))
        }
    }
}

fn verdict_offset(cert: &[u8]) -> Result<usize, HarnessError> {
    let mut pos = 0;
    while pos + 5 <= cert.len() {
        let len = u32::from_be_bytes([cert[pos + 1], cert[pos + 2], cert[pos + 3], cert[pos + 4]]) as usize;
        if cert[pos] == TAG_CERT_VERDICT && len == 1 {
            return Ok(pos + 5);
        }
        pos += 5 + len;
    }
    Err(HarnessError::Setup("no verdict field".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_names_parse() {
        for s in Scenario::ALL {
            assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
        }
        assert!("bogus".parse::<Scenario>().is_err());
    }

    #[test]
    fn window_scan() {
        assert_eq!(shared_windows(b"0123456789", b"xx23456789yy"), vec![b"23456789".to_vec()]);
        assert!(shared_windows(b"0123456789", b"0123456").is_empty());
        assert!(shared_windows(b"short", b"short").is_empty());
    }

    #[test]
    fn sources_share_an_image() {
        assert_eq!(compile_source(SOURCE).unwrap(), compile_source(SOURCE_RECOMMENTED).unwrap());
        assert_ne!(compile_source(SOURCE).unwrap(), compile_source(DOCTORED_SOURCE).unwrap());
    }
}
