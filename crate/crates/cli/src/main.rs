//! `amanat`: command-line driver for the supplier, customer and amanat
//! roles, plus an adversarial harness.
//!
//! Exit codes: 0 accept, 1 harness expectation failed, 2 usage or I/O
//! error, 3 validation rejected, 4 program diverged, 5 amanat refused.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::rngs::StdRng;
use rand::SeedableRng;

use amanat_core::amanat::{self, AmanatIdentity, ID_FILE};
use amanat_core::checker::{interpret, RunOutcome};
use amanat_core::compiler::{compile, decode_binary, encode_binary};
use amanat_core::crypto::{EncryptionKey, VerifyingKey};
use amanat_core::harness::{self, Mutation, Scenario};
use amanat_core::minisrc::parse_program;
use amanat_core::roles::{self, CustomerSession, SubmitError};

const EXIT_HARNESS: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_REJECT: u8 = 3;
const EXIT_DIVERGE: u8 = 4;
const EXIT_REFUSAL: u8 = 5;

/// Step cap for `run`.
const RUN_STEPS: u64 = 1_000_000;

#[derive(Parser)]
#[command(name = "amanat", version, about = "Certify secret programs without revealing them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an amanat identity: signing and encryption key pairs.
    Keygen {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        id: String,
        /// Deterministic keys for tests: 64 hex digits or a decimal integer.
        #[arg(long)]
        seed: Option<String>,
    },
    /// Compile a source file to an `.amnt` binary.
    Compile {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a binary, taking HAVOC values in order (0 once exhausted).
    Run {
        #[arg(long)]
        binary: PathBuf,
        havoc: Vec<u8>,
    },
    /// Customer: seal a challenge request for the amanat.
    Request {
        /// Specification text, e.g. "y == x".
        #[arg(long)]
        spec: String,
        #[arg(long)]
        amanat_enc_pub: PathBuf,
        #[arg(long)]
        customer_id: String,
        #[arg(long)]
        out_request: PathBuf,
        #[arg(long)]
        out_session: PathBuf,
        /// Expected amanat id; read from `amanat.id` beside the key if absent.
        #[arg(long)]
        amanat_id: Option<String>,
        /// Deterministic nonce for tests.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Supplier: run the amanat locally and write its certificate.
    Certify {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        binary: PathBuf,
        #[arg(long)]
        request: PathBuf,
        #[arg(long)]
        key_dir: PathBuf,
        #[arg(long)]
        out_cert: PathBuf,
    },
    /// Customer: check a certificate against the received binary.
    Validate {
        #[arg(long)]
        cert: PathBuf,
        #[arg(long)]
        binary: PathBuf,
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        amanat_sign_pub: PathBuf,
    },
    /// Play one attack scenario in a fresh world and report whether it was defended.
    Harness {
        #[arg(long)]
        scenario: Scenario,
        #[arg(long)]
        workdir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = MutateArg::None, hide = true)]
        mutate: MutateArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MutateArg {
    None,
    SkipNonce,
    SkipSignature,
}

impl From<MutateArg> for Mutation {
    fn from(m: MutateArg) -> Self {
        match m {
            MutateArg::None => Mutation::None,
            MutateArg::SkipNonce => Mutation::SkipNonceCheck,
            MutateArg::SkipSignature => Mutation::SkipSignatureCheck,
        }
    }
}

/// A failed command: exit code and a message for stderr.
struct Failure(u8, String);

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Failure(EXIT_USAGE, msg.into())
    }
}

type Outcome = Result<u8, Failure>;

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    String::from_utf8(read(path)?).map_err(|_| Failure::usage(format!("{}: not UTF-8", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn parse_seed(s: &str) -> Result<[u8; 32], Failure> {
    let mut seed = [0u8; 32];
    if s.len() == 64 {
        hex::decode_to_slice(s, &mut seed).map_err(|_| Failure::usage("--seed: bad hex"))?;
    } else {
        let n: u64 = s
            .parse()
            .map_err(|_| Failure::usage("--seed: expected 64 hex digits or an integer"))?;
        seed[..8].copy_from_slice(&n.to_le_bytes());
    }
    Ok(seed)
}

fn keygen(out_dir: &Path, id: &str, seed: Option<&str>) -> Outcome {
    let seed = seed.map(parse_seed).transpose()?;
    let identity = AmanatIdentity::generate(id, seed.as_ref()).map_err(|e| Failure::usage(e.to_string()))?;
    identity.write_key_dir(out_dir).map_err(|e| Failure::usage(e.to_string()))?;
    Ok(0)
}

fn compile_cmd(source: &Path, out: &Path) -> Outcome {
    let program = parse_program(&read_text(source)?).map_err(|e| Failure::usage(e.to_string()))?;
    let image = compile(&program).map_err(|e| Failure::usage(e.to_string()))?;
    write(out, &encode_binary(&image))?;
    Ok(0)
}

fn run(binary: &Path, havoc: &[u8]) -> Outcome {
    let image = decode_binary(&read(binary)?).map_err(|e| Failure::usage(e.to_string()))?;
    match interpret(&image, havoc, RUN_STEPS).map_err(|e| Failure::usage(e.to_string()))? {
        RunOutcome::Halted { vars, .. } => {
            let n_in = image.inputs.len();
            for (name, value) in image.outputs.iter().zip(&vars[n_in..]) {
                println!("{name}={value}");
            }
            Ok(0)
        }
        RunOutcome::Diverged { .. } => Err(Failure(EXIT_DIVERGE, format!("no HALT within {RUN_STEPS} steps"))),
    }
}

#[allow(clippy::too_many_arguments)]
fn request(
    spec: &str,
    enc_pub: &Path,
    customer_id: &str,
    out_request: &Path,
    out_session: &Path,
    amanat_id: Option<String>,
    seed: Option<u64>,
) -> Outcome {
    let key = EncryptionKey::from_pem(&read_text(enc_pub)?).map_err(|e| Failure::usage(e.to_string()))?;
    let amanat_id = match amanat_id {
        Some(id) => id,
        None => {
            let path = enc_pub.with_file_name(ID_FILE);
            read_text(&path)?.trim_end().to_owned()
        }
    };
    // Keys travel as a directory; the session refers to the signing key beside it.
    let sign_pub = enc_pub.with_file_name(amanat::SIGNING_PUB_FILE);
    let sign_key = VerifyingKey::from_pem(&read_text(&sign_pub)?).map_err(|e| Failure::usage(e.to_string()))?;
    let mut rng = match seed {
        Some(s) => StdRng::seed_from_u64(s),
        None => StdRng::from_entropy(),
    };
    let (envelope, session) = roles::customer_create_request(spec, customer_id, &key, &sign_key, &amanat_id, &mut rng)
        .map_err(|e| Failure::usage(e.to_string()))?;
    write(out_request, &envelope.encode())?;
    write(out_session, &session.encode())?;
    Ok(0)
}

fn certify(source: &Path, binary: &Path, request: &Path, key_dir: &Path, out_cert: &Path) -> Outcome {
    let identity = AmanatIdentity::load_key_dir(key_dir).map_err(|e| Failure::usage(e.to_string()))?;
    match roles::supplier_submit(source, binary, request, &identity, out_cert, amanat::max_states_from_env()) {
        Ok(cert) => {
            println!("{}", cert.verdict);
            Ok(0)
        }
        Err(SubmitError::Refused(r)) => {
            println!("{}", r.code());
            Ok(EXIT_REFUSAL)
        }
        Err(e) => Err(Failure::usage(e.to_string())),
    }
}

fn validate(cert: &Path, binary: &Path, session_path: &Path, sign_pub: &Path) -> Outcome {
    let key = VerifyingKey::from_pem(&read_text(sign_pub)?).map_err(|e| Failure::usage(e.to_string()))?;
    let mut session = CustomerSession::decode(&read(session_path)?, key)
        .map_err(|e| Failure::usage(format!("{}: {e}", session_path.display())))?;
    let cert_bytes = read(cert)?;
    let binary_bytes = read(binary)?;
    let was_closed = session.closed;
    let result = roles::customer_validate(&mut session, &cert_bytes, &binary_bytes);
    if session.closed != was_closed {
        write(session_path, &session.encode())?;
    }
    println!("{}", result.reason);
    Ok(if result.accepted { 0 } else { EXIT_REJECT })
}

fn harness_cmd(scenario: Scenario, workdir: &Path, seed: u64, mutate: MutateArg) -> Outcome {
    let outcome = harness::run_scenario(scenario, workdir, seed, mutate.into())
        .map_err(|e| Failure::usage(format!("{scenario}: {e}")))?;
    println!(
        "{} expected={} observed={} {}",
        outcome.scenario,
        outcome.expected,
        outcome.observed,
        if outcome.defended { "DEFENDED" } else { "BREACHED" }
    );
    Ok(if outcome.defended { 0 } else { EXIT_HARNESS })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Keygen { out_dir, id, seed } => keygen(&out_dir, &id, seed.as_deref()),
        Command::Compile { source, out } => compile_cmd(&source, &out),
        Command::Run { binary, havoc } => run(&binary, &havoc),
        Command::Request {
            spec,
            amanat_enc_pub,
            customer_id,
            out_request,
            out_session,
            amanat_id,
            seed,
        } => request(
            &spec,
            &amanat_enc_pub,
            &customer_id,
            &out_request,
            &out_session,
            amanat_id,
            seed,
        ),
        Command::Certify {
            source,
            binary,
            request,
            key_dir,
            out_cert,
        } => certify(&source, &binary, &request, &key_dir, &out_cert),
        Command::Validate {
            cert,
            binary,
            session,
            amanat_sign_pub,
        } => validate(&cert, &binary, &session, &amanat_sign_pub),
        Command::Harness {
            scenario,
            workdir,
            seed,
            mutate,
        } => harness_cmd(scenario, &workdir, seed, mutate),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("amanat: {msg}");
            ExitCode::from(code)
        }
    }
}
