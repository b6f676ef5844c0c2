use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use amanat_core::amanat::Certificate;
use tempfile::TempDir;

fn amanat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amanat"))
        .args(args)
        .env_remove("AMANAT_MAX_STATES")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).trim().to_owned()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        let keys = f.path("keys");
        assert_eq!(code(&amanat(&["keygen", "--out-dir", &keys, "--id", "amanat-0", "--seed", "5"])), 0);
        f
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).display().to_string()
    }

    fn file(&self, name: &str, text: &str) -> String {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn compile(&self, src_name: &str, text: &str, out: &str) -> String {
        let src = self.file(src_name, text);
        assert_eq!(code(&amanat(&["compile", "--source", &src, "--out", &self.path(out)])), 0);
        self.path(out)
    }

    fn request(&self, spec: &str, tag: &str, seed: &str) -> (String, String) {
        let (req, sess) = (self.path(&format!("{tag}.sealed")), self.path(&format!("{tag}.sess")));
        let out = amanat(&[
            "request",
            "--spec",
            spec,
            "--amanat-enc-pub",
            &self.path("keys/encryption.pub.pem"),
            "--customer-id",
            "customer-0",
            "--out-request",
            &req,
            "--out-session",
            &sess,
            "--seed",
            seed,
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        (req, sess)
    }

    fn certify(&self, src: &str, bin: &str, req: &str, cert: &str) -> Output {
        amanat(&[
            "certify",
            "--source",
            src,
            "--binary",
            bin,
            "--request",
            req,
            "--key-dir",
            &self.path("keys"),
            "--out-cert",
            cert,
        ])
    }

    fn validate(&self, cert: &str, bin: &str, sess: &str) -> Output {
        amanat(&[
            "validate",
            "--cert",
            cert,
            "--binary",
            bin,
            "--session",
            sess,
            "--amanat-sign-pub",
            &self.path("keys/signing.pub.pem"),
        ])
    }
}

const IDENTITY: &str = "input x;\noutput y;\ny = x;\n";

#[test]
fn keygen_is_deterministic_with_a_seed() {
    let a = Fixture::new();
    let b = Fixture::new();
    for name in ["signing.pub.pem", "encryption.pub.pem", "amanat.id"] {
        let read = |f: &Fixture| fs::read(Path::new(&f.path("keys")).join(name)).unwrap();
        assert_eq!(read(&a), read(&b), "{name}");
    }
    let hex_seed = "00".repeat(32);
    let out = amanat(&["keygen", "--out-dir", &a.path("k2"), "--id", "a", "--seed", &hex_seed]);
    assert_eq!(code(&out), 0);
}

#[test]
fn keygen_without_id_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = amanat(&["keygen", "--out-dir", &dir.path().display().to_string()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(code(&amanat(&["keygen", "--out-dir", "x", "--id", "a", "--seed", "zz"])), 2);
}

#[test]
fn run_prints_outputs_or_reports_divergence() {
    let f = Fixture::new();
    let bin = f.compile("id.msrc", IDENTITY, "id.amnt");
    let out = amanat(&["run", "--binary", &bin, "7"]);
    assert_eq!((code(&out), stdout(&out)), (0, "y=7".to_owned()));

    let bin = f.compile("two.msrc", "input x; output y; output w; y = x + 1; w = 3;", "two.amnt");
    let out = amanat(&["run", "--binary", &bin, "255"]);
    assert_eq!(stdout(&out), "y=0\nw=3");

    let bin = f.compile("loop.msrc", "output y; while (1) { y = y + 1; }", "loop.amnt");
    assert_eq!(code(&amanat(&["run", "--binary", &bin])), 4);

    let bad = f.file("bad.msrc", "input x; output y; y = ;");
    assert_eq!(code(&amanat(&["compile", "--source", &bad, "--out", &f.path("bad.amnt")])), 2);
    assert_eq!(code(&amanat(&["compile", "--source", &f.path("missing"), "--out", &f.path("o")])), 2);
    assert_eq!(code(&amanat(&["run", "--binary", &bad])), 2);
}

#[test]
fn happy_path_across_the_three_roles() {
    let f = Fixture::new();
    let src = f.file("id.msrc", IDENTITY);
    let bin = f.compile("id2.msrc", IDENTITY, "id.amnt");
    let (req, sess) = f.request("y == x", "r", "1");
    let cert = f.path("result.cert");
    let out = f.certify(&src, &bin, &req, &cert);
    assert_eq!((code(&out), stdout(&out)), (0, "PASS".to_owned()));
    assert!(Certificate::decode(&fs::read(&cert).unwrap()).is_ok());

    let out = f.validate(&cert, &bin, &sess);
    assert_eq!((code(&out), stdout(&out)), (0, "OK_PASS".to_owned()));
    // the session was written back closed
    let out = f.validate(&cert, &bin, &sess);
    assert_eq!((code(&out), stdout(&out)), (3, "REJECT_SESSION_CLOSED".to_owned()));
}

#[test]
fn validate_notices_a_swapped_binary() {
    let f = Fixture::new();
    let src = f.file("id.msrc", IDENTITY);
    let bin = f.compile("id2.msrc", IDENTITY, "id.amnt");
    let other = f.compile("o.msrc", "input x; output y; y = x + 1;", "o.amnt");
    let (req, sess) = f.request("y == x", "r", "2");
    let cert = f.path("c.cert");
    assert_eq!(code(&f.certify(&src, &bin, &req, &cert)), 0);
    let out = f.validate(&cert, &other, &sess);
    assert_eq!((code(&out), stdout(&out)), (3, "REJECT_BINARY_HASH".to_owned()));
}

#[test]
fn mismatch_is_a_certificate_not_a_refusal() {
    let f = Fixture::new();
    let src = f.file("id.msrc", IDENTITY);
    let doctored = f.compile("d.msrc", "input x; output y; y = x + 1;", "d.amnt");
    let (req, sess) = f.request("y == x", "r", "3");
    let cert = f.path("c.cert");
    let out = f.certify(&src, &doctored, &req, &cert);
    assert_eq!((code(&out), stdout(&out)), (0, "MISMATCH".to_owned()));
    let out = f.validate(&cert, &doctored, &sess);
    assert_eq!((code(&out), stdout(&out)), (3, "REJECT_MISMATCH_VERDICT".to_owned()));
}

#[test]
fn certify_refusals_exit_5_and_write_nothing() {
    let f = Fixture::new();
    let bin = f.compile("id.msrc", IDENTITY, "id.amnt");
    let (req, _) = f.request("y == x", "r", "4");

    let bad = f.file("bad.msrc", "input x; output y; y = x +;");
    let cert = f.path("none.cert");
    let out = f.certify(&bad, &bin, &req, &cert);
    assert_eq!((code(&out), stdout(&out)), (5, "SOURCE_SYNTAX_ERROR".to_owned()));
    assert!(!PathBuf::from(&cert).exists());

    let two = "input x; input z; output y; y = x + z;";
    let src = f.file("two.msrc", two);
    let bin2 = f.compile("two2.msrc", two, "two.amnt");
    let (req2, _) = f.request("y == x + z", "r2", "5");
    let limited = Command::new(env!("CARGO_BIN_EXE_amanat"))
        .args(["certify", "--source", &src, "--binary", &bin2, "--request", &req2])
        .args(["--key-dir", &f.path("keys"), "--out-cert", &cert])
        .env("AMANAT_MAX_STATES", "1000")
        .output()
        .unwrap();
    assert_eq!((code(&limited), stdout(&limited)), (5, "STATE_LIMIT_EXCEEDED".to_owned()));
    assert!(!PathBuf::from(&cert).exists());

    // garbage request is an input error, not a refusal
    let junk = f.file("junk.sealed", "junk");
    let bin_src = f.file("id3.msrc", IDENTITY);
    assert_eq!(code(&f.certify(&bin_src, &bin, &junk, &cert)), 2);
}

#[test]
fn request_rejects_bad_specs() {
    let f = Fixture::new();
    let out = amanat(&[
        "request",
        "--spec",
        "y ==",
        "--amanat-enc-pub",
        &f.path("keys/encryption.pub.pem"),
        "--customer-id",
        "c",
        "--out-request",
        &f.path("r"),
        "--out-session",
        &f.path("s"),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn harness_scenarios_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    for sc in ["happy", "replay", "tamper", "forge", "mismatch", "secrecy"] {
        let wd = dir.path().join(sc).display().to_string();
        let out = amanat(&["harness", "--scenario", sc, "--workdir", &wd]);
        assert_eq!(code(&out), 0, "{sc}: {}", stdout(&out));
    }
    let cert = dir.path().join("happy").join("result.cert");
    assert!(Certificate::decode(&fs::read(cert).unwrap()).is_ok());

    let wd = dir.path().join("x").display().to_string();
    assert_eq!(code(&amanat(&["harness", "--scenario", "bogus", "--workdir", &wd])), 2);
    let out = amanat(&["harness", "--scenario", "replay", "--workdir", &wd, "--mutate", "skip-nonce"]);
    assert_eq!(code(&out), 1);
}
