//! Verification of secret source code across an IP boundary.
//!
//! A trusted agent (the amanat) runs at the supplier's site with access to
//! the source. It recompiles the source, checks that the result is
//! byte-identical to the binary delivered to the customer, model-checks the
//! customer's specification against it, and signs a certificate binding the
//! specification hash, the binary hash, the verdict and the customer's
//! nonce. The customer validates the certificate without ever seeing the
//! source.
//!
//! Modules, bottom-up:
//!
//! - [`codec`]: canonical TLV encoding and SHA-256
//! - [`crypto`]: RSA signatures and hybrid sealed envelopes
//! - [`minisrc`]: the toy source language and specification expressions
//! - [`compiler`]: deterministic bytecode compilation and the `.amnt` format
//! - [`checker`]: explicit-state model checking and a reference interpreter
//! - [`amanat`]: requests, certificates and the certification pipeline
//! - [`roles`]: customer and supplier logic plus the filesystem mailbox
//! - [`harness`]: adversarial scenarios against the full protocol

pub mod amanat;
pub mod checker;
pub mod codec;
pub mod compiler;
pub mod crypto;
pub mod harness;
pub mod minisrc;
pub mod roles;

pub use amanat::{AmanatIdentity, Certificate, ChallengeRequest, Refusal, Verdict};
pub use checker::{CheckReport, CheckVerdict};
pub use codec::Digest;
pub use compiler::BinaryImage;
pub use minisrc::{SourceProgram, SpecProperty};
pub use roles::{CustomerSession, RejectReason, ValidationResult};
