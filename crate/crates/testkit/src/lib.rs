//! Test support: a random program generator and reference oracles.

pub mod fuzz;
pub mod gen;
pub mod oracle;

use amanat_core::minisrc::{BinOp, Expr, SourceProgram};
use rand::seq::SliceRandom;
use rand::Rng;

/// Step budget for oracle runs. Generated terminating programs finish far
/// below it.
pub const ORACLE_FUEL: u64 = 5_000;

/// Picks a spec over the program's interface. Roughly half of the specs
/// exclude an observed outcome (and so fail); the rest exclude a valuation
/// that never occurs, or are random expressions.
pub fn random_spec<R: Rng>(rng: &mut R, program: &SourceProgram, havocs: usize) -> Expr {
    let names: Vec<String> = program.inputs.iter().chain(&program.outputs).cloned().collect();
    let outcomes: Vec<Vec<u8>> = oracle::halting_outcomes(program, havocs, ORACLE_FUEL)
        .into_iter()
        .collect();
    let roll: f64 = rng.gen();
    if roll < 0.45 && !outcomes.is_empty() {
        return oracle::excluding(&names, outcomes.choose(rng).unwrap());
    }
    if roll < 0.85 {
        for _ in 0..64 {
            let v: Vec<u8> = names.iter().map(|_| rng.gen()).collect();
            if outcomes.binary_search(&v).is_err() {
                return oracle::excluding(&names, &v);
            }
        }
    }
    random_interface_expr(rng, &names, 3)
}

fn random_interface_expr<R: Rng>(rng: &mut R, names: &[String], depth: usize) -> Expr {
    if depth == 0 || rng.gen_bool(0.3) {
        return match names.choose(rng) {
            Some(n) if rng.gen_bool(0.6) => Expr::Var(n.clone()),
            _ => Expr::Literal(rng.gen_range(0..4)),
        };
    }
    let ops = [BinOp::Add, BinOp::Eq, BinOp::Ne, BinOp::Lt, BinOp::Le, BinOp::And, BinOp::Or];
    let o = *ops.choose(rng).unwrap();
    Expr::binary(
        o,
        random_interface_expr(rng, names, depth - 1),
        random_interface_expr(rng, names, depth - 1),
    )
}
