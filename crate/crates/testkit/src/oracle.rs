//! Reference semantics written against the AST, sharing nothing with the
//! compiler or the VM.

use std::collections::{BTreeSet, HashMap};

use amanat_core::checker::{interpret, RunOutcome, RuntimeFault};
use amanat_core::compiler::BinaryImage;
use amanat_core::minisrc::{BinOp, Expr, SourceProgram, Stmt};

fn truth(v: u8) -> bool {
    v != 0
}

fn op(o: BinOp, l: u8, r: u8) -> u8 {
    let (a, b) = (l as u32, r as u32);
    let v = match o {
        BinOp::Add => (a + b) % 256,
        BinOp::Sub => (a + 256 - b) % 256,
        BinOp::Mul => (a * b) % 256,
        BinOp::Eq => u32::from(a == b),
        BinOp::Ne => u32::from(a != b),
        BinOp::Lt => u32::from(a < b),
        BinOp::Le => u32::from(a <= b),
        BinOp::And => u32::from(truth(l) && truth(r)),
        BinOp::Or => u32::from(truth(l) || truth(r)),
    };
    v as u8
}

/// Expression with variables resolved to positions in declaration order.
enum Node {
    Lit(u8),
    Var(usize),
    Bin(BinOp, Box<Node>, Box<Node>),
    Not(Box<Node>),
}

fn resolve(e: &Expr, names: &HashMap<&str, usize>) -> Node {
    match e {
        Expr::Literal(v) => Node::Lit(*v),
        Expr::Var(n) => Node::Var(names[n.as_str()]),
        Expr::Binary(o, l, r) => Node::Bin(*o, Box::new(resolve(l, names)), Box::new(resolve(r, names))),
        Expr::Not(x) => Node::Not(Box::new(resolve(x, names))),
    }
}

fn eval(n: &Node, env: &[u8]) -> u8 {
    match n {
        Node::Lit(v) => *v,
        Node::Var(i) => env[*i],
        Node::Bin(o, l, r) => op(*o, eval(l, env), eval(r, env)),
        Node::Not(x) => u8::from(!truth(eval(x, env))),
    }
}

enum Cmd {
    Assign(usize, Node),
    Havoc(usize),
    Halt,
    If(Node, Vec<Cmd>, Vec<Cmd>),
    While(Node, Vec<Cmd>),
}

fn lower(stmts: &[Stmt], names: &HashMap<&str, usize>) -> Vec<Cmd> {
    stmts
        .iter()
        .map(|s| match s {
            Stmt::Assign(t, e) => Cmd::Assign(names[t.as_str()], resolve(e, names)),
            Stmt::Havoc(t) => Cmd::Havoc(names[t.as_str()]),
            Stmt::Halt => Cmd::Halt,
            Stmt::If(c, t, e) => Cmd::If(
                resolve(c, names),
                lower(t, names),
                lower(e.as_deref().unwrap_or(&[]), names),
            ),
            Stmt::While(c, b) => Cmd::While(resolve(c, names), lower(b, names)),
        })
        .collect()
}

fn declared(program: &SourceProgram) -> impl Iterator<Item = &String> {
    program.inputs.iter().chain(&program.outputs).chain(&program.internals)
}

fn name_table(program: &SourceProgram) -> HashMap<&str, usize> {
    declared(program).enumerate().map(|(i, n)| (n.as_str(), i)).collect()
}

/// Evaluates an expression with every declared variable bound by name.
pub fn eval_expr(e: &Expr, env: &HashMap<String, u8>) -> u8 {
    match e {
        Expr::Literal(v) => *v,
        Expr::Var(n) => env[n],
        Expr::Binary(o, l, r) => op(*o, eval_expr(l, env), eval_expr(r, env)),
        Expr::Not(x) => u8::from(!truth(eval_expr(x, env))),
    }
}

/// Final state of a halting run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Halted {
    /// Input values at start.
    pub inputs: Vec<u8>,
    /// Every variable in declaration order: inputs, outputs, internals.
    pub vars: Vec<u8>,
    pub havocs_used: usize,
}

impl Halted {
    /// Input values as first seen, then final output values.
    pub fn interface(&self, program: &SourceProgram) -> Vec<u8> {
        let n_in = program.inputs.len();
        let mut v = self.inputs.clone();
        v.extend_from_slice(&self.vars[n_in..n_in + program.outputs.len()]);
        v
    }
}

enum Flow {
    Next,
    Halt,
    OutOfFuel,
}

struct Run<'a> {
    choices: &'a [u8],
    used: usize,
    fuel: u64,
    env: Vec<u8>,
}

impl Run<'_> {
    fn havoc(&mut self) -> u8 {
        let v = self.choices.get(self.used).copied().unwrap_or(0);
        self.used += 1;
        v
    }

    fn block(&mut self, cmds: &[Cmd]) -> Flow {
        for c in cmds {
            if self.fuel == 0 {
                return Flow::OutOfFuel;
            }
            self.fuel -= 1;
            match c {
                Cmd::Assign(t, e) => self.env[*t] = eval(e, &self.env),
                Cmd::Havoc(t) => self.env[*t] = self.havoc(),
                Cmd::Halt => return Flow::Halt,
                Cmd::If(c, t, e) => {
                    let flow = if truth(eval(c, &self.env)) { self.block(t) } else { self.block(e) };
                    if !matches!(flow, Flow::Next) {
                        return flow;
                    }
                }
                Cmd::While(c, b) => loop {
                    if self.fuel == 0 {
                        return Flow::OutOfFuel;
                    }
                    self.fuel -= 1;
                    if !truth(eval(c, &self.env)) {
                        break;
                    }
                    let flow = self.block(b);
                    if !matches!(flow, Flow::Next) {
                        return flow;
                    }
                },
            }
        }
        Flow::Next
    }
}

/// A program prepared for repeated runs.
pub struct SourceRunner {
    n_in: usize,
    n_vars: usize,
    body: Vec<Cmd>,
}

impl SourceRunner {
    pub fn new(program: &SourceProgram) -> Self {
        let names = name_table(program);
        Self {
            n_in: program.inputs.len(),
            n_vars: names.len(),
            body: lower(&program.body, &names),
        }
    }

    /// Runs on one tuple of HAVOC values, inputs first. `None` means the
    /// run did not halt within `fuel` steps.
    pub fn run(&self, choices: &[u8], fuel: u64) -> Option<Halted> {
        self.run_counting(choices, fuel).0
    }

    /// Like `run`, also reporting how many HAVOCs executed.
    pub fn run_counting(&self, choices: &[u8], fuel: u64) -> (Option<Halted>, usize) {
        let mut run = Run {
            choices,
            used: 0,
            fuel,
            env: vec![0; self.n_vars],
        };
        for i in 0..self.n_in {
            run.env[i] = run.havoc();
        }
        let inputs = run.env[..self.n_in].to_vec();
        match run.block(&self.body) {
            Flow::Next | Flow::Halt => {
                let used = run.used;
                let h = Halted {
                    inputs,
                    vars: run.env,
                    havocs_used: used,
                };
                (Some(h), used)
            }
            Flow::OutOfFuel => (None, run.used),
        }
    }
}

pub fn run_source(program: &SourceProgram, choices: &[u8], fuel: u64) -> Option<Halted> {
    SourceRunner::new(program).run(choices, fuel)
}

/// Calls `f` with every tuple in `[0, 256)^k`.
pub fn for_each_tuple(k: usize, mut f: impl FnMut(&[u8])) {
    let mut t = vec![0u8; k];
    loop {
        f(&t);
        let mut i = 0;
        loop {
            if i == k {
                return;
            }
            t[i] = t[i].wrapping_add(1);
            if t[i] != 0 {
                break;
            }
            i += 1;
        }
    }
}

/// Distinct interface valuations over all halting runs, for every tuple
/// of up to `havocs` HAVOC values. A run that stops after reading only a
/// prefix of its tuple stands for every tuple sharing that prefix.
pub fn halting_outcomes(program: &SourceProgram, havocs: usize, fuel: u64) -> BTreeSet<Vec<u8>> {
    fn explore(
        runner: &SourceRunner,
        program: &SourceProgram,
        prefix: &mut Vec<u8>,
        havocs: usize,
        fuel: u64,
        out: &mut BTreeSet<Vec<u8>>,
    ) {
        let mut choices = prefix.clone();
        choices.resize(havocs, 0);
        let (halted, used) = runner.run_counting(&choices, fuel);
        if used <= prefix.len() || prefix.len() == havocs {
            if let Some(h) = halted {
                out.insert(h.interface(program));
            }
            return;
        }
        for v in 0..=255u8 {
            prefix.push(v);
            explore(runner, program, prefix, havocs, fuel, out);
            prefix.pop();
        }
    }
    let runner = SourceRunner::new(program);
    let mut out = BTreeSet::new();
    explore(&runner, program, &mut Vec::new(), havocs, fuel, &mut out);
    out
}

/// Spec value at a halting state: inputs read their initial values.
pub fn eval_spec(spec: &Expr, program: &SourceProgram, outcome: &[u8]) -> u8 {
    let mut env = HashMap::new();
    for (n, v) in program.inputs.iter().chain(&program.outputs).zip(outcome) {
        env.insert(n.clone(), *v);
    }
    eval_expr(spec, &env)
}

/// Exhaustive verdict: true iff every halting run satisfies the spec.
pub fn exhaustive_pass(spec: &Expr, program: &SourceProgram, havocs: usize, fuel: u64) -> bool {
    all_satisfy(spec, program, &halting_outcomes(program, havocs, fuel))
}

pub fn all_satisfy(spec: &Expr, program: &SourceProgram, outcomes: &BTreeSet<Vec<u8>>) -> bool {
    outcomes.iter().all(|o| truth(eval_spec(spec, program, o)))
}

/// `!(n0 == v0 && n1 == v1 && ...)`, which fails exactly on that valuation.
pub fn excluding(names: &[String], values: &[u8]) -> Expr {
    let conj = names
        .iter()
        .zip(values)
        .map(|(n, v)| Expr::binary(BinOp::Eq, Expr::Var(n.clone()), Expr::Literal(*v)))
        .reduce(|a, b| Expr::binary(BinOp::And, a, b))
        .unwrap_or(Expr::Literal(1));
    Expr::Not(Box::new(conj))
}

/// Most HAVOCs executed along any syntactic path, counting the input
/// preamble. Loops count their body once, so callers must keep HAVOC
/// out of loop bodies.
pub fn max_havocs_per_path(program: &SourceProgram) -> usize {
    fn block(stmts: &[Stmt]) -> usize {
        stmts
            .iter()
            .map(|s| match s {
                Stmt::Havoc(_) => 1,
                Stmt::If(_, t, e) => block(t).max(e.as_deref().map_or(0, block)),
                Stmt::While(_, b) => block(b),
                _ => 0,
            })
            .sum()
    }
    program.inputs.len() + block(&program.body)
}

pub fn has_havoc_in_loop(stmts: &[Stmt]) -> bool {
    fn any_havoc(stmts: &[Stmt]) -> bool {
        stmts.iter().any(|s| match s {
            Stmt::Havoc(_) => true,
            Stmt::If(_, t, e) => any_havoc(t) || e.as_deref().is_some_and(any_havoc),
            Stmt::While(_, b) => any_havoc(b),
            _ => false,
        })
    }
    stmts.iter().any(|s| match s {
        Stmt::If(_, t, e) => has_havoc_in_loop(t) || e.as_deref().is_some_and(has_havoc_in_loop),
        Stmt::While(_, b) => any_havoc(b),
        _ => false,
    })
}

/// Interface valuations over all halting runs of the compiled binary,
/// found by running the VM on every HAVOC tuple. Prefixes are shared as
/// in [`halting_outcomes`].
pub fn vm_halting_outcomes(
    image: &BinaryImage,
    havocs: usize,
    max_steps: u64,
) -> Result<BTreeSet<Vec<u8>>, RuntimeFault> {
    fn explore(
        image: &BinaryImage,
        prefix: &mut Vec<u8>,
        havocs: usize,
        max_steps: u64,
        out: &mut BTreeSet<Vec<u8>>,
    ) -> Result<(), RuntimeFault> {
        let mut choices = prefix.clone();
        choices.resize(havocs, 0);
        let outcome = interpret(image, &choices, max_steps)?;
        let used = match &outcome {
            RunOutcome::Halted { havocs_used, .. } | RunOutcome::Diverged { havocs_used } => *havocs_used,
        };
        if used <= prefix.len() || prefix.len() == havocs {
            if let RunOutcome::Halted { vars, snapshot, .. } = outcome {
                let n_in = image.inputs.len();
                let mut v = snapshot;
                v.extend_from_slice(&vars[n_in..n_in + image.outputs.len()]);
                out.insert(v);
            }
            return Ok(());
        }
        for v in 0..=255u8 {
            prefix.push(v);
            explore(image, prefix, havocs, max_steps, out)?;
            prefix.pop();
        }
        Ok(())
    }
    let mut out = BTreeSet::new();
    explore(image, &mut Vec::new(), havocs, max_steps, &mut out)?;
    Ok(out)
}
