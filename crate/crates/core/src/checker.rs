//! Explicit-state model checking of bytecode images.
//!
//! The checker explores every reachable machine state breadth-first,
//! branching 256 ways at each HAVOC, and evaluates the specification at
//! every HALT state: input names bind to the input snapshot taken when the
//! preamble finishes, output names bind to the output slots at HALT.
//! Programs that never halt pass vacuously; only postconditions are checked.
//!
//! Reports carry nothing but the verdict and a state count. Counterexample
//! traces are never produced.

use std::collections::VecDeque;

use rustc_hash::FxHashSet;
use smallvec::SmallVec;
use thiserror::Error;

use crate::codec::{self, TlvField};
use crate::compiler::{decode_instruction, BinaryImage, Opcode};
use crate::minisrc::{BinOp, SpecProperty};

pub const MAX_STACK: usize = 64;
pub const DEFAULT_MAX_STATES: u64 = 1_000_000;

pub type ByteVec = SmallVec<[u8; 16]>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MachineState {
    pub pc: u16,
    pub stack: ByteVec,
    pub vars: ByteVec,
    pub snapshot: Option<ByteVec>,
}

impl MachineState {
    pub fn initial(image: &BinaryImage) -> Self {
        Self {
            pc: 0,
            stack: ByteVec::new(),
            vars: SmallVec::from_elem(0, image.var_count as usize),
            snapshot: (image.init_end == 0).then(ByteVec::new),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum RuntimeFault {
    #[error("operand stack overflow")]
    StackOverflow,
    #[error("operand stack underflow")]
    StackUnderflow,
    #[error("invalid opcode")]
    InvalidOpcode,
    #[error("slot operand out of range")]
    InvalidSlot,
    #[error("halted before the input snapshot was taken")]
    MissingSnapshot,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error("state limit of {0} exceeded")]
    StateLimitExceeded(u64),
    #[error("runtime fault: {0}")]
    RuntimeFault(#[from] RuntimeFault),
    #[error("specification refers to `{0}`, which is not an interface variable")]
    UnboundIdentifier(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CheckVerdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CheckReport {
    pub verdict: CheckVerdict,
    pub states_explored: u64,
    pub limit_hit: bool,
}

impl CheckReport {
    pub fn encode(&self) -> Vec<u8> {
        codec::encode_tlv(&[
            TlvField::new(0x41, [(self.verdict == CheckVerdict::Pass) as u8]),
            TlvField::new(0x42, self.states_explored.to_be_bytes()),
            TlvField::new(0x43, [self.limit_hit as u8]),
        ])
        .expect("ascending tags")
    }
}

fn pop(stack: &mut ByteVec) -> Result<u8, RuntimeFault> {
    stack.pop().ok_or(RuntimeFault::StackUnderflow)
}

fn push(stack: &mut ByteVec, v: u8) -> Result<(), RuntimeFault> {
    if stack.len() >= MAX_STACK {
        return Err(RuntimeFault::StackOverflow);
    }
    stack.push(v);
    Ok(())
}

fn slot(state: &MachineState, operand: u16) -> Result<usize, RuntimeFault> {
    let s = operand as usize;
    if s < state.vars.len() {
        Ok(s)
    } else {
        Err(RuntimeFault::InvalidSlot)
    }
}

enum Instr {
    Halt,
    Havoc,
    Other,
}

fn fetch(state: &MachineState, image: &BinaryImage) -> Result<(Opcode, u16), RuntimeFault> {
    decode_instruction(&image.code, state.pc as usize).ok_or(RuntimeFault::InvalidOpcode)
}

fn classify(state: &MachineState, image: &BinaryImage) -> Result<Instr, RuntimeFault> {
    Ok(match fetch(state, image)? {
        (Opcode::Halt, _) => Instr::Halt,
        (Opcode::Havoc, operand) => {
            slot(state, operand)?;
            Instr::Havoc
        }
        _ => Instr::Other,
    })
}

/// Executes one non-HALT instruction in place. `havoc` supplies the
/// value for a HAVOC instruction.
fn exec(next: &mut MachineState, image: &BinaryImage, havoc: u8) -> Result<(), RuntimeFault> {
    let (op, operand) = fetch(next, image)?;
    let mut pc = next.pc as usize + 1 + op.operand_len();
    let binary = |next: &mut MachineState, op: BinOp| -> Result<(), RuntimeFault> {
        let r = pop(&mut next.stack)?;
        let l = pop(&mut next.stack)?;
        push(&mut next.stack, op.apply(l, r))
    };
    match op {
        Opcode::Push => push(&mut next.stack, operand as u8)?,
        Opcode::Load => {
            let v = next.vars[slot(next, operand)?];
            push(&mut next.stack, v)?;
        }
        Opcode::Store => {
            let s = slot(next, operand)?;
            next.vars[s] = pop(&mut next.stack)?;
        }
        Opcode::Add => binary(next, BinOp::Add)?,
        Opcode::Sub => binary(next, BinOp::Sub)?,
        Opcode::Mul => binary(next, BinOp::Mul)?,
        Opcode::Eq => binary(next, BinOp::Eq)?,
        Opcode::Lt => binary(next, BinOp::Lt)?,
        Opcode::Le => binary(next, BinOp::Le)?,
        Opcode::And => binary(next, BinOp::And)?,
        Opcode::Or => binary(next, BinOp::Or)?,
        Opcode::Not => {
            let v = pop(&mut next.stack)?;
            push(&mut next.stack, (v == 0) as u8)?;
        }
        Opcode::Jmp => pc = operand as usize,
        Opcode::Jz => {
            if pop(&mut next.stack)? == 0 {
                pc = operand as usize;
            }
        }
        Opcode::Havoc => {
            let s = slot(next, operand)?;
            next.vars[s] = havoc;
        }
        Opcode::Halt => unreachable!("HALT has no successor"),
    }
    if pc >= image.code.len() {
        return Err(RuntimeFault::InvalidOpcode);
    }
    next.pc = pc as u16;
    if next.snapshot.is_none() && next.pc == image.init_end {
        let n_in = image.inputs.len().min(next.vars.len());
        next.snapshot = Some(next.vars[..n_in].into());
    }
    Ok(())
}

fn successor(state: &MachineState, image: &BinaryImage, havoc: u8) -> Result<MachineState, RuntimeFault> {
    let mut next = state.clone();
    exec(&mut next, image, havoc)?;
    Ok(next)
}

/// Successor states: 256 for HAVOC, none for HALT, one otherwise.
pub fn step(state: &MachineState, image: &BinaryImage) -> Result<Vec<MachineState>, RuntimeFault> {
    match classify(state, image)? {
        Instr::Halt => Ok(Vec::new()),
        Instr::Havoc => (0..=255u8).map(|v| successor(state, image, v)).collect(),
        Instr::Other => Ok(vec![successor(state, image, 0)?]),
    }
}

/// Spec expression with names resolved to snapshot or output-slot indices.
enum Bound {
    Literal(u8),
    Input(usize),
    Output(usize),
    Binary(BinOp, Box<Bound>, Box<Bound>),
    Not(Box<Bound>),
}

impl Bound {
    fn resolve(expr: &crate::minisrc::Expr, image: &BinaryImage) -> Result<Self, CheckError> {
        use crate::minisrc::Expr;
        Ok(match expr {
            Expr::Literal(v) => Bound::Literal(*v),
            Expr::Var(name) => {
                if let Some(i) = image.inputs.iter().position(|n| n == name) {
                    Bound::Input(i)
                } else if let Some(j) = image.outputs.iter().position(|n| n == name) {
                    Bound::Output(image.inputs.len() + j)
                } else {
                    return Err(CheckError::UnboundIdentifier(name.clone()));
                }
            }
            Expr::Binary(op, l, r) => Bound::Binary(
                *op,
                Box::new(Self::resolve(l, image)?),
                Box::new(Self::resolve(r, image)?),
            ),
            Expr::Not(e) => Bound::Not(Box::new(Self::resolve(e, image)?)),
        })
    }

    fn eval(&self, snapshot: &[u8], vars: &[u8]) -> u8 {
        match self {
            Bound::Literal(v) => *v,
            Bound::Input(i) => snapshot[*i],
            Bound::Output(s) => vars[*s],
            Bound::Binary(op, l, r) => op.apply(l.eval(snapshot, vars), r.eval(snapshot, vars)),
            Bound::Not(e) => (e.eval(snapshot, vars) == 0) as u8,
        }
    }
}

pub fn check(image: &BinaryImage, spec: &SpecProperty, max_states: u64) -> Result<CheckReport, CheckError> {
    let property = Bound::resolve(&spec.expr, image)?;
    if image.inputs.len() + image.outputs.len() > image.var_count as usize {
        return Err(RuntimeFault::InvalidSlot.into());
    }
    if max_states == 0 {
        return Err(CheckError::StateLimitExceeded(max_states));
    }

    let initial = MachineState::initial(image);
    let mut visited = FxHashSet::default();
    let mut frontier = VecDeque::new();
    visited.insert(initial.clone());
    frontier.push_back(initial);

    let report = |verdict, explored: usize| CheckReport {
        verdict,
        states_explored: explored as u64,
        limit_hit: false,
    };

    while let Some(state) = frontier.pop_front() {
        let successors = match classify(&state, image)? {
            Instr::Halt => {
                let snapshot = state.snapshot.as_ref().ok_or(RuntimeFault::MissingSnapshot)?;
                if property.eval(snapshot, &state.vars) == 0 {
                    return Ok(report(CheckVerdict::Fail, visited.len()));
                }
                continue;
            }
            _ => step(&state, image)?,
        };
        for next in successors {
            if visited.contains(&next) {
                continue;
            }
            if visited.len() as u64 >= max_states {
                return Err(CheckError::StateLimitExceeded(max_states));
            }
            visited.insert(next.clone());
            frontier.push_back(next);
        }
    }
    Ok(report(CheckVerdict::Pass, visited.len()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunOutcome {
    Halted {
        vars: Vec<u8>,
        snapshot: Vec<u8>,
        steps: u64,
        havocs_used: usize,
    },
    /// No HALT within the step budget.
    Diverged { havocs_used: usize },
}

/// Single-path execution. The k-th HAVOC executed takes `havoc_choices[k]`,
/// or 0 once the choices run out.
pub fn interpret(image: &BinaryImage, havoc_choices: &[u8], max_steps: u64) -> Result<RunOutcome, RuntimeFault> {
    let mut state = MachineState::initial(image);
    let mut havocs_used = 0usize;
    for steps in 0..=max_steps {
        let choice = match classify(&state, image)? {
            Instr::Halt => {
                let snapshot = state.snapshot.ok_or(RuntimeFault::MissingSnapshot)?;
                return Ok(RunOutcome::Halted {
                    vars: state.vars.to_vec(),
                    snapshot: snapshot.to_vec(),
                    steps,
                    havocs_used,
                });
            }
            Instr::Havoc => {
                havocs_used += 1;
                havoc_choices.get(havocs_used - 1).copied().unwrap_or(0)
            }
            Instr::Other => 0,
        };
        if steps == max_steps {
            break;
        }
        exec(&mut state, image, choice)?;
    }
    Ok(RunOutcome::Diverged { havocs_used })
}
