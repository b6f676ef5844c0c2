//! Random programs for property tests.
//!
//! Generated programs are kept small enough for exhaustive oracles: at
//! most four variables, a bounded number of HAVOCs along any path, and
//! loops that either count a dedicated counter up to a small bound or
//! never terminate at all.

use amanat_core::minisrc::{BinOp, Expr, SourceProgram, Stmt};
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub max_vars: usize,
    pub max_havocs_per_path: usize,
    pub max_stmts: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            max_vars: 4,
            max_havocs_per_path: 2,
            max_stmts: 40,
        }
    }
}

/// Names used when rendering internals: the program's own, or a renaming.
#[derive(Debug, Clone, Default)]
pub struct RenderStyle {
    pub comments: bool,
    pub internal_names: Option<Vec<String>>,
    pub interface_rename: Option<(String, String)>,
}

struct Ctx<'a, R: Rng> {
    rng: &'a mut R,
    readable: Vec<String>,
    assignable: Vec<String>,
    counter: Option<String>,
    stmts_left: usize,
    diverge: Diverge,
}

const BIN_OPS: [BinOp; 9] = [
    BinOp::Add,
    BinOp::Sub,
    BinOp::Mul,
    BinOp::Eq,
    BinOp::Ne,
    BinOp::Lt,
    BinOp::Le,
    BinOp::And,
    BinOp::Or,
];

impl<R: Rng> Ctx<'_, R> {
    fn literal(&mut self) -> Expr {
        if self.rng.gen_bool(0.7) {
            Expr::Literal(self.rng.gen_range(0..8))
        } else {
            Expr::Literal(self.rng.gen())
        }
    }

    fn expr(&mut self, depth: usize) -> Expr {
        if depth == 0 || self.rng.gen_bool(0.35) {
            return if self.rng.gen_bool(0.6) && !self.readable.is_empty() {
                Expr::Var(self.readable.choose(self.rng).unwrap().clone())
            } else {
                self.literal()
            };
        }
        if self.rng.gen_bool(0.12) {
            return Expr::Not(Box::new(self.expr(depth - 1)));
        }
        let op = *BIN_OPS.choose(self.rng).unwrap();
        Expr::binary(op, self.expr(depth - 1), self.expr(depth - 1))
    }

    fn assign(&mut self) -> Stmt {
        let target = self.assignable.choose(self.rng).unwrap().clone();
        Stmt::Assign(target, self.expr(3))
    }

    fn block(&mut self, len: usize, depth: usize, in_loop: bool) -> Vec<Stmt> {
        let mut stmts = Vec::new();
        for _ in 0..len {
            if self.stmts_left == 0 {
                break;
            }
            stmts.push(self.stmt(depth, in_loop));
        }
        stmts
    }

    fn stmt(&mut self, depth: usize, in_loop: bool) -> Stmt {
        self.stmts_left -= 1;
        let roll: f64 = self.rng.gen();
        if roll < 0.20 && depth > 0 {
            let cond = self.expr(2);
            let n = self.rng.gen_range(0..4);
            let then_block = self.block(n, depth - 1, in_loop);
            let else_block = self.rng.gen_bool(0.5).then(|| {
                let n = self.rng.gen_range(0..4);
                self.block(n, depth - 1, in_loop)
            });
            return Stmt::If(cond, then_block, else_block);
        }
        if roll < 0.32 && depth > 0 && !in_loop && self.stmts_left >= 3 {
            if let Some(counter) = self.counter.clone() {
                // counter = 0; while (counter < k) { ...; counter = counter + 1; }
                self.stmts_left -= 3;
                let k = self.rng.gen_range(1..=3);
                let n = self.rng.gen_range(0..4);
                let mut body = self.block(n, depth - 1, true);
                body.push(Stmt::Assign(
                    counter.clone(),
                    Expr::binary(BinOp::Add, Expr::Var(counter.clone()), Expr::Literal(1)),
                ));
                let lp = Stmt::While(
                    Expr::binary(BinOp::Lt, Expr::Var(counter.clone()), Expr::Literal(k)),
                    body,
                );
                let reset = Stmt::Assign(counter, Expr::Literal(0));
                return Stmt::If(Expr::Literal(1), vec![reset, lp], None);
            }
        }
        if roll < 0.36 && !in_loop && self.diverge != Diverge::Never {
            let body = if self.diverge == Diverge::Busy && self.stmts_left > 0 {
                self.stmts_left -= 1;
                vec![self.assign()]
            } else {
                vec![]
            };
            return Stmt::While(Expr::Literal(1), body);
        }
        if roll < 0.40 {
            return Stmt::Halt;
        }
        self.assign()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Diverge {
    Never,
    Idle,
    Busy,
}

/// Generates a program plus the number of HAVOCs (including the input
/// preamble) it may execute along one path.
///
/// HAVOCs sit at the top level of the body and split it into phases;
/// each phase runs once per earlier HAVOC tuple, so later phases are
/// kept shorter to bound the checker's state space.
pub fn random_program<R: Rng>(rng: &mut R, cfg: &GenConfig) -> (SourceProgram, usize) {
    let budget = match rng.gen_range(0..4) {
        0 => 0,
        1 | 2 => 1,
        _ => 2,
    }
    .min(cfg.max_havocs_per_path);
    let max_in = budget.min(cfg.max_vars.saturating_sub(1));
    let n_in = rng.gen_range(0..=max_in);
    let n_out = rng.gen_range(1..=(cfg.max_vars - n_in).clamp(1, 2));
    let n_int = rng.gen_range(0..=cfg.max_vars - n_in - n_out);

    let inputs: Vec<String> = ["x", "z"][..n_in].iter().map(|s| s.to_string()).collect();
    let outputs: Vec<String> = ["y", "w"][..n_out].iter().map(|s| s.to_string()).collect();
    let internals: Vec<String> = (0..n_int).map(|i| format!("t{i}")).collect();
    let counter = (n_int > 0 && rng.gen_bool(0.6)).then(|| internals[0].clone());

    let readable: Vec<String> = inputs.iter().chain(&outputs).chain(&internals).cloned().collect();
    let assignable: Vec<String> = readable
        .iter()
        .filter(|n| Some(*n) != counter.as_ref())
        .cloned()
        .collect();

    let mut ctx = Ctx {
        rng,
        readable,
        assignable,
        counter,
        stmts_left: cfg.max_stmts,
        diverge: Diverge::Never,
    };
    let mut body = Vec::new();
    for phase in n_in..=budget {
        let (len, depth, diverge) = match phase {
            0 => (12, 3, Diverge::Busy),
            1 => (6, 2, Diverge::Idle),
            _ => (2, 0, Diverge::Never),
        };
        ctx.diverge = diverge;
        let len = ctx.rng.gen_range(0..=len);
        body.extend(ctx.block(len, depth, false));
        if phase < budget && ctx.stmts_left >= 2 {
            ctx.stmts_left -= 2;
            let target = ctx.assignable.choose(ctx.rng).unwrap().clone();
            let havoc = Stmt::Havoc(target);
            if ctx.rng.gen_bool(0.3) {
                let cond = ctx.expr(1);
                body.push(Stmt::If(cond, vec![havoc], None));
            } else {
                body.push(havoc);
            }
        }
    }

    let program = SourceProgram {
        inputs,
        outputs,
        internals,
        body,
    };
    let havocs = crate::oracle::max_havocs_per_path(&program);
    (program, havocs)
}

/// Counts statements, nested ones included.
pub fn statement_count(stmts: &[Stmt]) -> usize {
    stmts
        .iter()
        .map(|s| {
            1 + match s {
                Stmt::If(_, t, e) => statement_count(t) + e.as_deref().map_or(0, statement_count),
                Stmt::While(_, b) => statement_count(b),
                _ => 0,
            }
        })
        .sum()
}

fn rename(name: &str, program: &SourceProgram, style: &RenderStyle) -> String {
    if let Some((from, to)) = &style.interface_rename {
        if name == from {
            return to.clone();
        }
    }
    match (&style.internal_names, program.internals.iter().position(|n| n == name)) {
        (Some(names), Some(i)) => names[i].clone(),
        _ => name.to_owned(),
    }
}

fn render_expr(e: &Expr, program: &SourceProgram, style: &RenderStyle) -> String {
    match e {
        Expr::Literal(v) => v.to_string(),
        Expr::Var(name) => rename(name, program, style),
        Expr::Binary(op, l, r) => format!(
            "({} {} {})",
            render_expr(l, program, style),
            op.symbol(),
            render_expr(r, program, style)
        ),
        Expr::Not(inner) => format!("!{}", render_expr(inner, program, style)),
    }
}

struct Renderer<'a> {
    program: &'a SourceProgram,
    style: &'a RenderStyle,
    out: String,
    n: usize,
}

impl Renderer<'_> {
    fn comment(&mut self, indent: &str) {
        if self.style.comments {
            self.n += 1;
            self.out
                .push_str(&format!("{indent}// proprietary step {} of the confidential routine\n", self.n));
        }
    }

    fn block(&mut self, stmts: &[Stmt], indent: &str) {
        for s in stmts {
            self.comment(indent);
            let e = |x: &Expr| render_expr(x, self.program, self.style);
            match s {
                Stmt::Assign(t, x) => {
                    let line = format!("{indent}{} = {};\n", rename(t, self.program, self.style), e(x));
                    self.out.push_str(&line);
                }
                Stmt::Havoc(t) => {
                    let line = format!("{indent}havoc {};\n", rename(t, self.program, self.style));
                    self.out.push_str(&line);
                }
                Stmt::Halt => self.out.push_str(&format!("{indent}halt;\n")),
                Stmt::If(c, t, els) => {
                    let head = format!("{indent}if ({}) {{\n", e(c));
                    self.out.push_str(&head);
                    self.block(t, &format!("{indent}    "));
                    match els {
                        Some(b) => {
                            self.out.push_str(&format!("{indent}}} else {{\n"));
                            self.block(b, &format!("{indent}    "));
                            self.out.push_str(&format!("{indent}}}\n"));
                        }
                        None => self.out.push_str(&format!("{indent}}}\n")),
                    }
                }
                Stmt::While(c, b) => {
                    let head = format!("{indent}while ({}) {{\n", e(c));
                    self.out.push_str(&head);
                    self.block(b, &format!("{indent}    "));
                    self.out.push_str(&format!("{indent}}}\n"));
                }
            }
        }
    }
}

/// Renders source text; comments and renaming only touch the surface.
pub fn render(program: &SourceProgram, style: &RenderStyle) -> String {
    let mut r = Renderer {
        program,
        style,
        out: String::new(),
        n: 0,
    };
    r.comment("");
    for (kw, names) in [
        ("input", &program.inputs),
        ("output", &program.outputs),
        ("var", &program.internals),
    ] {
        for name in names {
            let line = format!("{kw} {};\n", rename(name, program, style));
            r.out.push_str(&line);
        }
    }
    r.block(&program.body, "");
    r.comment("");
    r.out
}

/// Long internal names, distinct from each other and from the interface.
pub fn long_internal_names<R: Rng>(rng: &mut R, n: usize) -> Vec<String> {
    const WORDS: [&str; 8] = [
        "accumulator", "scratchpad", "intermediate", "carry_flag", "mixing_state", "hidden_round",
        "secret_table", "pipeline_stage",
    ];
    let mut words = WORDS.to_vec();
    words.shuffle(rng);
    (0..n)
        .map(|i| format!("{}_{}{}", words[i % WORDS.len()], i, rng.gen_range(100..1000)))
        .collect()
}
