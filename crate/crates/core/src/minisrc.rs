//! The toy source language and the customer's specification expressions.
//!
//! Programs declare `input`, `output` and `var` slots, then run a list of
//! assignments, `havoc`s, `if`/`while` blocks and `halt`. All values are
//! unsigned bytes. A specification is one expression over the program's
//! interface names, evaluated when the program halts.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at {line}:{column}")]
    SyntaxError { line: u32, column: u32 },
    #[error("duplicate declaration of `{0}`")]
    DuplicateDeclaration(String),
    #[error("undeclared identifier `{0}`")]
    UndeclaredIdentifier(String),
    #[error("literal out of range at {line}:{column}")]
    LiteralOutOfRange { line: u32, column: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("specification refers to `{0}`, which is not an interface variable")]
pub struct SpecInterfaceMismatch(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Ne,
    Lt,
    Le,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Byte semantics shared by the VM and the spec evaluator.
    pub fn apply(self, l: u8, r: u8) -> u8 {
        match self {
            BinOp::Add => l.wrapping_add(r),
            BinOp::Sub => l.wrapping_sub(r),
            BinOp::Mul => l.wrapping_mul(r),
            BinOp::Eq => (l == r) as u8,
            BinOp::Ne => (l != r) as u8,
            BinOp::Lt => (l < r) as u8,
            BinOp::Le => (l <= r) as u8,
            BinOp::And => (l != 0 && r != 0) as u8,
            BinOp::Or => (l != 0 || r != 0) as u8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Literal(u8),
    Var(String),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
}

impl Expr {
    pub fn binary(op: BinOp, l: Expr, r: Expr) -> Self {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    pub fn var(name: &str) -> Self {
        Expr::Var(name.to_owned())
    }

    /// Identifiers in left-to-right order, with repeats.
    pub fn identifiers(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_identifiers(&mut out);
        out
    }

    fn collect_identifiers<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Literal(_) => {}
            Expr::Var(name) => out.push(name),
            Expr::Binary(_, l, r) => {
                l.collect_identifiers(out);
                r.collect_identifiers(out);
            }
            Expr::Not(e) => e.collect_identifiers(out),
        }
    }

    /// Evaluates under `lookup`; `None` if some identifier is unbound.
    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<u8>) -> Option<u8> {
        Some(match self {
            Expr::Literal(v) => *v,
            Expr::Var(name) => lookup(name)?,
            Expr::Binary(op, l, r) => op.apply(l.eval(lookup)?, r.eval(lookup)?),
            Expr::Not(e) => (e.eval(lookup)? == 0) as u8,
        })
    }
}

/// Fully parenthesized rendering: `(l op r)` for binaries, `(!e)` for negation.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Literal(v) => write!(f, "{v}"),
            Expr::Var(name) => f.write_str(name),
            Expr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Not(e) => write!(f, "(!{e})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Stmt {
    Assign(String, Expr),
    Havoc(String),
    If(Expr, Vec<Stmt>, Option<Vec<Stmt>>),
    While(Expr, Vec<Stmt>),
    Halt,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct SourceProgram {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub internals: Vec<String>,
    pub body: Vec<Stmt>,
}

impl SourceProgram {
    pub fn variable_count(&self) -> usize {
        self.inputs.len() + self.outputs.len() + self.internals.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpecProperty {
    pub expr: Expr,
    pub canonical_text: String,
}

impl SpecProperty {
    pub fn new(expr: Expr) -> Self {
        let canonical_text = expr.to_string();
        Self {
            expr,
            canonical_text,
        }
    }
}

pub const KEYWORDS: &[&str] = &["input", "output", "var", "havoc", "halt", "if", "else", "while"];

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_') && !KEYWORDS.contains(&s)
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Keyword(&'static str),
    Number(String),
    Semi,
    Assign,
    EqEq,
    NotEq,
    Lt,
    Le,
    Plus,
    Minus,
    Star,
    AndAnd,
    OrOr,
    Bang,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: u32,
    column: u32,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let (mut i, mut line, mut column) = (0usize, 1u32, 1u32);

    macro_rules! advance {
        ($n:expr) => {{
            for _ in 0..$n {
                if chars[i] == '\n' {
                    line += 1;
                    column = 1;
                } else {
                    column += 1;
                }
                i += 1;
            }
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        if c.is_whitespace() {
            advance!(1);
            continue;
        }
        if c == '/' && next == Some('/') {
            while i < chars.len() && chars[i] != '\n' {
                advance!(1);
            }
            continue;
        }
        let (start_line, start_col) = (line, column);
        let (tok, len) = if c.is_ascii_alphabetic() || c == '_' {
            let end = (i..chars.len())
                .find(|&j| !(chars[j].is_ascii_alphanumeric() || chars[j] == '_'))
                .unwrap_or(chars.len());
            let word: String = chars[i..end].iter().collect();
            let tok = match KEYWORDS.iter().find(|k| **k == word) {
                Some(k) => Tok::Keyword(k),
                None => Tok::Ident(word),
            };
            (tok, end - i)
        } else if c.is_ascii_digit() {
            let end = (i..chars.len())
                .find(|&j| !chars[j].is_ascii_digit())
                .unwrap_or(chars.len());
            if end < chars.len() && (chars[end].is_ascii_alphabetic() || chars[end] == '_') {
                return Err(ParseError::SyntaxError {
                    line,
                    column: column + (end - i) as u32,
                });
            }
            (Tok::Number(chars[i..end].iter().collect()), end - i)
        } else {
            match (c, next) {
                ('=', Some('=')) => (Tok::EqEq, 2),
                ('!', Some('=')) => (Tok::NotEq, 2),
                ('<', Some('=')) => (Tok::Le, 2),
                ('&', Some('&')) => (Tok::AndAnd, 2),
                ('|', Some('|')) => (Tok::OrOr, 2),
                ('=', _) => (Tok::Assign, 1),
                ('<', _) => (Tok::Lt, 1),
                ('!', _) => (Tok::Bang, 1),
                ('+', _) => (Tok::Plus, 1),
                ('-', _) => (Tok::Minus, 1),
                ('*', _) => (Tok::Star, 1),
                (';', _) => (Tok::Semi, 1),
                ('(', _) => (Tok::LParen, 1),
                (')', _) => (Tok::RParen, 1),
                ('{', _) => (Tok::LBrace, 1),
                ('}', _) => (Tok::RBrace, 1),
                _ => return Err(ParseError::SyntaxError { line, column }),
            }
        };
        advance!(len);
        tokens.push(Token {
            tok,
            line: start_line,
            column: start_col,
        });
    }
    tokens.push(Token {
        tok: Tok::Eof,
        line,
        column,
    });
    Ok(tokens)
}

// ---------------------------------------------------------------------------
// Parser

/// Nesting bound; keeps the recursive descent from exhausting the stack on
/// adversarial input.
const MAX_DEPTH: usize = 256;

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    depth: usize,
}

impl Parser {
    fn new(text: &str) -> Result<Self, ParseError> {
        Ok(Self {
            tokens: lex(text)?,
            pos: 0,
            depth: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self) -> ParseError {
        let t = &self.tokens[self.pos];
        ParseError::SyntaxError {
            line: t.line,
            column: t.column,
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error())
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                Ok(name)
            }
            _ => Err(self.error()),
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            Err(self.error())
        } else {
            Ok(())
        }
    }

    fn program(&mut self) -> Result<SourceProgram, ParseError> {
        let mut program = SourceProgram::default();
        let mut seen = HashSet::new();
        while let Tok::Keyword(kw @ ("input" | "output" | "var")) = *self.peek() {
            self.bump();
            let name = self.ident()?;
            self.expect(Tok::Semi)?;
            if !seen.insert(name.clone()) {
                return Err(ParseError::DuplicateDeclaration(name));
            }
            match kw {
                "input" => program.inputs.push(name),
                "output" => program.outputs.push(name),
                _ => program.internals.push(name),
            }
        }
        while *self.peek() != Tok::Eof {
            program.body.push(self.stmt(&seen)?);
        }
        Ok(program)
    }

    fn declared(&self, seen: &HashSet<String>, name: String) -> Result<String, ParseError> {
        if seen.contains(&name) {
            Ok(name)
        } else {
            Err(ParseError::UndeclaredIdentifier(name))
        }
    }

    fn block(&mut self, seen: &HashSet<String>) -> Result<Vec<Stmt>, ParseError> {
        self.expect(Tok::LBrace)?;
        let mut stmts = Vec::new();
        while *self.peek() != Tok::RBrace {
            stmts.push(self.stmt(seen)?);
        }
        self.bump();
        Ok(stmts)
    }

    fn stmt(&mut self, seen: &HashSet<String>) -> Result<Stmt, ParseError> {
        self.enter()?;
        let stmt = match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                let target = self.declared(seen, name)?;
                self.expect(Tok::Assign)?;
                let e = self.expr(Some(seen))?;
                self.expect(Tok::Semi)?;
                Stmt::Assign(target, e)
            }
            Tok::Keyword("havoc") => {
                self.bump();
                let name = self.ident()?;
                let target = self.declared(seen, name)?;
                self.expect(Tok::Semi)?;
                Stmt::Havoc(target)
            }
            Tok::Keyword("halt") => {
                self.bump();
                self.expect(Tok::Semi)?;
                Stmt::Halt
            }
            Tok::Keyword("if") => {
                self.bump();
                self.expect(Tok::LParen)?;
                let cond = self.expr(Some(seen))?;
                self.expect(Tok::RParen)?;
                let then_block = self.block(seen)?;
                let else_block = if *self.peek() == Tok::Keyword("else") {
                    self.bump();
                    Some(self.block(seen)?)
                } else {
                    None
                };
                Stmt::If(cond, then_block, else_block)
            }
            Tok::Keyword("while") => {
                self.bump();
                self.expect(Tok::LParen)?;
                let cond = self.expr(Some(seen))?;
                self.expect(Tok::RParen)?;
                Stmt::While(cond, self.block(seen)?)
            }
            _ => return Err(self.error()),
        };
        self.depth -= 1;
        Ok(stmt)
    }

    // `scope` is None for specifications, whose identifiers are checked
    // against an interface later.
    fn expr(&mut self, scope: Option<&HashSet<String>>) -> Result<Expr, ParseError> {
        self.enter()?;
        let mut lhs = self.and_expr(scope)?;
        while *self.peek() == Tok::OrOr {
            self.bump();
            lhs = Expr::binary(BinOp::Or, lhs, self.and_expr(scope)?);
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn and_expr(&mut self, scope: Option<&HashSet<String>>) -> Result<Expr, ParseError> {
        let mut lhs = self.cmp_expr(scope)?;
        while *self.peek() == Tok::AndAnd {
            self.bump();
            lhs = Expr::binary(BinOp::And, lhs, self.cmp_expr(scope)?);
        }
        Ok(lhs)
    }

    fn cmp_op(&self) -> Option<BinOp> {
        match self.peek() {
            Tok::EqEq => Some(BinOp::Eq),
            Tok::NotEq => Some(BinOp::Ne),
            Tok::Lt => Some(BinOp::Lt),
            Tok::Le => Some(BinOp::Le),
            _ => None,
        }
    }

    fn cmp_expr(&mut self, scope: Option<&HashSet<String>>) -> Result<Expr, ParseError> {
        let lhs = self.add_expr(scope)?;
        let Some(op) = self.cmp_op() else {
            return Ok(lhs);
        };
        self.bump();
        let rhs = self.add_expr(scope)?;
        // comparisons do not chain
        if self.cmp_op().is_some() {
            return Err(self.error());
        }
        Ok(Expr::binary(op, lhs, rhs))
    }

    fn add_expr(&mut self, scope: Option<&HashSet<String>>) -> Result<Expr, ParseError> {
        let mut lhs = self.mul_expr(scope)?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::binary(op, lhs, self.mul_expr(scope)?);
        }
    }

    fn mul_expr(&mut self, scope: Option<&HashSet<String>>) -> Result<Expr, ParseError> {
        let mut lhs = self.unary(scope)?;
        while *self.peek() == Tok::Star {
            self.bump();
            lhs = Expr::binary(BinOp::Mul, lhs, self.unary(scope)?);
        }
        Ok(lhs)
    }

    fn unary(&mut self, scope: Option<&HashSet<String>>) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Bang {
            self.bump();
            self.enter()?;
            let e = self.unary(scope)?;
            self.depth -= 1;
            return Ok(Expr::Not(Box::new(e)));
        }
        self.primary(scope)
    }

    fn primary(&mut self, scope: Option<&HashSet<String>>) -> Result<Expr, ParseError> {
        let t = self.bump();
        match t.tok {
            Tok::Number(digits) => match digits.parse::<u8>() {
                Ok(v) => Ok(Expr::Literal(v)),
                Err(_) => Err(ParseError::LiteralOutOfRange {
                    line: t.line,
                    column: t.column,
                }),
            },
            Tok::Ident(name) => match scope {
                Some(seen) => Ok(Expr::Var(self.declared(seen, name)?)),
                None => Ok(Expr::Var(name)),
            },
            Tok::LParen => {
                let e = self.expr(scope)?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            _ => Err(ParseError::SyntaxError {
                line: t.line,
                column: t.column,
            }),
        }
    }
}

pub fn parse_program(text: &str) -> Result<SourceProgram, ParseError> {
    Parser::new(text)?.program()
}

pub fn parse_spec(text: &str) -> Result<SpecProperty, ParseError> {
    let mut p = Parser::new(text)?;
    let expr = p.expr(None)?;
    if *p.peek() != Tok::Eof {
        return Err(p.error());
    }
    Ok(SpecProperty::new(expr))
}

pub fn canonical_spec_text(spec: &SpecProperty) -> String {
    spec.expr.to_string()
}

pub fn check_spec_interface(
    spec: &SpecProperty,
    inputs: &[String],
    outputs: &[String],
) -> Result<(), SpecInterfaceMismatch> {
    match spec
        .expr
        .identifiers()
        .into_iter()
        .find(|id| !inputs.iter().chain(outputs).any(|n| n == id))
    {
        Some(id) => Err(SpecInterfaceMismatch(id.to_owned())),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn identity_program() {
        let p = parse_program("input x; output y; y = x;").unwrap();
        assert_eq!(p.inputs, names(&["x"]));
        assert_eq!(p.outputs, names(&["y"]));
        assert!(p.internals.is_empty());
        assert_eq!(p.body, vec![Stmt::Assign("y".into(), Expr::var("x"))]);
    }

    #[test]
    fn program_errors() {
        assert!(matches!(
            parse_program("input x; x = ;"),
            Err(ParseError::SyntaxError { line: 1, column: 14 })
        ));
        assert_eq!(
            parse_program("output y; y = z;"),
            Err(ParseError::UndeclaredIdentifier("z".into()))
        );
        assert_eq!(
            parse_program("input x; var x;"),
            Err(ParseError::DuplicateDeclaration("x".into()))
        );
        assert!(matches!(
            parse_program("output y; y = 256;"),
            Err(ParseError::LiteralOutOfRange { .. })
        ));
        assert!(matches!(
            parse_program("output y; y = 99999999999999999999999;"),
            Err(ParseError::LiteralOutOfRange { .. })
        ));
        // declarations must precede statements
        assert!(matches!(
            parse_program("output y; y = 1; var t;"),
            Err(ParseError::SyntaxError { .. })
        ));
        assert!(matches!(parse_program("var if;"), Err(ParseError::SyntaxError { .. })));
        assert!(matches!(parse_program("output y; y = 1 # 2;"), Err(ParseError::SyntaxError { .. })));
        assert!(matches!(parse_program("output y; y = 12ab;"), Err(ParseError::SyntaxError { .. })));
        assert_eq!(
            parse_program("output y; havoc q;"),
            Err(ParseError::UndeclaredIdentifier("q".into()))
        );
    }

    #[test]
    fn statements() {
        let p = parse_program(
            "input a; output b; var t;
             havoc t;
             if (a < 3) { b = 1; } else { b = 2; }
             if (!a) { halt; }
             while (t != 0) { t = t - 1; }",
        )
        .unwrap();
        assert_eq!(p.internals, names(&["t"]));
        assert_eq!(p.body.len(), 4);
        assert_eq!(p.body[0], Stmt::Havoc("t".into()));
        assert!(matches!(&p.body[1], Stmt::If(_, t, Some(e)) if t.len() == 1 && e.len() == 1));
        assert!(matches!(&p.body[2], Stmt::If(Expr::Not(_), t, None) if t == &vec![Stmt::Halt]));
        assert!(matches!(&p.body[3], Stmt::While(Expr::Binary(BinOp::Ne, _, _), b) if b.len() == 1));
    }

    #[test]
    fn comments_and_whitespace_vanish() {
        let a = parse_program("input x; output y; y = x;").unwrap();
        let b = parse_program("// header\ninput   x; // the input\n\noutput y;\ny=x; // done").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spec_parsing() {
        let s = parse_spec("y == x").unwrap();
        assert_eq!(s.expr, Expr::binary(BinOp::Eq, Expr::var("y"), Expr::var("x")));
        let t = parse_spec("0 == 0").unwrap();
        assert_eq!(t.expr.eval(&|_| None), Some(1));
        assert!(matches!(parse_spec("y = x"), Err(ParseError::SyntaxError { .. })));
        assert!(matches!(parse_spec("y =="), Err(ParseError::SyntaxError { .. })));
        assert!(matches!(parse_spec("havoc y"), Err(ParseError::SyntaxError { .. })));
        assert!(matches!(parse_spec(""), Err(ParseError::SyntaxError { .. })));
        assert!(matches!(parse_spec("300 == y"), Err(ParseError::LiteralOutOfRange { .. })));
        assert!(parse_spec("y == x // trailing comment\n").is_ok());
    }

    #[test]
    fn canonical_rendering() {
        assert_eq!(parse_spec("y==x").unwrap().canonical_text, "(y == x)");
        assert_eq!(parse_spec("a + b * c").unwrap().canonical_text, "(a + (b * c))");
        assert_eq!(parse_spec("a - b - c").unwrap().canonical_text, "((a - b) - c)");
        assert_eq!(
            parse_spec("a || b && c == 1").unwrap().canonical_text,
            "(a || (b && (c == 1)))"
        );
        assert_eq!(parse_spec("!!y").unwrap().canonical_text, "(!(!y))");
        assert_eq!(parse_spec("!y + 1").unwrap().canonical_text, "((!y) + 1)");
        assert_eq!(parse_spec("((7))").unwrap().canonical_text, "7");
        assert_eq!(canonical_spec_text(&parse_spec("y<=x").unwrap()), "(y <= x)");
    }

    #[test]
    fn comparisons_do_not_chain() {
        assert!(parse_spec("a < b < c").is_err());
        assert!(parse_spec("a == b != c").is_err());
        assert_eq!(parse_spec("(a < b) < c").unwrap().canonical_text, "((a < b) < c)");
    }

    #[test]
    fn interface_check() {
        let (i, o) = (names(&["x"]), names(&["y"]));
        assert!(check_spec_interface(&parse_spec("y == x").unwrap(), &i, &o).is_ok());
        assert_eq!(
            check_spec_interface(&parse_spec("t == 0").unwrap(), &i, &o),
            Err(SpecInterfaceMismatch("t".into()))
        );
        assert!(check_spec_interface(&parse_spec("0 == 0").unwrap(), &[], &[]).is_ok());
    }

    #[test]
    fn deep_nesting_is_an_error_not_a_crash() {
        let deep = format!("{}1{}", "(".repeat(5000), ")".repeat(5000));
        assert!(parse_spec(&deep).is_err());
        let bangs = format!("{}1", "!".repeat(5000));
        assert!(parse_spec(&bangs).is_err());
        let ifs = format!("output y; {} {}", "if (1) {".repeat(2000), "}".repeat(2000));
        assert!(parse_program(&ifs).is_err());
    }

    #[test]
    fn identifier_rule() {
        assert!(is_identifier("_a9"));
        assert!(!is_identifier("9a"));
        assert!(!is_identifier("while"));
        assert!(!is_identifier(""));
        assert!(!is_identifier("a-b"));
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            any::<u8>().prop_map(Expr::Literal),
            prop::sample::select(vec!["x", "y", "out_1"]).prop_map(Expr::var),
        ];
        leaf.prop_recursive(5, 40, 2, |inner| {
            prop_oneof![
                (
                    prop::sample::select(vec![
                        BinOp::Add,
                        BinOp::Sub,
                        BinOp::Mul,
                        BinOp::Eq,
                        BinOp::Ne,
                        BinOp::Lt,
                        BinOp::Le,
                        BinOp::And,
                        BinOp::Or
                    ]),
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, l, r)| Expr::binary(op, l, r)),
                inner.prop_map(|e| Expr::Not(Box::new(e))),
            ]
        })
    }

    proptest! {
        #[test]
        fn canonical_text_is_a_fixed_point(e in arb_expr()) {
            let spec = SpecProperty::new(e.clone());
            let reparsed = parse_spec(&spec.canonical_text).unwrap();
            prop_assert_eq!(&reparsed.expr, &e);
            prop_assert_eq!(canonical_spec_text(&reparsed), spec.canonical_text);
        }

        #[test]
        fn parser_is_total_on_arbitrary_text(s in "\\PC{0,200}") {
            let _ = parse_program(&s);
            let _ = parse_spec(&s);
        }

        #[test]
        fn parser_is_total_on_token_soup(
            toks in prop::collection::vec(
                prop::sample::select(vec![
                    "input", "output", "var", "x", "y", ";", "=", "==", "(", ")", "{", "}",
                    "if", "else", "while", "havoc", "halt", "1", "255", "256", "+", "*",
                    "!", "&&", "<", "//", "\n",
                ]),
                0..60,
            )
        ) {
            let s = toks.join(" ");
            let _ = parse_program(&s);
            let _ = parse_spec(&s);
        }
    }
}
