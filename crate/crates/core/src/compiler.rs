//! Deterministic compilation of source programs into stripped bytecode
//! images, and the `.amnt` file layout.
//!
//! Slot layout is inputs, then outputs, then internals. Only input and
//! output names survive into the image; internal names and comments never
//! reach the emitter, so equal ASTs (up to internal renaming) always give
//! byte-identical images.

use std::collections::HashMap;

use thiserror::Error;

use crate::codec::{self, Digest};
use crate::minisrc::{is_identifier, BinOp, Expr, SourceProgram, Stmt};

pub const MAGIC: [u8; 4] = *b"AMNT";
pub const BINARY_VERSION: u16 = 1;
pub const MAX_CODE_LEN: usize = 65535;
pub const MAX_VARIABLES: usize = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Opcode {
    Push = 0x01,
    Load = 0x02,
    Store = 0x03,
    Add = 0x10,
    Sub = 0x11,
    Mul = 0x12,
    Eq = 0x20,
    Lt = 0x21,
    Le = 0x22,
    Not = 0x30,
    And = 0x31,
    Or = 0x32,
    Jmp = 0x40,
    Jz = 0x41,
    Havoc = 0x50,
    Halt = 0x60,
}

impl Opcode {
    pub fn from_byte(b: u8) -> Option<Self> {
        use Opcode::*;
        Some(match b {
            0x01 => Push,
            0x02 => Load,
            0x03 => Store,
            0x10 => Add,
            0x11 => Sub,
            0x12 => Mul,
            0x20 => Eq,
            0x21 => Lt,
            0x22 => Le,
            0x30 => Not,
            0x31 => And,
            0x32 => Or,
            0x40 => Jmp,
            0x41 => Jz,
            0x50 => Havoc,
            0x60 => Halt,
            _ => return None,
        })
    }

    /// Operand bytes following the opcode.
    pub fn operand_len(self) -> usize {
        match self {
            Opcode::Push | Opcode::Load | Opcode::Store | Opcode::Havoc => 1,
            Opcode::Jmp | Opcode::Jz => 2,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryImage {
    pub version: u16,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub var_count: u8,
    pub init_end: u16,
    pub code: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("program declares more than 255 variables")]
    TooManyVariables,
    #[error("generated code exceeds 65535 bytes")]
    CodeTooLarge,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BinaryError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported binary version {0}")]
    BadVersion(u16),
    #[error("malformed binary")]
    Malformed,
    #[error("jump at offset {at} targets invalid offset {target}")]
    InvalidJumpTarget { at: usize, target: usize },
}

struct Emitter<'a> {
    slots: HashMap<&'a str, u8>,
    code: Vec<u8>,
}

impl<'a> Emitter<'a> {
    fn op(&mut self, op: Opcode) {
        self.code.push(op as u8);
    }

    fn op_u8(&mut self, op: Opcode, operand: u8) {
        self.code.extend_from_slice(&[op as u8, operand]);
    }

    /// Emits a jump with a placeholder target; returns the operand offset.
    fn jump(&mut self, op: Opcode) -> usize {
        self.op(op);
        let at = self.code.len();
        self.code.extend_from_slice(&[0, 0]);
        at
    }

    fn here(&self) -> Result<u16, CompileError> {
        u16::try_from(self.code.len()).map_err(|_| CompileError::CodeTooLarge)
    }

    fn patch(&mut self, at: usize, target: u16) {
        self.code[at..at + 2].copy_from_slice(&target.to_be_bytes());
    }

    fn slot(&self, name: &str) -> u8 {
        self.slots[name]
    }

    fn expr(&mut self, e: &Expr) {
        match e {
            Expr::Literal(v) => self.op_u8(Opcode::Push, *v),
            Expr::Var(name) => self.op_u8(Opcode::Load, self.slot(name)),
            Expr::Binary(op, l, r) => {
                self.expr(l);
                self.expr(r);
                match op {
                    BinOp::Add => self.op(Opcode::Add),
                    BinOp::Sub => self.op(Opcode::Sub),
                    BinOp::Mul => self.op(Opcode::Mul),
                    BinOp::Eq => self.op(Opcode::Eq),
                    BinOp::Ne => {
                        self.op(Opcode::Eq);
                        self.op(Opcode::Not);
                    }
                    BinOp::Lt => self.op(Opcode::Lt),
                    BinOp::Le => self.op(Opcode::Le),
                    BinOp::And => self.op(Opcode::And),
                    BinOp::Or => self.op(Opcode::Or),
                }
            }
            Expr::Not(inner) => {
                self.expr(inner);
                self.op(Opcode::Not);
            }
        }
    }

    fn block(&mut self, stmts: &[Stmt]) -> Result<(), CompileError> {
        stmts.iter().try_for_each(|s| self.stmt(s))
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), CompileError> {
        match s {
            Stmt::Assign(target, e) => {
                self.expr(e);
                self.op_u8(Opcode::Store, self.slot(target));
            }
            Stmt::Havoc(target) => self.op_u8(Opcode::Havoc, self.slot(target)),
            Stmt::Halt => self.op(Opcode::Halt),
            Stmt::If(cond, then_block, else_block) => {
                self.expr(cond);
                let to_else = self.jump(Opcode::Jz);
                self.block(then_block)?;
                // emitted even without an else block
                let to_end = self.jump(Opcode::Jmp);
                let else_at = self.here()?;
                self.patch(to_else, else_at);
                if let Some(else_block) = else_block {
                    self.block(else_block)?;
                }
                let end = self.here()?;
                self.patch(to_end, end);
            }
            Stmt::While(cond, body) => {
                let top = self.here()?;
                self.expr(cond);
                let to_end = self.jump(Opcode::Jz);
                self.block(body)?;
                let back = self.jump(Opcode::Jmp);
                self.patch(back, top);
                let end = self.here()?;
                self.patch(to_end, end);
            }
        }
        if self.code.len() > MAX_CODE_LEN {
            return Err(CompileError::CodeTooLarge);
        }
        Ok(())
    }
}

pub fn compile(program: &SourceProgram) -> Result<BinaryImage, CompileError> {
    let var_count = program.variable_count();
    if var_count > MAX_VARIABLES {
        return Err(CompileError::TooManyVariables);
    }
    let slots = program
        .inputs
        .iter()
        .chain(&program.outputs)
        .chain(&program.internals)
        .enumerate()
        .map(|(i, name)| (name.as_str(), i as u8))
        .collect();
    let mut em = Emitter {
        slots,
        code: Vec::new(),
    };
    for i in 0..program.inputs.len() {
        em.op_u8(Opcode::Havoc, i as u8);
    }
    let init_end = em.here()?;
    em.block(&program.body)?;
    em.op(Opcode::Halt);
    if em.code.len() > MAX_CODE_LEN {
        return Err(CompileError::CodeTooLarge);
    }

    Ok(BinaryImage {
        version: BINARY_VERSION,
        inputs: program.inputs.clone(),
        outputs: program.outputs.clone(),
        var_count: var_count as u8,
        init_end,
        code: em.code,
    })
}

pub fn encode_binary(image: &BinaryImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + image.code.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&image.version.to_be_bytes());
    out.push(image.inputs.len() as u8);
    out.push(image.outputs.len() as u8);
    for name in image.inputs.iter().chain(&image.outputs) {
        out.push(name.len() as u8);
        out.extend_from_slice(name.as_bytes());
    }
    out.push(image.var_count);
    out.extend_from_slice(&image.init_end.to_be_bytes());
    out.extend_from_slice(&(image.code.len() as u32).to_be_bytes());
    out.extend_from_slice(&image.code);
    out
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BinaryError> {
        let end = self.pos.checked_add(n).ok_or(BinaryError::Malformed)?;
        let bytes = self.data.get(self.pos..end).ok_or(BinaryError::Malformed)?;
        self.pos = end;
        Ok(bytes)
    }

    fn u8(&mut self) -> Result<u8, BinaryError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, BinaryError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, BinaryError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn name(&mut self) -> Result<String, BinaryError> {
        let len = self.u8()? as usize;
        let bytes = self.take(len)?;
        let name = std::str::from_utf8(bytes).map_err(|_| BinaryError::Malformed)?;
        if !is_identifier(name) {
            return Err(BinaryError::Malformed);
        }
        Ok(name.to_owned())
    }
}

/// Decodes one instruction at `pc`: opcode and raw operand value.
pub fn decode_instruction(code: &[u8], pc: usize) -> Option<(Opcode, u16)> {
    let op = Opcode::from_byte(*code.get(pc)?)?;
    let operand = match op.operand_len() {
        0 => 0,
        1 => *code.get(pc + 1)? as u16,
        _ => u16::from_be_bytes([*code.get(pc + 1)?, *code.get(pc + 2)?]),
    };
    Some((op, operand))
}

/// Checks code structure: every instruction decodes, slot operands are in
/// range, every jump lands on an instruction start, and the last
/// instruction is HALT.
pub fn validate_code(code: &[u8], var_count: u8) -> Result<(), BinaryError> {
    let mut starts = vec![false; code.len()];
    let mut jumps = Vec::new();
    let mut last = None;
    let mut pc = 0;
    while pc < code.len() {
        let (op, operand) = decode_instruction(code, pc).ok_or(BinaryError::Malformed)?;
        starts[pc] = true;
        match op {
            Opcode::Load | Opcode::Store | Opcode::Havoc if operand >= var_count as u16 => {
                return Err(BinaryError::Malformed)
            }
            Opcode::Jmp | Opcode::Jz => jumps.push((pc, operand as usize)),
            _ => {}
        }
        last = Some(op);
        pc += 1 + op.operand_len();
    }
    if last != Some(Opcode::Halt) {
        return Err(BinaryError::Malformed);
    }
    for (at, target) in jumps {
        if !starts.get(target).copied().unwrap_or(false) {
            return Err(BinaryError::InvalidJumpTarget { at, target });
        }
    }
    Ok(())
}

pub fn decode_binary(data: &[u8]) -> Result<BinaryImage, BinaryError> {
    let mut r = Reader { data, pos: 0 };
    if r.take(4).map_err(|_| BinaryError::BadMagic)? != MAGIC {
        return Err(BinaryError::BadMagic);
    }
    let version = r.u16()?;
    if version != BINARY_VERSION {
        return Err(BinaryError::BadVersion(version));
    }
    let n_in = r.u8()? as usize;
    let n_out = r.u8()? as usize;
    let mut names = Vec::with_capacity(n_in + n_out);
    for _ in 0..n_in + n_out {
        let name = r.name()?;
        if names.contains(&name) {
            return Err(BinaryError::Malformed);
        }
        names.push(name);
    }
    let outputs = names.split_off(n_in);
    let inputs = names;
    let var_count = r.u8()?;
    let init_end = r.u16()?;
    let code_len = r.u32()? as usize;
    let code = r.take(code_len)?.to_vec();
    if r.pos != data.len() || code_len > MAX_CODE_LEN {
        return Err(BinaryError::Malformed);
    }
    if (var_count as usize) < n_in + n_out || init_end as usize != 2 * n_in {
        return Err(BinaryError::Malformed);
    }
    validate_code(&code, var_count)?;
    let preamble_ok = (0..n_in).all(|i| code[2 * i] == Opcode::Havoc as u8 && code[2 * i + 1] as usize == i);
    if !preamble_ok {
        return Err(BinaryError::Malformed);
    }

    Ok(BinaryImage {
        version,
        inputs,
        outputs,
        var_count,
        init_end,
        code,
    })
}

pub fn binary_hash(data: &[u8]) -> Digest {
    codec::digest(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minisrc::parse_program;

    fn build(src: &str) -> BinaryImage {
        compile(&parse_program(src).unwrap()).unwrap()
    }

    #[test]
    fn identity_program_hand_assembled() {
        let img = build("input x; output y; y = x;");
        assert_eq!(img.code, [0x50, 0x00, 0x02, 0x00, 0x03, 0x01, 0x60]);
        assert_eq!(img.init_end, 2);
        assert_eq!(img.var_count, 2);
        let bytes = encode_binary(&img);
        assert_eq!(&bytes[..4], b"AMNT");
        let expected: Vec<u8> = [
            &b"AMNT"[..],
            &[0, 1, 1, 1, 1, b'x', 1, b'y', 2, 0, 2, 0, 0, 0, 7],
            &[0x50, 0x00, 0x02, 0x00, 0x03, 0x01, 0x60],
        ]
        .concat();
        assert_eq!(bytes, expected);
    }

    #[test]
    fn control_flow_schemes_hand_assembled() {
        // if (1) { y = 2; }  ->  PUSH 1; JZ 12; PUSH 2; STORE 0; JMP 12; HALT
        let img = build("output y; if (1) { y = 2; }");
        assert_eq!(
            img.code,
            [0x01, 1, 0x41, 0, 12, 0x01, 2, 0x03, 0, 0x40, 0, 12, 0x60]
        );
        // while (y) { y = 0; } -> 0: LOAD 0; 2: JZ 12; 5: PUSH 0; 7: STORE 0; 9: JMP 0; 12: HALT
        let img = build("output y; while (y) { y = 0; }");
        assert_eq!(
            img.code,
            [0x02, 0, 0x41, 0, 12, 0x01, 0, 0x03, 0, 0x40, 0, 0, 0x60]
        );
        // if/else: PUSH 0; JZ 12; PUSH 1; STORE 0; JMP 16; 12: PUSH 2; STORE 0; 16: HALT
        let img = build("output y; if (0) { y = 1; } else { y = 2; }");
        assert_eq!(
            img.code,
            [0x01, 0, 0x41, 0, 12, 0x01, 1, 0x03, 0, 0x40, 0, 16, 0x01, 2, 0x03, 0, 0x60]
        );
    }

    #[test]
    fn expression_emission_is_post_order() {
        let img = build("input a; output b; b = !(a != 3) || a * 2 - 1 <= 5 && 1;");
        assert_eq!(
            &img.code[2..],
            [
                0x02, 0, 0x01, 3, 0x20, 0x30, 0x30, // !(a != 3)
                0x02, 0, 0x01, 2, 0x12, 0x01, 1, 0x11, 0x01, 5, 0x22, // a*2-1 <= 5
                0x01, 1, 0x31, 0x32, // && 1, ||
                0x03, 1, 0x60
            ]
        );
    }

    #[test]
    fn slots_follow_declaration_classes() {
        let img = build("var t; output y; input x; havoc t; y = x; t = y;");
        assert_eq!(img.inputs, vec!["x".to_string()]);
        assert_eq!(img.outputs, vec!["y".to_string()]);
        // x=0, y=1, t=2
        assert_eq!(img.code, [0x50, 0, 0x50, 2, 0x02, 0, 0x03, 1, 0x02, 1, 0x03, 2, 0x60]);
    }

    #[test]
    fn stripping() {
        let a = build("input x; output y; var tmp; tmp = x + 1; y = tmp;");
        let b = build("// secret\ninput x; output y; var scratch_value; // hidden\nscratch_value = x + 1;\ny = scratch_value;");
        assert_eq!(encode_binary(&a), encode_binary(&b));
        let c = build("input x; output z; var tmp; tmp = x + 1; z = tmp;");
        assert_ne!(encode_binary(&a), encode_binary(&c));
    }

    #[test]
    fn variable_bound() {
        let decls: String = (0..256).map(|i| format!("var v{i};")).collect();
        let program = parse_program(&decls).unwrap();
        assert_eq!(compile(&program), Err(CompileError::TooManyVariables));
        let decls: String = (0..255).map(|i| format!("var v{i};")).collect();
        assert_eq!(compile(&parse_program(&decls).unwrap()).unwrap().var_count, 255);
    }

    #[test]
    fn code_size_bound() {
        let body = "y = y + 1;".repeat(10000);
        let program = parse_program(&format!("output y; {body}")).unwrap();
        assert_eq!(compile(&program), Err(CompileError::CodeTooLarge));
    }

    #[test]
    fn empty_image() {
        let img = build("");
        assert_eq!(img.init_end, 0);
        assert_eq!(img.code, [0x60]);
        assert_eq!(decode_binary(&encode_binary(&img)).unwrap(), img);
    }

    #[test]
    fn decode_round_trip_and_rejections() {
        let img = build("input x; output y; var t; while (t < 3) { t = t + 1; y = y + x; }");
        let bytes = encode_binary(&img);
        assert_eq!(decode_binary(&bytes).unwrap(), img);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(decode_binary(&bad), Err(BinaryError::BadMagic));
        assert_eq!(decode_binary(b"AM"), Err(BinaryError::BadMagic));

        let mut bad = bytes.clone();
        bad[5] = 2;
        assert_eq!(decode_binary(&bad), Err(BinaryError::BadVersion(2)));

        let mut bad = bytes.clone();
        bad.push(0);
        assert_eq!(decode_binary(&bad), Err(BinaryError::Malformed));

        assert_eq!(decode_binary(&bytes[..bytes.len() - 1]), Err(BinaryError::Malformed));
    }

    #[test]
    fn jump_into_mid_instruction_is_rejected() {
        let img = build("output y; while (y) { y = 0; }");
        let mut bytes = encode_binary(&img);
        let code_start = bytes.len() - img.code.len();
        // JMP at code offset 9 targets 0; retarget to 1 (the LOAD operand)
        assert_eq!(bytes[code_start + 9], Opcode::Jmp as u8);
        bytes[code_start + 11] = 1;
        assert_eq!(
            decode_binary(&bytes),
            Err(BinaryError::InvalidJumpTarget { at: 9, target: 1 })
        );
        bytes[code_start + 11] = 200;
        assert_eq!(
            decode_binary(&bytes),
            Err(BinaryError::InvalidJumpTarget { at: 9, target: 200 })
        );
    }

    #[test]
    fn decode_rejects_bad_code() {
        let base = BinaryImage {
            version: 1,
            inputs: vec![],
            outputs: vec!["y".into()],
            var_count: 1,
            init_end: 0,
            code: vec![0x60],
        };
        for code in [vec![], vec![0x01, 5], vec![0x70, 0x60], vec![0x03, 1, 0x60], vec![0x40, 0]] {
            let img = BinaryImage { code, ..base.clone() };
            assert_eq!(decode_binary(&encode_binary(&img)), Err(BinaryError::Malformed));
        }
        let img = BinaryImage { var_count: 0, ..base.clone() };
        assert_eq!(decode_binary(&encode_binary(&img)), Err(BinaryError::Malformed));
        let img = BinaryImage { outputs: vec!["if".into()], ..base };
        assert_eq!(decode_binary(&encode_binary(&img)), Err(BinaryError::Malformed));
    }

    #[test]
    fn binary_hash_is_digest() {
        let bytes = encode_binary(&build("input x; output y; y = x;"));
        assert_eq!(binary_hash(&bytes), codec::digest(&bytes));
        let mut flipped = bytes.clone();
        flipped[10] ^= 1;
        assert_ne!(binary_hash(&bytes), binary_hash(&flipped));
    }
}
