//! Parsers for `objdump -h` and `objdump -d` text (x86-64).
//!
//! Comparison classification and the extern-call marker are kept in the
//! tables below.

use std::collections::BTreeMap;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::data::PropertyKey;
use crate::error::{Error, Result};

/// Conditional instructions testing (in)equality.
pub const EQUALITY_MNEMONICS: &[&str] = &[
    "je", "jne", "jz", "jnz", "sete", "setne", "setz", "setnz", "cmove", "cmovne", "cmovz",
    "cmovnz",
];

/// Conditional instructions testing order or sign.
pub const INEQUALITY_MNEMONICS: &[&str] = &[
    "jl", "jle", "jg", "jge", "ja", "jae", "jb", "jbe", "js", "jns", "setl", "setle", "setg",
    "setge", "seta", "setae", "setb", "setbe", "sets", "setns", "cmovl", "cmovle", "cmovg",
    "cmovge", "cmova", "cmovae", "cmovb", "cmovbe", "cmovs", "cmovns",
];

pub const CALL_MNEMONICS: &[&str] = &["call", "callq"];

/// A call whose operand contains this marker goes through the PLT.
pub const EXTERN_MARKER: &str = "@plt";

const PREFIXES: &[&str] = &[
    "bnd", "notrack", "lock", "rep", "repz", "repe", "repnz", "repne", "data16", "addr32", "cs",
    "ds", "es", "ss", "fs", "gs",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DisasmSummary {
    pub text_bytes: Option<u64>,
    pub cond_branches_eq: u64,
    pub cond_branches_ineq: u64,
    pub calls_total: u64,
    pub calls_extern: u64,
}

impl Add for DisasmSummary {
    type Output = DisasmSummary;

    fn add(self, o: DisasmSummary) -> DisasmSummary {
        DisasmSummary {
            text_bytes: match (self.text_bytes, o.text_bytes) {
                (Some(a), Some(b)) => Some(a + b),
                (a, b) => a.or(b),
            },
            cond_branches_eq: self.cond_branches_eq + o.cond_branches_eq,
            cond_branches_ineq: self.cond_branches_ineq + o.cond_branches_ineq,
            calls_total: self.calls_total + o.calls_total,
            calls_extern: self.calls_extern + o.calls_extern,
        }
    }
}

/// Size in bytes of the `.text` section in `objdump -h` output.
pub fn parse_section_headers(text: &str) -> Result<u64> {
    for (i, line) in text.lines().enumerate() {
        let mut tok = line.split_whitespace();
        let (Some(idx), Some(name)) = (tok.next(), tok.next()) else {
            continue;
        };
        if name != ".text" || idx.parse::<u32>().is_err() {
            continue;
        }
        let size = tok.next().ok_or_else(|| Error::Parse {
            line: i as u64 + 1,
            message: "`.text` header has no size field".into(),
        })?;
        return u64::from_str_radix(size, 16).map_err(|e| Error::Parse {
            line: i as u64 + 1,
            message: format!("invalid `.text` size `{size}`: {e}"),
        });
    }
    Err(Error::invalid("no `.text` section in section headers"))
}

fn instruction(line: &str) -> Option<&str> {
    let mut parts = line.splitn(3, '\t');
    let addr = parts.next()?.trim();
    let hex = addr.strip_suffix(':')?;
    if hex.is_empty() || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
        return None;
    }
    parts.next()?;
    Some(parts.next()?.trim())
}

fn split_mnemonic(ins: &str) -> Option<(&str, &str)> {
    let mut rest = ins;
    loop {
        let (word, tail) = match rest.split_once(char::is_whitespace) {
            Some((w, t)) => (w, t.trim_start()),
            None => (rest, ""),
        };
        if word.is_empty() {
            return None;
        }
        if PREFIXES.contains(&word) && !tail.is_empty() {
            rest = tail;
        } else {
            return Some((word, tail));
        }
    }
}

/// Count conditional comparisons and calls in `objdump -d` output. Lines
/// that are not instructions and unknown mnemonics are ignored.
pub fn parse_disassembly(text: &str) -> DisasmSummary {
    let mut s = DisasmSummary::default();
    for line in text.lines() {
        let Some((mnemonic, operands)) = instruction(line).and_then(split_mnemonic) else {
            continue;
        };
        if EQUALITY_MNEMONICS.contains(&mnemonic) {
            s.cond_branches_eq += 1;
        } else if INEQUALITY_MNEMONICS.contains(&mnemonic) {
            s.cond_branches_ineq += 1;
        } else if CALL_MNEMONICS.contains(&mnemonic) {
            s.calls_total += 1;
            if operands.contains(EXTERN_MARKER) {
                s.calls_extern += 1;
            }
        }
    }
    s
}

/// Program size and instruction-mix proportions. Proportions with a zero
/// denominator are omitted.
pub fn program_properties(s: &DisasmSummary) -> BTreeMap<PropertyKey, f64> {
    let mut out = BTreeMap::new();
    if let Some(b) = s.text_bytes {
        out.insert(PropertyKey::ProgramTextBytes, b as f64);
    }
    let cmp = s.cond_branches_eq + s.cond_branches_ineq;
    if cmp > 0 {
        out.insert(PropertyKey::EqProportion, s.cond_branches_eq as f64 / cmp as f64);
        out.insert(PropertyKey::IneqProportion, s.cond_branches_ineq as f64 / cmp as f64);
    }
    if s.calls_total > 0 {
        out.insert(
            PropertyKey::ExternCallProportion,
            s.calls_extern as f64 / s.calls_total as f64,
        );
    }
    out
}
