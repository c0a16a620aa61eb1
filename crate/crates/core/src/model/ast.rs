//! While-language frontend: a line-oriented concrete syntax for programs
//! over named operator bindings.
//!
//! ```text
//! q1 := |0>
//! q1,q2 := U[NAME]
//! choice { ... | ... }
//! if M[NAME] { ... }
//! while M[NAME] { ... }
//! skip
//! ```
//!
//! Operator names resolve against a bindings table carrying the variable
//! register layout, unitary matrices and two-outcome projective
//! measurements on the full variable space.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::Measurement;
use crate::numerics::{max_abs, CMat, Tolerances};

/// Operator bindings for a program: ordered variables with local dimensions,
/// unitary matrices (indexed by the register they are applied to), and
/// measurements on the full variable space.
#[derive(Debug, Clone)]
pub struct Bindings {
    pub variables: Vec<(String, usize)>,
    pub unitaries: HashMap<String, CMat>,
    pub measurements: HashMap<String, (CMat, CMat)>,
}

impl Bindings {
    pub fn total_dim(&self) -> usize {
        self.variables.iter().map(|(_, d)| d).product()
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|(n, _)| n == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    /// `q := |0>`
    Init { var: String },
    /// `q1,q2 := U[NAME]`
    Unitary { vars: Vec<String>, name: String },
    /// `choice { seq | seq | ... }`
    Choice { branches: Vec<Vec<Stmt>> },
    /// `if M[NAME] { seq }`
    If { meas: String, body: Vec<Stmt> },
    /// `while M[NAME] { seq }`
    While { meas: String, body: Vec<Stmt> },
    /// `skip`
    Skip,
}

/// A parsed program together with its bindings.
#[derive(Debug, Clone)]
pub struct ProgramAst {
    pub stmts: Vec<Stmt>,
    pub bindings: Bindings,
}

impl ProgramAst {
    /// Number of program locations: one per statement plus the end location.
    pub fn location_count(&self) -> usize {
        fn count(stmts: &[Stmt]) -> usize {
            stmts
                .iter()
                .map(|s| match s {
                    Stmt::Choice { branches } => {
                        1 + branches.iter().map(|b| count(b)).sum::<usize>()
                    }
                    Stmt::If { body, .. } | Stmt::While { body, .. } => 1 + count(body),
                    _ => 1,
                })
                .sum()
        }
        count(&self.stmts) + 1
    }

    /// Largest branching factor over all nondeterministic choices.
    pub fn max_branching(&self) -> usize {
        fn walk(stmts: &[Stmt]) -> usize {
            stmts
                .iter()
                .map(|s| match s {
                    Stmt::Choice { branches } => branches
                        .len()
                        .max(branches.iter().map(|b| walk(b)).max().unwrap_or(0)),
                    Stmt::If { body, .. } | Stmt::While { body, .. } => walk(body),
                    _ => 0,
                })
                .max()
                .unwrap_or(0)
        }
        walk(&self.stmts).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Assign,
    KetZero,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Pipe,
    Comma,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn syntax_error(line: usize, col: usize, msg: impl std::fmt::Display) -> Error {
    Error::validation(format!("syntax error at {line}:{col}: {msg}"))
}

fn tokenize(src: &str) -> Result<Vec<Spanned>> {
    let mut out = Vec::new();
    for (li, line) in src.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            let ln = li + 1;
            match c {
                ' ' | '\t' | '\r' => i += 1,
                '#' => break,
                ':' => {
                    if chars.get(i + 1) == Some(&'=') {
                        out.push(Spanned { tok: Tok::Assign, line: ln, col });
                        i += 2;
                    } else {
                        return Err(syntax_error(ln, col, "expected ':='"));
                    }
                }
                '|' => {
                    if chars.get(i + 1) == Some(&'0') && chars.get(i + 2) == Some(&'>') {
                        out.push(Spanned { tok: Tok::KetZero, line: ln, col });
                        i += 3;
                    } else {
                        out.push(Spanned { tok: Tok::Pipe, line: ln, col });
                        i += 1;
                    }
                }
                '[' => {
                    out.push(Spanned { tok: Tok::LBracket, line: ln, col });
                    i += 1;
                }
                ']' => {
                    out.push(Spanned { tok: Tok::RBracket, line: ln, col });
                    i += 1;
                }
                '{' => {
                    out.push(Spanned { tok: Tok::LBrace, line: ln, col });
                    i += 1;
                }
                '}' => {
                    out.push(Spanned { tok: Tok::RBrace, line: ln, col });
                    i += 1;
                }
                ',' => {
                    out.push(Spanned { tok: Tok::Comma, line: ln, col });
                    i += 1;
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let start = i;
                    while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                        i += 1;
                    }
                    let word: String = chars[start..i].iter().collect();
                    out.push(Spanned { tok: Tok::Ident(word), line: ln, col });
                }
                other => return Err(syntax_error(ln, col, format!("unexpected character {other:?}"))),
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Spanned>,
    pos: usize,
    bindings: &'a Bindings,
    tol: &'a Tolerances,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Spanned> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn last_pos(&self) -> (usize, usize) {
        self.toks
            .last()
            .map(|t| (t.line, t.col))
            .unwrap_or((1, 1))
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Spanned> {
        match self.next() {
            Some(t) if t.tok == want => Ok(t),
            Some(t) => Err(syntax_error(t.line, t.col, format!("expected {what}"))),
            None => {
                let (l, c) = self.last_pos();
                Err(syntax_error(l, c, format!("expected {what}, found end of input")))
            }
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, usize, usize)> {
        match self.next() {
            Some(Spanned { tok: Tok::Ident(s), line, col }) => Ok((s, line, col)),
            Some(t) => Err(syntax_error(t.line, t.col, format!("expected {what}"))),
            None => {
                let (l, c) = self.last_pos();
                Err(syntax_error(l, c, format!("expected {what}, found end of input")))
            }
        }
    }

    fn parse_seq(&mut self, stop_at: &[Tok]) -> Result<Vec<Stmt>> {
        let mut stmts = Vec::new();
        while let Some(t) = self.peek() {
            if stop_at.contains(&t.tok) {
                break;
            }
            stmts.push(self.parse_stmt()?);
        }
        Ok(stmts)
    }

    fn parse_stmt(&mut self) -> Result<Stmt> {
        let (word, line, col) = self.expect_ident("a statement")?;
        match word.as_str() {
            "choice" => {
                self.expect(Tok::LBrace, "'{' after choice")?;
                let mut branches = Vec::new();
                loop {
                    let branch = self.parse_seq(&[Tok::Pipe, Tok::RBrace])?;
                    branches.push(branch);
                    match self.next() {
                        Some(Spanned { tok: Tok::Pipe, .. }) => continue,
                        Some(Spanned { tok: Tok::RBrace, .. }) => break,
                        Some(t) => {
                            return Err(syntax_error(t.line, t.col, "expected '|' or '}' in choice"))
                        }
                        None => {
                            let (l, c) = self.last_pos();
                            return Err(syntax_error(l, c, "unterminated choice block"));
                        }
                    }
                }
                if branches.len() < 2 {
                    return Err(syntax_error(line, col, "choice needs at least two branches"));
                }
                Ok(Stmt::Choice { branches })
            }
            "if" | "while" => {
                let (m, ml, mc) = self.expect_ident("'M' before measurement name")?;
                if m != "M" {
                    return Err(syntax_error(ml, mc, "expected 'M[NAME]' guard"));
                }
                self.expect(Tok::LBracket, "'[' after M")?;
                let (name, nl, nc) = self.expect_ident("measurement name")?;
                self.expect(Tok::RBracket, "']' after measurement name")?;
                if !self.bindings.measurements.contains_key(&name) {
                    return Err(syntax_error(nl, nc, format!("unbound measurement name {name:?}")));
                }
                self.expect(Tok::LBrace, "'{' opening the body")?;
                let body = self.parse_seq(&[Tok::RBrace])?;
                self.expect(Tok::RBrace, "'}' closing the body")?;
                if word == "if" {
                    Ok(Stmt::If { meas: name, body })
                } else {
                    Ok(Stmt::While { meas: name, body })
                }
            }
            "skip" => Ok(Stmt::Skip),
            _ => {
                // `word` opens a register: "q := |0>" or "q1,q2 := U[NAME]".
                if self.bindings.var_index(&word).is_none() {
                    return Err(syntax_error(line, col, format!("unknown variable {word:?}")));
                }
                let mut vars = vec![word];
                while self.peek().map(|t| &t.tok) == Some(&Tok::Comma) {
                    self.next();
                    let (v, vl, vc) = self.expect_ident("variable name")?;
                    if self.bindings.var_index(&v).is_none() {
                        return Err(syntax_error(vl, vc, format!("unknown variable {v:?}")));
                    }
                    vars.push(v);
                }
                self.expect(Tok::Assign, "':='")?;
                match self.next() {
                    Some(Spanned { tok: Tok::KetZero, line: kl, col: kc }) => {
                        if vars.len() != 1 {
                            return Err(syntax_error(kl, kc, "initialization takes a single variable"));
                        }
                        Ok(Stmt::Init { var: vars.pop().unwrap() })
                    }
                    Some(Spanned { tok: Tok::Ident(u), line: ul, col: uc }) if u == "U" => {
                        self.expect(Tok::LBracket, "'[' after U")?;
                        let (name, nl, nc) = self.expect_ident("unitary name")?;
                        self.expect(Tok::RBracket, "']' after unitary name")?;
                        let mat = self.bindings.unitaries.get(&name).ok_or_else(|| {
                            syntax_error(nl, nc, format!("unbound operator name {name:?}"))
                        })?;
                        let want: usize = vars
                            .iter()
                            .map(|v| {
                                let i = self.bindings.var_index(v).unwrap();
                                self.bindings.variables[i].1
                            })
                            .product();
                        if mat.nrows() != want || mat.ncols() != want {
                            return Err(syntax_error(
                                ul,
                                uc,
                                format!(
                                    "operator {name:?} is {}x{}, register needs {want}x{want}",
                                    mat.nrows(),
                                    mat.ncols()
                                ),
                            ));
                        }
                        let dev = max_abs(&(mat.adjoint() * mat - CMat::identity(want, want)));
                        if dev > self.tol.trace_tol {
                            return Err(syntax_error(
                                nl,
                                nc,
                                format!("operator {name:?} is not unitary (‖U†U − I‖ = {dev:.3e})"),
                            ));
                        }
                        Ok(Stmt::Unitary { vars, name })
                    }
                    Some(t) => Err(syntax_error(t.line, t.col, "expected '|0>' or 'U[NAME]'")),
                    None => {
                        let (l, c) = self.last_pos();
                        Err(syntax_error(l, c, "expected '|0>' or 'U[NAME]', found end of input"))
                    }
                }
            }
        }
    }
}

/// Parses a program source against its bindings. Validation covers unknown
/// names, register/operator shape agreement, unitarity of unitary slots and
/// the projective-measurement algebra of guard slots.
pub fn parse_program(source: &str, bindings: &Bindings, tol: &Tolerances) -> Result<ProgramAst> {
    if bindings.variables.is_empty() {
        return Err(Error::validation("bindings declare no variables"));
    }
    for (name, d) in &bindings.variables {
        if *d < 2 {
            return Err(Error::validation(format!(
                "variable {name:?} needs local dimension ≥ 2, got {d}"
            )));
        }
    }
    let full = bindings.total_dim();
    for (name, (mt, mf)) in &bindings.measurements {
        Measurement::new(mt.clone(), mf.clone(), tol)
            .map_err(|e| Error::validation(format!("measurement {name:?}: {e}")))?;
        if mt.nrows() != full {
            return Err(Error::validation(format!(
                "measurement {name:?} is {}x{}, full space needs {full}x{full}",
                mt.nrows(),
                mt.ncols()
            )));
        }
    }
    let toks = tokenize(source)?;
    let mut p = Parser {
        toks,
        pos: 0,
        bindings,
        tol,
    };
    let stmts = p.parse_seq(&[])?;
    if let Some(t) = p.peek() {
        return Err(syntax_error(t.line, t.col, "trailing tokens after program"));
    }
    Ok(ProgramAst {
        stmts,
        bindings: bindings.clone(),
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::fixtures::{hadamard, kron, pauli_x};
    use crate::numerics::{C64, ONE_C};

    pub(crate) fn qbf_bindings() -> Bindings {
        let mut unitaries = HashMap::new();
        unitaries.insert("X1".into(), pauli_x());
        unitaries.insert("X2".into(), pauli_x());
        unitaries.insert("HX".into(), kron(&hadamard(), &pauli_x()));
        unitaries.insert("XH".into(), kron(&pauli_x(), &hadamard()));
        let mut m_true = CMat::zeros(4, 4);
        m_true[(1, 1)] = ONE_C;
        let m_false = CMat::identity(4, 4) - &m_true;
        let mut measurements = HashMap::new();
        measurements.insert("GUARD".into(), (m_true, m_false));
        Bindings {
            variables: vec![("q1".into(), 2), ("q2".into(), 2)],
            unitaries,
            measurements,
        }
    }

    pub(crate) const QBF_SOURCE: &str = "\
q1 := |0>
q2 := |0>
q1 := U[X1]
q2 := U[X2]
while M[GUARD] {
  choice {
    q1,q2 := U[HX]
  |
    q1,q2 := U[XH]
  }
}
";

    #[test]
    fn parses_the_coin_protocol() {
        let ast = parse_program(QBF_SOURCE, &qbf_bindings(), &Tolerances::default()).unwrap();
        assert_eq!(ast.location_count(), 9);
        assert_eq!(ast.max_branching(), 2);
        assert_eq!(ast.stmts.len(), 5);
        match &ast.stmts[4] {
            Stmt::While { meas, body } => {
                assert_eq!(meas, "GUARD");
                assert_eq!(body.len(), 1);
                match &body[0] {
                    Stmt::Choice { branches } => assert_eq!(branches.len(), 2),
                    other => panic!("expected choice, got {other:?}"),
                }
            }
            other => panic!("expected while, got {other:?}"),
        }
    }

    #[test]
    fn empty_program_is_skip_with_one_location() {
        let ast = parse_program("", &qbf_bindings(), &Tolerances::default()).unwrap();
        assert!(ast.stmts.is_empty());
        assert_eq!(ast.location_count(), 1);
    }

    #[test]
    fn unbound_operator_is_rejected() {
        let err = parse_program("q1 := U[U3]\n", &qbf_bindings(), &Tolerances::default())
            .unwrap_err();
        assert!(err.to_string().contains("unbound operator name"));
        assert!(err.to_string().contains("1:9"));
    }

    #[test]
    fn non_unitary_binding_is_rejected() {
        let mut b = qbf_bindings();
        b.unitaries.insert(
            "BAD".into(),
            CMat::from_row_slice(
                2,
                2,
                &[ONE_C, ONE_C, C64::new(0.0, 0.0), ONE_C],
            ),
        );
        let err = parse_program("q1 := U[BAD]\n", &b, &Tolerances::default()).unwrap_err();
        assert!(err.to_string().contains("not unitary"));
    }

    #[test]
    fn syntax_error_carries_position() {
        let err =
            parse_program("q1 := |0>\nq2 :* |0>\n", &qbf_bindings(), &Tolerances::default())
                .unwrap_err();
        assert!(err.to_string().contains("2:4"), "{err}");
    }
}
