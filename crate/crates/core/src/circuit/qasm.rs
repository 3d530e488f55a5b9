//! OpenQASM 2.0 subset parser and canonical emitter.
//!
//! Grammar of the subset:
//!
//! ```text
//! program   := "OPENQASM" "2.0" ";" include? decl* stmt*
//! include   := "include" "\"qelib1.inc\"" ";"
//! decl      := ("qreg" | "creg") ident "[" int "]" ";"
//! stmt      := gate | measure | barrier
//! gate      := ("h"|"x"|"s"|"sdg") qubit ";"
//!            | ("cx"|"swap") qubit "," qubit ";"
//!            | "u3" "(" expr "," expr "," expr ")" qubit ";"
//! measure   := "measure" qubit "->" cbit ";"
//! barrier   := "barrier" (qubit ("," qubit)* | ident)? ";"
//! qubit     := ident "[" int "]"
//! expr      := additive over {pi, numeric literals, + - * /, parentheses,
//!              unary minus}
//! ```
//!
//! One quantum and at most one classical register are supported; `//` line
//! comments are skipped. Every parse error carries a line and column. The
//! emitter produces a canonical layout (fixed header, registers, one
//! instruction per line) with U3 angles printed at 17 significant digits, so
//! `parse(emit(c))` reproduces the circuit structure exactly.

use std::fmt;

use super::{Circuit, CircuitError, Gate, GateKind};
use crate::format_sig17;

/// Parse failure with source position (1-based line and column).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QasmError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for QasmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for QasmError {}

type Result<T> = std::result::Result<T, QasmError>;

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Ident(String),
    Number(f64),
    Str(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semicolon,
    Arrow,
    Plus,
    Minus,
    Star,
    Slash,
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    kind: TokenKind,
    line: usize,
    col: usize,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer { chars: text.chars().peekable(), line: 1, col: 1 }
    }

    fn bump(&mut self) -> Option<char> {
        let ch = self.chars.next()?;
        if ch == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(ch)
    }

    fn error(&self, message: impl Into<String>) -> QasmError {
        QasmError { line: self.line, col: self.col, message: message.into() }
    }

    fn tokenize(mut self) -> Result<Vec<Token>> {
        let mut tokens = Vec::new();
        loop {
            while matches!(self.chars.peek(), Some(ch) if ch.is_whitespace()) {
                self.bump();
            }
            // Line comments.
            if self.chars.peek() == Some(&'/') {
                let mut lookahead = self.chars.clone();
                lookahead.next();
                if lookahead.peek() == Some(&'/') {
                    while let Some(&ch) = self.chars.peek() {
                        if ch == '\n' {
                            break;
                        }
                        self.bump();
                    }
                    continue;
                }
            }
            let (line, col) = (self.line, self.col);
            let Some(&ch) = self.chars.peek() else { break };
            let kind = match ch {
                '(' => {
                    self.bump();
                    TokenKind::LParen
                }
                ')' => {
                    self.bump();
                    TokenKind::RParen
                }
                '[' => {
                    self.bump();
                    TokenKind::LBracket
                }
                ']' => {
                    self.bump();
                    TokenKind::RBracket
                }
                ',' => {
                    self.bump();
                    TokenKind::Comma
                }
                ';' => {
                    self.bump();
                    TokenKind::Semicolon
                }
                '+' => {
                    self.bump();
                    TokenKind::Plus
                }
                '*' => {
                    self.bump();
                    TokenKind::Star
                }
                '/' => {
                    self.bump();
                    TokenKind::Slash
                }
                '-' => {
                    self.bump();
                    if self.chars.peek() == Some(&'>') {
                        self.bump();
                        TokenKind::Arrow
                    } else {
                        TokenKind::Minus
                    }
                }
                '"' => {
                    self.bump();
                    let mut s = String::new();
                    loop {
                        match self.bump() {
                            Some('"') => break,
                            Some(ch) => s.push(ch),
                            None => return Err(self.error("unterminated string literal")),
                        }
                    }
                    TokenKind::Str(s)
                }
                ch if ch.is_ascii_digit() || ch == '.' => {
                    let mut s = String::new();
                    while matches!(self.chars.peek(), Some(c) if c.is_ascii_digit() || *c == '.') {
                        s.push(self.bump().unwrap());
                    }
                    if matches!(self.chars.peek(), Some('e') | Some('E')) {
                        s.push(self.bump().unwrap());
                        if matches!(self.chars.peek(), Some('+') | Some('-')) {
                            s.push(self.bump().unwrap());
                        }
                        if !matches!(self.chars.peek(), Some(c) if c.is_ascii_digit()) {
                            return Err(self.error("malformed exponent in numeric literal"));
                        }
                        while matches!(self.chars.peek(), Some(c) if c.is_ascii_digit()) {
                            s.push(self.bump().unwrap());
                        }
                    }
                    let value: f64 = s
                        .parse()
                        .map_err(|_| QasmError {
                            line,
                            col,
                            message: format!("malformed numeric literal `{s}`"),
                        })?;
                    TokenKind::Number(value)
                }
                ch if ch.is_ascii_alphabetic() || ch == '_' => {
                    let mut s = String::new();
                    while matches!(self.chars.peek(), Some(c) if c.is_ascii_alphanumeric() || *c == '_' || *c == '.')
                    {
                        // `.` appears only in the OPENQASM version number.
                        s.push(self.bump().unwrap());
                    }
                    TokenKind::Ident(s)
                }
                other => return Err(self.error(format!("unexpected character `{other}`"))),
            };
            tokens.push(Token { kind, line, col });
        }
        Ok(tokens)
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    qreg: Option<(String, usize)>,
    creg: Option<(String, usize)>,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eof_error(&self, expected: &str) -> QasmError {
        let (line, col) = self
            .tokens
            .last()
            .map(|t| (t.line, t.col + 1))
            .unwrap_or((1, 1));
        QasmError { line, col, message: format!("unexpected end of input, expected {expected}") }
    }

    fn error_at(&self, token: &Token, message: impl Into<String>) -> QasmError {
        QasmError { line: token.line, col: token.col, message: message.into() }
    }

    fn expect(&mut self, kind: &TokenKind, what: &str) -> Result<Token> {
        match self.next() {
            Some(t) if t.kind == *kind => Ok(t),
            Some(t) => Err(self.error_at(&t, format!("expected {what}"))),
            None => Err(self.eof_error(what)),
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, Token)> {
        match self.next() {
            Some(t) => match &t.kind {
                TokenKind::Ident(s) => Ok((s.clone(), t.clone())),
                _ => Err(self.error_at(&t, format!("expected {what}"))),
            },
            None => Err(self.eof_error(what)),
        }
    }

    fn expect_index(&mut self) -> Result<(usize, Token)> {
        self.expect(&TokenKind::LBracket, "`[`")?;
        let t = self.next().ok_or_else(|| self.eof_error("an index"))?;
        let value = match t.kind {
            TokenKind::Number(v) if v >= 0.0 && v.fract() == 0.0 => v as usize,
            _ => return Err(self.error_at(&t, "expected a non-negative integer index")),
        };
        self.expect(&TokenKind::RBracket, "`]`")?;
        Ok((value, t))
    }

    fn parse_qubit(&mut self) -> Result<(usize, Token)> {
        let (name, tok) = self.expect_ident("a quantum register reference")?;
        let Some((qname, qsize)) = self.qreg.clone() else {
            return Err(self.error_at(&tok, "no quantum register declared"));
        };
        if name != qname {
            return Err(self.error_at(&tok, format!("unknown register `{name}`")));
        }
        let (idx, itok) = self.expect_index()?;
        if idx >= qsize {
            return Err(self.error_at(
                &itok,
                format!("qubit index {idx} out of range (register size {qsize})"),
            ));
        }
        Ok((idx, tok))
    }

    fn parse_cbit(&mut self) -> Result<usize> {
        let (name, tok) = self.expect_ident("a classical register reference")?;
        let Some((cname, csize)) = self.creg.clone() else {
            return Err(self.error_at(&tok, "no classical register declared"));
        };
        if name != cname {
            return Err(self.error_at(&tok, format!("unknown register `{name}`")));
        }
        let (idx, itok) = self.expect_index()?;
        if idx >= csize {
            return Err(self.error_at(
                &itok,
                format!("classical index {idx} out of range (register size {csize})"),
            ));
        }
        Ok(idx)
    }

    // Angle expressions: additive over multiplicative over unary over atoms.
    fn parse_expr(&mut self) -> Result<f64> {
        let mut value = self.parse_term()?;
        loop {
            match self.peek().map(|t| t.kind.clone()) {
                Some(TokenKind::Plus) => {
                    self.next();
                    value += self.parse_term()?;
                }
                Some(TokenKind::Minus) => {
                    self.next();
                    value -= self.parse_term()?;
                }
                _ => return Ok(value),
            }
        }
    }

    fn parse_term(&mut self) -> Result<f64> {
        let mut value = self.parse_unary()?;
        loop {
            match self.peek().map(|t| t.kind.clone()) {
                Some(TokenKind::Star) => {
                    self.next();
                    value *= self.parse_unary()?;
                }
                Some(TokenKind::Slash) => {
                    let tok = self.next().unwrap();
                    let rhs = self.parse_unary()?;
                    if rhs == 0.0 {
                        return Err(self.error_at(&tok, "division by zero in angle expression"));
                    }
                    value /= rhs;
                }
                _ => return Ok(value),
            }
        }
    }

    fn parse_unary(&mut self) -> Result<f64> {
        match self.peek().map(|t| t.kind.clone()) {
            Some(TokenKind::Minus) => {
                self.next();
                Ok(-self.parse_unary()?)
            }
            _ => self.parse_atom(),
        }
    }

    fn parse_atom(&mut self) -> Result<f64> {
        let t = self.next().ok_or_else(|| self.eof_error("an angle expression"))?;
        match &t.kind {
            TokenKind::Number(v) => Ok(*v),
            TokenKind::Ident(name) if name == "pi" => Ok(std::f64::consts::PI),
            TokenKind::LParen => {
                let v = self.parse_expr()?;
                self.expect(&TokenKind::RParen, "`)`")?;
                Ok(v)
            }
            TokenKind::Ident(name) => {
                Err(self.error_at(&t, format!("unknown identifier `{name}` in expression")))
            }
            _ => Err(self.error_at(&t, "expected a number, `pi`, or `(`")),
        }
    }

    fn push_gate(&self, circuit: &mut Circuit, gate: Gate, at: &Token) -> Result<()> {
        circuit.push(gate).map_err(|e: CircuitError| self.error_at(at, e.to_string()))
    }
}

/// Parse a QASM subset program into a [`Circuit`].
pub fn parse_qasm(text: &str) -> Result<Circuit> {
    let tokens = Lexer::new(text).tokenize()?;
    let mut p = Parser { tokens, pos: 0, qreg: None, creg: None };

    // Header.
    let (kw, tok) = p.expect_ident("`OPENQASM`")?;
    if kw != "OPENQASM" {
        return Err(p.error_at(&tok, "expected `OPENQASM` header"));
    }
    match p.next() {
        Some(t) => match &t.kind {
            TokenKind::Number(v) if *v == 2.0 => {}
            TokenKind::Ident(v) if v == "2.0" => {}
            _ => return Err(p.error_at(&t, "only OpenQASM version 2.0 is supported")),
        },
        None => return Err(p.eof_error("a version number")),
    }
    p.expect(&TokenKind::Semicolon, "`;`")?;

    // Declarations first, then statements.
    let mut circuit: Option<Circuit> = None;
    let mut pending: Vec<(Gate, Token)> = Vec::new();

    while p.peek().is_some() {
        let (name, tok) = p.expect_ident("a statement")?;
        match name.as_str() {
            "include" => {
                let t = p.next().ok_or_else(|| p.eof_error("a file name"))?;
                match &t.kind {
                    TokenKind::Str(file) if file == "qelib1.inc" => {}
                    TokenKind::Str(file) => {
                        return Err(
                            p.error_at(&t, format!("unsupported include `{file}`"))
                        )
                    }
                    _ => return Err(p.error_at(&t, "expected a quoted file name")),
                }
                p.expect(&TokenKind::Semicolon, "`;`")?;
            }
            "qreg" | "creg" => {
                if circuit.is_some() {
                    return Err(p.error_at(&tok, "register declarations must precede gates"));
                }
                let (reg, rtok) = p.expect_ident("a register name")?;
                let (size, _) = p.expect_index()?;
                p.expect(&TokenKind::Semicolon, "`;`")?;
                if name == "qreg" {
                    if p.qreg.is_some() {
                        return Err(p.error_at(&rtok, "only one quantum register is supported"));
                    }
                    p.qreg = Some((reg, size));
                } else {
                    if p.creg.is_some() {
                        return Err(p.error_at(&rtok, "only one classical register is supported"));
                    }
                    p.creg = Some((reg, size));
                }
            }
            "h" | "x" | "s" | "sdg" => {
                let (q, _) = p.parse_qubit()?;
                p.expect(&TokenKind::Semicolon, "`;`")?;
                let gate = match name.as_str() {
                    "h" => Gate::h(q),
                    "x" => Gate::x(q),
                    "s" => Gate::s(q),
                    _ => Gate::sdg(q),
                };
                pending.push((gate, tok));
            }
            "cx" | "swap" => {
                let (a, _) = p.parse_qubit()?;
                p.expect(&TokenKind::Comma, "`,`")?;
                let (b, _) = p.parse_qubit()?;
                p.expect(&TokenKind::Semicolon, "`;`")?;
                let gate = if name == "cx" { Gate::cnot(a, b) } else { Gate::swap(a, b) };
                pending.push((gate, tok));
            }
            "u3" => {
                p.expect(&TokenKind::LParen, "`(`")?;
                let theta = p.parse_expr()?;
                p.expect(&TokenKind::Comma, "`,`")?;
                let phi = p.parse_expr()?;
                p.expect(&TokenKind::Comma, "`,`")?;
                let chi = p.parse_expr()?;
                p.expect(&TokenKind::RParen, "`)`")?;
                let (q, _) = p.parse_qubit()?;
                p.expect(&TokenKind::Semicolon, "`;`")?;
                pending.push((Gate::u3(theta, phi, chi, q), tok));
            }
            "measure" => {
                let (q, _) = p.parse_qubit()?;
                p.expect(&TokenKind::Arrow, "`->`")?;
                let c = p.parse_cbit()?;
                p.expect(&TokenKind::Semicolon, "`;`")?;
                pending.push((Gate::measure(q, c), tok));
            }
            "barrier" => {
                let mut qs = Vec::new();
                if p.peek().map(|t| t.kind.clone()) == Some(TokenKind::Semicolon) {
                    // barrier; spans the whole register
                } else if matches!(
                    (p.peek().map(|t| t.kind.clone()), p.tokens.get(p.pos + 1).map(|t| t.kind.clone())),
                    (Some(TokenKind::Ident(_)), Some(TokenKind::Semicolon))
                ) {
                    // barrier q; also spans the whole register
                    let (reg, rtok) = p.expect_ident("a register name")?;
                    match &p.qreg {
                        Some((qname, _)) if qname == &reg => {}
                        _ => return Err(p.error_at(&rtok, format!("unknown register `{reg}`"))),
                    }
                } else {
                    loop {
                        let (q, _) = p.parse_qubit()?;
                        qs.push(q);
                        match p.peek().map(|t| t.kind.clone()) {
                            Some(TokenKind::Comma) => {
                                p.next();
                            }
                            _ => break,
                        }
                    }
                }
                p.expect(&TokenKind::Semicolon, "`;`")?;
                if qs.is_empty() {
                    let size = p.qreg.as_ref().map(|(_, s)| *s).unwrap_or(0);
                    qs = (0..size).collect();
                }
                pending.push((Gate::barrier(qs), tok));
            }
            other => {
                return Err(p.error_at(&tok, format!("unknown statement or gate `{other}`")))
            }
        }
        // Materialize the circuit lazily once registers are known.
        if circuit.is_none() && !pending.is_empty() {
            let Some((_, qsize)) = &p.qreg else {
                return Err(p.error_at(&pending[0].1, "gate before any qreg declaration"));
            };
            let csize = p.creg.as_ref().map(|(_, s)| *s).unwrap_or(0);
            circuit = Some(Circuit::new(*qsize, csize));
        }
        if let Some(c) = &mut circuit {
            for (gate, at) in pending.drain(..) {
                p.push_gate(c, gate, &at)?;
            }
        }
    }

    match circuit {
        Some(c) => Ok(c),
        None => {
            let Some((_, qsize)) = &p.qreg else {
                return Err(p.eof_error("a qreg declaration"));
            };
            let csize = p.creg.as_ref().map(|(_, s)| *s).unwrap_or(0);
            Ok(Circuit::new(*qsize, csize))
        }
    }
}

/// Emit a circuit in the canonical subset format; `parse_qasm(emit_qasm(c))`
/// reproduces the circuit structure exactly.
pub fn emit_qasm(c: &Circuit) -> String {
    let mut out = String::new();
    out.push_str("OPENQASM 2.0;\n");
    out.push_str("include \"qelib1.inc\";\n");
    out.push_str(&format!("qreg q[{}];\n", c.num_qubits()));
    if c.num_clbits() > 0 {
        out.push_str(&format!("creg c[{}];\n", c.num_clbits()));
    }
    for gate in c.gates() {
        let line = match gate.kind {
            GateKind::H => format!("h q[{}];", gate.targets[0]),
            GateKind::X => format!("x q[{}];", gate.targets[0]),
            GateKind::S => format!("s q[{}];", gate.targets[0]),
            GateKind::Sdg => format!("sdg q[{}];", gate.targets[0]),
            GateKind::Cnot => format!("cx q[{}],q[{}];", gate.targets[0], gate.targets[1]),
            GateKind::Swap => format!("swap q[{}],q[{}];", gate.targets[0], gate.targets[1]),
            GateKind::U3 => format!(
                "u3({},{},{}) q[{}];",
                format_sig17(gate.params[0]),
                format_sig17(gate.params[1]),
                format_sig17(gate.params[2]),
                gate.targets[0]
            ),
            GateKind::Measure => format!(
                "measure q[{}] -> c[{}];",
                gate.targets[0],
                gate.classical_target.expect("validated measure")
            ),
            GateKind::Barrier => {
                let list: Vec<String> =
                    gate.targets.iter().map(|q| format!("q[{q}]")).collect();
                format!("barrier {};", list.join(","))
            }
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}
