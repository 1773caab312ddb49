//! Model documents: a line-oriented block grammar, its parser and its
//! canonical printer.
//!
//! ```text
//! poset CH3 {
//!   elements: 0 a 1
//!   order: 0<a a<1
//!   meet: default
//!   join: default
//! }
//! ```
//!
//! Statements end at a newline or `;`. Inside square brackets newlines are
//! ignored, so matrices may span lines. `#` starts a comment.

use std::fmt::Write as _;

use nctopo::completion::PointKind;
use nctopo::Rational;
use num_traits::Zero;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("syntax error at {line}:{column}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelDocument {
    pub blocks: Vec<Block>,
}

#[derive(Clone, Debug)]
pub struct Block {
    pub name: String,
    /// Line of the opening keyword; ignored by equality.
    pub line: usize,
    pub body: BlockBody,
}

impl PartialEq for Block {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.body == other.body
    }
}

impl Eq for Block {}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BlockBody {
    Poset(PosetDef),
    System(SystemDef),
    Presheaf(PresheafDef),
    Filtration(FiltrationDef),
    Hilbert(HilbertDef),
}

impl BlockBody {
    pub fn kind(&self) -> &'static str {
        match self {
            BlockBody::Poset(_) => "poset",
            BlockBody::System(_) => "system",
            BlockBody::Presheaf(_) => "presheaf",
            BlockBody::Filtration(_) => "filtration",
            BlockBody::Hilbert(_) => "hilbert",
        }
    }
}

/// Explicit entries, optionally completed from greatest lower or least upper
/// bounds.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TableDef {
    pub default: bool,
    pub rows: Vec<(String, String, String)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PosetDef {
    pub elements: Vec<String>,
    pub bottom: Option<String>,
    pub top: Option<String>,
    pub order: Vec<(String, String)>,
    pub meet: TableDef,
    pub join: TableDef,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MapDef {
    pub from: String,
    pub to: String,
    pub pairs: Vec<(String, String)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SystemDef {
    pub times: Vec<String>,
    pub spaces: Vec<String>,
    pub maps: Vec<MapDef>,
    pub points: Option<PointKind>,
}

/// Rows of rationals; the column count of an empty matrix comes from context.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MatrixLit {
    pub rows: Vec<Vec<Rational>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Over {
    Base(String),
    System(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PresheafDef {
    pub over: Over,
    /// `Γ(λ)` dimensions; unlisted elements get 0.
    pub dims: Vec<(String, usize)>,
    /// `restrict λ->μ: matrix`.
    pub restricts: Vec<(String, String, MatrixLit)>,
    /// Constant fibres of this dimension.
    pub constant: Option<usize>,
    /// `fibre t: PRESHEAF`.
    pub fibres: Vec<(String, String)>,
    /// `compare t->t' λ: matrix`.
    pub compares: Vec<(String, String, String, MatrixLit)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiltrationDef {
    pub base: String,
    pub levels: Vec<(i64, String)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HilbertDef {
    pub dim: usize,
    pub lines: Vec<Vec<Rational>>,
    pub operator: Option<MatrixLit>,
    pub eigenvalues: Option<Vec<Rational>>,
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Word(String),
    LBrace,
    RBrace,
    LBrack,
    RBrack,
    Colon,
    Comma,
    Lt,
    Arrow,
    Sep,
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn word_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '.' | '\'' | '/' | '+' | '*' | '-' | '∞')
}

fn lex(text: &str) -> Result<Vec<Token>, SyntaxError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let mut depth = 0usize;
    while i < chars.len() {
        let c = chars[i];
        let start = (line, col);
        let push = |out: &mut Vec<Token>, tok| out.push(Token { tok, line: start.0, column: start.1 });
        match c {
            '\n' => {
                if depth == 0 {
                    push(&mut out, Tok::Sep);
                }
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            c if c.is_whitespace() => {}
            '{' => push(&mut out, Tok::LBrace),
            '}' => push(&mut out, Tok::RBrace),
            '[' => {
                depth += 1;
                push(&mut out, Tok::LBrack)
            }
            ']' => {
                depth = depth.saturating_sub(1);
                push(&mut out, Tok::RBrack)
            }
            ':' => push(&mut out, Tok::Colon),
            ',' => push(&mut out, Tok::Comma),
            ';' => push(&mut out, Tok::Sep),
            '<' => push(&mut out, Tok::Lt),
            '-' if chars.get(i + 1) == Some(&'>') => {
                push(&mut out, Tok::Arrow);
                i += 2;
                col += 2;
                continue;
            }
            c if word_char(c) => {
                let mut w = String::new();
                while i < chars.len() && word_char(chars[i]) && !(chars[i] == '-' && chars.get(i + 1) == Some(&'>')) {
                    w.push(chars[i]);
                    i += 1;
                    col += 1;
                }
                push(&mut out, Tok::Word(w));
                continue;
            }
            other => {
                return Err(SyntaxError { line, column: col, message: format!("unexpected character `{other}`") });
            }
        }
        i += 1;
        col += 1;
    }
    out.push(Token { tok: Tok::Eof, line, column: col });
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Word(w) => format!("`{w}`"),
        Tok::LBrace => "`{`".into(),
        Tok::RBrace => "`}`".into(),
        Tok::LBrack => "`[`".into(),
        Tok::RBrack => "`]`".into(),
        Tok::Colon => "`:`".into(),
        Tok::Comma => "`,`".into(),
        Tok::Lt => "`<`".into(),
        Tok::Arrow => "`->`".into(),
        Tok::Sep => "end of statement".into(),
        Tok::Eof => "end of input".into(),
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.column)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, SyntaxError> {
        let (line, column) = self.here();
        Err(SyntaxError { line, column, message: message.into() })
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), SyntaxError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected {}, found {}", describe(&want), describe(self.peek())))
        }
    }

    fn word(&mut self) -> Result<String, SyntaxError> {
        match self.peek().clone() {
            Tok::Word(w) => {
                self.bump();
                Ok(w)
            }
            other => self.error(format!("expected a name, found {}", describe(&other))),
        }
    }

    fn skip_seps(&mut self) {
        while *self.peek() == Tok::Sep {
            self.bump();
        }
    }

    fn at_end_of_statement(&self) -> bool {
        matches!(self.peek(), Tok::Sep | Tok::RBrace | Tok::Eof)
    }

    fn end_statement(&mut self) -> Result<(), SyntaxError> {
        if self.at_end_of_statement() {
            Ok(())
        } else {
            self.error(format!("unexpected {}", describe(self.peek())))
        }
    }

    fn words(&mut self) -> Result<Vec<String>, SyntaxError> {
        let mut out = Vec::new();
        while !self.at_end_of_statement() {
            out.push(self.word()?);
        }
        Ok(out)
    }

    fn number<T: std::str::FromStr>(&mut self) -> Result<T, SyntaxError> {
        let (line, column) = self.here();
        let w = self.word()?;
        w.parse().map_err(|_| SyntaxError { line, column, message: format!("`{w}` is not a number") })
    }

    fn rational(&mut self) -> Result<Rational, SyntaxError> {
        let (line, column) = self.here();
        let w = self.word()?;
        parse_rational(&w).ok_or(SyntaxError { line, column, message: format!("`{w}` is not a rational number") })
    }

    fn vector(&mut self) -> Result<Vec<Rational>, SyntaxError> {
        self.expect(Tok::LBrack)?;
        let mut out = Vec::new();
        if *self.peek() == Tok::RBrack {
            self.bump();
            return Ok(out);
        }
        loop {
            out.push(self.rational()?);
            match self.bump() {
                Tok::Comma => continue,
                Tok::RBrack => return Ok(out),
                other => return self.error(format!("expected `,` or `]`, found {}", describe(&other))),
            }
        }
    }

    fn matrix(&mut self) -> Result<MatrixLit, SyntaxError> {
        self.expect(Tok::LBrack)?;
        let mut rows = Vec::new();
        if *self.peek() == Tok::RBrack {
            self.bump();
            return Ok(MatrixLit { rows });
        }
        loop {
            rows.push(self.vector()?);
            match self.bump() {
                Tok::Comma => continue,
                Tok::RBrack => break,
                other => return self.error(format!("expected `,` or `]`, found {}", describe(&other))),
            }
        }
        let width = rows[0].len();
        if rows.iter().any(|r| r.len() != width) {
            return self.error("matrix rows have different lengths");
        }
        Ok(MatrixLit { rows })
    }

    /// `a->b`.
    fn arrow_pair(&mut self) -> Result<(String, String), SyntaxError> {
        let a = self.word()?;
        self.expect(Tok::Arrow)?;
        Ok((a, self.word()?))
    }

    fn document(&mut self) -> Result<ModelDocument, SyntaxError> {
        let mut blocks = Vec::new();
        loop {
            self.skip_seps();
            if *self.peek() == Tok::Eof {
                break;
            }
            blocks.push(self.block()?);
        }
        Ok(ModelDocument { blocks })
    }

    fn block(&mut self) -> Result<Block, SyntaxError> {
        let (line, _) = self.here();
        let kind = self.word()?;
        let name = self.word()?;
        self.expect(Tok::LBrace)?;
        let body = match kind.as_str() {
            "poset" => BlockBody::Poset(self.poset()?),
            "system" => BlockBody::System(self.system()?),
            "presheaf" => BlockBody::Presheaf(self.presheaf()?),
            "filtration" => BlockBody::Filtration(self.filtration()?),
            "hilbert" => BlockBody::Hilbert(self.hilbert()?),
            other => {
                self.pos -= 2;
                return self.error(format!("unknown block kind `{other}`"));
            }
        };
        self.expect(Tok::RBrace)?;
        Ok(Block { name, line, body })
    }

    /// Runs `stmt` on every statement keyword until the closing brace.
    fn statements(&mut self, mut stmt: impl FnMut(&mut Parser, &str) -> Result<(), SyntaxError>) -> Result<(), SyntaxError> {
        loop {
            self.skip_seps();
            if matches!(self.peek(), Tok::RBrace | Tok::Eof) {
                return Ok(());
            }
            let key = self.word()?;
            stmt(self, &key)?;
            self.end_statement()?;
        }
    }

    fn unknown_key<T>(&mut self, key: &str) -> Result<T, SyntaxError> {
        self.pos -= 1;
        self.error(format!("unknown key `{key}`"))
    }

    fn poset(&mut self) -> Result<PosetDef, SyntaxError> {
        let mut p = PosetDef::default();
        self.statements(|s, key| {
            match key {
                "meet" | "join" if *s.peek() != Tok::Colon => {
                    let a = s.word()?;
                    let b = s.word()?;
                    s.expect(Tok::Arrow)?;
                    let c = s.word()?;
                    let table = if key == "meet" { &mut p.meet } else { &mut p.join };
                    table.rows.push((a, b, c));
                    return Ok(());
                }
                _ => {}
            }
            s.expect(Tok::Colon)?;
            match key {
                "elements" => p.elements = s.words()?,
                "bottom" => p.bottom = Some(s.word()?),
                "top" => p.top = Some(s.word()?),
                "order" => {
                    while !s.at_end_of_statement() {
                        let a = s.word()?;
                        s.expect(Tok::Lt)?;
                        p.order.push((a, s.word()?));
                    }
                }
                "meet" | "join" => {
                    let w = s.word()?;
                    if w != "default" {
                        s.pos -= 1;
                        return s.error("expected `default`");
                    }
                    if key == "meet" {
                        p.meet.default = true;
                    } else {
                        p.join.default = true;
                    }
                }
                other => return s.unknown_key(other),
            }
            Ok(())
        })?;
        Ok(p)
    }

    fn system(&mut self) -> Result<SystemDef, SyntaxError> {
        let mut sys = SystemDef::default();
        self.statements(|s, key| {
            if key == "map" {
                let (from, to) = s.arrow_pair()?;
                s.expect(Tok::Colon)?;
                let mut pairs = Vec::new();
                while !s.at_end_of_statement() {
                    pairs.push(s.arrow_pair()?);
                }
                sys.maps.push(MapDef { from, to, pairs });
                return Ok(());
            }
            s.expect(Tok::Colon)?;
            match key {
                "times" => sys.times = s.words()?,
                "spaces" => sys.spaces = s.words()?,
                "points" => {
                    let (line, column) = s.here();
                    let w = s.word()?;
                    sys.points = Some(w.parse().map_err(|e: String| SyntaxError { line, column, message: e })?);
                }
                other => return s.unknown_key(other),
            }
            Ok(())
        })?;
        Ok(sys)
    }

    fn presheaf(&mut self) -> Result<PresheafDef, SyntaxError> {
        let mut over = None;
        let mut dims = Vec::new();
        let mut restricts = Vec::new();
        let mut constant = None;
        let mut fibres = Vec::new();
        let mut compares = Vec::new();
        let (line, column) = self.here();
        self.statements(|s, key| {
            match key {
                "restrict" => {
                    let (a, b) = s.arrow_pair()?;
                    s.expect(Tok::Colon)?;
                    restricts.push((a, b, s.matrix()?));
                    return Ok(());
                }
                "fibre" => {
                    let t = s.word()?;
                    s.expect(Tok::Colon)?;
                    fibres.push((t, s.word()?));
                    return Ok(());
                }
                "compare" => {
                    let (a, b) = s.arrow_pair()?;
                    let x = s.word()?;
                    s.expect(Tok::Colon)?;
                    compares.push((a, b, x, s.matrix()?));
                    return Ok(());
                }
                _ => {}
            }
            s.expect(Tok::Colon)?;
            match key {
                "base" => over = Some(Over::Base(s.word()?)),
                "system" => over = Some(Over::System(s.word()?)),
                "constant" => constant = Some(s.number()?),
                "dims" => {
                    while !s.at_end_of_statement() {
                        let e = s.word()?;
                        s.expect(Tok::Colon)?;
                        dims.push((e, s.number()?));
                    }
                }
                other => return s.unknown_key(other),
            }
            Ok(())
        })?;
        let over = over.ok_or(SyntaxError { line, column, message: "presheaf needs `base:` or `system:`".into() })?;
        Ok(PresheafDef { over, dims, restricts, constant, fibres, compares })
    }

    fn filtration(&mut self) -> Result<FiltrationDef, SyntaxError> {
        let mut base = None;
        let mut levels = Vec::new();
        let (line, column) = self.here();
        self.statements(|s, key| {
            s.expect(Tok::Colon)?;
            match key {
                "base" => base = Some(s.word()?),
                "levels" => {
                    while !s.at_end_of_statement() {
                        let g = s.number()?;
                        s.expect(Tok::Colon)?;
                        levels.push((g, s.word()?));
                    }
                }
                other => return s.unknown_key(other),
            }
            Ok(())
        })?;
        let base = base.ok_or(SyntaxError { line, column, message: "filtration needs `base:`".into() })?;
        Ok(FiltrationDef { base, levels })
    }

    fn hilbert(&mut self) -> Result<HilbertDef, SyntaxError> {
        let mut h = HilbertDef::default();
        self.statements(|s, key| {
            s.expect(Tok::Colon)?;
            match key {
                "dim" => h.dim = s.number()?,
                "lines" => {
                    while !s.at_end_of_statement() {
                        h.lines.push(s.vector()?);
                    }
                }
                "operator" => h.operator = Some(s.matrix()?),
                "eigenvalues" => {
                    let mut v = Vec::new();
                    while !s.at_end_of_statement() {
                        v.push(s.rational()?);
                    }
                    h.eigenvalues = Some(v);
                }
                other => return s.unknown_key(other),
            }
            Ok(())
        })?;
        Ok(h)
    }
}

pub fn parse_rational(w: &str) -> Option<Rational> {
    let (num, den) = match w.split_once('/') {
        Some((n, d)) => (n, d),
        None => (w, "1"),
    };
    let num: num_bigint::BigInt = num.parse().ok()?;
    let den: num_bigint::BigInt = den.parse().ok()?;
    if den.is_zero() {
        return None;
    }
    Some(Rational::new(num, den))
}

pub fn parse_model(text: &str) -> Result<ModelDocument, SyntaxError> {
    let toks = lex(text)?;
    Parser { toks, pos: 0 }.document()
}

// ---------------------------------------------------------------------------
// Printer

fn vector_text(v: &[Rational]) -> String {
    let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("[{}]", parts.join(", "))
}

fn matrix_text(m: &MatrixLit) -> String {
    let rows: Vec<String> = m.rows.iter().map(|r| vector_text(r)).collect();
    format!("[{}]", rows.join(", "))
}

/// Canonical text; `parse_model(&serialize_model(d)) == d`.
pub fn serialize_model(doc: &ModelDocument) -> String {
    let mut out = String::new();
    for (i, b) in doc.blocks.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "{} {} {{", b.body.kind(), b.name);
        match &b.body {
            BlockBody::Poset(p) => {
                let _ = writeln!(out, "  elements: {}", p.elements.join(" "));
                if let Some(x) = &p.bottom {
                    let _ = writeln!(out, "  bottom: {x}");
                }
                if let Some(x) = &p.top {
                    let _ = writeln!(out, "  top: {x}");
                }
                if !p.order.is_empty() {
                    let pairs: Vec<String> = p.order.iter().map(|(a, b)| format!("{a}<{b}")).collect();
                    let _ = writeln!(out, "  order: {}", pairs.join(" "));
                }
                for (name, table) in [("meet", &p.meet), ("join", &p.join)] {
                    if table.default {
                        let _ = writeln!(out, "  {name}: default");
                    }
                    for (a, b, c) in &table.rows {
                        let _ = writeln!(out, "  {name} {a} {b} -> {c}");
                    }
                }
            }
            BlockBody::System(s) => {
                let _ = writeln!(out, "  times: {}", s.times.join(" "));
                let _ = writeln!(out, "  spaces: {}", s.spaces.join(" "));
                for m in &s.maps {
                    let pairs: Vec<String> = m.pairs.iter().map(|(a, b)| format!("{a}->{b}")).collect();
                    let _ = writeln!(out, "  map {}->{}: {}", m.from, m.to, pairs.join(" "));
                }
                if let Some(k) = s.points {
                    let _ = writeln!(out, "  points: {k}");
                }
            }
            BlockBody::Presheaf(p) => {
                match &p.over {
                    Over::Base(n) => {
                        let _ = writeln!(out, "  base: {n}");
                    }
                    Over::System(n) => {
                        let _ = writeln!(out, "  system: {n}");
                    }
                }
                if let Some(d) = p.constant {
                    let _ = writeln!(out, "  constant: {d}");
                }
                if !p.dims.is_empty() {
                    let dims: Vec<String> = p.dims.iter().map(|(e, d)| format!("{e}:{d}")).collect();
                    let _ = writeln!(out, "  dims: {}", dims.join(" "));
                }
                for (a, b, m) in &p.restricts {
                    let _ = writeln!(out, "  restrict {a}->{b}: {}", matrix_text(m));
                }
                for (t, name) in &p.fibres {
                    let _ = writeln!(out, "  fibre {t}: {name}");
                }
                for (a, b, x, m) in &p.compares {
                    let _ = writeln!(out, "  compare {a}->{b} {x}: {}", matrix_text(m));
                }
            }
            BlockBody::Filtration(f) => {
                let _ = writeln!(out, "  base: {}", f.base);
                let levels: Vec<String> = f.levels.iter().map(|(g, l)| format!("{g}:{l}")).collect();
                let _ = writeln!(out, "  levels: {}", levels.join(" "));
            }
            BlockBody::Hilbert(h) => {
                let _ = writeln!(out, "  dim: {}", h.dim);
                if !h.lines.is_empty() {
                    let lines: Vec<String> = h.lines.iter().map(|l| vector_text(l)).collect();
                    let _ = writeln!(out, "  lines: {}", lines.join(" "));
                }
                if let Some(m) = &h.operator {
                    let _ = writeln!(out, "  operator: {}", matrix_text(m));
                }
                if let Some(v) = &h.eigenvalues {
                    let vals: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                    let _ = writeln!(out, "  eigenvalues: {}", vals.join(" "));
                }
            }
        }
        out.push_str("}\n");
    }
    out
}
