//! Text form of pulse sequences.
//!
//! ```text
//! name DSE_D
//! sweep tau us linspace 0 2 41
//! pulse NV x 90
//! delay tau/2
//! pulse NV x 180 | pulse N x 180
//! delay tau/2
//! pulse NV y 90 | pulse N x 180
//! readout
//! ```
//!
//! Statements end at `;` or a newline, `|` joins simultaneous steps and `#`
//! starts a comment. Angles are in degrees unless suffixed with `rad`.

use std::fmt::Write as _;

use super::model::*;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Sym(char),
    Newline,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Num(x) => format!("number {x}"),
        Tok::Sym(c) => format!("`{c}`"),
        Tok::Newline => "end of line".into(),
        Tok::Eof => "end of input".into(),
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let start = (line, col);
        let push = |out: &mut Vec<Token>, tok| out.push(Token { tok, line: start.0, col: start.1 });
        if c == '\n' {
            push(&mut out, Tok::Newline);
            i += 1;
            line += 1;
            col = 1;
        } else if c.is_whitespace() {
            i += 1;
            col += 1;
        } else if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
                col += 1;
            }
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                j += 1;
            }
            if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                let mut k = j + 1;
                if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    while k < chars.len() && chars[k].is_ascii_digit() {
                        k += 1;
                    }
                    j = k;
                }
            }
            let s: String = chars[i..j].iter().collect();
            let x: f64 = s.parse().map_err(|_| Error::Syntax { line, col, msg: format!("malformed number `{s}`") })?;
            push(&mut out, Tok::Num(x));
            col += j - i;
            i = j;
        } else if is_ident_start(c) {
            let mut j = i;
            while j < chars.len() && (is_ident_start(chars[j]) || chars[j].is_ascii_digit()) {
                j += 1;
            }
            push(&mut out, Tok::Ident(chars[i..j].iter().collect()));
            col += j - i;
            i = j;
        } else if ";|(),/*[]+-".contains(c) {
            push(&mut out, Tok::Sym(c));
            i += 1;
            col += 1;
        } else {
            return Err(Error::Syntax { line, col, msg: format!("unexpected character `{c}`") });
        }
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    sweep: Option<Sweep>,
}

type Positioned<T> = (T, usize, usize);

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, expected: &str) -> Result<T> {
        let t = self.peek();
        Err(Error::Syntax { line: t.line, col: t.col, msg: format!("expected {expected}, found {}", describe(&t.tok)) })
    }

    fn semantic<T>(line: usize, col: usize, msg: impl Into<String>) -> Result<T> {
        Err(Error::Semantic { line, col, msg: msg.into() })
    }

    fn eat_sym(&mut self, c: char) -> bool {
        if self.peek().tok == Tok::Sym(c) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, c: char) -> Result<()> {
        if self.eat_sym(c) {
            Ok(())
        } else {
            self.err(&format!("`{c}`"))
        }
    }

    fn ident(&mut self, expected: &str) -> Result<Positioned<String>> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Ident(s) => {
                self.next();
                Ok((s, t.line, t.col))
            }
            _ => self.err(expected),
        }
    }

    fn number(&mut self) -> Result<f64> {
        let neg = self.eat_sym('-');
        match self.peek().tok {
            Tok::Num(x) => {
                self.next();
                Ok(if neg { -x } else { x })
            }
            _ => self.err("a number"),
        }
    }

    fn count(&mut self) -> Result<usize> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Num(x) if x.fract() == 0.0 && x >= 0.0 => {
                self.next();
                Ok(x as usize)
            }
            _ => self.err("a point count"),
        }
    }

    fn unit_of(&mut self, dim: Dimension) -> Option<Unit> {
        if let Tok::Ident(s) = &self.peek().tok {
            if let Some(u) = Unit::parse(s) {
                if u.dimension() == dim {
                    self.next();
                    return Some(u);
                }
            }
        }
        None
    }

    /// Sweep reference `name`, `name/k` or `name*s`, checked against the
    /// declared sweep.
    fn swept(&mut self, dim: Dimension) -> Result<Value> {
        let (name, line, col) = self.ident("a value")?;
        let scale = if self.eat_sym('/') {
            1.0 / self.number()?
        } else if self.eat_sym('*') {
            self.number()?
        } else {
            1.0
        };
        match &self.sweep {
            Some(s) if s.name == name => {
                if s.unit.dimension() != dim {
                    return Self::semantic(line, col, format!("sweep variable `{name}` has a {:?} unit", s.unit.dimension()));
                }
            }
            _ => return Self::semantic(line, col, format!("unbound sweep variable `{name}`")),
        }
        if !scale.is_finite() {
            return Self::semantic(line, col, "sweep scale must be finite");
        }
        Ok(Value::Swept { name, scale })
    }

    fn value(&mut self, dim: Dimension) -> Result<Value> {
        let is_number = matches!(self.peek().tok, Tok::Num(_) | Tok::Sym('-'));
        if !is_number {
            return self.swept(dim);
        }
        let x = self.number()?;
        let unit = match (self.unit_of(dim), dim) {
            (Some(u), _) => u,
            (None, Dimension::Angle) => Unit::Deg,
            (None, Dimension::Time) => return self.err("a time unit (s, ms, us, ns)"),
            (None, Dimension::Frequency) => return self.err("a frequency unit (hz, khz, mhz, ghz)"),
        };
        Ok(Value::Fixed(unit.to_si(x)))
    }

    fn duration(&mut self) -> Result<Value> {
        let t = self.peek().clone();
        let v = self.value(Dimension::Time)?;
        if let Value::Fixed(x) = v {
            if x < 0.0 {
                return Self::semantic(t.line, t.col, "durations must be non-negative");
            }
        }
        Ok(v)
    }

    fn channel(&mut self) -> Result<Channel> {
        let (s, line, col) = self.ident("a channel (NV, N)")?;
        match s.as_str() {
            "NV" => Ok(Channel::Nv),
            "N" => Ok(Channel::N),
            "optical" => Ok(Channel::Optical),
            _ => Self::semantic(line, col, format!("unknown channel `{s}`")),
        }
    }

    fn axis(&mut self) -> Result<Axis> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Ident(s) if s == "x" => {
                self.next();
                Ok(Axis::X)
            }
            Tok::Ident(s) if s == "y" => {
                self.next();
                Ok(Axis::Y)
            }
            Tok::Ident(s) if s == "alt" => {
                self.next();
                self.expect_sym('(')?;
                let a = self.axis()?;
                self.expect_sym(',')?;
                let b = self.axis()?;
                self.expect_sym(')')?;
                Ok(Axis::Alt(Box::new(a), Box::new(b)))
            }
            Tok::Sym('-') => match &self.toks[self.pos + 1].tok {
                Tok::Ident(s) if s == "x" => {
                    self.pos += 2;
                    Ok(Axis::MinusX)
                }
                Tok::Ident(s) if s == "y" => {
                    self.pos += 2;
                    Ok(Axis::MinusY)
                }
                _ => Ok(Axis::Phase(self.value(Dimension::Angle)?)),
            },
            Tok::Num(_) | Tok::Ident(_) => Ok(Axis::Phase(self.value(Dimension::Angle)?)),
            _ => self.err("an axis (x, y, -x, -y, angle, sweep variable or alt(...))"),
        }
    }

    fn step(&mut self) -> Result<PulseStep> {
        let (kw, line, col) = self.ident("a statement")?;
        Ok(match kw.as_str() {
            "pulse" => {
                let channel = self.channel()?;
                let axis = self.axis()?;
                let angle = self.value(Dimension::Angle)?;
                let freq = match &self.peek().tok {
                    Tok::Ident(s) if s == "at" => {
                        self.next();
                        Some(self.value(Dimension::Frequency)?)
                    }
                    _ => None,
                };
                PulseStep::Pulse { channel, axis, angle, freq }
            }
            "delay" => PulseStep::Delay { duration: self.duration()? },
            "lock" => {
                let channel = self.channel()?;
                let sign = if self.eat_sym('+') {
                    LockSign::Plus
                } else if self.eat_sym('-') {
                    LockSign::Minus
                } else {
                    match &self.peek().tok {
                        Tok::Ident(s) if s == "alt" => {
                            self.next();
                            LockSign::Alt
                        }
                        _ => return self.err("a lock sign (+, -, alt)"),
                    }
                };
                PulseStep::Lock { channel, sign, duration: self.duration()? }
            }
            "pump" => PulseStep::Pump { duration: self.duration()? },
            "readout" => PulseStep::Readout,
            _ => {
                return Err(Error::Syntax {
                    line,
                    col,
                    msg: format!("expected one of pulse, delay, lock, pump, readout, found `{kw}`"),
                })
            }
        })
    }

    fn sweep_decl(&mut self) -> Result<Sweep> {
        let (name, ..) = self.ident("a sweep variable name")?;
        let (u, line, col) = self.ident("a unit")?;
        let unit = Unit::parse(&u).map_or_else(|| Self::semantic(line, col, format!("unknown unit `{u}`")), Ok)?;
        let grid = if self.eat_sym('[') {
            let mut v = vec![self.number()?];
            while self.eat_sym(',') {
                v.push(self.number()?);
            }
            self.expect_sym(']')?;
            Grid::List(v)
        } else {
            let (g, ..) = self.ident("`linspace` or `[`")?;
            if g != "linspace" {
                return Err(Error::Syntax { line, col, msg: format!("expected `linspace` or `[`, found `{g}`") });
            }
            let start = self.number()?;
            let stop = self.number()?;
            Grid::Linspace { start, stop, n: self.count()? }
        };
        let s = Sweep { name, unit, grid };
        s.validate().map_err(|e| Error::Semantic { line, col, msg: e.to_string() })?;
        Ok(s)
    }

    fn at_separator(&self) -> bool {
        matches!(self.peek().tok, Tok::Newline | Tok::Sym(';') | Tok::Eof)
    }

    fn skip_separators(&mut self) {
        while matches!(self.peek().tok, Tok::Newline | Tok::Sym(';')) {
            self.next();
        }
    }

    fn program(&mut self) -> Result<PulseSequence> {
        let mut name = None;
        let mut blocks: Vec<Block> = Vec::new();
        let mut readout_at: Option<(usize, usize)> = None;
        self.skip_separators();
        if self.peek().tok == Tok::Eof {
            return Err(Error::Syntax { line: 1, col: 1, msg: "empty sequence".into() });
        }
        while self.peek().tok != Tok::Eof {
            let t = self.peek().clone();
            match &t.tok {
                Tok::Ident(s) if s == "name" => {
                    self.next();
                    if name.is_some() {
                        return Self::semantic(t.line, t.col, "duplicate name");
                    }
                    name = Some(self.ident("a sequence name")?.0);
                }
                Tok::Ident(s) if s == "sweep" => {
                    self.next();
                    if self.sweep.is_some() {
                        return Self::semantic(t.line, t.col, "only one sweep may be declared");
                    }
                    if !blocks.is_empty() {
                        return Self::semantic(t.line, t.col, "sweep must be declared before the first step");
                    }
                    self.sweep = Some(self.sweep_decl()?);
                }
                _ => {
                    if let Some((l, c)) = readout_at {
                        return Self::semantic(l, c, "readout must be the last statement");
                    }
                    let mut block = vec![self.step()?];
                    while self.eat_sym('|') {
                        block.push(self.step()?);
                    }
                    validate_block(&block).or_else(|m| Self::semantic(t.line, t.col, m))?;
                    if block.contains(&PulseStep::Readout) {
                        readout_at = Some((t.line, t.col));
                    }
                    blocks.push(block);
                }
            }
            if !self.at_separator() {
                return self.err("`;` or end of line");
            }
            self.skip_separators();
        }
        Ok(PulseSequence { name: name.unwrap_or_else(|| "custom".into()), sweep: self.sweep.take(), blocks })
    }
}

/// Parse a sequence; diagnostics carry 1-based line and column.
pub fn parse_sequence(text: &str) -> Result<PulseSequence> {
    let toks = lex(text)?;
    let readouts: Vec<&Token> =
        toks.iter().filter(|t| t.tok == Tok::Ident("readout".into())).collect();
    if readouts.len() > 1 {
        return Err(Error::Semantic { line: readouts[1].line, col: readouts[1].col, msg: "duplicate readout".into() });
    }
    Parser { toks, pos: 0, sweep: None }.program()
}

/// Shortest rendering of an SI value that parses back to exactly the same
/// number.
fn render(x: f64, units: &[Unit]) -> String {
    let mut best: Option<String> = None;
    for &u in units {
        let v = u.from_si(x);
        let s = format!("{v}");
        let back: f64 = s.parse().unwrap_or(f64::NAN);
        if u.to_si(back) == x {
            let cand = format!("{s}{}", u.symbol());
            if best.as_ref().is_none_or(|b| cand.len() < b.len()) {
                best = Some(cand);
            }
        }
    }
    best.unwrap_or_else(|| format!("{x}{}", units.last().unwrap().symbol()))
}

fn render_value(v: &Value, dim: Dimension) -> String {
    match v {
        Value::Fixed(x) => match dim {
            Dimension::Time => render(*x, &[Unit::Ns, Unit::Us, Unit::Ms, Unit::S]),
            Dimension::Frequency => render(*x, &[Unit::MHz, Unit::KHz, Unit::GHz, Unit::Hz]),
            Dimension::Angle => {
                let s = format!("{}", Unit::Deg.from_si(*x));
                if s.parse::<f64>().map(|d| Unit::Deg.to_si(d)) == Ok(*x) {
                    s
                } else {
                    format!("{x}rad")
                }
            }
        },
        Value::Swept { name, scale } => {
            if *scale == 1.0 {
                name.clone()
            } else {
                let k = 1.0 / scale;
                if k.fract() == 0.0 && k.abs() > 1.0 && 1.0 / k == *scale {
                    format!("{name}/{k}")
                } else {
                    format!("{name}*{scale}")
                }
            }
        }
    }
}

fn render_axis(a: &Axis) -> String {
    match a {
        Axis::X => "x".into(),
        Axis::Y => "y".into(),
        Axis::MinusX => "-x".into(),
        Axis::MinusY => "-y".into(),
        Axis::Phase(v) => render_value(v, Dimension::Angle),
        Axis::Alt(a, b) => format!("alt({}, {})", render_axis(a), render_axis(b)),
    }
}

fn render_step(s: &PulseStep) -> String {
    match s {
        PulseStep::Pulse { channel, axis, angle, freq } => {
            let mut out = format!(
                "pulse {} {} {}",
                channel.keyword(),
                render_axis(axis),
                render_value(angle, Dimension::Angle)
            );
            if let Some(f) = freq {
                let _ = write!(out, " at {}", render_value(f, Dimension::Frequency));
            }
            out
        }
        PulseStep::Delay { duration } => format!("delay {}", render_value(duration, Dimension::Time)),
        PulseStep::Lock { channel, sign, duration } => {
            let sign = match sign {
                LockSign::Plus => "+",
                LockSign::Minus => "-",
                LockSign::Alt => "alt",
            };
            format!("lock {} {sign} {}", channel.keyword(), render_value(duration, Dimension::Time))
        }
        PulseStep::Pump { duration } => format!("pump {}", render_value(duration, Dimension::Time)),
        PulseStep::Readout => "readout".into(),
    }
}

/// Canonical text form; `parse_sequence(&print_sequence(s)) == s`.
pub fn print_sequence(seq: &PulseSequence) -> String {
    let mut out = format!("name {}\n", seq.name);
    if let Some(s) = &seq.sweep {
        let grid = match &s.grid {
            Grid::Linspace { start, stop, n } => format!("linspace {start} {stop} {n}"),
            Grid::List(v) => {
                format!("[{}]", v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", "))
            }
        };
        let _ = writeln!(out, "sweep {} {} {grid}", s.name, s.unit.symbol());
    }
    for block in &seq.blocks {
        let _ = writeln!(out, "{}", block.iter().map(render_step).collect::<Vec<_>>().join(" | "));
    }
    out
}
