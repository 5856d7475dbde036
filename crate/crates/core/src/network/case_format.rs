//! Reader and canonical writer for the MATPOWER-compatible case subset.
//!
//! The grammar is documented in `docs/case-format.md`. Only the `baseMVA`,
//! `bus`, `gen` and `branch` fields are consumed; any other `mpc.*` field is
//! skipped with a warning. Quantities are converted to system per-unit on
//! `baseMVA` and angles to radians.

use super::{Branch, BranchStatus, Bus, BusId, BusKind, Generator, NetworkModel};
use crate::error::{Error, Result};
use std::fmt::Write as _;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Str(String),
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Semi,
    Comma,
    Equals,
    Dot,
    Newline,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn starts_number(chars: &[char], i: usize) -> bool {
    let digit_at = |k: usize| chars.get(k).is_some_and(char::is_ascii_digit);
    match chars[i] {
        c if c.is_ascii_digit() => true,
        '.' => digit_at(i + 1),
        '-' | '+' => {
            digit_at(i + 1)
                || (chars.get(i + 1) == Some(&'.') && digit_at(i + 2))
                || matches!(chars.get(i + 1), Some('I' | 'i' | 'N' | 'n'))
        }
        _ => false,
    }
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    while i < chars.len() {
        let c = chars[i];
        let start = (line, col);
        let push = |tokens: &mut Vec<Token>, tok| {
            tokens.push(Token {
                tok,
                line: start.0,
                column: start.1,
            })
        };
        match c {
            '\n' => {
                push(&mut tokens, Tok::Newline);
                i += 1;
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => {
                i += 1;
                col += 1;
            }
            '%' | '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '.' if chars.get(i + 1) == Some(&'.') && chars.get(i + 2) == Some(&'.') => {
                // line continuation: skip to and including the newline
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                if i < chars.len() {
                    i += 1;
                    line += 1;
                    col = 1;
                }
            }
            '[' | ']' | '{' | '}' | ';' | ',' | '=' => {
                let tok = match c {
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    ';' => Tok::Semi,
                    ',' => Tok::Comma,
                    _ => Tok::Equals,
                };
                push(&mut tokens, tok);
                i += 1;
                col += 1;
            }
            '\'' | '"' => {
                let quote = c;
                let mut j = i + 1;
                while j < chars.len() && chars[j] != quote && chars[j] != '\n' {
                    j += 1;
                }
                if j >= chars.len() || chars[j] != quote {
                    return Err(Error::syntax(line, col, "unterminated string"));
                }
                let s: String = chars[i + 1..j].iter().collect();
                push(&mut tokens, Tok::Str(s));
                col += j + 1 - i;
                i = j + 1;
            }
            _ if starts_number(&chars, i) => {
                let mut j = i;
                if chars[j] == '-' || chars[j] == '+' {
                    j += 1;
                }
                let body_start = j;
                while j < chars.len()
                    && (chars[j].is_ascii_alphanumeric()
                        || chars[j] == '.'
                        || ((chars[j] == '-' || chars[j] == '+') && matches!(chars[j - 1], 'e' | 'E')))
                {
                    j += 1;
                }
                let body: String = chars[body_start..j].iter().collect();
                let value = match body.as_str() {
                    "Inf" | "inf" => Some(f64::INFINITY),
                    "NaN" | "nan" => Some(f64::NAN),
                    _ => body.parse::<f64>().ok(),
                };
                let Some(v) = value else {
                    let raw: String = chars[i..j].iter().collect();
                    return Err(Error::syntax(line, col, format!("invalid number '{raw}'")));
                };
                push(&mut tokens, Tok::Number(if chars[i] == '-' { -v } else { v }));
                col += j - i;
                i = j;
            }
            '.' => {
                push(&mut tokens, Tok::Dot);
                i += 1;
                col += 1;
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let word: String = chars[i..j].iter().collect();
                let tok = match word.as_str() {
                    "Inf" | "inf" => Tok::Number(f64::INFINITY),
                    "NaN" | "nan" => Tok::Number(f64::NAN),
                    _ => Tok::Ident(word),
                };
                push(&mut tokens, tok);
                col += j - i;
                i = j;
            }
            other => return Err(Error::syntax(line, col, format!("unexpected character '{other}'"))),
        }
    }
    Ok(tokens)
}

struct Matrix {
    rows: Vec<(usize, usize, Vec<f64>)>,
}

enum Value {
    Number(f64),
    Text,
    Matrix(Matrix),
    Cell,
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn end_position(&self) -> (usize, usize) {
        self.tokens.last().map(|t| (t.line + 1, 1)).unwrap_or((1, 1))
    }

    fn error_here(&self, message: impl Into<String>) -> Error {
        let (line, column) = self
            .peek()
            .map(|t| (t.line, t.column))
            .unwrap_or_else(|| self.end_position());
        Error::syntax(line, column, message)
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Token> {
        match self.peek() {
            Some(t) if t.tok == want => Ok(self.next().expect("peeked")),
            _ => Err(self.error_here(format!("expected {what}"))),
        }
    }

    fn skip_separators(&mut self) {
        while matches!(self.peek().map(|t| &t.tok), Some(Tok::Newline | Tok::Semi | Tok::Comma)) {
            self.pos += 1;
        }
    }

    fn value(&mut self) -> Result<Value> {
        let tok = self.next().ok_or_else(|| self.error_here("expected a value"))?;
        match tok.tok {
            Tok::Number(v) => Ok(Value::Number(v)),
            Tok::Str(_) => Ok(Value::Text),
            Tok::LBracket => self.matrix().map(Value::Matrix),
            Tok::LBrace => {
                let mut depth = 1;
                while depth > 0 {
                    match self.next().map(|t| t.tok) {
                        Some(Tok::LBrace) => depth += 1,
                        Some(Tok::RBrace) => depth -= 1,
                        Some(_) => {}
                        None => return Err(Error::syntax(tok.line, tok.column, "unterminated cell array")),
                    }
                }
                Ok(Value::Cell)
            }
            _ => Err(Error::syntax(
                tok.line,
                tok.column,
                "expected a number, string or matrix",
            )),
        }
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let mut rows = Vec::new();
        let mut current: Vec<f64> = Vec::new();
        let mut row_start = None;
        loop {
            let Some(tok) = self.next() else {
                let (line, column) = self.end_position();
                return Err(Error::syntax(line, column, "unterminated matrix, expected ']'"));
            };
            match tok.tok {
                Tok::Number(v) => {
                    if current.is_empty() {
                        row_start = Some((tok.line, tok.column));
                    }
                    current.push(v);
                }
                Tok::Comma => {}
                Tok::Semi | Tok::Newline | Tok::RBracket => {
                    if !current.is_empty() {
                        let (l, c) = row_start.take().expect("row has a start");
                        rows.push((l, c, std::mem::take(&mut current)));
                    }
                    if tok.tok == Tok::RBracket {
                        return Ok(Matrix { rows });
                    }
                }
                _ => return Err(Error::syntax(tok.line, tok.column, "unexpected token inside matrix")),
            }
        }
    }
}

#[derive(Default)]
struct RawCase {
    name: Option<String>,
    base_mva: Option<f64>,
    bus: Option<Matrix>,
    gen: Option<Matrix>,
    branch: Option<Matrix>,
}

fn parse_raw(text: &str) -> Result<RawCase> {
    let mut p = Parser {
        tokens: lex(text)?,
        pos: 0,
    };
    let mut raw = RawCase::default();
    loop {
        p.skip_separators();
        let Some(tok) = p.peek().cloned() else { break };
        let Tok::Ident(word) = &tok.tok else {
            return Err(p.error_here("expected a statement"));
        };
        if word == "function" {
            // function mpc = name
            p.next();
            let mut last = None;
            while let Some(t) = p.peek() {
                match &t.tok {
                    Tok::Newline => break,
                    Tok::Ident(s) => last = Some(s.clone()),
                    _ => {}
                }
                p.next();
            }
            raw.name = last;
            continue;
        }
        if word != "mpc" {
            return Err(p.error_here(format!("expected 'mpc.<field> = ...', found '{word}'")));
        }
        p.next();
        p.expect(Tok::Dot, "'.' after mpc")?;
        let field_tok = p.next().ok_or_else(|| p.error_here("expected a field name"))?;
        let Tok::Ident(field) = field_tok.tok else {
            return Err(Error::syntax(field_tok.line, field_tok.column, "expected a field name"));
        };
        p.expect(Tok::Equals, "'='")?;
        let value = p.value()?;
        match (field.as_str(), value) {
            ("baseMVA", Value::Number(v)) => raw.base_mva = Some(v),
            ("bus", Value::Matrix(m)) => raw.bus = Some(m),
            ("gen", Value::Matrix(m)) => raw.gen = Some(m),
            ("branch", Value::Matrix(m)) => raw.branch = Some(m),
            ("baseMVA" | "bus" | "gen" | "branch", _) => {
                return Err(Error::syntax(
                    field_tok.line,
                    field_tok.column,
                    format!("mpc.{field} has the wrong kind of value"),
                ));
            }
            ("version", _) => {}
            (other, _) => log::warn!("ignoring unsupported case field mpc.{other}"),
        }
        match p.peek().map(|t| &t.tok) {
            None | Some(Tok::Semi | Tok::Newline) => {}
            Some(_) => return Err(p.error_here("expected ';' or end of line after value")),
        }
        if matches!(p.peek().map(|t| &t.tok), Some(Tok::Semi)) {
            p.next();
        }
    }
    Ok(raw)
}

fn need_columns(row: &(usize, usize, Vec<f64>), table: &str, count: usize) -> Result<()> {
    if row.2.len() < count {
        return Err(Error::syntax(
            row.0,
            row.1,
            format!("{table} row has {} columns, at least {count} required", row.2.len()),
        ));
    }
    Ok(())
}

fn bus_id(row: &(usize, usize, Vec<f64>), value: f64) -> Result<BusId> {
    if value >= 1.0 && value.fract() == 0.0 && value <= BusId::MAX as f64 {
        Ok(value as BusId)
    } else {
        Err(Error::syntax(
            row.0,
            row.1,
            format!("bus id must be a positive integer, got {value}"),
        ))
    }
}

/// Parses case-file text into a validated [`NetworkModel`].
pub fn parse_case(text: &str) -> Result<NetworkModel> {
    let raw = parse_raw(text)?;
    let base_mva = raw
        .base_mva
        .ok_or_else(|| Error::InvalidCase("missing mpc.baseMVA".into()))?;
    if !(base_mva > 0.0) {
        return Err(Error::InvalidCase(format!("baseMVA must be positive, got {base_mva}")));
    }
    let bus_m = raw.bus.ok_or_else(|| Error::InvalidCase("missing mpc.bus".into()))?;
    let branch_m = raw
        .branch
        .ok_or_else(|| Error::InvalidCase("missing mpc.branch".into()))?;

    let mut buses = Vec::with_capacity(bus_m.rows.len());
    for row in &bus_m.rows {
        need_columns(row, "bus", 10)?;
        let c = &row.2;
        let id = bus_id(row, c[0])?;
        let kind = match c[1] as i64 {
            1 => BusKind::Pq,
            2 => BusKind::Pv,
            3 => BusKind::Slack,
            other => {
                return Err(Error::InvalidBus {
                    bus: id,
                    reason: format!("unsupported bus type {other}"),
                })
            }
        };
        if c[9] < 0.0 {
            return Err(Error::InvalidBus {
                bus: id,
                reason: format!("base kV must be positive, got {}", c[9]),
            });
        }
        buses.push(Bus {
            id,
            kind,
            base_kv: (c[9] > 0.0).then_some(c[9]),
            load_p: c[2] / base_mva,
            load_q: c[3] / base_mva,
            shunt_g: c[4] / base_mva,
            shunt_b: c[5] / base_mva,
            vm: c[7],
            va: c[8].to_radians(),
        });
    }

    let mut generators = Vec::new();
    if let Some(gen_m) = &raw.gen {
        for row in &gen_m.rows {
            need_columns(row, "gen", 8)?;
            let c = &row.2;
            generators.push(Generator {
                bus: bus_id(row, c[0])?,
                p: c[1] / base_mva,
                q: c[2] / base_mva,
                v_set: c[5],
                in_service: c[7] > 0.0,
            });
        }
    }

    let mut branches = Vec::with_capacity(branch_m.rows.len());
    for row in &branch_m.rows {
        need_columns(row, "branch", 11)?;
        let c = &row.2;
        let status = if c[10] > 0.0 {
            BranchStatus::InService
        } else {
            log::info!("dropping out-of-service branch {}-{}", c[0], c[1]);
            BranchStatus::OutOfService
        };
        branches.push(Branch {
            from_bus: bus_id(row, c[0])?,
            to_bus: bus_id(row, c[1])?,
            series_r: c[2],
            series_x: c[3],
            charging_b: c[4],
            tap_ratio: if c[8] == 0.0 { 1.0 } else { c[8] },
            phase_shift: c[9].to_radians(),
            status,
        });
    }

    NetworkModel::new(
        raw.name.unwrap_or_else(|| "case".into()),
        base_mva,
        buses,
        branches,
        generators,
    )
}

/// Finds the file-unit value whose conversion reproduces `stored` exactly,
/// so that parse(serialize(net)) == net.
fn file_value(stored: f64, to_file: impl Fn(f64) -> f64, from_file: impl Fn(f64) -> f64) -> f64 {
    let guess = to_file(stored);
    if from_file(guess) == stored || !guess.is_finite() {
        return guess;
    }
    let (mut up, mut down) = (guess, guess);
    for _ in 0..64 {
        up = up.next_up();
        down = down.next_down();
        if from_file(up) == stored {
            return up;
        }
        if from_file(down) == stored {
            return down;
        }
    }
    guess
}

fn num(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

/// Canonical case text: fixed header, full MATPOWER column layout with
/// default values in the columns this crate does not consume.
pub fn serialize_case(net: &NetworkModel) -> String {
    let base = net.base_mva();
    let pu = |v: f64| num(file_value(v, |x| x * base, |x| x / base));
    let deg = |v: f64| num(file_value(v, f64::to_degrees, f64::to_radians));

    let mut out = String::new();
    let _ = writeln!(out, "function mpc = {}", net.name());
    let _ = writeln!(out, "mpc.version = '2';");
    let _ = writeln!(out, "mpc.baseMVA = {};", num(base));
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin"
    );
    let _ = writeln!(out, "mpc.bus = [");
    for b in net.buses() {
        let kind = match b.kind {
            BusKind::Pq => 1,
            BusKind::Pv => 2,
            BusKind::Slack => 3,
        };
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t1\t{}\t{}\t{}\t1\t1.1\t0.9;",
            b.id,
            kind,
            pu(b.load_p),
            pu(b.load_q),
            pu(b.shunt_g),
            pu(b.shunt_b),
            num(b.vm),
            deg(b.va),
            num(b.base_kv.unwrap_or(0.0)),
        );
    }
    let _ = writeln!(out, "];");
    let _ = writeln!(out);
    let _ = writeln!(out, "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin");
    let _ = writeln!(out, "mpc.gen = [");
    for g in net.generators() {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t0\t0\t{}\t{}\t{}\t0\t0;",
            g.bus,
            pu(g.p),
            pu(g.q),
            num(g.v_set),
            num(base),
            u8::from(g.in_service),
        );
    }
    let _ = writeln!(out, "];");
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax"
    );
    let _ = writeln!(out, "mpc.branch = [");
    for br in net.branches() {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t0\t0\t0\t{}\t{}\t1\t-360\t360;",
            br.from_bus,
            br.to_bus,
            num(br.series_r),
            num(br.series_x),
            num(br.charging_b),
            num(if br.tap_ratio == 1.0 { 0.0 } else { br.tap_ratio }),
            deg(br.phase_shift),
        );
    }
    let _ = writeln!(out, "];");
    out
}
