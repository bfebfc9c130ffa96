//! Checklist predicate language.
//!
//! ```text
//! expr     := or_expr
//! or_expr  := and_expr { "or" and_expr }
//! and_expr := unary { "and" unary }
//! unary    := "not" unary | "(" expr ")" | atom
//! atom     := name "(" arg { "," arg } ")"
//! arg      := string | integer | decimal | name
//! ```
//!
//! Strings use JSON string syntax. `true`, `false` and `null` are literal
//! names. Atoms: `exists/1`, `value_eq/3`, `value_has/2`, `text_matches/2`,
//! `tool_called/2` or `/4`, `count_ge/3`.

use std::collections::BTreeSet;
use std::fmt;

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at offset {offset}: expected {expected}")]
pub struct SyntaxError {
    pub offset: usize,
    pub expected: String,
}

impl SyntaxError {
    fn new(offset: usize, expected: impl Into<String>) -> Self {
        SyntaxError {
            offset,
            expected: expected.into(),
        }
    }
}

/// Literal operand of `value_eq` and `tool_called/4`.
///
/// Numbers keep their source token; equality against artifact values is
/// token equality, never numeric tolerance.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Literal {
    Str(String),
    Int(String),
    Decimal(String),
    Bool(bool),
    Null,
}

impl Literal {
    /// Exact comparison against a JSON value read from an artifact.
    pub fn matches(&self, value: &Value) -> bool {
        match (self, value) {
            (Literal::Str(s), Value::String(v)) => s == v,
            (Literal::Bool(b), Value::Bool(v)) => b == v,
            (Literal::Null, Value::Null) => true,
            (Literal::Int(tok) | Literal::Decimal(tok), Value::Number(n)) => n.to_string() == *tok,
            _ => false,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Str(s) => f.write_str(&quote(s)),
            Literal::Int(t) | Literal::Decimal(t) => f.write_str(t),
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Null => f.write_str("null"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Atom {
    Exists {
        role: String,
    },
    ValueEq {
        role: String,
        pointer: String,
        literal: Literal,
    },
    ValueHas {
        role: String,
        pointer: String,
    },
    TextMatches {
        role: String,
        pattern: String,
    },
    ToolCalled {
        role: String,
        tool: String,
        arg: Option<(String, Literal)>,
    },
    CountGe {
        role: String,
        pointer: String,
        threshold: u64,
    },
}

impl Atom {
    pub fn role(&self) -> &str {
        match self {
            Atom::Exists { role }
            | Atom::ValueEq { role, .. }
            | Atom::ValueHas { role, .. }
            | Atom::TextMatches { role, .. }
            | Atom::ToolCalled { role, .. }
            | Atom::CountGe { role, .. } => role,
        }
    }

    /// Where in the bundle this atom looks, e.g. `result#/reward_info/reward`.
    pub fn source_pointer(&self) -> String {
        match self {
            Atom::Exists { role } => role.clone(),
            Atom::ValueEq { role, pointer, .. }
            | Atom::ValueHas { role, pointer }
            | Atom::CountGe { role, pointer, .. } => format!("{role}#{pointer}"),
            Atom::TextMatches { role, pattern } => format!("{role}~/{pattern}/"),
            Atom::ToolCalled { role, tool, arg } => match arg {
                Some((pointer, _)) => format!("{role}@{tool}#{pointer}"),
                None => format!("{role}@{tool}"),
            },
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Exists { role } => write!(f, "exists({role})"),
            Atom::ValueEq {
                role,
                pointer,
                literal,
            } => write!(f, "value_eq({role}, {}, {literal})", quote(pointer)),
            Atom::ValueHas { role, pointer } => write!(f, "value_has({role}, {})", quote(pointer)),
            Atom::TextMatches { role, pattern } => {
                write!(f, "text_matches({role}, {})", quote(pattern))
            }
            Atom::ToolCalled { role, tool, arg } => match arg {
                None => write!(f, "tool_called({role}, {})", quote(tool)),
                Some((pointer, literal)) => write!(
                    f,
                    "tool_called({role}, {}, {}, {literal})",
                    quote(tool),
                    quote(pointer)
                ),
            },
            Atom::CountGe {
                role,
                pointer,
                threshold,
            } => write!(f, "count_ge({role}, {}, {threshold})", quote(pointer)),
        }
    }
}

/// Predicate tree. `And`/`Or` produced by the parser always have at least
/// two children.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Predicate {
    And(Vec<Predicate>),
    Or(Vec<Predicate>),
    Not(Box<Predicate>),
    Atom(Atom),
}

impl Predicate {
    /// Atoms in pre-order.
    pub fn atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a Atom>) {
        match self {
            Predicate::And(children) | Predicate::Or(children) => {
                children.iter().for_each(|c| c.collect_atoms(out))
            }
            Predicate::Not(child) => child.collect_atoms(out),
            Predicate::Atom(atom) => out.push(atom),
        }
    }

    pub fn roles(&self) -> BTreeSet<&str> {
        self.atoms().into_iter().map(Atom::role).collect()
    }

    fn precedence(&self) -> u8 {
        match self {
            Predicate::Or(_) => 0,
            Predicate::And(_) => 1,
            Predicate::Not(_) | Predicate::Atom(_) => 2,
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, parent_prec: u8) -> fmt::Result {
        // same-level nesting is parenthesized so that printing preserves the tree
        if self.precedence() <= parent_prec && !matches!(self, Predicate::Not(_) | Predicate::Atom(_)) {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::And(children) | Predicate::Or(children) => {
                let sep = if matches!(self, Predicate::And(_)) { " and " } else { " or " };
                for (i, child) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    child.fmt_child(f, self.precedence())?;
                }
                Ok(())
            }
            Predicate::Not(child) => {
                f.write_str("not ")?;
                match **child {
                    Predicate::Not(_) | Predicate::Atom(_) => write!(f, "{child}"),
                    _ => write!(f, "({child})"),
                }
            }
            Predicate::Atom(atom) => write!(f, "{atom}"),
        }
    }
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

/// Checks RFC 6901 pointer syntax.
pub fn is_valid_pointer(pointer: &str) -> bool {
    if pointer.is_empty() {
        return true;
    }
    if !pointer.starts_with('/') {
        return false;
    }
    let bytes = pointer.as_bytes();
    bytes
        .iter()
        .enumerate()
        .all(|(i, &b)| b != b'~' || matches!(bytes.get(i + 1), Some(b'0') | Some(b'1')))
}

pub fn parse_predicate(text: &str) -> Result<Predicate, SyntaxError> {
    let tokens = lex(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: text.len(),
    };
    let expr = parser.or_expr()?;
    match parser.peek() {
        None => Ok(expr),
        Some(tok) => Err(SyntaxError::new(tok.offset, "end of input, `and` or `or`")),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Name(String),
    Str(String),
    Int(String),
    Decimal(String),
    LParen,
    RParen,
    Comma,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    offset: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, SyntaxError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let start = i;
        match b {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'(' => {
                i += 1;
                out.push(Spanned { tok: Tok::LParen, offset: start });
            }
            b')' => {
                i += 1;
                out.push(Spanned { tok: Tok::RParen, offset: start });
            }
            b',' => {
                i += 1;
                out.push(Spanned { tok: Tok::Comma, offset: start });
            }
            b'"' => {
                i += 1;
                loop {
                    match bytes.get(i) {
                        None => return Err(SyntaxError::new(text.len(), "closing `\"`")),
                        Some(b'\\') => i += 2,
                        Some(b'"') => {
                            i += 1;
                            break;
                        }
                        Some(_) => i += 1,
                    }
                }
                let raw = &text[start..i.min(text.len())];
                let s: String = serde_json::from_str(raw)
                    .map_err(|_| SyntaxError::new(start, "a valid string literal"))?;
                out.push(Spanned { tok: Tok::Str(s), offset: start });
            }
            b'-' | b'0'..=b'9' => {
                i += 1;
                while bytes.get(i).is_some_and(u8::is_ascii_digit) {
                    i += 1;
                }
                let digits_start = if b == b'-' { start + 1 } else { start };
                if i == digits_start {
                    return Err(SyntaxError::new(start, "a digit after `-`"));
                }
                let mut decimal = false;
                if bytes.get(i) == Some(&b'.') {
                    i += 1;
                    let frac_start = i;
                    while bytes.get(i).is_some_and(u8::is_ascii_digit) {
                        i += 1;
                    }
                    if i == frac_start {
                        return Err(SyntaxError::new(i, "a digit after `.`"));
                    }
                    decimal = true;
                }
                let token = text[start..i].to_string();
                let tok = if decimal { Tok::Decimal(token) } else { Tok::Int(token) };
                out.push(Spanned { tok, offset: start });
            }
            b if b.is_ascii_alphabetic() || b == b'_' => {
                while bytes
                    .get(i)
                    .is_some_and(|c| c.is_ascii_alphanumeric() || matches!(c, b'_' | b'.' | b'-'))
                {
                    i += 1;
                }
                out.push(Spanned {
                    tok: Tok::Name(text[start..i].to_string()),
                    offset: start,
                });
            }
            _ => return Err(SyntaxError::new(start, "a name, literal, `(`, `)` or `,`")),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
    end: usize,
}

const KEYWORDS: [&str; 3] = ["and", "or", "not"];

impl Parser {
    fn peek(&self) -> Option<&Spanned> {
        self.tokens.get(self.pos)
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.end, |t| t.offset)
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Spanned { tok: Tok::Name(n), .. }) if n == kw)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), SyntaxError> {
        match self.peek() {
            Some(s) if s.tok == tok => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(SyntaxError::new(self.offset(), what)),
        }
    }

    fn or_expr(&mut self) -> Result<Predicate, SyntaxError> {
        let mut items = vec![self.and_expr()?];
        while self.at_keyword("or") {
            self.pos += 1;
            items.push(self.and_expr()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { Predicate::Or(items) })
    }

    fn and_expr(&mut self) -> Result<Predicate, SyntaxError> {
        let mut items = vec![self.unary()?];
        while self.at_keyword("and") {
            self.pos += 1;
            items.push(self.unary()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { Predicate::And(items) })
    }

    fn unary(&mut self) -> Result<Predicate, SyntaxError> {
        if self.at_keyword("not") {
            self.pos += 1;
            return Ok(Predicate::Not(Box::new(self.unary()?)));
        }
        if matches!(self.peek(), Some(Spanned { tok: Tok::LParen, .. })) {
            self.pos += 1;
            let inner = self.or_expr()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(inner);
        }
        self.atom().map(Predicate::Atom)
    }

    fn atom(&mut self) -> Result<Atom, SyntaxError> {
        let offset = self.offset();
        let name = match self.peek() {
            Some(Spanned { tok: Tok::Name(n), .. }) if !KEYWORDS.contains(&n.as_str()) => n.clone(),
            _ => return Err(SyntaxError::new(offset, "`not`, `(` or an atom")),
        };
        self.pos += 1;
        self.expect(Tok::LParen, "`(` after atom name")?;
        let mut args = vec![self.arg()?];
        while matches!(self.peek(), Some(Spanned { tok: Tok::Comma, .. })) {
            self.pos += 1;
            args.push(self.arg()?);
        }
        self.expect(Tok::RParen, "`,` or `)`")?;
        build_atom(&name, offset, args)
    }

    fn arg(&mut self) -> Result<Spanned, SyntaxError> {
        match self.peek() {
            Some(s @ Spanned { tok: Tok::Name(_) | Tok::Str(_) | Tok::Int(_) | Tok::Decimal(_), .. }) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(SyntaxError::new(self.offset(), "an argument")),
        }
    }
}

fn role_arg(arg: &Spanned) -> Result<String, SyntaxError> {
    match &arg.tok {
        Tok::Name(n) if !["true", "false", "null"].contains(&n.as_str()) && !KEYWORDS.contains(&n.as_str()) => {
            Ok(n.clone())
        }
        _ => Err(SyntaxError::new(arg.offset, "an artifact role name")),
    }
}

fn string_arg(arg: &Spanned, what: &str) -> Result<String, SyntaxError> {
    match &arg.tok {
        Tok::Str(s) => Ok(s.clone()),
        _ => Err(SyntaxError::new(arg.offset, what)),
    }
}

fn pointer_arg(arg: &Spanned) -> Result<String, SyntaxError> {
    let p = string_arg(arg, "a JSON pointer string")?;
    if is_valid_pointer(&p) {
        Ok(p)
    } else {
        Err(SyntaxError::new(arg.offset, "a well-formed JSON pointer"))
    }
}

fn literal_arg(arg: &Spanned) -> Result<Literal, SyntaxError> {
    Ok(match &arg.tok {
        Tok::Str(s) => Literal::Str(s.clone()),
        Tok::Int(t) => Literal::Int(t.clone()),
        Tok::Decimal(t) => Literal::Decimal(t.clone()),
        Tok::Name(n) if n == "true" => Literal::Bool(true),
        Tok::Name(n) if n == "false" => Literal::Bool(false),
        Tok::Name(n) if n == "null" => Literal::Null,
        _ => return Err(SyntaxError::new(arg.offset, "a literal")),
    })
}

fn build_atom(name: &str, offset: usize, args: Vec<Spanned>) -> Result<Atom, SyntaxError> {
    let arity = |n: usize| -> Result<(), SyntaxError> {
        if args.len() == n {
            Ok(())
        } else {
            Err(SyntaxError::new(offset, format!("{n} argument(s) for `{name}`")))
        }
    };
    match name {
        "exists" => {
            arity(1)?;
            Ok(Atom::Exists { role: role_arg(&args[0])? })
        }
        "value_eq" => {
            arity(3)?;
            Ok(Atom::ValueEq {
                role: role_arg(&args[0])?,
                pointer: pointer_arg(&args[1])?,
                literal: literal_arg(&args[2])?,
            })
        }
        "value_has" => {
            arity(2)?;
            Ok(Atom::ValueHas {
                role: role_arg(&args[0])?,
                pointer: pointer_arg(&args[1])?,
            })
        }
        "text_matches" => {
            arity(2)?;
            let pattern = string_arg(&args[1], "a pattern string")?;
            crate::evaluator::compile_pattern(&pattern)
                .map_err(|e| SyntaxError::new(args[1].offset, format!("a valid pattern ({e})")))?;
            Ok(Atom::TextMatches {
                role: role_arg(&args[0])?,
                pattern,
            })
        }
        "tool_called" => {
            if args.len() != 2 && args.len() != 4 {
                return Err(SyntaxError::new(offset, "2 or 4 arguments for `tool_called`"));
            }
            let arg = if args.len() == 4 {
                Some((pointer_arg(&args[2])?, literal_arg(&args[3])?))
            } else {
                None
            };
            Ok(Atom::ToolCalled {
                role: role_arg(&args[0])?,
                tool: string_arg(&args[1], "a tool name string")?,
                arg,
            })
        }
        "count_ge" => {
            arity(3)?;
            let threshold = match &args[2].tok {
                Tok::Int(t) => t
                    .parse::<u64>()
                    .map_err(|_| SyntaxError::new(args[2].offset, "a non-negative integer"))?,
                _ => return Err(SyntaxError::new(args[2].offset, "a non-negative integer")),
            };
            Ok(Atom::CountGe {
                role: role_arg(&args[0])?,
                pointer: pointer_arg(&args[1])?,
                threshold,
            })
        }
        _ => Err(SyntaxError::new(
            offset,
            "one of exists, value_eq, value_has, text_matches, tool_called, count_ge",
        )),
    }
}
