//! Tokenizer and recursive-descent parser for the expression language.
//!
//! See the module documentation in [`super`] for the grammar. The parser
//! tracks 1-based line/column positions and reports what it expected at the
//! point of failure.

use super::{BinOp, Expr, UnaryOp, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Eof,
}

impl TokKind {
    fn describe(&self) -> String {
        match self {
            TokKind::Num(n) => format!("number `{n}`"),
            TokKind::Ident(s) => format!("identifier `{s}`"),
            TokKind::Plus => "`+`".into(),
            TokKind::Minus => "`-`".into(),
            TokKind::Star => "`*`".into(),
            TokKind::Slash => "`/`".into(),
            TokKind::Caret => "`^`".into(),
            TokKind::LParen => "`(`".into(),
            TokKind::RParen => "`)`".into(),
            TokKind::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Tok {
    kind: TokKind,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Tok>> {
    let mut toks = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let bytes: Vec<char> = src.chars().collect();
    let mut i = 0usize;
    while i < bytes.len() {
        let c = bytes[i];
        let (tl, tc) = (line, col);
        let mut push = |kind: TokKind| toks.push(Tok { kind, line: tl, col: tc });
        match c {
            '\n' => {
                line += 1;
                col = 1;
                i += 1;
                continue;
            }
            c if c.is_whitespace() => {}
            '+' => push(TokKind::Plus),
            '-' => push(TokKind::Minus),
            '*' => push(TokKind::Star),
            '/' => push(TokKind::Slash),
            '^' => push(TokKind::Caret),
            '(' => push(TokKind::LParen),
            ')' => push(TokKind::RParen),
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == '.') {
                    i += 1;
                }
                // Optional exponent part.
                if i < bytes.len() && (bytes[i] == 'e' || bytes[i] == 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == '+' || bytes[j] == '-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = bytes[start..i].iter().collect();
                let value: f64 = text.parse().map_err(|_| Error::Syntax {
                    line: tl,
                    col: tc,
                    expected: vec!["number".into()],
                    found: format!("malformed number `{text}`"),
                })?;
                toks.push(Tok { kind: TokKind::Num(value), line: tl, col: tc });
                col += i - start;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_') {
                    i += 1;
                }
                let text: String = bytes[start..i].iter().collect();
                toks.push(Tok { kind: TokKind::Ident(text), line: tl, col: tc });
                col += i - start;
                continue;
            }
            other => {
                return Err(Error::Syntax {
                    line: tl,
                    col: tc,
                    expected: vec![
                        "number".into(),
                        "identifier".into(),
                        "operator".into(),
                        "`(`".into(),
                    ],
                    found: format!("`{other}`"),
                });
            }
        }
        i += 1;
        col += 1;
    }
    toks.push(Tok { kind: TokKind::Eof, line, col });
    Ok(toks)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

const ATOM_EXPECTED: &[&str] = &["number", "identifier", "`(`", "`-`"];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> Error {
        let t = self.peek();
        Error::Syntax {
            line: t.line,
            col: t.col,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: t.kind.describe(),
        }
    }

    fn expect(&mut self, kind: TokKind, expected: &str) -> Result<()> {
        if self.peek().kind == kind {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&[expected]))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().kind {
                TokKind::Plus => BinOp::Add,
                TokKind::Minus => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek().kind {
                TokKind::Star => BinOp::Mul,
                TokKind::Slash => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr> {
        if self.peek().kind == TokKind::Minus {
            self.bump();
            let inner = self.factor()?;
            // Fold a literal negation so `-0.5` is a constant, which keeps
            // printing and reparsing structurally stable.
            return Ok(match inner {
                Expr::Const(c) => Expr::Const(-c),
                e => Expr::Unary(UnaryOp::Neg, Box::new(e)),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek().kind == TokKind::Caret {
            self.bump();
            // Right associative; the exponent may carry unary minus.
            let exponent = self.factor()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek().kind.clone() {
            TokKind::Num(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            TokKind::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(TokKind::RParen, "`)`")?;
                Ok(e)
            }
            TokKind::Ident(name) => {
                let t = self.bump();
                match name.as_str() {
                    "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                    "e" => Ok(Expr::Const(std::f64::consts::E)),
                    "sin" | "cos" | "exp" | "sqrt" | "abs" => {
                        self.expect(TokKind::LParen, "`(`")?;
                        let arg = self.expr()?;
                        self.expect(TokKind::RParen, "`)`")?;
                        let op = match name.as_str() {
                            "sin" => UnaryOp::Sin,
                            "cos" => UnaryOp::Cos,
                            "exp" => UnaryOp::Exp,
                            "sqrt" => UnaryOp::Sqrt,
                            _ => UnaryOp::Abs,
                        };
                        Ok(Expr::Unary(op, Box::new(arg)))
                    }
                    _ => {
                        if let Some(v) = variable(&name) {
                            Ok(Expr::Var(v))
                        } else {
                            Err(Error::UnknownIdentifier {
                                name,
                                line: t.line,
                                col: t.col,
                            })
                        }
                    }
                }
            }
            _ => Err(self.error(ATOM_EXPECTED)),
        }
    }
}

/// Recognize `x1..x9` and `a1..a9`.
fn variable(name: &str) -> Option<Var> {
    let mut chars = name.chars();
    let head = chars.next()?;
    let digit = chars.next()?;
    if chars.next().is_some() {
        return None;
    }
    let idx = digit.to_digit(10)? as usize;
    if !(1..=9).contains(&idx) {
        return None;
    }
    match head {
        'x' => Some(Var::State(idx - 1)),
        'a' => Some(Var::Control(idx - 1)),
        _ => None,
    }
}

pub(super) fn parse(src: &str) -> Result<Expr> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    if p.peek().kind != TokKind::Eof {
        return Err(p.error(&["operator", "end of input"]));
    }
    Ok(e)
}
