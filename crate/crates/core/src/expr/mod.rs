//! Scalar expression language for dynamics, running costs and interface
//! functions.
//!
//! Expressions are closed-form formulas over up to nine state components
//! `x1..x9` and nine control components `a1..a9`, with the constants `pi` and
//! `e`, the functions `sin`, `cos`, `exp`, `sqrt`, `abs`, and the operators
//! `+ - * / ^` plus unary minus.
//!
//! # Grammar
//!
//! ```text
//! expr    = term   { ("+" | "-") term } ;
//! term    = factor { ("*" | "/") factor } ;
//! factor  = "-" factor | power ;
//! power   = atom [ "^" factor ] ;          (* right associative *)
//! atom    = number
//!         | name                            (* x1..x9, a1..a9, pi, e *)
//!         | function "(" expr ")"           (* sin cos exp sqrt abs *)
//!         | "(" expr ")" ;
//! number  = digits [ "." [digits] ] [ ("e"|"E") ["+"|"-"] digits ]
//!         | "." digits [ ("e"|"E") ["+"|"-"] digits ] ;
//! ```
//!
//! Precedence, tightest first: `^` (right associative), unary `-`, `*` `/`,
//! `+` `-`. So `-x1^2` is `-(x1^2)` and `2^3^2` is `2^(3^2)`.
//!
//! # Semantics
//!
//! Evaluation is plain `f64` arithmetic with no silent NaN: division by zero,
//! even roots of negatives, and any operation producing NaN raise
//! [`Error::Eval`]. Differentiation is symbolic on the tree (exact, not finite
//! differences); the derivative of `abs` errs at 0 rather than picking a
//! subgradient, and `u ^ v` is differentiable when the exponent or the base is
//! variable-free (the language has no `ln`, so the fully general power rule is
//! rejected). No algebraic simplification is performed beyond folding
//! variable-free subtrees and dropping neutral elements while building
//! derivative trees.

mod parse;

use crate::error::{Error, Result};
use std::fmt;

/// A state or control variable reference (0-based component index).
///
/// `Var::State(0)` is `x1`, `Var::Control(2)` is `a3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    State(usize),
    Control(usize),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::State(i) => write!(f, "x{}", i + 1),
            Var::Control(i) => write!(f, "a{}", i + 1),
        }
    }
}

/// Unary operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

/// Binary operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    /// Parse an expression from source text.
    ///
    /// Errors carry 1-based line/column positions, the token found, and the
    /// set of tokens that would have been accepted.
    pub fn parse(src: &str) -> Result<Expr> {
        parse::parse(src)
    }

    /// Evaluate at the given state and control vectors.
    pub fn eval(&self, x: &[f64], a: &[f64]) -> Result<f64> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(Var::State(i)) => *x.get(*i).ok_or_else(|| {
                Error::eval(format!(
                    "state x{} referenced but only {} state components supplied",
                    i + 1,
                    x.len()
                ))
            })?,
            Expr::Var(Var::Control(i)) => *a.get(*i).ok_or_else(|| {
                Error::eval(format!(
                    "control a{} referenced but only {} control components supplied",
                    i + 1,
                    a.len()
                ))
            })?,
            Expr::Unary(op, e) => {
                let u = e.eval(x, a)?;
                match op {
                    UnaryOp::Neg => -u,
                    UnaryOp::Sin => u.sin(),
                    UnaryOp::Cos => u.cos(),
                    UnaryOp::Exp => u.exp(),
                    UnaryOp::Sqrt => {
                        if u < 0.0 {
                            return Err(Error::eval(format!("square root of negative ({u:e})")));
                        }
                        u.sqrt()
                    }
                    UnaryOp::Abs => u.abs(),
                }
            }
            Expr::Binary(op, l, r) => {
                let lv = l.eval(x, a)?;
                let rv = r.eval(x, a)?;
                match op {
                    BinOp::Add => lv + rv,
                    BinOp::Sub => lv - rv,
                    BinOp::Mul => lv * rv,
                    BinOp::Div => {
                        if rv == 0.0 {
                            return Err(Error::eval("division by zero"));
                        }
                        lv / rv
                    }
                    BinOp::Pow => lv.powf(rv),
                }
            }
        };
        if v.is_nan() {
            return Err(Error::eval(format!("NaN produced while evaluating `{self}`")));
        }
        Ok(v)
    }

    /// Exact symbolic derivative with respect to one variable.
    ///
    /// The returned tree may still fail at evaluation time (for example the
    /// derivative of `abs(u)` at `u = 0`, or of `sqrt(u)` at `u = 0`).
    pub fn diff(&self, v: Var) -> Result<Expr> {
        use Expr::*;
        Ok(match self {
            Const(_) => Const(0.0),
            Var(w) => Const(if *w == v { 1.0 } else { 0.0 }),
            Unary(op, e) => {
                let de = e.diff(v)?;
                match op {
                    UnaryOp::Neg => neg(de),
                    UnaryOp::Sin => mul(cos((**e).clone()), de),
                    UnaryOp::Cos => neg(mul(sin((**e).clone()), de)),
                    UnaryOp::Exp => mul(exp((**e).clone()), de),
                    // d sqrt(u) = u' / (2 sqrt(u)); errs at u = 0 via division by zero.
                    UnaryOp::Sqrt => div(de, mul(Const(2.0), sqrt((**e).clone()))),
                    // d abs(u) = sign(u) u' with sign written as u/abs(u), which
                    // evaluates to NaN (hence an error) exactly at u = 0.
                    UnaryOp::Abs => mul(div((**e).clone(), abs((**e).clone())), de),
                }
            }
            Binary(op, l, r) => {
                match op {
                    BinOp::Add => add(l.diff(v)?, r.diff(v)?),
                    BinOp::Sub => sub(l.diff(v)?, r.diff(v)?),
                    BinOp::Mul => add(
                        mul(l.diff(v)?, (**r).clone()),
                        mul((**l).clone(), r.diff(v)?),
                    ),
                    BinOp::Div => div(
                        sub(
                            mul(l.diff(v)?, (**r).clone()),
                            mul((**l).clone(), r.diff(v)?),
                        ),
                        mul((**r).clone(), (**r).clone()),
                    ),
                    BinOp::Pow => {
                        if r.is_constant() {
                            // Power rule: d(u^c) = c u^(c-1) u'. Valid for
                            // negative bases at integer exponents, which the
                            // general formula (via ln) would not be.
                            mul(
                                mul(
                                    (**r).clone(),
                                    pow((**l).clone(), sub((**r).clone(), Const(1.0))),
                                ),
                                l.diff(v)?,
                            )
                        } else if l.is_constant() {
                            // d(c^v) = c^v ln(c) v', with ln(c) folded to a number.
                            let c = l.eval(&[], &[])?;
                            if c <= 0.0 {
                                return Err(Error::UnsupportedDerivative(format!(
                                    "exponential with non-positive base {c}"
                                )));
                            }
                            mul(mul(pow((**l).clone(), (**r).clone()), Const(c.ln())), r.diff(v)?)
                        } else {
                            return Err(Error::UnsupportedDerivative(
                                "power with variable base and variable exponent \
                                 (the language has no ln)"
                                    .into(),
                            ));
                        }
                    }
                }
            }
        })
    }

    /// Exact gradient with respect to the state components `x1..xN` where
    /// `N = x.len()`, evaluated at `(x, a)`.
    pub fn grad_state(&self, x: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        (0..x.len())
            .map(|i| self.diff(Var::State(i))?.eval(x, a))
            .collect()
    }

    /// Exact gradient with respect to the control components `a1..aM` where
    /// `M = a.len()`, evaluated at `(x, a)`.
    pub fn grad_control(&self, x: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        (0..a.len())
            .map(|i| self.diff(Var::Control(i))?.eval(x, a))
            .collect()
    }

    /// True if the tree references no variables at all.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Const(_) => true,
            Expr::Var(_) => false,
            Expr::Unary(_, e) => e.is_constant(),
            Expr::Binary(_, l, r) => l.is_constant() && r.is_constant(),
        }
    }

    /// True if any state variable appears in the tree.
    pub fn references_state(&self) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => matches!(v, Var::State(_)),
            Expr::Unary(_, e) => e.references_state(),
            Expr::Binary(_, l, r) => l.references_state() || r.references_state(),
        }
    }

    /// True if any control variable appears in the tree.
    pub fn references_control(&self) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => matches!(v, Var::Control(_)),
            Expr::Unary(_, e) => e.references_control(),
            Expr::Binary(_, l, r) => l.references_control() || r.references_control(),
        }
    }

    /// Largest state index referenced, if any (0-based).
    pub fn max_state_index(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(Var::State(i)) => Some(*i),
            Expr::Var(Var::Control(_)) => None,
            Expr::Unary(_, e) => e.max_state_index(),
            Expr::Binary(_, l, r) => l.max_state_index().max(r.max_state_index()),
        }
    }

    /// Largest control index referenced, if any (0-based).
    pub fn max_control_index(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(Var::Control(i)) => Some(*i),
            Expr::Var(Var::State(_)) => None,
            Expr::Unary(_, e) => e.max_control_index(),
            Expr::Binary(_, l, r) => l.max_control_index().max(r.max_control_index()),
        }
    }

    /// True if an `abs` node appears anywhere in the tree.
    pub fn contains_abs(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(_) => false,
            Expr::Unary(op, e) => *op == UnaryOp::Abs || e.contains_abs(),
            Expr::Binary(_, l, r) => l.contains_abs() || r.contains_abs(),
        }
    }

    /// Display precedence used for parenthesization. Negative constants count
    /// as unary-minus level because they print with a leading `-`.
    fn prec(&self) -> u8 {
        match self {
            Expr::Const(c) if *c < 0.0 => 3,
            Expr::Const(_) | Expr::Var(_) => 5,
            Expr::Unary(UnaryOp::Neg, _) => 3,
            Expr::Unary(_, _) => 5,
            Expr::Binary(BinOp::Add | BinOp::Sub, _, _) => 1,
            Expr::Binary(BinOp::Mul | BinOp::Div, _, _) => 2,
            Expr::Binary(BinOp::Pow, _, _) => 4,
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.prec() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    /// Prints a form that reparses to a structurally equal tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Unary(UnaryOp::Neg, e) => {
                write!(f, "-")?;
                e.fmt_child(f, 3)
            }
            Expr::Unary(op, e) => {
                let name = match op {
                    UnaryOp::Sin => "sin",
                    UnaryOp::Cos => "cos",
                    UnaryOp::Exp => "exp",
                    UnaryOp::Sqrt => "sqrt",
                    UnaryOp::Abs => "abs",
                    UnaryOp::Neg => unreachable!(),
                };
                write!(f, "{name}({e})")
            }
            Expr::Binary(op, l, r) => {
                let (sym, lp, rp) = match op {
                    BinOp::Add => ("+", 1, 2),
                    BinOp::Sub => ("-", 1, 2),
                    BinOp::Mul => ("*", 2, 3),
                    BinOp::Div => ("/", 2, 3),
                    // Left operand of ^ must be atomic (x^y^z is right
                    // associative); the right operand may carry unary minus.
                    BinOp::Pow => ("^", 5, 3),
                };
                l.fmt_child(f, lp)?;
                write!(f, "{sym}")?;
                r.fmt_child(f, rp)
            }
        }
    }
}

// ---- smart constructors -------------------------------------------------
//
// Used when building derivative trees: fold variable-free subtrees and drop
// neutral elements so repeated differentiation does not explode the tree.
// Parse trees are built verbatim (no folding besides literal negation).

fn fold2(op: BinOp, l: Expr, r: Expr) -> Expr {
    if let (Expr::Const(a), Expr::Const(b)) = (&l, &r) {
        let v = match op {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => {
                if *b == 0.0 {
                    return Expr::Binary(op, Box::new(l), Box::new(r));
                }
                a / b
            }
            BinOp::Pow => a.powf(*b),
        };
        if v.is_finite() {
            return Expr::Const(v);
        }
    }
    Expr::Binary(op, Box::new(l), Box::new(r))
}

pub(crate) fn add(l: Expr, r: Expr) -> Expr {
    match (&l, &r) {
        (Expr::Const(c), _) if *c == 0.0 => r,
        (_, Expr::Const(c)) if *c == 0.0 => l,
        _ => fold2(BinOp::Add, l, r),
    }
}

pub(crate) fn sub(l: Expr, r: Expr) -> Expr {
    match (&l, &r) {
        (_, Expr::Const(c)) if *c == 0.0 => l,
        _ => fold2(BinOp::Sub, l, r),
    }
}

pub(crate) fn mul(l: Expr, r: Expr) -> Expr {
    match (&l, &r) {
        (Expr::Const(c), _) | (_, Expr::Const(c)) if *c == 0.0 => Expr::Const(0.0),
        (Expr::Const(c), _) if *c == 1.0 => r,
        (_, Expr::Const(c)) if *c == 1.0 => l,
        _ => fold2(BinOp::Mul, l, r),
    }
}

pub(crate) fn div(l: Expr, r: Expr) -> Expr {
    match (&l, &r) {
        (Expr::Const(c), _) if *c == 0.0 => Expr::Const(0.0),
        (_, Expr::Const(c)) if *c == 1.0 => l,
        _ => fold2(BinOp::Div, l, r),
    }
}

pub(crate) fn pow(l: Expr, r: Expr) -> Expr {
    match &r {
        Expr::Const(c) if *c == 1.0 => l,
        Expr::Const(c) if *c == 0.0 => Expr::Const(1.0),
        _ => fold2(BinOp::Pow, l, r),
    }
}

pub(crate) fn neg(e: Expr) -> Expr {
    match e {
        Expr::Const(c) => Expr::Const(-c),
        e => Expr::Unary(UnaryOp::Neg, Box::new(e)),
    }
}

pub(crate) fn sin(e: Expr) -> Expr {
    Expr::Unary(UnaryOp::Sin, Box::new(e))
}

pub(crate) fn cos(e: Expr) -> Expr {
    Expr::Unary(UnaryOp::Cos, Box::new(e))
}

pub(crate) fn exp(e: Expr) -> Expr {
    Expr::Unary(UnaryOp::Exp, Box::new(e))
}

pub(crate) fn sqrt(e: Expr) -> Expr {
    Expr::Unary(UnaryOp::Sqrt, Box::new(e))
}

pub(crate) fn abs(e: Expr) -> Expr {
    Expr::Unary(UnaryOp::Abs, Box::new(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: &[f64], a: &[f64]) -> f64 {
        Expr::parse(src).unwrap().eval(x, a).unwrap()
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_eq!(ev("1+2*3", &[], &[]), 7.0);
        assert_eq!(ev("(1+2)*3", &[], &[]), 9.0);
        assert_eq!(ev("2^3^2", &[], &[]), 512.0); // right associative
        assert_eq!(ev("-2^2", &[], &[]), -4.0); // ^ binds tighter than unary -
        assert_eq!(ev("2^-1", &[], &[]), 0.5);
        assert_eq!(ev("6/3/2", &[], &[]), 1.0); // left associative
        assert_eq!(ev("10-3-2", &[], &[]), 5.0);
        assert_eq!(ev("2*-3", &[], &[]), -6.0);
    }

    #[test]
    fn variables_and_constants() {
        assert_eq!(ev("x1+2*a1", &[3.0], &[4.0]), 11.0);
        assert_eq!(ev("x2", &[1.0, 5.0], &[]), 5.0);
        assert!((ev("pi", &[], &[]) - std::f64::consts::PI).abs() < 1e-15);
        assert!((ev("e", &[], &[]) - std::f64::consts::E).abs() < 1e-15);
        assert!((ev("cos(a1)", &[], &[0.5]) - 0.5f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn eval_errors() {
        let e = Expr::parse("x1/(x2-x2)").unwrap();
        assert!(matches!(e.eval(&[1.0, 2.0], &[]), Err(Error::Eval(_))));
        let e = Expr::parse("sqrt(x1)").unwrap();
        assert!(matches!(e.eval(&[-1.0], &[]), Err(Error::Eval(_))));
        // powf(-2, 0.5) is NaN and must surface as an error.
        let e = Expr::parse("x1^0.5").unwrap();
        assert!(matches!(e.eval(&[-2.0], &[]), Err(Error::Eval(_))));
        // Referencing a component beyond the supplied vectors is an error.
        let e = Expr::parse("x3").unwrap();
        assert!(e.eval(&[1.0, 2.0], &[]).is_err());
    }

    #[test]
    fn parse_errors_carry_positions() {
        match Expr::parse("x10") {
            Err(Error::UnknownIdentifier { name, line, col }) => {
                assert_eq!(name, "x10");
                assert_eq!((line, col), (1, 1));
            }
            other => panic!("expected unknown identifier, got {other:?}"),
        }
        match Expr::parse("1 +") {
            Err(Error::Syntax { line, col, expected, .. }) => {
                assert_eq!((line, col), (1, 4));
                assert!(!expected.is_empty());
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
        match Expr::parse("1\n+ (2*") {
            Err(Error::Syntax { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected syntax error, got {other:?}"),
        }
        assert!(matches!(Expr::parse("sin 3"), Err(Error::Syntax { .. })));
        assert!(matches!(Expr::parse("foo(3)"), Err(Error::UnknownIdentifier { .. })));
        assert!(matches!(Expr::parse(""), Err(Error::Syntax { .. })));
        assert!(matches!(Expr::parse("(1+2"), Err(Error::Syntax { .. })));
    }

    #[test]
    fn derivative_values() {
        let e = Expr::parse("x1^2 + sin(x2)*a1").unwrap();
        let d1 = e.diff(Var::State(0)).unwrap();
        let d2 = e.diff(Var::State(1)).unwrap();
        let da = e.diff(Var::Control(0)).unwrap();
        let (x, a) = ([1.5, 0.7], [2.0]);
        assert!((d1.eval(&x, &a).unwrap() - 3.0).abs() < 1e-14);
        assert!((d2.eval(&x, &a).unwrap() - 0.7f64.cos() * 2.0).abs() < 1e-14);
        assert!((da.eval(&x, &a).unwrap() - 0.7f64.sin()).abs() < 1e-14);
    }

    #[test]
    fn derivative_of_quotient_and_sqrt() {
        let e = Expr::parse("x1/sqrt(x1^2+1)").unwrap();
        let d = e.diff(Var::State(0)).unwrap();
        // d/dx x/sqrt(x^2+1) = 1/(x^2+1)^(3/2)
        let x = 0.8f64;
        let want = 1.0 / (x * x + 1.0).powf(1.5);
        assert!((d.eval(&[x], &[]).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn abs_derivative_errors_at_zero() {
        let e = Expr::parse("abs(x1)").unwrap();
        let d = e.diff(Var::State(0)).unwrap();
        assert_eq!(d.eval(&[2.0], &[]).unwrap(), 1.0);
        assert_eq!(d.eval(&[-2.0], &[]).unwrap(), -1.0);
        assert!(d.eval(&[0.0], &[]).is_err());
    }

    #[test]
    fn power_rule_handles_negative_base_integer_exponent() {
        let e = Expr::parse("x1^3").unwrap();
        let d = e.diff(Var::State(0)).unwrap();
        assert!((d.eval(&[-2.0], &[]).unwrap() - 12.0).abs() < 1e-12);
    }

    #[test]
    fn variable_base_and_exponent_rejected() {
        let e = Expr::parse("x1^a1").unwrap();
        assert!(matches!(
            e.diff(Var::State(0)),
            Err(Error::UnsupportedDerivative(_))
        ));
        // Constant base with variable exponent is fine.
        let e = Expr::parse("2^a1").unwrap();
        let d = e.diff(Var::Control(0)).unwrap();
        let want = 2f64.powf(1.5) * 2f64.ln();
        assert!((d.eval(&[], &[1.5]).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn grad_state_matches_componentwise_diff() {
        let e = Expr::parse("x1*x2 + exp(x2)").unwrap();
        let g = e.grad_state(&[2.0, 0.3], &[]).unwrap();
        assert!((g[0] - 0.3).abs() < 1e-14);
        assert!((g[1] - (2.0 + 0.3f64.exp())).abs() < 1e-14);
    }

    #[test]
    fn display_round_trips() {
        for src in [
            "x1+x2*a1",
            "-x1^2",
            "(x1+x2)^2",
            "x1-(x2-x3)",
            "sin(cos(x1))",
            "2^-3",
            "x1/x2/x3",
            "abs(x1)*sqrt(x2)",
            "1.5e-3*x1",
        ] {
            let e = Expr::parse(src).unwrap();
            let printed = e.to_string();
            let back = Expr::parse(&printed).unwrap();
            assert_eq!(e, back, "round trip failed: {src} -> {printed}");
        }
    }

    #[test]
    fn introspection() {
        let e = Expr::parse("x2*a1 + abs(x1)").unwrap();
        assert!(e.references_state());
        assert!(e.references_control());
        assert!(e.contains_abs());
        assert_eq!(e.max_state_index(), Some(1));
        assert_eq!(e.max_control_index(), Some(0));
        assert!(Expr::parse("10").unwrap().is_constant());
        assert!(!Expr::parse("10").unwrap().contains_abs());
    }
}
