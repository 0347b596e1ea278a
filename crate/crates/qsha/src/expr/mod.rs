//! Expression language for ODE right-hand sides and reset maps.
//!
//! Expressions are immutable trees over named variables, quantized variable
//! reads, and the simulation time `t`. They support direct numeric
//! evaluation ([`evaluate`]) and truncated power-series expansion
//! ([`series::taylor_series`]), which is what the second-order quantized
//! step solver consumes.

mod parse;
pub mod series;

pub use parse::parse_expression;
pub use series::{integrate_series, taylor_series, SeriesPolynomial};

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Variable valuation used by [`evaluate`].
pub type Env = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq)]
pub enum Expression {
    Const(f64),
    /// Plain variable read, bound through the evaluation environment.
    Var(String),
    /// Read of the quantized signal of a state variable. Numerically it
    /// binds to the same entry of the environment as [`Expression::Var`];
    /// the distinction only matters to series expansion, where quantized
    /// reads follow their linear quantization signal.
    QuantizedVar(String),
    /// The local simulation time `t`.
    Time,
    Neg(Box<Expression>),
    Add(Box<Expression>, Box<Expression>),
    Sub(Box<Expression>, Box<Expression>),
    Mul(Box<Expression>, Box<Expression>),
    Div(Box<Expression>, Box<Expression>),
    /// Integer power with a non-negative exponent.
    Pow(Box<Expression>, u32),
    Sin(Box<Expression>),
    Cos(Box<Expression>),
    Tan(Box<Expression>),
    Exp(Box<Expression>),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("exponent must be a non-negative integer literal")]
    NonIntegerExponent,
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("expression evaluated to a non-finite value")]
    NonFinite,
    #[error("series division requires a nonzero constant term")]
    SeriesDivision,
}

impl Expression {
    /// Wraps a numeric literal, folding a negative sign into an explicit
    /// `Neg` node so that printing and reparsing agree.
    pub fn number(value: f64) -> Expression {
        if value.is_sign_negative() && value != 0.0 {
            Expression::Neg(Box::new(Expression::Const(-value)))
        } else {
            Expression::Const(value)
        }
    }

    /// Replaces every plain `Var` read of a declared state variable with a
    /// `QuantizedVar` read. Names not in `state_vars` are left alone.
    pub fn quantize_reads(&self, state_vars: &[String]) -> Expression {
        use Expression::*;
        let rec = |e: &Expression| Box::new(e.quantize_reads(state_vars));
        match self {
            Var(name) if state_vars.iter().any(|v| v == name) => QuantizedVar(name.clone()),
            Const(_) | Var(_) | QuantizedVar(_) | Time => self.clone(),
            Neg(e) => Neg(rec(e)),
            Add(a, b) => Add(rec(a), rec(b)),
            Sub(a, b) => Sub(rec(a), rec(b)),
            Mul(a, b) => Mul(rec(a), rec(b)),
            Div(a, b) => Div(rec(a), rec(b)),
            Pow(e, k) => Pow(rec(e), *k),
            Sin(e) => Sin(rec(e)),
            Cos(e) => Cos(rec(e)),
            Tan(e) => Tan(rec(e)),
            Exp(e) => Exp(rec(e)),
        }
    }

    /// Inverse of [`Expression::quantize_reads`]: turns every quantized
    /// read back into a plain variable read.
    pub fn strip_quantized(&self) -> Expression {
        use Expression::*;
        let rec = |e: &Expression| Box::new(e.strip_quantized());
        match self {
            QuantizedVar(name) => Var(name.clone()),
            Const(_) | Var(_) | Time => self.clone(),
            Neg(e) => Neg(rec(e)),
            Add(a, b) => Add(rec(a), rec(b)),
            Sub(a, b) => Sub(rec(a), rec(b)),
            Mul(a, b) => Mul(rec(a), rec(b)),
            Div(a, b) => Div(rec(a), rec(b)),
            Pow(e, k) => Pow(rec(e), *k),
            Sin(e) => Sin(rec(e)),
            Cos(e) => Cos(rec(e)),
            Tan(e) => Tan(rec(e)),
            Exp(e) => Exp(rec(e)),
        }
    }

    /// Substitutes named constants by numeric literals.
    pub fn substitute_constants(&self, constants: &BTreeMap<String, f64>) -> Expression {
        use Expression::*;
        let rec = |e: &Expression| Box::new(e.substitute_constants(constants));
        match self {
            Var(name) => match constants.get(name) {
                Some(v) => Expression::number(*v),
                None => self.clone(),
            },
            Const(_) | QuantizedVar(_) | Time => self.clone(),
            Neg(e) => Neg(rec(e)),
            Add(a, b) => Add(rec(a), rec(b)),
            Sub(a, b) => Sub(rec(a), rec(b)),
            Mul(a, b) => Mul(rec(a), rec(b)),
            Div(a, b) => Div(rec(a), rec(b)),
            Pow(e, k) => Pow(rec(e), *k),
            Sin(e) => Sin(rec(e)),
            Cos(e) => Cos(rec(e)),
            Tan(e) => Tan(rec(e)),
            Exp(e) => Exp(rec(e)),
        }
    }

    /// Collects the names of every variable read (plain or quantized).
    pub fn variables(&self) -> Vec<String> {
        fn walk(e: &Expression, out: &mut Vec<String>) {
            use Expression::*;
            match e {
                Var(n) | QuantizedVar(n) => {
                    if !out.iter().any(|v| v == n) {
                        out.push(n.clone());
                    }
                }
                Const(_) | Time => {}
                Neg(a) | Sin(a) | Cos(a) | Tan(a) | Exp(a) | Pow(a, _) => walk(a, out),
                Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }
}

/// Evaluates an expression at time `t` under `env`.
///
/// Quantized reads bind to the same entries as plain reads; hysteresis is
/// the caller's concern. Division by zero and non-finite results are
/// reported as errors rather than propagated as NaN/inf.
pub fn evaluate(e: &Expression, env: &Env, t: f64) -> Result<f64, ExprError> {
    let v = eval_inner(e, env, t)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ExprError::NonFinite)
    }
}

fn eval_inner(e: &Expression, env: &Env, t: f64) -> Result<f64, ExprError> {
    use Expression::*;
    Ok(match e {
        Const(c) => *c,
        Var(n) | QuantizedVar(n) => *env
            .get(n)
            .ok_or_else(|| ExprError::UnboundVariable(n.clone()))?,
        Time => t,
        Neg(a) => -eval_inner(a, env, t)?,
        Add(a, b) => eval_inner(a, env, t)? + eval_inner(b, env, t)?,
        Sub(a, b) => eval_inner(a, env, t)? - eval_inner(b, env, t)?,
        Mul(a, b) => eval_inner(a, env, t)? * eval_inner(b, env, t)?,
        Div(a, b) => {
            let den = eval_inner(b, env, t)?;
            if den == 0.0 {
                return Err(ExprError::DivisionByZero);
            }
            eval_inner(a, env, t)? / den
        }
        Pow(a, k) => eval_inner(a, env, t)?.powi(*k as i32),
        Sin(a) => eval_inner(a, env, t)?.sin(),
        Cos(a) => eval_inner(a, env, t)?.cos(),
        Tan(a) => eval_inner(a, env, t)?.tan(),
        Exp(a) => eval_inner(a, env, t)?.exp(),
    })
}

// Precedence levels used by the printer; must mirror the parser.
const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn precedence(e: &Expression) -> u8 {
    use Expression::*;
    match e {
        Add(..) | Sub(..) => PREC_ADD,
        Mul(..) | Div(..) => PREC_MUL,
        Neg(_) => PREC_NEG,
        Pow(..) => PREC_POW,
        Const(_) | Var(_) | QuantizedVar(_) | Time | Sin(_) | Cos(_) | Tan(_) | Exp(_) => PREC_ATOM,
    }
}

fn fmt_prec(e: &Expression, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    use Expression::*;
    let this = precedence(e);
    if this < min {
        write!(f, "(")?;
    }
    match e {
        Const(c) => write!(f, "{c}")?,
        Var(n) | QuantizedVar(n) => write!(f, "{n}")?,
        Time => write!(f, "t")?,
        Neg(a) => {
            write!(f, "-")?;
            fmt_prec(a, PREC_NEG, f)?;
        }
        Add(a, b) => {
            fmt_prec(a, PREC_ADD, f)?;
            write!(f, " + ")?;
            fmt_prec(b, PREC_ADD + 1, f)?;
        }
        Sub(a, b) => {
            fmt_prec(a, PREC_ADD, f)?;
            write!(f, " - ")?;
            fmt_prec(b, PREC_ADD + 1, f)?;
        }
        Mul(a, b) => {
            fmt_prec(a, PREC_MUL, f)?;
            write!(f, "*")?;
            fmt_prec(b, PREC_MUL + 1, f)?;
        }
        Div(a, b) => {
            fmt_prec(a, PREC_MUL, f)?;
            write!(f, "/")?;
            fmt_prec(b, PREC_MUL + 1, f)?;
        }
        Pow(a, k) => {
            fmt_prec(a, PREC_ATOM, f)?;
            write!(f, "^{k}")?;
        }
        Sin(a) => write!(f, "sin({a})")?,
        Cos(a) => write!(f, "cos({a})")?,
        Tan(a) => write!(f, "tan({a})")?,
        Exp(a) => write!(f, "exp({a})")?,
    }
    if this < min {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_prec(self, 0, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, f64)]) -> Env {
        pairs.iter().map(|(n, v)| (n.to_string(), *v)).collect()
    }

    #[test]
    fn evaluate_cos_flow() {
        // cos(theta)*v1 at theta=0, v1=30
        let e = parse_expression("cos(theta)*v1").unwrap();
        let v = evaluate(&e, &env(&[("theta", 0.0), ("v1", 30.0)]), 0.0).unwrap();
        assert_eq!(v, 30.0);
    }

    #[test]
    fn evaluate_sin_flow_is_zero() {
        let e = parse_expression("sin(theta)*v1").unwrap();
        let v = evaluate(&e, &env(&[("theta", 0.0), ("v1", 30.0)]), 0.0).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn division_by_zero_is_an_error() {
        let e = parse_expression("1/x").unwrap();
        assert_eq!(
            evaluate(&e, &env(&[("x", 0.0)]), 0.0),
            Err(ExprError::DivisionByZero)
        );
    }

    #[test]
    fn unbound_variable_is_an_error() {
        let e = parse_expression("x + y").unwrap();
        assert_eq!(
            evaluate(&e, &env(&[("x", 1.0)]), 0.0),
            Err(ExprError::UnboundVariable("y".into()))
        );
    }

    #[test]
    fn quantized_reads_share_bindings() {
        let e = parse_expression("x + 1").unwrap().quantize_reads(&["x".to_string()]);
        assert_eq!(
            e,
            Expression::Add(
                Box::new(Expression::QuantizedVar("x".into())),
                Box::new(Expression::Const(1.0))
            )
        );
        assert_eq!(evaluate(&e, &env(&[("x", 2.0)]), 0.0).unwrap(), 3.0);
    }

    #[test]
    fn quantize_then_strip_is_identity() {
        let e = parse_expression("cos(theta)*v1 + tan(phi/l)*v1").unwrap();
        let q = e.quantize_reads(&["theta".to_string(), "phi".to_string()]);
        assert_eq!(q.strip_quantized(), e);
    }

    #[test]
    fn negative_literal_folds_to_neg_node() {
        let e = Expression::number(-10.0);
        assert_eq!(e, Expression::Neg(Box::new(Expression::Const(10.0))));
        assert_eq!(parse_expression(&e.to_string()).unwrap(), e);
    }

    #[test]
    fn display_parenthesizes_by_precedence() {
        use Expression::*;
        let e = Neg(Box::new(Mul(
            Box::new(Var("a".into())),
            Box::new(Var("b".into())),
        )));
        assert_eq!(e.to_string(), "-(a*b)");
        assert_eq!(parse_expression("-(a*b)").unwrap(), e);
        // Without parens, unary minus binds tighter than `*`.
        let f = parse_expression("-a*b").unwrap();
        assert_eq!(
            f,
            Mul(
                Box::new(Neg(Box::new(Var("a".into())))),
                Box::new(Var("b".into()))
            )
        );
    }
}
