//! Truncated power-series arithmetic.
//!
//! A [`SeriesPolynomial`] holds coefficients `c0..cn` of a series around
//! local time zero. All arithmetic is exact on the retained coefficients;
//! truncation is the only approximation. Transcendental functions are
//! composed from their Maclaurin series after splitting off the constant
//! term of the inner series.

use std::collections::BTreeMap;

use super::{Env, ExprError, Expression};

/// Truncated power series `c0 + c1 t + ... + cn t^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPolynomial {
    coeffs: Vec<f64>,
}

/// Linear quantization signal of one state variable: value and slope at
/// the expansion point, i.e. `q(t) = value + slope * t`.
pub type QLines = BTreeMap<String, (f64, f64)>;

impl SeriesPolynomial {
    pub fn new(coeffs: Vec<f64>) -> SeriesPolynomial {
        assert!(!coeffs.is_empty(), "series needs at least one coefficient");
        SeriesPolynomial { coeffs }
    }

    pub fn constant(value: f64, order: usize) -> SeriesPolynomial {
        let mut coeffs = vec![0.0; order + 1];
        coeffs[0] = value;
        SeriesPolynomial { coeffs }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }

    /// Evaluates the truncated series at `t` by Horner's rule.
    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    fn zip(&self, other: &SeriesPolynomial, f: impl Fn(f64, f64) -> f64) -> SeriesPolynomial {
        let n = self.coeffs.len().max(other.coeffs.len());
        let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        SeriesPolynomial {
            coeffs: (0..n)
                .map(|i| f(get(&self.coeffs, i), get(&other.coeffs, i)))
                .collect(),
        }
    }

    fn add(&self, other: &SeriesPolynomial) -> SeriesPolynomial {
        self.zip(other, |a, b| a + b)
    }

    fn sub(&self, other: &SeriesPolynomial) -> SeriesPolynomial {
        self.zip(other, |a, b| a - b)
    }

    fn neg(&self) -> SeriesPolynomial {
        SeriesPolynomial {
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }

    fn scale(&self, k: f64) -> SeriesPolynomial {
        SeriesPolynomial {
            coeffs: self.coeffs.iter().map(|c| k * c).collect(),
        }
    }

    /// Cauchy product truncated to `order`.
    fn mul(&self, other: &SeriesPolynomial, order: usize) -> SeriesPolynomial {
        let mut coeffs = vec![0.0; order + 1];
        for (i, a) in self.coeffs.iter().enumerate().take(order + 1) {
            if *a == 0.0 {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                if i + j > order {
                    break;
                }
                coeffs[i + j] += a * b;
            }
        }
        SeriesPolynomial { coeffs }
    }

    /// Series long division truncated to `order`. Fails when the divisor's
    /// constant term is zero.
    fn div(&self, other: &SeriesPolynomial, order: usize) -> Result<SeriesPolynomial, ExprError> {
        let b0 = other.coeffs[0];
        if b0 == 0.0 {
            return Err(ExprError::SeriesDivision);
        }
        let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        let mut q = vec![0.0; order + 1];
        for k in 0..=order {
            let mut acc = get(&self.coeffs, k);
            for j in 0..k {
                acc -= q[j] * get(&other.coeffs, k - j);
            }
            q[k] = acc / b0;
        }
        Ok(SeriesPolynomial { coeffs: q })
    }

    /// Integer power by repeated multiplication.
    fn pow(&self, k: u32, order: usize) -> SeriesPolynomial {
        let mut acc = SeriesPolynomial::constant(1.0, order);
        for _ in 0..k {
            acc = acc.mul(self, order);
        }
        acc
    }

    fn truncated(&self, order: usize) -> SeriesPolynomial {
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(order + 1, 0.0);
        SeriesPolynomial { coeffs }
    }
}

/// Composes a Maclaurin series (given by its coefficient generator) with a
/// zero-constant inner series `h`, truncated to `order`. Powers of `h`
/// gain at least one order each, so the loop is finite and exact.
fn compose_maclaurin(
    h: &SeriesPolynomial,
    coeff: impl Fn(usize) -> f64,
    order: usize,
) -> SeriesPolynomial {
    debug_assert_eq!(h.coeffs[0], 0.0);
    let mut acc = SeriesPolynomial::constant(coeff(0), order);
    let mut h_pow = SeriesPolynomial::constant(1.0, order);
    for m in 1..=order {
        h_pow = h_pow.mul(h, order);
        let c = coeff(m);
        if c != 0.0 {
            acc = acc.add(&h_pow.scale(c));
        }
    }
    acc
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// sin(g) with arbitrary constant term: split g = g0 + h and use the
/// angle-addition identity with Maclaurin series of sin/cos in h.
fn sin_series(g: &SeriesPolynomial, order: usize) -> SeriesPolynomial {
    let g0 = g.coeffs[0];
    let mut h = g.truncated(order);
    h.coeffs[0] = 0.0;
    let sin_h = compose_maclaurin(
        &h,
        |m| {
            if m % 2 == 1 {
                let s = if m % 4 == 1 { 1.0 } else { -1.0 };
                s / factorial(m)
            } else {
                0.0
            }
        },
        order,
    );
    let cos_h = compose_maclaurin(
        &h,
        |m| {
            if m % 2 == 0 {
                let s = if m % 4 == 0 { 1.0 } else { -1.0 };
                s / factorial(m)
            } else {
                0.0
            }
        },
        order,
    );
    sin_h.scale(g0.cos()).add(&cos_h.scale(g0.sin()))
}

fn cos_series(g: &SeriesPolynomial, order: usize) -> SeriesPolynomial {
    let g0 = g.coeffs[0];
    let mut h = g.truncated(order);
    h.coeffs[0] = 0.0;
    let sin_h = compose_maclaurin(
        &h,
        |m| {
            if m % 2 == 1 {
                let s = if m % 4 == 1 { 1.0 } else { -1.0 };
                s / factorial(m)
            } else {
                0.0
            }
        },
        order,
    );
    let cos_h = compose_maclaurin(
        &h,
        |m| {
            if m % 2 == 0 {
                let s = if m % 4 == 0 { 1.0 } else { -1.0 };
                s / factorial(m)
            } else {
                0.0
            }
        },
        order,
    );
    cos_h.scale(g0.cos()).sub(&sin_h.scale(g0.sin()))
}

fn exp_series(g: &SeriesPolynomial, order: usize) -> SeriesPolynomial {
    let g0 = g.coeffs[0];
    let mut h = g.truncated(order);
    h.coeffs[0] = 0.0;
    compose_maclaurin(&h, |m| 1.0 / factorial(m), order).scale(g0.exp())
}

/// tan = sin / cos; fails when cos of the inner constant term vanishes.
fn tan_series(g: &SeriesPolynomial, order: usize) -> Result<SeriesPolynomial, ExprError> {
    let s = sin_series(g, order);
    let c = cos_series(g, order);
    s.div(&c, order)
}

/// Expands `e` as a truncated power series in local time around `t0`.
///
/// Quantized reads follow their linear quantization line `value + slope*t`
/// from `q_lines`; plain variable reads are constants from `env0`; `Time`
/// expands as `t0 + t`. Truncation to `order` is the only approximation.
pub fn taylor_series(
    e: &Expression,
    env0: &Env,
    q_lines: &QLines,
    order: usize,
    t0: f64,
) -> Result<SeriesPolynomial, ExprError> {
    let s = expand(e, env0, q_lines, order, t0)?;
    if s.coeffs.iter().any(|c| !c.is_finite()) {
        return Err(ExprError::NonFinite);
    }
    Ok(s)
}

fn expand(
    e: &Expression,
    env0: &Env,
    q_lines: &QLines,
    order: usize,
    t0: f64,
) -> Result<SeriesPolynomial, ExprError> {
    use Expression::*;
    Ok(match e {
        Const(c) => SeriesPolynomial::constant(*c, order),
        Var(n) => {
            let v = env0
                .get(n)
                .ok_or_else(|| ExprError::UnboundVariable(n.clone()))?;
            SeriesPolynomial::constant(*v, order)
        }
        QuantizedVar(n) => {
            let (value, slope) = q_lines
                .get(n)
                .copied()
                .ok_or_else(|| ExprError::UnboundVariable(n.clone()))?;
            let mut coeffs = vec![0.0; order + 1];
            coeffs[0] = value;
            if order >= 1 {
                coeffs[1] = slope;
            }
            SeriesPolynomial { coeffs }
        }
        Time => {
            let mut coeffs = vec![0.0; order + 1];
            coeffs[0] = t0;
            if order >= 1 {
                coeffs[1] = 1.0;
            }
            SeriesPolynomial { coeffs }
        }
        Neg(a) => expand(a, env0, q_lines, order, t0)?.neg(),
        Add(a, b) => expand(a, env0, q_lines, order, t0)?.add(&expand(b, env0, q_lines, order, t0)?),
        Sub(a, b) => expand(a, env0, q_lines, order, t0)?.sub(&expand(b, env0, q_lines, order, t0)?),
        Mul(a, b) => {
            expand(a, env0, q_lines, order, t0)?.mul(&expand(b, env0, q_lines, order, t0)?, order)
        }
        Div(a, b) => expand(a, env0, q_lines, order, t0)?
            .div(&expand(b, env0, q_lines, order, t0)?, order)?,
        Pow(a, k) => expand(a, env0, q_lines, order, t0)?.pow(*k, order),
        Sin(a) => sin_series(&expand(a, env0, q_lines, order, t0)?, order),
        Cos(a) => cos_series(&expand(a, env0, q_lines, order, t0)?, order),
        Tan(a) => tan_series(&expand(a, env0, q_lines, order, t0)?, order)?,
        Exp(a) => exp_series(&expand(a, env0, q_lines, order, t0)?, order),
    })
}

/// Exact antiderivative with zero constant term; the order grows by one.
pub fn integrate_series(p: &SeriesPolynomial) -> SeriesPolynomial {
    let mut coeffs = vec![0.0; p.coeffs.len() + 1];
    for (i, c) in p.coeffs.iter().enumerate() {
        coeffs[i + 1] = c / (i + 1) as f64;
    }
    SeriesPolynomial { coeffs }
}

/// Formal derivative; inverse of [`integrate_series`] on the truncation.
pub fn differentiate_series(p: &SeriesPolynomial) -> SeriesPolynomial {
    if p.coeffs.len() == 1 {
        return SeriesPolynomial::constant(0.0, 0);
    }
    let coeffs = p
        .coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, c)| c * i as f64)
        .collect();
    SeriesPolynomial { coeffs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;

    fn empty_env() -> Env {
        Env::new()
    }

    fn no_lines() -> QLines {
        QLines::new()
    }

    #[test]
    fn cosine_of_linear_signal() {
        // cos(k*t) to order 2 is [1, 0, -k^2/2] with k = tan(1)*30.
        let k = (1.0f64).tan() * 30.0;
        let e = parse_expression(&format!("cos({k}*t)")).unwrap();
        let s = taylor_series(&e, &empty_env(), &no_lines(), 2, 0.0).unwrap();
        assert_eq!(s.coefficients()[0], 1.0);
        assert_eq!(s.coefficients()[1], 0.0);
        assert!((s.coefficients()[2] - (-k * k / 2.0)).abs() < 1e-9);
    }

    #[test]
    fn exp_series_matches_canonical() {
        let e = parse_expression("exp(t)").unwrap();
        let s = taylor_series(&e, &empty_env(), &no_lines(), 3, 0.0).unwrap();
        assert_eq!(s.coefficients(), &[1.0, 1.0, 0.5, 1.0 / 6.0]);
    }

    #[test]
    fn constants_expand_trivially() {
        let e = parse_expression("5").unwrap();
        let s = taylor_series(&e, &empty_env(), &no_lines(), 4, 0.0).unwrap();
        assert_eq!(s.coefficients(), &[5.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn quantized_read_follows_its_line() {
        // x'=x with q_x(t) = 1 + t expands to [1, 1, 0].
        let e = parse_expression("x").unwrap().quantize_reads(&["x".to_string()]);
        let mut lines = QLines::new();
        lines.insert("x".into(), (1.0, 1.0));
        let s = taylor_series(&e, &empty_env(), &lines, 2, 0.0).unwrap();
        assert_eq!(s.coefficients(), &[1.0, 1.0, 0.0]);
    }

    #[test]
    fn integrate_examples() {
        let p = SeriesPolynomial::new(vec![1.0, 0.0, -2.0]);
        assert_eq!(
            integrate_series(&p).coefficients(),
            &[0.0, 1.0, 0.0, -2.0 / 3.0]
        );
        assert_eq!(
            integrate_series(&SeriesPolynomial::new(vec![0.0])).coefficients(),
            &[0.0, 0.0]
        );
        assert_eq!(
            integrate_series(&SeriesPolynomial::new(vec![3.0])).coefficients(),
            &[0.0, 3.0]
        );
    }

    #[test]
    fn integrate_then_differentiate_is_identity() {
        let p = SeriesPolynomial::new(vec![2.0, -1.5, 0.25, 7.0]);
        let back = differentiate_series(&integrate_series(&p));
        assert_eq!(back.coefficients(), p.coefficients());
    }

    #[test]
    fn division_by_zero_constant_series_fails() {
        let e = parse_expression("1/(x - x)").unwrap();
        let mut env = Env::new();
        env.insert("x".into(), 3.0);
        assert_eq!(
            taylor_series(&e, &env, &no_lines(), 3, 0.0),
            Err(ExprError::SeriesDivision)
        );
    }

    #[test]
    fn tan_series_matches_quotient() {
        // tan(0.3 + t): check the first coefficients against 1/cos^2 at 0.3.
        let e = parse_expression("tan(0.3 + t)").unwrap();
        let s = taylor_series(&e, &empty_env(), &no_lines(), 3, 0.0).unwrap();
        let c = 0.3f64;
        assert!((s.coefficients()[0] - c.tan()).abs() < 1e-12);
        assert!((s.coefficients()[1] - 1.0 / (c.cos() * c.cos())).abs() < 1e-12);
    }

    #[test]
    fn series_is_exact_for_polynomials() {
        // (1 + 2t)^3 expanded at order 3 reproduces binomial coefficients.
        let e = parse_expression("(1 + 2*t)^3").unwrap();
        let s = taylor_series(&e, &empty_env(), &no_lines(), 3, 0.0).unwrap();
        assert_eq!(s.coefficients(), &[1.0, 6.0, 12.0, 8.0]);
    }

    #[test]
    fn time_shifts_out_absolute_origin() {
        let e = parse_expression("t").unwrap();
        let s = taylor_series(&e, &empty_env(), &no_lines(), 2, 7.5).unwrap();
        assert_eq!(s.coefficients(), &[7.5, 1.0, 0.0]);
    }

    #[test]
    fn series_approximates_direct_evaluation() {
        // Ground truth: evaluate with variables moved along their lines.
        let e = parse_expression("cos(theta)*30 + exp(u)/2")
            .unwrap()
            .quantize_reads(&["theta".to_string(), "u".to_string()]);
        let mut lines = QLines::new();
        lines.insert("theta".into(), (0.2, 3.0));
        lines.insert("u".into(), (-0.5, 1.5));
        let order = 5;
        let s = taylor_series(&e, &empty_env(), &lines, order, 0.0).unwrap();
        let next = taylor_series(&e, &empty_env(), &lines, order + 1, 0.0).unwrap();
        let c_bound = next.coefficients()[order + 1].abs() * 8.0 + 1e-9;
        for k in 0..=20 {
            let t = 0.1 * k as f64 / 20.0;
            let mut env = Env::new();
            for (name, (v, sl)) in &lines {
                env.insert(name.clone(), v + sl * t);
            }
            let truth = crate::expr::evaluate(&e, &env, t).unwrap();
            let err = (s.eval(t) - truth).abs();
            assert!(
                err <= c_bound * t.powi(order as i32 + 1),
                "t={t}: err={err} bound={}",
                c_bound * t.powi(order as i32 + 1)
            );
        }
    }
}
