//! Real univariate polynomials: sign-change counting, quantum attachment
//! with a sign choice that forces a positive real root, and smallest
//! positive real root extraction.
//!
//! Root isolation works on monotone intervals delimited by the critical
//! points of the polynomial (found recursively through the derivative),
//! then refines each bracket by bisection with a Newton polish. Degrees
//! here are small — one above the Taylor order — so robustness wins over
//! asymptotics.

use thiserror::Error;

/// Dense real polynomial, coefficients in ascending powers.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PolyError {
    #[error("operation undefined on the zero polynomial")]
    ZeroPolynomial,
    #[error("expected a zero constant term")]
    NonZeroConstantTerm,
    #[error("quantum magnitude must be positive")]
    NonPositiveQuantum,
}

/// Default relative accuracy for root refinement.
pub const DEFAULT_ROOT_TOL: f64 = 1e-12;

impl Polynomial {
    /// Builds a polynomial, trimming trailing zero coefficients.
    pub fn new(mut coeffs: Vec<f64>) -> Polynomial {
        while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Polynomial { coeffs }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() == 1 {
            return Polynomial::new(vec![0.0]);
        }
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * i as f64)
                .collect(),
        )
    }

    /// Returns this polynomial with its constant term replaced.
    pub fn with_constant_term(&self, c0: f64) -> Polynomial {
        let mut coeffs = self.coeffs.clone();
        coeffs[0] = c0;
        Polynomial::new(coeffs)
    }

    /// Cauchy bound: every real root lies in `[-B, B]`.
    fn cauchy_bound(&self) -> f64 {
        let lead = *self.coeffs.last().unwrap();
        let max_ratio = self.coeffs[..self.coeffs.len() - 1]
            .iter()
            .map(|c| (c / lead).abs())
            .fold(0.0, f64::max);
        1.0 + max_ratio
    }
}

/// Number of sign alternations in the nonzero coefficient sequence.
///
/// By Descartes's rule of signs this bounds the number of positive real
/// roots, and matches it modulo 2.
pub fn descartes_sign_changes(p: &Polynomial) -> Result<usize, PolyError> {
    if p.is_zero() {
        return Err(PolyError::ZeroPolynomial);
    }
    let mut changes = 0;
    let mut last = 0.0f64;
    for &c in &p.coeffs {
        if c == 0.0 {
            continue;
        }
        if last != 0.0 && c.signum() != last.signum() {
            changes += 1;
        }
        last = c;
    }
    Ok(changes)
}

/// Attaches a quantum of magnitude `delta_q_magnitude` as the constant
/// term of a zero-constant polynomial, choosing its sign so the resulting
/// coefficient sequence has an odd number of sign changes. An odd count
/// guarantees at least one positive real root.
pub fn attach_quantum(p_no_const: &Polynomial, delta_q_magnitude: f64) -> Result<Polynomial, PolyError> {
    if p_no_const.is_zero() {
        return Err(PolyError::ZeroPolynomial);
    }
    if p_no_const.coeffs[0] != 0.0 {
        return Err(PolyError::NonZeroConstantTerm);
    }
    if !(delta_q_magnitude > 0.0) {
        return Err(PolyError::NonPositiveQuantum);
    }
    let changes = descartes_sign_changes(p_no_const)?;
    let lowest = *p_no_const
        .coeffs
        .iter()
        .find(|c| **c != 0.0)
        .expect("nonzero polynomial has a nonzero coefficient");
    // Even count: the constant must flip sign against the lowest nonzero
    // coefficient to add one alternation. Odd count: keep the sign so the
    // count stays odd.
    let constant = if changes % 2 == 0 {
        -lowest.signum() * delta_q_magnitude
    } else {
        lowest.signum() * delta_q_magnitude
    };
    Ok(p_no_const.with_constant_term(constant))
}

/// Smallest strictly positive real root, or `None` when every real root is
/// non-positive. Roots at zero are skipped by factoring out powers of `x`.
pub fn smallest_positive_real_root(p: &Polynomial, tol: f64) -> Result<Option<f64>, PolyError> {
    if p.is_zero() {
        return Err(PolyError::ZeroPolynomial);
    }
    let mut coeffs = p.coeffs.clone();
    // Strip roots at x = 0; t = 0 scheduling is the caller's business.
    while coeffs.len() > 1 && coeffs[0] == 0.0 {
        coeffs.remove(0);
    }
    let p = Polynomial::new(coeffs);
    if p.degree() == 0 {
        return Ok(None);
    }
    let roots = positive_roots(&p, tol, 0);
    Ok(roots.into_iter().fold(None, |best: Option<f64>, r| {
        Some(match best {
            Some(b) if b <= r => b,
            _ => r,
        })
    }))
}

/// All strictly positive real roots (tangencies included), unsorted.
fn positive_roots(p: &Polynomial, tol: f64, depth: usize) -> Vec<f64> {
    debug_assert!(depth <= 64, "derivative recursion is bounded by the degree");
    if p.degree() == 1 {
        let r = -p.coeffs[0] / p.coeffs[1];
        return if r > 0.0 { vec![r] } else { vec![] };
    }
    let bound = p.cauchy_bound();
    // Monotone intervals are delimited by the positive critical points.
    let mut cuts = positive_roots(&p.derivative(), tol, depth + 1);
    cuts.retain(|c| *c < bound);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    let mut pts = Vec::with_capacity(cuts.len() + 2);
    pts.push(0.0);
    pts.extend(cuts);
    pts.push(bound);

    let scale = p.coeffs.iter().map(|c| c.abs()).fold(0.0, f64::max);
    let mut roots = Vec::new();
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (fa, fb) = (p.eval(a), p.eval(b));
        // Tangency at the right endpoint of a monotone interval.
        if b < bound && fb.abs() <= scale * 1e-13 * b.max(1.0).powi(p.degree() as i32) {
            if b > 0.0 {
                roots.push(b);
            }
            continue;
        }
        if fa == 0.0 {
            // Left endpoint roots are either x=0 (excluded) or already
            // pushed as the right endpoint of the previous interval.
            continue;
        }
        if fa.signum() != fb.signum() {
            let r = refine_root(p, a, b, tol);
            if r > 0.0 {
                roots.push(r);
            }
        }
    }
    roots
}

/// Bisection to a relative width of `tol`, then a guarded Newton polish.
fn refine_root(p: &Polynomial, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let f_lo = p.eval(lo);
    debug_assert!(f_lo.signum() != p.eval(hi).signum());
    let neg_lo = f_lo < 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = p.eval(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == neg_lo {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= tol * hi.abs().max(tol) {
            break;
        }
    }
    let mut x = 0.5 * (lo + hi);
    let dp = p.derivative();
    for _ in 0..4 {
        let d = dp.eval(x);
        if d == 0.0 {
            break;
        }
        let next = x - p.eval(x) / d;
        if next.is_finite() && next > lo && next < hi {
            x = next;
        } else {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_change_examples() {
        assert_eq!(
            descartes_sign_changes(&Polynomial::new(vec![-0.1, 1.0, 0.5])).unwrap(),
            1
        );
        assert_eq!(
            descartes_sign_changes(&Polynomial::new(vec![1.0, 1.0])).unwrap(),
            0
        );
        assert_eq!(
            descartes_sign_changes(&Polynomial::new(vec![-1.0, 0.0, 1.0])).unwrap(),
            1
        );
        assert_eq!(
            descartes_sign_changes(&Polynomial::new(vec![0.0])),
            Err(PolyError::ZeroPolynomial)
        );
    }

    #[test]
    fn attach_quantum_picks_an_odd_sign_pattern() {
        // p = 2t with dq = 0.5: constant -0.5, root at 0.25.
        let p = attach_quantum(&Polynomial::new(vec![0.0, 2.0]), 0.5).unwrap();
        assert_eq!(p.coefficients(), &[-0.5, 2.0]);
        assert_eq!(
            smallest_positive_real_root(&p, DEFAULT_ROOT_TOL).unwrap(),
            Some(0.25)
        );

        // p = -3t with dq = 0.3: constant +0.3, root at 0.1.
        let p = attach_quantum(&Polynomial::new(vec![0.0, -3.0]), 0.3).unwrap();
        assert_eq!(p.coefficients(), &[0.3, -3.0]);
        let r = smallest_positive_real_root(&p, DEFAULT_ROOT_TOL).unwrap().unwrap();
        assert!((r - 0.1).abs() < 1e-15);

        // p = t + t^2/2 with dq = 0.1: root frozen from the quadratic
        // formula, sqrt(1.2) - 1.
        let p = attach_quantum(&Polynomial::new(vec![0.0, 1.0, 0.5]), 0.1).unwrap();
        assert_eq!(descartes_sign_changes(&p).unwrap() % 2, 1);
        let r = smallest_positive_real_root(&p, DEFAULT_ROOT_TOL).unwrap().unwrap();
        assert!((r - 0.09544511501033223).abs() < 1e-12);
    }

    #[test]
    fn attach_quantum_rejects_bad_inputs() {
        assert_eq!(
            attach_quantum(&Polynomial::new(vec![0.0, 0.0]), 0.5),
            Err(PolyError::ZeroPolynomial)
        );
        assert_eq!(
            attach_quantum(&Polynomial::new(vec![1.0, 2.0]), 0.5),
            Err(PolyError::NonZeroConstantTerm)
        );
        assert_eq!(
            attach_quantum(&Polynomial::new(vec![0.0, 2.0]), 0.0),
            Err(PolyError::NonPositiveQuantum)
        );
    }

    #[test]
    fn smallest_positive_root_examples() {
        // t - 1
        assert_eq!(
            smallest_positive_real_root(&Polynomial::new(vec![-1.0, 1.0]), DEFAULT_ROOT_TOL)
                .unwrap(),
            Some(1.0)
        );
        // t^2/2 + t - 0.1
        let r = smallest_positive_real_root(
            &Polynomial::new(vec![-0.1, 1.0, 0.5]),
            DEFAULT_ROOT_TOL,
        )
        .unwrap()
        .unwrap();
        assert!((r - 0.09544511501033223).abs() < 1e-12);
        // t + 1
        assert_eq!(
            smallest_positive_real_root(&Polynomial::new(vec![1.0, 1.0]), DEFAULT_ROOT_TOL)
                .unwrap(),
            None
        );
    }

    #[test]
    fn picks_the_smallest_of_several_roots() {
        // (t-1)(t-2)(t-3) = t^3 - 6t^2 + 11t - 6
        let p = Polynomial::new(vec![-6.0, 11.0, -6.0, 1.0]);
        let r = smallest_positive_real_root(&p, DEFAULT_ROOT_TOL).unwrap().unwrap();
        assert!((r - 1.0).abs() < 1e-10);
    }

    #[test]
    fn finds_tangency_roots() {
        // (t-2)^2 touches zero without a sign change.
        let p = Polynomial::new(vec![4.0, -4.0, 1.0]);
        let r = smallest_positive_real_root(&p, DEFAULT_ROOT_TOL).unwrap().unwrap();
        assert!((r - 2.0).abs() < 1e-6, "r={r}");
    }

    #[test]
    fn roots_at_zero_are_skipped() {
        // t^2 (t - 4): zero root must not shadow the positive one.
        let p = Polynomial::new(vec![0.0, 0.0, -4.0, 1.0]);
        assert_eq!(
            smallest_positive_real_root(&p, DEFAULT_ROOT_TOL).unwrap(),
            Some(4.0)
        );
        // t^2 alone has no strictly positive root.
        let p = Polynomial::new(vec![0.0, 0.0, 1.0]);
        assert_eq!(smallest_positive_real_root(&p, DEFAULT_ROOT_TOL).unwrap(), None);
    }

    #[test]
    fn zero_polynomial_root_is_an_error() {
        assert_eq!(
            smallest_positive_real_root(&Polynomial::new(vec![0.0]), DEFAULT_ROOT_TOL),
            Err(PolyError::ZeroPolynomial)
        );
    }
}
