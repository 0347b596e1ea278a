//! Exact rationals derived from decimal literals.
//!
//! Guard constants are kept as reduced fractions so that guard text
//! round-trips exactly; conversion to floating point happens once, when
//! the level-crossing matrix is built.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Reduced fraction with a positive denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Rational {
    num: i64,
    den: i64,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RationalError {
    #[error("`{0}` is not a decimal literal")]
    Invalid(String),
    #[error("decimal literal `{0}` overflows")]
    Overflow(String),
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.abs()
}

impl Rational {
    pub fn new(num: i64, den: i64) -> Rational {
        assert!(den != 0, "zero denominator");
        let g = gcd(num, den).max(1);
        let sign = if den < 0 { -1 } else { 1 };
        Rational {
            num: sign * num / g,
            den: sign * den / g,
        }
    }

    pub fn from_integer(n: i64) -> Rational {
        Rational { num: n, den: 1 }
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn neg(self) -> Rational {
        Rational {
            num: -self.num,
            den: self.den,
        }
    }

    pub fn is_finite(self) -> bool {
        true
    }
}

impl FromStr for Rational {
    type Err = RationalError;

    /// Parses an optionally signed decimal literal such as `3`, `-0.4`,
    /// or `2.75`.
    fn from_str(text: &str) -> Result<Rational, RationalError> {
        let bad = || RationalError::Invalid(text.to_string());
        let overflow = || RationalError::Overflow(text.to_string());
        let (sign, body) = match text.strip_prefix('-') {
            Some(rest) => (-1i64, rest),
            None => (1i64, text.strip_prefix('+').unwrap_or(text)),
        };
        if body.is_empty() {
            return Err(bad());
        }
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
        {
            return Err(bad());
        }
        let mut num: i64 = 0;
        for c in int_part.chars().chain(frac_part.chars()) {
            num = num
                .checked_mul(10)
                .and_then(|n| n.checked_add((c as u8 - b'0') as i64))
                .ok_or_else(overflow)?;
        }
        let den = 10i64
            .checked_pow(frac_part.len() as u32)
            .ok_or_else(overflow)?;
        Ok(Rational::new(sign * num, den))
    }
}

impl fmt::Display for Rational {
    /// Exact decimal expansion. The denominator of a reduced
    /// decimal-derived fraction is always of the form 2^a * 5^b, so the
    /// expansion terminates.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut den = self.den;
        let mut twos = 0u32;
        let mut fives = 0u32;
        while den % 2 == 0 {
            den /= 2;
            twos += 1;
        }
        while den % 5 == 0 {
            den /= 5;
            fives += 1;
        }
        if den != 1 {
            // Not decimal-derived; print as a fraction.
            return write!(f, "{}/{}", self.num, self.den);
        }
        let k = twos.max(fives);
        let mult: i128 = 2i128.pow(k - twos) * 5i128.pow(k - fives);
        let digits = (self.num.unsigned_abs() as i128 * mult).to_string();
        let sign = if self.num < 0 { "-" } else { "" };
        if k == 0 {
            return write!(f, "{sign}{digits}");
        }
        let k = k as usize;
        let padded = if digits.len() <= k {
            format!("{}{}", "0".repeat(k + 1 - digits.len()), digits)
        } else {
            digits
        };
        let (int_part, frac_part) = padded.split_at(padded.len() - k);
        let frac_trimmed = frac_part.trim_end_matches('0');
        if frac_trimmed.is_empty() {
            write!(f, "{sign}{int_part}")
        } else {
            write!(f, "{sign}{int_part}.{frac_trimmed}")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_reduces() {
        let r: Rational = "3.25".parse().unwrap();
        assert_eq!(r, Rational::new(13, 4));
        assert_eq!(r.to_f64(), 3.25);
    }

    #[test]
    fn negative_decimals() {
        let r: Rational = "-0.4".parse().unwrap();
        assert_eq!(r, Rational::new(-2, 5));
        assert_eq!(r.to_string(), "-0.4");
    }

    #[test]
    fn display_round_trips() {
        for text in ["3.2", "2.8", "0.8", "-0.4", "550", "0", "25", "0.07", "1.125"] {
            let r: Rational = text.parse().unwrap();
            assert_eq!(r.to_string(), text.trim_start_matches('+'));
            let again: Rational = r.to_string().parse().unwrap();
            assert_eq!(again, r);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!("".parse::<Rational>().is_err());
        assert!("x".parse::<Rational>().is_err());
        assert!("1.2.3".parse::<Rational>().is_err());
        assert!(".".parse::<Rational>().is_err());
    }

    #[test]
    fn leading_dot_and_integers() {
        assert_eq!(".5".parse::<Rational>().unwrap(), Rational::new(1, 2));
        assert_eq!("7".parse::<Rational>().unwrap(), Rational::from_integer(7));
    }
}
