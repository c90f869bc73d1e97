//! Probability scalars.
//!
//! Everything that manipulates probability vectors (models, policies,
//! strategic measures) is generic over [`Prob`], which is implemented for
//! `f64` and for exact big rationals. Float comparisons use an absolute
//! tolerance; rational comparisons are exact and ignore the tolerance.

use std::fmt::{Debug, Display};
use std::ops::{Add, Div, Mul, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// Absolute tolerance on input probability rows.
pub const ROW_TOL: f64 = 1e-12;
/// Default comparison tolerance for derived quantities.
pub const CMP_TOL: f64 = 1e-9;

pub trait Prob:
    Clone
    + Debug
    + Display
    + PartialEq
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Send
    + Sync
{
    /// True for exact arithmetic.
    const EXACT: bool;

    fn to_f64(&self) -> f64;

    /// Lossy for rationals only in the sense that the binary float is
    /// converted exactly; callers in exact mode should parse strings instead.
    fn from_f64(v: f64) -> Self;

    /// Parses `"0.25"`, `"1/4"` or `"1"`.
    fn parse_prob(s: &str) -> Option<Self>;

    fn approx_eq(&self, other: &Self, tol: f64) -> bool;

    fn is_positive(&self) -> bool {
        *self > Self::zero()
    }

    /// Row-sum check: within `tol` of one for floats, exactly one otherwise.
    fn is_unit(&self, tol: f64) -> bool {
        self.approx_eq(&Self::one(), tol)
    }
}

impl Prob for f64 {
    const EXACT: bool = false;

    fn to_f64(&self) -> f64 {
        *self
    }

    fn from_f64(v: f64) -> Self {
        v
    }

    fn parse_prob(s: &str) -> Option<Self> {
        let s = s.trim();
        if let Some((num, den)) = s.split_once('/') {
            let num: f64 = num.trim().parse().ok()?;
            let den: f64 = den.trim().parse().ok()?;
            if den == 0.0 {
                return None;
            }
            Some(num / den)
        } else {
            s.parse().ok()
        }
    }

    fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        (self - other).abs() <= tol
    }
}

impl Prob for BigRational {
    const EXACT: bool = true;

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn from_f64(v: f64) -> Self {
        BigRational::from_float(v).unwrap_or_else(BigRational::zero)
    }

    fn parse_prob(s: &str) -> Option<Self> {
        parse_rational(s)
    }

    fn approx_eq(&self, other: &Self, _tol: f64) -> bool {
        self == other
    }
}

/// Parses a rational from `"p/q"`, an integer, or a finite decimal string
/// such as `"0.125"` (converted exactly, not through binary floating point).
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    if let Some((num, den)) = s.split_once('/') {
        let num = BigInt::from_str(num.trim()).ok()?;
        let den = BigInt::from_str(den.trim()).ok()?;
        if den.is_zero() {
            return None;
        }
        return Some(BigRational::new(num, den));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{}{}", if int_part.is_empty() { "0" } else { int_part }, frac_part);
    let num = BigInt::from_str(&digits).ok()?;
    let den = num_traits::pow(BigInt::from(10), frac_part.len());
    let r = BigRational::new(num, den);
    Some(if neg { -r } else { r })
}

/// Renders a rational as `p/q` (or `p` when integral).
pub fn format_rational(r: &BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Sums a probability row.
pub fn row_sum<P: Prob>(row: &[P]) -> P {
    row.iter().cloned().fold(P::zero(), |acc, v| acc + v)
}

/// True when the row has a single entry equal to one (and zeros elsewhere).
pub fn is_point_mass<P: Prob>(row: &[P], tol: f64) -> bool {
    let mut hits = 0;
    for v in row {
        if v.is_unit(tol) {
            hits += 1;
        } else if !v.approx_eq(&P::zero(), tol) {
            return false;
        }
    }
    hits == 1
}

/// Largest absolute entrywise difference, as a float.
pub fn max_abs_diff<P: Prob>(a: &[P], b: &[P]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x.clone() - y.clone()).to_f64().abs())
        .fold(0.0, f64::max)
}

pub fn rows_approx_eq<P: Prob>(a: &[P], b: &[P], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.approx_eq(y, tol))
}

/// Absolute value as a float, for reports.
pub fn abs_f64<P: Prob>(p: &P) -> f64 {
    p.to_f64().abs()
}
