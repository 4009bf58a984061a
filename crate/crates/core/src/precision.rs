//! Scalar abstraction used by the transform code, with an `f64` instance and a
//! double-double instance (~31 significant decimal digits).
//!
//! Every closed-form transform in the crate is written once, generically over
//! [`Real`]. Plain evaluation runs in `f64`; the Gaver-Stehfest inverter runs
//! the same code in [`DoubleDouble`] because its alternating weights reach
//! 1e20 and above at the orders we support.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Minimal real-number interface needed by the transform formulas.
pub trait Real:
    Copy
    + fmt::Debug
    + PartialOrd
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Unit roundoff of the representation.
    const EPSILON: f64;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn exp_m1(self) -> Self;
    fn ln(self) -> Self;
    fn ln_1p(self) -> Self;
    fn sqrt(self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn abs(self) -> Self {
        if self < Self::zero() {
            -self
        } else {
            self
        }
    }

    fn is_zero(self) -> bool {
        self.to_f64() == 0.0
    }
}

impl Real for f64 {
    const EPSILON: f64 = f64::EPSILON;

    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn exp_m1(self) -> Self {
        f64::exp_m1(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn ln_1p(self) -> Self {
        f64::ln_1p(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Clone, Copy, Default, PartialEq)]
pub struct DoubleDouble {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let err = b - (s - a);
    (s, err)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let err = a.mul_add(b, -p);
    (p, err)
}

impl DoubleDouble {
    pub const LN_2: DoubleDouble = DoubleDouble {
        hi: std::f64::consts::LN_2,
        lo: 2.319_046_813_846_299_6e-17,
    };

    pub const fn new(hi: f64, lo: f64) -> Self {
        Self { hi, lo }
    }

    /// Builds a normalized value from two arbitrary doubles.
    pub fn from_parts(hi: f64, lo: f64) -> Self {
        let (h, l) = two_sum(hi, lo);
        Self { hi: h, lo: l }
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    fn mul_pow2(self, k: i32) -> Self {
        let s = 2f64.powi(k);
        Self {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    /// expm1 for |x| <= ln2/2 via argument halving and a Taylor series.
    fn exp_m1_reduced(self) -> Self {
        const HALVINGS: i32 = 10;
        let r = self.mul_pow2(-HALVINGS);
        // |r| < 4e-4, so 12 terms put the truncation far below 1e-32
        let mut term = r;
        let mut sum = r;
        for n in 2..=12 {
            term = term * r / DoubleDouble::from_f64(n as f64);
            sum = sum + term;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        // expm1(2y) = expm1(y) * (expm1(y) + 2)
        for _ in 0..HALVINGS {
            sum = sum * (sum + DoubleDouble::from_f64(2.0));
        }
        sum
    }
}

impl fmt::Debug for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DoubleDouble({:e} + {:e})", self.hi, self.lo)
    }
}

impl fmt::Display for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.hi)
    }
}

impl PartialOrd for DoubleDouble {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi)? {
            Ordering::Equal => self.lo.partial_cmp(&other.lo),
            ord => Some(ord),
        }
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let (s1, s2) = two_sum(self.hi, rhs.hi);
        let (t1, t2) = two_sum(self.lo, rhs.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        let (hi, lo) = quick_two_sum(s1, s2 + t2);
        Self { hi, lo }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let (p, e) = two_prod(self.hi, rhs.hi);
        let e = e + (self.hi * rhs.lo + self.lo * rhs.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Self { hi, lo }
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let q1 = self.hi / rhs.hi;
        if !q1.is_finite() {
            return Self::from_f64(q1);
        }
        let r = self - rhs * Self::from_f64(q1);
        let q2 = r.hi / rhs.hi;
        let r = r - rhs * Self::from_f64(q2);
        let q3 = r.hi / rhs.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Self { hi, lo } + Self::from_f64(q3)
    }
}

impl Real for DoubleDouble {
    const EPSILON: f64 = 4.93e-32;

    #[inline]
    fn from_f64(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn exp(self) -> Self {
        if self.hi > 709.7 {
            return Self::from_f64(f64::INFINITY);
        }
        if self.hi < -745.2 {
            return Self::zero();
        }
        let k = (self.hi / std::f64::consts::LN_2).round();
        let r = self - Self::LN_2 * Self::from_f64(k);
        let e = r.exp_m1_reduced() + Self::one();
        // split the power of two so that neither factor overflows near the limits
        let k = k as i32;
        let half = k / 2;
        e.mul_pow2(half).mul_pow2(k - half)
    }

    fn exp_m1(self) -> Self {
        if self.hi.abs() <= 0.5 * std::f64::consts::LN_2 {
            self.exp_m1_reduced()
        } else {
            self.exp() - Self::one()
        }
    }

    fn ln(self) -> Self {
        if self.hi <= 0.0 {
            return if self.hi == 0.0 {
                Self::from_f64(f64::NEG_INFINITY)
            } else {
                Self::from_f64(f64::NAN)
            };
        }
        if self.hi.is_infinite() {
            return self;
        }
        let mut y = Self::from_f64(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - Self::one();
        }
        y
    }

    fn ln_1p(self) -> Self {
        if self.hi.abs() >= 0.5 {
            return (Self::one() + self).ln();
        }
        if self.hi == 0.0 {
            return Self::zero();
        }
        // Newton on expm1(y) = x keeps full relative accuracy for tiny x
        let mut y = Self::from_f64(self.hi.ln_1p());
        for _ in 0..2 {
            let em1 = y.exp_m1();
            y = y - (em1 - self) / (em1 + Self::one());
        }
        y
    }

    fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return if self.hi == 0.0 {
                Self::zero()
            } else {
                Self::from_f64(f64::NAN)
            };
        }
        let y = Self::from_f64(self.hi.sqrt());
        y + (self - y * y) / (y * Self::from_f64(2.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dd_rel_err(x: DoubleDouble, hi: f64, lo: f64) -> f64 {
        let diff = x - DoubleDouble::new(hi, lo);
        (diff.to_f64() / hi).abs()
    }

    #[test]
    fn arithmetic_carries_the_low_word() {
        let third = DoubleDouble::one() / DoubleDouble::from_f64(3.0);
        let back = third * DoubleDouble::from_f64(3.0) - DoubleDouble::one();
        assert!(back.to_f64().abs() < 1e-31);

        let tiny = DoubleDouble::one() + DoubleDouble::from_f64(1e-20);
        assert_eq!(tiny.hi(), 1.0);
        assert!((tiny.lo() - 1e-20).abs() < 1e-35);
    }

    #[test]
    fn exp_matches_reference_digits() {
        // e = 2.718281828459045235360287471352662497757...
        let e = DoubleDouble::one().exp();
        assert!(dd_rel_err(e, 2.718_281_828_459_045, 1.445_646_891_729_250_2e-16) < 1e-30);
        let e10 = DoubleDouble::from_f64(10.0).exp();
        // exp(10) = 22026.465794806716516957900645284...
        let reference = DoubleDouble::from_parts(22026.465794806718, -1.378_013_470_051_737_2e-12);
        assert!(((e10 - reference) / reference).to_f64().abs() < 1e-29);
    }

    #[test]
    fn ln_inverts_exp() {
        for &x in &[1e-8, 0.3, 1.0, 2.5, 40.0, -3.0, -300.0] {
            let v = DoubleDouble::from_f64(x);
            let back = v.exp().ln();
            let err = (back - v).to_f64().abs();
            assert!(err <= 1e-29 * x.abs().max(1.0), "x={x} err={err}");
        }
        let ln2 = DoubleDouble::from_f64(2.0).ln();
        assert!(dd_rel_err(ln2, DoubleDouble::LN_2.hi(), DoubleDouble::LN_2.lo()) < 1e-31);
    }

    #[test]
    fn small_argument_functions_keep_relative_accuracy() {
        let x = DoubleDouble::from_f64(1e-12);
        // expm1(1e-12) = 1e-12 + 5e-25 + 1.666...e-37
        let em1 = x.exp_m1();
        let expected = DoubleDouble::from_parts(1e-12, 5e-25);
        assert!(((em1 - expected) / expected).to_f64().abs() < 1e-24);
        let l1p = x.ln_1p();
        let expected = DoubleDouble::from_parts(1e-12, -5e-25);
        assert!(((l1p - expected) / expected).to_f64().abs() < 1e-24);
    }

    #[test]
    fn sqrt_of_two() {
        let r = DoubleDouble::from_f64(2.0).sqrt();
        assert!(dd_rel_err(r, 1.414_213_562_373_095_1, -9.667_293_313_452_913e-17) < 1e-31);
    }

    #[test]
    fn extreme_exponents_saturate() {
        assert_eq!(DoubleDouble::from_f64(-800.0).exp().to_f64(), 0.0);
        assert!(DoubleDouble::from_f64(800.0).exp().to_f64().is_infinite());
        assert!(DoubleDouble::from_f64(700.0).exp().to_f64().is_finite());
    }
}
