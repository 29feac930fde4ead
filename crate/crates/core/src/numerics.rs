//! Arbitrary-precision scalars.
//!
//! Every quantity in a simulation is a [`Real`] created under a [`Context`].
//! The context fixes the number of significant decimal digits; internally the
//! value is an MPFR float whose mantissa is wide enough to hold that many
//! digits. Mixing values from two different contexts in one operation panics.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use rug::float::Round;
use rug::ops::Pow;
use rug::Float;

use crate::error::{Error, Result};

const LOG2_10: f64 = std::f64::consts::LOG2_10;

/// Precision configuration shared by every [`Real`] of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Context {
    digits: u32,
}

impl Context {
    pub const MIN_DIGITS: u32 = 16;
    /// Digits used when no precision is requested explicitly.
    pub const DEFAULT_DIGITS: u32 = 64;

    pub fn new(digits: u32) -> Result<Self> {
        if digits < Self::MIN_DIGITS {
            return Err(Error::Precision(digits));
        }
        Ok(Self { digits })
    }

    pub fn digits(&self) -> u32 {
        self.digits
    }

    /// Mantissa width in bits.
    pub fn bits(&self) -> u32 {
        bits_for_digits(self.digits)
    }

    /// Recovers the context a value was created under.
    pub fn of(value: &Real) -> Self {
        let bits = value.0.prec();
        let mut digits = (f64::from(bits) / LOG2_10).floor() as u32;
        while bits_for_digits(digits) > bits {
            digits -= 1;
        }
        while bits_for_digits(digits + 1) <= bits {
            digits += 1;
        }
        Self { digits }
    }

    pub fn zero(&self) -> Real {
        Real(Float::new(self.bits()))
    }

    pub fn one(&self) -> Real {
        self.int(1)
    }

    pub fn int(&self, v: i64) -> Real {
        Real(Float::with_val(self.bits(), v))
    }

    /// `num / den`, correctly rounded.
    pub fn ratio(&self, num: i64, den: i64) -> Real {
        assert!(den != 0, "zero denominator");
        let mut f = Float::with_val(self.bits(), num);
        f /= den;
        Real(f)
    }

    /// `10^exp`, correctly rounded.
    pub fn pow10(&self, exp: i32) -> Real {
        Real(Float::with_val(self.bits(), Float::u_pow_u(10, exp.unsigned_abs()))).powi_sign(exp)
    }

    /// Converts an `f64` exactly (then rounds to the context precision).
    pub fn from_f64(&self, v: f64) -> Real {
        Real(Float::with_val(self.bits(), v))
    }

    /// Parses a decimal string such as `-1.25e-3`.
    pub fn parse(&self, s: &str) -> Result<Real> {
        let trimmed = s.trim();
        let parsed = Float::parse(trimmed).map_err(|_| Error::Parse(trimmed.to_string()))?;
        let f = Float::with_val(self.bits(), parsed);
        if !f.is_finite() {
            return Err(Error::Parse(trimmed.to_string()));
        }
        Ok(Real(f))
    }

    pub fn default_tolerance(&self) -> Tolerance {
        Tolerance::from_digits(self, self.digits as i32 - 10)
    }
}

fn bits_for_digits(digits: u32) -> u32 {
    (f64::from(digits) * LOG2_10).ceil() as u32
}

/// Arbitrary-precision real number.
#[derive(Clone, PartialEq, PartialOrd)]
pub struct Real(Float);

#[inline]
fn same_prec(a: &Real, b: &Real) {
    assert_eq!(
        a.0.prec(),
        b.0.prec(),
        "mixing Reals from different precision contexts"
    );
}

impl Real {
    pub fn context(&self) -> Context {
        Context::of(self)
    }

    pub fn bits(&self) -> u32 {
        self.0.prec()
    }

    pub fn as_float(&self) -> &Float {
        &self.0
    }

    /// Integer constant at this value's precision.
    pub fn int_like(&self, v: i64) -> Real {
        Real(Float::with_val(self.0.prec(), v))
    }

    pub fn ratio_like(&self, num: i64, den: i64) -> Real {
        let mut f = Float::with_val(self.0.prec(), num);
        f /= den;
        Real(f)
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }

    pub fn is_sign_negative(&self) -> bool {
        self.0.is_sign_negative() && !self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        !self.0.is_zero() && self.0.is_sign_positive()
    }

    pub fn abs(&self) -> Real {
        Real(self.0.clone().abs())
    }

    pub fn exp(&self) -> Real {
        Real(self.0.clone().exp())
    }

    pub fn ln(&self) -> Real {
        Real(self.0.clone().ln())
    }

    pub fn sqrt(&self) -> Real {
        Real(self.0.clone().sqrt())
    }

    pub fn recip(&self) -> Real {
        Real(self.0.clone().recip())
    }

    pub fn square(&self) -> Real {
        Real(self.0.clone().square())
    }

    pub fn pow(&self, exponent: &Real) -> Real {
        same_prec(self, exponent);
        Real(self.0.clone().pow(&exponent.0))
    }

    pub fn powi(&self, exponent: i32) -> Real {
        Real(self.0.clone().pow(exponent))
    }

    fn powi_sign(self, exp: i32) -> Real {
        if exp < 0 {
            self.recip()
        } else {
            self
        }
    }

    /// Saturating floor; exact for magnitudes below 2^53.
    pub fn floor_i64(&self) -> i64 {
        self.0.clone().floor().to_f64() as i64
    }

    pub fn ceil_i64(&self) -> i64 {
        self.0.clone().ceil().to_f64() as i64
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64()
    }

    pub fn max_of(&self, other: &Real) -> Real {
        if other > self {
            other.clone()
        } else {
            self.clone()
        }
    }

    pub fn min_of(&self, other: &Real) -> Real {
        if other < self {
            other.clone()
        } else {
            self.clone()
        }
    }

    pub fn clamp_to(&self, lo: &Real, hi: &Real) -> Real {
        self.max_of(lo).min_of(hi)
    }

    pub fn total_cmp(&self, other: &Real) -> Ordering {
        self.partial_cmp(other).unwrap_or(Ordering::Equal)
    }

    /// Full-precision canonical decimal string; parsing it back under the
    /// same context gives the identical value.
    pub fn to_canonical(&self) -> String {
        format_decimal(&self.0, None)
    }

    /// Canonical decimal string rounded to `sig_digits` significant digits.
    pub fn to_digits(&self, sig_digits: usize) -> String {
        format_decimal(&self.0, Some(sig_digits.max(1)))
    }
}

fn format_decimal(f: &Float, digits: Option<usize>) -> String {
    let (neg, mantissa, exp) = f.to_sign_string_exp_round(10, digits, Round::Nearest);
    let Some(exp) = exp else {
        // zero; finite values only
        return "0.0".into();
    };
    let mantissa = mantissa.trim_end_matches('0');
    let mantissa = if mantissa.is_empty() { "0" } else { mantissa };
    let sign = if neg { "-" } else { "" };
    // value = 0.mantissa * 10^exp
    let n = mantissa.len() as i32;
    if (1..=21).contains(&exp) {
        let k = exp as usize;
        if (n as usize) <= k {
            let zeros = "0".repeat(k - n as usize);
            format!("{sign}{mantissa}{zeros}.0")
        } else {
            format!("{sign}{}.{}", &mantissa[..k], &mantissa[k..])
        }
    } else if (-5..=0).contains(&exp) {
        let zeros = "0".repeat((-exp) as usize);
        format!("{sign}0.{zeros}{mantissa}")
    } else {
        let frac = if n > 1 { &mantissa[1..] } else { "0" };
        format!("{sign}{}.{}e{}", &mantissa[..1], frac, exp - 1)
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match f.precision() {
            Some(p) => f.write_str(&self.to_digits(p)),
            None => f.write_str(&self.to_canonical()),
        }
    }
}

impl fmt::Debug for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Real({})", self.to_digits(24))
    }
}

macro_rules! binop {
    ($tr:ident, $method:ident, $atr:ident, $amethod:ident) => {
        impl $tr<&Real> for &Real {
            type Output = Real;
            #[inline]
            fn $method(self, rhs: &Real) -> Real {
                same_prec(self, rhs);
                Real(Float::with_val(self.0.prec(), $tr::$method(&self.0, &rhs.0)))
            }
        }
        impl $tr<Real> for &Real {
            type Output = Real;
            #[inline]
            fn $method(self, rhs: Real) -> Real {
                $tr::$method(self, &rhs)
            }
        }
        impl $tr<&Real> for Real {
            type Output = Real;
            #[inline]
            fn $method(mut self, rhs: &Real) -> Real {
                same_prec(&self, rhs);
                $atr::$amethod(&mut self.0, &rhs.0);
                self
            }
        }
        impl $tr<Real> for Real {
            type Output = Real;
            #[inline]
            fn $method(self, rhs: Real) -> Real {
                $tr::$method(self, &rhs)
            }
        }
        impl $atr<&Real> for Real {
            #[inline]
            fn $amethod(&mut self, rhs: &Real) {
                same_prec(self, rhs);
                $atr::$amethod(&mut self.0, &rhs.0);
            }
        }
        impl $atr<Real> for Real {
            #[inline]
            fn $amethod(&mut self, rhs: Real) {
                $atr::$amethod(self, &rhs);
            }
        }
        impl $tr<i64> for &Real {
            type Output = Real;
            #[inline]
            fn $method(self, rhs: i64) -> Real {
                let mut out = self.clone();
                $atr::$amethod(&mut out.0, rhs);
                out
            }
        }
        impl $tr<i64> for Real {
            type Output = Real;
            #[inline]
            fn $method(mut self, rhs: i64) -> Real {
                $atr::$amethod(&mut self.0, rhs);
                self
            }
        }
    };
}

binop!(Add, add, AddAssign, add_assign);
binop!(Sub, sub, SubAssign, sub_assign);
binop!(Mul, mul, MulAssign, mul_assign);
binop!(Div, div, DivAssign, div_assign);

impl Neg for Real {
    type Output = Real;
    fn neg(self) -> Real {
        Real(-self.0)
    }
}

impl Neg for &Real {
    type Output = Real;
    fn neg(self) -> Real {
        Real(-self.0.clone())
    }
}

impl<'a> Sum<&'a Real> for Option<Real> {
    fn sum<I: Iterator<Item = &'a Real>>(iter: I) -> Option<Real> {
        let mut acc: Option<Real> = None;
        for v in iter {
            match acc.as_mut() {
                Some(a) => *a += v,
                None => acc = Some(v.clone()),
            }
        }
        acc
    }
}

/// Sum of a non-empty slice.
pub fn sum(values: &[Real]) -> Real {
    let mut it = values.iter();
    let mut acc = it.next().expect("sum of empty slice").clone();
    for v in it {
        acc += v;
    }
    acc
}

/// Largest element of a non-empty slice, with its index (first on ties).
pub fn argmax(values: &[Real]) -> (usize, &Real) {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if v > &values[best] {
            best = i;
        }
    }
    (best, &values[best])
}

/// Smallest element of a non-empty slice, with its index (first on ties).
pub fn argmin(values: &[Real]) -> (usize, &Real) {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if v < &values[best] {
            best = i;
        }
    }
    (best, &values[best])
}

/// Absolute/relative comparison tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerance {
    pub rel: Real,
    pub abs: Real,
}

impl Tolerance {
    /// `abs = rel = 10^-exp_digits`.
    pub fn from_digits(ctx: &Context, exp_digits: i32) -> Self {
        let t = ctx.pow10(-exp_digits);
        Self {
            rel: t.clone(),
            abs: t,
        }
    }

    pub fn close(&self, a: &Real, b: &Real) -> bool {
        let diff = (a - b).abs();
        let scale = a.abs().max_of(&b.abs());
        diff <= &self.abs + &(&self.rel * &scale)
    }

    pub fn is_negligible(&self, a: &Real) -> bool {
        a.abs() <= self.abs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn context_bounds() {
        assert!(Context::new(1000).is_ok());
        assert_eq!(Context::new(16).unwrap().digits(), 16);
        assert!(matches!(Context::new(8), Err(Error::Precision(8))));
    }

    #[test]
    fn context_recovered_from_value() {
        for d in [16, 17, 30, 64, 100, 333, 1000] {
            let ctx = Context::new(d).unwrap();
            assert_eq!(Context::of(&ctx.one()), ctx);
        }
    }

    #[test]
    fn default_tolerance_formula() {
        for (d, e) in [(1000, -990), (64, -54), (16, -6)] {
            let ctx = Context::new(d).unwrap();
            let tol = ctx.default_tolerance();
            assert_eq!(tol.abs, ctx.pow10(e));
            assert_eq!(tol.rel, ctx.pow10(e));
        }
    }

    #[test]
    fn canonical_formatting() {
        let ctx = Context::new(30).unwrap();
        assert_eq!(ctx.parse("0.5").unwrap().to_canonical(), "0.5");
        assert_eq!(ctx.parse("-12.25").unwrap().to_canonical(), "-12.25");
        assert_eq!(ctx.int(100).to_canonical(), "100.0");
        assert_eq!(ctx.zero().to_canonical(), "0.0");
        assert_eq!(ctx.parse("1e-8").unwrap().to_digits(5), "1.0e-8");
        assert_eq!(ctx.parse("123456e20").unwrap().to_digits(6), "1.23456e25");
        assert_eq!(ctx.ratio(1, 3).to_digits(5), "0.33333");
        assert_eq!(ctx.parse("0.00012").unwrap().to_digits(4), "0.00012");
    }

    #[test]
    fn round_trip_is_exact() {
        let ctx = Context::new(50).unwrap();
        for v in [ctx.ratio(1, 3), ctx.ratio(-22, 7), ctx.int(2).exp(), ctx.pow10(-77) / 3i64] {
            let back = ctx.parse(&v.to_canonical()).unwrap();
            assert_eq!(back, v);
        }
    }

    #[test]
    fn parse_rejects_garbage() {
        let ctx = Context::new(20).unwrap();
        assert!(ctx.parse("abc").is_err());
        assert!(ctx.parse("inf").is_err());
    }

    #[test]
    #[should_panic(expected = "different precision")]
    fn mixing_contexts_panics() {
        let a = Context::new(20).unwrap().one();
        let b = Context::new(40).unwrap().one();
        let _ = &a + &b;
    }

    #[test]
    fn transcendental_identities() {
        let ctx = Context::new(64).unwrap();
        let tol = ctx.default_tolerance();
        let x = ctx.parse("0.7").unwrap();
        assert!(tol.close(&x.ln().exp(), &x));
        assert!(tol.close(&x.sqrt().square(), &x));
        assert!(tol.close(&x.pow(&ctx.ratio(1, 2)), &x.sqrt()));
        assert_eq!(ctx.parse("2.5").unwrap().floor_i64(), 2);
        assert_eq!(ctx.parse("2.5").unwrap().ceil_i64(), 3);
        assert_eq!(ctx.parse("-2.5").unwrap().floor_i64(), -3);
    }
}
