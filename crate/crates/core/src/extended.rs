//! Binary floating point with 192-bit significands and an unbounded exponent,
//! for constants whose exponential factors overflow `f64`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;
use dashu_int::ops::{BitTest, UnsignedAbs};
use dashu_int::IBig;

use crate::error::{Error, Result};

type F = FBig<HalfEven, 2>;

pub const PRECISION_BITS: usize = 192;

/// Largest binary exponent an [`ExtReal`] result may carry.
const MAX_BINARY_EXPONENT: f64 = 1.0e18;

#[derive(Clone, PartialEq, PartialOrd)]
pub struct ExtReal(F);

impl ExtReal {
    pub fn from_f64(x: f64) -> Result<Self> {
        let f = F::try_from(x).map_err(|_| Error::InvalidInput(format!("{x} is not finite")))?;
        Ok(ExtReal(f.with_precision(PRECISION_BITS).value()))
    }

    /// Panicking conversion for values already known to be finite.
    pub fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    pub fn zero() -> Self {
        Self::lit(0.0)
    }

    pub fn one() -> Self {
        Self::lit(1.0)
    }

    pub fn from_u64(n: u64) -> Self {
        ExtReal(F::from(n).with_precision(PRECISION_BITS).value())
    }

    pub fn is_zero(&self) -> bool {
        self.0 == F::ZERO
    }

    pub fn is_negative(&self) -> bool {
        self.0 < F::ZERO
    }

    /// Nearest `f64`; infinite when out of range.
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().value()
    }

    /// `log2(|x|)` as an `f64` estimate, `-inf` for zero.
    fn log2_abs(&self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        let repr = self.0.repr();
        let significand = repr.significand();
        let bits = significand.unsigned_abs().bit_len();
        let shift = bits.saturating_sub(53);
        let top = (significand.unsigned_abs() >> shift).to_f64().value();
        top.log2() + (shift as f64) + repr.exponent() as f64
    }

    pub fn exp(&self) -> Result<Self> {
        let x = self.to_f64();
        if x * std::f64::consts::LOG2_E > MAX_BINARY_EXPONENT {
            return Err(Error::Overflow(format!("exp argument {x:e} exceeds the extended exponent range")));
        }
        Ok(ExtReal(self.0.exp()))
    }

    /// Natural logarithm; requires a positive value.
    pub fn ln(&self) -> Result<Self> {
        if !(self.0 > F::ZERO) {
            return Err(Error::InvalidInput("logarithm of a non-positive value".into()));
        }
        Ok(ExtReal(self.0.ln()))
    }

    pub fn powi(&self, n: u64) -> Result<Self> {
        if n == 0 {
            return Ok(Self::one());
        }
        let log2 = self.log2_abs();
        if log2 * n as f64 > MAX_BINARY_EXPONENT {
            return Err(Error::Overflow(format!("power with binary exponent {:e}", log2 * n as f64)));
        }
        Ok(ExtReal(self.0.powi(IBig::from(n))))
    }

    pub fn sqrt(&self) -> Self {
        ExtReal(self.0.sqrt())
    }

    pub fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }

    /// Scientific notation with `digits` significant digits, e.g. `1.2345e+67`.
    ///
    /// Works for exponents far outside the `f64` range.
    pub fn to_scientific(&self, digits: usize) -> String {
        let digits = digits.max(1);
        if self.is_zero() {
            return format!("{:.*}e+0", digits - 1, 0.0);
        }
        let sign = if self.is_negative() { "-" } else { "" };
        let abs = ExtReal(if self.is_negative() { -self.0.clone() } else { self.0.clone() });
        let ln10 = ExtReal::lit(10.0).ln().expect("positive");
        let log10 = abs.ln().expect("positive") / ln10.clone();
        let mut exponent = log10.0.floor().to_int().value();
        let frac = log10.clone() - ExtReal(F::from(exponent.clone()).with_precision(PRECISION_BITS).value());
        let mut mantissa = (frac * ln10).exp().expect("fractional exponent").to_f64();
        let mut text = format!("{:.*}", digits - 1, mantissa);
        if text.starts_with("10") {
            mantissa /= 10.0;
            exponent += IBig::from(1);
            text = format!("{:.*}", digits - 1, mantissa);
        }
        let exp_sign = if exponent < IBig::from(0) { "-" } else { "+" };
        let exp_abs = if exponent < IBig::from(0) { -exponent } else { exponent };
        format!("{sign}{text}e{exp_sign}{exp_abs}")
    }
}

impl fmt::Debug for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ExtReal({})", self.to_scientific(17))
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_scientific(f.precision().unwrap_or(17)))
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait for ExtReal {
            type Output = ExtReal;
            fn $method(self, rhs: ExtReal) -> ExtReal {
                ExtReal(self.0 $op rhs.0)
            }
        }
        impl $trait<&ExtReal> for &ExtReal {
            type Output = ExtReal;
            fn $method(self, rhs: &ExtReal) -> ExtReal {
                ExtReal(&self.0 $op &rhs.0)
            }
        }
        impl $trait<f64> for ExtReal {
            type Output = ExtReal;
            fn $method(self, rhs: f64) -> ExtReal {
                ExtReal(self.0 $op ExtReal::lit(rhs).0)
            }
        }
    };
}

binop!(Add, add, +);
binop!(Sub, sub, -);
binop!(Mul, mul, *);
binop!(Div, div, /);

impl Neg for ExtReal {
    type Output = ExtReal;
    fn neg(self) -> ExtReal {
        ExtReal(-self.0)
    }
}

impl PartialEq<f64> for ExtReal {
    fn eq(&self, other: &f64) -> bool {
        ExtReal::from_f64(*other).map(|o| *self == o).unwrap_or(false)
    }
}

impl PartialOrd<f64> for ExtReal {
    fn partial_cmp(&self, other: &f64) -> Option<Ordering> {
        ExtReal::from_f64(*other).ok().and_then(|o| self.partial_cmp(&o))
    }
}
