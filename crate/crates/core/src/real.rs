//! Scalar abstraction for the probability and cost arithmetic.
//!
//! All core math is generic over [`Real`] so value tables and pmfs can be
//! computed in `f32` or `f64`. Concrete `f64` aliases live at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar used for probabilities, costs, and value tables.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + AddAssign + Sum<Self> + Debug + Display + Send + Sync + 'static
{
    /// Error function, needed for normal CDF evaluation.
    fn erf(self) -> Self;

    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 not representable in scalar type")
    }
}

impl Real for f32 {
    fn erf(self) -> Self {
        erf_generic(self)
    }
}

impl Real for f64 {
    fn erf(self) -> Self {
        erf_generic(self)
    }
}

/// erf via the non-alternating confluent series for small arguments and a
/// Lentz-evaluated continued fraction for erfc in the tails. Accuracy is
/// close to machine precision for the scalar type; oddness is exact because
/// the sign is split off before evaluation.
pub fn erf_generic<R: Float + FromPrimitive>(x: R) -> R {
    if x.is_nan() {
        return x;
    }
    let sign = if x < R::zero() { -R::one() } else { R::one() };
    let ax = x.abs();
    let three = R::from_f64(3.0).unwrap();
    let v = if ax <= three {
        erf_series(ax)
    } else {
        R::one() - erfc_cf(ax)
    };
    sign * v
}

// erf(x) = 2x/sqrt(pi) * exp(-x^2) * sum_{n>=0} (2x^2)^n / (2n+1)!!
fn erf_series<R: Float + FromPrimitive>(x: R) -> R {
    let two_over_sqrt_pi = R::from_f64(1.128_379_167_095_512_6).unwrap();
    let x2 = x * x;
    let mut term = R::one();
    let mut sum = term;
    let mut n = 0u32;
    loop {
        n += 1;
        let denom = R::from_u32(2 * n + 1).unwrap();
        term = term * (x2 + x2) / denom;
        sum = sum + term;
        if term < sum * R::epsilon() || n > 200 {
            break;
        }
    }
    two_over_sqrt_pi * x * (-x2).exp() * sum
}

// erfc(x) * sqrt(pi) * exp(x^2) = 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
fn erfc_cf<R: Float + FromPrimitive>(x: R) -> R {
    let tiny = R::from_f64(1e-30).unwrap();
    let sqrt_pi = R::from_f64(1.772_453_850_905_516).unwrap();
    let half = R::from_f64(0.5).unwrap();
    // modified Lentz with b0 = x, b_n = x, a_n = n/2
    let mut f = if x == R::zero() { tiny } else { x };
    let mut c = f;
    let mut d = R::zero();
    for n in 1..100 {
        let a = R::from_u32(n).unwrap() * half;
        // b = x for every level
        d = x + a * d;
        if d == R::zero() {
            d = tiny;
        }
        c = x + a / c;
        if c == R::zero() {
            c = tiny;
        }
        d = d.recip();
        let delta = c * d;
        f = f * delta;
        if (delta - R::one()).abs() < R::epsilon() {
            break;
        }
    }
    (-x * x).exp() / (sqrt_pi * f)
}

/// Standard normal CDF.
pub fn normal_cdf<R: Real>(z: R) -> R {
    let half = R::from_f64_lossy(0.5);
    let inv_sqrt2 = R::from_f64_lossy(std::f64::consts::FRAC_1_SQRT_2);
    half * (R::one() + (z * inv_sqrt2).erf())
}

/// CDF of a normal(mu, sigma) truncated to [lo, hi], evaluated at x.
///
/// Requires sigma > 0 and lo < hi; x is clamped to the truncation interval.
pub fn truncated_normal_cdf<R: Real>(x: R, mu: R, sigma: R, lo: R, hi: R) -> R {
    debug_assert!(sigma > R::zero());
    debug_assert!(lo < hi);
    if x <= lo {
        return R::zero();
    }
    if x >= hi {
        return R::one();
    }
    let phi_lo = normal_cdf((lo - mu) / sigma);
    let phi_hi = normal_cdf((hi - mu) / sigma);
    (normal_cdf((x - mu) / sigma) - phi_lo) / (phi_hi - phi_lo)
}
