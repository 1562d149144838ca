//! Floating-point scalar abstraction.
//!
//! Every numerical routine in the crate is generic over [`Scalar`], which is
//! implemented for `f32` and `f64`. The concrete `f64` aliases at the crate
//! root are what the CLI and the simulation harness use.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal, rounding if `Self` is narrower.
    fn lit(v: f64) -> Self;

    /// Converts a count.
    fn of_count(n: usize) -> Self;

    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn of_count(n: usize) -> Self {
        n as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn lit(v: f64) -> Self {
        v
    }

    #[inline]
    fn of_count(n: usize) -> Self {
        n as f64
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// `1 / (1 + exp(-eta))`, evaluated without overflow for either sign.
#[inline]
pub fn logistic<T: Scalar>(eta: T) -> T {
    if eta >= T::zero() {
        T::one() / (T::one() + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + exp(eta))`.
#[inline]
pub fn softplus<T: Scalar>(eta: T) -> T {
    eta.max(T::zero()) + (-eta.abs()).exp().ln_1p()
}

/// `log(p / (1 - p))`.
#[inline]
pub fn logit<T: Scalar>(p: T) -> T {
    (p / (T::one() - p)).ln()
}

/// Turns unnormalized log-weights into probabilities in place.
pub fn normalize_log_weights<T: Scalar>(weights: &mut [T]) {
    let max = weights
        .iter()
        .copied()
        .fold(T::neg_infinity(), |m, w| if w > m { w } else { m });
    let mut total = T::zero();
    for w in weights.iter_mut() {
        *w = (*w - max).exp();
        total += *w;
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn logistic_known_values() {
        assert_eq!(logistic(0.0f64), 0.5);
        assert!((logistic(-2.6f64) - 1.0 / (1.0 + 2.6f64.exp())).abs() < 1e-15);
        assert!(logistic(-800.0f64) >= 0.0);
        assert_eq!(logistic(800.0f64), 1.0);
    }

    #[test]
    fn softplus_matches_naive_in_safe_range() {
        for &x in &[-20.0f64, -1.0, 0.0, 0.5, 3.0, 20.0] {
            let naive = (1.0 + x.exp()).ln();
            assert!((softplus(x) - naive).abs() < 1e-12, "{x}");
        }
        assert!((softplus(1000.0f64) - 1000.0).abs() < 1e-9);
        assert!(softplus(-1000.0f64) >= 0.0);
    }

    #[test]
    fn normalize_handles_large_offsets() {
        let mut w = vec![-1000.0f64, -1000.0 + 2.0f64.ln()];
        normalize_log_weights(&mut w);
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((w[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn f32_paths_agree_with_f64() {
        let a = logistic(1.25f32) as f64;
        assert!((a - logistic(1.25f64)).abs() < 1e-6);
        let b = softplus(-3.5f32) as f64;
        assert!((b - softplus(-3.5f64)).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn logit_inverts_logistic(eta in -15.0f64..15.0) {
            let back = logit(logistic(eta));
            prop_assert!((back - eta).abs() < 1e-6 * (1.0 + eta.abs()));
        }
    }
}
