//! Scalar abstraction for the numeric kernels.
//!
//! Everything that computes is generic over [`Real`] so the same code runs
//! in `f32` or `f64`; the crate root pins the default double-precision lane.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum<Self>
    + FromStr<Err = std::num::ParseFloatError>
    + Display
    + LowerExp
    + Debug
    + Send
    + Sync
    + 'static
{
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum<Self>
        + FromStr<Err = std::num::ParseFloatError>
        + Display
        + LowerExp
        + Debug
        + Send
        + Sync
        + 'static
{
}

/// Convert an `f64` constant into the active scalar type.
#[inline]
pub fn real<F: Real>(x: f64) -> F {
    F::from_f64(x).expect("f64 is representable in every Real type")
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_matches_naive_form_and_is_stable() {
        for &x in &[-3.0f64, -0.5, 0.0, 0.5, 3.0] {
            let naive = 1.0 / (1.0 + (-x).exp());
            assert!((sigmoid(x) - naive).abs() < 1e-15);
        }
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert!(sigmoid(800.0f64) <= 1.0);
        assert!(sigmoid(-800.0f64).is_finite());
    }

    #[test]
    fn real_roundtrips_in_both_lanes() {
        assert_eq!(real::<f64>(2.2), 2.2);
        assert_eq!(real::<f32>(1.5), 1.5f32);
    }
}
