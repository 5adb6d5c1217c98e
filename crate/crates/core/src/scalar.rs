use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar the numerical modules are generic over.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` constant. Every value we use is representable in `f32`
    /// up to rounding, so this never fails for the implemented types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `ln(sqrt(2π))`.
#[inline]
pub fn ln_sqrt_2pi<F: Real>() -> F {
    F::lit(0.918_938_533_204_672_8)
}

/// Numerically stable `ln(Σ exp(xᵢ))`. Returns `-inf` for an empty slice.
pub fn log_sum_exp<F: Real>(terms: &[F]) -> F {
    let max = terms.iter().copied().fold(F::neg_infinity(), F::max);
    if max == F::neg_infinity() {
        return max;
    }
    let sum: F = terms.iter().map(|&t| (t - max).exp()).sum();
    max + sum.ln()
}
