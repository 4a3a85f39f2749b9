//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real floating-point scalar the solver is generic over.
///
/// Implemented for `f32` and `f64`. Tolerances inside the solver are written
/// as `f64` literals and converted with [`Scalar::lit`]; with `f32` the very
/// tight defaults (1e-12 and below) saturate at machine precision, so callers
/// working in single precision should loosen them.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Converts an `f64` constant into the scalar type.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Soft-thresholding `sign(z) max(|z| - w, 0)`.
#[inline]
pub fn soft_threshold<T: Scalar>(z: T, w: T) -> T {
    if z > w {
        z - w
    } else if z < -w {
        z + w
    } else {
        T::zero()
    }
}

/// `|c + d| - |c|` evaluated without cancellation when no sign change occurs.
#[inline]
pub(crate) fn abs_increment<T: Scalar>(c: T, d: T) -> T {
    let e = c + d;
    if c > T::zero() && e >= T::zero() {
        d
    } else if c < T::zero() && e <= T::zero() {
        -d
    } else {
        e.abs() - c.abs()
    }
}
