//! Scalar abstraction shared by every numeric routine.

use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Real scalar usable by the solvers (`f32` or `f64`).
pub trait Real: RealField + Copy + ToPrimitive {
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    /// Lossy conversion back to `f64` (NaN if not representable).
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the scalar type.
    #[inline]
    fn eps() -> Self {
        Self::default_epsilon()
    }

    #[inline]
    fn is_finite_val(self) -> bool {
        self.to_f64_lossy().is_finite()
    }
}

impl<T: RealField + Copy + ToPrimitive> Real for T {}

pub(crate) fn all_finite<T: Real>(xs: impl IntoIterator<Item = T>) -> bool {
    xs.into_iter().all(|v| v.is_finite_val())
}

/// Modulus of a complex number over a generic real scalar.
#[inline]
pub fn cabs<T: Real>(z: nalgebra::Complex<T>) -> T {
    z.re.hypot(z.im)
}
