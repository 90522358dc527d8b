//! Scalar abstraction: the whole crate is generic over `f32`/`f64`.

use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable throughout the crate.
///
/// `nalgebra::RealField` supplies the linear-algebra surface (sqrt, exp,
/// acos, ...); the `num_traits` conversions bridge configuration values and
/// counters into the generic code.
pub trait Real: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy {
    /// Convert an `f64` constant (tolerances, config defaults) into `Self`.
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("finite constant")
    }

    /// Convert a count into `Self`.
    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("count fits in scalar")
    }
}

impl<T> Real for T where T: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy {}
