//! Scalar abstraction shared by every solver in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type the lattice, quadrature and PDE code is generic over.
///
/// Implemented for `f32` and `f64`. Tolerances in the crate are written as
/// `f64` literals and converted with [`Scalar::lit`]; comparisons that need
/// to stay meaningful in single precision go through [`Scalar::tol`].
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into `Self`.
    fn lit(x: f64) -> Self;

    /// An absolute tolerance that is at least `requested` and never below a
    /// few ulps of `scale`.
    fn tol(requested: f64, scale: Self) -> Self {
        let floor = Self::epsilon() * Self::lit(8.0) * scale.abs().max(Self::one());
        Self::lit(requested).max(floor)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }
}

impl Scalar for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }
}

/// `n` evenly spaced points on `[lo, hi]`, endpoints included.
pub fn linspace<S: Scalar>(lo: S, hi: S, n: usize) -> Vec<S> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let last = S::from_usize(n - 1).unwrap();
            (0..n)
                .map(|k| {
                    if k == n - 1 {
                        hi
                    } else {
                        lo + (hi - lo) * S::from_usize(k).unwrap() / last
                    }
                })
                .collect()
        }
    }
}

/// Seventeen significant digits in scientific notation, the crate's
/// round-trip format for CSV and JSON output.
pub fn format_sig17(x: f64) -> String {
    format!("{x:.16e}")
}
