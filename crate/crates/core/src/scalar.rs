//! Floating scalar abstraction for the estimation layer.

/// Floating-point scalar (`f32` or `f64`) used by iterative eigensolvers,
/// Fourier accumulation and regression fits.  Exact quantities stay in big
/// integers/rationals and only cross into `Real` at the reporting boundary.
pub trait Real:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + num_traits::NumAssign
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, for constants and rational-to-float exits.
    fn from_f64_lossy(x: f64) -> Self {
        num_traits::cast(x).expect("finite f64 converts to any Real")
    }
}

impl Real for f32 {}
impl Real for f64 {}
