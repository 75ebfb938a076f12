//! Exact arithmetic and spectral estimation for matrix groups acting on the
//! torus.
//!
//! The crate splits into two layers.  The exact layer (big-integer matrices,
//! rational interval arithmetic, reduced words, quadratic extensions) decides
//! every set-membership and measure question with no floating-point drift:
//! ball radii, shell decompositions, boundary cylinder measures, walk
//! pushforwards, box discrepancies.  The estimation layer (growth fits,
//! operator-norm iteration, Monte Carlo drift/entropy, decay-rate fits)
//! consumes exact data and is generic over the working scalar through
//! [`scalar::Real`].
//!
//! Concrete aliases at the crate root fix `f64` as the default scalar.

pub mod boundary;
pub mod discrepancy;
pub mod enumerate;
pub mod interval;
pub mod matrix;
pub mod quad;
pub mod scalar;
pub mod spectral;
pub mod torus;
pub mod walks;
pub mod word;

pub use scalar::Real;

/// Default estimation scalar.
pub type Scalar = f64;

/// Growth fit at the default scalar.
pub type GrowthFit = enumerate::GrowthFit<Scalar>;

/// Operator-norm certificate at the default scalar.
pub type NormEstimate = spectral::NormEstimate<Scalar>;
