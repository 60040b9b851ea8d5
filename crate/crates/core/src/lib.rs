//! Homogeneous and hybrid stabilization of a saturated integrator chain.

pub mod controller;
pub mod gains;
pub mod linear_core;
pub mod hybrid;
pub mod error;
pub mod lyapunov;
pub mod sampling;
pub mod satfn;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::{Rational, Real};

/// Double-precision instantiations.
pub type Controller = controller::HomogeneousController<f64>;
pub type Certificate = lyapunov::LyapCertificate<f64>;
pub type Core = linear_core::LinearCore<f64>;
pub type Hybrid = hybrid::HybridFeedback<f64>;

/// Single-precision instantiations.
pub type Controller32 = controller::HomogeneousController<f32>;
pub type Certificate32 = lyapunov::LyapCertificate<f32>;
