//! Lyapunov functions of the closed loops and estimation of their constants.

pub mod certificate;
pub mod certify;
pub mod estimate;
pub mod functions;

pub use certificate::{CertConfig, LyapCertificate};
pub use certify::*;
pub use estimate::*;
pub use functions::*;
