//! Exponent tables, the recursive homogeneous feedback and its gain search.

pub mod feedback;
pub mod params;
pub mod synth;

pub use feedback::{ChainState, HomogeneousController, SynthesisCertificate};
pub use params::{ChainParams, MAX_CHAIN};
pub use synth::{level_drift_max, synthesize_gains, SynthConfig};
