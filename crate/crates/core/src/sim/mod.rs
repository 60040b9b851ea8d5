//! Closed-loop simulation.

pub mod disturbance;
pub mod integrator;
pub mod run;
pub mod scenario;
pub mod trajectory;

pub use disturbance::DisturbanceSignal;
pub use integrator::{Integrator, Method, Stats, StepControl, Stop};
pub use run::{integrate, output_grid, run_matched_shift, Model};
pub use scenario::{Scenario, SolverSettings, SystemKind};
pub use trajectory::{EventKind, EventRecord, Phase, Trajectory};
