//! Command-line front end: synthesis, simulation, certification and gain sweeps.

pub mod certfile;
pub mod commands;
pub mod config;
pub mod error;

use clap::{Parser, Subcommand};

use commands::{certify, gain, simulate, synthesize};

#[derive(Debug, Parser)]
#[command(name = "satchain", version, about = "Stabilization of the saturated integrator chain")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize gains and every constant of the hybrid feedback.
    Synthesize(synthesize::SynthesizeArgs),
    /// Integrate one scenario and write its trajectory.
    Simulate(simulate::SimulateArgs),
    /// Check the Lyapunov inequalities along a simulation battery.
    Certify(certify::CertifyArgs),
    /// Estimate L_p gains over disturbance amplitude sweeps.
    Gain(gain::GainArgs),
}

pub fn run(cli: &Cli) -> error::CliResult<()> {
    match &cli.command {
        Command::Synthesize(a) => synthesize::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Certify(a) => certify::run(a),
        Command::Gain(a) => gain::run(a),
    }
}
