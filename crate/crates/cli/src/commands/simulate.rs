use std::path::PathBuf;

use clap::Args;

use satchain::sim::{integrate, DisturbanceSignal, Scenario};

use crate::certfile::CertificateFile;
use crate::config;
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub certificate: PathBuf,
    /// Trajectory CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Reseeds every band-limited disturbance of the scenario.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Gives `d`, `e[i]` and `d_n` distinct seeds derived from `seed`.
pub fn reseed(scn: &mut Scenario, seed: u64) {
    let set = |s: &mut DisturbanceSignal, offset: u64| {
        if let DisturbanceSignal::BandLimitedRandom { seed: ds, .. } = s {
            *ds = seed.wrapping_add(offset);
        }
    };
    set(&mut scn.d, 0);
    let m = scn.e.len() as u64;
    for (i, e) in scn.e.iter_mut().enumerate() {
        set(e, 1 + i as u64);
    }
    set(&mut scn.d_n, 1 + m);
}

pub fn run(args: &SimulateArgs) -> CliResult<()> {
    let path = config::resolve(Some(&args.scenario), "scenario.toml").unwrap_or_else(|| args.scenario.clone());
    let mut scn: Scenario = config::parse(&config::read_text(&path)?, &path.display().to_string())?;
    let cert_path = config::resolve(Some(&args.certificate), "certificate.json").unwrap_or_else(|| args.certificate.clone());
    let file = CertificateFile::load(&cert_path)?;
    if let Some(seed) = args.seed {
        reseed(&mut scn, seed);
    }
    scn.validate(file.n).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;

    let tr = integrate(&scn, &file.certificate).map_err(CliError::from_run)?;
    for w in &tr.warnings {
        eprintln!("warning: {w}");
    }
    if let Ok(norm) = tr.final_norm() {
        eprintln!("final |x| = {norm:.3e} after {} steps", tr.stats.accepted);
    }
    let csv = tr.to_csv_string().map_err(CliError::Integration)?;
    match &args.out {
        Some(p) => std::fs::write(p, csv).map_err(|source| CliError::Write { path: p.clone(), source }),
        None => super::write_stdout(csv.as_bytes()),
    }
}
