use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use satchain::lyapunov::{certify_power_decay, certify_trajectory, coordinate_bound_ratio, SampleSet, SlackReport};
use satchain::sim::{integrate, DisturbanceSignal, Scenario, SystemKind, Trajectory};
use satchain::Certificate;

use crate::certfile::CertificateFile;
use crate::config::{self, BatteryConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long)]
    pub certificate: PathBuf,
    /// Battery settings (TOML); defaults to `certify.toml` in the config directory.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the battery seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Uniform sample of the ball of radius `r` in `R^n`.
pub fn ball_point(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
    loop {
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s: f64 = u.iter().map(|v| v * v).sum();
        if s <= 1.0 && s > 1e-12 {
            return u.into_iter().map(|v| v * r).collect();
        }
    }
}

/// One undisturbed and `runs` disturbed scenarios for each system.
pub fn battery(cfg: &BatteryConfig, n: usize) -> Vec<(String, Scenario)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    for &system in &cfg.systems {
        for r in 0..=cfg.runs {
            let x0 = ball_point(&mut rng, n, cfg.x0_radius);
            let mut scn = Scenario::new(system, x0, cfg.horizon);
            scn.solver.eps_sm = cfg.eps_sm;
            if r > 0 {
                scn.d = DisturbanceSignal::BandLimitedRandom {
                    amplitude: cfg.amplitude,
                    seed: cfg.seed.wrapping_mul(1000).wrapping_add(r as u64),
                    components: 8,
                    max_freq: 2.0,
                    start: 0.0,
                    end: cfg.support,
                };
                if system == SystemKind::ExternalLoop {
                    scn.d_n = DisturbanceSignal::sine(cfg.amplitude, 1.0);
                    scn.e = (0..n - 1)
                        .map(|_| DisturbanceSignal::ConstantWindow {
                            value: 0.5 * cfg.amplitude,
                            start: 0.0,
                            end: cfg.support,
                        })
                        .collect();
                }
            }
            let label = format!("{}#{r}", system_name(system));
            out.push((label, scn));
        }
    }
    out
}

fn system_name(system: SystemKind) -> &'static str {
    match system {
        SystemKind::SignLoop => "sign-loop",
        SystemKind::SatOmegaLoop => "sat-omega-loop",
        SystemKind::HybridLoop => "hybrid-loop",
        SystemKind::ExternalLoop => "external-loop",
    }
}

/// A merged report row and the run holding its worst sample.
#[derive(Debug, Clone)]
pub struct CheckRow {
    pub report: SlackReport,
    pub worst_run: String,
}

fn fold_row(rows: &mut Vec<CheckRow>, label: &str, rep: SlackReport) {
    match rows.iter_mut().find(|r| r.report.inequality == rep.inequality) {
        Some(row) => {
            let worse = rep.min_slack < row.report.min_slack || rep.min_slack.is_nan();
            row.report.merge(&rep);
            if worse {
                row.worst_run = label.to_string();
            }
        }
        None => rows.push(CheckRow {
            worst_run: if rep.checked > 0 { label.to_string() } else { String::new() },
            report: rep,
        }),
    }
}

/// Runs the battery and every requested check.
pub fn certify_battery(cert: &Certificate, cfg: &BatteryConfig) -> CliResult<Vec<CheckRow>> {
    let runs = battery(cfg, cert.n());
    let trajectories: Vec<(String, Trajectory)> = runs
        .par_iter()
        .map(|(label, scn)| {
            integrate(scn, cert)
                .map(|tr| (label.clone(), tr))
                .map_err(CliError::from_run)
        })
        .collect::<CliResult<_>>()?;

    let mut rows = Vec::new();
    let mus: Vec<f64> = cert
        .ctrl
        .params
        .mu
        .iter()
        .map(|m| *m.numer() as f64 / *m.denom() as f64)
        .collect();
    for (label, tr) in &trajectories {
        for &q in &cfg.inequalities {
            fold_row(&mut rows, label, certify_trajectory(q, cert, tr, cfg.tolerance));
        }
        if matches!(tr.system, SystemKind::HybridLoop) {
            let set = SampleSet::from(tr);
            for (i, &mu) in mus.iter().enumerate() {
                let mut rep = certify_power_decay(cert, &set, mu, cfg.tolerance);
                rep.inequality = format!("power-decay-mu{}", i + 1);
                fold_row(&mut rows, label, rep);
            }
            let ratio = coordinate_bound_ratio(cert, &set);
            let mut rep = SlackReport::new("coordinate-bounds", cfg.tolerance);
            rep.push(f64::NAN, 1.0 - ratio);
            fold_row(&mut rows, label, rep);
        }
    }
    Ok(rows)
}

pub fn write_rows<W: Write>(rows: &[CheckRow], out: W) -> CliResult<()> {
    let io = |e: csv::Error| CliError::Config(format!("report output: {e}"));
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record([
        "check",
        "checked",
        "trivial",
        "in_layer",
        "outside_domain",
        "min_slack",
        "argmin_t",
        "worst_run",
        "tolerance",
        "pass",
    ])
    .map_err(io)?;
    for row in rows {
        let r = &row.report;
        wtr.write_record([
            r.inequality.clone(),
            r.checked.to_string(),
            r.trivial.to_string(),
            r.in_layer.to_string(),
            r.outside_domain.to_string(),
            r.min_slack.to_string(),
            r.argmin_t.to_string(),
            row.worst_run.clone(),
            r.tolerance.to_string(),
            r.pass.to_string(),
        ])
        .map_err(io)?;
    }
    wtr.flush().map_err(|e| CliError::Config(format!("report output: {e}")))
}

pub fn run(args: &CertifyArgs) -> CliResult<()> {
    let file = CertificateFile::load(&args.certificate)?;
    let path = config::resolve(args.config.as_deref(), "certify.toml");
    let mut cfg: BatteryConfig = config::load(path.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let rows = certify_battery(&file.certificate, &cfg)?;
    let mut buf = Vec::new();
    write_rows(&rows, &mut buf)?;
    match &args.out {
        Some(p) => std::fs::write(p, &buf).map_err(|source| CliError::Write { path: p.clone(), source })?,
        None => super::write_stdout(&buf)?,
    }
    let failed: Vec<&str> = rows
        .iter()
        .filter(|r| !r.report.pass)
        .map(|r| r.report.inequality.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Certification(format!("negative slack in {}", failed.join(", "))))
    }
}
