use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::Args;

use satchain::gains::{estimate_gain, log_amplitudes, GainReport, GainSweep};
use satchain::Certificate;

use crate::certfile::CertificateFile;
use crate::config::{self, SweepConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct GainArgs {
    #[arg(long)]
    pub certificate: PathBuf,
    /// Sweep settings (TOML); defaults to `gain.toml` in the config directory.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for the per-run CSV, summary and curve files.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Overrides the seed of the band-limited family.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// File-name tag of a norm index: `1`, `2.5`, `inf`.
pub fn p_tag(p: f64) -> String {
    if p.is_infinite() {
        "inf".into()
    } else {
        p.to_string()
    }
}

pub fn sweep_for(cfg: &SweepConfig, n: usize, p: f64) -> CliResult<GainSweep> {
    let amplitudes = log_amplitudes(cfg.amp_min, cfg.amp_max, cfg.amp_points).map_err(|e| CliError::Config(e.to_string()))?;
    let family = cfg.families.iter().map(|f| f.member(p, cfg.support, cfg.seed)).collect();
    let mut sweep = GainSweep::new(cfg.system, n, family, amplitudes, cfg.horizon);
    if p.is_infinite() && !cfg.x0.is_empty() {
        if let Some(bad) = cfg.x0.iter().find(|x| x.len() != n) {
            return Err(CliError::Config(format!("x0: expected {n} components, got {}", bad.len())));
        }
        sweep.x0 = cfg.x0.clone();
    }
    if let Some(r) = cfg.rtol {
        sweep.solver.rtol = r;
    }
    if let Some(e) = cfg.eps_sm {
        sweep.solver.eps_sm = e;
    }
    sweep.return_threshold = cfg.return_threshold;
    sweep.settle_doublings = cfg.settle_doublings;
    sweep.solver.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(sweep)
}

/// Finite gain, and for finite `p` every compactly supported run returned.
pub fn verdict(report: &GainReport) -> bool {
    report.finite_gain && (report.p.is_infinite() || report.all_returned)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Write { path: path.to_path_buf(), source })
}

pub fn write_report(report: &GainReport, families: usize, dir: &Path) -> CliResult<()> {
    let tag = p_tag(report.p);
    let wrap = |e: satchain::Error| CliError::Config(e.to_string());
    report.write_csv(create(&dir.join(format!("gain_p{tag}.csv")))?).map_err(wrap)?;
    report
        .write_summary(create(&dir.join(format!("gain_p{tag}_summary.csv")))?)
        .map_err(wrap)?;
    for f in 0..families {
        report
            .write_curve(f, create(&dir.join(format!("gain_p{tag}_curve{f}.dat")))?)
            .map_err(wrap)?;
    }
    Ok(())
}

pub fn run_sweeps(cert: &Certificate, cfg: &SweepConfig) -> CliResult<Vec<GainReport>> {
    cfg.p
        .iter()
        .map(|&p| {
            let sweep = sweep_for(cfg, cert.n(), p)?;
            estimate_gain(cert, p, &sweep).map_err(CliError::from_run)
        })
        .collect()
}

pub fn run(args: &GainArgs) -> CliResult<()> {
    let file = CertificateFile::load(&args.certificate)?;
    let path = config::resolve(args.config.as_deref(), "gain.toml");
    let mut cfg: SweepConfig = config::load(path.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&args.out_dir).map_err(|source| CliError::Write {
        path: args.out_dir.clone(),
        source,
    })?;
    let reports = run_sweeps(&file.certificate, &cfg)?;
    let mut failed = Vec::new();
    for r in &reports {
        write_report(r, cfg.families.len(), &args.out_dir)?;
        eprintln!(
            "p = {}: gamma_hat = {:.4e}, finite_gain = {}, all_returned = {}, excluded = {}",
            p_tag(r.p),
            r.gamma_hat,
            r.finite_gain,
            r.all_returned,
            r.excluded
        );
        if !verdict(r) {
            failed.push(p_tag(r.p));
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Certification(format!("gain verdict fails for p = {}", failed.join(", "))))
    }
}
