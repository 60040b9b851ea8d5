use std::path::PathBuf;

use clap::Args;

use satchain::controller::synthesize_gains;
use satchain::lyapunov::LyapCertificate;
use satchain::satfn::{verify_s_function, SamplingGrid, SaturationSpec};

use crate::certfile::CertificateFile;
use crate::config::{self, SynthSettings};
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    /// Chain length.
    #[arg(long)]
    pub n: usize,
    /// S-function: standard, tanh or arctan.
    #[arg(long, default_value = "standard")]
    pub sat: String,
    /// Synthesis settings (TOML); defaults to `synthesize.toml` in the config directory.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Certificate output; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &SynthesizeArgs) -> CliResult<()> {
    let path = config::resolve(args.config.as_deref(), "synthesize.toml");
    let settings: SynthSettings = config::load(path.as_deref())?;
    settings.validate()?;
    let sat = SaturationSpec::by_name(&args.sat).map_err(|e| CliError::Config(e.to_string()))?;
    let report = verify_s_function(&sat, &SamplingGrid::covering(&sat)).map_err(CliError::Synthesis)?;
    if !report.pass {
        return Err(CliError::Synthesis(satchain::Error::MalformedSaturation {
            name: sat.name.clone(),
            reason: format!("sampled conditions fail: {report:?}"),
        }));
    }

    let ctrl = synthesize_gains::<f64>(args.n, &settings.synth_config()).map_err(CliError::Synthesis)?;
    eprintln!("gains: {:?}", ctrl.gains);
    let cert = LyapCertificate::build(ctrl, sat, &settings.cert_config()).map_err(CliError::Synthesis)?;
    cert.validate().map_err(CliError::Synthesis)?;
    eprintln!(
        "c_n = {:.6}, c_0 = {:.6}, l_0 = {:.6}, A = {:.6}, k = {:.6}, v_A = {:.6}, V_A = {:.6}",
        cert.c_n, cert.c_0, cert.l_0, cert.a, cert.k, cert.v_a, cert.big_v_a
    );

    let file = CertificateFile::new(cert, &settings);
    match &args.out {
        Some(p) => file.save(p),
        None => super::write_stdout(format!("{}\n", file.to_json()?).as_bytes()),
    }
}
