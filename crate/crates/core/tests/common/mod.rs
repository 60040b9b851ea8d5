use std::sync::OnceLock;

use satchain::controller::{synthesize_gains, SynthConfig};
use satchain::lyapunov::{CertConfig, LyapCertificate};
use satchain::satfn::SaturationSpec;
use satchain::Certificate;

fn build(n: usize) -> Certificate {
    let ctrl = synthesize_gains::<f64>(n, &SynthConfig::default()).expect("gains");
    LyapCertificate::build(ctrl, SaturationSpec::standard(), &CertConfig::default()).expect("certificate")
}

#[allow(dead_code)]
pub fn cert2() -> &'static Certificate {
    static C: OnceLock<Certificate> = OnceLock::new();
    C.get_or_init(|| build(2))
}

#[allow(dead_code)]
pub fn cert3() -> &'static Certificate {
    static C: OnceLock<Certificate> = OnceLock::new();
    C.get_or_init(|| build(3))
}
