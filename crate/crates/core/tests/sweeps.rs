mod common;

use common::cert3;
use satchain::gains::{estimate_gain, FamilyKind, GainSweep};
use satchain::sim::SystemKind;

// A band-limited input whose 12 s tail window misses its largest peak.
#[test]
fn unsettled_tails_get_a_longer_horizon() {
    let family = vec![FamilyKind::BandLimited.member(f64::INFINITY, 10.0, 7)];
    let mut sweep = GainSweep::new(SystemKind::HybridLoop, 3, family, vec![10f64.powf(0.5)], 60.0);
    sweep.settle_doublings = 0;
    let short = estimate_gain(cert3(), f64::INFINITY, &sweep).unwrap();
    assert_eq!(short.excluded, 1);
    assert_eq!(short.records[0].note, "tail window not settled");

    sweep.settle_doublings = 2;
    let long = estimate_gain(cert3(), f64::INFINITY, &sweep).unwrap();
    assert_eq!(long.excluded, 0);
    assert_eq!(long.records[0].note, "horizon extended to 120");
    assert!(long.gamma_hat > 0.0);
}
