mod common;

use common::{cert2, cert3};
use proptest::prelude::*;
use satchain::gains::lp_norm;
use satchain::lyapunov::{v_n, v_n_grad};
use satchain::satfn::{standard_sat, SaturationSpec};
use satchain::{Certificate, Real};

fn cert(n: usize) -> &'static Certificate {
    if n == 2 {
        cert2()
    } else {
        cert3()
    }
}

fn state(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n).prop_filter("away from the origin", |x| x.iter().any(|v| v.abs() > 1e-3))
}

fn chain() -> impl Strategy<Value = (usize, Vec<f64>)> {
    (2usize..=3).prop_flat_map(|n| (Just(n), state(n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn vn_is_homogeneous((n, x) in chain(), eps in 0.1f64..10.0) {
        let ctrl = &cert(n).ctrl;
        let deg = ctrl.params.lyap_degree();
        let scaled = v_n(ctrl, &ctrl.params.dilate(eps, &x));
        let expect = eps.powf(f64::of_ratio(deg)) * v_n(ctrl, &x);
        prop_assert!((scaled - expect).abs() <= 1e-9 * expect.abs().max(1e-300), "{scaled} vs {expect}");
    }

    #[test]
    fn sign_control_is_dilation_invariant((n, x) in chain(), eps in 0.1f64..10.0) {
        let ctrl = &cert(n).ctrl;
        let om = ctrl.omega_n(&x);
        prop_assume!(om.abs() > 1e-9);
        prop_assert_eq!(ctrl.sign_control(&x), ctrl.sign_control(&ctrl.params.dilate(eps, &x)));
        let deg = f64::of_ratio(ctrl.params.omega_degree());
        let scaled = ctrl.omega_n(&ctrl.params.dilate(eps, &x));
        prop_assert!((scaled - eps.powf(deg) * om).abs() <= 1e-9 * (eps.powf(deg) * om).abs());
    }

    #[test]
    fn last_partial_of_vn_is_omega((n, x) in chain()) {
        let ctrl = &cert(n).ctrl;
        let grad = v_n_grad(ctrl, &x);
        let om = ctrl.omega_n(&x);
        prop_assert!((grad[n - 1] - om).abs() <= 1e-6 * om.abs().max(1.0), "{} vs {om}", grad[n - 1]);
    }

    #[test]
    fn vn_derivative_matches_differences((n, x) in chain(), u in -3.0f64..3.0) {
        let ctrl = &cert(n).ctrl;
        let mut f: Vec<f64> = x[1..].to_vec();
        f.push(u);
        let grad = v_n_grad(ctrl, &x);
        let analytic: f64 = grad.iter().zip(&f).map(|(g, v)| g * v).sum();
        let h = 1e-6;
        let shifted = |s: f64| -> Vec<f64> { x.iter().zip(&f).map(|(a, b)| a + s * b).collect() };
        let fd = (v_n(ctrl, &shifted(h)) - v_n(ctrl, &shifted(-h))) / (2.0 * h);
        prop_assert!((analytic - fd).abs() <= 1e-4 * analytic.abs().max(1.0), "{analytic} vs {fd}");
    }

    #[test]
    fn sign_feedback_is_bounded_by_its_gain((n, x) in chain()) {
        let ctrl = &cert(n).ctrl;
        let (_, v) = ctrl.omega_v(&x, n);
        prop_assert!(v.abs() <= ctrl.l_n());
    }

    #[test]
    fn quadratic_derivative_identity((n, x) in chain(), t in 0.0f64..1.0, d in -1.0f64..1.0) {
        let c = cert(n);
        let core = &c.core;
        let q = c.quadratic();
        let (lo, hi) = core.rho_interval;
        let rho = lo + t * (hi - lo);
        let kx: f64 = core.k.iter().zip(&x).map(|(a, b)| a * b).sum();
        let mut f: Vec<f64> = x[1..].to_vec();
        f.push(-rho * core.l_n * kx + d);
        let v0 = q.eval(&x);
        let px = q.apply(&x);
        let mf: f64 = px.iter().zip(&f).map(|(a, b)| a * b).sum();
        let analytic = mf / v0;
        let h = 1e-6;
        let shifted = |s: f64| -> Vec<f64> { x.iter().zip(&f).map(|(a, b)| a + s * b).collect() };
        let fd = (q.eval(&shifted(h)) - q.eval(&shifted(-h))) / (2.0 * h);
        prop_assert!((analytic - fd).abs() <= 1e-6 * analytic.abs().max(1.0));
    }

    #[test]
    fn inner_branch_stays_in_the_sector((n, x) in chain(), level in 0.0f64..=1.0) {
        let c = cert(n);
        let v0 = c.v0(&x);
        let y: Vec<f64> = x.iter().map(|v| v * level * c.a / v0).collect();
        prop_assert!(c.v0(&y) <= c.a * (1.0 + 1e-12));
        let bound = 1.0f64.min(c.sat.b1).min(c.sat.b2);
        prop_assert!(c.core.omega0(&y).abs() <= bound * (1.0 + 1e-9));
    }

    #[test]
    fn shipped_saturations_keep_their_sector(x in prop_oneof![-50.0f64..50.0, -1e4f64..1e4]) {
        for spec in [SaturationSpec::standard(), SaturationSpec::tanh(), SaturationSpec::arctan()] {
            let xs = x * spec.eval(x);
            let lo = spec.a1 * x * standard_sat(x / spec.b1);
            let hi = spec.a2 * x * standard_sat(x / spec.b2);
            prop_assert!(lo <= xs + 1e-12 && xs <= hi + 1e-12, "{}: x = {x}", spec.name);
            let tail = (spec.eval(x.abs()) - spec.sigma_inf).abs();
            prop_assert!(tail <= spec.c_sigma / (1.0 + x.abs()) + 1e-12);
        }
    }

    #[test]
    fn lp_norm_is_absolutely_homogeneous(
        vals in prop::collection::vec(-5.0f64..5.0, 2..40),
        c in -10.0f64..10.0,
        p in prop_oneof![Just(1.0), Just(2.0), Just(3.5), Just(f64::INFINITY)],
    ) {
        let t: Vec<f64> = (0..vals.len()).map(|k| 0.1 * k as f64).collect();
        let scaled: Vec<f64> = vals.iter().map(|v| c * v).collect();
        let a = lp_norm(&t, &scaled, p).unwrap().value;
        let b = c.abs() * lp_norm(&t, &vals, p).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-12 * b.max(1.0));
    }
}

#[test]
fn homogeneity_holds_at_the_extremes_of_the_dilation() {
    let ctrl = &cert3().ctrl;
    let x = [0.3, -1.1, 0.7];
    for eps in [0.1, 10.0] {
        let deg = f64::of_ratio(ctrl.params.lyap_degree());
        let lhs = v_n(ctrl, &ctrl.params.dilate(eps, &x));
        let rhs = eps.powf(deg) * v_n(ctrl, &x);
        assert!((lhs - rhs).abs() <= 1e-9 * rhs);
    }
}

#[test]
fn single_precision_agrees_with_double() {
    let c = cert2();
    let gains: Vec<f32> = c.ctrl.gains.iter().map(|&g| g as f32).collect();
    let ctrl32 = satchain::Controller32::new(c.ctrl.params.clone(), gains).unwrap();
    for x in [[1.0, 1.0], [-0.4, 2.0], [0.05, -0.3]] {
        let x32 = [x[0] as f32, x[1] as f32];
        let a = v_n(&c.ctrl, &x);
        let b = v_n(&ctrl32, &x32) as f64;
        assert!((a - b).abs() <= 1e-5 * a, "{a} vs {b}");
        let (oa, ob) = (c.ctrl.omega_n(&x), ctrl32.omega_n(&x32) as f64);
        assert!((oa - ob).abs() <= 1e-5 * oa.abs().max(1.0));
    }
}

#[test]
fn certificate_survives_serialization() {
    let c = cert3();
    let text = serde_json::to_string(c).unwrap();
    let mut back: Certificate = serde_json::from_str(&text).unwrap();
    back.refresh();
    assert_eq!(&back, c);
}
