//! End-to-end acceptance suite; prints one PASS/FAIL line per criterion.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use satchain::controller::{synthesize_gains, ChainParams, SynthConfig};
use satchain::gains::{
    check_est_per, check_sign_bounds, estimate_gain_inspect, fit_c_inf, log_amplitudes, sign_battery_scenarios,
    EstPerRecord, FamilyKind, GainSweep,
};
use satchain::linear_core::{check_matrix_inequality, synthesize_linear_core, CoreConfig};
use satchain::lyapunov::{certify_trajectory, v_n, v_n_grad, CertConfig, Inequality, LyapCertificate, SlackReport};
use satchain::satfn::SaturationSpec;
use satchain::sim::{integrate, DisturbanceSignal, Scenario, SystemKind, Trajectory};
use satchain::{Certificate, Rational, Real};

const CERTIFIED: [Inequality; 4] = [Inequality::Der1, Inequality::Ineq1, Inequality::Ineq2, Inequality::DerMis];
const SLACK_TOL: f64 = 1e-6;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn certificate(n: usize) -> Certificate {
    let ctrl = synthesize_gains::<f64>(n, &SynthConfig::default()).expect("gains");
    LyapCertificate::build(ctrl, SaturationSpec::standard(), &CertConfig::default()).expect("certificate")
}

fn ball_point(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
    loop {
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s: f64 = u.iter().map(|v| v * v).sum();
        if s <= 1.0 && s > 1e-6 {
            return u.into_iter().map(|v| v * r).collect();
        }
    }
}

/// Certifier reports gathered from every battery for the last criterion.
#[derive(Default)]
struct Ledger {
    rows: Vec<SlackReport>,
    trajectories: usize,
}

impl Ledger {
    fn absorb(&mut self, reports: Vec<SlackReport>) {
        self.trajectories += 1;
        for rep in reports {
            match self.rows.iter_mut().find(|r| r.inequality == rep.inequality) {
                Some(row) => row.merge(&rep),
                None => self.rows.push(rep),
            }
        }
    }
}

fn certify_all(cert: &Certificate, tr: &Trajectory) -> Vec<SlackReport> {
    CERTIFIED.iter().map(|&q| certify_trajectory(q, cert, tr, SLACK_TOL)).collect()
}

fn r(a: i64, b: i64) -> Rational {
    Rational::new(a, b)
}

fn exponent_tables() -> Outcome {
    let c = ChainParams::new(3).expect("n = 3");
    let checks = [
        ("p", c.p == vec![r(1, 1), r(2, 3), r(1, 3), r(0, 1)]),
        ("beta", c.beta == vec![r(2, 3), r(3, 2), r(4, 1)]),
        ("alpha", c.alpha == r(4, 5)),
        ("mu", c.mu == vec![r(4, 5), r(3, 5), r(2, 5)]),
        ("alpha_i", c.alpha_i == vec![r(2, 1), r(4, 3)]),
        ("eta_i", c.eta_i == vec![r(2, 1), r(4, 1)]),
    ];
    let bad: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(k, _)| *k).collect();
    outcome(bad.is_empty(), if bad.is_empty() { "all tables exact".to_string() } else { format!("mismatch in {bad:?}") })
}

fn homogeneity(certs: &[Certificate]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for cert in certs {
        let ctrl = &cert.ctrl;
        let deg = f64::of_ratio(ctrl.params.lyap_degree());
        for _ in 0..1000 {
            let x: Vec<f64> = (0..ctrl.n()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let eps = rng.random_range(0.1..10.0);
            let lhs = v_n(ctrl, &ctrl.params.dilate(eps, &x));
            let rhs = eps.powf(deg) * v_n(ctrl, &x);
            if rhs > 0.0 {
                worst = worst.max((lhs - rhs).abs() / rhs);
            }
        }
    }
    outcome(worst <= 1e-9, format!("max relative error {worst:.2e} over 2000 samples"))
}

fn gradient_identity(certs: &[Certificate]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut worst_analytic: f64 = 0.0;
    for cert in certs {
        let ctrl = &cert.ctrl;
        let n = ctrl.n();
        for _ in 0..100 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let om = ctrl.omega_n(&x);
            let h = 1e-5 * x[n - 1].abs().max(1.0);
            let (mut hi, mut lo) = (x.clone(), x.clone());
            hi[n - 1] += h;
            lo[n - 1] -= h;
            let fd = (v_n(ctrl, &hi) - v_n(ctrl, &lo)) / (2.0 * h);
            worst = worst.max((fd - om).abs() / om.abs().max(1e-3));
            worst_analytic = worst_analytic.max((v_n_grad(ctrl, &x)[n - 1] - om).abs() / om.abs().max(1e-3));
        }
    }
    outcome(
        worst <= 1e-6 && worst_analytic <= 1e-9,
        format!("central differences {worst:.2e}, analytic gradient {worst_analytic:.2e}"),
    )
}

fn finite_time(certs: &[Certificate], ledger: &mut Ledger) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut jobs = Vec::new();
    for (ci, cert) in certs.iter().enumerate() {
        for _ in 0..20 {
            jobs.push((ci, ball_point(&mut rng, cert.n(), 2.0)));
        }
    }
    let runs: Vec<_> = jobs
        .par_iter()
        .map(|(ci, x0)| {
            let cert = &certs[*ci];
            let run = |eps: f64| {
                let mut scn = Scenario::new(SystemKind::SignLoop, x0.clone(), 100.0);
                scn.solver.eps_sm = eps;
                integrate(&scn, cert)
            };
            match (run(1e-5), run(1e-6)) {
                (Ok(a), Ok(b)) => {
                    let na = a.final_norm().unwrap_or(f64::INFINITY);
                    let nb = b.final_norm().unwrap_or(f64::INFINITY);
                    let diff = a
                        .final_state()
                        .ok()
                        .zip(b.final_state().ok())
                        .map(|(p, q)| p.iter().zip(q).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max))
                        .unwrap_or(f64::INFINITY);
                    let reports = [certify_all(cert, &a), certify_all(cert, &b)];
                    Ok((na.max(nb), diff, reports))
                }
                (Err(e), _) | (_, Err(e)) => Err(e.to_string()),
            }
        })
        .collect();
    let (mut worst_norm, mut worst_diff, mut failures) = (0.0f64, 0.0f64, Vec::new());
    for run in runs {
        match run {
            Ok((norm, diff, reports)) => {
                worst_norm = worst_norm.max(norm);
                worst_diff = worst_diff.max(diff);
                for rep in reports {
                    ledger.absorb(rep);
                }
            }
            Err(e) => failures.push(e),
        }
    }
    outcome(
        failures.is_empty() && worst_norm <= 1e-6 && worst_diff <= 1e-4,
        format!(
            "40 initial states x 2 widths: max |x(T)| {worst_norm:.2e}, max terminal difference {worst_diff:.2e}, {} failed runs",
            failures.len()
        ),
    )
}

fn matrix_inequality(certs: &[Certificate]) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut cases = 0;
    let mut errors = Vec::new();
    for sat in [SaturationSpec::standard(), SaturationSpec::tanh(), SaturationSpec::arctan()] {
        let rho = sat.rho_interval();
        let gains = [1.0, certs[0].ctrl.l_n(), certs[1].ctrl.l_n()];
        for (n, l_n) in (1..=3).zip(gains) {
            match synthesize_linear_core(n, l_n, rho, &CoreConfig::default()) {
                Ok(core) => {
                    let rep = check_matrix_inequality(&core.k_f64(), &core.p_matrix(), l_n, rho, 101, 1e-9);
                    worst = worst.max(rep.worst_lambda);
                    cases += 1;
                }
                Err(e) => errors.push(format!("n = {n}, {}: {e}", sat.name)),
            }
        }
    }
    outcome(
        errors.is_empty() && worst <= -1.0 + 1e-9,
        format!("{cases} cores, worst lambda_max {worst:.6}; {}", if errors.is_empty() { "no errors".into() } else { errors.join("; ") }),
    )
}

fn sign_bounds(cert: &Certificate, ledger: &mut Ledger) -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for p in [1.0, 2.0, f64::INFINITY] {
        let results: Vec<_> = sign_battery_scenarios(2, p)
            .par_iter()
            .map(|scn| {
                let tr = integrate(scn, cert).map_err(|e| e.to_string())?;
                let rec = check_sign_bounds(cert, &tr, p, 0.05).map_err(|e| e.to_string())?;
                Ok::<_, String>((rec, certify_all(cert, &tr)))
            })
            .collect();
        let (mut ok, mut worst_gain, mut worst_sup) = (0, 0.0f64, 0.0f64);
        for res in results {
            match res {
                Ok((rec, reports)) => {
                    ok += rec.pass() as usize;
                    worst_gain = worst_gain.max(rec.out_norm / rec.gain_bound);
                    worst_sup = worst_sup.max(rec.vn_sup / rec.sup_bound);
                    ledger.absorb(reports);
                }
                Err(e) => lines.push(format!("p = {p}: {e}")),
            }
        }
        pass &= ok == 10;
        lines.push(format!("p = {p}: {ok}/10 within, gain ratio {worst_gain:.3}, sup ratio {worst_sup:.3}"));
    }
    outcome(pass, lines.join("; "))
}

fn hybrid_gain(certs: &[Certificate], ledger: &mut Ledger) -> Outcome {
    let amplitudes = log_amplitudes(1e-2, 1e2, 9).expect("amplitudes");
    let mut lines = Vec::new();
    let mut pass = true;
    for cert in certs {
        let n = cert.n();
        for p in [1.0, 2.0, f64::INFINITY] {
            let family = FamilyKind::ALL.iter().map(|f| f.member(p, 10.0, 7)).collect();
            let sweep = GainSweep::new(SystemKind::HybridLoop, n, family, amplitudes.clone(), 60.0);
            match estimate_gain_inspect(cert, p, &sweep, |tr| certify_all(cert, tr)) {
                Ok((report, inspected)) => {
                    let ok = report.finite_gain && (p.is_infinite() || report.all_returned) && report.excluded == 0;
                    pass &= ok;
                    let worst_top = report
                        .family_ratios
                        .iter()
                        .map(|(med, top)| top / med)
                        .fold(0.0, f64::max);
                    lines.push(format!(
                        "n = {n}, p = {p}: gamma {:.3e}, top/median {worst_top:.2}, returned {}, excluded {}",
                        report.gamma_hat, report.all_returned, report.excluded
                    ));
                    for reps in inspected.into_iter().flatten() {
                        ledger.absorb(reps);
                    }
                }
                Err(e) => {
                    pass = false;
                    lines.push(format!("n = {n}, p = {p}: {e}"));
                }
            }
        }
    }
    outcome(pass, lines.join("; "))
}

fn external_battery() -> Vec<Scenario> {
    let sin = DisturbanceSignal::sine(1.0, 1.0);
    let c = DisturbanceSignal::constant;
    let mut out = Vec::new();
    let mut add = |d: DisturbanceSignal, e: Vec<DisturbanceSignal>, d_n: DisturbanceSignal| {
        let mut scn = Scenario::new(SystemKind::ExternalLoop, vec![0.5, -0.3, 0.2], 60.0);
        scn.d = d;
        scn.e = e;
        scn.d_n = d_n;
        out.push(scn);
    };
    add(DisturbanceSignal::Zero, vec![], DisturbanceSignal::Zero);
    add(DisturbanceSignal::Zero, vec![c(0.05), c(0.05)], DisturbanceSignal::Zero);
    add(DisturbanceSignal::Zero, vec![], sin.clone());
    add(DisturbanceSignal::sine(0.2, 2.0), vec![], DisturbanceSignal::Zero);
    add(c(0.2), vec![], sin.clone());
    add(DisturbanceSignal::Zero, vec![c(0.05), c(0.02)], sin.clone());
    add(DisturbanceSignal::sine(0.3, 0.7), vec![DisturbanceSignal::sine(0.05, 0.7), c(0.02)], sin.clone());
    add(DisturbanceSignal::Zero, vec![], DisturbanceSignal::sine(0.5, 0.5));
    out
}

// Γ(E) for a constant E in R^2 with the n = 3 exponents (2, 4).
fn gamma_constant(e1: f64, e2: f64) -> f64 {
    (e1 * e1 + e2 * e2).sqrt() + e1.abs().powi(2) + e2.abs().powi(4)
}

fn external(cert: &Certificate, ledger: &mut Ledger) -> Outcome {
    let battery = external_battery();
    let runs: Vec<_> = battery
        .par_iter()
        .map(|scn| {
            let tr = integrate(scn, cert).map_err(|e| e.to_string())?;
            let rec = check_est_per(&tr, &cert.ctrl.params).map_err(|e| e.to_string())?;
            Ok::<_, String>((rec, certify_all(cert, &tr)))
        })
        .collect();
    let mut records: Vec<EstPerRecord> = Vec::new();
    let mut errors = Vec::new();
    for run in runs {
        match run {
            Ok((rec, reports)) => {
                records.push(rec);
                ledger.absorb(reports);
            }
            Err(e) => errors.push(e),
        }
    }
    if !errors.is_empty() {
        return outcome(false, errors.join("; "));
    }
    let fit = fit_c_inf(&records, 1e-6);
    let n_sin = records[2].n_dn;
    let n_ok = [2, 4, 5, 6].iter().all(|&i| (records[i].n_dn - 2.0).abs() <= 1e-3);
    let gamma_ok = [(1, 0.05, 0.05), (5, 0.05, 0.02)]
        .iter()
        .all(|&(i, a, b)| (records[i].gamma_e - gamma_constant(a, b)).abs() <= 1e-12);
    outcome(
        fit.pass && n_ok && gamma_ok,
        format!(
            "C_inf {:.3}, unsettled {}, zero-input tail ok {}, N(sin) {n_sin:.6}, Gamma exact {gamma_ok}",
            fit.c_inf, fit.unsettled, fit.zero_rhs_ok
        ),
    )
}

fn certifiers(ledger: &Ledger) -> Outcome {
    let mut pass = ledger.trajectories > 0;
    let mut parts = Vec::new();
    for q in CERTIFIED {
        match ledger.rows.iter().find(|r| r.inequality == q.name()) {
            Some(r) => {
                pass &= r.checked > 0 && r.pass;
                parts.push(format!("{} min slack {:.3e} over {} samples", r.inequality, r.min_slack, r.checked));
            }
            None => {
                pass = false;
                parts.push(format!("{} never checked", q.name()));
            }
        }
    }
    outcome(pass, format!("{} trajectories: {}", ledger.trajectories, parts.join(", ")))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_satchain"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let d = dir.path();
    let path = |name: &str| d.join(name).to_string_lossy().into_owned();
    let scenario = "system = \"hybrid-loop\"\nx0 = [0.8, -0.3]\nhorizon = 20.0\n\n\
                    [d]\nkind = \"band-limited-random\"\namplitude = 0.5\nseed = 1\ncomponents = 8\nmax_freq = 2.0\nstart = 0.0\nend = 8.0\n";
    std::fs::write(d.join("scenario.toml"), scenario).expect("scenario");
    let certify_cfg = "systems = [\"sign-loop\", \"hybrid-loop\"]\nruns = 1\nhorizon = 10.0\n";
    std::fs::write(d.join("certify.toml"), certify_cfg).expect("config");
    let gain_cfg = "p = [2.0]\namp_points = 3\nhorizon = 30.0\n";
    std::fs::write(d.join("gain.toml"), gain_cfg).expect("config");

    let mut compared = Vec::new();
    for round in ["a", "b"] {
        let cert = path(&format!("cert_{round}.json"));
        let steps: [Vec<String>; 4] = [
            vec!["synthesize".into(), "--n".into(), "2".into(), "--out".into(), cert.clone()],
            vec![
                "simulate".into(),
                "--scenario".into(),
                path("scenario.toml"),
                "--certificate".into(),
                cert.clone(),
                "--seed".into(),
                "42".into(),
                "--out".into(),
                path(&format!("sim_{round}.csv")),
            ],
            vec![
                "certify".into(),
                "--certificate".into(),
                cert.clone(),
                "--config".into(),
                path("certify.toml"),
                "--seed".into(),
                "5".into(),
                "--out".into(),
                path(&format!("certify_{round}.csv")),
            ],
            vec![
                "gain".into(),
                "--certificate".into(),
                cert.clone(),
                "--config".into(),
                path("gain.toml"),
                "--seed".into(),
                "9".into(),
                "--out-dir".into(),
                path(&format!("gain_{round}")),
            ],
        ];
        for step in &steps {
            let args: Vec<&str> = step.iter().map(String::as_str).collect();
            if let Err(e) = run_cli(&args) {
                return outcome(false, e);
            }
        }
    }
    let same = |a: &Path, b: &Path| std::fs::read(a).ok().is_some_and(|x| std::fs::read(b).ok().is_some_and(|y| x == y));
    for (a, b) in [
        ("cert_a.json", "cert_b.json"),
        ("sim_a.csv", "sim_b.csv"),
        ("certify_a.csv", "certify_b.csv"),
        ("gain_a/gain_p2.csv", "gain_b/gain_p2.csv"),
        ("gain_a/gain_p2_summary.csv", "gain_b/gain_p2_summary.csv"),
    ] {
        if !same(&d.join(a), &d.join(b)) {
            return outcome(false, format!("{a} and {b} differ"));
        }
        compared.push(a.trim_end_matches("_a.csv").trim_end_matches("_a.json").to_string());
    }
    outcome(true, format!("byte-identical outputs of synthesize, simulate, certify and gain ({} files)", compared.len()))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let certs = vec![certificate(2), certificate(3)];
    let mut ledger = Ledger::default();
    let mut failed = 0;
    let mut report = |id: usize, name: &str, run: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        failed += (!o.pass) as usize;
        println!("{verdict} criterion {id:>2} {name} [{:.1} s]: {}", t.elapsed().as_secs_f64(), o.detail);
    };
    report(1, "exponent tables", &mut exponent_tables);
    report(2, "homogeneity", &mut || homogeneity(&certs));
    report(3, "gradient identity", &mut || gradient_identity(&certs));
    report(4, "finite-time convergence", &mut || finite_time(&certs, &mut ledger));
    report(5, "matrix inequality", &mut || matrix_inequality(&certs));
    report(6, "sign-loop norm bounds", &mut || sign_bounds(&certs[0], &mut ledger));
    report(7, "hybrid finite gain", &mut || hybrid_gain(&certs, &mut ledger));
    report(8, "external disturbances", &mut || external(&certs[1], &mut ledger));
    report(9, "inequality certifiers", &mut || certifiers(&ledger));
    report(10, "reproducibility", &mut reproducibility);
    println!("{} of 10 criteria passed in {:.1} s", 10 - failed, started.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
