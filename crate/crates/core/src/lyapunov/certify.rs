//! Sampled checks of the differential inequalities along computed solutions.

use serde::{Deserialize, Serialize};

use super::certificate::LyapCertificate;
use super::functions::{coordinate_powers, v_i_with_grad, QuadraticNorm};
use crate::error::{Error, Result};
use crate::scalar::{norm2, Real};
use crate::satfn::sgn;
use crate::sim::{Phase, SystemKind, Trajectory};

/// Samples with `‖x‖` at or below this are treated as the trivial solution.
pub const TRIVIAL_NORM: f64 = 1e-12;

/// Default acceptance tolerance on the minimum slack.
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

/// The inequalities that can be checked along samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Inequality {
    /// `V̇_n ≤ −c_nV_n^α + ω_n(u + l_n sign ω_n)` for `ẋ = J x + e_n u`.
    Der0,
    /// `V̇_n ≤ −c_nV_n^α + 2l_n|d|` for the sign loop.
    Der1,
    /// `V̇_n ≤ −(c_n/2)V_n^α + 4l_n|d|` outside the ellipsoid.
    Ineq1,
    /// `V̇_0 ≤ −(c_0/2)V_0 + 4l_0 min(1, |d|)` inside the ellipsoid.
    Ineq2,
    /// `V̇_n ≤ −c_nV_n^α + (2+C_σ)l_n/k + 2(1+2/k)l_n|d|` for the saturated outer loop.
    Partial1,
    /// `V̇_n ≤ −C_1V_n^α + ω_n(u + l_n sign ω_n) + C_2Σ|d_i|^{η_i}` with a mismatched input.
    DerMis,
    /// `V̇_0 ≤ −c_0V_0 + l_0|d|` for `ẋ = (J − r l_n e_n Kᵀ)x + e_n d`.
    Der2,
}

impl Inequality {
    pub const ALL: [Inequality; 7] = [
        Inequality::Der0,
        Inequality::Der1,
        Inequality::Ineq1,
        Inequality::Ineq2,
        Inequality::Partial1,
        Inequality::DerMis,
        Inequality::Der2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Inequality::Der0 => "der0",
            Inequality::Der1 => "der1",
            Inequality::Ineq1 => "ineq1",
            Inequality::Ineq2 => "ineq2",
            Inequality::Partial1 => "partial1",
            Inequality::DerMis => "der-mis",
            Inequality::Der2 => "der2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Inequality::ALL
            .into_iter()
            .find(|q| q.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown inequality `{s}`")))
    }
}

/// One point of a solution in the coordinates the feedback sees.
#[derive(Debug, Clone, PartialEq)]
pub struct CertSample {
    pub t: f64,
    /// Control state `x − y e_n`.
    pub x: Vec<f64>,
    /// Its time derivative.
    pub xdot: Vec<f64>,
    /// Internal disturbance.
    pub d: f64,
    /// Mismatched input `F` entering `ẋ_i = x_{i+1} + F_i`, length `n−1`.
    pub mismatch: Vec<f64>,
    pub phase: Phase,
    pub in_layer: bool,
}

/// Samples of one solution together with the loop that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub system: SystemKind,
    pub samples: Vec<CertSample>,
}

impl From<&Trajectory> for SampleSet {
    fn from(tr: &Trajectory) -> Self {
        let n = tr.n;
        let samples = (0..tr.len())
            .map(|k| {
                let mut x = tr.x[k].clone();
                let mut xdot = tr.xdot[k].clone();
                let mut mismatch = if tr.e[k].is_empty() {
                    vec![0.0; n - 1]
                } else {
                    tr.e[k].clone()
                };
                if tr.shifted {
                    x[n - 1] -= tr.y[k];
                    xdot[n - 1] -= tr.d_n[k];
                    if let Some(last) = mismatch.last_mut() {
                        *last += tr.y[k];
                    }
                }
                CertSample {
                    t: tr.t[k],
                    x,
                    xdot,
                    d: tr.d[k],
                    mismatch,
                    phase: tr.phase[k],
                    in_layer: tr.in_layer[k],
                }
            })
            .collect();
        SampleSet {
            system: tr.system,
            samples,
        }
    }
}

/// Outcome of checking one inequality along a sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackReport {
    pub inequality: String,
    pub checked: usize,
    /// Near-origin or captured samples.
    pub trivial: usize,
    /// Samples inside the sign regularization layer.
    pub in_layer: usize,
    /// Samples outside the region where the inequality is claimed.
    pub outside_domain: usize,
    /// `RHS − LHS` minimized over checked samples (`+∞` if none).
    pub min_slack: f64,
    pub argmin_t: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl SlackReport {
    pub fn new(name: &str, tolerance: f64) -> Self {
        SlackReport {
            inequality: name.to_string(),
            checked: 0,
            trivial: 0,
            in_layer: 0,
            outside_domain: 0,
            min_slack: f64::INFINITY,
            argmin_t: f64::NAN,
            tolerance,
            pass: true,
        }
    }

    pub fn push(&mut self, t: f64, slack: f64) {
        self.checked += 1;
        if slack < self.min_slack || slack.is_nan() {
            self.min_slack = slack;
            self.argmin_t = t;
        }
        self.pass = self.min_slack >= -self.tolerance;
    }

    /// Combines reports of the same inequality.
    pub fn merge(&mut self, other: &SlackReport) {
        self.checked += other.checked;
        self.trivial += other.trivial;
        self.in_layer += other.in_layer;
        self.outside_domain += other.outside_domain;
        if other.min_slack < self.min_slack || other.min_slack.is_nan() {
            self.min_slack = other.min_slack;
            self.argmin_t = other.argmin_t;
        }
        self.pass = self.min_slack >= -self.tolerance;
    }
}

fn hybrid_like(system: SystemKind) -> bool {
    matches!(system, SystemKind::HybridLoop | SystemKind::ExternalLoop)
}

fn is_inner(phase: Phase) -> bool {
    matches!(phase, Phase::Inner | Phase::BoundarySlide)
}

/// Checks `ineq` at every admissible sample.
///
/// Near-origin samples are excluded, as are samples inside the sign layer for
/// the inequalities that assume an exact `sign`. Samples outside the
/// inequality's region (wrong branch, nonzero mismatched input where none is
/// allowed, wrong loop) are counted in `outside_domain`.
pub fn certify_inequality<T: Real>(ineq: Inequality, cert: &LyapCertificate<T>, set: &SampleSet, tolerance: f64) -> SlackReport {
    let mut rep = SlackReport::new(ineq.name(), tolerance);
    let ctrl = &cert.ctrl;
    let n = ctrl.n();
    let alpha = ctrl.alpha().as_f64();
    let l_n = ctrl.l_n().as_f64();
    let quad = cert.quadratic();
    let sig_inf = cert.sat.sigma_inf;
    let c_sig = cert.sat.c_sigma / sig_inf;
    let eta: Vec<f64> = ctrl.params.eta_i.iter().map(|&r| T::of_ratio(r).as_f64()).collect();
    let (rho_lo, rho_hi) = (cert.core.rho_interval.0.as_f64(), cert.core.rho_interval.1.as_f64());

    for s in &set.samples {
        if s.phase == Phase::Captured || norm2(&s.x) <= TRIVIAL_NORM {
            rep.trivial += 1;
            continue;
        }
        let clean = s.mismatch.iter().all(|&f| f == 0.0);
        // der0 and der-mis hold for any input, so the layer does not matter.
        if s.in_layer && !matches!(ineq, Inequality::Der0 | Inequality::DerMis) {
            rep.in_layer += 1;
            continue;
        }
        let admissible = match ineq {
            Inequality::Der0 => clean,
            Inequality::DerMis => true,
            Inequality::Der1 => clean && set.system == SystemKind::SignLoop,
            Inequality::Ineq1 => {
                clean
                    && (hybrid_like(set.system) && s.phase == Phase::Outer
                        || set.system == SystemKind::SatOmegaLoop && quad.eval(&to_t::<T>(&s.x)).as_f64() > cert.a)
            }
            Inequality::Ineq2 | Inequality::Der2 => clean && hybrid_like(set.system) && is_inner(s.phase),
            Inequality::Partial1 => {
                clean && (set.system == SystemKind::SatOmegaLoop || hybrid_like(set.system) && s.phase == Phase::Outer)
            }
        };
        if !admissible {
            rep.outside_domain += 1;
            continue;
        }
        let x = to_t::<T>(&s.x);
        let slack = match ineq {
            Inequality::Ineq2 | Inequality::Der2 => {
                let (v0, rate) = v0_rate(&quad, &x, &s.xdot);
                if ineq == Inequality::Ineq2 {
                    -0.5 * cert.c_0 * v0 + 4.0 * cert.l0_loop * s.d.abs().min(1.0) - rate
                } else {
                    // Any matched input splits as −r l_n Kᵀx + d for a slope r in the sector.
                    let w0 = cert.core.omega0(&x).as_f64();
                    let r = slope_ratio(cert, w0).clamp(rho_lo, rho_hi);
                    let d_eff = s.xdot[n - 1] + r * l_n * w0;
                    -cert.c_0 * v0 + cert.l_0 * d_eff.abs() - rate
                }
            }
            _ => {
                let (vn, grad, st) = v_i_with_grad(ctrl, &x, n);
                let vn = vn.as_f64();
                let omega = st.omega[n - 1].as_f64();
                let rate: f64 = grad.iter().zip(&s.xdot).map(|(g, v)| g.as_f64() * v).sum();
                let decay = vn.max(0.0).powf(alpha);
                let u = s.xdot[n - 1];
                match ineq {
                    Inequality::Der0 => -cert.c_n * decay + omega * (u + l_n * sgn(omega)) - rate,
                    Inequality::Der1 => -cert.c_n * decay + 2.0 * l_n * s.d.abs() - rate,
                    Inequality::Ineq1 => -0.5 * cert.c_n * decay + 4.0 * l_n * s.d.abs() - rate,
                    Inequality::Partial1 => {
                        let k = cert.k;
                        -cert.c_n * decay + (2.0 + c_sig) * l_n / k + 2.0 * (1.0 + 2.0 / k) * l_n * s.d.abs() - rate
                    }
                    Inequality::DerMis => {
                        let forcing: f64 = s.mismatch.iter().zip(&eta).map(|(f, e)| f.abs().powf(*e)).sum();
                        -cert.mismatch.c1 * decay + omega * (u + l_n * sgn(omega)) + cert.mismatch.c2 * forcing - rate
                    }
                    Inequality::Ineq2 | Inequality::Der2 => unreachable!(),
                }
            }
        };
        rep.push(s.t, slack);
    }
    rep
}

/// Runs [`certify_inequality`] directly on a trajectory.
pub fn certify_trajectory<T: Real>(ineq: Inequality, cert: &LyapCertificate<T>, tr: &Trajectory, tolerance: f64) -> SlackReport {
    certify_inequality(ineq, cert, &SampleSet::from(tr), tolerance)
}

/// `Z_μ = V_n^μ` satisfies `Ż_μ ≤ −c_μ Z_μ^{α_μ} + l_μ|d|` outside the
/// ellipsoid, with `α_μ = (μ−1+α)/μ`, `c_μ = μc_n/2` and
/// `l_μ = 4μ l_n v_A^{μ−1}`.
pub fn certify_power_decay<T: Real>(cert: &LyapCertificate<T>, set: &SampleSet, mu: f64, tolerance: f64) -> SlackReport {
    let mut rep = SlackReport::new(&format!("z-mu({mu})"), tolerance);
    let ctrl = &cert.ctrl;
    let n = ctrl.n();
    let alpha = ctrl.alpha().as_f64();
    let l_n = ctrl.l_n().as_f64();
    let alpha_mu = (mu - 1.0 + alpha) / mu;
    let c_mu = mu * cert.c_n / 2.0;
    let l_mu = 4.0 * mu * l_n * cert.v_a.powf(mu - 1.0);
    for s in &set.samples {
        if s.phase == Phase::Captured || norm2(&s.x) <= TRIVIAL_NORM {
            rep.trivial += 1;
            continue;
        }
        let clean = s.mismatch.iter().all(|&f| f == 0.0);
        if !(clean && hybrid_like(set.system) && s.phase == Phase::Outer) {
            rep.outside_domain += 1;
            continue;
        }
        let (vn, grad, _) = v_i_with_grad(ctrl, &to_t::<T>(&s.x), n);
        let vn = vn.as_f64();
        let rate: f64 = grad.iter().zip(&s.xdot).map(|(g, v)| g.as_f64() * v).sum();
        let z = vn.powf(mu);
        let zdot = mu * vn.powf(mu - 1.0) * rate;
        rep.push(s.t, -c_mu * z.powf(alpha_mu) + l_mu * s.d.abs() - zdot);
    }
    rep
}

/// Largest `|x_i|^{β_{i−1}+1}/(C_i V_n)` over the samples; at most one when
/// the coordinate bounds hold.
pub fn coordinate_bound_ratio<T: Real>(cert: &LyapCertificate<T>, set: &SampleSet) -> f64 {
    let ctrl = &cert.ctrl;
    set.samples
        .iter()
        .filter(|s| norm2(&s.x) > TRIVIAL_NORM)
        .map(|s| {
            let x = to_t::<T>(&s.x);
            let vn = super::functions::v_n(ctrl, &x).as_f64();
            coordinate_powers(ctrl, &x)
                .iter()
                .zip(&cert.coord_bounds)
                .map(|(p, c)| p.as_f64() / (c * vn))
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

fn to_t<T: Real>(x: &[f64]) -> Vec<T> {
    x.iter().map(|&v| T::of(v)).collect()
}

/// `(V_0, V̇_0)` with `V̇_0 = (Px)·ẋ / V_0`.
pub(crate) fn v0_rate<T: Real>(quad: &QuadraticNorm<T>, x: &[T], xdot: &[f64]) -> (f64, f64) {
    let v0 = quad.eval(x).as_f64();
    let px = quad.apply(x);
    let rate: f64 = px.iter().zip(xdot).map(|(p, v)| p.as_f64() * v).sum();
    (v0, rate / v0)
}

/// `σ(w)/(σ∞ w)`, the slope of the inner loop at `ω_0 = w`.
fn slope_ratio<T: Real>(cert: &LyapCertificate<T>, w: f64) -> f64 {
    let s = &cert.sat;
    if w == 0.0 {
        s.slope(0.0f64) / s.sigma_inf
    } else {
        s.eval(w) / (s.sigma_inf * w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::{synthesize_gains, SynthConfig};
    use crate::lyapunov::{v_n, CertConfig};
    use crate::satfn::SaturationSpec;
    use crate::sim::{integrate, DisturbanceSignal, Scenario};

    fn cert2() -> LyapCertificate<f64> {
        let ctrl = synthesize_gains::<f64>(2, &SynthConfig::default()).unwrap();
        LyapCertificate::build(ctrl, SaturationSpec::standard(), &CertConfig::default()).unwrap()
    }

    fn single(system: SystemKind, x: Vec<f64>, xdot: Vec<f64>, d: f64, phase: Phase) -> SampleSet {
        let m = x.len() - 1;
        SampleSet {
            system,
            samples: vec![CertSample {
                t: 0.0,
                x,
                xdot,
                d,
                mismatch: vec![0.0; m],
                phase,
                in_layer: false,
            }],
        }
    }

    #[test]
    fn der1_along_unperturbed_sign_loop() {
        let cert = cert2();
        let scn = Scenario::new(SystemKind::SignLoop, vec![1.0, 1.0], 10.0);
        let tr = integrate(&scn, &cert).unwrap();
        let rep = certify_trajectory(Inequality::Der1, &cert, &tr, DEFAULT_TOLERANCE);
        assert!(rep.pass && rep.checked > 0, "{rep:?}");
        assert!(rep.trivial > 0);
        let rep0 = certify_trajectory(Inequality::Der0, &cert, &tr, DEFAULT_TOLERANCE);
        assert!(rep0.pass);
    }

    #[test]
    fn der_mis_without_mismatch_differs_from_der0_by_decay_split() {
        let cert = cert2();
        let x = vec![0.4, -0.9];
        let set = single(SystemKind::HybridLoop, x.clone(), vec![-0.9, 0.7], 0.0, Phase::Outer);
        let a = certify_inequality(Inequality::Der0, &cert, &set, 0.0).min_slack;
        let b = certify_inequality(Inequality::DerMis, &cert, &set, 0.0).min_slack;
        let decay = v_n(&cert.ctrl, &x).powf(cert.ctrl.alpha());
        assert!((b - a - (cert.c_n - cert.mismatch.c1) * decay).abs() < 1e-12);
    }

    #[test]
    fn ineq2_caps_large_disturbances() {
        let cert = cert2();
        let x = vec![0.01, -0.02];
        let xdot = vec![-0.02, 0.05];
        let big = certify_inequality(Inequality::Ineq2, &cert, &single(SystemKind::HybridLoop, x.clone(), xdot.clone(), 5.0, Phase::Inner), 0.0);
        let one = certify_inequality(Inequality::Ineq2, &cert, &single(SystemKind::HybridLoop, x, xdot, 1.0, Phase::Inner), 0.0);
        assert_eq!(big.min_slack, one.min_slack);
    }

    #[test]
    fn wrong_branch_is_reported() {
        let cert = cert2();
        let set = single(SystemKind::HybridLoop, vec![0.01, 0.0], vec![0.0, 0.0], 0.0, Phase::Inner);
        let rep = certify_inequality(Inequality::Ineq1, &cert, &set, 0.0);
        assert_eq!((rep.checked, rep.outside_domain), (0, 1));
        let mut with_e = set.clone();
        with_e.samples[0].mismatch = vec![0.1];
        assert_eq!(certify_inequality(Inequality::Ineq2, &cert, &with_e, 0.0).outside_domain, 1);
        assert_eq!(certify_inequality(Inequality::DerMis, &cert, &with_e, 0.0).checked, 1);
    }

    #[test]
    fn corrupted_decay_rate_fails() {
        let mut cert = cert2();
        let scn = Scenario::new(SystemKind::HybridLoop, vec![2.0, -1.0], 5.0).with_d(DisturbanceSignal::constant(0.2));
        let tr = integrate(&scn, &cert).unwrap();
        assert!(certify_trajectory(Inequality::Der0, &cert, &tr, DEFAULT_TOLERANCE).pass);
        cert.c_n *= 10.0;
        assert!(!certify_trajectory(Inequality::Der0, &cert, &tr, DEFAULT_TOLERANCE).pass);
    }

    #[test]
    fn hybrid_battery_and_power_decay() {
        let cert = cert2();
        let scn = Scenario::new(SystemKind::HybridLoop, vec![3.0, -2.0], 20.0).with_d(DisturbanceSignal::ConstantWindow {
            value: 0.5,
            start: 0.0,
            end: 8.0,
        });
        let tr = integrate(&scn, &cert).unwrap();
        let set = SampleSet::from(&tr);
        for q in [Inequality::Ineq1, Inequality::Ineq2, Inequality::Partial1, Inequality::Der2, Inequality::DerMis] {
            let rep = certify_inequality(q, &cert, &set, DEFAULT_TOLERANCE);
            assert!(rep.pass && rep.checked > 0, "{rep:?}");
        }
        for mu in &cert.ctrl.params.mu {
            let mu = *mu.numer() as f64 / *mu.denom() as f64;
            assert!(certify_power_decay(&cert, &set, mu, DEFAULT_TOLERANCE).pass);
        }
        assert!(coordinate_bound_ratio(&cert, &set) <= 1.0);
    }

    #[test]
    fn parses_names() {
        for q in Inequality::ALL {
            assert_eq!(Inequality::parse(q.name()).unwrap(), q);
        }
        assert!(Inequality::parse("der9").is_err());
    }
}
