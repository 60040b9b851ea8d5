//! Inner linear feedback `ω_0(x) = Kᵀx` with a common quadratic Lyapunov
//! matrix `P` for the whole sector of slopes, and its decay constants.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lyapunov::{SlackReport, TRIVIAL_NORM};
use crate::scalar::Real;
use crate::sim::integrator::no_projection;
use crate::sim::{DisturbanceSignal, Integrator, Method, StepControl};

/// Default number of grid points over the slope interval.
pub const DEFAULT_GRID: usize = 101;

/// Outcome of the slope-grid check of `M_ρᵀP + P M_ρ ≤ −I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub points: usize,
    /// Largest eigenvalue over the grid.
    pub worst_lambda: f64,
    pub worst_rho: f64,
    /// Bound on `|dλ_max/dρ|` (Weyl): `2 l_n ‖K‖ ‖P e_n‖`.
    pub lipschitz: f64,
    /// `worst_lambda + lipschitz·spacing/2`, a bound over the whole interval.
    pub continuity_bound: f64,
    pub pass: bool,
}

/// Linear core of the hybrid feedback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearCore<T> {
    pub n: usize,
    pub l_n: T,
    pub k: Vec<T>,
    pub p: Vec<Vec<T>>,
    pub rho_interval: (T, T),
    pub c0: T,
    pub l0: T,
    pub margin: f64,
    /// Which construction produced `(K, P)`.
    pub method: CoreMethod,
    pub grid: GridReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoreMethod {
    /// Poles at `−1` for the mid slope, Lyapunov equation, rescaled `P`.
    PolePlacement,
    /// Riccati design, valid for every slope above half the lower bound.
    Riccati,
}

/// Settings for [`synthesize_linear_core`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoreConfig {
    pub grid_points: usize,
    /// Relative margin used for `c_0`, `l_0` and the scaling of `P`.
    pub margin: f64,
    pub riccati_iterations: usize,
}

impl Default for CoreConfig {
    fn default() -> Self {
        CoreConfig {
            grid_points: DEFAULT_GRID,
            margin: 1e-2,
            riccati_iterations: 60,
        }
    }
}

fn shift(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if j == i + 1 { 1.0 } else { 0.0 })
}

/// `M_ρ = J_n − ρ l_n e_n Kᵀ`
pub fn closed_loop_matrix(k: &[f64], l_n: f64, rho: f64) -> DMatrix<f64> {
    let n = k.len();
    let mut m = shift(n);
    for j in 0..n {
        m[(n - 1, j)] -= rho * l_n * k[j];
    }
    m
}

/// Solves `Mᵀ P + P M = −Q` through its Kronecker form.
pub fn solve_lyapunov(m: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let mt = m.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    let big = eye.kronecker(&mt) + mt.kronecker(&eye);
    let rhs = DVector::from_iterator(n * n, q.iter().map(|v| -v));
    let sol = big
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidParameter("Lyapunov equation is singular".into()))?;
    let p = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

fn lambda_max_sym(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.max()
}

fn lambda_min_sym(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// `λ_max(M_ρᵀP + P M_ρ)`
pub fn lyapunov_lambda(k: &[f64], p: &DMatrix<f64>, l_n: f64, rho: f64) -> f64 {
    let m = closed_loop_matrix(k, l_n, rho);
    lambda_max_sym(&(m.transpose() * p + p * &m))
}

fn grid(rho: (f64, f64), points: usize) -> Vec<f64> {
    let pts = points.max(2);
    if rho.1 <= rho.0 {
        return vec![rho.0];
    }
    (0..pts)
        .map(|i| rho.0 + (rho.1 - rho.0) * i as f64 / (pts - 1) as f64)
        .collect()
}

/// Checks `λ_max(M_ρᵀP + P M_ρ) ≤ −1 + tol` on a uniform slope grid.
pub fn check_matrix_inequality(k: &[f64], p: &DMatrix<f64>, l_n: f64, rho: (f64, f64), points: usize, tol: f64) -> GridReport {
    let n = k.len();
    let rhos = grid(rho, points);
    let (mut worst_lambda, mut worst_rho) = (f64::NEG_INFINITY, rho.0);
    for &r in &rhos {
        let lam = lyapunov_lambda(k, p, l_n, r);
        if lam > worst_lambda {
            worst_lambda = lam;
            worst_rho = r;
        }
    }
    let pe = p.column(n - 1).norm();
    let knorm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
    let lipschitz = 2.0 * l_n * knorm * pe;
    let spacing = if rhos.len() > 1 { rhos[1] - rhos[0] } else { 0.0 };
    GridReport {
        points: rhos.len(),
        worst_lambda,
        worst_rho,
        lipschitz,
        continuity_bound: worst_lambda + lipschitz * spacing / 2.0,
        pass: worst_lambda <= -1.0 + tol,
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Scales `P` so the interval-wide continuity bound sits at `−(1+margin)`.
fn normalize(k: &[f64], p: DMatrix<f64>, l_n: f64, rho: (f64, f64), cfg: &CoreConfig) -> Option<DMatrix<f64>> {
    let rep = check_matrix_inequality(k, &p, l_n, rho, cfg.grid_points, 0.0);
    if !(rep.continuity_bound < 0.0) {
        return None;
    }
    Some(p * ((1.0 + cfg.margin) / -rep.continuity_bound))
}

fn pole_placement(n: usize, l_n: f64, rho: (f64, f64), cfg: &CoreConfig) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let mid = 0.5 * (rho.0 + rho.1);
    // (s+1)^n = s^n + ρ l_n Σ K_j s^{j−1}
    let k: Vec<f64> = (1..=n).map(|j| binomial(n, j - 1) / (mid * l_n)).collect();
    let m = closed_loop_matrix(&k, l_n, mid);
    let p = solve_lyapunov(&m, &DMatrix::identity(n, n)).ok()?;
    normalize(&k, p, l_n, rho, cfg).map(|p| (k, p))
}

/// Riccati design: `P` solves `JᵀP + PJ − P e_n e_nᵀ P + I = 0` (Kleinman
/// iteration) and `K = e_nᵀP/(ρ_min l_n)`, so that `M_ρᵀP + P M_ρ ≤ −I` for
/// every `ρ ≥ ρ_min/2`.
fn riccati(n: usize, l_n: f64, rho: (f64, f64), cfg: &CoreConfig) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let a = shift(n);
    let mut g: Vec<f64> = (1..=n).map(|j| binomial(n, j - 1)).collect();
    let mut p = DMatrix::zeros(n, n);
    for _ in 0..cfg.riccati_iterations {
        let mut acl = a.clone();
        for j in 0..n {
            acl[(n - 1, j)] -= g[j];
        }
        let mut q = DMatrix::<f64>::identity(n, n);
        for i in 0..n {
            for j in 0..n {
                q[(i, j)] += g[i] * g[j];
            }
        }
        let next = solve_lyapunov(&acl, &q).ok()?;
        let change = (&next - &p).norm() / next.norm().max(1e-300);
        p = next;
        g = (0..n).map(|j| p[(n - 1, j)]).collect();
        if change < 1e-14 {
            break;
        }
    }
    let k: Vec<f64> = g.iter().map(|v| v / (rho.0 * l_n)).collect();
    // The bound holds analytically on the whole interval; only guard rounding.
    let rep = check_matrix_inequality(&k, &p, l_n, rho, cfg.grid_points, 0.0);
    (rep.worst_lambda <= -1.0 + 1e-9).then(|| (k, p * (1.0 + cfg.margin)))
}

/// Builds `(K, P)` and the constants `c_0`, `l_0` for the slope interval.
///
/// `n = 1` reduces to the scalar inequality `−2ρ l_1 K P ≤ −1`.
pub fn synthesize_linear_core<T: Real>(n: usize, l_n: T, rho_interval: (T, T), cfg: &CoreConfig) -> Result<LinearCore<T>> {
    let l = l_n.as_f64();
    let rho = (rho_interval.0.as_f64(), rho_interval.1.as_f64());
    if n == 0 {
        return Err(Error::InvalidParameter("chain length must be at least 1".into()));
    }
    if !(l > 0.0 && rho.0 > 0.0 && rho.0 <= rho.1 && rho.1.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need l_n > 0 and 0 < rho_min <= rho_max, got l_n={l}, rho={rho:?}"
        )));
    }
    let (method, (k, p)) = match pole_placement(n, l, rho, cfg) {
        Some(kp) => (CoreMethod::PolePlacement, kp),
        None => match riccati(n, l, rho, cfg) {
            Some(kp) => (CoreMethod::Riccati, kp),
            None => {
                let rep = check_matrix_inequality(
                    &(1..=n).map(|j| binomial(n, j - 1) / l).collect::<Vec<_>>(),
                    &DMatrix::identity(n, n),
                    l,
                    rho,
                    cfg.grid_points,
                    0.0,
                );
                return Err(Error::LinearCore {
                    iterations: cfg.riccati_iterations,
                    worst_rho: rep.worst_rho,
                    worst_lambda: rep.worst_lambda,
                });
            }
        },
    };
    let report = check_matrix_inequality(&k, &p, l, rho, cfg.grid_points, 1e-9);
    if !report.pass {
        return Err(Error::LinearCore {
            iterations: 1,
            worst_rho: report.worst_rho,
            worst_lambda: report.worst_lambda,
        });
    }
    let lmax = lambda_max_sym(&p);
    let lmin = lambda_min_sym(&p);
    if !(lmin > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let pe = p.column(n - 1).norm();
    let c0 = (1.0 - cfg.margin) / (2.0 * lmax);
    let l0 = pe / lmin.sqrt() * (1.0 + cfg.margin);
    Ok(LinearCore {
        n,
        l_n,
        k: k.iter().map(|&v| T::of(v)).collect(),
        p: (0..n).map(|i| (0..n).map(|j| T::of(p[(i, j)])).collect()).collect(),
        rho_interval,
        c0: T::of(c0),
        l0: T::of(l0),
        margin: cfg.margin,
        method,
        grid: report,
    })
}

impl<T: Real> LinearCore<T> {
    pub fn p_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.p[i][j].as_f64())
    }

    pub fn k_f64(&self) -> Vec<f64> {
        self.k.iter().map(|v| v.as_f64()).collect()
    }

    /// `ω_0(x) = Kᵀx`
    pub fn omega0(&self, x: &[T]) -> T {
        self.k.iter().zip(x).fold(T::zero(), |a, (&k, &v)| a + k * v)
    }

    /// Re-runs the grid check with a given density.
    pub fn recheck(&self, points: usize) -> GridReport {
        let rho = (self.rho_interval.0.as_f64(), self.rho_interval.1.as_f64());
        check_matrix_inequality(&self.k_f64(), &self.p_matrix(), self.l_n.as_f64(), rho, points, 1e-9)
    }

    /// Switching radius `A = bound/√(KᵀP⁻¹K)`, the largest `A` with
    /// `max_{V_0 ≤ A} |Kᵀx| ≤ bound`.
    pub fn switching_radius(&self, bound: T) -> Result<T> {
        if !(bound > T::zero()) {
            return Err(Error::InvalidParameter("amplitude bound must be positive".into()));
        }
        switching_radius(&self.p_matrix(), &self.k_f64(), bound.as_f64()).map(T::of)
    }
}

/// `A = bound/√(KᵀP⁻¹K)`
pub fn switching_radius(p: &DMatrix<f64>, k: &[f64], bound: f64) -> Result<f64> {
    let kv = DVector::from_column_slice(k);
    let chol = p.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let q = kv.dot(&chol.solve(&kv));
    if !(q > 0.0) {
        return Err(Error::InvalidParameter("K must be nonzero".into()));
    }
    Ok(bound / q.sqrt())
}

/// One sample of `ẋ = (J_n − r l_n e_n Kᵀ)x + e_n d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub r: f64,
    pub d: f64,
}

/// Solves the linear loop with a time-varying slope `r(t)` and matched input
/// `d(t)`, sampled every `dt`. `breaks` lists the jump times of `r`.
pub fn simulate_linear<T: Real, R: Fn(f64) -> f64>(
    core: &LinearCore<T>,
    r: R,
    d: &DisturbanceSignal,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    breaks: &[f64],
) -> Result<Vec<LinearSample>> {
    let n = core.n;
    if x0.len() != n {
        return Err(Error::InvalidParameter(format!("x0 needs {n} entries")));
    }
    let k = core.k_f64();
    let l_n = core.l_n.as_f64();
    let grid = crate::sim::output_grid(horizon, dt);
    let mut cuts: Vec<f64> = breaks.iter().chain(&d.breakpoints()).copied().filter(|&b| b > 0.0 && b < horizon).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let sample = |t: f64, x: &[f64]| LinearSample {
        t,
        x: x.to_vec(),
        r: r(t),
        d: d.value(t, 0.0),
    };
    let mut out = vec![sample(0.0, x0)];
    let mut it = Integrator::<f64>::new(StepControl {
        method: Method::DormandPrince,
        rtol: 1e-10,
        atol: 1e-14,
        ..Default::default()
    });
    let (mut t, mut x) = (0.0, x0.to_vec());
    let mut idx = 1;
    for seg_end in cuts.iter().copied().chain(std::iter::once(horizon)) {
        // Sample the piecewise data from the left inside each segment.
        let left = seg_end - seg_end * f64::EPSILON;
        let f = |s: f64, y: &[f64], dy: &mut [f64]| {
            let s = s.min(left);
            dy[..n - 1].copy_from_slice(&y[1..n]);
            let w: f64 = k.iter().zip(y).map(|(a, b)| a * b).sum();
            dy[n - 1] = -r(s) * l_n * w + d.value(s, 0.0);
        };
        let stops: Vec<f64> = grid.iter().copied().filter(|&g| g > t && g <= seg_end).collect();
        let mut hits = Vec::new();
        let (t1, x1, _) = it.advance(&f, t, &x, seg_end, &stops, None::<&fn(f64, &[f64]) -> Vec<f64>>, 1e-10, &mut |s, y, at| {
            if at {
                hits.push((s, y.to_vec()));
            }
            false
        }, &no_projection)?;
        for (s, y) in hits {
            if idx < grid.len() && (s - grid[idx]).abs() <= 1e-9 * grid[idx].max(1.0) {
                out.push(sample(grid[idx], &y));
                idx += 1;
            }
        }
        t = t1;
        x = x1;
    }
    Ok(out)
}

/// Checks `V̇_0 ≤ −c_0V_0 + l_0|d|` along linear-loop samples.
pub fn certify_der2<T: Real>(core: &LinearCore<T>, samples: &[LinearSample], tolerance: f64) -> Result<SlackReport> {
    let (lo, hi) = (core.rho_interval.0.as_f64(), core.rho_interval.1.as_f64());
    let p = core.p_matrix();
    let k = core.k_f64();
    let (l_n, c0, l0) = (core.l_n.as_f64(), core.c0.as_f64(), core.l0.as_f64());
    let n = core.n;
    let mut rep = SlackReport::new("der2", tolerance);
    for s in samples {
        let slack_r = 1e-12 * hi.abs().max(1.0);
        if !(s.r >= lo - slack_r && s.r <= hi + slack_r) {
            return Err(Error::Domain {
                check: "der2".into(),
                reason: format!("slope r = {} at t = {} outside [{lo}, {hi}]", s.r, s.t),
            });
        }
        if crate::scalar::norm2(&s.x) <= TRIVIAL_NORM {
            rep.trivial += 1;
            continue;
        }
        let x = DVector::from_column_slice(&s.x);
        let w: f64 = k.iter().zip(&s.x).map(|(a, b)| a * b).sum();
        let mut xdot = DVector::zeros(n);
        for i in 0..n - 1 {
            xdot[i] = s.x[i + 1];
        }
        xdot[n - 1] = -s.r * l_n * w + s.d;
        let px = &p * &x;
        let v0 = x.dot(&px).sqrt();
        let rate = px.dot(&xdot) / v0;
        rep.push(s.t, -c0 * v0 + l0 * s.d.abs() - rate);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_core() {
        let core = synthesize_linear_core(1, 1.0f64, (1.0, 1.0), &CoreConfig::default()).unwrap();
        assert!(core.grid.pass);
        // K = 1, P = 1 also satisfies −2ρPK ≤ −1.
        let rep = check_matrix_inequality(&[1.0], &DMatrix::from_element(1, 1, 1.0), 1.0, (1.0, 1.0), 101, 1e-9);
        assert!(rep.pass && (rep.worst_lambda + 2.0).abs() < 1e-12);
    }

    #[test]
    fn lyapunov_solution_satisfies_equation() {
        let m = closed_loop_matrix(&[1.0, 2.0, 1.5], 1.3, 0.9);
        let q = DMatrix::identity(3, 3);
        let p = solve_lyapunov(&m, &q).unwrap();
        let res = m.transpose() * &p + &p * &m + &q;
        assert!(res.norm() < 1e-10);
    }

    #[test]
    fn n2_point_and_interval() {
        for rho in [(1.0, 1.0), (1f64.tanh(), 1.0)] {
            let core = synthesize_linear_core(2, 2.4f64, rho, &CoreConfig::default()).unwrap();
            assert!(core.grid.pass && core.grid.worst_lambda <= -1.0 + 1e-9);
            assert!(core.grid.continuity_bound <= -1.0);
            assert!(core.c0 > 0.0 && core.l0 > 0.0);
        }
    }

    #[test]
    fn wide_interval_uses_fallback_if_needed() {
        let core = synthesize_linear_core(3, 5.0f64, (0.05, 1.0), &CoreConfig::default()).unwrap();
        assert!(core.grid.pass);
        assert!(core.recheck(401).pass);
    }

    #[test]
    fn riccati_design_is_robust() {
        let cfg = CoreConfig::default();
        let (k, p) = riccati(3, 2.0, (0.1, 10.0), &cfg).unwrap();
        let rep = check_matrix_inequality(&k, &p, 2.0, (0.1, 10.0), 201, 1e-9);
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn switching_radius_closed_form() {
        let a = switching_radius(&DMatrix::identity(2, 2), &[3.0, 4.0], 1.0).unwrap();
        assert!((a - 0.2).abs() < 1e-15);
        assert!(switching_radius(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]), &[1.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn grid_refinement_is_consistent() {
        let core = synthesize_linear_core(3, 100.0f64, (0.5, 0.7), &CoreConfig::default()).unwrap();
        let coarse = core.recheck(101);
        let fine = core.recheck(201);
        assert!(fine.worst_lambda <= coarse.continuity_bound + 1e-12);
        assert_eq!(coarse.pass, fine.pass);
    }
    #[test]
    fn der2_holds_for_switching_slope() {
        let core = synthesize_linear_core(2, 2.4f64, (1f64.tanh(), 1.0), &CoreConfig::default()).unwrap();
        let (lo, hi) = (1f64.tanh(), 1.0);
        let r = move |t: f64| if (t as i64) % 2 == 0 { lo } else { hi };
        let breaks: Vec<f64> = (1..10).map(|i| i as f64).collect();
        let d = DisturbanceSignal::sine(0.3, 2.0);
        let samples = simulate_linear(&core, r, &d, &[1.0, -0.5], 10.0, 0.01, &breaks).unwrap();
        assert_eq!(samples.len(), 1001);
        let rep = certify_der2(&core, &samples, 1e-9).unwrap();
        assert!(rep.pass && rep.checked == 1001, "{rep:?}");
    }

    #[test]
    fn der2_unforced_decay_and_trivial_exclusion() {
        let core = synthesize_linear_core(3, 5.0f64, (1.0, 1.0), &CoreConfig::default()).unwrap();
        let samples = simulate_linear(&core, |_| 1.0, &DisturbanceSignal::Zero, &[0.2, 0.1, -0.3], 5.0, 0.05, &[]).unwrap();
        let rep = certify_der2(&core, &samples, 0.0).unwrap();
        assert!(rep.pass);
        let zero = simulate_linear(&core, |_| 1.0, &DisturbanceSignal::Zero, &[0.0; 3], 1.0, 0.1, &[]).unwrap();
        let rep = certify_der2(&core, &zero, 0.0).unwrap();
        assert_eq!((rep.checked, rep.trivial), (0, 11));
    }

    #[test]
    fn der2_rejects_slope_outside_sector() {
        let core = synthesize_linear_core(2, 2.4f64, (0.5, 1.0), &CoreConfig::default()).unwrap();
        let samples = simulate_linear(&core, |_| 2.0, &DisturbanceSignal::Zero, &[1.0, 0.0], 1.0, 0.1, &[]).unwrap();
        assert!(matches!(certify_der2(&core, &samples, 0.0), Err(Error::Domain { .. })));
    }
}
