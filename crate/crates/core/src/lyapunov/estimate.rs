//! Sampled estimates of the constants attached to `V_n` and `V_0`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::functions::{project_to_sphere, v_i_with_grad, v_n, QuadraticNorm};
use crate::controller::HomogeneousController;
use crate::error::{Error, Result};
use crate::sampling::{cube_directions, maximize_on, minimize_on, SearchPlan};
use crate::scalar::Real;

/// Fewer sphere samples than this triggers a coverage warning.
pub const MIN_SPHERE_SAMPLES: usize = 1000;

/// `g(x) = Σ_{j<n} ∂_jV_n x_{j+1}` and `ω_n(x)`.
pub fn drift_and_omega<T: Real>(ctrl: &HomogeneousController<T>, x: &[T]) -> (T, T) {
    let n = ctrl.n();
    let (_, grad, st) = v_i_with_grad(ctrl, x, n);
    let g = (0..n - 1).fold(T::zero(), |a, j| a + grad[j] * x[j + 1]);
    (g, st.omega[n - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnEstimate {
    /// Certified value `(1 − margin)·raw_min`.
    pub value: f64,
    /// Sampled infimum of `l_n|ω_n| − g` on `{V_n = 1}`.
    pub raw_min: f64,
    pub margin: f64,
    pub samples: usize,
    pub warning: Option<String>,
}

/// Decay rate `c_n` with `V̇_n ≤ −c_n V_n^α` for the sign feedback.
///
/// On `{ω_n = 0}` every element of `sign` multiplies zero, so the worst
/// Filippov element contributes nothing and the formula is uniform.
pub fn estimate_cn<T: Real>(ctrl: &HomogeneousController<T>, plan: &SearchPlan, margin: f64) -> Result<CnEstimate> {
    let n = ctrl.n();
    let l = ctrl.l_n();
    let ext = minimize_on(
        n,
        plan,
        |u: &[T]| project_to_sphere(ctrl, u, n),
        |x: &[T]| {
            let (g, w) = drift_and_omega(ctrl, x);
            l * w.abs() - g
        },
    );
    let raw = ext.value.as_f64();
    if !(raw > 0.0) {
        return Err(Error::Synthesis {
            level: n,
            reason: format!("decay infimum on the sphere is {raw:.3e}, not positive"),
        });
    }
    let warning = (plan.samples < MIN_SPHERE_SAMPLES).then(|| {
        format!(
            "only {} sphere samples (< {MIN_SPHERE_SAMPLES}); c_n may be overestimated",
            plan.samples
        )
    });
    Ok(CnEstimate {
        value: (1.0 - margin) * raw,
        raw_min: raw,
        margin,
        samples: plan.samples,
        warning,
    })
}

/// Extremes of `V_n` tied to the ellipsoid `{V_0 = A}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidBounds {
    /// `(1 − m)·min(surface minimum, outside minimum)`.
    pub v_a: f64,
    /// `(1 + m)·max of V_n on {V_0 = A}`.
    pub big_v_a: f64,
    pub surface_min: f64,
    pub surface_max: f64,
    /// Largest `c` with `{V_n < c} ⊂ {V_0 < A}`.
    pub outside_min: f64,
    pub margin: f64,
}

/// Maps a direction to `{xᵀPx = A²}`.
pub fn ellipsoid_projector(p: &DMatrix<f64>, a: f64) -> Result<impl Fn(&[f64]) -> Option<Vec<f64>> + Sync> {
    let chol = p.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let lt = chol.l().transpose();
    Ok(move |u: &[f64]| {
        let nu = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(nu > 0.0) {
            return None;
        }
        let v = nalgebra::DVector::from_iterator(u.len(), u.iter().map(|x| a * x / nu));
        let x = lt.clone().solve_upper_triangular(&v)?;
        Some(x.iter().copied().collect())
    })
}

/// `v_A` and `V_A` for the switching radius `A`.
pub fn estimate_va_big_va<T: Real>(
    ctrl: &HomogeneousController<T>,
    p: &[Vec<T>],
    a: T,
    plan: &SearchPlan,
    margin: f64,
) -> Result<EllipsoidBounds> {
    if !(a > T::zero()) {
        return Err(Error::InvalidParameter("switching radius A must be positive".into()));
    }
    let n = ctrl.n();
    let pm = DMatrix::from_fn(n, n, |i, j| p[i][j].as_f64());
    let norm = QuadraticNorm::new(p.to_vec())?;
    let af = a.as_f64();
    let proj = ellipsoid_projector(&pm, af)?;
    let vn = |x: &[f64]| -> f64 {
        let xt: Vec<T> = x.iter().map(|&v| T::of(v)).collect();
        v_n(ctrl, &xt).as_f64()
    };
    let lo = minimize_on(n, plan, &proj, vn);
    let hi = maximize_on(n, plan, &proj, vn);

    // {V_n ≤ c} = δ_r{V_n ≤ 1} with r = c^{1/deg}; its largest V_0 sits on the
    // boundary because V_0 is convex.
    let deg = ctrl.params.lyap_degree();
    let inv_deg = 1.0 / (*deg.numer() as f64 / *deg.denom() as f64);
    let v0_max_at = |c: f64| -> f64 {
        let r = T::of(c.powf(inv_deg));
        maximize_on(
            n,
            plan,
            |u: &[T]| project_to_sphere(ctrl, u, n).map(|x| ctrl.params.dilate(r, &x)),
            |x: &[T]| norm.eval(x),
        )
        .value
        .as_f64()
    };
    let (mut c_lo, mut c_hi) = (0.0, lo.value.max(1e-300));
    while v0_max_at(c_hi) <= af {
        c_lo = c_hi;
        c_hi *= 2.0;
    }
    for _ in 0..50 {
        let mid = 0.5 * (c_lo + c_hi);
        if v0_max_at(mid) <= af {
            c_lo = mid;
        } else {
            c_hi = mid;
        }
        if c_hi - c_lo <= 1e-10 * c_hi {
            break;
        }
    }
    let outside = c_lo;
    let v_a = (1.0 - margin) * lo.value.min(outside);
    Ok(EllipsoidBounds {
        v_a,
        big_v_a: (1.0 + margin) * hi.value,
        surface_min: lo.value,
        surface_max: hi.value,
        outside_min: outside,
        margin,
    })
}

/// `K(C) = sup_{V_n ≥ C} |V̇_n|/V_n^α` over inputs `|u| ≤ input_bound`.
///
/// Both `g` and `ω_n` have the degree of `V_n^α`, so the ratio is constant
/// along dilations and the supremum is the same for every `C > 0`.
pub fn estimate_kc<T: Real>(ctrl: &HomogeneousController<T>, c: f64, input_bound: f64, plan: &SearchPlan) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::InvalidParameter("K(C) needs C > 0".into()));
    }
    let n = ctrl.n();
    let ub = T::of(input_bound);
    let ext = maximize_on(
        n,
        plan,
        |u: &[T]| project_to_sphere(ctrl, u, n),
        |x: &[T]| {
            let (g, w) = drift_and_omega(ctrl, x);
            g.abs() + ub * w.abs()
        },
    );
    Ok(ext.value.as_f64())
}

/// Constants of the mismatched-disturbance inequality
/// `V̇_n ≤ −C_1V_n^α + ω_n(u + l_n sign ω_n) + C_2 Σ|d_i|^{η_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchConstants {
    pub c1: f64,
    pub c2: f64,
    /// `sup_{V_n=1} |∂_iV_n|^{α_i}`, `i = 1..n−1`.
    pub grad_bounds: Vec<f64>,
    /// Young weights `θ_i`.
    pub theta: Vec<f64>,
}

/// Young's inequality `|∂_iV d_i| ≤ θ_i^{α_i}|∂_iV|^{α_i}/α_i + θ_i^{−η_i}|d_i|^{η_i}/η_i`
/// with `θ_i` chosen so the first terms absorb half of `c_n V_n^α`.
pub fn mismatch_constants<T: Real>(ctrl: &HomogeneousController<T>, c_n: f64, plan: &SearchPlan, safety: f64) -> Result<MismatchConstants> {
    let n = ctrl.n();
    let mut grad_bounds = Vec::with_capacity(n - 1);
    let mut theta = Vec::with_capacity(n - 1);
    let mut c2: f64 = 0.0;
    for i in 0..n - 1 {
        let ai = T::of_ratio(ctrl.params.alpha_i[i]);
        let ext = maximize_on(
            n,
            plan,
            |u: &[T]| project_to_sphere(ctrl, u, n),
            |x: &[T]| v_i_with_grad(ctrl, x, n).1[i].abs().powf(ai),
        );
        let m = ext.value.as_f64() * safety;
        let a = ai.as_f64();
        let eta = T::of_ratio(ctrl.params.eta_i[i]).as_f64();
        let th_a = c_n * a / (2.0 * (n - 1) as f64 * m);
        let th = th_a.powf(1.0 / a);
        grad_bounds.push(m);
        theta.push(th);
        c2 = c2.max(th.powf(-eta) / eta);
    }
    Ok(MismatchConstants {
        c1: c_n / 2.0,
        c2,
        grad_bounds,
        theta,
    })
}

/// `C_i = sup_{V_n=1} |x_i|^{β_{i−1}+1}`, so `|x_i|^{β_{i−1}+1} ≤ C_i V_n`.
pub fn coordinate_bounds<T: Real>(ctrl: &HomogeneousController<T>, plan: &SearchPlan, safety: f64) -> Vec<f64> {
    let n = ctrl.n();
    (0..n)
        .map(|i| {
            let e = ctrl.beta(i) + T::one();
            maximize_on(
                n,
                plan,
                |u: &[T]| project_to_sphere(ctrl, u, n),
                |x: &[T]| x[i].abs().powf(e),
            )
            .value
            .as_f64()
                * safety
        })
        .collect()
}

/// Largest sampled `V_n` drift `g − l_n|ω_n|` on raw sphere samples, without
/// refinement; used to compare two sampling densities.
pub fn raw_sphere_min<T: Real>(ctrl: &HomogeneousController<T>, samples: usize) -> f64 {
    let n = ctrl.n();
    let l = ctrl.l_n();
    cube_directions(n, samples)
        .iter()
        .filter_map(|d| {
            let u: Vec<T> = d.iter().map(|&v| T::of(v)).collect();
            let x = project_to_sphere(ctrl, &u, n)?;
            let (g, w) = drift_and_omega(ctrl, &x);
            Some((l * w.abs() - g).as_f64())
        })
        .fold(f64::INFINITY, f64::min)
}
