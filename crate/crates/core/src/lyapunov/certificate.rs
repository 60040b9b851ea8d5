//! All constants of the hybrid construction gathered in one certificate.

use serde::{Deserialize, Serialize};

use super::estimate::{
    coordinate_bounds, estimate_cn, estimate_kc, estimate_va_big_va, mismatch_constants, CnEstimate,
    EllipsoidBounds, MismatchConstants,
};
use super::functions::{v_n, w_min, QuadraticNorm};
use crate::controller::HomogeneousController;
use crate::error::{Error, Result};
use crate::linear_core::{synthesize_linear_core, CoreConfig, LinearCore};
use crate::sampling::SearchPlan;
use crate::satfn::SaturationSpec;
use crate::scalar::Real;

/// Estimation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CertConfig {
    pub plan: SearchPlan,
    /// Relative margin applied to the sampled decay infimum.
    pub cn_margin: f64,
    /// Inner/outer factor for `v_A`, `V_A`.
    pub va_margin: f64,
    /// Multiplier on sampled suprema (gradient and coordinate bounds).
    pub sup_safety: f64,
    /// `k` is this factor times its lower bound (at least 2).
    pub k_factor: f64,
    pub core: CoreConfig,
}

impl Default for CertConfig {
    fn default() -> Self {
        CertConfig {
            plan: SearchPlan::default(),
            cn_margin: 0.1,
            va_margin: 1e-2,
            sup_safety: 1.05,
            k_factor: 1.0,
            core: CoreConfig::default(),
        }
    }
}

/// `V_n`, `V_0` and every estimated constant of the hybrid feedback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapCertificate<T> {
    pub ctrl: HomogeneousController<T>,
    pub sat: SaturationSpec,
    pub core: LinearCore<T>,
    pub cn: CnEstimate,
    /// Decay rate `c_n`.
    pub c_n: f64,
    pub c_0: f64,
    pub l_0: f64,
    /// `l_0` rescaled for the saturated inner loop (`4·l0_loop` multiplies
    /// `min(1, |d|)`).
    pub l0_loop: f64,
    /// Switching radius `A`.
    pub a: f64,
    pub ellipsoid: EllipsoidBounds,
    pub v_a: f64,
    pub big_v_a: f64,
    /// Lower bound `max(2, 2(2+C_σ/σ∞)l_n/(c_n v_A^α))` and the chosen `k`.
    pub k_min: f64,
    pub k: f64,
    /// `(C, K(C))` pairs.
    pub kc_table: Vec<(f64, f64)>,
    pub kc_input_bound: f64,
    pub mismatch: MismatchConstants,
    /// `C_i` with `|x_i|^{β_{i−1}+1} ≤ C_i V_n`.
    pub coord_bounds: Vec<f64>,
    pub sphere_samples: usize,
}

/// Largest `a2/σ∞` for which the hybrid gain formula holds.
pub const MAX_UPPER_SECTOR: f64 = 3.0;

impl<T: Real> LyapCertificate<T> {
    /// Runs every estimation step for a synthesized controller.
    pub fn build(ctrl: HomogeneousController<T>, sat: SaturationSpec, cfg: &CertConfig) -> Result<Self> {
        sat.check_constants()?;
        if sat.a2 > MAX_UPPER_SECTOR * sat.sigma_inf {
            return Err(Error::MalformedSaturation {
                name: sat.name.clone(),
                reason: format!("a2/sigma_inf exceeds {MAX_UPPER_SECTOR}; the hybrid gain k is not valid"),
            });
        }
        let n = ctrl.n();
        let l_n = ctrl.l_n().as_f64();
        let (r0, r1) = sat.rho_interval();
        let rho = (T::of(r0 / sat.sigma_inf), T::of(r1 / sat.sigma_inf));
        let core = synthesize_linear_core(n, ctrl.l_n(), rho, &cfg.core)?;

        let cn = estimate_cn(&ctrl, &cfg.plan, cfg.cn_margin)?;
        let c_n = cn.value;
        let a = core.switching_radius(T::of(sat.inner_bound()))?.as_f64();
        let ellipsoid = estimate_va_big_va(&ctrl, &core.p, T::of(a), &cfg.plan, cfg.va_margin)?;
        let alpha = ctrl.alpha().as_f64();
        let c_sig = sat.c_sigma / sat.sigma_inf;
        let k_min = 2f64.max(2.0 * (2.0 + c_sig) * l_n / (c_n * ellipsoid.v_a.powf(alpha)));
        let k = k_min * cfg.k_factor.max(1.0);
        let kc_input_bound = l_n * sat.a2 / sat.sigma_inf;
        let kc = estimate_kc(&ctrl, ellipsoid.v_a, kc_input_bound, &cfg.plan)?;
        let kc_table = vec![(ellipsoid.v_a / 2.0, kc), (ellipsoid.v_a, kc)];
        let mismatch = mismatch_constants(&ctrl, c_n, &cfg.plan, cfg.sup_safety)?;
        let coord_bounds = coordinate_bounds(&ctrl, &cfg.plan, cfg.sup_safety);
        let c_0 = core.c0.as_f64();
        let l_0 = core.l0.as_f64();
        let l0_loop = l_0 * (l_n / sat.sigma_inf) * sat.lipschitz.max(2.0 * sat.sigma_inf) / 4.0;
        Ok(LyapCertificate {
            ctrl,
            sat,
            core,
            cn,
            c_n,
            c_0,
            l_0,
            l0_loop,
            a,
            v_a: ellipsoid.v_a,
            big_v_a: ellipsoid.big_v_a,
            ellipsoid,
            k_min,
            k,
            kc_table,
            kc_input_bound,
            mismatch,
            coord_bounds,
            sphere_samples: cfg.plan.samples,
        })
    }

    pub fn n(&self) -> usize {
        self.ctrl.n()
    }

    /// Rebuilds caches after deserialization.
    pub fn refresh(&mut self) {
        self.ctrl.refresh();
    }

    pub fn quadratic(&self) -> QuadraticNorm<T> {
        QuadraticNorm { p: self.core.p.clone() }
    }

    pub fn v0(&self, x: &[T]) -> T {
        self.quadratic().eval(x)
    }

    pub fn vn(&self, x: &[T]) -> T {
        v_n(&self.ctrl, x)
    }

    /// `W = min(V_0, V_n^α)`
    pub fn w(&self, x: &[T]) -> T {
        w_min(self.v0(x), self.vn(x), self.ctrl.alpha())
    }

    /// Checks the structural invariants: `P ≻ 0`, the grid inequality,
    /// `0 < v_A ≤ V_A` and the lower bound on `k`.
    pub fn validate(&self) -> Result<()> {
        QuadraticNorm::new(self.core.p.clone())?;
        let bad = |reason: String| Err(Error::Domain { check: "certificate".into(), reason });
        if !self.core.grid.pass {
            return bad(format!("matrix inequality fails at rho = {}", self.core.grid.worst_rho));
        }
        if !(self.v_a > 0.0 && self.v_a <= self.big_v_a) {
            return bad(format!("need 0 < v_A <= V_A, got {} and {}", self.v_a, self.big_v_a));
        }
        let alpha = self.ctrl.alpha().as_f64();
        let l_n = self.ctrl.l_n().as_f64();
        let need = 2f64.max(2.0 * (2.0 + self.sat.c_sigma / self.sat.sigma_inf) * l_n / (self.c_n * self.v_a.powf(alpha)));
        if self.k < need * (1.0 - 1e-12) {
            return bad(format!("k = {} below the required {}", self.k, need));
        }
        if !(self.c_n > 0.0 && self.c_0 > 0.0 && self.l_0 > 0.0 && self.a > 0.0) {
            return bad("constants must be positive".into());
        }
        Ok(())
    }
}
