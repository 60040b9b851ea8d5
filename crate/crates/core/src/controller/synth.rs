//! Numerical search for the gains `l_2..l_n` on homogeneity spheres.

use rayon::prelude::*;

use super::feedback::{HomogeneousController, SynthesisCertificate};
use super::params::ChainParams;
use crate::error::{Error, Result};
use crate::lyapunov::functions::{project_to_sphere, v_i_with_grad};
use crate::sampling::{cube_directions, maximize_on, SearchPlan};
use crate::scalar::Real;

/// Gain-search settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Starting value for each `l_i`, `i ≥ 2`.
    pub initial_gain: f64,
    /// Maximum number of doublings per level before giving up.
    pub max_doublings: usize,
    pub bisection_steps: usize,
    /// Accept a level when its sampled drift maximum is `≤ −margin`.
    pub margin: f64,
    /// Final gain is `safety × threshold`.
    pub safety: f64,
    pub plan: SearchPlan,
    /// Refinement rounds that add worst refined points back to the sample cache.
    pub refine_rounds: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            initial_gain: 1.0,
            max_doublings: 40,
            bisection_steps: 40,
            margin: 1e-3,
            safety: 1.5,
            plan: SearchPlan::default(),
            refine_rounds: 6,
        }
    }
}

/// Level-`i` drift along the sphere split as `R(x) − l_i·Ω(x)`.
///
/// `R = Σ_{j<i} ∂_jV_i·x_{j+1}` does not depend on `l_i`; `Ω = |ω_i|^{1+q_i}`.
fn drift_parts<T: Real>(ctrl: &HomogeneousController<T>, x: &[T], level: usize) -> (T, T) {
    let (_, grad, st) = v_i_with_grad(ctrl, x, level);
    let mut r = T::zero();
    for j in 0..level - 1 {
        r = r + grad[j] * x[j + 1];
    }
    let q = T::of_ratio(ctrl.params.q[level - 1]);
    let w = st.omega[level - 1].abs();
    (r, w.powf(T::one() + q))
}

/// Sampled maximum over the sphere `{V_i = 1}` of the level-`i` drift with the
/// controller's current `l_i`.
pub fn level_drift_max<T: Real>(ctrl: &HomogeneousController<T>, level: usize, plan: &SearchPlan) -> (T, Vec<T>) {
    let l = ctrl.gains[level - 1];
    let ext = maximize_on(
        level,
        plan,
        |u: &[T]| project_to_sphere(ctrl, u, level),
        |x: &[T]| {
            let (r, w) = drift_parts(ctrl, x, level);
            r - l * w
        },
    );
    (ext.value, ext.point)
}

fn cached_max<T: Real>(cache: &[(T, T)], l: T) -> T {
    cache
        .iter()
        .fold(T::neg_infinity(), |m, &(r, w)| m.max(r - l * w))
}

/// Searches `l_2..l_n` level by level with `l_1 = 1`.
///
/// At level `i` the sampled maximum of `R − l_i Ω` on `{V_i = 1}` is driven
/// below `−margin` by doubling `l_i` from the initial guess, then bisected to
/// the smallest passing value, refined around the worst samples, and finally
/// scaled by the safety factor.
pub fn synthesize_gains<T: Real>(n: usize, cfg: &SynthConfig) -> Result<HomogeneousController<T>> {
    let params = ChainParams::new(n)?;
    if !(cfg.initial_gain > 0.0 && cfg.safety >= 1.0 && cfg.margin > 0.0) {
        return Err(Error::InvalidParameter(
            "initial_gain and margin must be positive, safety at least 1".into(),
        ));
    }
    let mut gains = vec![T::one(); n];
    let mut cert = SynthesisCertificate {
        level_max: Vec::with_capacity(n),
        margin: cfg.margin,
        sphere_samples: cfg.plan.samples,
        doublings: vec![0],
        validation_terminal_norm: None,
    };
    let margin = T::of(cfg.margin);

    // Level 1: V_1 = |x_1|^{1+β_0}/(1+β_0), drift −l_1|x_1|^{2β_0}.
    let ctrl = HomogeneousController::new(params.clone(), gains.clone())?;
    let (m1, _) = level_drift_max(&ctrl, 1, &cfg.plan);
    cert.level_max.push(m1.as_f64());

    for level in 2..=n {
        gains[level - 1] = T::of(cfg.initial_gain);
        let ctrl = HomogeneousController::new(params.clone(), gains.clone())?;
        let dirs = cube_directions(level, cfg.plan.samples.max(1));
        let mut cache: Vec<(T, T)> = dirs
            .par_iter()
            .filter_map(|d| {
                let u: Vec<T> = d.iter().map(|&v| T::of(v)).collect();
                let x = project_to_sphere(&ctrl, &u, level)?;
                let parts = drift_parts(&ctrl, &x, level);
                (parts.0.is_finite() && parts.1.is_finite()).then_some(parts)
            })
            .collect();
        if cache.is_empty() {
            return Err(Error::Synthesis {
                level,
                reason: "no usable sphere samples".into(),
            });
        }

        let mut doublings = 0;
        let mut threshold = T::zero();
        for _round in 0..=cfg.refine_rounds {
            let mut hi = T::of(cfg.initial_gain).max(threshold);
            while cached_max(&cache, hi) > -margin {
                if doublings >= cfg.max_doublings {
                    return Err(Error::Synthesis {
                        level,
                        reason: format!(
                            "sampled drift maximum {:.3e} still above -{:.1e} after {} doublings (l = {:.3e}); \
                             sampling too coarse or drift not dominated",
                            cached_max(&cache, hi).as_f64(),
                            cfg.margin,
                            doublings,
                            hi.as_f64()
                        ),
                    });
                }
                hi = hi + hi;
                doublings += 1;
            }
            let mut lo = hi * T::of(0.5);
            let mut halvings = 0;
            while cached_max(&cache, lo) <= -margin && halvings < 60 {
                hi = lo;
                lo = lo * T::of(0.5);
                halvings += 1;
            }
            for _ in 0..cfg.bisection_steps {
                let mid = (lo + hi) * T::of(0.5);
                if cached_max(&cache, mid) <= -margin {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            threshold = hi;
            gains[level - 1] = threshold;
            let trial = HomogeneousController::new(params.clone(), gains.clone())?;
            let (worst, point) = level_drift_max(&trial, level, &cfg.plan);
            if worst <= -margin {
                break;
            }
            cache.push(drift_parts(&trial, &point, level));
        }
        gains[level - 1] = threshold * T::of(cfg.safety);
        let ctrl = HomogeneousController::new(params.clone(), gains.clone())?;
        let (worst, _) = level_drift_max(&ctrl, level, &cfg.plan);
        if worst > -margin {
            return Err(Error::Synthesis {
                level,
                reason: format!(
                    "refined drift maximum {:.3e} above -{:.1e} at l = {:.4e}",
                    worst.as_f64(),
                    cfg.margin,
                    gains[level - 1].as_f64()
                ),
            });
        }
        cert.level_max.push(worst.as_f64());
        cert.doublings.push(doublings);
    }
    Ok(HomogeneousController::new(params, gains)?.with_certificate(cert))
}
