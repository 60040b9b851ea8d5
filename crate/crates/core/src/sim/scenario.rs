//! Closed-loop experiment description.

use serde::{Deserialize, Serialize};

use super::disturbance::DisturbanceSignal;
use super::integrator::{Method, StepControl};
use crate::error::{Error, Result};
use crate::hybrid::FeedbackMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    /// `ẋ = J x − l_n e_n sign(ω_n(x) + d)`
    SignLoop,
    /// `ẋ = J x − (l_n/σ∞) e_n σ(k ω_n(x) + d)`
    SatOmegaLoop,
    /// `ẋ = J x − (l_n/σ∞) e_n σ(u(x) + d)` with the switched feedback.
    HybridLoop,
    /// Hybrid loop plus `E + d_n e_n`.
    ExternalLoop,
}

impl SystemKind {
    pub fn needs_certificate(self) -> bool {
        !matches!(self, SystemKind::SignLoop)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
    /// Output sampling period.
    pub dt_out: f64,
    /// Relative width of the sign regularization layer.
    pub eps_sm: f64,
    /// Relative hysteresis of the ellipsoid switch.
    pub hysteresis: f64,
    /// Surface tolerance of located events.
    pub event_tol: f64,
    /// States below this norm are snapped to the origin once every
    /// disturbance has ended.
    pub capture_radius: f64,
    /// Warning threshold on `|∫ d_n|`.
    pub omega_bound: f64,
    /// Cap on branch switches.
    pub max_switches: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let s = StepControl::default();
        SolverSettings {
            method: s.method,
            rtol: s.rtol,
            atol: s.atol,
            h_init: s.h_init,
            h_max: s.h_max,
            max_steps: s.max_steps,
            dt_out: 0.01,
            eps_sm: 1e-6,
            hysteresis: 0.0,
            event_tol: 1e-10,
            capture_radius: 1e-10,
            omega_bound: 1e3,
            max_switches: 100_000,
        }
    }
}

impl SolverSettings {
    pub fn step_control(&self) -> StepControl {
        StepControl {
            method: self.method,
            rtol: self.rtol,
            atol: self.atol,
            h_init: self.h_init,
            h_max: self.h_max,
            max_steps: self.max_steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("solver.{name} must be positive and finite, got {v}")))
            }
        };
        pos("rtol", self.rtol)?;
        pos("atol", self.atol)?;
        pos("h_init", self.h_init)?;
        pos("dt_out", self.dt_out)?;
        pos("eps_sm", self.eps_sm)?;
        pos("event_tol", self.event_tol)?;
        pos("omega_bound", self.omega_bound)?;
        if !(self.h_max > 0.0) {
            return Err(Error::InvalidParameter(format!("solver.h_max must be positive, got {}", self.h_max)));
        }
        if !(self.hysteresis >= 0.0 && self.hysteresis.is_finite()) {
            return Err(Error::InvalidParameter(format!("solver.hysteresis must be >= 0, got {}", self.hysteresis)));
        }
        if !(self.capture_radius >= 0.0) {
            return Err(Error::InvalidParameter("solver.capture_radius must be >= 0".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidParameter("solver.max_steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub system: SystemKind,
    pub x0: Vec<f64>,
    pub horizon: f64,
    /// Disturbance inside the saturation.
    #[serde(default)]
    pub d: DisturbanceSignal,
    /// Mismatched disturbances `d_1..d_{n−1}`; empty means zero.
    #[serde(default)]
    pub e: Vec<DisturbanceSignal>,
    /// Matched external disturbance.
    #[serde(default)]
    pub d_n: DisturbanceSignal,
    /// Feedback variant; the external loop defaults to the shifted one.
    #[serde(default)]
    pub feedback: Option<FeedbackMode>,
    /// Overrides the certificate's `k` in the saturated loops.
    #[serde(default)]
    pub k: Option<f64>,
    #[serde(default)]
    pub solver: SolverSettings,
}

impl Scenario {
    pub fn new(system: SystemKind, x0: Vec<f64>, horizon: f64) -> Self {
        Scenario {
            system,
            x0,
            horizon,
            d: DisturbanceSignal::Zero,
            e: Vec::new(),
            d_n: DisturbanceSignal::Zero,
            feedback: None,
            k: None,
            solver: SolverSettings::default(),
        }
    }

    pub fn with_d(mut self, d: DisturbanceSignal) -> Self {
        self.d = d;
        self
    }

    pub fn feedback_mode(&self) -> FeedbackMode {
        match (self.feedback, self.system) {
            (Some(m), _) => m,
            (None, SystemKind::ExternalLoop) => FeedbackMode::DynamicShift,
            _ => FeedbackMode::Static,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.x0.len() != n {
            return bad(format!("x0: expected {n} components, got {}", self.x0.len()));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return bad("x0: components must be finite".into());
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon: must be positive and finite, got {}", self.horizon));
        }
        self.solver.validate()?;
        self.d.validate("d")?;
        self.d_n.validate("d_n")?;
        for (i, e) in self.e.iter().enumerate() {
            e.validate(&format!("e[{i}]"))?;
            if e.is_state_dependent() {
                return bad(format!("e[{i}]: state-dependent kinds are only allowed for d"));
            }
        }
        if self.d_n.is_state_dependent() {
            return bad("d_n: state-dependent kinds are only allowed for d".into());
        }
        let external = self.system == SystemKind::ExternalLoop;
        if !self.e.is_empty() && self.e.len() + 1 != n {
            return bad(format!("e: expected {} components (d_1..d_{{n-1}}), got {}", n - 1, self.e.len()));
        }
        if !external && (!self.d_n.is_zero() || self.e.iter().any(|e| !e.is_zero())) {
            return bad("e, d_n: external disturbances need system = \"external-loop\"".into());
        }
        if self.feedback == Some(FeedbackMode::DynamicShift) && !matches!(self.system, SystemKind::HybridLoop | SystemKind::ExternalLoop) {
            return bad("feedback: dynamic-shift applies to the hybrid and external loops only".into());
        }
        if let Some(k) = self.k {
            if !(k > 0.0 && k.is_finite()) {
                return bad(format!("k: must be positive, got {k}"));
            }
        }
        Ok(())
    }
}
