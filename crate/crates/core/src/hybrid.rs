//! The switched feedback `k·ω(x)`: homogeneous outside the ellipsoid
//! `{V_0 ≤ A}`, linear inside, with an optional matched-disturbance shift.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lyapunov::LyapCertificate;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackMode {
    Static,
    /// `u = kω(x − y e_n)` with `ẏ = d_n`.
    DynamicShift,
}

/// Which formula of the switched feedback is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// `V_0 > A`: `u = k ω_n(x)`.
    Outer,
    /// `V_0 ≤ A`: `u = Kᵀx`.
    Inner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridFeedback<T> {
    pub cert: LyapCertificate<T>,
    pub mode: FeedbackMode,
    /// Relative hysteresis width `h`: leave the inner branch at `A(1+h)`.
    pub hysteresis: f64,
    /// Integral of `d_n`, meaningful in dynamic mode.
    pub y_state: T,
}

impl<T: Real> HybridFeedback<T> {
    pub fn new(cert: LyapCertificate<T>, mode: FeedbackMode) -> Self {
        HybridFeedback {
            cert,
            mode,
            hysteresis: 0.0,
            y_state: T::zero(),
        }
    }

    pub fn with_hysteresis(mut self, h: f64) -> Result<Self> {
        if !(h >= 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!("hysteresis must be >= 0, got {h}")));
        }
        self.hysteresis = h;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.cert.n()
    }

    pub fn radius(&self) -> T {
        T::of(self.cert.a)
    }

    pub fn k(&self) -> T {
        T::of(self.cert.k)
    }

    /// Branch from the closed rule `V_0 ≤ A → Inner`.
    pub fn branch(&self, x: &[T]) -> Branch {
        if self.cert.v0(x) <= self.radius() {
            Branch::Inner
        } else {
            Branch::Outer
        }
    }

    /// Control value of a given branch.
    pub fn branch_control(&self, x: &[T], branch: Branch) -> T {
        match branch {
            Branch::Outer => self.k() * self.cert.ctrl.omega_n(x),
            Branch::Inner => self.cert.core.omega0(x),
        }
    }

    /// `u = kω(x)`; the boundary `V_0 = A` takes the linear branch.
    pub fn hybrid_control(&self, x: &[T]) -> T {
        self.branch_control(x, self.branch(x))
    }

    /// `u = kω(x − y e_n)`
    pub fn shifted_control(&self, x: &[T], y: T) -> Result<T> {
        if self.mode != FeedbackMode::DynamicShift {
            return Err(Error::InvalidParameter(
                "shifted control requires the dynamic-shift mode".into(),
            ));
        }
        Ok(self.hybrid_control(&shift_state(x, y)))
    }

    /// Control with the internal `y_state` in dynamic mode, plain otherwise.
    pub fn control(&self, x: &[T]) -> T {
        match self.mode {
            FeedbackMode::Static => self.hybrid_control(x),
            FeedbackMode::DynamicShift => self.hybrid_control(&shift_state(x, self.y_state)),
        }
    }

    /// Advances `y` by a quadrature increment of `d_n`.
    pub fn accumulate(&mut self, dy: T) {
        self.y_state = self.y_state + dy;
    }
}

/// `x − y e_n`
pub fn shift_state<T: Real>(x: &[T], y: T) -> Vec<T> {
    let mut out = x.to_vec();
    if let Some(last) = out.last_mut() {
        *last = *last - y;
    }
    out
}
