//! Saturation (S-) functions, the signed power and the set-valued sign.
//!
//! An S-function `σ` is locally Lipschitz, sector bounded between two scaled
//! standard saturations
//!
//! ```text
//! a1·x·s(x/b1) <= x·σ(x) <= a2·x·s(x/b2),      s(x) = x / max(1, |x|)
//! ```
//!
//! and has opposite limits `±σ∞` approached at rate `C_σ/(1+|x|)`. The
//! constants are stored with each [`SaturationSpec`] and checked by sampling
//! in [`verify_s_function`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A value of a possibly set-valued map: either a point or a closed interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SetValue<T> {
    Point(T),
    Interval { lo: T, hi: T },
}

impl<T: Real> SetValue<T> {
    pub fn is_point(&self) -> bool {
        matches!(self, SetValue::Point(_))
    }

    pub fn contains(&self, v: T) -> bool {
        match *self {
            SetValue::Point(p) => p == v,
            SetValue::Interval { lo, hi } => lo <= v && v <= hi,
        }
    }

    pub fn lo(&self) -> T {
        match *self {
            SetValue::Point(p) => p,
            SetValue::Interval { lo, .. } => lo,
        }
    }

    pub fn hi(&self) -> T {
        match *self {
            SetValue::Point(p) => p,
            SetValue::Interval { hi, .. } => hi,
        }
    }

    /// The point value, or `None` for a proper interval.
    pub fn point(&self) -> Option<T> {
        match *self {
            SetValue::Point(p) => Some(p),
            SetValue::Interval { .. } => None,
        }
    }

    /// Element of the set closest to `v`.
    pub fn select(&self, v: T) -> T {
        match *self {
            SetValue::Point(p) => p,
            SetValue::Interval { lo, hi } => v.max(lo).min(hi),
        }
    }

    pub fn scale(self, c: T) -> Self {
        match self {
            SetValue::Point(p) => SetValue::Point(c * p),
            SetValue::Interval { lo, hi } => {
                let (a, b) = (c * lo, c * hi);
                SetValue::Interval {
                    lo: a.min(b),
                    hi: a.max(b),
                }
            }
        }
    }
}

/// Set-valued sign: `x/|x|` for `x != 0` and `[-1, 1]` at zero.
pub fn sign_set<T: Real>(x: T) -> SetValue<T> {
    if x > T::zero() {
        SetValue::Point(T::one())
    } else if x < T::zero() {
        SetValue::Point(-T::one())
    } else {
        SetValue::Interval {
            lo: -T::one(),
            hi: T::one(),
        }
    }
}

/// `⌊x⌉^a = |x|^a sign(x)`; set-valued only for `a = 0, x = 0`.
pub fn signed_power<T: Real>(x: T, a: T) -> SetValue<T> {
    debug_assert!(a >= T::zero(), "signed_power exponent must be nonnegative");
    if a == T::zero() {
        sign_set(x)
    } else {
        SetValue::Point(spow(x, a))
    }
}

/// Point-valued signed power for `a > 0`; returns `0` at `x = 0`.
#[inline]
pub fn spow<T: Real>(x: T, a: T) -> T {
    if x == T::zero() {
        T::zero()
    } else if a == T::one() {
        x
    } else {
        x.abs().powf(a).copysign(x)
    }
}

/// Single-valued sign with `sgn(0) = 0`.
#[inline]
pub fn sgn<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Standard saturation `s(x) = x / max(1, |x|)`.
#[inline]
pub fn standard_sat<T: Real>(x: T) -> T {
    x / T::one().max(x.abs())
}

/// Shape of a shipped S-function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SatKind {
    /// `s(x)`
    Standard,
    /// `tanh(x)`
    Tanh,
    /// `(2/π)·atan(x)`
    Arctan,
}

impl SatKind {
    fn eval<T: Real>(self, x: T) -> T {
        match self {
            SatKind::Standard => standard_sat(x),
            SatKind::Tanh => x.tanh(),
            SatKind::Arctan => x.atan() * T::FRAC_2_PI(),
        }
    }

    fn slope<T: Real>(self, x: T) -> T {
        match self {
            SatKind::Standard => {
                if x.abs() <= T::one() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            SatKind::Tanh => T::one() - x.tanh().powi(2),
            SatKind::Arctan => T::FRAC_2_PI() / (T::one() + x * x),
        }
    }
}

/// An S-function together with its sector, tail and Lipschitz constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationSpec {
    pub name: String,
    pub kind: SatKind,
    /// Input scale `k` of the family `σ_k(x) = σ(k·x)`.
    pub scale: f64,
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub sigma_inf: f64,
    pub c_sigma: f64,
    /// Global Lipschitz constant.
    pub lipschitz: f64,
}

impl SaturationSpec {
    pub fn standard() -> Self {
        SaturationSpec {
            name: "standard".into(),
            kind: SatKind::Standard,
            scale: 1.0,
            a1: 1.0,
            a2: 1.0,
            b1: 1.0,
            b2: 1.0,
            sigma_inf: 1.0,
            c_sigma: 2.0,
            lipschitz: 1.0,
        }
    }

    pub fn tanh() -> Self {
        SaturationSpec {
            name: "tanh".into(),
            kind: SatKind::Tanh,
            scale: 1.0,
            a1: 1f64.tanh(),
            a2: 1.0,
            b1: 1.0,
            b2: 1.0,
            sigma_inf: 1.0,
            // 2(1+x)/(e^{2x}+1) peaks at x = 0.
            c_sigma: 1.0,
            lipschitz: 1.0,
        }
    }

    pub fn arctan() -> Self {
        SaturationSpec {
            name: "arctan".into(),
            kind: SatKind::Arctan,
            scale: 1.0,
            a1: 0.5,
            a2: 1.0,
            b1: 1.0,
            b2: std::f64::consts::FRAC_PI_2,
            sigma_inf: 1.0,
            // sup (1+x)(2/π)atan(1/x) ≈ 1.0997 near x = 0.45.
            c_sigma: 1.1,
            lipschitz: std::f64::consts::FRAC_2_PI,
        }
    }

    /// Looks up a shipped S-function by name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "standard" | "sat" => Ok(Self::standard()),
            "tanh" => Ok(Self::tanh()),
            "arctan" | "atan" => Ok(Self::arctan()),
            other => Err(Error::InvalidParameter(format!(
                "unknown saturation `{other}` (expected standard, tanh or arctan)"
            ))),
        }
    }

    /// The scaled member `σ_k(x) = σ(k·x)` with consistent constants.
    ///
    /// Breakpoints move to `b/k`, the tail constant becomes
    /// `C_σ·max(1, 1/k)` and the Lipschitz constant `k·L`. The result is
    /// re-verified on a default grid.
    pub fn scaled(&self, k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "scale must be positive, got {k}"
            )));
        }
        let out = SaturationSpec {
            name: format!("{}@{}", self.name, k),
            kind: self.kind,
            scale: self.scale * k,
            a1: self.a1,
            a2: self.a2,
            b1: self.b1 / k,
            b2: self.b2 / k,
            sigma_inf: self.sigma_inf,
            c_sigma: self.c_sigma * (1.0f64).max(1.0 / k),
            lipschitz: self.lipschitz * k,
        };
        let report = verify_s_function(&out, &SamplingGrid::covering(&out))?;
        if !report.pass {
            return Err(Error::MalformedSaturation {
                name: out.name,
                reason: format!("scaled family failed verification: {report:?}"),
            });
        }
        Ok(out)
    }

    #[inline]
    pub fn eval<T: Real>(&self, x: T) -> T {
        self.kind.eval(x * T::of(self.scale))
    }

    /// `σ'(x)`, taking the inner one-sided slope at kinks.
    pub fn slope<T: Real>(&self, x: T) -> T {
        let k = T::of(self.scale);
        k * self.kind.slope(x * k)
    }

    /// Sector interval `[a1/b1, a2/b2]` of slopes `σ(s)/s` for small `|s|`.
    pub fn rho_interval(&self) -> (f64, f64) {
        (self.a1 / self.b1, self.a2 / self.b2)
    }

    /// `min(1, b1, b2)`: the inner-feedback amplitude bound.
    pub fn inner_bound(&self) -> f64 {
        1f64.min(self.b1).min(self.b2)
    }

    pub fn check_constants(&self) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::MalformedSaturation {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if !(self.a1 > 0.0 && self.a2 > 0.0 && self.b1 > 0.0 && self.b2 > 0.0) {
            return bad("a1, a2, b1, b2 must be positive");
        }
        if self.a1 > self.a2 {
            return bad("a1 > a2");
        }
        if self.a1 / self.b1 > self.a2 / self.b2 {
            return bad("a1/b1 > a2/b2");
        }
        if !(self.sigma_inf > 0.0 && self.c_sigma > 0.0 && self.lipschitz > 0.0) {
            return bad("sigma_inf, C_sigma and the Lipschitz constant must be positive");
        }
        Ok(())
    }
}

/// Uniform sampling plan over `[-half_width, half_width]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingGrid {
    pub half_width: f64,
    pub points: usize,
    pub tolerance: f64,
}

impl SamplingGrid {
    /// Smallest admissible grid for `spec`, `X = max(20, 10·max(b1, b2))`.
    pub fn covering(spec: &SaturationSpec) -> Self {
        SamplingGrid {
            half_width: 20f64.max(10.0 * spec.b1.max(spec.b2)),
            points: 200_001,
            tolerance: 1e-9,
        }
    }
}

/// Worst-case slacks of the sampled S-function conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct SFunctionReport {
    /// `min x·σ(x) − a1·x·s(x/b1)`
    pub sector_lower_slack: f64,
    /// `min a2·x·s(x/b2) − x·σ(x)`
    pub sector_upper_slack: f64,
    /// `min C_σ/(1+|x|) − |σ(|x|) − σ∞|`
    pub tail_slack: f64,
    /// `min C_σ/(1+|x|) − |σ(−|x|) + σ∞|`
    pub symmetry_slack: f64,
    /// Largest sampled difference quotient.
    pub lipschitz_estimate: f64,
    pub pass: bool,
}

/// Certifies the S-function conditions for `spec` on `grid`.
pub fn verify_s_function(spec: &SaturationSpec, grid: &SamplingGrid) -> Result<SFunctionReport> {
    spec.check_constants()?;
    let need = 10.0 * spec.b1.max(spec.b2);
    if grid.half_width < need || grid.points < 3 {
        return Err(Error::InvalidParameter(format!(
            "grid half-width {} must be at least 10·max(b1,b2) = {need}",
            grid.half_width
        )));
    }
    let x_max = grid.half_width;
    let h = 2.0 * x_max / (grid.points - 1) as f64;
    let mut lower = f64::INFINITY;
    let mut upper = f64::INFINITY;
    let mut tail = f64::INFINITY;
    let mut sym = f64::INFINITY;
    let mut lip: f64 = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..grid.points {
        let x = -x_max + h * i as f64;
        let sx: f64 = spec.eval(x);
        let xs = x * sx;
        lower = lower.min(xs - spec.a1 * x * standard_sat(x / spec.b1));
        upper = upper.min(spec.a2 * x * standard_sat(x / spec.b2) - xs);
        let bound = spec.c_sigma / (1.0 + x.abs());
        if x >= 0.0 {
            tail = tail.min(bound - (sx - spec.sigma_inf).abs());
        } else {
            sym = sym.min(bound - (sx + spec.sigma_inf).abs());
        }
        if let Some((px, ps)) = prev {
            lip = lip.max((sx - ps).abs() / (x - px));
        }
        prev = Some((x, sx));
    }
    let tol = grid.tolerance;
    let pass = lower >= -tol
        && upper >= -tol
        && tail >= -tol
        && sym >= -tol
        && lip <= spec.lipschitz * (1.0 + 1e-6) + tol;
    Ok(SFunctionReport {
        sector_lower_slack: lower,
        sector_upper_slack: upper,
        tail_slack: tail,
        symmetry_slack: sym,
        lipschitz_estimate: lip,
        pass,
    })
}
