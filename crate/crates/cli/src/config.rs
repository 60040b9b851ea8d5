//! Flat-key TOML configuration for every subcommand.
//!
//! Each file is a table of scalar or array keys; every key is optional and
//! falls back to the default listed next to it.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use satchain::controller::SynthConfig;
use satchain::gains::FamilyKind;
use satchain::linear_core::CoreConfig;
use satchain::lyapunov::{CertConfig, Inequality, DEFAULT_TOLERANCE};
use satchain::sampling::SearchPlan;
use satchain::sim::SystemKind;

use crate::error::{CliError, CliResult};

/// Directory searched for relative config paths and default config files.
pub const CONFIG_DIR_ENV: &str = "SATCHAIN_CONFIG_DIR";

/// Resolves an explicit path, or looks up `default_name` in the config directory.
pub fn resolve(explicit: Option<&Path>, default_name: &str) -> Option<PathBuf> {
    let dir = std::env::var_os(CONFIG_DIR_ENV).map(PathBuf::from);
    match explicit {
        Some(p) => {
            if p.is_relative() && !p.exists() {
                if let Some(d) = &dir {
                    return Some(d.join(p));
                }
            }
            Some(p.to_path_buf())
        }
        None => dir.map(|d| d.join(default_name)).filter(|p| p.exists()),
    }
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a TOML file, or returns the defaults when there is none.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    match path {
        Some(p) => parse(&read_text(p)?, &p.display().to_string()),
        None => Ok(T::default()),
    }
}

pub fn parse<T: DeserializeOwned>(text: &str, origin: &str) -> CliResult<T> {
    toml::from_str(text).map_err(|e| CliError::Config(format!("{origin}: {}", e.message().trim())))
}

/// `synthesize` settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    /// Starting gain for `l_2..l_n`. Default 1.
    pub initial_gain: f64,
    /// Default 40.
    pub max_doublings: usize,
    /// Default 40.
    pub bisection_steps: usize,
    /// Required drift margin on the level spheres. Default 1e-3.
    pub margin: f64,
    /// Gain multiplier over the bisected threshold. Default 1.5.
    pub safety: f64,
    /// Quasi-random sphere samples. Default 4000.
    pub samples: usize,
    /// Samples polished by local search. Default 8.
    pub refine_top: usize,
    /// Default 6.
    pub refine_rounds: usize,
    /// Relative margin on the sampled decay rate. Default 0.1.
    pub cn_margin: f64,
    /// Default 0.01.
    pub va_margin: f64,
    /// Default 1.05.
    pub sup_safety: f64,
    /// `k` over its lower bound. Default 1.
    pub k_factor: f64,
    /// Slope grid for the matrix inequality. Default 101.
    pub grid_points: usize,
    /// Default 0.01.
    pub core_margin: f64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        let s = SynthConfig::default();
        let c = CertConfig::default();
        SynthSettings {
            initial_gain: s.initial_gain,
            max_doublings: s.max_doublings,
            bisection_steps: s.bisection_steps,
            margin: s.margin,
            safety: s.safety,
            samples: s.plan.samples,
            refine_top: s.plan.refine_top,
            refine_rounds: s.refine_rounds,
            cn_margin: c.cn_margin,
            va_margin: c.va_margin,
            sup_safety: c.sup_safety,
            k_factor: c.k_factor,
            grid_points: c.core.grid_points,
            core_margin: c.core.margin,
        }
    }
}

impl SynthSettings {
    pub fn plan(&self) -> SearchPlan {
        SearchPlan {
            samples: self.samples,
            refine_top: self.refine_top,
            ..SearchPlan::default()
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            initial_gain: self.initial_gain,
            max_doublings: self.max_doublings,
            bisection_steps: self.bisection_steps,
            margin: self.margin,
            safety: self.safety,
            plan: self.plan(),
            refine_rounds: self.refine_rounds,
        }
    }

    pub fn cert_config(&self) -> CertConfig {
        CertConfig {
            plan: self.plan(),
            cn_margin: self.cn_margin,
            va_margin: self.va_margin,
            sup_safety: self.sup_safety,
            k_factor: self.k_factor,
            core: CoreConfig {
                grid_points: self.grid_points,
                margin: self.core_margin,
                ..CoreConfig::default()
            },
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |k: &str| Err(CliError::Config(format!("{k}: must be positive")));
        for (k, v) in [
            ("initial_gain", self.initial_gain),
            ("margin", self.margin),
            ("safety", self.safety),
            ("sup_safety", self.sup_safety),
            ("k_factor", self.k_factor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(k);
            }
        }
        if self.samples == 0 {
            return bad("samples");
        }
        if self.grid_points < 2 {
            return Err(CliError::Config("grid_points: need at least 2".into()));
        }
        Ok(())
    }
}

/// `certify` battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryConfig {
    /// Seeds initial states and random disturbances. Default 7.
    pub seed: u64,
    /// Default: all four loops.
    pub systems: Vec<SystemKind>,
    /// Disturbed runs per system, on top of one undisturbed run. Default 2.
    pub runs: usize,
    /// Initial states are drawn uniformly in this ball. Default 1.
    pub x0_radius: f64,
    /// Default 20.
    pub horizon: f64,
    /// Peak of the band-limited disturbances. Default 0.3.
    pub amplitude: f64,
    /// Disturbances vanish after this time. Default 5.
    pub support: f64,
    /// Default: every inequality.
    pub inequalities: Vec<Inequality>,
    /// Allowed negative slack. Default 1e-6.
    pub tolerance: f64,
    /// Sign-loop layer width. Default 1e-5.
    pub eps_sm: f64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig {
            seed: 7,
            systems: vec![
                SystemKind::SignLoop,
                SystemKind::SatOmegaLoop,
                SystemKind::HybridLoop,
                SystemKind::ExternalLoop,
            ],
            runs: 2,
            x0_radius: 1.0,
            horizon: 20.0,
            amplitude: 0.3,
            support: 5.0,
            inequalities: Inequality::ALL.to_vec(),
            tolerance: DEFAULT_TOLERANCE,
            eps_sm: 1e-5,
        }
    }
}

impl BatteryConfig {
    pub fn validate(&self) -> CliResult<()> {
        for (k, v) in [
            ("x0_radius", self.x0_radius),
            ("horizon", self.horizon),
            ("support", self.support),
            ("tolerance", self.tolerance),
            ("eps_sm", self.eps_sm),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Config(format!("{k}: must be positive and finite, got {v}")));
            }
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(CliError::Config("amplitude: must be finite and >= 0".into()));
        }
        if self.systems.is_empty() || self.inequalities.is_empty() {
            return Err(CliError::Config("systems, inequalities: must not be empty".into()));
        }
        Ok(())
    }
}

/// `gain` sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Default hybrid-loop.
    pub system: SystemKind,
    /// Norm indices; `inf` is allowed. Default [1, 2, inf].
    pub p: Vec<f64>,
    /// Default 1e-2.
    pub amp_min: f64,
    /// Default 1e1.
    pub amp_max: f64,
    /// Geometric grid size. Default 7.
    pub amp_points: usize,
    /// Default [constant, sinusoid, band-limited].
    pub families: Vec<FamilyKind>,
    /// Support of the finite-p disturbances. Default 10.
    pub support: f64,
    /// Default 60.
    pub horizon: f64,
    /// Initial states for `p = inf`; empty means the origin.
    pub x0: Vec<Vec<f64>>,
    /// Seed of the band-limited family. Default 7.
    pub seed: u64,
    /// Default 1e-5.
    pub return_threshold: f64,
    /// Horizon doublings for unsettled `p = inf` runs. Default 2.
    pub settle_doublings: u32,
    /// Overrides the solver's relative tolerance.
    pub rtol: Option<f64>,
    /// Overrides the sign-loop layer width.
    pub eps_sm: Option<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            system: SystemKind::HybridLoop,
            p: vec![1.0, 2.0, f64::INFINITY],
            amp_min: 1e-2,
            amp_max: 1e1,
            amp_points: 7,
            families: FamilyKind::ALL.to_vec(),
            support: 10.0,
            horizon: 60.0,
            x0: Vec::new(),
            seed: 7,
            return_threshold: 1e-5,
            settle_doublings: 2,
            rtol: None,
            eps_sm: None,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> CliResult<()> {
        if self.p.is_empty() || self.p.iter().any(|&p| !(p >= 1.0)) {
            return Err(CliError::Config("p: need values in [1, inf]".into()));
        }
        if self.families.is_empty() {
            return Err(CliError::Config("families: must not be empty".into()));
        }
        if !(self.support > 0.0 && self.horizon > self.support && self.horizon.is_finite()) {
            return Err(CliError::Config("horizon: must be finite and exceed support".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let s = toml::to_string(&SweepConfig::default()).unwrap();
        let back: SweepConfig = parse(&s, "test").unwrap();
        assert_eq!(back, SweepConfig::default());
        let b: BatteryConfig = parse(&toml::to_string(&BatteryConfig::default()).unwrap(), "test").unwrap();
        assert_eq!(b, BatteryConfig::default());
    }

    #[test]
    fn unknown_key_is_reported() {
        let e = parse::<SynthSettings>("sampels = 10\n", "synth.toml").unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(e.to_string().contains("sampels"), "{e}");
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let s: SweepConfig = parse("p = [2.0, inf]\nsystem = \"sign-loop\"\n", "t").unwrap();
        assert_eq!(s.p, vec![2.0, f64::INFINITY]);
        assert_eq!(s.system, SystemKind::SignLoop);
        assert_eq!(s.amp_points, 7);
    }
}
