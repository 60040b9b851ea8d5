//! Scalar disturbance generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn inf() -> f64 {
    f64::INFINITY
}

/// A scalar disturbance `d(t)`, possibly depending on the current `ω_n(x)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DisturbanceSignal {
    #[default]
    Zero,
    /// `value` on `[start, end)`.
    ConstantWindow {
        value: f64,
        #[serde(default)]
        start: f64,
        #[serde(default = "inf")]
        end: f64,
    },
    /// `amplitude·sin(freq·t + phase)` on `[start, end)`.
    Sinusoid {
        amplitude: f64,
        freq: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        start: f64,
        #[serde(default = "inf")]
        end: f64,
    },
    /// `amplitude·exp(−rate·(t − start))` for `t ≥ start`.
    ExponentialDecay {
        amplitude: f64,
        rate: f64,
        #[serde(default)]
        start: f64,
    },
    /// Normalized sum of `components` sinusoids with seeded random
    /// frequencies in `(0, max_freq]`; `|d| ≤ amplitude`.
    BandLimitedRandom {
        amplitude: f64,
        seed: u64,
        #[serde(default = "default_components")]
        components: usize,
        #[serde(default = "default_max_freq")]
        max_freq: f64,
        #[serde(default)]
        start: f64,
        #[serde(default = "inf")]
        end: f64,
    },
    /// `−gain·ω_n(x)` (or `−gain·sgn(ω_n(x))` when `on_sign`), plus `bias`,
    /// clipped to `±cap`, on `[start, end)`.
    AdversarialAntisign {
        gain: f64,
        #[serde(default)]
        bias: f64,
        #[serde(default = "inf")]
        cap: f64,
        #[serde(default)]
        on_sign: bool,
        #[serde(default)]
        start: f64,
        #[serde(default = "inf")]
        end: f64,
    },
    /// Piecewise linear through `(times, values)`, zero outside.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
}

fn default_components() -> usize {
    8
}

fn default_max_freq() -> f64 {
    2.0
}

impl DisturbanceSignal {
    pub fn constant(value: f64) -> Self {
        DisturbanceSignal::ConstantWindow {
            value,
            start: 0.0,
            end: f64::INFINITY,
        }
    }

    pub fn sine(amplitude: f64, freq: f64) -> Self {
        DisturbanceSignal::Sinusoid {
            amplitude,
            freq,
            phase: 0.0,
            start: 0.0,
            end: f64::INFINITY,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, DisturbanceSignal::Zero)
    }

    pub fn is_state_dependent(&self) -> bool {
        matches!(self, DisturbanceSignal::AdversarialAntisign { .. })
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(format!("{field}: {msg}")));
        let window = |start: f64, end: f64| start.is_finite() && start >= 0.0 && !(end.is_nan()) && end > start;
        use DisturbanceSignal::*;
        match self {
            Zero => Ok(()),
            ConstantWindow { value, start, end } => {
                if !value.is_finite() || !window(*start, *end) {
                    return bad(format!("bad constant window value={value} [{start}, {end})"));
                }
                Ok(())
            }
            Sinusoid { amplitude, freq, phase, start, end } => {
                if ![*amplitude, *freq, *phase].iter().all(|v| v.is_finite()) || !window(*start, *end) {
                    return bad("sinusoid parameters must be finite with start < end".into());
                }
                Ok(())
            }
            ExponentialDecay { amplitude, rate, start } => {
                if !amplitude.is_finite() || !(*rate > 0.0 && rate.is_finite()) || !(start.is_finite() && *start >= 0.0) {
                    return bad("exponential decay needs finite amplitude and rate > 0".into());
                }
                Ok(())
            }
            BandLimitedRandom { amplitude, components, max_freq, start, end, .. } => {
                if !amplitude.is_finite() || *components == 0 || !(*max_freq > 0.0 && max_freq.is_finite()) || !window(*start, *end) {
                    return bad("band-limited noise needs amplitude, components ≥ 1 and max_freq > 0".into());
                }
                Ok(())
            }
            AdversarialAntisign { gain, bias, cap, start, end, .. } => {
                if !gain.is_finite() || !bias.is_finite() || !(*cap > 0.0) || !window(*start, *end) {
                    return bad("antisign probe needs finite gain/bias and cap > 0".into());
                }
                Ok(())
            }
            Tabulated { times, values } => {
                if times.len() != values.len() || times.len() < 2 {
                    return bad("tabulated signal needs ≥ 2 points and equal lengths".into());
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().chain(values).any(|v| !v.is_finite()) {
                    return bad("tabulated times must be finite and strictly increasing".into());
                }
                Ok(())
            }
        }
    }

    /// Value at time `t`; `omega` is `ω_n` of the current control state.
    pub fn value(&self, t: f64, omega: f64) -> f64 {
        use DisturbanceSignal::*;
        let inside = |s: f64, e: f64| t >= s && t < e;
        match self {
            Zero => 0.0,
            ConstantWindow { value, start, end } => {
                if inside(*start, *end) {
                    *value
                } else {
                    0.0
                }
            }
            Sinusoid { amplitude, freq, phase, start, end } => {
                if inside(*start, *end) {
                    amplitude * (freq * t + phase).sin()
                } else {
                    0.0
                }
            }
            ExponentialDecay { amplitude, rate, start } => {
                if t >= *start {
                    amplitude * (-rate * (t - start)).exp()
                } else {
                    0.0
                }
            }
            BandLimitedRandom { amplitude, seed, components, max_freq, start, end } => {
                if !inside(*start, *end) {
                    return 0.0;
                }
                let (mut acc, mut total) = (0.0, 0.0);
                for (w, f, ph) in band_components(*seed, *components, *max_freq) {
                    acc += w * (f * t + ph).sin();
                    total += w;
                }
                amplitude * acc / total
            }
            AdversarialAntisign { gain, bias, cap, on_sign, start, end } => {
                if !inside(*start, *end) {
                    return 0.0;
                }
                let shape = if *on_sign { crate::satfn::sgn(omega) } else { omega };
                (-gain * shape + bias).clamp(-cap, *cap)
            }
            Tabulated { times, values } => {
                if t < times[0] || t > times[times.len() - 1] {
                    return 0.0;
                }
                let j = times.partition_point(|&s| s <= t).clamp(1, times.len() - 1);
                let (t0, t1) = (times[j - 1], times[j]);
                let th = (t - t0) / (t1 - t0);
                values[j - 1] + th * (values[j] - values[j - 1])
            }
        }
    }

    /// `∂d/∂ω_n` of the state-dependent kinds, zero otherwise.
    pub fn omega_slope(&self, t: f64, omega: f64) -> f64 {
        match self {
            DisturbanceSignal::AdversarialAntisign { gain, bias, cap, on_sign: false, start, end } => {
                let raw = -gain * omega + bias;
                if t >= *start && t < *end && raw.abs() < *cap {
                    -gain
                } else {
                    0.0
                }
            }
            _ => 0.0,
        }
    }

    /// Times where the signal may jump or kink.
    pub fn breakpoints(&self) -> Vec<f64> {
        use DisturbanceSignal::*;
        let mut out = match self {
            Zero => vec![],
            ConstantWindow { start, end, .. }
            | Sinusoid { start, end, .. }
            | BandLimitedRandom { start, end, .. }
            | AdversarialAntisign { start, end, .. } => vec![*start, *end],
            ExponentialDecay { start, .. } => vec![*start],
            Tabulated { times, .. } => times.clone(),
        };
        out.retain(|v| v.is_finite() && *v > 0.0);
        out
    }

    /// Earliest time after which the signal vanishes identically.
    pub fn support_end(&self) -> f64 {
        use DisturbanceSignal::*;
        match self {
            Zero => 0.0,
            ConstantWindow { value, end, .. } => {
                if *value == 0.0 {
                    0.0
                } else {
                    *end
                }
            }
            Sinusoid { amplitude, end, .. } | BandLimitedRandom { amplitude, end, .. } => {
                if *amplitude == 0.0 {
                    0.0
                } else {
                    *end
                }
            }
            ExponentialDecay { amplitude, .. } => {
                if *amplitude == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            AdversarialAntisign { end, .. } => *end,
            Tabulated { times, .. } => times[times.len() - 1],
        }
    }

    /// Closed-form `‖d‖_p` when the kind admits one (`p = ∞` allowed).
    pub fn declared_norm(&self, p: f64) -> Option<f64> {
        use DisturbanceSignal::*;
        match self {
            Zero => Some(0.0),
            ConstantWindow { value, start, end } => Some(if p.is_infinite() {
                value.abs()
            } else {
                value.abs() * (end - start).powf(1.0 / p)
            }),
            ExponentialDecay { amplitude, rate, .. } => Some(if p.is_infinite() {
                amplitude.abs()
            } else {
                amplitude.abs() / (p * rate).powf(1.0 / p)
            }),
            Sinusoid { amplitude, freq, start, end, .. } if p.is_infinite() => {
                // The peak is attained once the window spans a full period.
                let period = std::f64::consts::TAU / freq.abs();
                (end - start >= period).then(|| amplitude.abs())
            }
            _ => None,
        }
    }

    /// Multiplies the amplitude by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        use DisturbanceSignal::*;
        let mut out = self.clone();
        match &mut out {
            Zero => {}
            ConstantWindow { value, .. } => *value *= c,
            Sinusoid { amplitude, .. } | ExponentialDecay { amplitude, .. } | BandLimitedRandom { amplitude, .. } => {
                *amplitude *= c
            }
            AdversarialAntisign { gain, bias, cap, .. } => {
                *gain *= c;
                *bias *= c;
                *cap *= c.abs();
            }
            Tabulated { values, .. } => values.iter_mut().for_each(|v| *v *= c),
        }
        out
    }
}

/// `(weight, frequency, phase)` triples of the band-limited generator.
fn band_components(seed: u64, count: usize, max_freq: f64) -> impl Iterator<Item = (f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(move |_| {
        let w = rng.random_range(0.5..=1.0);
        let f = max_freq * (1.0 - rng.random::<f64>());
        let ph = rng.random_range(0.0..std::f64::consts::TAU);
        (w, f, ph)
    })
}
