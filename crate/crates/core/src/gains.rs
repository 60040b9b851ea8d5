//! `L_p` norms of sampled signals, empirical gain sweeps and the external
//! disturbance functionals `N` and `Γ`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::ChainParams;
use crate::error::{Error, Result};
use crate::lyapunov::LyapCertificate;
use crate::scalar::{norm2, Real};
use crate::sim::{integrate, DisturbanceSignal, Scenario, SolverSettings, SystemKind, Trajectory};

/// Fraction of the horizon used as the limsup window.
pub const TAIL_FRACTION: f64 = 0.2;

/// `‖f‖_p` on a finite grid with an estimate of the truncated tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    /// Estimated `∫_T^∞|f|^p` extrapolated geometrically from the last two
    /// tenths of the window; `∞` when the trace is not decaying, zero for `p = ∞`.
    pub tail: f64,
}

fn check_trace(t: &[f64], f: &[f64]) -> Result<()> {
    if t.is_empty() || f.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if t.len() != f.len() {
        return Err(Error::InvalidParameter(format!("trace lengths differ: {} vs {}", t.len(), f.len())));
    }
    Ok(())
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("norm index must satisfy p >= 1, got {p}")))
    }
}

fn trapezoid(t: &[f64], g: &[f64], from: usize, to: usize) -> f64 {
    (from + 1..to).map(|k| 0.5 * (t[k] - t[k - 1]) * (g[k] + g[k - 1])).sum()
}

/// Trapezoid `L_p` norm (`p = f64::INFINITY` for the sup norm).
pub fn lp_norm(t: &[f64], f: &[f64], p: f64) -> Result<NormEstimate> {
    check_trace(t, f)?;
    check_p(p)?;
    if p.is_infinite() {
        let value = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        return Ok(NormEstimate { value, tail: 0.0 });
    }
    let g: Vec<f64> = f.iter().map(|v| v.abs().powf(p)).collect();
    let len = g.len();
    let integral = trapezoid(t, &g, 0, len);
    let (a, b) = (len * 8 / 10, len * 9 / 10);
    let tail = if b > a + 1 && len > b + 1 {
        let i1 = trapezoid(t, &g, a, b + 1);
        let i2 = trapezoid(t, &g, b, len);
        if i2 == 0.0 {
            0.0
        } else if i2 < i1 {
            let q = i2 / i1;
            i2 * q / (1.0 - q)
        } else {
            f64::INFINITY
        }
    } else {
        f64::NAN
    };
    Ok(NormEstimate {
        value: integral.powf(1.0 / p),
        tail,
    })
}

/// Running integral `∫_0^t f` by the trapezoid rule.
pub fn running_integral(t: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    for k in 0..f.len() {
        if k > 0 {
            acc += 0.5 * (t[k] - t[k - 1]) * (f[k] + f[k - 1]);
        }
        out.push(acc);
    }
    out
}

/// `N(f)` approximated by `sup_{t_2 ≥ t_1 ≥ t_w} |∫_{t_1}^{t_2} f|` over the
/// final window `t ≥ (1 − TAIL_FRACTION)·T`, i.e. the oscillation of the
/// running integral there.
pub fn n_functional(t: &[f64], f: &[f64]) -> Result<f64> {
    n_functional_window(t, f, TAIL_FRACTION)
}

pub fn n_functional_window(t: &[f64], f: &[f64], fraction: f64) -> Result<f64> {
    check_trace(t, f)?;
    let start = window_start(t, fraction);
    let run = running_integral(t, f);
    let (lo, hi) = run[start..]
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(hi - lo)
}

/// `Γ(E) = ‖E‖_∞ + Σ_i ‖d_i‖_∞^{η_i}` from per-sample rows `(d_1, …, d_{n−1})`.
pub fn gamma_functional(rows: &[Vec<f64>], params: &ChainParams) -> Result<f64> {
    let m = params.n - 1;
    let mut vec_sup = 0.0f64;
    let mut comp_sup = vec![0.0f64; m];
    for row in rows {
        if row.is_empty() {
            continue;
        }
        if row.len() != m {
            return Err(Error::InvalidParameter(format!("mismatched rows need {m} entries, got {}", row.len())));
        }
        vec_sup = vec_sup.max(norm2(row));
        for (s, v) in comp_sup.iter_mut().zip(row) {
            *s = s.max(v.abs());
        }
    }
    let sum: f64 = comp_sup
        .iter()
        .zip(params.gamma_exponents())
        .map(|(s, e)| s.powf(f64::of_ratio(*e)))
        .sum();
    Ok(vec_sup + sum)
}

fn window_start(t: &[f64], fraction: f64) -> usize {
    let (t0, t1) = (t[0], t[t.len() - 1]);
    let cut = t1 - fraction * (t1 - t0);
    t.partition_point(|&s| s < cut).min(t.len() - 1)
}

/// Sup over the final window, compared with the doubled window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSup {
    pub value: f64,
    pub window_start: f64,
    /// Sup over the window of twice the length.
    pub doubled: f64,
    /// Doubling the window changes the sup by less than 5% (or both are
    /// below `floor`).
    pub settled: bool,
}

pub fn tail_sup(t: &[f64], f: &[f64], fraction: f64, floor: f64) -> Result<TailSup> {
    check_trace(t, f)?;
    let sup_from = |k: usize| f[k..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let k1 = window_start(t, fraction);
    let k2 = window_start(t, (2.0 * fraction).min(1.0));
    let value = sup_from(k1);
    let doubled = sup_from(k2);
    let settled = doubled <= floor || (doubled - value).abs() <= 0.05 * doubled;
    Ok(TailSup {
        value,
        window_start: t[k1],
        doubled,
        settled,
    })
}

/// Signal whose norm is compared with the disturbance norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputMeasure {
    /// `W = min(V_0, V_n^α)`.
    W,
    /// `V_n^α`.
    VnAlpha,
}

impl OutputMeasure {
    pub fn trace(self, tr: &Trajectory, alpha: f64) -> Vec<f64> {
        match self {
            OutputMeasure::W => tr.w.clone(),
            OutputMeasure::VnAlpha => tr.vn.iter().map(|v| v.max(0.0).powf(alpha)).collect(),
        }
    }
}

/// A disturbance family swept over amplitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSweep {
    pub system: SystemKind,
    /// Unit-amplitude members, scaled by every amplitude.
    pub family: Vec<DisturbanceSignal>,
    pub amplitudes: Vec<f64>,
    /// Initial states; must be `[0]` for finite `p`.
    pub x0: Vec<Vec<f64>>,
    pub horizon: f64,
    pub output: OutputMeasure,
    pub solver: SolverSettings,
    /// A compactly supported run must end below this norm.
    pub return_threshold: f64,
    /// Horizon doublings allowed for a `p = ∞` run whose tail has not settled.
    #[serde(default)]
    pub settle_doublings: u32,
}

impl GainSweep {
    pub fn new(system: SystemKind, n: usize, family: Vec<DisturbanceSignal>, amplitudes: Vec<f64>, horizon: f64) -> Self {
        GainSweep {
            system,
            family,
            amplitudes,
            x0: vec![vec![0.0; n]],
            horizon,
            output: if system == SystemKind::SignLoop { OutputMeasure::VnAlpha } else { OutputMeasure::W },
            solver: SolverSettings::default(),
            return_threshold: 1e-5,
            settle_doublings: 2,
        }
    }
}

/// Unit-amplitude disturbance shapes used by the standard sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    Constant,
    Sinusoid,
    BandLimited,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 3] = [FamilyKind::Constant, FamilyKind::Sinusoid, FamilyKind::BandLimited];

    /// Compactly supported on `[0, support)` for finite `p` (the constant
    /// on half of it), persistent for `p = ∞`.
    pub fn member(self, p: f64, support: f64, seed: u64) -> DisturbanceSignal {
        let end = if p.is_finite() { support } else { f64::INFINITY };
        match self {
            FamilyKind::Constant => DisturbanceSignal::ConstantWindow {
                value: 1.0,
                start: 0.0,
                end: if p.is_finite() { 0.5 * support } else { end },
            },
            FamilyKind::Sinusoid => DisturbanceSignal::Sinusoid {
                amplitude: 1.0,
                freq: 1.0,
                phase: 0.0,
                start: 0.0,
                end,
            },
            FamilyKind::BandLimited => DisturbanceSignal::BandLimitedRandom {
                amplitude: 1.0,
                seed,
                components: 8,
                max_freq: 2.0,
                start: 0.0,
                end,
            },
        }
    }
}

/// `points` amplitudes spaced geometrically from `lo` to `hi`.
pub fn log_amplitudes(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || points == 0 {
        return Err(Error::InvalidParameter(format!("bad amplitude range [{lo}, {hi}] with {points} points")));
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..points)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64))
        .collect())
}

/// One run of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRecord {
    pub family: usize,
    pub amplitude: f64,
    pub x0: usize,
    pub d_norm: f64,
    /// `‖output‖_p`, or the tail sup for `p = ∞`.
    pub out_norm: f64,
    pub ratio: f64,
    /// `‖x_i‖_p` per coordinate (tail sup for `p = ∞`).
    pub coord_norms: Vec<f64>,
    /// `sup_t V_n`.
    pub vn_sup: f64,
    pub final_norm: f64,
    /// Compact support ended and the state returned below the threshold.
    pub returned: Option<bool>,
    /// `false` for runs that failed or whose tail did not settle.
    pub converged: bool,
    /// Zero disturbance: excluded from the gain.
    pub trivial: bool,
    pub note: String,
}

/// Summary of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub p: f64,
    pub records: Vec<GainRecord>,
    /// Largest ratio over admissible runs.
    pub gamma_hat: f64,
    /// Per family `(median ratio, ratio at the top amplitude)`.
    pub family_ratios: Vec<(f64, f64)>,
    /// Every family keeps `top ≤ 2·median`.
    pub finite_gain: bool,
    /// Every compactly supported run returned below the threshold.
    pub all_returned: bool,
    pub excluded: usize,
}

impl GainReport {
    pub fn admissible(&self) -> impl Iterator<Item = &GainRecord> {
        self.records.iter().filter(|r| r.converged && !r.trivial)
    }

    /// One row per run.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::InvalidParameter(format!("csv output: {e}"));
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["family", "amplitude", "x0", "p", "d_norm", "out_norm", "ratio", "vn_sup", "final_norm", "returned", "converged", "trivial", "note"])
            .map_err(io)?;
        for r in &self.records {
            let returned = r.returned.map(|b| b.to_string()).unwrap_or_default();
            wtr.write_record([
                r.family.to_string(),
                r.amplitude.to_string(),
                r.x0.to_string(),
                self.p.to_string(),
                r.d_norm.to_string(),
                r.out_norm.to_string(),
                r.ratio.to_string(),
                r.vn_sup.to_string(),
                r.final_norm.to_string(),
                returned,
                r.converged.to_string(),
                r.trivial.to_string(),
                r.note.clone(),
            ])
            .map_err(io)?;
        }
        wtr.flush().map_err(|e| Error::InvalidParameter(format!("csv output: {e}")))
    }

    /// `key,value` summary block.
    pub fn write_summary<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| Error::InvalidParameter(format!("summary output: {e}"));
        writeln!(out, "key,value").map_err(io)?;
        writeln!(out, "p,{}", self.p).map_err(io)?;
        writeln!(out, "gamma_hat,{}", self.gamma_hat).map_err(io)?;
        writeln!(out, "finite_gain,{}", self.finite_gain).map_err(io)?;
        writeln!(out, "all_returned,{}", self.all_returned).map_err(io)?;
        writeln!(out, "excluded,{}", self.excluded).map_err(io)?;
        for (i, (med, top)) in self.family_ratios.iter().enumerate() {
            writeln!(out, "family{i}_median_ratio,{med}").map_err(io)?;
            writeln!(out, "family{i}_top_ratio,{top}").map_err(io)?;
        }
        Ok(())
    }

    /// Two-column `amplitude,ratio` data for one family.
    pub fn write_curve<W: Write>(&self, family: usize, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| Error::InvalidParameter(format!("curve output: {e}"));
        writeln!(out, "amplitude,ratio").map_err(io)?;
        for r in self.admissible().filter(|r| r.family == family) {
            writeln!(out, "{},{}", r.amplitude, r.ratio).map_err(io)?;
        }
        Ok(())
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Measures one finished run.
pub fn measure_run(tr: &Trajectory, p: f64, output: OutputMeasure, alpha: f64) -> Result<(f64, f64, Vec<f64>, bool)> {
    let out = output.trace(tr, alpha);
    let d_norm = lp_norm(&tr.t, &tr.d, p)?.value;
    if p.is_infinite() {
        let ts = tail_sup(&tr.t, &out, TAIL_FRACTION, 1e-9)?;
        let coords = (0..tr.n)
            .map(|i| tail_sup(&tr.t, &tr.coordinate(i), TAIL_FRACTION, 1e-9).map(|s| s.value))
            .collect::<Result<Vec<_>>>()?;
        Ok((d_norm, ts.value, coords, ts.settled))
    } else {
        let o = lp_norm(&tr.t, &out, p)?.value;
        let coords = (0..tr.n)
            .map(|i| lp_norm(&tr.t, &tr.coordinate(i), p).map(|e| e.value))
            .collect::<Result<Vec<_>>>()?;
        Ok((d_norm, o, coords, true))
    }
}

/// Runs a sweep and assembles the finite-gain verdict.
///
/// For finite `p` the output is `‖output‖_p` over the horizon and every
/// initial state must be zero. For `p = ∞` it is the sup over the final
/// window; a run whose window has not settled is repeated with a doubled
/// horizon up to `settle_doublings` times, then flagged and excluded.
pub fn estimate_gain<T: Real>(cert: &LyapCertificate<T>, p: f64, sweep: &GainSweep) -> Result<GainReport> {
    estimate_gain_inspect(cert, p, sweep, |_| ()).map(|(report, _)| report)
}

/// [`estimate_gain`] that also applies `inspect` to every finished run.
///
/// The second vector is parallel to `records`; failed runs give `None`.
pub fn estimate_gain_inspect<T, R, F>(
    cert: &LyapCertificate<T>,
    p: f64,
    sweep: &GainSweep,
    inspect: F,
) -> Result<(GainReport, Vec<Option<R>>)>
where
    T: Real,
    R: Send,
    F: Fn(&Trajectory) -> R + Sync,
{
    check_p(p)?;
    let n = cert.n();
    if p.is_finite() && sweep.x0.iter().any(|x| x.iter().any(|&v| v != 0.0)) {
        return Err(Error::InvalidParameter("finite-p sweeps start at the origin".into()));
    }
    if sweep.family.is_empty() || sweep.amplitudes.is_empty() || sweep.x0.is_empty() {
        return Err(Error::InvalidParameter("sweep needs a family, amplitudes and initial states".into()));
    }
    let alpha = cert.ctrl.alpha().as_f64();
    let mut jobs = Vec::new();
    for (fi, _) in sweep.family.iter().enumerate() {
        for &a in &sweep.amplitudes {
            for xi in 0..sweep.x0.len() {
                jobs.push((fi, a, xi));
            }
        }
    }
    let (records, inspected): (Vec<GainRecord>, Vec<Option<R>>) = jobs
        .par_iter()
        .map(|&(fi, amp, xi)| {
            let d = sweep.family[fi].scaled(amp);
            let mut scn = Scenario::new(sweep.system, sweep.x0[xi].clone(), sweep.horizon);
            scn.d = d.clone();
            scn.solver = sweep.solver;
            let mut rec = GainRecord {
                family: fi,
                amplitude: amp,
                x0: xi,
                d_norm: 0.0,
                out_norm: 0.0,
                ratio: f64::NAN,
                coord_norms: vec![f64::NAN; n],
                vn_sup: f64::NAN,
                final_norm: f64::NAN,
                returned: None,
                converged: false,
                trivial: amp == 0.0 || d.is_zero(),
                note: String::new(),
            };
            let mut seen = None;
            let mut run = scn.validate(n).and_then(|_| integrate(&scn, cert));
            let mut measured = run.and_then(|tr| measure_run(&tr, p, sweep.output, alpha).map(|m| (tr, m)));
            for _ in 0..sweep.settle_doublings {
                if !matches!(&measured, Ok((_, m)) if !m.3) {
                    break;
                }
                scn.horizon *= 2.0;
                run = integrate(&scn, cert);
                measured = run.and_then(|tr| measure_run(&tr, p, sweep.output, alpha).map(|m| (tr, m)));
            }
            match measured {
                Ok((tr, (d_norm, out, coords, settled))) => {
                    seen = Some(inspect(&tr));
                    rec.d_norm = d_norm;
                    rec.out_norm = out;
                    rec.coord_norms = coords;
                    rec.vn_sup = tr.vn.iter().fold(0.0, |m: f64, v| m.max(*v));
                    rec.final_norm = tr.final_norm().unwrap_or(f64::NAN);
                    rec.trivial |= d_norm == 0.0;
                    rec.ratio = if rec.trivial { 0.0 } else { out / d_norm };
                    rec.converged = settled;
                    if !settled {
                        rec.note = "tail window not settled".into();
                    } else if scn.horizon > sweep.horizon {
                        rec.note = format!("horizon extended to {}", scn.horizon);
                    }
                    if d.support_end() < sweep.horizon && sweep.x0[xi].iter().all(|&v| v == 0.0) {
                        rec.returned = Some(rec.final_norm <= sweep.return_threshold);
                    }
                    if !tr.warnings.is_empty() {
                        rec.note = [rec.note.clone(), tr.warnings.join("; ")].join(" ").trim().to_string();
                    }
                }
                Err(e) => rec.note = e.to_string(),
            }
            (rec, seen)
        })
        .unzip();

    let mut family_ratios = Vec::with_capacity(sweep.family.len());
    let mut finite_gain = true;
    let top_amp = sweep.amplitudes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for fi in 0..sweep.family.len() {
        let ratios: Vec<f64> = records
            .iter()
            .filter(|r| r.family == fi && r.converged && !r.trivial)
            .map(|r| r.ratio)
            .collect();
        let top = records
            .iter()
            .filter(|r| r.family == fi && r.amplitude == top_amp && r.converged && !r.trivial)
            .map(|r| r.ratio)
            .fold(f64::NEG_INFINITY, f64::max);
        let med = median(ratios);
        if med.is_finite() && top.is_finite() {
            finite_gain &= top <= 2.0 * med;
        }
        family_ratios.push((med, top));
    }
    let gamma_hat = records
        .iter()
        .filter(|r| r.converged && !r.trivial)
        .map(|r| r.ratio)
        .fold(0.0, f64::max);
    let excluded = records.iter().filter(|r| !r.converged).count();
    let all_returned = records.iter().all(|r| r.returned != Some(false));
    let report = GainReport {
        p,
        records,
        gamma_hat,
        family_ratios,
        finite_gain: finite_gain && excluded < jobs.len(),
        all_returned,
        excluded,
    };
    Ok((report, inspected))
}

/// Norm bounds of the sign loop: `‖V_n^α‖_p ≤ (2l_n/c_n)‖d‖_p`.
pub fn sign_gain_bound<T: Real>(cert: &LyapCertificate<T>) -> f64 {
    2.0 * cert.ctrl.l_n().as_f64() / cert.c_n
}

/// `‖V_n‖_∞ ≤ ((2l_n)^p(1+β)/c_n^{p−1})^{1/(1+β)}‖d‖_p^{p/(1+β)}` with `β = α(p−1)`.
pub fn sign_sup_bound<T: Real>(cert: &LyapCertificate<T>, p: f64, d_norm: f64) -> f64 {
    let alpha = cert.ctrl.alpha().as_f64();
    let l_n = cert.ctrl.l_n().as_f64();
    let beta = alpha * (p - 1.0);
    let coeff = ((2.0 * l_n).powf(p) * (1.0 + beta) / cert.c_n.powf(p - 1.0)).powf(1.0 / (1.0 + beta));
    coeff * d_norm.powf(p / (1.0 + beta))
}

/// One sign-loop run checked against both norm bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignBoundRecord {
    pub p: f64,
    pub d_norm: f64,
    /// `‖V_n^α‖_p` over the run.
    pub out_norm: f64,
    pub gain_bound: f64,
    pub vn_sup: f64,
    pub sup_bound: f64,
    pub gain_ok: bool,
    pub sup_ok: bool,
}

impl SignBoundRecord {
    pub fn pass(&self) -> bool {
        self.gain_ok && self.sup_ok
    }
}

/// Checks `‖V_n^α‖_p` and `sup V_n` along a sign-loop run with relative `slack`.
///
/// The run should start at the origin; for finite `p` it should also reach
/// it again before the horizon so that the truncated tail is empty.
pub fn check_sign_bounds<T: Real>(
    cert: &LyapCertificate<T>,
    tr: &Trajectory,
    p: f64,
    slack: f64,
) -> Result<SignBoundRecord> {
    check_p(p)?;
    let alpha = cert.ctrl.alpha().as_f64();
    let d_norm = lp_norm(&tr.t, &tr.d, p)?.value;
    let va = OutputMeasure::VnAlpha.trace(tr, alpha);
    let out_norm = lp_norm(&tr.t, &va, p)?.value;
    let gain_bound = sign_gain_bound(cert) * d_norm;
    let vn_sup = tr.vn.iter().copied().fold(0.0, f64::max);
    let sup_bound = if p.is_infinite() {
        gain_bound.powf(1.0 / alpha)
    } else {
        sign_sup_bound(cert, p, d_norm)
    };
    let k = 1.0 + slack;
    Ok(SignBoundRecord {
        p,
        d_norm,
        out_norm,
        gain_bound,
        vn_sup,
        sup_bound,
        gain_ok: out_norm <= k * gain_bound,
        sup_ok: vn_sup <= k * sup_bound,
    })
}

/// Ten disturbances for the sign-loop bound checks: compactly supported for
/// finite `p`, persistent for `p = ∞`.
pub fn sign_battery(p: f64) -> Vec<DisturbanceSignal> {
    use DisturbanceSignal::*;
    let pi = std::f64::consts::PI;
    let inf = f64::INFINITY;
    let band = |amplitude, seed, max_freq, end| BandLimitedRandom {
        amplitude,
        seed,
        components: 8,
        max_freq,
        start: 0.0,
        end,
    };
    let sine = |amplitude, freq, phase, end| Sinusoid {
        amplitude,
        freq,
        phase,
        start: 0.0,
        end,
    };
    if p.is_finite() {
        vec![
            ConstantWindow { value: 0.5, start: 0.0, end: 2.0 },
            ConstantWindow { value: -0.2, start: 1.0, end: 4.0 },
            ConstantWindow { value: 3.0, start: 0.0, end: 1.0 },
            sine(1.0, 1.0, 0.0, 2.0 * pi),
            sine(0.3, 3.0, 0.0, 5.0),
            sine(2.0, 0.5, 0.0, 4.0 * pi),
            band(0.5, 1, 2.0, 5.0),
            band(1.5, 2, 2.0, 6.0),
            AdversarialAntisign { gain: 1.0, bias: 0.2, cap: 0.5, on_sign: false, start: 0.0, end: 3.0 },
            Tabulated { times: vec![0.0, 1.0, 2.0], values: vec![0.0, 0.8, 0.0] },
        ]
    } else {
        vec![
            ConstantWindow { value: 0.3, start: 0.0, end: inf },
            ConstantWindow { value: -1.0, start: 0.0, end: inf },
            sine(0.5, 2.0, 0.3, inf),
            sine(2.0, 0.5, 0.0, inf),
            sine(0.1, 5.0, 0.0, inf),
            sine(1.0, 1.0, 1.0, inf),
            band(0.5, 3, 2.0, inf),
            band(2.0, 4, 2.0, inf),
            band(0.2, 5, 5.0, inf),
            AdversarialAntisign { gain: 1.0, bias: 0.2, cap: 0.5, on_sign: false, start: 0.0, end: inf },
        ]
    }
}

/// Sign-loop scenarios for [`sign_battery`] from the origin of `R^n`.
///
/// Persistent disturbances keep the state inside the stiff switching layer,
/// so the `p = ∞` runs use a wider layer, a looser tolerance and a shorter horizon.
pub fn sign_battery_scenarios(n: usize, p: f64) -> Vec<Scenario> {
    sign_battery(p)
        .into_iter()
        .map(|d| {
            let horizon = if p.is_finite() { 30.0 } else { 20.0 };
            let mut scn = Scenario::new(SystemKind::SignLoop, vec![0.0; n], horizon).with_d(d);
            if p.is_infinite() {
                scn.solver.eps_sm = 1e-5;
                scn.solver.rtol = 1e-6;
            }
            scn
        })
        .collect()
}

/// Tail behaviour of one externally disturbed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstPerRecord {
    pub tail_sup_w: f64,
    pub window_start: f64,
    pub settled: bool,
    pub d_inf: f64,
    pub n_dn: f64,
    pub gamma_e: f64,
    /// `‖d‖_∞ + N(d_n) + Γ(E)`
    pub rhs: f64,
}

/// Measures `limsup W` against `‖d‖_∞ + N(d_n) + Γ(E)` on one run.
pub fn check_est_per(tr: &Trajectory, params: &ChainParams) -> Result<EstPerRecord> {
    let ts = tail_sup(&tr.t, &tr.w, TAIL_FRACTION, 1e-9)?;
    let d_inf = lp_norm(&tr.t, &tr.d, f64::INFINITY)?.value;
    let n_dn = n_functional(&tr.t, &tr.d_n)?;
    let gamma_e = gamma_functional(&tr.e, params)?;
    Ok(EstPerRecord {
        tail_sup_w: ts.value,
        window_start: ts.window_start,
        settled: ts.settled,
        d_inf,
        n_dn,
        gamma_e,
        rhs: d_inf + n_dn + gamma_e,
    })
}

/// Fit of a single `C_∞` over a battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstPerFit {
    pub c_inf: f64,
    /// Runs with a zero aggregate must have a vanishing tail.
    pub zero_rhs_ok: bool,
    pub unsettled: usize,
    pub pass: bool,
}

/// `C_∞` as the largest ratio `tail_sup_w / rhs`; passes iff it is finite,
/// every run is settled and runs without disturbance have `tail_sup_w ≤ floor`.
pub fn fit_c_inf(records: &[EstPerRecord], floor: f64) -> EstPerFit {
    let c_inf = records
        .iter()
        .filter(|r| r.rhs > 0.0)
        .map(|r| r.tail_sup_w / r.rhs)
        .fold(0.0, f64::max);
    let zero_rhs_ok = records.iter().filter(|r| r.rhs == 0.0).all(|r| r.tail_sup_w <= floor);
    let unsettled = records.iter().filter(|r| !r.settled).count();
    let bounded = records.iter().all(|r| r.tail_sup_w <= c_inf * r.rhs + floor);
    EstPerFit {
        c_inf,
        zero_rhs_ok,
        unsettled,
        pass: c_inf.is_finite() && zero_rhs_ok && unsettled == 0 && bounded,
    }
}
