//! Adaptive one-step integrators with landing times, event location and an
//! optional projection after every accepted step.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Explicit Dormand–Prince 5(4).
    DormandPrince,
    /// Linearly implicit, L-stable Rosenbrock 2(3) for stiff switching layers.
    Rosenbrock,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            method: Method::Rosenbrock,
            rtol: 1e-8,
            atol: 1e-16,
            h_init: 1e-4,
            h_max: f64::INFINITY,
            max_steps: 5_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// How a call to [`Integrator::advance`] ended.
#[derive(Debug, Clone, PartialEq)]
pub enum Stop {
    /// Reached the requested end time.
    End,
    /// Event component `index` became positive; the state is just past it.
    Event(usize),
    /// The observer asked to halt.
    Halted,
}

/// Vector field `f(t, y, out)`.
pub trait Field<T> {
    fn eval(&self, t: T, y: &[T], out: &mut [T]);

    /// Analytic Jacobian `∂f/∂y`, when available.
    fn jacobian(&self, _t: T, _y: &[T]) -> Option<DMatrix<f64>> {
        None
    }
}

impl<T, F: Fn(T, &[T], &mut [T])> Field<T> for F {
    fn eval(&self, t: T, y: &[T], out: &mut [T]) {
        self(t, y, out)
    }
}

pub struct Integrator<T> {
    pub ctl: StepControl,
    pub stats: Stats,
    h: T,
}

const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

impl<T: Real> Integrator<T> {
    pub fn new(ctl: StepControl) -> Self {
        Integrator {
            h: T::of(ctl.h_init),
            ctl,
            stats: Stats::default(),
        }
    }

    fn order(&self) -> f64 {
        match self.ctl.method {
            Method::DormandPrince => 5.0,
            Method::Rosenbrock => 3.0,
        }
    }

    fn err_norm(&self, y0: &[T], y1: &[T], err: &[T]) -> T {
        let (rt, at) = (T::of(self.ctl.rtol), T::of(self.ctl.atol));
        let mut m = T::zero();
        for i in 0..y0.len() {
            let sc = at + rt * y0[i].abs().max(y1[i].abs());
            m = m.max((err[i] / sc).abs());
        }
        m
    }

    /// One step of size `h`; returns the new state and the error estimate.
    pub fn step<F: Field<T>>(&mut self, f: &F, t: T, y: &[T], h: T) -> (Vec<T>, Vec<T>) {
        match self.ctl.method {
            Method::DormandPrince => self.dp_step(f, t, y, h),
            Method::Rosenbrock => self.ros_step(f, t, y, h),
        }
    }

    fn dp_step<F: Field<T>>(&mut self, f: &F, t: T, y: &[T], h: T) -> (Vec<T>, Vec<T>) {
        let n = y.len();
        let mut k = vec![vec![T::zero(); n]; 7];
        let mut tmp = vec![T::zero(); n];
        for s in 0..7 {
            for i in 0..n {
                let acc = (0..s).fold(T::zero(), |a, j| a + T::of(DP_A[s][j]) * k[j][i]);
                tmp[i] = y[i] + h * acc;
            }
            f.eval(t + T::of(DP_C[s]) * h, &tmp, &mut k[s]);
        }
        self.stats.rhs_evals += 7;
        // The last stage point is the fifth-order solution.
        let err = (0..n)
            .map(|i| h * (0..7).fold(T::zero(), |a, s| a + T::of(DP_E[s]) * k[s][i]))
            .collect();
        (tmp, err)
    }

    // Forward differences with increments scaled by |y_j| (floored at atol);
    // increments drowned in roundoff are enlarged and retried.
    fn jacobian<F: Field<T>>(&mut self, f: &F, t: T, y: &[T], f0: &[T]) -> DMatrix<f64> {
        let n = y.len();
        let sq = T::epsilon().powf(T::of(0.625));
        let floor = T::of(self.ctl.atol);
        let fscale = f0.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let mut jac = DMatrix::zeros(n, n);
        let mut yp = y.to_vec();
        let mut fp = vec![T::zero(); n];
        for j in 0..n {
            let mut d = sq * y[j].abs().max(floor);
            for _ in 0..4 {
                yp[j] = y[j] + d;
                let dd = yp[j] - y[j];
                f.eval(t, &yp, &mut fp);
                self.stats.rhs_evals += 1;
                let change = fp.iter().zip(f0).fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
                for i in 0..n {
                    jac[(i, j)] = ((fp[i] - f0[i]) / dd).as_f64();
                }
                if change > T::zero() && change > T::epsilon() * T::of(1e3) * fscale || change == T::zero() && fscale == T::zero() {
                    break;
                }
                d = d * T::of(1e3);
            }
            yp[j] = y[j];
        }
        jac
    }

    // Rosenbrock 2(3) with d = 1/(2+√2), e32 = 6+√2.
    fn ros_step<F: Field<T>>(&mut self, f: &F, t: T, y: &[T], h: T) -> (Vec<T>, Vec<T>) {
        let n = y.len();
        let d = 1.0 / (2.0 + std::f64::consts::SQRT_2);
        let e32 = 6.0 + std::f64::consts::SQRT_2;
        let hf = h.as_f64();
        let mut f0 = vec![T::zero(); n];
        f.eval(t, y, &mut f0);
        let jac = match f.jacobian(t, y) {
            Some(j) => j,
            None => self.jacobian(f, t, y, &f0),
        };
        // Stay inside the step so landing points of time jumps are never crossed.
        let dt = (T::epsilon().sqrt() * t.abs().max(h.abs())).min(h * T::of(0.5));
        let mut ft = vec![T::zero(); n];
        f.eval(t + dt, y, &mut ft);
        let dt = (t + dt) - t;
        let tder: Vec<f64> = (0..n)
            .map(|i| if dt > T::zero() { ((ft[i] - f0[i]) / dt).as_f64() } else { 0.0 })
            .collect();
        self.stats.rhs_evals += 2;
        let w = DMatrix::<f64>::identity(n, n) - jac * (hf * d);
        let lu = w.lu();
        let solve = |rhs: Vec<f64>| -> Vec<f64> {
            lu.solve(&DVector::from_vec(rhs))
                .map(|v| v.iter().copied().collect())
                .unwrap_or_else(|| vec![f64::NAN; n])
        };
        let f0f: Vec<f64> = f0.iter().map(|v| v.as_f64()).collect();
        let k1 = solve((0..n).map(|i| f0f[i] + hf * d * tder[i]).collect());
        let half: Vec<T> = (0..n).map(|i| y[i] + T::of(0.5 * hf * k1[i])).collect();
        let mut f1 = vec![T::zero(); n];
        f.eval(t + h * T::of(0.5), &half, &mut f1);
        let f1f: Vec<f64> = f1.iter().map(|v| v.as_f64()).collect();
        let k2tmp = solve((0..n).map(|i| f1f[i] - k1[i]).collect());
        let k2: Vec<f64> = (0..n).map(|i| k2tmp[i] + k1[i]).collect();
        let y1: Vec<T> = (0..n).map(|i| y[i] + T::of(hf * k2[i])).collect();
        let mut f2 = vec![T::zero(); n];
        f.eval(t + h, &y1, &mut f2);
        self.stats.rhs_evals += 2;
        let k3 = solve(
            (0..n)
                .map(|i| f2[i].as_f64() - e32 * (k2[i] - f1f[i]) - 2.0 * (k1[i] - f0f[i]) + hf * d * tder[i])
                .collect(),
        );
        let err: Vec<T> = (0..n).map(|i| T::of(hf / 6.0 * (k1[i] - 2.0 * k2[i] + k3[i]))).collect();
        (y1, err)
    }

    /// Integrates from `(t0, y0)` to `t_end`.
    ///
    /// Steps are shortened to land exactly on every time in `stops` (sorted).
    /// `observer(t, y, at_stop)` runs after every accepted step and returns
    /// `true` to halt. `events`
    /// fills a vector whose components trigger when they become positive;
    /// the crossing is located by bisection on the step length until the
    /// triggering component lies in `(0, event_tol]`. `project` is applied to
    /// every accepted state.
    #[allow(clippy::too_many_arguments)]
    pub fn advance<F, E, O, P>(
        &mut self,
        f: &F,
        t0: T,
        y0: &[T],
        t_end: T,
        stops: &[T],
        events: Option<&E>,
        event_tol: T,
        observer: &mut O,
        project: &P,
    ) -> Result<(T, Vec<T>, Stop)>
    where
        F: Field<T>,
        E: Fn(T, &[T]) -> Vec<T>,
        O: FnMut(T, &[T], bool) -> bool,
        P: Fn(&mut [T]),
    {
        let mut t = t0;
        let mut y = y0.to_vec();
        let mut next_stop = stops.partition_point(|&s| s <= t0);
        let mut g_prev = events.map(|e| e(t, &y));
        let h_max = T::of(self.ctl.h_max);
        let safety = T::of(0.9);
        let inv_order = T::of(1.0 / self.order());
        let fail = |t: T, y: &[T], reason: String| Error::Integration {
            t: t.as_f64(),
            reason,
            last_state: y.iter().map(|v| v.as_f64()).collect(),
        };
        while t < t_end {
            if self.stats.accepted + self.stats.rejected >= self.ctl.max_steps {
                return Err(fail(t, &y, format!("step budget of {} exhausted", self.ctl.max_steps)));
            }
            let target = if next_stop < stops.len() { stops[next_stop].min(t_end) } else { t_end };
            let mut h = self.h.min(h_max);
            let mut lands = false;
            if t + h >= target {
                h = target - t;
                lands = true;
            }
            let h_floor = T::of(4.0) * T::epsilon() * t.abs().max(T::of(1e-12));
            if h < h_floor && !lands {
                return Err(fail(t, &y, format!("step size underflow (h = {:e})", h.as_f64())));
            }
            let (y1, err) = self.step(f, t, &y, h);
            let en = self.err_norm(&y, &y1, &err);
            if !en.is_finite() || y1.iter().any(|v| !v.is_finite()) {
                self.stats.rejected += 1;
                self.h = h * T::of(0.25);
                if self.h < h_floor {
                    return Err(fail(t, &y, "non-finite state (NaN or overflow)".into()));
                }
                continue;
            }
            let factor = if en > T::zero() {
                (safety * en.powf(-inv_order)).min(T::of(5.0)).max(T::of(0.2))
            } else {
                T::of(5.0)
            };
            if en > T::one() {
                self.stats.rejected += 1;
                self.h = h * factor.min(T::of(0.9));
                if self.h < h_floor {
                    return Err(fail(t, &y, format!("step size underflow (h = {:e})", self.h.as_f64())));
                }
                continue;
            }
            let mut y_new = y1;
            project(&mut y_new);
            let t_new = if lands { target } else { t + h };

            if let (Some(ev), Some(gp)) = (events, g_prev.as_ref()) {
                let g_new = ev(t_new, &y_new);
                if let Some(idx) = first_trigger(gp, &g_new) {
                    let (te, ye) = self.locate(f, t, &y, h, t_new, idx, ev, event_tol, project);
                    self.stats.accepted += 1;
                    return Ok((te, ye, Stop::Event(idx)));
                }
                g_prev = Some(g_new);
            }
            self.stats.accepted += 1;
            if !lands {
                // Keep the step suggestion from a landing step shortened by a stop.
                self.h = h * factor;
            } else if factor > T::one() {
                self.h = self.h.max(h * factor);
            } else {
                self.h = h * factor;
            }
            t = t_new;
            y = y_new;
            let at_stop = lands && next_stop < stops.len() && stops[next_stop] <= t;
            if at_stop {
                next_stop += 1;
            }
            if observer(t, &y, at_stop) {
                return Ok((t, y, Stop::Halted));
            }
        }
        Ok((t, y, Stop::End))
    }

    #[allow(clippy::too_many_arguments)]
    fn locate<F, E, P>(&mut self, f: &F, t: T, y: &[T], h: T, t_new: T, idx: usize, ev: &E, tol: T, project: &P) -> (T, Vec<T>)
    where
        F: Field<T>,
        E: Fn(T, &[T]) -> Vec<T>,
        P: Fn(&mut [T]),
    {
        let (mut lo, mut hi) = (T::zero(), h);
        let mut best: Option<(T, Vec<T>)> = None;
        for _ in 0..200 {
            let mid = (lo + hi) * T::of(0.5);
            let (mut ym, _) = self.step(f, t, y, mid);
            project(&mut ym);
            let tm = t + mid;
            if tm >= t_new {
                break;
            }
            let g = ev(tm, &ym)[idx];
            if g > T::zero() {
                hi = mid;
                let done = g <= tol;
                best = Some((t + mid, ym));
                if done {
                    break;
                }
            } else {
                lo = mid;
            }
            if hi - lo <= T::epsilon() * T::of(4.0) * (t.abs() + h) {
                break;
            }
        }
        match best {
            Some(b) => b,
            None => {
                let (mut yh, _) = self.step(f, t, y, h);
                project(&mut yh);
                (t_new, yh)
            }
        }
    }
}

fn first_trigger<T: Real>(prev: &[T], next: &[T]) -> Option<usize> {
    prev.iter()
        .zip(next)
        .position(|(&a, &b)| a <= T::zero() && b > T::zero())
}

/// No events.
pub fn no_events<T>(_: T, _: &[T]) -> Vec<T> {
    Vec::new()
}

/// Identity projection.
pub fn no_projection<T>(_: &mut [T]) {}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(method: Method, rtol: f64) -> (f64, Stats) {
        let ctl = StepControl {
            method,
            rtol,
            atol: 1e-14,
            ..Default::default()
        };
        let mut it = Integrator::<f64>::new(ctl);
        // y'' = −y
        let f = |_t: f64, y: &[f64], out: &mut [f64]| {
            out[0] = y[1];
            out[1] = -y[0];
        };
        let (_, y, _) = it
            .advance(&f, 0.0, &[1.0, 0.0], 10.0, &[], None::<&fn(f64, &[f64]) -> Vec<f64>>, 1e-10, &mut |_, _, _| false, &no_projection)
            .unwrap();
        ((y[0] - 10f64.cos()).abs().max((y[1] + 10f64.sin()).abs()), it.stats)
    }

    #[test]
    fn both_methods_converge_on_oscillator() {
        for m in [Method::DormandPrince, Method::Rosenbrock] {
            let (e1, _) = run(m, 1e-6);
            let (e2, _) = run(m, 1e-9);
            assert!(e2 < e1 / 10.0 && e2 < 1e-5, "{m:?}: {e1:e} {e2:e}");
        }
    }

    #[test]
    fn rosenbrock_handles_stiff_decay() {
        let ctl = StepControl::default();
        let mut it = Integrator::<f64>::new(ctl);
        // Fast component slaved to a slow decay.
        let f = |_t: f64, y: &[f64], out: &mut [f64]| {
            out[0] = -1e6 * (y[0] - y[1]);
            out[1] = -y[1];
        };
        let (_, y, _) = it
            .advance(&f, 0.0, &[0.0, 1.0], 2.0, &[], None::<&fn(f64, &[f64]) -> Vec<f64>>, 1e-10, &mut |_, _, _| false, &no_projection)
            .unwrap();
        assert!((y[1] - (-2f64).exp()).abs() < 1e-6);
        assert!((y[0] - y[1]).abs() < 1e-5);
        assert!(it.stats.accepted < 5000, "{:?}", it.stats);
    }

    #[test]
    fn lands_on_stops_and_locates_events() {
        let mut it = Integrator::<f64>::new(StepControl::default());
        let f = |_t: f64, _y: &[f64], out: &mut [f64]| out[0] = 1.0;
        let stops: Vec<f64> = (1..=10).map(|i| i as f64 * 0.1).collect();
        let mut seen = Vec::new();
        let ev = |_t: f64, y: &[f64]| vec![y[0] - 0.55];
        let (t, y, stop) = it
            .advance(&f, 0.0, &[0.0], 1.0, &stops, Some(&ev), 1e-10, &mut |t, _, at| {
                if at {
                    seen.push(t);
                }
                false
            }, &no_projection)
            .unwrap();
        assert_eq!(stop, Stop::Event(0));
        assert!((y[0] - 0.55).abs() <= 1e-10 && y[0] > 0.55 && (t - 0.55).abs() < 1e-9);
        assert_eq!(seen.len(), 5);
        assert_eq!(seen[4], 0.5);
    }
}
