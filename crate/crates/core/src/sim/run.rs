//! Closed-loop vector fields and the mode-switching driver.

use super::disturbance::DisturbanceSignal;
use nalgebra::DMatrix;

use super::integrator::{Field, Integrator, Stop};
use super::scenario::{Scenario, SystemKind};
use super::trajectory::{EventKind, EventRecord, Phase, Trajectory};
use crate::controller::HomogeneousController;
use crate::error::{Error, Result};
use crate::hybrid::FeedbackMode;
use crate::lyapunov::{layer_width, v_i_with_grad, v_n_and_omega, LyapCertificate, QuadraticNorm};
use crate::satfn::{sgn, standard_sat, SaturationSpec};
use crate::scalar::{norm2, Real};

/// What a scenario runs against.
#[derive(Debug, Clone, Copy)]
pub enum Model<'a, T> {
    Controller(&'a HomogeneousController<T>),
    Certified(&'a LyapCertificate<T>),
}

impl<'a, T> From<&'a HomogeneousController<T>> for Model<'a, T> {
    fn from(c: &'a HomogeneousController<T>) -> Self {
        Model::Controller(c)
    }
}

impl<'a, T> From<&'a LyapCertificate<T>> for Model<'a, T> {
    fn from(c: &'a LyapCertificate<T>) -> Self {
        Model::Certified(c)
    }
}

impl<'a, T> Model<'a, T> {
    fn ctrl(&self) -> &'a HomogeneousController<T> {
        match *self {
            Model::Controller(c) => c,
            Model::Certified(c) => &c.ctrl,
        }
    }

    fn cert(&self) -> Option<&'a LyapCertificate<T>> {
        match *self {
            Model::Controller(_) => None,
            Model::Certified(c) => Some(c),
        }
    }
}

/// Field values besides the derivative.
#[derive(Debug, Clone, Copy)]
struct Aux<T> {
    u: T,
    sat_in: T,
    d: T,
    in_layer: bool,
}

struct ClosedLoop<'a, T: Real> {
    kind: SystemKind,
    n: usize,
    ctrl: &'a HomogeneousController<T>,
    cert: Option<&'a LyapCertificate<T>>,
    quad: Option<QuadraticNorm<T>>,
    sat: Option<&'a SaturationSpec>,
    k: T,
    out_gain: T,
    l_n: T,
    alpha: T,
    eps: T,
    radius: T,
    hyst: T,
    d: &'a DisturbanceSignal,
    e: &'a [DisturbanceSignal],
    d_n: &'a DisturbanceSignal,
    external: bool,
    augmented: bool,
}

impl<'a, T: Real> ClosedLoop<'a, T> {
    fn dim(&self) -> usize {
        self.n + usize::from(self.augmented)
    }

    fn control_state(&self, z: &[T]) -> Vec<T> {
        let mut xc = z[..self.n].to_vec();
        if self.augmented {
            xc[self.n - 1] = xc[self.n - 1] - z[self.n];
        }
        xc
    }

    fn dist(&self, t: T, omega: T) -> T {
        T::of(self.d.value(t.as_f64(), omega.as_f64()))
    }

    fn dn(&self, t: T) -> T {
        T::of(self.d_n.value(t.as_f64(), 0.0))
    }

    /// Saturated input of a hybrid branch at the control state.
    fn hybrid_input(&self, inner: bool, t: T, xc: &[T]) -> (T, T, T) {
        let cert = self.cert.expect("hybrid loop has a certificate");
        let omega = if inner || self.d.is_state_dependent() {
            self.ctrl.omega_n(xc)
        } else {
            T::zero()
        };
        let u = if inner { cert.core.omega0(xc) } else { self.k * self.ctrl.omega_n(xc) };
        let d = self.dist(t, omega);
        (u, d, self.sat.expect("sat").eval(u + d))
    }

    /// `(∇V_0·Ẋ_out, ∇V_0·Ẋ_in)` up to a common positive factor.
    fn radial_rates(&self, t: T, z: &[T]) -> (T, T) {
        let xc = self.control_state(z);
        let px = self.quad.as_ref().expect("quadratic").apply(&xc);
        let mut base = T::zero();
        for i in 0..self.n - 1 {
            let mut r = z[i + 1];
            if self.external && !self.e.is_empty() {
                r = r + T::of(self.e[i].value(t.as_f64(), 0.0));
            }
            base = base + px[i] * r;
        }
        // Ẋ_n = ẋ_n − ẏ; the d_n terms cancel in the shifted coordinates.
        let dn_term = if self.external && !self.augmented { self.dn(t) } else { T::zero() };
        let last = px[self.n - 1];
        let (_, _, s_out) = self.hybrid_input(false, t, &xc);
        let (_, _, s_in) = self.hybrid_input(true, t, &xc);
        let a = base + last * (dn_term - self.out_gain * s_out);
        let b = base + last * (dn_term - self.out_gain * s_in);
        (a, b)
    }

    fn field(&self, phase: Phase, t: T, z: &[T], out: &mut [T]) -> Aux<T> {
        let n = self.n;
        out[..n - 1].copy_from_slice(&z[1..n]);
        let xc = if self.augmented { self.control_state(z) } else { z[..n].to_vec() };
        let aux = match (self.kind, phase) {
            (_, Phase::Captured) => {
                out.iter_mut().for_each(|v| *v = T::zero());
                return Aux {
                    u: T::zero(),
                    sat_in: T::zero(),
                    d: T::zero(),
                    in_layer: false,
                };
            }
            (SystemKind::SignLoop, _) => {
                let (vn, omega) = v_n_and_omega(self.ctrl, &xc);
                let d = self.dist(t, omega);
                let width = layer_width(self.eps, vn, self.alpha, d);
                let arg = omega + d;
                let s = if width > T::zero() { standard_sat(arg / width) } else { sgn(arg) };
                out[n - 1] = -self.l_n * s;
                Aux {
                    u: omega,
                    sat_in: s,
                    d,
                    in_layer: arg.abs() <= width,
                }
            }
            (SystemKind::SatOmegaLoop, _) => {
                let omega = self.ctrl.omega_n(&xc);
                let u = self.k * omega;
                let d = self.dist(t, omega);
                let s = self.sat.expect("sat").eval(u + d);
                out[n - 1] = -self.out_gain * s;
                Aux { u, sat_in: s, d, in_layer: false }
            }
            (_, Phase::BoundarySlide) => {
                let (a, b) = self.radial_rates(t, z);
                let lam = if b > a { (a / (a - b)).max(T::zero()).min(T::one()) } else { T::one() };
                let (u, d, s_in) = self.hybrid_input(true, t, &xc);
                let (_, _, s_out) = self.hybrid_input(false, t, &xc);
                let s = lam * s_in + (T::one() - lam) * s_out;
                out[n - 1] = -self.out_gain * s;
                Aux { u, sat_in: s, d, in_layer: false }
            }
            (_, ph) => {
                let (u, d, s) = self.hybrid_input(ph == Phase::Inner, t, &xc);
                out[n - 1] = -self.out_gain * s;
                Aux { u, sat_in: s, d, in_layer: false }
            }
        };
        if self.external {
            if !self.e.is_empty() {
                for i in 0..n - 1 {
                    if !self.e[i].is_zero() {
                        out[i] = out[i] + T::of(self.e[i].value(t.as_f64(), 0.0));
                    }
                }
            }
            if !self.d_n.is_zero() {
                let dn = self.dn(t);
                out[n - 1] = out[n - 1] + dn;
                if self.augmented {
                    out[n] = dn;
                }
            } else if self.augmented {
                out[n] = T::zero();
            }
        }
        aux
    }

    /// Analytic `∂f/∂z`; `None` while sliding on the ellipsoid.
    fn jacobian(&self, phase: Phase, t: T, z: &[T]) -> Option<DMatrix<f64>> {
        let (n, dim) = (self.n, self.dim());
        let mut jac = DMatrix::zeros(dim, dim);
        if phase == Phase::Captured {
            return Some(jac);
        }
        if phase == Phase::BoundarySlide {
            return None;
        }
        for i in 0..n - 1 {
            jac[(i, i + 1)] = 1.0;
        }
        let xc = self.control_state(z);
        let tf = t.as_f64();
        let mut row = vec![T::zero(); n];
        match self.kind {
            SystemKind::SignLoop => {
                let (vn, grad_v, _) = v_i_with_grad(self.ctrl, &xc, n);
                let (omega, grad_om) = self.ctrl.omega_n_grad(&xc);
                let d = self.dist(t, omega);
                let dd = T::of(self.d.omega_slope(tf, omega.as_f64()));
                let width = layer_width(self.eps, vn, self.alpha, d);
                let arg = omega + d;
                if width > T::zero() && arg.abs() <= width {
                    let gw = if vn > T::zero() {
                        self.eps * self.alpha * vn.powf(self.alpha - T::one())
                    } else {
                        T::zero()
                    };
                    let gd = self.eps * sgn(d) * dd;
                    for j in 0..n {
                        let da = grad_om[j] * (T::one() + dd);
                        let dw = gw * grad_v[j] + gd * grad_om[j];
                        row[j] = -self.l_n * (da / width - arg * dw / (width * width));
                    }
                }
            }
            _ => {
                let inner = phase == Phase::Inner;
                let (omega, grad_om) = self.ctrl.omega_n_grad(&xc);
                let d = self.dist(t, omega);
                let dd = T::of(self.d.omega_slope(tf, omega.as_f64()));
                let sat = self.sat.expect("sat");
                let core_k = self.cert.map(|c| &c.core.k);
                let u = match (inner, core_k) {
                    (true, Some(k)) => k.iter().zip(&xc).fold(T::zero(), |a, (&ki, &xi)| a + ki * xi),
                    _ => self.k * omega,
                };
                let slope = sat.slope(u + d);
                for j in 0..n {
                    let du = match (inner, core_k) {
                        (true, Some(k)) => k[j],
                        _ => self.k * grad_om[j],
                    };
                    row[j] = -self.out_gain * slope * (du + dd * grad_om[j]);
                }
            }
        }
        for j in 0..n {
            jac[(n - 1, j)] = row[j].as_f64();
        }
        if self.augmented {
            jac[(n - 1, n)] = -row[n - 1].as_f64();
        }
        Some(jac)
    }

    fn events(&self, phase: Phase, t: T, z: &[T]) -> Vec<T> {
        match phase {
            Phase::Outer | Phase::Inner => {
                let v0 = self.quad.as_ref().expect("quadratic").eval(&self.control_state(z));
                if phase == Phase::Outer {
                    vec![self.radius - v0]
                } else {
                    vec![v0 - self.radius * (T::one() + self.hyst)]
                }
            }
            Phase::BoundarySlide => {
                let (a, b) = self.radial_rates(t, z);
                vec![-b, a]
            }
            _ => Vec::new(),
        }
    }

    fn project(&self, phase: Phase, z: &mut [T]) {
        if phase != Phase::BoundarySlide {
            return;
        }
        let xc = self.control_state(z);
        let v0 = self.quad.as_ref().expect("quadratic").eval(&xc);
        if v0 > T::zero() {
            let r = self.radius / v0;
            let y = if self.augmented { z[self.n] } else { T::zero() };
            for i in 0..self.n {
                z[i] = xc[i] * r;
            }
            z[self.n - 1] = z[self.n - 1] + y;
        }
    }

    fn record(&self, tr: &mut Trajectory, phase: Phase, t: T, z: &[T], y_running: f64) {
        let mut dz = vec![T::zero(); self.dim()];
        let aux = self.field(phase, t, z, &mut dz);
        let xc = self.control_state(z);
        let tf = t.as_f64();
        tr.t.push(tf);
        tr.x.push(z[..self.n].iter().map(|v| v.as_f64()).collect());
        tr.xdot.push(dz[..self.n].iter().map(|v| v.as_f64()).collect());
        tr.u.push(aux.u.as_f64());
        tr.sat_in.push(aux.sat_in.as_f64());
        tr.vn.push(crate::lyapunov::v_n(self.ctrl, &xc).as_f64());
        match self.cert {
            Some(c) => {
                tr.v0.push(c.v0(&xc).as_f64());
                tr.w.push(c.w(&xc).as_f64());
            }
            None => {
                tr.v0.push(f64::NAN);
                tr.w.push(f64::NAN);
            }
        }
        tr.y.push(if self.augmented { z[self.n].as_f64() } else { y_running });
        tr.d.push(aux.d.as_f64());
        tr.d_n.push(self.d_n.value(tf, 0.0));
        tr.e.push(self.e.iter().map(|e| e.value(tf, 0.0)).collect());
        tr.phase.push(phase);
        if let Some(&prev) = tr.in_layer.last() {
            if prev != aux.in_layer {
                let kind = if aux.in_layer { EventKind::LayerEnter } else { EventKind::LayerExit };
                tr.events.push(EventRecord { t: tf, kind, value: 0.0 });
            }
        }
        tr.in_layer.push(aux.in_layer);
    }
}

struct PhaseField<'b, 'a, T: Real> {
    cl: &'b ClosedLoop<'a, T>,
    phase: Phase,
    /// Latest time at which disturbances are sampled.
    left: T,
}

impl<T: Real> Field<T> for PhaseField<'_, '_, T> {
    fn eval(&self, t: T, y: &[T], out: &mut [T]) {
        self.cl.field(self.phase, t.min(self.left), y, out);
    }

    fn jacobian(&self, t: T, y: &[T]) -> Option<DMatrix<f64>> {
        self.cl.jacobian(self.phase, t.min(self.left), y)
    }
}

/// Sampling grid `0, dt, 2dt, …` ending exactly at `horizon`.
pub fn output_grid(horizon: f64, dt: f64) -> Vec<f64> {
    let steps = (horizon / dt * (1.0 + 1e-12)).floor() as usize;
    let mut g: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    if let Some(&last) = g.last() {
        if horizon - last > 1e-9 * dt {
            g.push(horizon);
        } else {
            *g.last_mut().unwrap() = horizon;
        }
    }
    g
}

/// Integrates a scenario and samples it on the output grid.
pub fn integrate<'a, T: Real>(scn: &Scenario, model: impl Into<Model<'a, T>>) -> Result<Trajectory> {
    let model = model.into();
    let ctrl = model.ctrl();
    let n = ctrl.n();
    scn.validate(n)?;
    let cert = model.cert();
    if scn.system.needs_certificate() && cert.is_none() {
        return Err(Error::InvalidParameter(format!(
            "system {:?} needs a certificate (k, saturation and linear core)",
            scn.system
        )));
    }
    let mode = scn.feedback_mode();
    let hybrid = matches!(scn.system, SystemKind::HybridLoop | SystemKind::ExternalLoop);
    let augmented = hybrid && mode == FeedbackMode::DynamicShift && !scn.d_n.is_zero();
    let external = scn.system == SystemKind::ExternalLoop;
    let sat = cert.map(|c| &c.sat);
    let l_n = ctrl.l_n();
    let cl = ClosedLoop {
        kind: scn.system,
        n,
        ctrl,
        cert,
        quad: cert.map(|c| c.quadratic()),
        sat,
        k: T::of(scn.k.unwrap_or_else(|| cert.map(|c| c.k).unwrap_or(1.0))),
        out_gain: sat.map(|s| l_n / T::of(s.sigma_inf)).unwrap_or(l_n),
        l_n,
        alpha: ctrl.alpha(),
        eps: T::of(scn.solver.eps_sm),
        radius: T::of(cert.map(|c| c.a).unwrap_or(0.0)),
        hyst: T::of(scn.solver.hysteresis),
        d: &scn.d,
        e: &scn.e,
        d_n: &scn.d_n,
        external,
        augmented,
    };

    let horizon = scn.horizon;
    let grid = output_grid(horizon, scn.solver.dt_out);
    let mut jumps: Vec<f64> = Vec::new();
    for s in std::iter::once(&scn.d).chain(&scn.e).chain(std::iter::once(&scn.d_n)) {
        jumps.extend(s.breakpoints().into_iter().filter(|&b| b < horizon));
    }
    jumps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    jumps.dedup();
    let mut stops: Vec<f64> = grid[1..].iter().chain(&jumps).copied().collect();
    stops.sort_by(|a, b| a.partial_cmp(b).unwrap());
    stops.dedup();
    let stops_t: Vec<T> = stops.iter().map(|&s| T::of(s)).collect();
    let grid_t: Vec<T> = grid.iter().map(|&s| T::of(s)).collect();
    let quiet_after = std::iter::once(&scn.d)
        .chain(&scn.e)
        .chain(std::iter::once(&scn.d_n))
        .map(|s| match s {
            DisturbanceSignal::AdversarialAntisign { bias, .. } if *bias == 0.0 => 0.0,
            _ => s.support_end(),
        })
        .fold(0.0, f64::max);

    let mut z: Vec<T> = scn.x0.iter().map(|&v| T::of(v)).collect();
    if augmented {
        z.push(T::zero());
    }
    let mut phase = if hybrid {
        let v0 = cl.quad.as_ref().unwrap().eval(&cl.control_state(&z));
        if v0 <= cl.radius { Phase::Inner } else { Phase::Outer }
    } else {
        Phase::Free
    };
    let mut tr = Trajectory::empty(scn.system, n, mode == FeedbackMode::DynamicShift && hybrid);
    let mut integ = Integrator::<T>::new(scn.solver.step_control());
    let mut t = T::zero();
    let mut y_running = 0.0;
    let mut last_dn = scn.d_n.value(0.0, 0.0);
    let mut warned = false;
    let mut next_out = 1usize;
    let mut switches = 0usize;
    let capture = T::of(scn.solver.capture_radius);
    let event_tol = T::of(scn.solver.event_tol);
    let omega_bound = scn.solver.omega_bound;
    cl.record(&mut tr, phase, t, &z, 0.0);
    let mut captured_t: Option<f64> = None;

    let mut pending: Option<usize> = None;
    loop {
        if hybrid && pending.is_none() {
            // A jump of the disturbances can leave the state on the wrong side.
            let slack = if phase == Phase::BoundarySlide { T::zero() } else { event_tol };
            pending = cl.events(phase, t, &z).iter().position(|&g| g > slack);
        }
        if let Some(idx) = pending.take() {
            switches += 1;
            if switches > scn.solver.max_switches {
                return Err(Error::Integration {
                    t: t.as_f64(),
                    reason: format!("more than {} branch switches", scn.solver.max_switches),
                    last_state: z.iter().map(|v| v.as_f64()).collect(),
                });
            }
            let tf = t.as_f64();
            let gap = (cl.quad.as_ref().unwrap().eval(&cl.control_state(&z)) - cl.radius).as_f64();
            let (a, b) = cl.radial_rates(t, &z);
            let h = scn.solver.hysteresis;
            let (next, kind) = match (phase, idx) {
                (Phase::Outer, _) if h > 0.0 || b <= T::zero() || a >= T::zero() => (Phase::Inner, EventKind::EnterInner),
                (Phase::Outer, _) => (Phase::BoundarySlide, EventKind::SlideStart),
                (Phase::Inner, _) if h > 0.0 || a >= T::zero() => (Phase::Outer, EventKind::LeaveInner),
                (Phase::Inner, _) => (Phase::BoundarySlide, EventKind::SlideStart),
                (Phase::BoundarySlide, 0) => (Phase::Inner, EventKind::SlideEnd),
                _ => (Phase::Outer, EventKind::SlideEnd),
            };
            tr.events.push(EventRecord { t: tf, kind, value: gap });
            phase = next;
            cl.project(phase, &mut z);
            continue;
        }
        let ph = phase;
        // Integrate piecewise between jumps of the disturbances, evaluating
        // them with left limits at the segment end.
        let seg_end = T::of(jumps.iter().copied().find(|&b| T::of(b) > t).unwrap_or(horizon));
        let left = seg_end - seg_end * T::epsilon();
        let field = PhaseField { cl: &cl, phase: ph, left };
        let events = |tt: T, zz: &[T]| cl.events(ph, tt.min(left), zz);
        let project = |zz: &mut [T]| cl.project(ph, zz);
        let mut observer = |tt: T, zz: &[T], at_stop: bool| -> bool {
            let tf = tt.as_f64();
            let xc = cl.control_state(zz);
            let y_small = !cl.augmented || zz[n].abs() <= capture;
            if tf >= quiet_after && capture > T::zero() && y_small && norm2(&zz[..n]) <= capture && norm2(&xc) <= capture {
                captured_t = Some(tf);
                return true;
            }
            if !at_stop || next_out >= grid_t.len() || tt != grid_t[next_out] {
                return false;
            }
            let dn = scn.d_n.value(tf, 0.0);
            y_running += 0.5 * (dn + last_dn) * (grid[next_out] - grid[next_out - 1]);
            last_dn = dn;
            cl.record(&mut tr, ph, tt, zz, y_running);
            next_out += 1;
            let running = *tr.y.last().unwrap();
            if !warned && running.abs() > omega_bound {
                warned = true;
                tr.events.push(EventRecord { t: tf, kind: EventKind::OmegaBound, value: running });
                tr.warnings.push(format!(
                    "running integral of d_n reached {running} at t = {tf}, beyond the bound {omega_bound}; d_n may not have a bounded integral"
                ));
            }
            false
        };
        let (t1, z1, stop) = integ.advance(
            &field,
            t,
            &z,
            seg_end,
            &stops_t,
            if hybrid { Some(&events) } else { None },
            event_tol,
            &mut observer,
            &project,
        )?;
        t = t1;
        z = z1;
        match stop {
            Stop::End if t >= T::of(horizon) => break,
            Stop::End => {}
            Stop::Halted => break,
            Stop::Event(idx) => pending = Some(idx),
        }
    }
    tr.stats = integ.stats;

    if let Some(tf) = captured_t {
        tr.events.push(EventRecord { t: tf, kind: EventKind::Capture, value: 0.0 });
        let mut zero = vec![T::zero(); cl.dim()];
        if cl.augmented {
            zero[n] = z[n];
        }
        for &tt in &grid_t[next_out..] {
            cl.record(&mut tr, Phase::Captured, tt, &zero, y_running);
        }
    }
    Ok(tr)
}

/// Runs the external loop with the shifted feedback `kω(x − y e_n)`, `ẏ = d_n`.
pub fn run_matched_shift<T: Real>(scn: &Scenario, cert: &LyapCertificate<T>) -> Result<Trajectory> {
    let mut s = scn.clone();
    s.system = SystemKind::ExternalLoop;
    s.feedback = Some(FeedbackMode::DynamicShift);
    integrate(&s, cert)
}
