//! `W_i`, `V_n`, `V_0`, `W` and the weighted dilation `D_r`.

use nalgebra::DMatrix;

use crate::controller::{ChainState, HomogeneousController};
use crate::error::{Error, Result};
use crate::scalar::Real;

fn w_term<T: Real>(ctrl: &HomogeneousController<T>, x: &[T], st: &ChainState<T>, i: usize) -> T {
    // i is zero-based: W_{i+1} with β_i and v_i (v_0 ≡ 0).
    let b = ctrl.beta(i);
    let b1 = b + T::one();
    if i == 0 {
        return x[0].abs().powf(b1) / b1;
    }
    let v = st.v[i - 1];
    let pv = st.pow_v[i - 1];
    let val = (x[i].abs().powf(b1) - v.abs().powf(b1)) / b1 - pv * (x[i] - v);
    val.max(T::zero())
}

/// `W_i(x_1..x_i)` for one-based `i`.
pub fn w_i<T: Real>(ctrl: &HomogeneousController<T>, x: &[T], i: usize) -> T {
    let st = ctrl.evaluate(x, i);
    w_term(ctrl, x, &st, i - 1)
}

/// `V_i = Σ_{j≤i} W_j`.
pub fn v_i<T: Real>(ctrl: &HomogeneousController<T>, x: &[T], i: usize) -> T {
    let st = ctrl.evaluate(x, i);
    (0..i).fold(T::zero(), |acc, j| acc + w_term(ctrl, x, &st, j))
}

pub fn v_n<T: Real>(ctrl: &HomogeneousController<T>, x: &[T]) -> T {
    v_i(ctrl, x, ctrl.n())
}

/// `V_i` and its gradient (length `i`) from a single forward pass.
pub fn v_i_with_grad<T: Real>(ctrl: &HomogeneousController<T>, x: &[T], i: usize) -> (T, Vec<T>, ChainState<T>) {
    let st = ctrl.evaluate(x, i);
    let jac = ctrl.pow_v_jacobian(x, &st);
    let mut grad = vec![T::zero(); i];
    let mut v = T::zero();
    for m in 0..i {
        v = v + w_term(ctrl, x, &st, m);
        grad[m] = grad[m] + st.omega[m];
        if m > 0 {
            // ∂W_m/∂x_j = −(x_m − v_{m−1}) ∂⌊v_{m−1}⌉^{β_{m−1}}/∂x_j
            let gap = x[m] - st.v[m - 1];
            for (j, g) in grad.iter_mut().enumerate().take(m) {
                *g = *g - gap * jac[m - 1][j];
            }
        }
    }
    (v, grad, st)
}

/// Analytic gradient of `V_n`; its last entry equals `ω_n(x)`.
pub fn v_n_grad<T: Real>(ctrl: &HomogeneousController<T>, x: &[T]) -> Vec<T> {
    v_i_with_grad(ctrl, x, ctrl.n()).1
}

/// Projects a nonzero direction onto the homogeneity sphere `{V_i = 1}`.
pub fn project_to_sphere<T: Real>(ctrl: &HomogeneousController<T>, u: &[T], i: usize) -> Option<Vec<T>> {
    let val = v_i(ctrl, u, i);
    if !(val > T::zero() && val.is_finite()) {
        return None;
    }
    let deg = T::of_ratio(ctrl.params.lyap_degree());
    let r = val.powf(-T::one() / deg);
    Some(ctrl.params.dilate(r, &u[..i]))
}

/// Positive-definite quadratic form `V_0(x) = (xᵀPx)^{1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticNorm<T> {
    pub p: Vec<Vec<T>>,
}

impl<T: Real> QuadraticNorm<T> {
    pub fn new(p: Vec<Vec<T>>) -> Result<Self> {
        let n = p.len();
        if p.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParameter("P must be square".into()));
        }
        for i in 0..n {
            for j in 0..i {
                if (p[i][j] - p[j][i]).abs() > T::of(1e-9) * (T::one() + p[i][j].abs()) {
                    return Err(Error::InvalidParameter("P must be symmetric".into()));
                }
            }
        }
        let m = DMatrix::from_fn(n, n, |i, j| p[i][j].as_f64());
        if m.cholesky().is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(QuadraticNorm { p })
    }

    pub fn identity(n: usize) -> Self {
        let p = (0..n)
            .map(|i| (0..n).map(|j| if i == j { T::one() } else { T::zero() }).collect())
            .collect();
        QuadraticNorm { p }
    }

    pub fn form(&self, x: &[T]) -> T {
        let mut s = T::zero();
        for (i, row) in self.p.iter().enumerate() {
            let mut r = T::zero();
            for (j, &pij) in row.iter().enumerate() {
                r = r + pij * x[j];
            }
            s = s + x[i] * r;
        }
        s
    }

    pub fn eval(&self, x: &[T]) -> T {
        self.form(x).max(T::zero()).sqrt()
    }

    /// `P x`
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        self.p
            .iter()
            .map(|row| row.iter().zip(x).fold(T::zero(), |a, (&pij, &xj)| a + pij * xj))
            .collect()
    }
}

/// `V_0(x)`; errors if `P` is not positive definite.
pub fn v0_eval<T: Real>(p: &[Vec<T>], x: &[T]) -> Result<T> {
    Ok(QuadraticNorm::new(p.to_vec())?.eval(x))
}

/// `W = min(V_0, V_n^α)`.
pub fn w_min<T: Real>(v0: T, vn: T, alpha: T) -> T {
    v0.min(vn.powf(alpha))
}

/// `D_r = diag(r^{n−1}, …, r, 1)`.
pub fn dilation_matrix<T: Real>(r: T, n: usize) -> Vec<T> {
    (0..n).map(|i| r.powi((n - 1 - i) as i32)).collect()
}

/// `r·D_r·x`
pub fn rescale_state<T: Real>(r: T, x: &[T]) -> Vec<T> {
    let d = dilation_matrix(r, x.len());
    x.iter().zip(d).map(|(&xi, di)| r * di * xi).collect()
}

/// Applies `(r·D_r x)(t) = r·D_r·x(t/r)` to a sampled trajectory, resampling on
/// the original time grid by linear interpolation; times beyond the data are
/// held at the last state.
pub fn reparameterize<T: Real>(times: &[T], states: &[Vec<T>], r: T) -> Result<Vec<Vec<T>>> {
    if !(r > T::zero()) {
        return Err(Error::InvalidParameter("r must be positive".into()));
    }
    if times.is_empty() || times.len() != states.len() {
        return Err(Error::EmptyTrace);
    }
    let mut out = Vec::with_capacity(times.len());
    let mut k = 0usize;
    for &t in times {
        let s = t / r;
        while k + 1 < times.len() && times[k + 1] < s {
            k += 1;
        }
        let x = if k + 1 >= times.len() || s <= times[0] {
            if s <= times[0] { states[0].clone() } else { states[times.len() - 1].clone() }
        } else {
            let (t0, t1) = (times[k], times[k + 1]);
            let th = ((s - t0) / (t1 - t0)).max(T::zero()).min(T::one());
            states[k]
                .iter()
                .zip(&states[k + 1])
                .map(|(&a, &b)| a + th * (b - a))
                .collect()
        };
        out.push(rescale_state(r, &x));
    }
    Ok(out)
}

/// Per-coordinate powers `|x_i|^{β_{i−1}+1}`.
pub fn coordinate_powers<T: Real>(ctrl: &HomogeneousController<T>, x: &[T]) -> Vec<T> {
    (0..ctrl.n())
        .map(|i| x[i].abs().powf(ctrl.beta(i) + T::one()))
        .collect()
}

/// Switching width `ε (V_n^α + |d|)` used by the regularized sign.
pub fn layer_width<T: Real>(eps: T, vn: T, alpha: T, d: T) -> T {
    eps * (vn.max(T::zero()).powf(alpha) + d.abs())
}

/// `(V_n(x), ω_n(x))` from one forward pass.
pub fn v_n_and_omega<T: Real>(ctrl: &HomogeneousController<T>, x: &[T]) -> (T, T) {
    let n = ctrl.n();
    let st = ctrl.evaluate(x, n);
    let v = (0..n).fold(T::zero(), |acc, j| acc + w_term(ctrl, x, &st, j));
    (v, st.omega[n - 1])
}
