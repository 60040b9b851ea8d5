//! The recursive homogeneous feedback `ω_i`, `v_i`.

use serde::{Deserialize, Serialize};

use super::params::{ChainParams, MAX_CHAIN};
use crate::error::{Error, Result};
use crate::satfn::{sgn, sign_set, spow, SetValue};
use crate::scalar::Real;

/// Outcome of the gain search, kept with the controller.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthesisCertificate {
    /// Sampled maximum of the level-`i` drift on `{V_i = 1}`, `i = 1..=n`.
    pub level_max: Vec<f64>,
    /// Required `max ≤ −margin`.
    pub margin: f64,
    pub sphere_samples: usize,
    pub doublings: Vec<usize>,
    /// Closed-loop validation: worst terminal norm over the validation set.
    pub validation_terminal_norm: Option<f64>,
}

impl SynthesisCertificate {
    pub fn passed(&self) -> bool {
        self.level_max.iter().all(|&m| m <= -self.margin)
    }
}

/// `ω_i`, `v_i` and `⌊v_i⌉^{β_i}` along a state prefix.
#[derive(Debug, Clone, Copy)]
pub struct ChainState<T> {
    pub upto: usize,
    pub omega: [T; MAX_CHAIN],
    pub v: [T; MAX_CHAIN],
    /// `⌊v_i⌉^{β_i}`, needed by the next level.
    pub pow_v: [T; MAX_CHAIN],
}

/// The feedback `u = v_n(x) = −l_n sign(ω_n(x))` and its recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct HomogeneousController<T> {
    pub params: ChainParams,
    pub gains: Vec<T>,
    pub certificate: SynthesisCertificate,
    #[serde(skip)]
    exps: Exponents<T>,
}

#[derive(Debug, Clone, PartialEq)]
struct Exponents<T> {
    beta: Vec<T>,
    q: Vec<T>,
    /// `q_i β_i` for `i = 1..n−1`.
    qbeta: Vec<T>,
    /// `l_i^{β_i}`.
    lbeta: Vec<T>,
}

impl<T> Default for Exponents<T> {
    fn default() -> Self {
        Exponents {
            beta: Vec::new(),
            q: Vec::new(),
            qbeta: Vec::new(),
            lbeta: Vec::new(),
        }
    }
}

impl<T: Real> HomogeneousController<T> {
    pub fn new(params: ChainParams, gains: Vec<T>) -> Result<Self> {
        if gains.len() != params.n {
            return Err(Error::InvalidParameter(format!(
                "expected {} gains, got {}",
                params.n,
                gains.len()
            )));
        }
        if gains.iter().any(|&l| !(l > T::zero() && l.is_finite())) {
            return Err(Error::InvalidParameter("all gains l_i must be positive".into()));
        }
        let mut ctrl = HomogeneousController {
            params,
            gains,
            certificate: SynthesisCertificate::default(),
            exps: Exponents::default(),
        };
        ctrl.refresh();
        Ok(ctrl)
    }

    /// Rebuilds cached float exponents; call after deserializing or editing gains.
    pub fn refresh(&mut self) {
        let n = self.params.n;
        let beta: Vec<T> = self.params.beta.iter().map(|&b| T::of_ratio(b)).collect();
        let q: Vec<T> = self.params.q.iter().map(|&b| T::of_ratio(b)).collect();
        let qbeta = (0..n).map(|i| if i + 1 < n { q[i] * beta[i + 1] } else { T::zero() }).collect();
        let lbeta = (0..n)
            .map(|i| if i + 1 < n { self.gains[i].powf(beta[i + 1]) } else { T::zero() })
            .collect();
        self.exps = Exponents { beta, q, qbeta, lbeta };
    }

    pub fn with_certificate(mut self, cert: SynthesisCertificate) -> Self {
        self.certificate = cert;
        self
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn l_n(&self) -> T {
        self.gains[self.params.n - 1]
    }

    pub fn alpha(&self) -> T {
        T::of_ratio(self.params.alpha)
    }

    /// `β_i` as a float, `i = 0..n−1`.
    pub fn beta(&self, i: usize) -> T {
        self.exps.beta[i]
    }

    /// Forward pass of the recursion over `x_1..x_upto`.
    ///
    /// For `upto < n` the last virtual control uses its Hölder exponent; for
    /// `upto = n` it is the single-valued selection `−l_n sgn(ω_n)`.
    pub fn evaluate(&self, x: &[T], upto: usize) -> ChainState<T> {
        let n = self.params.n;
        debug_assert!(upto >= 1 && upto <= n && x.len() >= upto);
        let e = &self.exps;
        let mut st = ChainState {
            upto,
            omega: [T::zero(); MAX_CHAIN],
            v: [T::zero(); MAX_CHAIN],
            pow_v: [T::zero(); MAX_CHAIN],
        };
        for i in 0..upto {
            let b = e.beta[i];
            let w = if i == 0 {
                spow(x[0], b)
            } else {
                spow(x[i], b) - st.pow_v[i - 1]
            };
            st.omega[i] = w;
            let l = self.gains[i];
            st.v[i] = if i + 1 == n {
                -l * sgn(w)
            } else {
                -l * spow(w, e.q[i])
            };
            if i + 1 < n {
                // ⌊v_i⌉^{β_i} = −l_i^{β_i} ⌊ω_i⌉^{q_i β_i}; linear in x_1 at i = 1.
                st.pow_v[i] = if i == 0 {
                    -e.lbeta[0] * x[0]
                } else {
                    -e.lbeta[i] * spow(w, e.qbeta[i])
                };
            }
        }
        st
    }

    /// `(ω_i, v_i)` for `1 ≤ i ≤ n` (one-based); `v_n` uses `sgn(0) = 0`.
    pub fn omega_v(&self, x: &[T], i: usize) -> (T, T) {
        let st = self.evaluate(x, i);
        (st.omega[i - 1], st.v[i - 1])
    }

    pub fn omega_n(&self, x: &[T]) -> T {
        self.evaluate(x, self.params.n).omega[self.params.n - 1]
    }

    /// `ω_n(x)` and its gradient.
    pub fn omega_n_grad(&self, x: &[T]) -> (T, Vec<T>) {
        let n = self.params.n;
        let st = self.evaluate(x, n);
        let mut grad = vec![T::zero(); n];
        let b = self.exps.beta[n - 1];
        if n == 1 {
            grad[0] = b * x[0].abs().powf(b - T::one());
            return (st.omega[0], grad);
        }
        let jac = self.pow_v_jacobian(x, &st);
        for (j, g) in grad.iter_mut().enumerate().take(n - 1) {
            *g = -jac[n - 2][j];
        }
        grad[n - 1] = b * x[n - 1].abs().powf(b - T::one());
        (st.omega[n - 1], grad)
    }

    /// `−l_n sign(ω_n(x))`, an interval on the switching surface.
    pub fn sign_control(&self, x: &[T]) -> SetValue<T> {
        sign_set(self.omega_n(x)).scale(-self.l_n())
    }

    /// Gradients `∂⌊v_i⌉^{β_i}/∂x_j` for `i = 1..upto−1`, `j ≤ i`.
    ///
    /// All singular factors are combined analytically so the result is finite
    /// everywhere, including on `{ω_i = 0}` and `{x_1 = 0}`.
    pub fn pow_v_jacobian(&self, x: &[T], st: &ChainState<T>) -> [[T; MAX_CHAIN]; MAX_CHAIN] {
        let e = &self.exps;
        let mut jac = [[T::zero(); MAX_CHAIN]; MAX_CHAIN];
        let last = st.upto.min(self.params.n - 1);
        for i in 0..last {
            if i == 0 {
                jac[0][0] = -e.lbeta[0];
                continue;
            }
            // ∇ω_i = β_{i−1}|x_i|^{β_{i−1}−1} e_i − ∇⌊v_{i−1}⌉^{β_{i−1}}
            let b = e.beta[i];
            let coef = -e.lbeta[i] * e.qbeta[i] * st.omega[i].abs().powf(e.qbeta[i] - T::one());
            for j in 0..i {
                jac[i][j] = coef * (-jac[i - 1][j]);
            }
            jac[i][i] = coef * b * x[i].abs().powf(b - T::one());
        }
        jac
    }
}
