//! Exponent tables of the homogeneous feedback, in exact rational arithmetic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Rational, Real};

/// Longest supported chain.
pub const MAX_CHAIN: usize = 8;

/// Exponents of the recursion for a chain of length `n`.
///
/// Index conventions follow the math: `p[0]` is `p_1`, `beta[0]` is `β_0`,
/// `alpha_i[0]` is `α_1`, `mu[0]` is `μ_1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainParams {
    pub n: usize,
    /// `p_i = 1 − (i−1)/n` for `i = 1..=n+1`; also the dilation weights.
    pub p: Vec<Rational>,
    /// `β_0 = p_2`, `β_i = (n−1+i)/(n−i)` for `i = 1..n−1`.
    pub beta: Vec<Rational>,
    /// Decay exponent `α = 2(n−1)/(2n−1)`.
    pub alpha: Rational,
    /// Young exponents `α_i = 2p_2/(1+p_2−p_i)`, `i = 1..n−1`.
    pub alpha_i: Vec<Rational>,
    /// Conjugates `η_i = 2p_2/p_{i+1}`, `i = 1..n−1`.
    pub eta_i: Vec<Rational>,
    /// `μ_i = 1 − α + 1/(β_{i−1}+1)`, `i = 1..=n`.
    pub mu: Vec<Rational>,
    /// Feedback exponents `q_i = p_{i+1}/(p_i β_{i−1})`, `i = 1..=n` (`q_n = 0`).
    pub q: Vec<Rational>,
}

impl ChainParams {
    pub fn new(n: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidParameter("chain length must be at least 1".into()));
        }
        if n == 1 {
            return Err(Error::DegenerateChain {
                n,
                reason: "p_2 = 0 gives beta_0 = 0 and alpha = 2(n-1)/(2n-1) = 0; the homogeneous \
                         construction needs n >= 2 (use the linear core for n = 1)"
                    .into(),
            });
        }
        if n > MAX_CHAIN {
            return Err(Error::InvalidParameter(format!(
                "chain length {n} exceeds the supported maximum {MAX_CHAIN}"
            )));
        }
        let ni = n as i64;
        let one = Rational::from_integer(1);
        let two = Rational::from_integer(2);
        let p: Vec<Rational> = (1..=ni + 1).map(|i| one - Rational::new(i - 1, ni)).collect();
        let p2 = p[1];
        let mut beta = vec![p2];
        beta.extend((1..ni).map(|i| Rational::new(ni - 1 + i, ni - i)));
        let alpha = Rational::new(2 * (ni - 1), 2 * ni - 1);
        let alpha_i = (1..n).map(|i| two * p2 / (one + p2 - p[i - 1])).collect();
        let eta_i = (1..n).map(|i| two * p2 / p[i]).collect();
        let mu = (1..=n).map(|i| one - alpha + one / (beta[i - 1] + one)).collect();
        let q = (1..=n).map(|i| p[i] / (p[i - 1] * beta[i - 1])).collect();
        Ok(ChainParams {
            n,
            p,
            beta,
            alpha,
            alpha_i,
            eta_i,
            mu,
            q,
        })
    }

    /// Homogeneity degree `1 + p_2` of `W_i`, `V_i`.
    pub fn lyap_degree(&self) -> Rational {
        Rational::from_integer(1) + self.p[1]
    }

    /// Degree `2p_2` of `ω_n` and of `V̇_n`.
    pub fn omega_degree(&self) -> Rational {
        Rational::from_integer(2) * self.p[1]
    }

    /// Mismatched-disturbance exponents `2p_2/p_{i+1}`, `i = 1..n−1`.
    pub fn gamma_exponents(&self) -> &[Rational] {
        &self.eta_i
    }

    /// Weighted dilation `δ_ε x = (ε^{p_1} x_1, …)` applied to a prefix of `x`.
    pub fn dilate<T: Real>(&self, eps: T, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(&self.p)
            .map(|(&xi, &pi)| xi * eps.powf(T::of_ratio(pi)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(a: i64, b: i64) -> Rational {
        Rational::new(a, b)
    }

    #[test]
    fn n3_table() {
        let c = ChainParams::new(3).unwrap();
        assert_eq!(c.p, vec![r(1, 1), r(2, 3), r(1, 3), r(0, 1)]);
        assert_eq!(c.beta, vec![r(2, 3), r(3, 2), r(4, 1)]);
        assert_eq!(c.alpha, r(4, 5));
        assert_eq!(c.alpha_i, vec![r(2, 1), r(4, 3)]);
        assert_eq!(c.eta_i, vec![r(2, 1), r(4, 1)]);
        assert_eq!(c.mu, vec![r(4, 5), r(3, 5), r(2, 5)]);
    }

    #[test]
    fn n2_table() {
        let c = ChainParams::new(2).unwrap();
        assert_eq!(c.p, vec![r(1, 1), r(1, 2), r(0, 1)]);
        assert_eq!(c.beta, vec![r(1, 2), r(2, 1)]);
        assert_eq!(c.alpha, r(2, 3));
        assert_eq!(c.q, vec![r(1, 1), r(0, 1)]);
    }

    #[test]
    fn n1_is_degenerate() {
        assert!(matches!(ChainParams::new(1), Err(Error::DegenerateChain { n: 1, .. })));
        assert!(ChainParams::new(0).is_err());
    }

    #[test]
    fn invariants_hold_for_all_supported_n() {
        let one = Rational::from_integer(1);
        for n in 2..=MAX_CHAIN {
            let c = ChainParams::new(n).unwrap();
            assert_eq!(c.p[n], Rational::from_integer(0));
            assert!(c.beta[0] < one);
            assert!(c.beta[1..].iter().all(|&b| b > one));
            assert!(c.alpha < one);
            for (a, e) in c.alpha_i.iter().zip(&c.eta_i) {
                assert_eq!(one / a + one / e, one);
            }
            for &m in &c.mu {
                assert!(m > one - c.alpha && m <= one);
            }
            // beta_0 * beta_1 = 1 makes the first virtual control linear.
            assert_eq!(c.beta[0] * c.beta[1], one);
            // deg(omega_i) = p_i beta_{i-1} = (n+i-2)/n
            for i in 1..=n {
                assert_eq!(c.p[i - 1] * c.beta[i - 1], Rational::new((n + i - 2) as i64, n as i64));
            }
        }
    }
}
