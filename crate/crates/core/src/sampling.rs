//! Quasi-random sampling of compact homogeneity spheres and ellipsoids, with
//! a derivative-free local refinement of the worst samples.

use rayon::prelude::*;

use crate::scalar::Real;

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Radical inverse of `index` in base `base`.
fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while index > 0 {
        out += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    out
}

/// Halton point `index` in `[0, 1)^dim`.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "halton dimension too large");
    PRIMES[..dim]
        .iter()
        .map(|&b| radical_inverse(index, b))
        .collect()
}

/// `count` nonzero directions in `[-1, 1]^dim`, deterministic.
pub fn cube_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut k = 1u64;
    while out.len() < count {
        let u: Vec<f64> = halton(k, dim).into_iter().map(|h| 2.0 * h - 1.0).collect();
        k += 1;
        if u.iter().map(|v| v * v).sum::<f64>() > 1e-6 {
            out.push(u);
        }
    }
    out
}

/// How many samples, and how hard to refine the worst of them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchPlan {
    pub samples: usize,
    pub refine_top: usize,
    pub initial_step: f64,
    pub min_step: f64,
}

impl Default for SearchPlan {
    fn default() -> Self {
        SearchPlan {
            samples: 4000,
            refine_top: 8,
            initial_step: 0.05,
            min_step: 1e-7,
        }
    }
}

/// Result of a maximization over a compact set.
#[derive(Debug, Clone, PartialEq)]
pub struct Extremum<T> {
    pub value: T,
    pub point: Vec<T>,
    pub evaluations: usize,
}

/// Maximizes `objective(project(u))` over raw directions `u`.
///
/// `project` maps a nonzero direction onto the compact set (for instance a
/// dilation onto a homogeneity sphere); it returns `None` when the direction
/// is unusable. The best `refine_top` samples are polished by a compass
/// search on `u`.
pub fn maximize_on<T, P, F>(dim: usize, plan: &SearchPlan, project: P, objective: F) -> Extremum<T>
where
    T: Real,
    P: Fn(&[T]) -> Option<Vec<T>> + Sync,
    F: Fn(&[T]) -> T + Sync,
{
    let dirs = cube_directions(dim, plan.samples.max(1));
    let mut scored: Vec<(usize, T, Vec<T>, Vec<T>)> = dirs
        .par_iter()
        .enumerate()
        .filter_map(|(i, d)| {
            let u: Vec<T> = d.iter().map(|&v| T::of(v)).collect();
            let x = project(&u)?;
            let val = objective(&x);
            val.is_finite().then_some((i, val, u, x))
        })
        .collect();
    let mut evaluations = dirs.len();
    // Deterministic order: value descending, index ascending.
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(plan.refine_top.max(1));

    let refined: Vec<(T, Vec<T>, usize)> = scored
        .into_par_iter()
        .map(|(_, val, u, x)| compass_search(u, val, x, plan, &project, &objective))
        .collect();

    let mut best: Option<(T, Vec<T>)> = None;
    for (val, x, evals) in refined {
        evaluations += evals;
        if best.as_ref().is_none_or(|(b, _)| val > *b) {
            best = Some((val, x));
        }
    }
    let (value, point) = best.unwrap_or((T::neg_infinity(), vec![T::zero(); dim]));
    Extremum {
        value,
        point,
        evaluations,
    }
}

/// Minimizes by maximizing the negated objective.
pub fn minimize_on<T, P, F>(dim: usize, plan: &SearchPlan, project: P, objective: F) -> Extremum<T>
where
    T: Real,
    P: Fn(&[T]) -> Option<Vec<T>> + Sync,
    F: Fn(&[T]) -> T + Sync,
{
    let mut e = maximize_on(dim, plan, project, |x| -objective(x));
    e.value = -e.value;
    e
}

fn compass_search<T, P, F>(
    mut u: Vec<T>,
    mut best: T,
    mut best_x: Vec<T>,
    plan: &SearchPlan,
    project: &P,
    objective: &F,
) -> (T, Vec<T>, usize)
where
    T: Real,
    P: Fn(&[T]) -> Option<Vec<T>>,
    F: Fn(&[T]) -> T,
{
    let mut step = T::of(plan.initial_step);
    let min_step = T::of(plan.min_step);
    let mut evals = 0;
    while step > min_step {
        let mut improved = false;
        for j in 0..u.len() {
            for dir in [T::one(), -T::one()] {
                let mut trial = u.clone();
                trial[j] = trial[j] + dir * step;
                if let Some(x) = project(&trial) {
                    evals += 1;
                    let val = objective(&x);
                    if val.is_finite() && val > best {
                        best = val;
                        best_x = x;
                        u = trial;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step = step * T::of(0.5);
        }
        if evals > 20_000 {
            break;
        }
    }
    (best, best_x, evals)
}
