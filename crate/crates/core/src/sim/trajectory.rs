//! Sampled closed-loop solutions.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::integrator::Stats;
use super::scenario::SystemKind;
use crate::error::{Error, Result};
use crate::hybrid::Branch;

/// Active vector field at a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Free,
    Outer,
    Inner,
    /// Filippov sliding on `{V_0 = A}`.
    BoundarySlide,
    /// Snapped to the origin.
    Captured,
}

impl Phase {
    pub fn branch(self) -> Option<Branch> {
        match self {
            Phase::Outer => Some(Branch::Outer),
            Phase::Inner | Phase::BoundarySlide => Some(Branch::Inner),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    EnterInner,
    LeaveInner,
    SlideStart,
    SlideEnd,
    LayerEnter,
    LayerExit,
    Capture,
    OmegaBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: f64,
    pub kind: EventKind,
    /// `V_0 − A` at located surface events, the running integral for
    /// `OmegaBound`, zero otherwise.
    pub value: f64,
}

/// Uniformly sampled closed-loop solution.
///
/// `u` is the feedback argument (`ω_n` for the sign loop, `kω_n` or `Kᵀx`
/// otherwise) and `sat_in` the value of the nonlinearity (`sign` surrogate or
/// `σ(u + d)`). Lyapunov traces are evaluated at the control state `x − y e_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub system: SystemKind,
    pub n: usize,
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub xdot: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    pub sat_in: Vec<f64>,
    pub v0: Vec<f64>,
    pub vn: Vec<f64>,
    pub w: Vec<f64>,
    /// Running integral of `d_n`.
    pub y: Vec<f64>,
    pub shifted: bool,
    pub d: Vec<f64>,
    pub d_n: Vec<f64>,
    /// `d_1..d_{n−1}` per sample (empty rows when absent).
    pub e: Vec<Vec<f64>>,
    pub phase: Vec<Phase>,
    /// Inside the sign regularization layer `|ω_n + d| ≤ ε (V_n^α + |d|)`.
    pub in_layer: Vec<bool>,
    pub events: Vec<EventRecord>,
    pub stats: Stats,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub(crate) fn empty(system: SystemKind, n: usize, shifted: bool) -> Self {
        Trajectory {
            system,
            n,
            t: Vec::new(),
            x: Vec::new(),
            xdot: Vec::new(),
            u: Vec::new(),
            sat_in: Vec::new(),
            v0: Vec::new(),
            vn: Vec::new(),
            w: Vec::new(),
            y: Vec::new(),
            shifted,
            d: Vec::new(),
            d_n: Vec::new(),
            e: Vec::new(),
            phase: Vec::new(),
            in_layer: Vec::new(),
            events: Vec::new(),
            stats: Stats::default(),
            warnings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn final_state(&self) -> Result<&[f64]> {
        self.x.last().map(|v| v.as_slice()).ok_or(Error::EmptyTrace)
    }

    pub fn final_norm(&self) -> Result<f64> {
        Ok(crate::scalar::norm2(self.final_state()?))
    }

    pub fn state_norms(&self) -> Vec<f64> {
        self.x.iter().map(|x| crate::scalar::norm2(x)).collect()
    }

    /// Coordinate `i` (zero-based) over time.
    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.x.iter().map(|x| x[i]).collect()
    }

    /// Transformed mismatched disturbance `F = (d_1, …, d_{n−1} + y)`.
    pub fn transformed_mismatch(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|k| {
                let mut f = if self.e[k].is_empty() {
                    vec![0.0; self.n.saturating_sub(1)]
                } else {
                    self.e[k].clone()
                };
                if let Some(last) = f.last_mut() {
                    *last += self.y[k];
                }
                f
            })
            .collect()
    }

    /// `[t_start, t_end]` intervals of consecutive in-layer samples.
    pub fn layer_intervals(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut open: Option<f64> = None;
        for (k, &flag) in self.in_layer.iter().enumerate() {
            match (flag, open) {
                (true, None) => open = Some(self.t[k]),
                (false, Some(s)) => {
                    out.push((s, self.t[k - 1]));
                    open = None;
                }
                _ => {}
            }
        }
        if let (Some(s), Some(&e)) = (open, self.t.last()) {
            out.push((s, e));
        }
        out
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend((1..=self.n).map(|i| format!("x{i}")));
        h.extend(["u", "sat_in", "V0", "Vn", "W"].map(String::from));
        if self.shifted {
            h.push("y".into());
        }
        h
    }

    /// Writes `t,x1..xn,u,sat_in,V0,Vn,W[,y]` with shortest round-trip floats.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::InvalidParameter(format!("csv output: {e}"));
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(self.csv_header()).map_err(io)?;
        let mut row: Vec<String> = Vec::with_capacity(self.n + 7);
        for k in 0..self.len() {
            row.clear();
            row.push(self.t[k].to_string());
            row.extend(self.x[k].iter().map(|v| v.to_string()));
            for v in [self.u[k], self.sat_in[k], self.v0[k], self.vn[k], self.w[k]] {
                row.push(v.to_string());
            }
            if self.shifted {
                row.push(self.y[k].to_string());
            }
            wtr.write_record(&row).map_err(io)?;
        }
        wtr.flush().map_err(|e| Error::InvalidParameter(format!("csv output: {e}")))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::InvalidParameter(e.to_string()))
    }
}
