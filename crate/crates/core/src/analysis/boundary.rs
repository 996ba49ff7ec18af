//! Boundary behavior: the averaged trace functional and the `u/δ` window.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::GridFunction;
use crate::geometry::{boundary_layer, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceTable {
    pub eps: Vec<f64>,
    /// `T(ε) = (1/ε) Σ_{δ < ε} |u| h²`.
    pub values: Vec<f64>,
}

impl TraceTable {
    /// True when `T` strictly decreases as `ε` shrinks.
    pub fn decreasing(&self) -> bool {
        let mut pairs: Vec<(f64, f64)> = self.eps.iter().copied().zip(self.values.iter().copied()).collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        pairs.windows(2).all(|w| w[1].1 < w[0].1 || (w[0].1 == 0.0 && w[1].1 == 0.0))
    }
}

/// Layer widths `16h, 8h, 4h`.
pub fn default_trace_widths(h: f64) -> Vec<f64> {
    vec![16.0 * h, 8.0 * h, 4.0 * h]
}

pub fn trace_functional(domain: &Domain, u: &GridFunction, eps_list: &[f64]) -> Result<TraceTable> {
    let h = domain.h();
    let mut values = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        if eps.is_nan() || eps <= 2.0 * h {
            return Err(Error::InvalidProblem(format!("trace layer width {eps} must exceed 2h = {}", 2.0 * h)));
        }
        let layer = boundary_layer(domain, eps);
        let mass: f64 = layer.nodes.iter().map(|&k| u[k].abs()).sum::<f64>() * h * h;
        values.push(mass / eps);
    }
    Ok(TraceTable { eps: eps_list.to_vec(), values })
}

/// Range of `u/δ` over nodes with `δ > 2h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayWindow {
    pub min: f64,
    pub max: f64,
    pub nodes: usize,
}

impl DecayWindow {
    /// Largest relative change of either endpoint.
    pub fn drift(&self, other: &DecayWindow) -> f64 {
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs());
        rel(self.min, other.min).max(rel(self.max, other.max))
    }
}

pub fn boundary_decay_report(domain: &Domain, u: &GridFunction) -> Result<DecayWindow> {
    if u.len() != domain.len() {
        return Err(Error::DimensionMismatch { expected: domain.len(), got: u.len() });
    }
    if let Some((index, &value)) = u.iter().enumerate().find(|(_, &v)| v.is_nan() || v <= 0.0) {
        return Err(Error::NonPositive { index, value });
    }
    let cutoff = 2.0 * domain.h();
    let delta = domain.delta();
    let mut window = DecayWindow { min: f64::INFINITY, max: f64::NEG_INFINITY, nodes: 0 };
    for k in (0..domain.len()).filter(|&k| delta[k] > cutoff) {
        let r = u[k] / delta[k];
        window.min = window.min.min(r);
        window.max = window.max.max(r);
        window.nodes += 1;
    }
    if window.nodes == 0 {
        return Err(Error::GridTooCoarse { h: domain.h() });
    }
    Ok(window)
}
