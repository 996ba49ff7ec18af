//! `L^p` integrability of `f/δ^γ` against the `W^{2,p}` seminorm of `u`.

use serde::{Deserialize, Serialize};

use crate::discrete::{hessian, hessian_norm};
use crate::error::{Error, Result};
use crate::field::GridFunction;
use crate::geometry::Domain;
use crate::semilinear::ProblemSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityTable {
    pub h: f64,
    pub exponents: Vec<f64>,
    /// `Σ (f/δ^γ)^p h²`.
    pub data_side: Vec<f64>,
    /// `Σ ‖∇²u‖^p h²` over nodes with a full stencil.
    pub solution_side: Vec<f64>,
    pub excluded_fraction: f64,
}

pub fn regularity_probe(domain: &Domain, u: &GridFunction, problem: &ProblemSpec, exponents: &[f64]) -> Result<RegularityTable> {
    if u.len() != domain.len() {
        return Err(Error::DimensionMismatch { expected: domain.len(), got: u.len() });
    }
    if exponents.iter().any(|&p| p.is_nan() || p < 1.0) {
        return Err(Error::InvalidProblem("integrability exponents must be at least 1".into()));
    }
    let h2 = domain.h() * domain.h();
    let delta = domain.delta();
    let weighted: Vec<f64> = (0..domain.len()).map(|k| problem.f[k] / delta[k].powf(problem.gamma)).collect();
    let norms: Vec<Option<f64>> = hessian(domain, u).into_iter().map(|hs| hs.map(hessian_norm)).collect();
    let excluded = norms.iter().filter(|n| n.is_none()).count();
    let data_side = exponents.iter().map(|&p| weighted.iter().map(|w| w.powf(p)).sum::<f64>() * h2).collect();
    let solution_side = exponents.iter().map(|&p| norms.iter().flatten().map(|n| n.powf(p)).sum::<f64>() * h2).collect();
    Ok(RegularityTable {
        h: domain.h(),
        exponents: exponents.to_vec(),
        data_side,
        solution_side,
        excluded_fraction: excluded as f64 / domain.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityComparison {
    pub exponents: Vec<f64>,
    pub data_drift: Vec<f64>,
    pub solution_drift: Vec<f64>,
    pub data_stable: Vec<bool>,
    pub solution_stable: Vec<bool>,
    /// Stable data implies a stable solution side, for every exponent.
    pub consistent: bool,
}

fn drift(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Compares two resolutions; a side is stable when it drifts by at most `tolerance`.
pub fn compare_regularity(coarse: &RegularityTable, fine: &RegularityTable, tolerance: f64) -> Result<RegularityComparison> {
    if coarse.exponents != fine.exponents {
        return Err(Error::InvalidProblem("regularity tables use different exponents".into()));
    }
    let data_drift: Vec<f64> = coarse.data_side.iter().zip(&fine.data_side).map(|(a, b)| drift(*a, *b)).collect();
    let solution_drift: Vec<f64> = coarse.solution_side.iter().zip(&fine.solution_side).map(|(a, b)| drift(*a, *b)).collect();
    let data_stable: Vec<bool> = data_drift.iter().map(|d| *d <= tolerance).collect();
    let solution_stable: Vec<bool> = solution_drift.iter().map(|d| *d <= tolerance).collect();
    let consistent = data_stable.iter().zip(&solution_stable).all(|(d, s)| !d || *s);
    Ok(RegularityComparison { exponents: coarse.exponents.clone(), data_drift, solution_drift, data_stable, solution_stable, consistent })
}
