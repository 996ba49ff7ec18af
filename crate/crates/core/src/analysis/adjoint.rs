//! The adjoint test function `ξ` (`-P*ξ = 1`, `ξ = 0` on the boundary),
//! its truncations, and the `L¹` estimates built on it.

use serde::{Deserialize, Serialize};

use super::gadgets::SmoothingGadget;
use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::field::GridFunction;
use crate::geometry::Domain;
use crate::operator::{assemble_pstar, DiscreteOperator, Factorization, OperatorKind, SolverOptions};
use crate::semilinear::ProblemSpec;

/// Solves `-P*ₕ ξ = 1`.
pub fn solve_xi(domain: &Domain, coeff: &CoefficientField) -> Result<GridFunction> {
    let op = assemble_pstar(domain, coeff);
    let fact = Factorization::new(&op, SolverOptions::default())?;
    fact.solve(&GridFunction::constant(domain.len(), 1.0))
}

/// `D_A = 1 + ‖(Div Div A)₊‖∞ ‖ξ‖∞`.
pub fn adjoint_bound(coeff: &CoefficientField, xi: &GridFunction) -> f64 {
    1.0 + coeff.divdiv_a_plus_sup * xi.max_abs()
}

/// Width of the mollifier in the truncation profile.
pub const TRUNCATION_EPS: f64 = 0.5;

/// Default truncation levels.
pub const TRUNCATION_LEVELS: [u64; 3] = [4, 16, 64];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiApproximation {
    pub d_a: f64,
    pub levels: Vec<u64>,
    /// `max(-P*ₕ ξ_n - D_A)` per level.
    pub defects: Vec<f64>,
    pub worst_defect: f64,
    /// Allowed defect, `10h`.
    pub slack: f64,
    /// `min(ξ_{n'} - ξ_n)` over consecutive levels.
    pub min_increment: f64,
    /// `max(ξ_n - ξ)` over levels.
    pub max_excess: f64,
    pub passed: bool,
}

/// Builds `ξ_n = Φ(nξ)/n` with the mollified hinge and checks monotonicity,
/// domination by `ξ`, and `-P*ₕ ξ_n ≤ D_A` up to `10h`.
pub fn xi_approximation_check(
    pstar: &DiscreteOperator,
    coeff: &CoefficientField,
    xi: &GridFunction,
    levels: &[u64],
    eps: f64,
) -> Result<XiApproximation> {
    if pstar.kind() != OperatorKind::PStar {
        return Err(Error::InvalidProblem("truncation check needs the operator -P*".into()));
    }
    if levels.is_empty() || levels.windows(2).any(|w| w[1] <= w[0]) || levels[0] == 0 {
        return Err(Error::InvalidProblem("truncation levels must be positive and increasing".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidProblem(format!("mollifier width must lie in (0, 1), got {eps}")));
    }
    let gadget = SmoothingGadget::MollifiedHinge { eps };
    let d_a = adjoint_bound(coeff, xi);
    let slack = 10.0 * pstar.h();
    let mut defects = Vec::with_capacity(levels.len());
    let mut min_increment = f64::INFINITY;
    let mut max_excess = f64::NEG_INFINITY;
    let mut prev: Option<GridFunction> = None;
    for &n in levels {
        let nf = n as f64;
        let xi_n = xi.map(|s| gadget.value(nf * s) / nf);
        let applied = pstar.apply(&xi_n);
        defects.push(applied.iter().map(|v| v - d_a).fold(f64::NEG_INFINITY, f64::max));
        max_excess = max_excess.max(xi_n.zip_map(xi, |a, b| a - b).max());
        if let Some(p) = &prev {
            min_increment = min_increment.min(xi_n.zip_map(p, |a, b| a - b).min());
        }
        prev = Some(xi_n);
    }
    if levels.len() == 1 {
        min_increment = 0.0;
    }
    let worst_defect = defects.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let passed = worst_defect <= slack && min_increment >= -1e-12 && max_excess <= 1e-12;
    Ok(XiApproximation { d_a, levels: levels.to_vec(), defects, worst_defect, slack, min_increment, max_excess, passed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedIntegral {
    /// `Σ (f/u^γ) ξ h²`.
    pub lhs: f64,
    /// `D_A Σ u h²`.
    pub rhs: f64,
    pub d_a: f64,
    /// Allowed excess, `10h · rhs`.
    pub slack: f64,
    /// `rhs + slack - lhs`.
    pub margin: f64,
    pub passed: bool,
}

pub fn weighted_rhs_integral(
    domain: &Domain,
    u: &GridFunction,
    problem: &ProblemSpec,
    xi: &GridFunction,
    coeff: &CoefficientField,
) -> Result<WeightedIntegral> {
    for g in [u, xi, &problem.f] {
        if g.len() != domain.len() {
            return Err(Error::DimensionMismatch { expected: domain.len(), got: g.len() });
        }
    }
    if let Some((index, &value)) = u.iter().enumerate().find(|(_, &v)| v.is_nan() || v <= 0.0) {
        return Err(Error::NonPositive { index, value });
    }
    let h = domain.h();
    let gamma = problem.gamma;
    let lhs: f64 = (0..domain.len()).map(|k| problem.f[k] / u[k].powf(gamma) * xi[k]).sum::<f64>() * h * h;
    let d_a = adjoint_bound(coeff, xi);
    let rhs = d_a * u.integrate(h);
    let slack = 10.0 * h * rhs;
    let margin = rhs + slack - lhs;
    Ok(WeightedIntegral { lhs, rhs, d_a, slack, margin, passed: lhs.is_finite() && margin >= 0.0 })
}

/// `‖u‖_{L¹} / ‖F‖_{L¹(δ)}` for `u` solving `-Pₕu = F`; zero for zero data.
pub fn l1_apriori_ratio(fact: &Factorization, domain: &Domain, f: &GridFunction) -> Result<f64> {
    if f.len() != domain.len() {
        return Err(Error::DimensionMismatch { expected: domain.len(), got: f.len() });
    }
    if !f.all_finite() {
        let index = f.iter().position(|v| !v.is_finite()).unwrap_or(0);
        return Err(Error::NonFinite { index });
    }
    let delta = domain.delta();
    let weighted: f64 = f.iter().zip(delta.iter()).map(|(a, d)| a.abs() * d).sum();
    if weighted == 0.0 {
        return Ok(0.0);
    }
    let u = fact.solve(f)?;
    let mass: f64 = u.iter().map(|v| v.abs()).sum();
    Ok(mass / weighted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L1Corpus {
    pub ratios: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

/// Ratios over a seeded corpus of `count` nonnegative bump sums.
pub fn l1_corpus(fact: &Factorization, domain: &Domain, count: usize, seed: u64) -> Result<L1Corpus> {
    let data = super::bump_corpus(domain, count, seed);
    let ratios = data.iter().map(|f| l1_apriori_ratio(fact, domain, f)).collect::<Result<Vec<_>>>()?;
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(L1Corpus { ratios, min, max })
}
