//! Integrability exponents of the gradient and the nonlinear-inequality ratios.

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientField;
use crate::discrete::{dirichlet_energy, gradient, hessian, hessian_norm};
use crate::error::{Error, Result};
use crate::field::GridFunction;
use crate::geometry::Domain;
use crate::semilinear::SchemeReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExponentRegime {
    /// `γ < 1`: `u ∈ W₀^{1,q}` with `q = d(1+γ)/(d-(1-γ))`.
    Weak,
    /// `γ = 1`: `u ∈ H₀¹`.
    Critical,
    /// `1 < γ < 2`: every `q < 2/γ`.
    Strong,
    /// `γ ≥ 2`: local `H¹` only.
    LocalOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticalExponent {
    pub regime: ExponentRegime,
    pub value: Option<Rational64>,
    /// The bound itself is excluded.
    pub strict: bool,
}

impl CriticalExponent {
    pub fn to_f64(&self) -> Option<f64> {
        self.value.map(|q| *q.numer() as f64 / *q.denom() as f64)
    }
}

/// Exact exponent for rational `γ > 0` in dimension `d ≥ 2`.
pub fn critical_exponent(gamma: Rational64, dimension: i64) -> Result<CriticalExponent> {
    let zero = Rational64::from_integer(0);
    let one = Rational64::from_integer(1);
    let two = Rational64::from_integer(2);
    if gamma <= zero {
        return Err(Error::InvalidProblem(format!("gamma must be positive, got {gamma}")));
    }
    if dimension < 2 {
        return Err(Error::InvalidProblem(format!("dimension must be at least 2, got {dimension}")));
    }
    let d = Rational64::from_integer(dimension);
    Ok(if gamma < one {
        CriticalExponent { regime: ExponentRegime::Weak, value: Some(d * (one + gamma) / (d - (one - gamma))), strict: false }
    } else if gamma == one {
        CriticalExponent { regime: ExponentRegime::Critical, value: Some(two), strict: false }
    } else if gamma < two {
        CriticalExponent { regime: ExponentRegime::Strong, value: Some(two / gamma), strict: true }
    } else {
        CriticalExponent { regime: ExponentRegime::LocalOnly, value: None, strict: false }
    })
}

/// Converts a float `γ` to the nearest simple fraction.
pub fn rational_gamma(gamma: f64) -> Result<Rational64> {
    Rational64::approximate_float(gamma)
        .filter(|r| (*r.numer() as f64 / *r.denom() as f64 - gamma).abs() <= 1e-12 * gamma.abs().max(1.0))
        .ok_or_else(|| Error::InvalidProblem(format!("gamma {gamma} has no exact rational form")))
}

/// Default probe exponents `0.9·q` and `q`; `γ ≥ 2` falls back to `q = 2`.
pub fn default_probe_exponents(exponent: &CriticalExponent) -> Vec<f64> {
    let q = exponent.to_f64().unwrap_or(2.0);
    vec![0.9 * q, q]
}

/// `Σ ‖∇u‖^q h²`.
pub fn gradient_integral(domain: &Domain, u: &GridFunction, q: f64) -> f64 {
    let h = domain.h();
    gradient(domain, u).iter().map(|g| (g[0] * g[0] + g[1] * g[1]).sqrt().powf(q)).sum::<f64>() * h * h
}

/// `∫ ‖∇u‖² u^{γ-1} / ∫ ‖∇²u‖ u^γ` over nodes with a full stencil, and the
/// fraction of nodes excluded.
pub fn hessian_ratio(domain: &Domain, u: &GridFunction, gamma: f64) -> (f64, f64) {
    let grad = gradient(domain, u);
    let hess = hessian(domain, u);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut excluded = 0;
    for k in 0..domain.len() {
        match hess[k] {
            Some(hs) if u[k] > 0.0 => {
                num += (grad[k][0].powi(2) + grad[k][1].powi(2)) * u[k].powf(gamma - 1.0);
                den += hessian_norm(hs) * u[k].powf(gamma);
            }
            _ => excluded += 1,
        }
    }
    let ratio = if den > 0.0 { num / den } else { 0.0 };
    (ratio, excluded as f64 / domain.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolevReport {
    pub gamma: f64,
    pub exponent: CriticalExponent,
    /// `(q, Σ ‖∇u‖^q h²)`.
    pub gradient_integrals: Vec<(f64, f64)>,
    /// `‖u^{(γ+1)/2}‖²_{H¹₀}` as discrete Dirichlet energy.
    pub composition_energy: f64,
    /// Ratio of the nonlinear inequality for `Pu` at the last level.
    pub operator_ratio: f64,
    pub hessian_ratio: f64,
    pub hessian_excluded_fraction: f64,
}

impl SobolevReport {
    pub fn integral_at(&self, q: f64) -> Option<f64> {
        self.gradient_integrals.iter().find(|(p, _)| (p - q).abs() < 1e-12).map(|&(_, v)| v)
    }
}

pub fn sobolev_diagnostics(
    domain: &Domain,
    _coeff: &CoefficientField,
    report: &SchemeReport,
    q_list: Option<&[f64]>,
) -> Result<SobolevReport> {
    let gamma = report.gamma;
    let exponent = critical_exponent(rational_gamma(gamma)?, 2)?;
    let qs = q_list.map_or_else(|| default_probe_exponents(&exponent), <[f64]>::to_vec);
    let u = &report.limit;
    let gradient_integrals = qs.iter().map(|&q| (q, gradient_integral(domain, u, q))).collect();
    let w = u.map(|s| s.max(0.0).powf(0.5 * (gamma + 1.0)));
    let (hessian_ratio, hessian_excluded_fraction) = hessian_ratio(domain, u, gamma);
    Ok(SobolevReport {
        gamma,
        exponent,
        gradient_integrals,
        composition_energy: dirichlet_energy(domain, &w),
        operator_ratio: report.last().nonlinear_ratio,
        hessian_ratio,
        hessian_excluded_fraction,
    })
}
