//! Coefficient matrix fields `A(x)` with analytic divergences.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Domain;

/// Built-in coefficient fields. Each has closed-form first and second derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum CoefficientPreset {
    Identity,
    /// `A = c I`.
    Scalar { c: f64 },
    /// `a11 = 1 + ε sin x₁`, `a22 = 1`, `a12 = 0`.
    DiagonalSine { eps: f64 },
    /// `A = R(θ) diag(1+ε, 1-ε) R(θ)ᵀ` with `θ(x) = (x₁ + x₂)/2`.
    RotationMix { eps: f64 },
}

/// Coefficients and derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointCoefficients {
    /// `(a11, a12, a22)`.
    pub a: [f64; 3],
    /// Gradients of `(a11, a12, a22)`.
    pub grad: [[f64; 2]; 3],
    /// Divergences of the columns of `A`.
    pub div_a: [f64; 2],
    /// `Σ ∂ᵢ∂ⱼ aᵢⱼ`.
    pub divdiv_a: f64,
}

impl PointCoefficients {
    /// Eigenvalues `(min, max)` of the symmetric matrix.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let [a11, a12, a22] = self.a;
        let mean = 0.5 * (a11 + a22);
        let radius = (0.5 * (a11 - a22)).hypot(a12);
        (mean - radius, mean + radius)
    }

    /// `A ξ · ξ`.
    pub fn quadratic_form(&self, xi: [f64; 2]) -> f64 {
        let [a11, a12, a22] = self.a;
        a11 * xi[0] * xi[0] + 2.0 * a12 * xi[0] * xi[1] + a22 * xi[1] * xi[1]
    }
}

impl CoefficientPreset {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64, ok: bool| {
            if v.is_finite() && ok {
                Ok(())
            } else {
                Err(Error::InvalidCoefficients(format!("{name} = {v} is out of range")))
            }
        };
        match *self {
            CoefficientPreset::Identity => Ok(()),
            CoefficientPreset::Scalar { c } => check("c", c, c > 0.0),
            CoefficientPreset::DiagonalSine { eps } => check("eps", eps, true),
            CoefficientPreset::RotationMix { eps } => check("eps", eps, eps.abs() < 1.0),
        }
    }

    /// Evaluates the field analytically at `p`.
    pub fn eval(&self, p: [f64; 2]) -> PointCoefficients {
        match *self {
            CoefficientPreset::Identity => constant(1.0),
            CoefficientPreset::Scalar { c } => constant(c),
            CoefficientPreset::DiagonalSine { eps } => {
                let (s, c) = p[0].sin_cos();
                PointCoefficients {
                    a: [1.0 + eps * s, 0.0, 1.0],
                    grad: [[eps * c, 0.0], [0.0, 0.0], [0.0, 0.0]],
                    div_a: [eps * c, 0.0],
                    divdiv_a: -eps * s,
                }
            }
            CoefficientPreset::RotationMix { eps } => {
                let (s, c) = (p[0] + p[1]).sin_cos();
                PointCoefficients {
                    a: [1.0 + eps * c, eps * s, 1.0 - eps * c],
                    grad: [[-eps * s, -eps * s], [eps * c, eps * c], [eps * s, eps * s]],
                    div_a: [eps * (c - s), eps * (c + s)],
                    divdiv_a: -2.0 * eps * s,
                }
            }
        }
    }
}

fn constant(c: f64) -> PointCoefficients {
    PointCoefficients { a: [c, 0.0, c], grad: [[0.0; 2]; 3], div_a: [0.0; 2], divdiv_a: 0.0 }
}

/// `A(x)` tabulated at the interior nodes of a domain, with its ellipticity
/// constants and the sup-norms entering the smallness condition.
#[derive(Debug, Clone)]
pub struct CoefficientField {
    preset: CoefficientPreset,
    points: Vec<PointCoefficients>,
    /// Lower ellipticity constant (min eigenvalue over nodes).
    pub c_a: f64,
    /// Upper ellipticity constant (max eigenvalue over nodes).
    pub big_c_a: f64,
    /// `max ‖Div A(x)‖` over nodes.
    pub div_a_sup: f64,
    /// `max (Div(Div A))₊` over nodes.
    pub divdiv_a_plus_sup: f64,
}

pub fn build_coefficients(preset: &CoefficientPreset, domain: &Domain) -> Result<CoefficientField> {
    preset.validate()?;
    let points: Vec<PointCoefficients> = (0..domain.len()).map(|k| preset.eval(domain.point(k))).collect();
    let mut c_a = f64::INFINITY;
    let mut big_c_a = 0.0_f64;
    let mut div_a_sup = 0.0_f64;
    let mut divdiv_a_plus_sup = 0.0_f64;
    for (k, pc) in points.iter().enumerate() {
        let (lo, hi) = pc.eigenvalues();
        if lo <= 0.0 {
            let p = domain.point(k);
            return Err(Error::EllipticityViolated { x: p[0], y: p[1], eigenvalue: lo });
        }
        c_a = c_a.min(lo);
        big_c_a = big_c_a.max(hi);
        div_a_sup = div_a_sup.max(pc.div_a[0].hypot(pc.div_a[1]));
        divdiv_a_plus_sup = divdiv_a_plus_sup.max(pc.divdiv_a.max(0.0));
    }
    Ok(CoefficientField { preset: preset.clone(), points, c_a, big_c_a, div_a_sup, divdiv_a_plus_sup })
}

impl CoefficientField {
    pub fn preset(&self) -> &CoefficientPreset {
        &self.preset
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn at(&self, k: usize) -> &PointCoefficients {
        &self.points[k]
    }

    #[cfg(test)]
    pub(crate) fn override_points(&mut self, f: impl Fn(&mut PointCoefficients)) {
        self.points.iter_mut().for_each(f);
    }

    pub fn has_mixed_terms(&self) -> bool {
        self.points.iter().any(|p| p.a[1] != 0.0)
    }

    /// `max |a12| / min(a11, a22)` over nodes.
    pub fn max_mixed_ratio(&self) -> f64 {
        self.points.iter().fold(0.0_f64, |m, p| m.max(p.a[1].abs() / p.a[0].min(p.a[2])))
    }

    /// Writes `index,a11,a12,a22,div_a1,div_a2,divdiv_a` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,a11,a12,a22,div_a1,div_a2,divdiv_a")?;
        for (k, p) in self.points.iter().enumerate() {
            writeln!(out, "{k},{},{},{},{},{},{}", p.a[0], p.a[1], p.a[2], p.div_a[0], p.div_a[1], p.divdiv_a)?;
        }
        Ok(())
    }
}

/// The smallness condition in both of its published forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallnessReport {
    pub gamma: f64,
    pub prefactor: f64,
    pub div_a_sup: f64,
    pub c_a: f64,
    pub poincare_constant: f64,
    /// `((γ+1)/γ)² ‖Div A‖∞ c_A⁻¹ C_P`.
    pub value_linear: f64,
    /// Same with `C_P²`.
    pub value_squared: f64,
    pub pass_linear: bool,
    pub pass_squared: bool,
}

pub fn smallness_values(gamma: f64, div_a_sup: f64, c_a: f64, poincare_constant: f64) -> SmallnessReport {
    let prefactor = ((gamma + 1.0) / gamma).powi(2);
    let base = prefactor * div_a_sup / c_a;
    let value_linear = base * poincare_constant;
    let value_squared = base * poincare_constant * poincare_constant;
    SmallnessReport {
        gamma,
        prefactor,
        div_a_sup,
        c_a,
        poincare_constant,
        value_linear,
        value_squared,
        pass_linear: value_linear < 1.0,
        pass_squared: value_squared < 1.0,
    }
}

pub fn smallness_margin(gamma: f64, coeff: &CoefficientField, domain: &Domain) -> Result<SmallnessReport> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidProblem(format!("gamma must be positive, got {gamma}")));
    }
    Ok(smallness_values(gamma, coeff.div_a_sup, coeff.c_a, domain.poincare().constant))
}
