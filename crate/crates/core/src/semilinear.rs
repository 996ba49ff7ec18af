//! The regularized approximation scheme for `-Pu = f / u^γ`.
//!
//! Level `n` solves `-Pψ = f⟨n⟩ (v² + 1/n)^{-γ/2}` by damped Picard iteration,
//! warm-started from the previous level's fixed point.

use std::io::Write;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientField;
use crate::discrete::{dirichlet_energy, gradient};
use crate::error::{Error, Result};
use crate::field::GridFunction;
use crate::geometry::{Domain, Shape};
use crate::operator::{assemble_p, Factorization, SolverOptions};

/// Right-hand side data `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FPreset {
    Constant {
        c: f64,
    },
    /// `f = (-P u*) u*^γ` for `u* = 1 - (x₁/a)² - (x₂/b)²` on disks and ellipses,
    /// so that `u*` is the exact solution.
    Manufactured,
    /// Smooth bump `amplitude · exp(1 - 1/(1 - s²))`, `s = |x - center| / radius`.
    Bump {
        center: [f64; 2],
        radius: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `f = δ^{-β}`: integrable but unbounded.
    EdgeSingular {
        beta: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// Semi-axes of the manufactured profile, if the shape supports it.
fn profile_axes(shape: &Shape) -> Option<(f64, f64)> {
    match *shape {
        Shape::Disk { radius } => Some((radius, radius)),
        Shape::Ellipse { a, b } => Some((a, b)),
        _ => None,
    }
}

/// `u* = 1 - (x₁/a)² - (x₂/b)²` in domain-centered coordinates.
pub fn manufactured_solution(domain: &Domain) -> Option<GridFunction> {
    let (a, b) = profile_axes(domain.shape())?;
    let c = domain.spec().center;
    Some(domain.grid_function(|p| 1.0 - ((p[0] - c[0]) / a).powi(2) - ((p[1] - c[1]) / b).powi(2)))
}

impl FPreset {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidProblem(msg));
        match *self {
            FPreset::Constant { c } if !(c.is_finite() && c > 0.0) => bad(format!("constant f needs c > 0, got {c}")),
            FPreset::Bump { radius, amplitude, .. } if !(radius > 0.0 && amplitude > 0.0) => {
                bad(format!("bump needs positive radius and amplitude, got {radius}, {amplitude}"))
            }
            FPreset::EdgeSingular { beta } if !(beta > 0.0 && beta < 1.0) => {
                bad(format!("edge-singular needs beta in (0, 1), got {beta}"))
            }
            _ => Ok(()),
        }
    }

    /// Tabulates `f` at the interior nodes.
    pub fn realize(&self, gamma: f64, domain: &Domain, coeff: &CoefficientField) -> Result<GridFunction> {
        self.validate()?;
        Ok(match *self {
            FPreset::Constant { c } => GridFunction::constant(domain.len(), c),
            FPreset::Manufactured => {
                let (a, b) = profile_axes(domain.shape()).ok_or_else(|| {
                    Error::InvalidProblem("manufactured data needs a disk or ellipse domain".into())
                })?;
                let u = manufactured_solution(domain).expect("profile axes checked");
                GridFunction::from_vec(
                    (0..domain.len())
                        .map(|k| {
                            let [a11, _, a22] = coeff.at(k).a;
                            let minus_pu = 2.0 * a11 / (a * a) + 2.0 * a22 / (b * b);
                            minus_pu * u[k].max(0.0).powf(gamma)
                        })
                        .collect(),
                )
            }
            FPreset::Bump { center, radius, amplitude } => domain.grid_function(|p| {
                let s2 = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)) / (radius * radius);
                if s2 < 1.0 {
                    amplitude * (1.0 - 1.0 / (1.0 - s2)).exp()
                } else {
                    0.0
                }
            }),
            FPreset::EdgeSingular { beta } => domain.delta().map(|d| d.powf(-beta)),
        })
    }
}

/// `γ` and the tabulated data `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub gamma: f64,
    pub f_preset: Option<FPreset>,
    #[serde(skip)]
    pub f: GridFunction,
}

impl ProblemSpec {
    pub fn new(gamma: f64, preset: FPreset, domain: &Domain, coeff: &CoefficientField) -> Result<Self> {
        check_gamma(gamma)?;
        let f = preset.realize(gamma, domain, coeff)?;
        let mut spec = Self::from_values(gamma, f)?;
        spec.f_preset = Some(preset);
        Ok(spec)
    }

    /// Arbitrary nonnegative data.
    pub fn from_values(gamma: f64, f: GridFunction) -> Result<Self> {
        check_gamma(gamma)?;
        if let Some(index) = f.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if let Some(index) = f.iter().position(|&v| v < 0.0) {
            return Err(Error::InvalidProblem(format!("f is negative at node {index}")));
        }
        Ok(Self { gamma, f_preset: None, f })
    }

    /// The exact solution for manufactured data.
    pub fn exact_solution(&self, domain: &Domain) -> Option<GridFunction> {
        match self.f_preset {
            Some(FPreset::Manufactured) => manufactured_solution(domain),
            _ => None,
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidProblem(format!("gamma must be positive, got {gamma}")))
    }
}

/// Truncation level `n`: data `f⟨n⟩ = min(f, n)` and `τₙ(s) = (s² + 1/n)^{-γ/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizationLevel {
    pub n: u64,
    pub gamma: f64,
    pub f_truncated: GridFunction,
}

impl RegularizationLevel {
    pub fn new(n: u64, gamma: f64, f: &GridFunction) -> Self {
        assert!(n > 0, "regularization level must be positive");
        let cap = n as f64;
        Self { n, gamma, f_truncated: f.map(|v| v.min(cap)) }
    }

    pub fn tau(&self, s: f64) -> f64 {
        (s * s + 1.0 / self.n as f64).powf(-0.5 * self.gamma)
    }
}

/// `f⟨n⟩ τₙ(v)` nodewise.
pub fn regularized_rhs(level: &RegularizationLevel, v: &GridFunction) -> GridFunction {
    level.f_truncated.zip_map(v, |f, s| if f == 0.0 { 0.0 } else { f * level.tau(s) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct PicardOptions {
    /// Bound on `‖S(v) - v‖∞ / ‖S(v)‖∞`.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial relaxation weight; `None` uses `2 / (2 + γ)`.
    pub damping: Option<f64>,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 500, damping: None }
    }
}

/// Relaxation weight balancing the linearized spectrum `[-γ, 0]` of the Picard map.
pub fn default_damping(gamma: f64) -> f64 {
    2.0 / (2.0 + gamma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub u: GridFunction,
    pub iterations: usize,
    pub residual: f64,
    /// Relaxation weight in effect at convergence.
    pub damping: f64,
}

/// Iterates `v ← (1-ω) v + ω S(v)` with `S(v) = (-Pₕ)⁻¹ f⟨n⟩ τₙ(v)`; `ω` halves
/// whenever the residual grows twice in a row.
pub fn picard_fixed_point(
    level: &RegularizationLevel,
    fact: &Factorization,
    v0: &GridFunction,
    options: &PicardOptions,
) -> Result<FixedPoint> {
    if options.tol.is_nan() || options.tol <= 0.0 {
        return Err(Error::config("tolerances.fixed-point", "must be positive"));
    }
    let mut omega = options.damping.unwrap_or_else(|| default_damping(level.gamma));
    let mut v = v0.clone();
    let mut previous = f64::INFINITY;
    let mut increases = 0;
    let mut residual = f64::INFINITY;
    for it in 1..=options.max_iter {
        let s = fact.solve(&regularized_rhs(level, &v))?;
        let scale = s.max_abs();
        residual = if scale > 0.0 { s.sup_distance(&v) / scale } else { v.max_abs() };
        if residual <= options.tol {
            return Ok(FixedPoint { u: s, iterations: it, residual, damping: omega });
        }
        if residual > previous {
            increases += 1;
            if increases >= 2 {
                omega *= 0.5;
                increases = 0;
                debug!("level {}: residual grew twice, damping now {omega}", level.n);
            }
        } else {
            increases = 0;
        }
        previous = residual;
        v = v.zip_map(&s, |a, b| (1.0 - omega) * a + omega * b);
    }
    Err(Error::FixedPointNotConverged { n: level.n, iterations: options.max_iter, residual })
}

/// Convenience form assembling and factoring `-Pₕ`.
pub fn picard_fixed_point_on(
    level: &RegularizationLevel,
    domain: &Domain,
    coeff: &CoefficientField,
    v0: &GridFunction,
    options: &PicardOptions,
) -> Result<FixedPoint> {
    let fact = Factorization::new(&assemble_p(domain, coeff), SolverOptions::default())?;
    picard_fixed_point(level, &fact, v0, options)
}

/// `1, 2, 4, ..., 1024`.
pub fn default_schedule() -> Vec<u64> {
    (0..=10).map(|k| 1 << k).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeOptions {
    pub schedule: Vec<u64>,
    pub picard: PicardOptions,
    /// Allowed decrease between levels, relative to `max |u|`.
    pub monotonicity_slack: f64,
    /// Starting guess of the first level; zero when absent.
    pub initial: Option<GridFunction>,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        Self { schedule: default_schedule(), picard: PicardOptions::default(), monotonicity_slack: 1e-8, initial: None }
    }
}

/// Diagnostics of one regularization level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub n: u64,
    pub iterations: usize,
    pub residual: f64,
    pub damping: f64,
    pub min_u: f64,
    pub max_u: f64,
    /// `max(0, max(u_prev - u))`; zero on the first level.
    pub monotonicity_defect: f64,
    /// `min(u - u_prev)`; zero on the first level.
    pub min_increment: f64,
    /// `max(0, max(u_first - u))`.
    pub lower_bound_defect: f64,
    /// `‖u - u_prev‖∞`; zero on the first level.
    pub cauchy_difference: f64,
    /// Dirichlet energy of `u^{(γ+1)/2}`.
    pub energy_w: f64,
    /// `∫ ‖∇u‖²_A u^{γ-1} / ∫ f⟨n⟩ τₙ(u) u^γ`.
    pub nonlinear_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeReport {
    pub gamma: f64,
    pub schedule: Vec<u64>,
    pub levels: Vec<LevelReport>,
    pub monotonicity_slack: f64,
    /// Every level increment within the slack.
    pub monotone: bool,
    /// Every converged level strictly positive.
    pub positive: bool,
    /// `max ≤ 2 · median` of the level energies.
    pub energy_bounded: bool,
    /// Last level's fixed point.
    #[serde(skip)]
    pub limit: GridFunction,
}

impl SchemeReport {
    pub fn last(&self) -> &LevelReport {
        self.levels.last().expect("schedule is nonempty")
    }

    pub fn energy_max_over_median(&self) -> f64 {
        let mut e: Vec<f64> = self.levels.iter().map(|l| l.energy_w).collect();
        e.sort_by(f64::total_cmp);
        let m = e.len();
        let median = if m % 2 == 1 { e[m / 2] } else { 0.5 * (e[m / 2 - 1] + e[m / 2]) };
        e[m - 1] / median
    }
}

/// `∫ ‖∇u‖²_A u^{γ-1}` and `∫ f⟨n⟩ τₙ(u) u^γ` for the nonlinear inequality.
pub fn nonlinear_ratio(domain: &Domain, coeff: &CoefficientField, level: &RegularizationLevel, u: &GridFunction) -> f64 {
    let grad = gradient(domain, u);
    let rhs = regularized_rhs(level, u);
    let gamma = level.gamma;
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..domain.len() {
        if u[k] <= 0.0 {
            continue;
        }
        num += coeff.at(k).quadratic_form(grad[k]) * u[k].powf(gamma - 1.0);
        den += rhs[k] * u[k].powf(gamma);
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Runs the scheme over the schedule with a fresh factorization of `-Pₕ`.
pub fn outer_solve(
    problem: &ProblemSpec,
    domain: &Domain,
    coeff: &CoefficientField,
    options: &SchemeOptions,
) -> Result<SchemeReport> {
    let fact = Factorization::new(&assemble_p(domain, coeff), SolverOptions::default())?;
    outer_solve_with(problem, domain, coeff, &fact, options)
}

/// Runs the scheme with a given factorization of `-Pₕ`.
pub fn outer_solve_with(
    problem: &ProblemSpec,
    domain: &Domain,
    coeff: &CoefficientField,
    fact: &Factorization,
    options: &SchemeOptions,
) -> Result<SchemeReport> {
    let schedule = &options.schedule;
    if schedule.is_empty() || schedule[0] == 0 || schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("schedule", "must be a nonempty strictly increasing list of positive integers"));
    }
    let gamma = problem.gamma;
    let mut v = match &options.initial {
        Some(v0) => GridFunction::checked(v0.values().to_vec(), domain.len())?,
        None => GridFunction::zeros(domain.len()),
    };
    let mut levels = Vec::with_capacity(schedule.len());
    let mut first: Option<GridFunction> = None;
    let mut prev: Option<GridFunction> = None;
    let mut monotone = true;
    let mut positive = true;
    for &n in schedule {
        let level = RegularizationLevel::new(n, gamma, &problem.f);
        let fp = picard_fixed_point(&level, fact, &v, &options.picard)?;
        let u = fp.u;
        let max_abs = u.max_abs();
        let (defect, min_inc, cauchy) = match &prev {
            Some(p) => {
                let diff = u.zip_map(p, |a, b| a - b);
                (diff.min().min(0.0).abs(), diff.min(), diff.max_abs())
            }
            None => (0.0, 0.0, 0.0),
        };
        if defect > options.monotonicity_slack * max_abs {
            monotone = false;
        }
        let lower = first.as_ref().map_or(0.0, |f0| f0.zip_map(&u, |a, b| a - b).max().max(0.0));
        if u.min() <= 0.0 {
            positive = false;
        }
        let w = u.map(|s| s.max(0.0).powf(0.5 * (gamma + 1.0)));
        let report = LevelReport {
            n,
            iterations: fp.iterations,
            residual: fp.residual,
            damping: fp.damping,
            min_u: u.min(),
            max_u: u.max(),
            monotonicity_defect: defect,
            min_increment: min_inc,
            lower_bound_defect: lower,
            cauchy_difference: cauchy,
            energy_w: dirichlet_energy(domain, &w),
            nonlinear_ratio: nonlinear_ratio(domain, coeff, &level, &u),
        };
        info!("level n = {n}: {} iterations, residual {:.2e}", report.iterations, report.residual);
        levels.push(report);
        if first.is_none() {
            first = Some(u.clone());
        }
        prev = Some(u.clone());
        v = u;
    }
    let mut report = SchemeReport {
        gamma,
        schedule: schedule.clone(),
        levels,
        monotonicity_slack: options.monotonicity_slack,
        monotone,
        positive,
        energy_bounded: false,
        limit: v,
    };
    report.energy_bounded = report.energy_max_over_median() <= 2.0;
    Ok(report)
}

/// Writes `index,x,y,u,delta,u_over_delta` rows.
pub fn write_solution_csv<W: Write>(domain: &Domain, u: &GridFunction, mut out: W) -> std::io::Result<()> {
    writeln!(out, "index,x,y,u,delta,u_over_delta")?;
    let delta = domain.delta();
    for k in 0..domain.len() {
        let p = domain.point(k);
        writeln!(out, "{k},{},{},{:e},{:e},{:e}", p[0], p[1], u[k], delta[k], u[k] / delta[k])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{build_coefficients, CoefficientPreset};
    use crate::geometry::{build_domain, DomainSpec};

    fn disk(h: f64) -> (Domain, CoefficientField) {
        let d = build_domain(&DomainSpec::disk(1.0, h)).unwrap();
        let c = build_coefficients(&CoefficientPreset::Identity, &d).unwrap();
        (d, c)
    }

    #[test]
    fn rhs_arithmetic() {
        let level = RegularizationLevel::new(4, 1.0, &GridFunction::constant(3, 1.0));
        let g = regularized_rhs(&level, &GridFunction::zeros(3));
        assert!(g.iter().all(|&v| (v - 2.0).abs() < 1e-15));
        let capped = RegularizationLevel::new(4, 1.0, &GridFunction::constant(3, 10.0));
        assert!(capped.f_truncated.iter().all(|&v| v == 4.0));
    }

    #[test]
    fn zero_data_converges_immediately() {
        let (d, c) = disk(1.0 / 16.0);
        let level = RegularizationLevel::new(8, 1.0, &GridFunction::zeros(d.len()));
        let fp = picard_fixed_point_on(&level, &d, &c, &GridFunction::zeros(d.len()), &PicardOptions::default()).unwrap();
        assert_eq!(fp.iterations, 1);
        assert_eq!(fp.u.max_abs(), 0.0);
    }

    #[test]
    fn manufactured_level_is_close_and_start_independent() {
        let h = 1.0 / 32.0;
        let (d, c) = disk(h);
        let problem = ProblemSpec::new(1.0, FPreset::Manufactured, &d, &c).unwrap();
        let level = RegularizationLevel::new(1024, 1.0, &problem.f);
        let opts = PicardOptions::default();
        let a = picard_fixed_point_on(&level, &d, &c, &GridFunction::zeros(d.len()), &opts).unwrap();
        let b = picard_fixed_point_on(&level, &d, &c, &GridFunction::constant(d.len(), 10.0), &opts).unwrap();
        let exact = problem.exact_solution(&d).unwrap();
        assert!(a.u.sup_distance(&exact) <= 2.0 * h * h + 5.0 / 1024f64.sqrt());
        assert!(a.u.sup_distance(&b.u) <= 1e-9);
    }

    #[test]
    fn manufactured_requires_conic_domain() {
        let d = build_domain(&DomainSpec::smoothed_rectangle(2.0, 1.0, 0.25, 1.0 / 16.0)).unwrap();
        let c = build_coefficients(&CoefficientPreset::Identity, &d).unwrap();
        assert!(matches!(ProblemSpec::new(1.0, FPreset::Manufactured, &d, &c), Err(Error::InvalidProblem(_))));
        assert!(ProblemSpec::new(-1.0, FPreset::Constant { c: 1.0 }, &d, &c).is_err());
    }

    #[test]
    fn outer_solve_is_monotone() {
        let (d, c) = disk(1.0 / 16.0);
        let problem = ProblemSpec::new(0.5, FPreset::Constant { c: 1.0 }, &d, &c).unwrap();
        let report = outer_solve(&problem, &d, &c, &SchemeOptions::default()).unwrap();
        assert!(report.monotone && report.positive);
        assert_eq!(report.levels.len(), 11);
        assert!(report.levels.iter().all(|l| l.lower_bound_defect <= 1e-8));
    }
}
