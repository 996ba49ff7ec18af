//! Limit candidates from different starting guesses and schedules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kato::kato_residual_very_weak;
use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::field::GridFunction;
use crate::geometry::Domain;
use crate::operator::{assemble_pstar, Factorization, SolverOptions};
use crate::semilinear::{outer_solve_with, regularized_rhs, ProblemSpec, RegularizationLevel, SchemeOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Initialization {
    Zero,
    Constant { value: f64 },
    /// Uniform on `(0, 1]`.
    RandomPositive { seed: u64 },
}

impl Initialization {
    pub fn realize(&self, len: usize) -> GridFunction {
        match *self {
            Initialization::Zero => GridFunction::zeros(len),
            Initialization::Constant { value } => GridFunction::constant(len, value),
            Initialization::RandomPositive { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                GridFunction::from_vec((0..len).map(|_| 1.0 - rng.gen::<f64>()).collect())
            }
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Initialization::Zero => "zero".into(),
            Initialization::Constant { value } => format!("constant({value})"),
            Initialization::RandomPositive { seed } => format!("random(seed={seed})"),
        }
    }
}

/// Zero, the constant 10 and a seeded random positive field.
pub fn default_initializations(seed: u64) -> Vec<Initialization> {
    vec![Initialization::Zero, Initialization::Constant { value: 10.0 }, Initialization::RandomPositive { seed }]
}

/// `{1, 2, 4, ..., 1024}` and `{1, 4, 16, ..., 1024}`.
pub fn default_schedules() -> Vec<Vec<u64>> {
    vec![(0..=10).map(|k| 1 << k).collect(), (0..=5).map(|k| 1 << (2 * k)).collect()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessRun {
    pub initialization: String,
    pub schedule: Vec<u64>,
    pub total_iterations: usize,
    pub final_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub runs: Vec<UniquenessRun>,
    pub max_pairwise: f64,
    /// `max(1e-6, 10 · fixed-point tolerance)`.
    pub tolerance: f64,
    /// Worst very weak Kato residual over ordered pairs, tested against `ξ`.
    pub kato_residual: f64,
    pub kato_scale: f64,
    pub kato_passed: bool,
    pub passed: bool,
}

/// Runs every initialization against every schedule and compares the limits.
pub fn uniqueness_probe(
    problem: &ProblemSpec,
    domain: &Domain,
    coeff: &CoefficientField,
    fact: &Factorization,
    initializations: &[Initialization],
    schedules: &[Vec<u64>],
    base: &SchemeOptions,
) -> Result<UniquenessReport> {
    if initializations.len() < 2 || schedules.len() < 2 {
        return Err(Error::InvalidProblem("uniqueness probe needs at least two initializations and two schedules".into()));
    }
    let mut runs = Vec::new();
    let mut limits = Vec::new();
    for init in initializations {
        for schedule in schedules {
            let options = SchemeOptions { schedule: schedule.clone(), initial: Some(init.realize(domain.len())), ..base.clone() };
            let report = outer_solve_with(problem, domain, coeff, fact, &options).map_err(|e| Error::ProbeAborted {
                completed: runs.len(),
                reason: format!("{} with schedule {schedule:?}: {e}", init.label()),
            })?;
            runs.push(UniquenessRun {
                initialization: init.label(),
                schedule: schedule.clone(),
                total_iterations: report.levels.iter().map(|l| l.iterations).sum(),
                final_residual: report.last().residual,
            });
            let n = *schedule.last().expect("nonempty schedule");
            limits.push((n, report.limit));
        }
    }
    let mut max_pairwise: f64 = 0.0;
    for i in 0..limits.len() {
        for j in i + 1..limits.len() {
            max_pairwise = max_pairwise.max(limits[i].1.sup_distance(&limits[j].1));
        }
    }
    let pstar = assemble_pstar(domain, coeff);
    let xi = Factorization::new(&pstar, SolverOptions::default())?.solve(&GridFunction::constant(domain.len(), 1.0))?;
    let data: Vec<GridFunction> = limits
        .iter()
        .map(|(n, u)| regularized_rhs(&RegularizationLevel::new(*n, problem.gamma, &problem.f), u))
        .collect();
    let mut kato_residual = f64::NEG_INFINITY;
    let mut kato_scale = 0.0;
    let mut kato_passed = true;
    for i in 0..limits.len() {
        for j in 0..limits.len() {
            if i == j {
                continue;
            }
            let r = kato_residual_very_weak(&pstar, &limits[i].1, &limits[j].1, &data[i], &data[j], &xi)?;
            kato_passed &= r.passed();
            if r.residual > kato_residual {
                kato_residual = r.residual;
                kato_scale = r.scale;
            }
        }
    }
    let tolerance = 1e-6_f64.max(10.0 * base.picard.tol);
    let passed = max_pairwise <= tolerance && kato_passed;
    Ok(UniquenessReport { runs, max_pairwise, tolerance, kato_residual, kato_scale, kato_passed, passed })
}
