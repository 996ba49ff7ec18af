//! Config-driven experiment runs: build, assemble, solve, diagnose, report.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{
    self, boundary_decay_report, compare_regularity, critical_exponent, default_initializations, default_schedules,
    default_trace_widths, kato_residual_strong, l1_apriori_ratio, l1_corpus, rational_gamma, regularity_probe,
    sobolev_diagnostics, trace_functional, uniqueness_probe, weighted_rhs_integral, xi_approximation_check,
    Certification, DiagnosticsReport, TRUNCATION_EPS, TRUNCATION_LEVELS,
};
use crate::coefficients::{build_coefficients, smallness_margin, CoefficientField, CoefficientPreset};
use crate::error::{Error, Result};
use crate::field::GridFunction;
use crate::geometry::{build_domain, Domain, DomainSpec};
use crate::green::{
    disk_closed_form_error, green_bound_ratios, green_symmetry_defect, reconstruction_defect, AdjointSource,
    GreenSamples, GreenTable,
};
use crate::operator::{assemble_p, assemble_pstar, Factorization, OperatorKind, SolverOptions};
use crate::semilinear::{
    default_schedule, outer_solve_with, regularized_rhs, write_solution_csv, FPreset, PicardOptions, ProblemSpec,
    RegularizationLevel, SchemeOptions, SchemeReport,
};

/// Version of the `report.json` layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Number of random data fields in the `L¹` corpus.
pub const L1_CORPUS_SIZE: usize = 50;
/// Number of random test fields for the strong Kato residual.
pub const KATO_TEST_FIELDS: usize = 10;
/// Sample sizes and boundary clearance of the Green diagnostics.
pub const GREEN_SOURCES: usize = 20;
pub const GREEN_TARGETS: usize = 25;
pub const GREEN_MIN_DELTA: f64 = 0.02;
/// Symmetry defects at or below this count as exact.
pub const SYMMETRY_ROUNDOFF: f64 = 1e-10;
/// Allowed relative change between a run and its refinement.
pub const REFINEMENT_DRIFT: f64 = 0.1;
pub const WINDOW_DRIFT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct Tolerances {
    pub fixed_point: f64,
    pub solver: f64,
    pub monotonicity_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { fixed_point: 1e-10, solver: 1e-10, monotonicity_slack: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ProblemConfig {
    pub gamma: f64,
    pub f_preset: FPreset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Diagnostic {
    Monotonicity,
    EnergyBound,
    Smallness,
    BoundaryDecay,
    Trace,
    Sobolev,
    KatoStrong,
    Adjoint,
    XiApproximation,
    WeightedIntegrability,
    L1Apriori,
    Uniqueness,
    Regularity,
    GreenIdentities,
    GreenBounds,
    ManufacturedError,
}

impl Diagnostic {
    pub const ALL: [Diagnostic; 16] = [
        Diagnostic::Monotonicity,
        Diagnostic::EnergyBound,
        Diagnostic::Smallness,
        Diagnostic::BoundaryDecay,
        Diagnostic::Trace,
        Diagnostic::Sobolev,
        Diagnostic::KatoStrong,
        Diagnostic::Adjoint,
        Diagnostic::XiApproximation,
        Diagnostic::WeightedIntegrability,
        Diagnostic::L1Apriori,
        Diagnostic::Uniqueness,
        Diagnostic::Regularity,
        Diagnostic::GreenIdentities,
        Diagnostic::GreenBounds,
        Diagnostic::ManufacturedError,
    ];

    pub fn name(self) -> String {
        serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
    }

    pub fn description(self) -> &'static str {
        match self {
            Diagnostic::Monotonicity => "levels nondecreasing in n and strictly positive",
            Diagnostic::EnergyBound => "energy of u^((γ+1)/2) across levels, nonlinear ratio, smallness variants",
            Diagnostic::Smallness => "smallness condition with C_P and with C_P²",
            Diagnostic::BoundaryDecay => "u/δ window over δ > 2h, stable under refinement",
            Diagnostic::Trace => "T(ε) decreasing along 16h, 8h, 4h",
            Diagnostic::Sobolev => "critical exponent, gradient integrals, nonlinear-inequality ratios",
            Diagnostic::KatoStrong => "Kato inequality for the limit against random bump test fields",
            Diagnostic::Adjoint => "adjoint test function ξ: positivity and ξ/δ window",
            Diagnostic::XiApproximation => "truncations Φ(nξ)/n: monotone, dominated, -P*ξ_n ≤ D_A",
            Diagnostic::WeightedIntegrability => "∫ (f/u^γ) ξ ≤ D_A ∫ u",
            Diagnostic::L1Apriori => "‖u‖_L¹ / ‖F‖_L¹(δ) over a seeded corpus, stable under refinement",
            Diagnostic::Uniqueness => "limits from three starts and two schedules coincide",
            Diagnostic::Regularity => "L^p of f/δ^γ against W^{2,p} of u under refinement",
            Diagnostic::GreenIdentities => "reconstruction and symmetry identities of the discrete Green function",
            Diagnostic::GreenBounds => "two-sided logarithmic Green bounds, stable under refinement",
            Diagnostic::ManufacturedError => "max-norm error against the exact solution and observed order",
        }
    }

    /// Needs the regularized scheme to run first.
    pub fn needs_solution(self) -> bool {
        !matches!(self, Diagnostic::Smallness | Diagnostic::Adjoint | Diagnostic::XiApproximation | Diagnostic::L1Apriori | Diagnostic::GreenIdentities | Diagnostic::GreenBounds)
    }
}

fn default_coefficients() -> CoefficientPreset {
    CoefficientPreset::Identity
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainSpec,
    #[serde(default = "default_coefficients")]
    pub coefficients: CoefficientPreset,
    pub problem: ProblemConfig,
    #[serde(default = "default_schedule")]
    pub schedule: Vec<u64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::config(parse_field(text, &e), e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let gamma = self.problem.gamma;
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::config("problem.gamma", format!("must be positive, got {gamma}")));
        }
        self.problem.f_preset.validate().map_err(|e| Error::config("problem.f-preset", e.to_string()))?;
        self.domain.validate().map_err(|e| Error::config("domain", e.to_string()))?;
        self.coefficients.validate().map_err(|e| Error::config("coefficients", e.to_string()))?;
        if self.schedule.is_empty() || self.schedule[0] == 0 || self.schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("schedule", "must be a nonempty strictly increasing list of positive integers"));
        }
        for (field, v) in [
            ("tolerances.fixed-point", self.tolerances.fixed_point),
            ("tolerances.solver", self.tolerances.solver),
            ("tolerances.monotonicity-slack", self.tolerances.monotonicity_slack),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(field, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn scheme_options(&self) -> SchemeOptions {
        SchemeOptions {
            schedule: self.schedule.clone(),
            picard: PicardOptions { tol: self.tolerances.fixed_point, ..PicardOptions::default() },
            monotonicity_slack: self.tolerances.monotonicity_slack,
            initial: None,
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions { tol: self.tolerances.solver, ..SolverOptions::default() }
    }

    /// Requested diagnostics, deduplicated in canonical order.
    pub fn requested(&self) -> Vec<Diagnostic> {
        let mut d = self.diagnostics.clone();
        d.sort();
        d.dedup();
        d
    }

    /// Compact description used to tag every certification.
    pub fn run_label(&self, h: f64) -> String {
        let j = |v: Value| v.to_string();
        format!(
            "shape={} coefficients={} gamma={} f={} h={h}",
            j(serde_json::to_value(&self.domain.shape).unwrap_or_default()),
            j(serde_json::to_value(&self.coefficients).unwrap_or_default()),
            self.problem.gamma,
            j(serde_json::to_value(&self.problem.f_preset).unwrap_or_default()),
        )
    }
}

/// Dotted key path of the line a parse error points at.
fn parse_field(text: &str, e: &toml::de::Error) -> String {
    let Some(span) = e.span() else { return "config".to_string() };
    let before = &text[..span.start.min(text.len())];
    let line_start = before.rfind('\n').map_or(0, |i| i + 1);
    let line_end = text[line_start..].find('\n').map_or(text.len(), |i| line_start + i);
    let line = &text[line_start..line_end];
    let table = before[..line_start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('[') && l.ends_with(']'))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    let key = line.split_once('=').map(|(k, _)| k.trim().to_string());
    match (table, key) {
        (Some(t), Some(k)) => format!("{t}.{k}"),
        (Some(t), None) => t,
        (None, Some(k)) => k,
        (None, None) => "config".to_string(),
    }
}

/// Domain, coefficients, data and factorization at one resolution.
pub struct Setup {
    pub domain: Domain,
    pub coeff: CoefficientField,
    pub problem: ProblemSpec,
    pub fact: Factorization,
}

impl Setup {
    pub fn build(config: &ExperimentConfig, h: f64) -> Result<Self> {
        let domain = build_domain(&config.domain.clone().with_h(h))?;
        let coeff = build_coefficients(&config.coefficients, &domain)?;
        let problem = ProblemSpec::new(config.problem.gamma, config.problem.f_preset.clone(), &domain, &coeff)?;
        let fact = Factorization::new(&assemble_p(&domain, &coeff), config.solver_options())?;
        Ok(Self { domain, coeff, problem, fact })
    }

    pub fn h(&self) -> f64 {
        self.domain.h()
    }
}

/// A setup with the scheme run on it.
pub struct Solved {
    pub setup: Setup,
    pub scheme: SchemeReport,
}

impl Solved {
    pub fn run(config: &ExperimentConfig, h: f64) -> Result<Self> {
        let setup = Setup::build(config, h)?;
        let scheme = outer_solve_with(&setup.problem, &setup.domain, &setup.coeff, &setup.fact, &config.scheme_options())?;
        Ok(Self { setup, scheme })
    }

    /// Data of the limit: the regularized right-hand side at the last level.
    pub fn limit_data(&self) -> GridFunction {
        let level = RegularizationLevel::new(self.scheme.last().n, self.scheme.gamma, &self.setup.problem.f);
        regularized_rhs(&level, &self.scheme.limit)
    }
}

/// CSV table emitted next to `report.json`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(name: &str, header: Vec<&'static str>) -> Self {
        Self { name: name.to_string(), header, rows: Vec::new() }
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.header.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Lazily computed pieces shared between diagnostics.
pub struct Lab<'a> {
    pub config: &'a ExperimentConfig,
    pub h: f64,
    base: Option<Solved>,
    refined: Option<Solved>,
    base_setup: Option<Setup>,
    refined_setup: Option<Setup>,
}

impl<'a> Lab<'a> {
    pub fn new(config: &'a ExperimentConfig, h: f64) -> Self {
        Self { config, h, base: None, refined: None, base_setup: None, refined_setup: None }
    }

    pub fn solved(&mut self) -> Result<&Solved> {
        if self.base.is_none() {
            self.base = Some(Solved::run(self.config, self.h)?);
        }
        Ok(self.base.as_ref().expect("just set"))
    }

    pub fn refined(&mut self) -> Result<&Solved> {
        if self.refined.is_none() {
            self.refined = Some(Solved::run(self.config, 0.5 * self.h)?);
        }
        Ok(self.refined.as_ref().expect("just set"))
    }

    fn setup(&mut self, refined: bool) -> Result<&Setup> {
        let h = if refined { 0.5 * self.h } else { self.h };
        if refined {
            if self.refined.is_none() && self.refined_setup.is_none() {
                self.refined_setup = Some(Setup::build(self.config, h)?);
            }
            Ok(self.refined.as_ref().map(|s| &s.setup).or(self.refined_setup.as_ref()).expect("just set"))
        } else {
            if self.base.is_none() && self.base_setup.is_none() {
                self.base_setup = Some(Setup::build(self.config, h)?);
            }
            Ok(self.base.as_ref().map(|s| &s.setup).or(self.base_setup.as_ref()).expect("just set"))
        }
    }

    pub fn scheme(&self) -> Option<&SchemeReport> {
        self.base.as_ref().map(|s| &s.scheme)
    }

    fn certification(&self, passed: bool, tolerance: Option<f64>, values: Value) -> Certification {
        Certification { passed, h: self.h, run: self.config.run_label(self.h), tolerance, values }
    }

    /// Evaluates one diagnostic.
    pub fn evaluate(&mut self, diagnostic: Diagnostic) -> Result<(Certification, Vec<Table>)> {
        match diagnostic {
            Diagnostic::Monotonicity => self.monotonicity(),
            Diagnostic::EnergyBound => self.energy_bound(),
            Diagnostic::Smallness => self.smallness(),
            Diagnostic::BoundaryDecay => self.boundary_decay(),
            Diagnostic::Trace => self.trace(),
            Diagnostic::Sobolev => self.sobolev(),
            Diagnostic::KatoStrong => self.kato_strong(),
            Diagnostic::Adjoint => self.adjoint(),
            Diagnostic::XiApproximation => self.xi_approximation(),
            Diagnostic::WeightedIntegrability => self.weighted(),
            Diagnostic::L1Apriori => self.l1(),
            Diagnostic::Uniqueness => self.uniqueness(),
            Diagnostic::Regularity => self.regularity(),
            Diagnostic::GreenIdentities => self.green_identities(),
            Diagnostic::GreenBounds => self.green_bounds(),
            Diagnostic::ManufacturedError => self.manufactured_error(),
        }
    }

    fn monotonicity(&mut self) -> Result<(Certification, Vec<Table>)> {
        let s = &self.solved()?.scheme;
        let worst = s.levels.iter().map(|l| l.monotonicity_defect / l.max_u.abs().max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
        let values = json!({
            "monotone": s.monotone,
            "positive": s.positive,
            "max-relative-defect": worst,
            "min-u": s.last().min_u,
        });
        let passed = s.monotone && s.positive;
        let tol = s.monotonicity_slack;
        Ok((self.certification(passed, Some(tol), values), vec![]))
    }

    fn energy_bound(&mut self) -> Result<(Certification, Vec<Table>)> {
        let gamma = self.config.problem.gamma;
        let s = self.solved()?;
        let smallness = smallness_margin(gamma, &s.setup.coeff, &s.setup.domain)?;
        let scheme = &s.scheme;
        let ratios: Vec<f64> = scheme.levels.iter().map(|l| l.nonlinear_ratio).collect();
        let ratio_spread = max_over_median(&ratios);
        let ratio_bounded = ratios.iter().all(|r| r.is_finite()) && ratio_spread <= 2.0;
        let energy_spread = scheme.energy_max_over_median();
        let smallness_holds = smallness.pass_linear || smallness.pass_squared;
        let passed = scheme.energy_bounded && (!smallness_holds || ratio_bounded);
        let mut table = Table::new("energy_bound", vec!["n", "energy_w", "nonlinear_ratio"]);
        for l in &scheme.levels {
            table.rows.push(vec![l.n as f64, l.energy_w, l.nonlinear_ratio]);
        }
        let values = json!({
            "energy-max-over-median": energy_spread,
            "ratio-max-over-median": ratio_spread,
            "ratio-bounded": ratio_bounded,
            "smallness": smallness,
        });
        Ok((self.certification(passed, Some(2.0), values), vec![table]))
    }

    fn smallness(&mut self) -> Result<(Certification, Vec<Table>)> {
        let gamma = self.config.problem.gamma;
        let s = self.setup(false)?;
        let report = smallness_margin(gamma, &s.coeff, &s.domain)?;
        let poincare = s.domain.poincare().clone();
        let passed = report.pass_linear && report.pass_squared;
        let values = json!({ "report": report, "poincare": poincare });
        Ok((self.certification(passed, Some(1.0), values), vec![]))
    }

    fn boundary_decay(&mut self) -> Result<(Certification, Vec<Table>)> {
        let coarse = {
            let s = self.solved()?;
            boundary_decay_report(&s.setup.domain, &s.scheme.limit)?
        };
        let fine = {
            let s = self.refined()?;
            boundary_decay_report(&s.setup.domain, &s.scheme.limit)?
        };
        let drift = coarse.drift(&fine);
        let passed = coarse.min > 0.0 && fine.min > 0.0 && drift <= WINDOW_DRIFT;
        let mut table = Table::new("boundary_decay", vec!["h", "min", "max", "nodes"]);
        table.rows.push(vec![self.h, coarse.min, coarse.max, coarse.nodes as f64]);
        table.rows.push(vec![0.5 * self.h, fine.min, fine.max, fine.nodes as f64]);
        let values = json!({ "window": coarse, "refined-window": fine, "drift": drift });
        Ok((self.certification(passed, Some(WINDOW_DRIFT), values), vec![table]))
    }

    fn trace(&mut self) -> Result<(Certification, Vec<Table>)> {
        let s = self.solved()?;
        let widths = default_trace_widths(s.setup.h());
        let t = trace_functional(&s.setup.domain, &s.scheme.limit, &widths)?;
        let control = trace_functional(&s.setup.domain, &GridFunction::constant(s.setup.domain.len(), 1.0), &widths)?;
        let mut table = Table::new("trace", vec!["eps", "t_solution", "t_constant"]);
        for ((eps, a), b) in widths.iter().zip(&t.values).zip(&control.values) {
            table.rows.push(vec![*eps, *a, *b]);
        }
        let passed = t.decreasing();
        let values = json!({ "table": t, "constant-control": control, "decreasing": passed });
        Ok((self.certification(passed, None, values), vec![table]))
    }

    fn sobolev(&mut self) -> Result<(Certification, Vec<Table>)> {
        let coarse = {
            let s = self.solved()?;
            sobolev_diagnostics(&s.setup.domain, &s.setup.coeff, &s.scheme, None)?
        };
        let fine = {
            let s = self.refined()?;
            sobolev_diagnostics(&s.setup.domain, &s.setup.coeff, &s.scheme, None)?
        };
        let drift = relative_change(coarse.gradient_integrals[0].1, fine.gradient_integrals[0].1);
        let exact = critical_exponent(rational_gamma(self.config.problem.gamma)?, 2)?;
        let mut table = Table::new("sobolev", vec!["h", "q", "gradient_integral"]);
        for (h, r) in [(self.h, &coarse), (0.5 * self.h, &fine)] {
            for &(q, v) in &r.gradient_integrals {
                table.rows.push(vec![h, q, v]);
            }
        }
        let passed = drift <= REFINEMENT_DRIFT && coarse.exponent == exact;
        let values = json!({ "report": coarse, "refined": fine, "probe-drift": drift });
        Ok((self.certification(passed, Some(REFINEMENT_DRIFT), values), vec![table]))
    }

    fn kato_strong(&mut self) -> Result<(Certification, Vec<Table>)> {
        let seed = self.config.seed;
        let s = self.solved()?;
        let d = &s.setup.domain;
        let op = assemble_p(d, &s.setup.coeff);
        let data = s.limit_data();
        let bumps = analysis::random_bumps(d, KATO_TEST_FIELDS, (0.1, 0.4), 2.0 * d.h(), seed);
        let phis: Vec<GridFunction> = bumps.iter().map(|b| analysis::bump_field(d, std::slice::from_ref(b))).collect();
        let limit = kato_residual_strong(&op, d, &s.setup.coeff, &s.scheme.limit, &data, &phis)?;
        // sign-changing companion: the limit lowered by half its maximum
        let shifted_u = s.scheme.limit.map(|v| v - 0.5 * s.scheme.limit.max());
        let shifted_f = op.apply(&shifted_u);
        let shifted = kato_residual_strong(&op, d, &s.setup.coeff, &shifted_u, &shifted_f, &phis)?;
        let mut table = Table::new("kato_strong", vec!["field", "residual", "scale", "weak_form", "shifted_residual"]);
        for i in 0..phis.len() {
            table.rows.push(vec![i as f64, limit.residuals[i], limit.scales[i], limit.weak_form[i], shifted.residuals[i]]);
        }
        let passed = limit.passed && shifted.passed;
        let values = json!({ "limit": limit, "shifted": shifted });
        Ok((self.certification(passed, Some(analysis::KATO_TOLERANCE), values), vec![table]))
    }

    fn adjoint(&mut self) -> Result<(Certification, Vec<Table>)> {
        let radius = identity_disk_radius(self.config);
        let s = self.setup(false)?;
        let xi = adjoint_solve(s)?;
        let window = boundary_decay_report(&s.domain, &xi)?;
        let closed_form = radius.map(|r| {
            let c = s.domain.spec().center;
            let exact = s.domain.grid_function(|p| (r * r - (p[0] - c[0]).powi(2) - (p[1] - c[1]).powi(2)) / 4.0);
            xi.sup_distance(&exact)
        });
        // on the unit-ellipticity disk ξ = (R² - r²)/4, so ξ/δ lies in [R/4, R/2]
        let closed_ok = match (radius, closed_form) {
            (Some(r), Some(err)) => {
                err <= s.h() * s.h() && window.min >= 0.25 * r - 0.05 && window.max <= 0.5 * r + 0.05
            }
            _ => true,
        };
        let passed = xi.min() > 0.0 && window.min > 0.0 && closed_ok;
        let values = json!({
            "min": xi.min(),
            "max": xi.max(),
            "window": window,
            "closed-form-error": closed_form,
        });
        Ok((self.certification(passed, None, values), vec![]))
    }

    fn xi_approximation(&mut self) -> Result<(Certification, Vec<Table>)> {
        let s = self.setup(false)?;
        let xi = adjoint_solve(s)?;
        let op = assemble_pstar(&s.domain, &s.coeff);
        let r = xi_approximation_check(&op, &s.coeff, &xi, &TRUNCATION_LEVELS, TRUNCATION_EPS)?;
        let mut table = Table::new("xi_approximation", vec!["n", "defect"]);
        for (n, d) in r.levels.iter().zip(&r.defects) {
            table.rows.push(vec![*n as f64, *d]);
        }
        let passed = r.passed;
        let slack = r.slack;
        Ok((self.certification(passed, Some(slack), serde_json::to_value(&r)?), vec![table]))
    }

    fn weighted(&mut self) -> Result<(Certification, Vec<Table>)> {
        let s = self.solved()?;
        let xi = adjoint_solve(&s.setup)?;
        let w = weighted_rhs_integral(&s.setup.domain, &s.scheme.limit, &s.setup.problem, &xi, &s.setup.coeff)?;
        let fine = {
            let s = self.refined()?;
            let xi = adjoint_solve(&s.setup)?;
            weighted_rhs_integral(&s.setup.domain, &s.scheme.limit, &s.setup.problem, &xi, &s.setup.coeff)?
        };
        let passed = w.passed;
        let values = json!({ "integral": w, "refined": fine, "lhs-drift": relative_change(w.lhs, fine.lhs) });
        Ok((self.certification(passed, Some(w.slack), values), vec![]))
    }

    fn l1(&mut self) -> Result<(Certification, Vec<Table>)> {
        let seed = self.config.seed;
        let (coarse, one) = {
            let s = self.setup(false)?;
            let one = l1_apriori_ratio(&s.fact, &s.domain, &GridFunction::constant(s.domain.len(), 1.0))?;
            (l1_corpus(&s.fact, &s.domain, L1_CORPUS_SIZE, seed)?, one)
        };
        let fine = {
            let s = self.setup(true)?;
            l1_corpus(&s.fact, &s.domain, L1_CORPUS_SIZE, seed)?
        };
        let drift = relative_change(coarse.max, fine.max);
        let mut table = Table::new("l1_apriori", vec!["index", "ratio", "refined_ratio"]);
        for (i, (a, b)) in coarse.ratios.iter().zip(&fine.ratios).enumerate() {
            table.rows.push(vec![i as f64, *a, *b]);
        }
        let passed = coarse.max.is_finite() && drift <= REFINEMENT_DRIFT;
        let values = json!({
            "min": coarse.min,
            "max": coarse.max,
            "refined-max": fine.max,
            "max-drift": drift,
            "constant-data-ratio": one,
        });
        Ok((self.certification(passed, Some(REFINEMENT_DRIFT), values), vec![table]))
    }

    fn uniqueness(&mut self) -> Result<(Certification, Vec<Table>)> {
        let config = self.config;
        let base = config.scheme_options();
        let s = self.setup(false)?;
        let r = uniqueness_probe(
            &s.problem,
            &s.domain,
            &s.coeff,
            &s.fact,
            &default_initializations(config.seed),
            &default_schedules(),
            &base,
        )?;
        let passed = r.passed;
        let tol = r.tolerance;
        Ok((self.certification(passed, Some(tol), serde_json::to_value(&r)?), vec![]))
    }

    fn regularity(&mut self) -> Result<(Certification, Vec<Table>)> {
        let exponents = [2.0];
        let coarse = {
            let s = self.solved()?;
            regularity_probe(&s.setup.domain, &s.scheme.limit, &s.setup.problem, &exponents)?
        };
        let fine = {
            let s = self.refined()?;
            regularity_probe(&s.setup.domain, &s.scheme.limit, &s.setup.problem, &exponents)?
        };
        let cmp = compare_regularity(&coarse, &fine, REFINEMENT_DRIFT)?;
        let mut table = Table::new("regularity", vec!["h", "p", "data_side", "solution_side"]);
        for t in [&coarse, &fine] {
            for i in 0..t.exponents.len() {
                table.rows.push(vec![t.h, t.exponents[i], t.data_side[i], t.solution_side[i]]);
            }
        }
        let passed = cmp.consistent;
        let values = json!({ "coarse": coarse, "refined": fine, "comparison": cmp });
        Ok((self.certification(passed, Some(REFINEMENT_DRIFT), values), vec![table]))
    }

    fn green_identities(&mut self) -> Result<(Certification, Vec<Table>)> {
        let seed = self.config.seed;
        let mut assembled = Vec::new();
        let mut first = None;
        for refined in [false, true] {
            let s = self.setup(refined)?;
            let samples = GreenSamples::random(&s.domain, GREEN_SOURCES, GREEN_TARGETS, GREEN_MIN_DELTA, seed);
            let (sources, targets) = samples.snap(&s.domain);
            assembled.push(green_symmetry_defect(&s.domain, &s.coeff, &sources, AdjointSource::Assembled)?);
            if !refined {
                let data = analysis::bump_corpus(&s.domain, 1, seed).remove(0);
                let recon = reconstruction_defect(&s.fact, &data, &targets, s.h())?;
                let transpose = green_symmetry_defect(&s.domain, &s.coeff, &sources, AdjointSource::Transpose)?;
                first = Some((recon, transpose));
            }
        }
        let (recon, transpose) = first.expect("coarse level evaluated");
        let decreasing = assembled[1] <= assembled[0] || assembled[1] <= SYMMETRY_ROUNDOFF;
        let passed = recon <= 1e-8 && transpose <= SYMMETRY_ROUNDOFF && decreasing;
        let values = json!({
            "reconstruction-defect": recon,
            "transpose-symmetry-defect": transpose,
            "assembled-symmetry-defect": assembled[0],
            "refined-assembled-symmetry-defect": assembled[1],
            "assembled-defect-decreasing": decreasing,
        });
        Ok((self.certification(passed, Some(1e-8), values), vec![]))
    }

    fn green_bounds(&mut self) -> Result<(Certification, Vec<Table>)> {
        let seed = self.config.seed;
        let identity_disk = identity_disk_radius(self.config).is_some();
        let mut results = Vec::new();
        let mut table = Table::new("green_bounds", vec!["h", "rmin", "rmax", "window", "pairs"]);
        for refined in [false, true] {
            let s = self.setup(refined)?;
            let samples = GreenSamples::random(&s.domain, GREEN_SOURCES, GREEN_TARGETS, GREEN_MIN_DELTA, seed);
            let (sources, targets) = samples.snap(&s.domain);
            let green = GreenTable::compute(&s.fact, OperatorKind::P, &sources, s.h())?;
            let bounds = green_bound_ratios(&s.domain, &green, &targets);
            let closed = if identity_disk { disk_closed_form_error(&s.domain, &green, &targets) } else { None };
            table.rows.push(vec![s.h(), bounds.rmin, bounds.rmax, bounds.window, bounds.pairs as f64]);
            results.push((bounds, closed, green.min_value()));
        }
        let window_drift = relative_change(results[0].0.window, results[1].0.window);
        let closed_ok = results[1].1.is_none_or(|e| e <= 0.05);
        let positive = results.iter().all(|r| r.0.rmin > 0.0);
        let passed = positive && window_drift <= REFINEMENT_DRIFT && closed_ok;
        let values = json!({
            "rmin": results[0].0.rmin,
            "rmax": results[0].0.rmax,
            "window": results[0].0.window,
            "refined": results[1].0,
            "window-drift": window_drift,
            "closed-form-error": results[0].1,
            "refined-closed-form-error": results[1].1,
            "min-green-value": results[0].2,
        });
        Ok((self.certification(passed, Some(REFINEMENT_DRIFT), values), vec![table]))
    }

    fn manufactured_error(&mut self) -> Result<(Certification, Vec<Table>)> {
        let coarse = {
            let s = self.solved()?;
            manufactured_error_of(s)?
        };
        let fine = {
            let s = self.refined()?;
            manufactured_error_of(s)?
        };
        let order = (coarse / fine).log2();
        let mut table = Table::new("manufactured_error", vec!["h", "max_error"]);
        table.rows.push(vec![self.h, coarse]);
        table.rows.push(vec![0.5 * self.h, fine]);
        let passed = order >= CONVERGENCE_ORDER;
        let values = json!({ "error": coarse, "refined-error": fine, "observed-order": order });
        Ok((self.certification(passed, Some(CONVERGENCE_ORDER), values), vec![table]))
    }
}

/// Required observed order of the manufactured convergence study.
pub const CONVERGENCE_ORDER: f64 = 1.8;

fn manufactured_error_of(s: &Solved) -> Result<f64> {
    let exact = s
        .setup
        .problem
        .exact_solution(&s.setup.domain)
        .ok_or_else(|| Error::config("problem.f-preset", "an exact solution needs the manufactured preset"))?;
    Ok(s.scheme.limit.sup_distance(&exact))
}

fn adjoint_solve(s: &Setup) -> Result<GridFunction> {
    let op = assemble_pstar(&s.domain, &s.coeff);
    Factorization::new(&op, SolverOptions::default())?.solve(&GridFunction::constant(s.domain.len(), 1.0))
}

fn identity_disk_radius(config: &ExperimentConfig) -> Option<f64> {
    match (&config.domain.shape, &config.coefficients) {
        (crate::geometry::Shape::Disk { radius }, CoefficientPreset::Identity) => Some(*radius),
        _ => None,
    }
}

fn relative_change(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn max_over_median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return 0.0;
    }
    let m = v.len();
    let median = if m % 2 == 1 { v[m / 2] } else { 0.5 * (v[m / 2 - 1] + v[m / 2]) };
    v[m - 1] / median
}

/// Final state of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Pass,
    CertificationFailure,
    ConfigError,
    SolverFailure,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Pass => 0,
            RunStatus::CertificationFailure => 1,
            RunStatus::ConfigError => 2,
            RunStatus::SolverFailure => 3,
        }
    }

    pub fn of_error(e: &Error) -> Self {
        match e {
            Error::Config { .. }
            | Error::InvalidDomain(_)
            | Error::GridTooCoarse { .. }
            | Error::InvalidCoefficients(_)
            | Error::EllipticityViolated { .. }
            | Error::InvalidProblem(_) => RunStatus::ConfigError,
            _ => RunStatus::SolverFailure,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ErrorEntry {
    pub kind: RunStatus,
    pub field: Option<String>,
    pub message: String,
}

impl ErrorEntry {
    pub fn from_error(e: &Error) -> Self {
        let field = match e {
            Error::Config { field, .. } => Some(field.clone()),
            _ => None,
        };
        Self { kind: RunStatus::of_error(e), field, message: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ReportHeader {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    /// Seconds since the Unix epoch; the only nondeterministic field.
    pub timestamp: u64,
}

impl ReportHeader {
    pub fn now() -> Self {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self {
            schema_version: SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunReport {
    pub header: ReportHeader,
    pub command: String,
    pub config: Option<ExperimentConfig>,
    pub status: RunStatus,
    pub scheme: Option<SchemeReport>,
    pub diagnostics: DiagnosticsReport,
    /// Results specific to the subcommand.
    pub summary: BTreeMap<String, Value>,
    pub error: Option<ErrorEntry>,
}

impl RunReport {
    pub fn new(command: &str, config: Option<ExperimentConfig>) -> Self {
        Self {
            header: ReportHeader::now(),
            command: command.to_string(),
            config,
            status: RunStatus::Pass,
            scheme: None,
            diagnostics: DiagnosticsReport::default(),
            summary: BTreeMap::new(),
            error: None,
        }
    }

    pub fn fail(&mut self, e: &Error) {
        let entry = ErrorEntry::from_error(e);
        self.status = entry.kind;
        self.error = Some(entry);
    }

    pub fn finish_certifications(&mut self) {
        if self.status == RunStatus::Pass && !self.diagnostics.all_passed() {
            self.status = RunStatus::CertificationFailure;
        }
    }

    pub fn write_json(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join("report.json");
        let mut out = BufWriter::new(fs::File::create(&path)?);
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)?;
        out.flush()?;
        Ok(path)
    }
}

/// Artifacts of a full run besides the report.
pub struct RunArtifacts {
    pub tables: Vec<Table>,
    pub solution: Option<(Domain, GridFunction)>,
}

/// Runs the scheme and every requested diagnostic.
pub fn run_solve(config: &ExperimentConfig, h: f64, report: &mut RunReport) -> Result<RunArtifacts> {
    let mut lab = Lab::new(config, h);
    let mut tables = Vec::new();
    lab.solved()?;
    let mut levels = Table::new("levels", vec!["n", "iterations", "residual", "damping", "min_u", "max_u", "monotonicity_defect", "min_increment", "energy_w", "nonlinear_ratio"]);
    for l in &lab.scheme().expect("solved").levels {
        levels.rows.push(vec![
            l.n as f64,
            l.iterations as f64,
            l.residual,
            l.damping,
            l.min_u,
            l.max_u,
            l.monotonicity_defect,
            l.min_increment,
            l.energy_w,
            l.nonlinear_ratio,
        ]);
    }
    tables.push(levels);
    for d in config.requested() {
        let (cert, t) = lab.evaluate(d)?;
        report.diagnostics.insert(&d.name(), cert);
        tables.extend(t);
    }
    let solved = lab.base.take().expect("solved");
    report.scheme = Some(solved.scheme.clone());
    Ok(RunArtifacts { tables, solution: Some((solved.setup.domain, solved.scheme.limit)) })
}

/// Green identities and bounds only.
pub fn run_green_verify(config: &ExperimentConfig, h: f64, report: &mut RunReport) -> Result<RunArtifacts> {
    let mut lab = Lab::new(config, h);
    let mut tables = Vec::new();
    for d in [Diagnostic::GreenIdentities, Diagnostic::GreenBounds] {
        let (cert, t) = lab.evaluate(d)?;
        report.diagnostics.insert(&d.name(), cert);
        tables.extend(t);
    }
    Ok(RunArtifacts { tables, solution: None })
}

/// Runs at `h` and `h/2` against the exact solution.
pub fn run_convergence_study(config: &ExperimentConfig, h: f64, report: &mut RunReport) -> Result<RunArtifacts> {
    let mut lab = Lab::new(config, h);
    let (cert, tables) = lab.evaluate(Diagnostic::ManufacturedError)?;
    report.summary.insert("observed-order".into(), cert.values["observed-order"].clone());
    report.diagnostics.insert(&Diagnostic::ManufacturedError.name(), cert);
    let solved = lab.base.take().expect("solved");
    report.scheme = Some(solved.scheme.clone());
    Ok(RunArtifacts { tables, solution: Some((solved.setup.domain, solved.scheme.limit)) })
}

pub fn run_uniqueness(config: &ExperimentConfig, h: f64, report: &mut RunReport) -> Result<RunArtifacts> {
    let mut lab = Lab::new(config, h);
    let (cert, tables) = lab.evaluate(Diagnostic::Uniqueness)?;
    report.summary.insert("max-pairwise".into(), cert.values["max_pairwise"].clone());
    report.diagnostics.insert(&Diagnostic::Uniqueness.name(), cert);
    Ok(RunArtifacts { tables, solution: None })
}

pub fn run_smallness(config: &ExperimentConfig, h: f64, report: &mut RunReport) -> Result<RunArtifacts> {
    let mut lab = Lab::new(config, h);
    let (cert, tables) = lab.evaluate(Diagnostic::Smallness)?;
    report.summary.insert("smallness".into(), cert.values["report"].clone());
    report.diagnostics.insert(&Diagnostic::Smallness.name(), cert);
    Ok(RunArtifacts { tables, solution: None })
}

/// Writes `solution.csv` and the tables into `dir`.
pub fn write_artifacts(dir: &Path, artifacts: &RunArtifacts) -> Result<()> {
    fs::create_dir_all(dir)?;
    if let Some((domain, u)) = &artifacts.solution {
        let out = BufWriter::new(fs::File::create(dir.join("solution.csv"))?);
        write_solution_csv(domain, u, out)?;
    }
    for t in &artifacts.tables {
        let out = BufWriter::new(fs::File::create(dir.join(format!("{}.csv", t.name)))?);
        t.write(out)?;
    }
    Ok(())
}
