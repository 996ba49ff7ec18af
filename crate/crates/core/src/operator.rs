//! Finite-difference operators `-P` and `-P*` on a [`Domain`], and Dirichlet solves.
//!
//! Second derivatives along the axes use unequal-arm stencils with the zero
//! boundary value folded in, either in the symmetric normalization (default) or
//! the classical Shortley–Weller one. Mixed derivatives use the four-point
//! cross stencil where all diagonal neighbors are interior and an average of
//! one-sided quadrant formulas otherwise.

use std::io::Write;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::field::GridFunction;
use crate::geometry::{Arm, Domain};
use crate::sparse::{bicgstab, relative_residual, BandedLu, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    /// `-Σ aᵢⱼ ∂ᵢⱼ`.
    P,
    /// `-(P + 2 Div A·∇ + Div(Div A))`.
    PStar,
}

/// Differencing of the first-order terms of `-P*`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftScheme {
    #[default]
    Central,
    Upwind,
}

/// Second differences along an axis at nodes with a short arm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryStencil {
    /// Divided differences over the two unequal arms, normalized by `h`. Symmetric for
    /// constant coefficients.
    #[default]
    Symmetric,
    /// Classical Shortley–Weller normalization by the mean arm length. Exact on
    /// quadratics, not symmetric.
    ShortleyWeller,
}

/// Assembly switches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct StencilOptions {
    pub boundary: BoundaryStencil,
    pub drift: DriftScheme,
}

/// A sparse matrix over the interior nodes with the Dirichlet boundary eliminated.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    kind: OperatorKind,
    matrix: CsrMatrix,
    h: f64,
    dropped_mixed: usize,
}

impl DiscreteOperator {
    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Nodes where no one-sided mixed stencil fit and the mixed term was omitted.
    pub fn dropped_mixed_terms(&self) -> usize {
        self.dropped_mixed
    }

    pub fn apply(&self, u: &GridFunction) -> GridFunction {
        GridFunction::from_vec(self.matrix.mul_vec(u.values()))
    }

    pub fn apply_transposed(&self, u: &GridFunction) -> GridFunction {
        GridFunction::from_vec(self.matrix.mul_vec_transposed(u.values()))
    }

    /// Off-diagonals nonpositive, positive diagonal, nonnegative row sums.
    pub fn is_m_matrix(&self) -> bool {
        (0..self.dim()).all(|i| {
            let mut diag = 0.0;
            let mut off = 0.0;
            for (c, v) in self.matrix.row(i) {
                if c == i {
                    diag = v;
                } else if v > 0.0 {
                    return false;
                } else {
                    off += v;
                }
            }
            diag > 0.0 && diag + off >= -1e-9 * diag
        })
    }

    pub fn write_triplets<W: Write>(&self, out: W) -> std::io::Result<()> {
        self.matrix.write_triplets(out)
    }
}

/// Assembles `-Pₕ`.
pub fn assemble_p(domain: &Domain, coeff: &CoefficientField) -> DiscreteOperator {
    assemble(domain, coeff, OperatorKind::P, StencilOptions::default())
}

/// Assembles `-P*ₕ` from the analytic nondivergence form of the adjoint.
pub fn assemble_pstar(domain: &Domain, coeff: &CoefficientField) -> DiscreteOperator {
    assemble(domain, coeff, OperatorKind::PStar, StencilOptions::default())
}

pub fn assemble(domain: &Domain, coeff: &CoefficientField, kind: OperatorKind, options: StencilOptions) -> DiscreteOperator {
    assert_eq!(domain.len(), coeff.len(), "domain and coefficients must share the grid");
    if coeff.max_mixed_ratio() > 0.5 {
        warn!(
            "|a12| / min(a11, a22) reaches {:.3}; the mixed stencil may violate the discrete maximum principle",
            coeff.max_mixed_ratio()
        );
    }
    let h = domain.h();
    let rows: Vec<(Vec<(usize, f64)>, bool)> =
        (0..domain.len()).into_par_iter().map(|k| assemble_row(domain, coeff, kind, options, k)).collect();
    let dropped_mixed = rows.iter().filter(|(_, d)| *d).count();
    let matrix = CsrMatrix::from_rows(domain.len(), rows.into_iter().map(|(r, _)| r).collect());
    DiscreteOperator { kind, matrix, h, dropped_mixed }
}

fn assemble_row(
    domain: &Domain,
    coeff: &CoefficientField,
    kind: OperatorKind,
    options: StencilOptions,
    k: usize,
) -> (Vec<(usize, f64)>, bool) {
    let h = domain.h();
    let pc = coeff.at(k);
    let [a11, a12, a22] = pc.a;
    let arms = domain.arms(k);
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(9);
    let mut center = 0.0;

    // -a u_xx and -a u_yy with unequal arms
    for (a, plus, minus) in [(a11, Arm::East, Arm::West), (a22, Arm::North, Arm::South)] {
        let hp = arms[plus as usize] * h;
        let hm = arms[minus as usize] * h;
        let span = match options.boundary {
            BoundaryStencil::Symmetric => h,
            BoundaryStencil::ShortleyWeller => 0.5 * (hp + hm),
        };
        center += a * (1.0 / hp + 1.0 / hm) / span;
        for (arm, len) in [(plus, hp), (minus, hm)] {
            let (di, dj) = arm.offset();
            if let Some(nb) = domain.neighbor(k, di, dj) {
                row.push((nb, -a / (len * span)));
            }
        }
    }

    // -2 a12 u_xy
    let mut dropped = false;
    if a12 != 0.0 {
        let diag: Vec<Option<usize>> =
            [(1, 1), (-1, 1), (1, -1), (-1, -1)].iter().map(|&(di, dj)| domain.neighbor(k, di, dj)).collect();
        if diag.iter().all(Option::is_some) {
            let w = a12 / (2.0 * h * h);
            row.push((diag[0].unwrap(), -w));
            row.push((diag[1].unwrap(), w));
            row.push((diag[2].unwrap(), w));
            row.push((diag[3].unwrap(), -w));
        } else {
            let mut quadrants = Vec::new();
            for (sx, sy) in [(1, 1), (-1, 1), (1, -1), (-1, -1)] {
                if let (Some(c), Some(ex), Some(ey)) =
                    (domain.neighbor(k, sx, sy), domain.neighbor(k, sx, 0), domain.neighbor(k, 0, sy))
                {
                    quadrants.push(((sx * sy) as f64, c, ex, ey));
                }
            }
            if quadrants.is_empty() {
                dropped = true;
            } else {
                let scale = -2.0 * a12 / (h * h * quadrants.len() as f64);
                for (sign, c, ex, ey) in quadrants {
                    let w = scale * sign;
                    row.push((c, w));
                    row.push((ex, -w));
                    row.push((ey, -w));
                    center += w;
                }
            }
        }
    }

    if kind == OperatorKind::PStar {
        // -2 Div A · ∇v - Div(Div A) v
        for (b, plus, minus) in
            [(2.0 * pc.div_a[0], Arm::East, Arm::West), (2.0 * pc.div_a[1], Arm::North, Arm::South)]
        {
            if b == 0.0 {
                continue;
            }
            let hp = arms[plus as usize] * h;
            let hm = arms[minus as usize] * h;
            let (pi, pj) = plus.offset();
            let (mi, mj) = minus.offset();
            let np = domain.neighbor(k, pi, pj);
            let nm = domain.neighbor(k, mi, mj);
            let (wp, w0, wm) = match options.drift {
                DriftScheme::Central => (hm / (hp * (hp + hm)), (hp - hm) / (hp * hm), -hp / (hm * (hp + hm))),
                DriftScheme::Upwind if b > 0.0 => (1.0 / hp, -1.0 / hp, 0.0),
                DriftScheme::Upwind => (0.0, 1.0 / hm, -1.0 / hm),
            };
            center -= b * w0;
            if let Some(n) = np {
                row.push((n, -b * wp));
            }
            if let Some(n) = nm {
                row.push((n, -b * wm));
            }
        }
        center -= pc.divdiv_a;
    }

    row.push((k, center));
    (row, dropped)
}

/// Tolerances for [`Factorization`] solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SolverOptions {
    /// Bound on `‖b - A x‖₂ / ‖b‖₂`.
    pub tol: f64,
    /// Iteration cap of the Krylov fallback.
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 20_000 }
    }
}

/// A reusable LU factorization of a [`DiscreteOperator`].
#[derive(Debug, Clone)]
pub struct Factorization {
    matrix: CsrMatrix,
    lu: Option<BandedLu>,
    options: SolverOptions,
}

impl Factorization {
    pub fn new(op: &DiscreteOperator, options: SolverOptions) -> Result<Self> {
        Self::from_matrix(op.matrix().clone(), options)
    }

    /// Falls back to iterative solves when the direct factorization breaks down.
    pub fn from_matrix(matrix: CsrMatrix, options: SolverOptions) -> Result<Self> {
        let lu = match BandedLu::factor(&matrix) {
            Ok(lu) => Some(lu),
            Err(Error::SingularMatrix { condition }) => {
                warn!("direct factorization failed (condition estimate {condition:.3e}); using BiCGSTAB");
                let probe = vec![1.0; matrix.dim()];
                bicgstab(&matrix, &probe, None, options.tol, options.max_iter)
                    .map_err(|_| Error::SingularMatrix { condition })?;
                None
            }
            Err(e) => return Err(e),
        };
        Ok(Self { matrix, lu, options })
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn is_direct(&self) -> bool {
        self.lu.is_some()
    }

    /// Estimated 1-norm condition number.
    pub fn condition_estimate(&self) -> f64 {
        match &self.lu {
            Some(lu) => self.matrix.norm_1() * lu.inverse_norm1_estimate(),
            None => f64::INFINITY,
        }
    }

    /// Solves `A x = rhs`.
    pub fn solve(&self, rhs: &GridFunction) -> Result<GridFunction> {
        self.solve_impl(rhs, false)
    }

    /// Solves `Aᵀ x = rhs`.
    pub fn solve_transposed(&self, rhs: &GridFunction) -> Result<GridFunction> {
        self.solve_impl(rhs, true)
    }

    fn solve_impl(&self, rhs: &GridFunction, transposed: bool) -> Result<GridFunction> {
        let n = self.dim();
        let b = GridFunction::checked(rhs.values().to_vec(), n)?.into_vec();
        if b.iter().all(|v| *v == 0.0) {
            return Ok(GridFunction::zeros(n));
        }
        let transposed_matrix;
        let a = if transposed {
            transposed_matrix = self.matrix.transpose();
            &transposed_matrix
        } else {
            &self.matrix
        };
        let mut x = match &self.lu {
            Some(lu) => {
                let mut x = if transposed { lu.solve_transposed(&b) } else { lu.solve(&b) };
                for _ in 0..3 {
                    if relative_residual(a, &x, &b) <= self.options.tol {
                        break;
                    }
                    let ax = a.mul_vec(&x);
                    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
                    let d = if transposed { lu.solve_transposed(&r) } else { lu.solve(&r) };
                    x.iter_mut().zip(&d).for_each(|(xi, di)| *xi += di);
                }
                x
            }
            None => bicgstab(a, &b, None, self.options.tol, self.options.max_iter)?,
        };
        if relative_residual(a, &x, &b) > self.options.tol {
            x = bicgstab(a, &b, Some(&x), self.options.tol, self.options.max_iter)?;
        }
        GridFunction::checked(x, n)
    }
}

/// Solves `op · u = rhs` to relative residual `1e-10`.
pub fn solve_dirichlet(op: &DiscreteOperator, rhs: &GridFunction) -> Result<GridFunction> {
    Factorization::new(op, SolverOptions::default())?.solve(rhs)
}

/// Euclidean inner product of grid functions weighted by `h²`.
pub fn inner(u: &GridFunction, v: &GridFunction, h: f64) -> f64 {
    u.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>() * h * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{build_coefficients, CoefficientPreset};
    use crate::geometry::{build_domain, DomainSpec};
    use std::f64::consts::FRAC_PI_2;

    fn disk(h: f64, preset: CoefficientPreset) -> (Domain, CoefficientField) {
        let d = build_domain(&DomainSpec::disk(1.0, h)).unwrap();
        let c = build_coefficients(&preset, &d).unwrap();
        (d, c)
    }

    fn cos_solution(p: [f64; 2]) -> f64 {
        (FRAC_PI_2 * (p[0] * p[0] + p[1] * p[1])).cos()
    }

    fn cos_rhs(p: [f64; 2]) -> f64 {
        let r2 = p[0] * p[0] + p[1] * p[1];
        let w = FRAC_PI_2;
        4.0 * w * (w * r2).sin() + 4.0 * w * w * r2 * (w * r2).cos()
    }

    fn poisson_error(m: f64, boundary: BoundaryStencil, exact: fn([f64; 2]) -> f64, rhs: fn([f64; 2]) -> f64) -> f64 {
        let (d, c) = disk(1.0 / m, CoefficientPreset::Identity);
        let op = assemble(&d, &c, OperatorKind::P, StencilOptions { boundary, ..Default::default() });
        let u = solve_dirichlet(&op, &d.grid_function(rhs)).unwrap();
        u.sup_distance(&d.grid_function(exact))
    }

    #[test]
    fn quadratic_convergence() {
        for boundary in [BoundaryStencil::Symmetric, BoundaryStencil::ShortleyWeller] {
            let e: Vec<f64> = [16.0, 32.0, 64.0].iter().map(|&m| poisson_error(m, boundary, cos_solution, cos_rhs)).collect();
            assert!(e[0] / e[1] >= 3.5 && e[1] / e[2] >= 3.5, "{boundary:?}: {e:?}");
        }
    }

    #[test]
    fn classical_stencil_exact_on_paraboloid() {
        let e = poisson_error(32.0, BoundaryStencil::ShortleyWeller, |p| (1.0 - p[0] * p[0] - p[1] * p[1]) / 4.0, |_| 1.0);
        assert!(e < 1e-12);
    }

    #[test]
    fn five_point_row_in_interior() {
        let h = 1.0 / 16.0;
        let (d, c) = disk(h, CoefficientPreset::Identity);
        let op = assemble_p(&d, &c);
        let k = d.index_of(0, 0).unwrap();
        let row: Vec<(usize, f64)> = op.matrix().row(k).collect();
        assert_eq!(row.len(), 5);
        for (col, v) in row {
            let expected = if col == k { 4.0 / (h * h) } else { -1.0 / (h * h) };
            assert!((v - expected).abs() < 1e-9 * expected.abs());
        }
    }

    #[test]
    fn quadratics_are_exact() {
        let (d, c) = disk(1.0 / 16.0, CoefficientPreset::DiagonalSine { eps: 0.3 });
        let op = assemble_p(&d, &c);
        // x₁² with the boundary value folded in only matches at full-stencil nodes
        let u = d.grid_function(|p| p[0] * p[0]);
        let pu = op.apply(&u);
        for k in (0..d.len()).filter(|&k| d.has_full_stencil(k)) {
            assert!((pu[k] + 2.0 * c.at(k).a[0]).abs() < 1e-9, "node {k}");
        }
    }

    #[test]
    fn cross_stencil_exact_on_bilinear() {
        let d = build_domain(&DomainSpec::disk(1.0, 1.0 / 16.0)).unwrap();
        let mut c = build_coefficients(&CoefficientPreset::Identity, &d).unwrap();
        c.override_points(|p| p.a = [1.0, 0.25, 1.0]);
        let op = assemble_p(&d, &c);
        let u = d.grid_function(|p| p[0] * p[1]);
        let pu = op.apply(&u);
        for k in (0..d.len()).filter(|&k| d.has_full_stencil(k)) {
            assert!((pu[k] + 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn pstar_equals_p_for_identity() {
        let (d, c) = disk(1.0 / 16.0, CoefficientPreset::Identity);
        assert_eq!(assemble_p(&d, &c).matrix(), assemble_pstar(&d, &c).matrix());
        assert!(assemble_p(&d, &c).matrix().asymmetry() < 1e-9);
    }

    #[test]
    fn pstar_of_one_is_minus_divdiv() {
        let eps = 0.3;
        let (d, c) = disk(1.0 / 16.0, CoefficientPreset::DiagonalSine { eps });
        let op = assemble_pstar(&d, &c);
        let r = op.apply(&GridFunction::constant(d.len(), 1.0));
        for k in (0..d.len()).filter(|&k| d.has_full_stencil(k)) {
            let x = d.point(k)[0];
            // Div(Div A) = -ε sin x₁
            assert!((r[k] - eps * x.sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn poisson_on_disk() {
        let h = 1.0 / 32.0;
        let (d, c) = disk(h, CoefficientPreset::Identity);
        let op = assemble_p(&d, &c);
        let u = solve_dirichlet(&op, &GridFunction::constant(d.len(), 1.0)).unwrap();
        let exact = d.grid_function(|p| (1.0 - p[0] * p[0] - p[1] * p[1]) / 4.0);
        assert!(u.sup_distance(&exact) < h * h);
        assert!(u.min() > 0.0);
        assert!(op.is_m_matrix());
        let z = solve_dirichlet(&op, &GridFunction::zeros(d.len())).unwrap();
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn transpose_solve_matches_transposed_matrix() {
        let (d, c) = disk(1.0 / 16.0, CoefficientPreset::RotationMix { eps: 0.2 });
        let op = assemble_p(&d, &c);
        let f = Factorization::new(&op, SolverOptions::default()).unwrap();
        let b = d.grid_function(|p| 1.0 + p[0]);
        let x = f.solve_transposed(&b).unwrap();
        assert!(relative_residual(&op.matrix().transpose(), x.values(), b.values()) < 1e-10);
        assert!(f.condition_estimate() > 1.0);
    }

    #[test]
    fn upwind_drift_is_monotone() {
        let (d, c) = disk(1.0 / 16.0, CoefficientPreset::DiagonalSine { eps: 0.5 });
        let options = StencilOptions { drift: DriftScheme::Upwind, ..Default::default() };
        let op = assemble(&d, &c, OperatorKind::PStar, options);
        // Div(Div A) = -ε sin x₁ can be positive, so only the off-diagonal signs are checked
        for i in 0..op.dim() {
            for (col, v) in op.matrix().row(i) {
                assert!(col == i || v <= 0.0);
            }
        }
    }
}
