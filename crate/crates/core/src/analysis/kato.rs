//! Discrete Kato-type inequalities.

use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientField;
use crate::discrete::gradient;
use crate::error::{Error, Result};
use crate::field::GridFunction;
use crate::geometry::Domain;
use crate::operator::{DiscreteOperator, OperatorKind};

/// Relative bound applied to every Kato residual.
pub const KATO_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KatoStrongReport {
    /// `h² Σ φ [(-Pₕ u₊) - 1_{u>0} F]` per test field.
    pub residuals: Vec<f64>,
    /// `h² Σ φ (|F| + |Pₕ| u₊)` per test field, `|Pₕ|` taken entrywise.
    pub scales: Vec<f64>,
    /// Weak form with central-difference gradients, per test field.
    pub weak_form: Vec<f64>,
    /// `max residual / scale` (zero for vanishing scales).
    pub max_relative: f64,
    pub passed: bool,
}

fn check_test_field(domain: &Domain, phi: &GridFunction) -> Result<()> {
    if phi.len() != domain.len() {
        return Err(Error::DimensionMismatch { expected: domain.len(), got: phi.len() });
    }
    for k in 0..domain.len() {
        if phi[k] < 0.0 || !phi[k].is_finite() {
            return Err(Error::InvalidProblem(format!("test field negative or non-finite at node {k}")));
        }
        if phi[k] != 0.0 && domain.is_boundary_adjacent(k) {
            return Err(Error::InvalidProblem(format!("test field nonzero at boundary-adjacent node {k}")));
        }
    }
    Ok(())
}

/// Kato inequality `-P(u₊) ≤ 1_{u>0} F` tested against nonnegative fields,
/// where `F` is the data of `u`. `op` must be `-Pₕ`.
pub fn kato_residual_strong(
    op: &DiscreteOperator,
    domain: &Domain,
    coeff: &CoefficientField,
    u: &GridFunction,
    f: &GridFunction,
    phis: &[GridFunction],
) -> Result<KatoStrongReport> {
    if op.kind() != OperatorKind::P {
        return Err(Error::InvalidProblem("strong Kato residual needs the operator -P".into()));
    }
    let h2 = domain.h() * domain.h();
    let u_plus = u.map(|s| s.max(0.0));
    let p_plus = op.apply(&u_plus);
    // magnitude of the terms cancelled in each row of -Pₕu₊
    let row_mass: Vec<f64> =
        (0..domain.len()).map(|k| op.matrix().row(k).map(|(j, m)| m.abs() * u_plus[j]).sum()).collect();
    let grad = gradient(domain, &u_plus);
    let mut report = KatoStrongReport { residuals: vec![], scales: vec![], weak_form: vec![], max_relative: 0.0, passed: true };
    for phi in phis {
        check_test_field(domain, phi)?;
        let grad_phi = gradient(domain, phi);
        let (mut residual, mut scale, mut weak) = (0.0, 0.0, 0.0);
        for k in 0..domain.len() {
            let active = if u[k] > 0.0 { f[k] } else { 0.0 };
            residual += phi[k] * (p_plus[k] - active);
            scale += phi[k] * (f[k].abs() + row_mass[k]);
            let c = coeff.at(k);
            let flux = [c.a[0] * grad[k][0] + c.a[1] * grad[k][1], c.a[1] * grad[k][0] + c.a[2] * grad[k][1]];
            let drift = c.div_a[0] * grad[k][0] + c.div_a[1] * grad[k][1];
            weak += flux[0] * grad_phi[k][0] + flux[1] * grad_phi[k][1] + drift * phi[k] - active * phi[k];
        }
        let (residual, scale) = (residual * h2, scale * h2);
        if residual > KATO_TOLERANCE * scale {
            report.passed = false;
        }
        if scale > 0.0 {
            report.max_relative = report.max_relative.max(residual / scale);
        }
        report.residuals.push(residual);
        report.scales.push(scale);
        report.weak_form.push(weak * h2);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KatoVeryWeak {
    /// `-h² Σ (u-v)₊ P*ₕφ - h² Σ_{u≥v} φ (F_u - F_v)`.
    pub residual: f64,
    /// `h² Σ φ (|F_u| + |F_v|) + h² Σ |u-v| |P*ₕφ|`.
    pub scale: f64,
}

impl KatoVeryWeak {
    pub fn passed(&self) -> bool {
        self.residual <= KATO_TOLERANCE * self.scale
    }
}

/// Kato inequality for the difference of two solutions, tested against `φ`
/// without compact support. `pstar` must be `-P*ₕ`.
pub fn kato_residual_very_weak(
    pstar: &DiscreteOperator,
    u: &GridFunction,
    v: &GridFunction,
    f_u: &GridFunction,
    f_v: &GridFunction,
    phi: &GridFunction,
) -> Result<KatoVeryWeak> {
    if pstar.kind() != OperatorKind::PStar {
        return Err(Error::InvalidProblem("very weak Kato residual needs the operator -P*".into()));
    }
    let n = pstar.dim();
    for g in [u, v, f_u, f_v, phi] {
        if g.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: g.len() });
        }
    }
    let h2 = pstar.h() * pstar.h();
    let adj = pstar.apply(phi);
    let (mut residual, mut scale) = (0.0, 0.0);
    for k in 0..n {
        let w = u[k] - v[k];
        residual += w.max(0.0) * adj[k];
        if w >= 0.0 {
            residual -= phi[k] * (f_u[k] - f_v[k]);
        }
        scale += phi[k] * (f_u[k].abs() + f_v[k].abs()) + w.abs() * adj[k].abs();
    }
    Ok(KatoVeryWeak { residual: residual * h2, scale: scale * h2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{bump_field, random_bumps};
    use crate::coefficients::{build_coefficients, CoefficientPreset};
    use crate::geometry::{build_domain, DomainSpec};
    use crate::operator::{assemble_p, assemble_pstar, solve_dirichlet};

    fn setup() -> (Domain, CoefficientField) {
        let d = build_domain(&DomainSpec::disk(1.0, 1.0 / 32.0)).unwrap();
        let c = build_coefficients(&CoefficientPreset::Identity, &d).unwrap();
        (d, c)
    }

    fn test_fields(d: &Domain, count: usize, seed: u64) -> Vec<GridFunction> {
        random_bumps(d, count, (0.1, 0.4), 2.0 * d.h(), seed).iter().map(|b| bump_field(d, std::slice::from_ref(b))).collect()
    }

    #[test]
    fn shifted_solution_satisfies_inequality() {
        let (d, c) = setup();
        let op = assemble_p(&d, &c);
        let one = GridFunction::constant(d.len(), 1.0);
        let u = solve_dirichlet(&op, &one).unwrap().map(|s| s - 0.1);
        assert!(u.min() < 0.0 && u.max() > 0.0);
        let phis = test_fields(&d, 10, 3);
        let r = kato_residual_strong(&op, &d, &c, &u, &one, &phis).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.residuals.iter().any(|&x| x < 0.0));
    }

    #[test]
    fn nonnegative_solution_has_small_weak_defect() {
        let (d, c) = setup();
        let op = assemble_p(&d, &c);
        let one = GridFunction::constant(d.len(), 1.0);
        let u = solve_dirichlet(&op, &one).unwrap();
        let phis = test_fields(&d, 5, 4);
        let r = kato_residual_strong(&op, &d, &c, &u, &one, &phis).unwrap();
        assert!(r.passed);
        for (res, scale) in r.residuals.iter().zip(&r.scales) {
            assert!(res.abs() <= 1e-10 * scale);
        }
        for (weak, scale) in r.weak_form.iter().zip(&r.scales) {
            assert!(weak.abs() <= 0.05 * scale, "{weak} vs {scale}");
        }
    }

    #[test]
    fn understated_data_is_detected() {
        let (d, c) = setup();
        let op = assemble_p(&d, &c);
        let one = GridFunction::constant(d.len(), 1.0);
        let u = solve_dirichlet(&op, &one).unwrap();
        let half = GridFunction::constant(d.len(), 0.5);
        let r = kato_residual_strong(&op, &d, &c, &u, &half, &test_fields(&d, 3, 8)).unwrap();
        assert!(!r.passed);
        assert!(r.max_relative > 1e3 * KATO_TOLERANCE, "{}", r.max_relative);
    }

    #[test]
    fn zero_test_field_gives_zero() {
        let (d, c) = setup();
        let op = assemble_p(&d, &c);
        let u = d.grid_function(|p| p[0]);
        let r = kato_residual_strong(&op, &d, &c, &u, &u, &[GridFunction::zeros(d.len())]).unwrap();
        assert_eq!(r.residuals, vec![0.0]);
        assert!(r.passed);
    }

    #[test]
    fn rejects_bad_test_fields() {
        let (d, c) = setup();
        let op = assemble_p(&d, &c);
        let u = GridFunction::zeros(d.len());
        let neg = GridFunction::constant(d.len(), -1.0);
        assert!(kato_residual_strong(&op, &d, &c, &u, &u, &[neg]).is_err());
        let full = GridFunction::constant(d.len(), 1.0);
        assert!(kato_residual_strong(&op, &d, &c, &u, &u, &[full]).is_err());
    }

    #[test]
    fn ordered_pair_passes_very_weak() {
        let (d, c) = setup();
        let p = assemble_p(&d, &c);
        let ps = assemble_pstar(&d, &c);
        let f1 = GridFunction::constant(d.len(), 1.0);
        let f2 = GridFunction::constant(d.len(), 2.0);
        let u = solve_dirichlet(&p, &f1).unwrap();
        let v = solve_dirichlet(&p, &f2).unwrap();
        let xi = solve_dirichlet(&ps, &f1).unwrap();
        let r = kato_residual_very_weak(&ps, &u, &v, &f1, &f2, &xi).unwrap();
        assert!(r.residual.abs() < 1e-14 && r.passed());
        let r = kato_residual_very_weak(&ps, &v, &u, &f2, &f1, &xi).unwrap();
        assert!(r.passed(), "{r:?}");
    }
}
