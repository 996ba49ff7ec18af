//! Discrete derivatives and quadratures of grid functions.

use crate::field::GridFunction;
use crate::geometry::{Arm, Domain};

/// Gradient at every node: central differences where both axis neighbors are
/// interior, one-sided toward the interior neighbor where one is, and the
/// unequal-arm difference with the zero boundary value otherwise.
pub fn gradient(domain: &Domain, u: &GridFunction) -> Vec<[f64; 2]> {
    let h = domain.h();
    (0..domain.len())
        .map(|k| {
            let arms = domain.arms(k);
            let mut g = [0.0; 2];
            for (axis, (plus, minus)) in [(Arm::East, Arm::West), (Arm::North, Arm::South)].into_iter().enumerate() {
                let (pi, pj) = plus.offset();
                let (mi, mj) = minus.offset();
                g[axis] = match (domain.neighbor(k, pi, pj), domain.neighbor(k, mi, mj)) {
                    (Some(p), Some(m)) => (u[p] - u[m]) / (2.0 * h),
                    (Some(p), None) => (u[p] - u[k]) / h,
                    (None, Some(m)) => (u[k] - u[m]) / h,
                    (None, None) => {
                        let hp = arms[plus as usize] * h;
                        let hm = arms[minus as usize] * h;
                        u[k] * (hp - hm) / (hp * hm)
                    }
                };
            }
            g
        })
        .collect()
}

/// `Σ_edges (u_a - u_b)² + Σ_boundary arms u²/θ`, the Dirichlet energy of the
/// piecewise-linear extension by zero. Equals `h² uᵀ(-Δₕ)u` for the symmetric stencil.
pub fn dirichlet_energy(domain: &Domain, u: &GridFunction) -> f64 {
    let mut energy = 0.0;
    for k in 0..domain.len() {
        let arms = domain.arms(k);
        for arm in Arm::ALL {
            let (di, dj) = arm.offset();
            match domain.neighbor(k, di, dj) {
                // each interior edge once
                Some(nb) if matches!(arm, Arm::East | Arm::North) => energy += (u[k] - u[nb]).powi(2),
                Some(_) => {}
                None => energy += u[k] * u[k] / arms[arm as usize],
            }
        }
    }
    energy
}

/// Second derivatives `(u_xx, u_xy, u_yy)` at nodes whose full 9-point stencil is interior.
pub fn hessian(domain: &Domain, u: &GridFunction) -> Vec<Option<[f64; 3]>> {
    let h2 = domain.h() * domain.h();
    (0..domain.len())
        .map(|k| {
            if !domain.has_full_stencil(k) {
                return None;
            }
            let at = |di, dj| u[domain.neighbor(k, di, dj).unwrap()];
            let uxx = (at(1, 0) - 2.0 * u[k] + at(-1, 0)) / h2;
            let uyy = (at(0, 1) - 2.0 * u[k] + at(0, -1)) / h2;
            let uxy = (at(1, 1) - at(-1, 1) - at(1, -1) + at(-1, -1)) / (4.0 * h2);
            Some([uxx, uxy, uyy])
        })
        .collect()
}

/// Frobenius norm of a Hessian `(u_xx, u_xy, u_yy)`.
pub fn hessian_norm(hs: [f64; 3]) -> f64 {
    (hs[0] * hs[0] + 2.0 * hs[1] * hs[1] + hs[2] * hs[2]).sqrt()
}

/// Midpoint quadrature `Σ f(u_k) h²`.
pub fn integrate_with(u: &GridFunction, h: f64, f: impl Fn(usize, f64) -> f64) -> f64 {
    u.iter().enumerate().map(|(k, &v)| f(k, v)).sum::<f64>() * h * h
}
