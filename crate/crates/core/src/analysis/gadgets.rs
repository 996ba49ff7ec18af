//! Convex smoothings of the positive part used by the Kato arguments and the
//! approximation of the adjoint test function.

use serde::{Deserialize, Serialize};

/// Bound `C` in `Φ''_ε ≤ C / ε` that the ramp variant is built to respect.
pub const RAMP_CURVATURE_BOUND: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum SmoothingGadget {
    /// `((x³ + ε³)^{1/3} - ε) 1_{x ≥ 0}`.
    CubeRoot { eps: f64 },
    /// `C²` convex ramp: identity on `x ≥ 0`, constant `-ε` below `-2ε`,
    /// quartic blend between. `Φ'' ≤ 0.75/ε`.
    Ramp { eps: f64 },
    /// Standard mollifier of width `eps` applied to `max(0, t - 1)`.
    MollifiedHinge { eps: f64 },
}

impl SmoothingGadget {
    pub fn eps(&self) -> f64 {
        match *self {
            SmoothingGadget::CubeRoot { eps } | SmoothingGadget::Ramp { eps } | SmoothingGadget::MollifiedHinge { eps } => eps,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            SmoothingGadget::CubeRoot { eps } => {
                if x < 0.0 {
                    0.0
                } else {
                    (x.powi(3) + eps.powi(3)).cbrt() - eps
                }
            }
            SmoothingGadget::Ramp { eps } => {
                let l = 2.0 * eps;
                if x >= 0.0 {
                    x
                } else if x <= -l {
                    -eps
                } else {
                    let s = 1.0 + x / l;
                    -l * (0.5 - s.powi(3) + 0.5 * s.powi(4))
                }
            }
            SmoothingGadget::MollifiedHinge { eps } => hinge(eps, x).0,
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            SmoothingGadget::CubeRoot { eps } => {
                if x <= 0.0 {
                    0.0
                } else {
                    x * x / (x.powi(3) + eps.powi(3)).powf(2.0 / 3.0)
                }
            }
            SmoothingGadget::Ramp { eps } => {
                let l = 2.0 * eps;
                if x >= 0.0 {
                    1.0
                } else if x <= -l {
                    0.0
                } else {
                    let s = 1.0 + x / l;
                    3.0 * s * s - 2.0 * s.powi(3)
                }
            }
            SmoothingGadget::MollifiedHinge { eps } => hinge(eps, x).1,
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match *self {
            SmoothingGadget::CubeRoot { eps } => {
                if x <= 0.0 {
                    0.0
                } else {
                    2.0 * x * eps.powi(3) / (x.powi(3) + eps.powi(3)).powf(5.0 / 3.0)
                }
            }
            SmoothingGadget::Ramp { eps } => {
                let l = 2.0 * eps;
                if x >= 0.0 || x <= -l {
                    0.0
                } else {
                    let s = 1.0 + x / l;
                    6.0 * s * (1.0 - s) / l
                }
            }
            SmoothingGadget::MollifiedHinge { eps } => mollifier(eps, x - 1.0),
        }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

const QUADRATURE_POINTS: usize = 96;

fn rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: std::sync::OnceLock<(Vec<f64>, Vec<f64>)> = std::sync::OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(QUADRATURE_POINTS))
}

fn bump(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

/// `∫_{-1}^{1} exp(-1/(1-s²)) ds`.
fn bump_mass() -> f64 {
    static MASS: std::sync::OnceLock<f64> = std::sync::OnceLock::new();
    *MASS.get_or_init(|| integrate(-1.0, 1.0, bump))
}

fn integrate(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = rule();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.iter().zip(w).map(|(xi, wi)| wi * f(mid + half * xi)).sum::<f64>() * half
}

/// Standard mollifier of width `eps`.
pub fn mollifier(eps: f64, s: f64) -> f64 {
    bump(s / eps) / (eps * bump_mass())
}

/// Value and derivative of the mollified hinge at `t`.
fn hinge(eps: f64, t: f64) -> (f64, f64) {
    let z = t - 1.0;
    if z <= -eps {
        return (0.0, 0.0);
    }
    if z >= eps {
        // symmetric mollifier has zero mean
        return (z, 1.0);
    }
    // Φ(t) = ∫_{-1}^{z/ε} ρ(s)(z - εs) ds, Φ'(t) = ∫_{-1}^{z/ε} ρ(s) ds
    let b = z / eps;
    let m = bump_mass();
    let value = integrate(-1.0, b, |s| bump(s) * (z - eps * s)) / m;
    let slope = integrate(-1.0, b, bump) / m;
    (value, slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> impl Iterator<Item = f64> {
        (0..=4000).map(|i| -2.0 + i as f64 * 1e-3)
    }

    #[test]
    fn quadrature_integrates_polynomials() {
        let (x, w) = gauss_legendre(12);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((s - 2.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn all_variants_are_convex_and_lipschitz() {
        for g in [
            SmoothingGadget::CubeRoot { eps: 0.1 },
            SmoothingGadget::Ramp { eps: 0.1 },
            SmoothingGadget::MollifiedHinge { eps: 0.5 },
        ] {
            for x in grid() {
                assert!(g.second_derivative(x) >= 0.0);
                let d = g.derivative(x);
                assert!((0.0..=1.0 + 1e-12).contains(&d), "{g:?} at {x}: {d}");
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let step = 1e-5;
        for g in [
            SmoothingGadget::CubeRoot { eps: 0.3 },
            SmoothingGadget::Ramp { eps: 0.3 },
            SmoothingGadget::MollifiedHinge { eps: 0.5 },
        ] {
            for x in [-0.5, -0.2, 0.1, 0.4, 0.8, 1.1, 1.3] {
                let fd = (g.value(x + step) - g.value(x - step)) / (2.0 * step);
                assert!((fd - g.derivative(x)).abs() < 1e-7, "{g:?} at {x}");
                let fd2 = (g.derivative(x + step) - g.derivative(x - step)) / (2.0 * step);
                assert!((fd2 - g.second_derivative(x)).abs() < 1e-5, "{g:?} at {x}");
            }
        }
    }

    #[test]
    fn cube_root_approaches_positive_part() {
        let xs: Vec<f64> = (0..100).map(|i| -1.0 + 2.0 * (i as f64 + 0.5) / 100.0).collect();
        let mut last = f64::INFINITY;
        for eps in [1e-1, 1e-2, 1e-3] {
            let g = SmoothingGadget::CubeRoot { eps };
            let err = xs.iter().map(|&x| (g.value(x) - x.max(0.0)).abs()).fold(0.0, f64::max);
            assert!(err < last);
            last = err;
            let g_prev = SmoothingGadget::CubeRoot { eps: eps * 10.0 };
            for &x in &xs {
                let ind = if x > 0.0 { 1.0 } else { 0.0 };
                assert!((g.derivative(x) - ind).abs() <= (g_prev.derivative(x) - ind).abs() + 1e-15);
            }
        }
        assert!(last <= 1e-3);
        let g = SmoothingGadget::CubeRoot { eps: 0.2 };
        assert_eq!(g.value(0.0), 0.0);
        assert_eq!(g.derivative(0.0), 0.0);
    }

    #[test]
    fn ramp_contract() {
        for eps in [1e-3, 0.1, 1.0] {
            let g = SmoothingGadget::Ramp { eps };
            assert_eq!(g.value(0.0), 0.0);
            let mut max_curv = 0.0_f64;
            for i in 0..=10_000 {
                let x = -3.0 * eps + 4.0 * eps * i as f64 / 10_000.0;
                assert!(g.value(x) >= -eps - 1e-15);
                if x >= 0.0 {
                    assert_eq!(g.derivative(x), 1.0);
                }
                max_curv = max_curv.max(g.second_derivative(x));
            }
            assert!(max_curv * eps <= RAMP_CURVATURE_BOUND);
            assert!((max_curv * eps - 0.75).abs() < 1e-6);
        }
    }

    #[test]
    fn mollified_hinge_contract() {
        let g = SmoothingGadget::MollifiedHinge { eps: 0.5 };
        assert_eq!(g.value(0.4), 0.0);
        assert_eq!(g.value(2.0), 1.0);
        // continuity across the closed-form branches
        assert!((g.value(1.5 - 1e-12) - 0.5).abs() < 1e-9);
        assert!(g.value(0.5 + 1e-12).abs() < 1e-12);
        assert!((g.derivative(1.0) - 0.5).abs() < 1e-12);
        // Φ(t)/t nondecreasing and Φ(t) ≤ t
        let mut prev = 0.0;
        for i in 1..=3000 {
            let t = i as f64 * 1e-3;
            let q = g.value(t) / t;
            assert!(q >= prev - 1e-13 && g.value(t) <= t);
            prev = q;
        }
    }
}
