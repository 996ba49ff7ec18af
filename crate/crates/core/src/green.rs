//! Sampled discrete Green functions of `-Pₕ` and `-P*ₕ`.
//!
//! Column `G(·, y)` solves `-Pₕ g = e_y / h²`, so `u(x) = Σ_y G(x, y) F(y) h²`.
//! Rows `G(x, ·)` come from transpose solves with the same factorization.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientField;
use crate::error::Result;
use crate::field::GridFunction;
use crate::geometry::{Domain, Shape};
use crate::operator::{assemble_p, assemble_pstar, Factorization, OperatorKind, SolverOptions};

/// Sampled Green columns.
#[derive(Debug, Clone)]
pub struct GreenTable {
    pub kind: OperatorKind,
    pub sources: Vec<usize>,
    pub columns: Vec<GridFunction>,
}

impl GreenTable {
    pub fn compute(fact: &Factorization, kind: OperatorKind, sources: &[usize], h: f64) -> Result<Self> {
        Ok(Self { kind, sources: sources.to_vec(), columns: green_columns(fact, sources, h)? })
    }

    pub fn column(&self, source: usize) -> Option<&GridFunction> {
        self.sources.iter().position(|&s| s == source).map(|i| &self.columns[i])
    }

    pub fn min_value(&self) -> f64 {
        self.columns.iter().map(GridFunction::min).fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.columns.iter().map(GridFunction::max).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Writes `source_index,node_index,value` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "source_index,node_index,value")?;
        for (s, col) in self.sources.iter().zip(&self.columns) {
            for (k, v) in col.iter().enumerate() {
                writeln!(out, "{s},{k},{v:e}")?;
            }
        }
        Ok(())
    }
}

fn unit_source(n: usize, y: usize, h: f64) -> GridFunction {
    let mut e = GridFunction::zeros(n);
    e[y] = 1.0 / (h * h);
    e
}

/// `G(·, y)` for each source `y`.
pub fn green_columns(fact: &Factorization, sources: &[usize], h: f64) -> Result<Vec<GridFunction>> {
    let n = fact.dim();
    sources.par_iter().map(|&y| fact.solve(&unit_source(n, y, h))).collect()
}

/// `G(x, ·)` for each target `x`.
pub fn green_rows(fact: &Factorization, targets: &[usize], h: f64) -> Result<Vec<GridFunction>> {
    let n = fact.dim();
    targets.par_iter().map(|&x| fact.solve_transposed(&unit_source(n, x, h))).collect()
}

/// One Green column of `-Pₕ` with a fresh factorization.
pub fn green_column(domain: &Domain, coeff: &CoefficientField, y: usize) -> Result<GridFunction> {
    let fact = Factorization::new(&assemble_p(domain, coeff), SolverOptions::default())?;
    Ok(green_columns(&fact, &[y], domain.h())?.remove(0))
}

/// Max relative deviation between `Σ_y G(x, y) F(y) h²` and the direct solve at `targets`.
pub fn reconstruction_defect(fact: &Factorization, rhs: &GridFunction, targets: &[usize], h: f64) -> Result<f64> {
    let u = fact.solve(rhs)?;
    let rows = green_rows(fact, targets, h)?;
    let scale = u.max_abs().max(f64::MIN_POSITIVE);
    Ok(targets
        .iter()
        .zip(&rows)
        .map(|(&x, row)| {
            let quad: f64 = row.iter().zip(rhs.iter()).map(|(g, f)| g * f).sum::<f64>() * h * h;
            (quad - u[x]).abs() / scale
        })
        .fold(0.0, f64::max))
}

/// Source of the adjoint kernel in [`green_symmetry_defect`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdjointSource {
    /// Columns of the independently assembled `-P*ₕ`.
    Assembled,
    /// Transpose solves with `-Pₕ`.
    Transpose,
}

/// `max |G*(x, y) - G(y, x)| / max |G|` over `x, y ∈ nodes`.
pub fn green_symmetry_defect(
    domain: &Domain,
    coeff: &CoefficientField,
    nodes: &[usize],
    source: AdjointSource,
) -> Result<f64> {
    let h = domain.h();
    let p = Factorization::new(&assemble_p(domain, coeff), SolverOptions::default())?;
    let g = green_columns(&p, nodes, h)?;
    let g_star = match source {
        AdjointSource::Assembled => {
            let ps = Factorization::new(&assemble_pstar(domain, coeff), SolverOptions::default())?;
            green_columns(&ps, nodes, h)?
        }
        AdjointSource::Transpose => green_rows(&p, nodes, h)?,
    };
    let scale = g.iter().map(GridFunction::max_abs).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut worst = 0.0_f64;
    for (iy, _) in nodes.iter().enumerate() {
        for (ix, &x) in nodes.iter().enumerate() {
            // G*(x, y) against G(y, x)
            let y = nodes[iy];
            worst = worst.max((g_star[iy][x] - g[ix][y]).abs());
        }
    }
    Ok(worst / scale)
}

/// Continuous sample points, independent of the grid so that runs at
/// different resolutions probe the same pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenSamples {
    pub sources: Vec<[f64; 2]>,
    pub targets: Vec<[f64; 2]>,
}

impl GreenSamples {
    /// Uniform points of the domain with distance to the boundary at least `min_delta`.
    pub fn random(domain: &Domain, n_sources: usize, n_targets: usize, min_delta: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = domain.shape();
        let center = domain.spec().center;
        let (hx, hy) = shape.half_extents();
        let mut draw = |count: usize| {
            let mut pts = Vec::with_capacity(count);
            while pts.len() < count {
                let local = [rng.gen_range(-hx..hx), rng.gen_range(-hy..hy)];
                if shape.signed_distance(local) >= min_delta {
                    pts.push([center[0] + local[0], center[1] + local[1]]);
                }
            }
            pts
        };
        let sources = draw(n_sources);
        let targets = draw(n_targets);
        Self { sources, targets }
    }

    /// Snaps to nodes; drops points with no node within one grid spacing.
    pub fn snap(&self, domain: &Domain) -> (Vec<usize>, Vec<usize>) {
        let snap = |pts: &[[f64; 2]]| {
            let mut v: Vec<usize> = pts.iter().filter_map(|&p| domain.nearest_node(p)).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        (snap(&self.sources), snap(&self.targets))
    }
}

/// Two-sided comparison of `G` with `ln(1 + δ(x)δ(y)/|x - y|²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenBounds {
    pub rmin: f64,
    pub rmax: f64,
    /// `rmax / rmin`.
    pub window: f64,
    pub pairs: usize,
    /// Pairs within `5h` or with a vanishing comparator.
    pub excluded: usize,
}

/// Logarithmic comparator of the two-sided planar estimate.
pub fn log_comparator(x: [f64; 2], y: [f64; 2], delta_x: f64, delta_y: f64) -> f64 {
    let d2 = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
    (delta_x * delta_y / d2).ln_1p()
}

/// Ratio `G(x, y) / comparator` for one pair, with `column = G(·, y)`.
pub fn green_ratio(domain: &Domain, column: &GridFunction, x: usize, y: usize) -> Option<f64> {
    let h = domain.h();
    let (px, py) = (domain.point(x), domain.point(y));
    if (px[0] - py[0]).hypot(px[1] - py[1]) <= 5.0 * h {
        return None;
    }
    let delta = domain.delta();
    let c = log_comparator(px, py, delta[x], delta[y]);
    (c > 0.0 && c.is_finite()).then(|| column[x] / c)
}

pub fn green_bound_ratios(domain: &Domain, table: &GreenTable, targets: &[usize]) -> GreenBounds {
    let mut rmin = f64::INFINITY;
    let mut rmax = 0.0_f64;
    let mut pairs = 0;
    let mut excluded = 0;
    for (&y, col) in table.sources.iter().zip(&table.columns) {
        for &x in targets {
            match green_ratio(domain, col, x, y) {
                Some(r) => {
                    rmin = rmin.min(r);
                    rmax = rmax.max(r);
                    pairs += 1;
                }
                None => excluded += 1,
            }
        }
    }
    GreenBounds { rmin, rmax, window: rmax / rmin, pairs, excluded }
}

/// Green function of `-Δ` on a disk of radius `R` centered at the origin.
pub fn disk_green(x: [f64; 2], y: [f64; 2], radius: f64) -> f64 {
    let r2 = radius * radius;
    let nx = x[0] * x[0] + x[1] * x[1];
    let ny = y[0] * y[0] + y[1] * y[1];
    let d2 = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
    ((r2 - nx) * (r2 - ny) / (r2 * d2)).ln_1p() / (4.0 * PI)
}

/// Max relative error against [`disk_green`] over pairs farther apart than `10h`.
/// `None` unless the domain is a disk.
pub fn disk_closed_form_error(domain: &Domain, table: &GreenTable, targets: &[usize]) -> Option<f64> {
    let Shape::Disk { radius } = *domain.shape() else {
        return None;
    };
    let c = domain.spec().center;
    let local = |k: usize| {
        let p = domain.point(k);
        [p[0] - c[0], p[1] - c[1]]
    };
    let h = domain.h();
    let mut worst = 0.0_f64;
    for (&y, col) in table.sources.iter().zip(&table.columns) {
        for &x in targets {
            let (px, py) = (local(x), local(y));
            if (px[0] - py[0]).hypot(px[1] - py[1]) <= 10.0 * h {
                continue;
            }
            let exact = disk_green(px, py, radius);
            worst = worst.max((col[x] - exact).abs() / exact);
        }
    }
    Some(worst)
}
