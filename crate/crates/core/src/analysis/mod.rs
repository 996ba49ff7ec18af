//! Diagnostics that certify the qualitative and quantitative properties of
//! computed solutions.

pub mod adjoint;
pub mod boundary;
pub mod exponents;
pub mod gadgets;
pub mod kato;
pub mod regularity;
pub mod uniqueness;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adjoint::{
    adjoint_bound, l1_apriori_ratio, l1_corpus, solve_xi, weighted_rhs_integral, xi_approximation_check, L1Corpus,
    WeightedIntegral, XiApproximation, TRUNCATION_EPS, TRUNCATION_LEVELS,
};
pub use boundary::{boundary_decay_report, default_trace_widths, trace_functional, DecayWindow, TraceTable};
pub use exponents::{critical_exponent, rational_gamma, sobolev_diagnostics, CriticalExponent, ExponentRegime, SobolevReport};
pub use gadgets::SmoothingGadget;
pub use kato::{kato_residual_strong, kato_residual_very_weak, KatoStrongReport, KatoVeryWeak, KATO_TOLERANCE};
pub use regularity::{compare_regularity, regularity_probe, RegularityComparison, RegularityTable};
pub use uniqueness::{default_initializations, default_schedules, uniqueness_probe, Initialization, UniquenessReport};

use crate::field::GridFunction;
use crate::geometry::Domain;

/// `amplitude · (1 - |x - center|²/radius²)³₊`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: [f64; 2],
    pub radius: f64,
    pub amplitude: f64,
}

impl Bump {
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        let s = ((p[0] - self.center[0]).powi(2) + (p[1] - self.center[1]).powi(2)) / (self.radius * self.radius);
        if s < 1.0 {
            self.amplitude * (1.0 - s).powi(3)
        } else {
            0.0
        }
    }
}

/// Seeded bumps with radius in `radii` whose support stays at least `margin`
/// inside the domain. Amplitudes are uniform on `[1/2, 2]`.
pub fn random_bumps(domain: &Domain, count: usize, radii: (f64, f64), margin: f64, seed: u64) -> Vec<Bump> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = domain.shape();
    let center = domain.spec().center;
    let (hx, hy) = shape.half_extents();
    let room = shape.inradius() - margin;
    let (lo, hi) = (radii.0.min(room), radii.1.min(room));
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let radius = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        let local = [rng.gen_range(-hx..hx), rng.gen_range(-hy..hy)];
        let amplitude = rng.gen_range(0.5..2.0);
        if shape.signed_distance(local) >= radius + margin {
            out.push(Bump { center: [center[0] + local[0], center[1] + local[1]], radius, amplitude });
        }
    }
    out
}

/// Sum of bumps sampled at the nodes; zero at boundary-adjacent nodes.
pub fn bump_field(domain: &Domain, bumps: &[Bump]) -> GridFunction {
    let mut g = domain.grid_function(|p| bumps.iter().map(|b| b.eval(p)).sum());
    for k in 0..domain.len() {
        if domain.is_boundary_adjacent(k) {
            g[k] = 0.0;
        }
    }
    g
}

/// `count` nonnegative data fields, each a sum of three bumps with radii in `[0.1, 0.4]`.
pub fn bump_corpus(domain: &Domain, count: usize, seed: u64) -> Vec<GridFunction> {
    let bumps = random_bumps(domain, 3 * count, (0.1, 0.4), 0.0, seed);
    bumps.chunks(3).map(|c| domain.grid_function(|p| c.iter().map(|b| b.eval(p)).sum())).collect()
}

/// One certified quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    pub passed: bool,
    /// Grid spacing of the run.
    pub h: f64,
    /// Short description of the run configuration.
    pub run: String,
    pub tolerance: Option<f64>,
    pub values: serde_json::Value,
}

/// Named certifications, keyed by diagnostic name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub entries: BTreeMap<String, Certification>,
}

impl DiagnosticsReport {
    pub fn insert(&mut self, name: &str, certification: Certification) {
        self.entries.insert(name.to_string(), certification);
    }

    pub fn all_passed(&self) -> bool {
        self.entries.values().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.entries.iter().filter(|(_, c)| !c.passed).map(|(k, _)| k.as_str()).collect()
    }
}
