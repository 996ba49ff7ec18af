//! Discretized smooth planar domains.
//!
//! A [`Domain`] is the set of nodes `center + (i h, j h)` lying strictly inside
//! the shape, together with the distance-to-boundary field `δ`, the fractional
//! arm lengths used by the Shortley–Weller stencils, and an estimate of the
//! L¹-Poincaré constant.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::GridFunction;

/// Planar shapes offered by the laboratory. All but [`Shape::Rectangle`] are
/// `C^{1,1}` or smoother.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Shape {
    Disk {
        radius: f64,
    },
    Ellipse {
        a: f64,
        b: f64,
    },
    /// Rectangle with corners rounded by `corner_radius` (a Minkowski sum of a
    /// smaller rectangle and a disk).
    SmoothedRectangle {
        width: f64,
        height: f64,
        #[serde(rename = "corner-radius")]
        corner_radius: f64,
    },
    /// Plain rectangle; corners void the Green estimates, so this shape is only
    /// accepted with `unsafe-geometry = true`.
    Rectangle {
        width: f64,
        height: f64,
    },
}

/// Direction of a grid arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    East = 0,
    West = 1,
    North = 2,
    South = 3,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::East, Arm::West, Arm::North, Arm::South];

    pub fn offset(self) -> (i64, i64) {
        match self {
            Arm::East => (1, 0),
            Arm::West => (-1, 0),
            Arm::North => (0, 1),
            Arm::South => (0, -1),
        }
    }
}

impl Shape {
    fn validate(&self, allow_unsafe: bool) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidDomain(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match *self {
            Shape::Disk { radius } => positive("radius", radius),
            Shape::Ellipse { a, b } => {
                positive("a", a)?;
                positive("b", b)
            }
            Shape::SmoothedRectangle { width, height, corner_radius } => {
                positive("width", width)?;
                positive("height", height)?;
                positive("corner-radius", corner_radius)?;
                if 2.0 * corner_radius > width.min(height) {
                    return Err(Error::InvalidDomain(format!(
                        "corner-radius {corner_radius} exceeds half of the shorter side"
                    )));
                }
                Ok(())
            }
            Shape::Rectangle { width, height } => {
                if !allow_unsafe {
                    return Err(Error::InvalidDomain(
                        "plain rectangle has corners; enable unsafe-geometry to use it".into(),
                    ));
                }
                positive("width", width)?;
                positive("height", height)
            }
        }
    }

    /// Smallest geometric length scale the grid has to resolve.
    pub fn feature_size(&self) -> f64 {
        match *self {
            Shape::Disk { radius } => 2.0 * radius,
            Shape::Ellipse { a, b } => 2.0 * a.min(b),
            Shape::SmoothedRectangle { width, height, corner_radius } => {
                width.min(height).min(2.0 * corner_radius)
            }
            Shape::Rectangle { width, height } => width.min(height),
        }
    }

    /// Half extents of the bounding box.
    pub fn half_extents(&self) -> (f64, f64) {
        match *self {
            Shape::Disk { radius } => (radius, radius),
            Shape::Ellipse { a, b } => (a, b),
            Shape::SmoothedRectangle { width, height, .. } | Shape::Rectangle { width, height } => {
                (width / 2.0, height / 2.0)
            }
        }
    }

    /// Largest value of `δ` over the shape.
    pub fn inradius(&self) -> f64 {
        let (hx, hy) = self.half_extents();
        hx.min(hy)
    }

    /// Implicit function, negative strictly inside; `p` relative to the center.
    fn implicit(&self, p: [f64; 2]) -> f64 {
        match *self {
            Shape::Disk { radius } => (p[0] * p[0] + p[1] * p[1]) / (radius * radius) - 1.0,
            Shape::Ellipse { a, b } => (p[0] / a).powi(2) + (p[1] / b).powi(2) - 1.0,
            _ => -self.signed_distance(p),
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.implicit(p) < 0.0
    }

    /// Euclidean distance to the boundary, positive inside and negative outside.
    pub fn signed_distance(&self, p: [f64; 2]) -> f64 {
        match *self {
            Shape::Disk { radius } => radius - p[0].hypot(p[1]),
            Shape::Ellipse { a, b } => {
                let d = ellipse_distance(a, b, p);
                if self.implicit(p) < 0.0 {
                    d
                } else {
                    -d
                }
            }
            Shape::SmoothedRectangle { width, height, corner_radius } => {
                let qx = p[0].abs() - (width / 2.0 - corner_radius);
                let qy = p[1].abs() - (height / 2.0 - corner_radius);
                let outside = qx.max(0.0).hypot(qy.max(0.0));
                let inside = qx.max(qy).min(0.0);
                corner_radius - outside - inside
            }
            Shape::Rectangle { width, height } => {
                let qx = p[0].abs() - width / 2.0;
                let qy = p[1].abs() - height / 2.0;
                let outside = qx.max(0.0).hypot(qy.max(0.0));
                -(outside + qx.max(qy).min(0.0))
            }
        }
    }

    /// Distance `s > 0` from the interior point `p` to the boundary along an axis arm.
    fn axis_crossing(&self, p: [f64; 2], arm: Arm) -> f64 {
        let (dx, dy) = arm.offset();
        let (along, across, sign) = if dx != 0 { (p[0], p[1], dx as f64) } else { (p[1], p[0], dy as f64) };
        match *self {
            Shape::Disk { radius } => (radius * radius - across * across).max(0.0).sqrt() - sign * along,
            Shape::Ellipse { a, b } => {
                let (ra, rb) = if dx != 0 { (a, b) } else { (b, a) };
                ra * (1.0 - (across / rb).powi(2)).max(0.0).sqrt() - sign * along
            }
            _ => {
                // Convex shape: the implicit function changes sign exactly once along the ray.
                let (hx, hy) = self.half_extents();
                let mut lo = 0.0;
                let mut hi = 2.0 * hx.max(hy) + 1.0;
                let at = |s: f64| self.implicit([p[0] + s * dx as f64, p[1] + s * dy as f64]);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if at(mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-16 * hi.max(1.0) {
                        break;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }
}

/// Distance from `p` to the ellipse `x²/a² + y²/b² = 1` (inside or outside) by
/// safeguarded Newton iteration on the projection parameter.
fn ellipse_distance(a: f64, b: f64, p: [f64; 2]) -> f64 {
    // Work in the first quadrant with e0 >= e1.
    let (e0, e1, y0, y1) = if a >= b { (a, b, p[0].abs(), p[1].abs()) } else { (b, a, p[1].abs(), p[0].abs()) };
    if y1 > 0.0 {
        if y0 > 0.0 {
            let z0 = y0 / e0;
            let z1 = y1 / e1;
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g == 0.0 {
                return 0.0;
            }
            let r0 = (e0 / e1).powi(2);
            let sbar = projection_root(r0, z0, z1, g);
            let x0 = r0 * y0 / (sbar + r0);
            let x1 = y1 / (sbar + 1.0);
            (x0 - y0).hypot(x1 - y1)
        } else {
            (y1 - e1).abs()
        }
    } else {
        let numer0 = e0 * y0;
        let denom0 = e0 * e0 - e1 * e1;
        if numer0 < denom0 {
            let xde0 = numer0 / denom0;
            let x0 = e0 * xde0;
            let x1 = e1 * (1.0 - xde0 * xde0).max(0.0).sqrt();
            (x0 - y0).hypot(x1)
        } else {
            (y0 - e0).abs()
        }
    }
}

/// Root of `(r0 z0/(s+r0))² + (z1/(s+1))² - 1` on its bracketing interval.
fn projection_root(r0: f64, z0: f64, z1: f64, g: f64) -> f64 {
    let n0 = r0 * z0;
    let func = |s: f64| (n0 / (s + r0)).powi(2) + (z1 / (s + 1.0)).powi(2) - 1.0;
    let deriv = |s: f64| -2.0 * n0 * n0 / (s + r0).powi(3) - 2.0 * z1 * z1 / (s + 1.0).powi(3);
    let mut lo = z1 - 1.0;
    let mut hi = if g < 0.0 { 0.0 } else { n0.hypot(z1) - 1.0 };
    let mut s = 0.5 * (lo + hi);
    for _ in 0..200 {
        let value = func(s);
        if value == 0.0 {
            return s;
        }
        // The function is decreasing in s.
        if value > 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let newton = s - value / deriv(s);
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - s).abs() <= 1e-12 * s.abs().max(1.0) {
            return next;
        }
        s = next;
    }
    s
}

/// Configuration of a discretized domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DomainSpec {
    pub shape: Shape,
    #[serde(default)]
    pub center: [f64; 2],
    pub h: f64,
    #[serde(default)]
    pub unsafe_geometry: bool,
}

impl DomainSpec {
    pub fn disk(radius: f64, h: f64) -> Self {
        Self { shape: Shape::Disk { radius }, center: [0.0, 0.0], h, unsafe_geometry: false }
    }

    pub fn ellipse(a: f64, b: f64, h: f64) -> Self {
        Self { shape: Shape::Ellipse { a, b }, center: [0.0, 0.0], h, unsafe_geometry: false }
    }

    pub fn smoothed_rectangle(width: f64, height: f64, corner_radius: f64, h: f64) -> Self {
        Self {
            shape: Shape::SmoothedRectangle { width, height, corner_radius },
            center: [0.0, 0.0],
            h,
            unsafe_geometry: false,
        }
    }

    pub fn with_center(mut self, center: [f64; 2]) -> Self {
        self.center = center;
        self
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    /// The same shape scaled by `factor` about its center, including the grid spacing.
    pub fn scaled(&self, factor: f64) -> Self {
        let shape = match self.shape {
            Shape::Disk { radius } => Shape::Disk { radius: radius * factor },
            Shape::Ellipse { a, b } => Shape::Ellipse { a: a * factor, b: b * factor },
            Shape::SmoothedRectangle { width, height, corner_radius } => Shape::SmoothedRectangle {
                width: width * factor,
                height: height * factor,
                corner_radius: corner_radius * factor,
            },
            Shape::Rectangle { width, height } => Shape::Rectangle { width: width * factor, height: height * factor },
        };
        Self { shape, center: self.center, h: self.h * factor, unsafe_geometry: self.unsafe_geometry }
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate(self.unsafe_geometry)?;
        if !self.center.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidDomain("center must be finite".into()));
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::InvalidDomain(format!("h must be positive, got {}", self.h)));
        }
        let limit = self.shape.feature_size() / 4.0;
        if self.h >= limit {
            return Err(Error::GridTooCoarse { h: self.h });
        }
        Ok(())
    }
}

/// Grid location of an interior node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub i: i64,
    pub j: i64,
    pub x: f64,
    pub y: f64,
}

/// How the L¹-Poincaré constant was estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareEstimate {
    /// Estimate of the optimal constant in `∫|u| ≤ C ∫‖∇u‖`.
    pub constant: f64,
    /// Smallest perimeter/area ratio found (the Cheeger estimate).
    pub cheeger: f64,
    /// Level `t` of the minimizing candidate set `{δ > t}`.
    pub optimal_level: f64,
    pub method: String,
}

const CHEEGER_METHOD: &str =
    "reciprocal of min perimeter/area over distance sublevel sets {delta > t}, piecewise-linear contours";

/// A discretized domain. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Domain {
    spec: DomainSpec,
    imin: i64,
    jmin: i64,
    nx: usize,
    ny: usize,
    lookup: Vec<u32>,
    nodes: Vec<Node>,
    delta: GridFunction,
    arms: Vec<[f64; 4]>,
    poincare: PoincareEstimate,
}

const NONE: u32 = u32::MAX;

/// Builds the interior node set, the distance field, Shortley–Weller arm
/// fractions and the Poincaré estimate.
pub fn build_domain(spec: &DomainSpec) -> Result<Domain> {
    spec.validate()?;
    let h = spec.h;
    let (hx, hy) = spec.shape.half_extents();
    let mi = (hx / h).ceil() as i64 + 1;
    let mj = (hy / h).ceil() as i64 + 1;
    let (imin, jmin) = (-mi, -mj);
    let nx = (2 * mi + 1) as usize;
    let ny = (2 * mj + 1) as usize;

    let mut lookup = vec![NONE; nx * ny];
    let mut nodes = Vec::new();
    for j in -mj..=mj {
        for i in -mi..=mi {
            let local = [i as f64 * h, j as f64 * h];
            if spec.shape.contains(local) {
                let slot = ((j - jmin) as usize) * nx + (i - imin) as usize;
                lookup[slot] = nodes.len() as u32;
                nodes.push(Node { i, j, x: spec.center[0] + local[0], y: spec.center[1] + local[1] });
            }
        }
    }
    if nodes.is_empty() {
        return Err(Error::GridTooCoarse { h });
    }

    let delta: Vec<f64> = nodes
        .iter()
        .map(|n| spec.shape.signed_distance([n.i as f64 * h, n.j as f64 * h]).max(f64::MIN_POSITIVE))
        .collect();

    let mut domain = Domain {
        spec: spec.clone(),
        imin,
        jmin,
        nx,
        ny,
        lookup,
        nodes,
        delta: GridFunction::from_vec(delta),
        arms: Vec::new(),
        poincare: PoincareEstimate { constant: 0.0, cheeger: 0.0, optimal_level: 0.0, method: String::new() },
    };

    let arms = (0..domain.nodes.len())
        .map(|k| {
            let n = domain.nodes[k];
            let local = [n.i as f64 * h, n.j as f64 * h];
            let mut fr = [1.0; 4];
            for arm in Arm::ALL {
                let (di, dj) = arm.offset();
                if domain.index_of(n.i + di, n.j + dj).is_none() {
                    let s = spec.shape.axis_crossing(local, arm) / h;
                    fr[arm as usize] = s.clamp(f64::EPSILON, 1.0);
                }
            }
            fr
        })
        .collect();
    domain.arms = arms;
    domain.poincare = poincare_constant(&domain);
    Ok(domain)
}

impl Domain {
    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn shape(&self) -> &Shape {
        &self.spec.shape
    }

    pub fn h(&self) -> f64 {
        self.spec.h
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> Node {
        self.nodes[k]
    }

    pub fn point(&self, k: usize) -> [f64; 2] {
        let n = self.nodes[k];
        [n.x, n.y]
    }

    /// Distance to the boundary at every interior node.
    pub fn delta(&self) -> &GridFunction {
        &self.delta
    }

    pub fn poincare(&self) -> &PoincareEstimate {
        &self.poincare
    }

    /// Node index of grid location `(i, j)` if it is interior.
    pub fn index_of(&self, i: i64, j: i64) -> Option<usize> {
        let (ii, jj) = (i - self.imin, j - self.jmin);
        if ii < 0 || jj < 0 || ii as usize >= self.nx || jj as usize >= self.ny {
            return None;
        }
        match self.lookup[jj as usize * self.nx + ii as usize] {
            NONE => None,
            k => Some(k as usize),
        }
    }

    /// Interior neighbor of node `k` at grid offset `(di, dj)`.
    pub fn neighbor(&self, k: usize, di: i64, dj: i64) -> Option<usize> {
        let n = self.nodes[k];
        self.index_of(n.i + di, n.j + dj)
    }

    /// Fractional arm lengths `(E, W, N, S)`; 1 where the neighbor is interior.
    pub fn arms(&self, k: usize) -> [f64; 4] {
        self.arms[k]
    }

    /// True when some axis neighbor of `k` lies outside the domain.
    pub fn is_boundary_adjacent(&self, k: usize) -> bool {
        Arm::ALL.iter().any(|&a| {
            let (di, dj) = a.offset();
            self.neighbor(k, di, dj).is_none()
        })
    }

    /// True when all eight neighbors of `k` are interior nodes.
    pub fn has_full_stencil(&self, k: usize) -> bool {
        (-1..=1).all(|dj| (-1..=1).all(|di| self.neighbor(k, di, dj).is_some()))
    }

    /// Signed distance at an arbitrary point in absolute coordinates.
    pub fn signed_distance(&self, p: [f64; 2]) -> f64 {
        self.spec.shape.signed_distance([p[0] - self.spec.center[0], p[1] - self.spec.center[1]])
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.spec.shape.contains([p[0] - self.spec.center[0], p[1] - self.spec.center[1]])
    }

    /// Interior node closest to `p`, if any lies within one grid spacing.
    pub fn nearest_node(&self, p: [f64; 2]) -> Option<usize> {
        let h = self.h();
        let fi = (p[0] - self.spec.center[0]) / h;
        let fj = (p[1] - self.spec.center[1]) / h;
        let (ri, rj) = (fi.round() as i64, fj.round() as i64);
        let mut best: Option<(usize, f64)> = None;
        for dj in -1..=1 {
            for di in -1..=1 {
                if let Some(k) = self.index_of(ri + di, rj + dj) {
                    let q = self.point(k);
                    let d = (q[0] - p[0]).hypot(q[1] - p[1]);
                    if d <= h && best.is_none_or(|(_, bd)| d < bd) {
                        best = Some((k, d));
                    }
                }
            }
        }
        best.map(|(k, _)| k)
    }

    pub fn grid_function(&self, f: impl Fn([f64; 2]) -> f64) -> GridFunction {
        GridFunction::from_vec((0..self.len()).map(|k| f(self.point(k))).collect())
    }

    /// Writes `index,x,y,delta` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,x,y,delta")?;
        for (k, n) in self.nodes.iter().enumerate() {
            writeln!(out, "{k},{},{},{}", n.x, n.y, self.delta[k])?;
        }
        Ok(())
    }
}

/// Interior nodes within distance `eps` of the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryLayer {
    pub eps: f64,
    pub nodes: Vec<usize>,
    /// `|Ω_ε|` estimated as node count × h².
    pub measure: f64,
}

pub fn boundary_layer(domain: &Domain, eps: f64) -> BoundaryLayer {
    let nodes: Vec<usize> = (0..domain.len()).filter(|&k| domain.delta[k] < eps).collect();
    let measure = nodes.len() as f64 * domain.h() * domain.h();
    BoundaryLayer { eps, nodes, measure }
}

/// Estimates the optimal L¹-Poincaré constant as the reciprocal of a Cheeger
/// constant restricted to the sets `{δ > t}`.
///
/// Area and perimeter of each candidate set are those of the super-level set of
/// the piecewise-linear interpolant of the signed distance on a triangulated
/// grid, which is second-order accurate for smooth level curves.
pub fn poincare_constant(domain: &Domain) -> PoincareEstimate {
    let shape = &domain.spec.shape;
    let h = domain.h();
    let (hx, hy) = shape.half_extents();
    let mi = (hx / h).ceil() as i64 + 2;
    let mj = (hy / h).ceil() as i64 + 2;
    let nx = (2 * mi + 1) as usize;
    let ny = (2 * mj + 1) as usize;
    let mut sd = vec![0.0; nx * ny];
    for (jj, j) in (-mj..=mj).enumerate() {
        for (ii, i) in (-mi..=mi).enumerate() {
            sd[jj * nx + ii] = shape.signed_distance([i as f64 * h, j as f64 * h]);
        }
    }

    let ratio_at = |t: f64| -> Option<f64> {
        let (area, perimeter) = superlevel_area_perimeter(&sd, nx, ny, h, t);
        (area > 16.0 * h * h).then(|| perimeter / area)
    };

    let top = shape.inradius();
    let levels = 64;
    let mut best = (f64::INFINITY, 0.0);
    for step in 0..levels {
        let t = top * 0.9 * step as f64 / levels as f64;
        if let Some(r) = ratio_at(t) {
            if r < best.0 {
                best = (r, t);
            }
        }
    }
    PoincareEstimate { constant: 1.0 / best.0, cheeger: best.0, optimal_level: best.1, method: CHEEGER_METHOD.into() }
}

/// Area and boundary length of `{φ > t}` for the piecewise-linear interpolant
/// of grid values `φ` (cells split along the `(0,0)-(1,1)` diagonal).
fn superlevel_area_perimeter(values: &[f64], nx: usize, ny: usize, h: f64, t: f64) -> (f64, f64) {
    let mut area = 0.0;
    let mut perimeter = 0.0;
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let v = |di: usize, dj: usize| values[(j + dj) * nx + i + di] - t;
            let p = |di: usize, dj: usize| [(i + di) as f64 * h, (j + dj) as f64 * h];
            for tri in [[(0, 0), (1, 0), (1, 1)], [(0, 0), (1, 1), (0, 1)]] {
                let pts = tri.map(|(a, b)| p(a, b));
                let vals = tri.map(|(a, b)| v(a, b));
                let (a, l) = clip_triangle(pts, vals);
                area += a;
                perimeter += l;
            }
        }
    }
    (area, perimeter)
}

fn triangle_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs()
}

fn lerp(a: [f64; 2], b: [f64; 2], va: f64, vb: f64) -> [f64; 2] {
    let s = va / (va - vb);
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
}

/// Area of the part of a triangle where the linear interpolant is positive and
/// the length of the zero-level segment crossing it.
fn clip_triangle(p: [[f64; 2]; 3], v: [f64; 3]) -> (f64, f64) {
    let positive: Vec<usize> = (0..3).filter(|&k| v[k] > 0.0).collect();
    let full = triangle_area(p[0], p[1], p[2]);
    match positive.len() {
        0 => (0.0, 0.0),
        3 => (full, 0.0),
        1 => {
            let a = positive[0];
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            let q1 = lerp(p[a], p[b], v[a], v[b]);
            let q2 = lerp(p[a], p[c], v[a], v[c]);
            (triangle_area(p[a], q1, q2), (q1[0] - q2[0]).hypot(q1[1] - q2[1]))
        }
        _ => {
            let a = (0..3).find(|&k| v[k] <= 0.0).unwrap();
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            let q1 = lerp(p[a], p[b], v[a], v[b]);
            let q2 = lerp(p[a], p[c], v[a], v[c]);
            (full - triangle_area(p[a], q1, q2), (q1[0] - q2[0]).hypot(q1[1] - q2[1]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn disk_node_count_matches_brute_force() {
        let h = 1.0 / 32.0;
        let d = build_domain(&DomainSpec::disk(1.0, h)).unwrap();
        let mut count = 0;
        for j in -40..=40 {
            for i in -40..=40 {
                let (x, y) = (i as f64 * h, j as f64 * h);
                if x * x + y * y < 1.0 {
                    count += 1;
                }
            }
        }
        assert_eq!(d.len(), count);
        assert!((d.len() as f64 * h * h - std::f64::consts::PI).abs() < 0.1);
    }

    #[test]
    fn center_distances() {
        let d = build_domain(&DomainSpec::disk(1.0, 1.0 / 16.0)).unwrap();
        let k = d.index_of(0, 0).unwrap();
        assert_relative_eq!(d.delta()[k], 1.0, epsilon = 1e-15);

        let e = build_domain(&DomainSpec::ellipse(1.0, 0.5, 1.0 / 32.0)).unwrap();
        let k = e.index_of(0, 0).unwrap();
        assert_relative_eq!(e.delta()[k], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn ellipse_distance_matches_dense_boundary_sampling() {
        let (a, b) = (1.0, 0.5);
        let samples: Vec<[f64; 2]> = (0..200_000)
            .map(|k| {
                let th = k as f64 * std::f64::consts::TAU / 200_000.0;
                [a * th.cos(), b * th.sin()]
            })
            .collect();
        for p in [[0.3, 0.1], [0.9, 0.0], [0.2, 0.0], [0.0, 0.4], [-0.7, -0.2], [0.5, 0.43]] {
            let dist = |th: f64| (a * th.cos() - p[0]).hypot(b * th.sin() - p[1]);
            let (best, _) = samples
                .iter()
                .enumerate()
                .map(|(k, q)| (k, (q[0] - p[0]).hypot(q[1] - p[1])))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            // Golden-section refinement around the best sample.
            let step = std::f64::consts::TAU / 200_000.0;
            let (mut lo, mut hi) = ((best as f64 - 1.0) * step, (best as f64 + 1.0) * step);
            let g = (5f64.sqrt() - 1.0) / 2.0;
            for _ in 0..100 {
                let (m1, m2) = (hi - g * (hi - lo), lo + g * (hi - lo));
                if dist(m1) < dist(m2) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            let brute = dist(0.5 * (lo + hi));
            let d = ellipse_distance(a, b, p);
            assert!((d - brute).abs() < 1e-9, "p = {p:?}: {d} vs {brute}");
        }
    }

    #[test]
    fn rounded_rectangle_distance() {
        let s = Shape::SmoothedRectangle { width: 2.0, height: 1.0, corner_radius: 0.25 };
        assert_relative_eq!(s.signed_distance([0.0, 0.0]), 0.5);
        assert_relative_eq!(s.signed_distance([0.9, 0.0]), 0.1, epsilon = 1e-15);
        // corner arc centered at (0.75, 0.25)
        let p = [0.75 + 0.1 / 2f64.sqrt(), 0.25 + 0.1 / 2f64.sqrt()];
        assert_relative_eq!(s.signed_distance(p), 0.15, epsilon = 1e-12);
    }

    #[test]
    fn arm_fractions_in_unit_interval_and_exact_for_disk() {
        let d = build_domain(&DomainSpec::disk(1.0, 0.1)).unwrap();
        for k in 0..d.len() {
            let n = d.node(k);
            for arm in Arm::ALL {
                let f = d.arms(k)[arm as usize];
                assert!(f > 0.0 && f <= 1.0);
                if f < 1.0 {
                    let (di, dj) = arm.offset();
                    let q = [n.x + f * 0.1 * di as f64, n.y + f * 0.1 * dj as f64];
                    assert!((q[0].hypot(q[1]) - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn unsafe_rectangle_gated() {
        let mut spec = DomainSpec {
            shape: Shape::Rectangle { width: 1.0, height: 1.0 },
            center: [0.0, 0.0],
            h: 0.05,
            unsafe_geometry: false,
        };
        assert!(matches!(build_domain(&spec), Err(Error::InvalidDomain(_))));
        spec.unsafe_geometry = true;
        assert!(build_domain(&spec).is_ok());
    }

    #[test]
    fn degenerate_and_coarse_specs_rejected() {
        assert!(matches!(build_domain(&DomainSpec::disk(0.0, 0.1)), Err(Error::InvalidDomain(_))));
        assert!(matches!(build_domain(&DomainSpec::disk(1.0, 0.6)), Err(Error::GridTooCoarse { .. })));
        assert!(matches!(
            build_domain(&DomainSpec::smoothed_rectangle(1.0, 1.0, 0.0, 0.01)),
            Err(Error::InvalidDomain(_))
        ));
    }

    #[test]
    fn boundary_layer_of_disk() {
        let h = 1.0 / 64.0;
        let d = build_domain(&DomainSpec::disk(1.0, h)).unwrap();
        let layer = boundary_layer(&d, 0.1);
        for k in 0..d.len() {
            let p = d.point(k);
            let r = p[0].hypot(p[1]);
            assert_eq!(layer.nodes.contains(&k), r > 0.9 + 1e-14 || (1.0 - r) < 0.1);
        }
        let annulus = std::f64::consts::PI * (1.0 - 0.81);
        assert!((layer.measure - annulus).abs() < 4.0 * h, "{} vs {annulus}", layer.measure);
        assert_eq!(boundary_layer(&d, 3.0).nodes.len(), d.len());
    }

    #[test]
    fn cheeger_of_disks() {
        for (radius, expected) in [(1.0, 0.5), (2.0, 1.0)] {
            let d = build_domain(&DomainSpec::disk(radius, radius / 32.0)).unwrap();
            let c = d.poincare();
            assert!((c.constant - expected).abs() < 5e-3 * expected, "{c:?}");
            assert!(c.optimal_level < radius / 16.0);
        }
    }

    #[test]
    fn triangle_clipping_pieces() {
        let p = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert_eq!(clip_triangle(p, [1.0, 1.0, 1.0]), (0.5, 0.0));
        assert_eq!(clip_triangle(p, [-1.0, -1.0, -1.0]), (0.0, 0.0));
        let (a, l) = clip_triangle(p, [1.0, -1.0, -1.0]);
        assert_relative_eq!(a, 0.125);
        assert_relative_eq!(l, 0.5f64.hypot(0.5));
        let (a2, _) = clip_triangle(p, [-1.0, 1.0, 1.0]);
        assert_relative_eq!(a2, 0.375);
    }
}
