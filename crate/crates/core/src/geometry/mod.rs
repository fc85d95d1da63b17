//! Open-set descriptors, signed distance, level-set extraction and tube measures.
//!
//! Sign convention: the signed distance `d` is positive inside the open set `U`, negative
//! outside its closure and zero on `∂U`. Every normal produced here is an *inner* normal,
//! i.e. it points toward increasing `d`.

pub mod grid;
pub mod levelset;
pub mod minkowski;
pub mod polygon;
pub mod sampled;

use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use sampled::{fast_marching_2d, Segment, SegmentIndex, BRUTE_FORCE_LIMIT};

pub use levelset::{
    extract_level_set, surface_integral, surface_integral_with, EpsilonSchedule, Facet, LevelSampler,
    SurfaceMesh, SurfaceRule,
};
pub use minkowski::{coarea_check, minkowski_content, shell_cell_integral, CoareaReport, MinkowskiReport};

/// Points live in ℝ³; planar problems use `z = 0` and ignore the third axis.
pub type Point = Vector3<f64>;

pub fn point2(x: f64, y: f64) -> Point {
    Point::new(x, y, 0.0)
}

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn new(min: Point, max: Point) -> Self {
        Aabb { min, max }
    }

    pub fn inflated(&self, by: f64, dim: usize) -> Self {
        let mut b = *self;
        for a in 0..dim {
            b.min[a] -= by;
            b.max[a] += by;
        }
        b
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn contains(&self, x: &Point, dim: usize) -> bool {
        (0..dim).all(|a| x[a] >= self.min[a] && x[a] <= self.max[a])
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }
}

/// Lower boundary profile `γ` of a graph domain `{x₂ > γ(x₁)}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphProfile {
    Flat { level: f64 },
    /// Triangle wave with peak-to-peak `amplitude`, valleys at integer multiples of `period`.
    Sawtooth { amplitude: f64, period: f64 },
    /// Piecewise-linear through `points` (sorted by x), extended by constants.
    Polyline { points: Vec<[f64; 2]> },
}

impl GraphProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            GraphProfile::Flat { level } => *level,
            GraphProfile::Sawtooth { amplitude, period } => {
                let s = x / period;
                let frac = s - s.floor();
                amplitude * 2.0 * frac.min(1.0 - frac)
            }
            GraphProfile::Polyline { points } => {
                if x <= points[0][0] {
                    return points[0][1];
                }
                for w in points.windows(2) {
                    if x <= w[1][0] {
                        let t = (x - w[0][0]) / (w[1][0] - w[0][0]);
                        return w[0][1] + t * (w[1][1] - w[0][1]);
                    }
                }
                points[points.len() - 1][1]
            }
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            GraphProfile::Flat { .. } => 0.0,
            GraphProfile::Sawtooth { amplitude, period } => 2.0 * amplitude.abs() / period,
            GraphProfile::Polyline { points } => points
                .windows(2)
                .map(|w| ((w[1][1] - w[0][1]) / (w[1][0] - w[0][0])).abs())
                .fold(0.0, f64::max),
        }
    }

    /// Abscissae in `[a, b]` where the profile may have a kink, including the end points.
    pub fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let mut out = vec![a];
        match self {
            GraphProfile::Flat { .. } => {}
            GraphProfile::Sawtooth { period, .. } => {
                let half = 0.5 * period;
                let mut k = (a / half).floor() + 1.0;
                while k * half < b {
                    out.push(k * half);
                    k += 1.0;
                }
            }
            GraphProfile::Polyline { points } => {
                out.extend(points.iter().map(|p| p[0]).filter(|&x| x > a && x < b));
            }
        }
        out.push(b);
        out
    }

    fn range(&self, a: f64, b: f64) -> (f64, f64) {
        let ys: Vec<f64> = self.breakpoints(a, b).iter().map(|&x| self.eval(x)).collect();
        ys.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| (lo.min(y), hi.max(y)))
    }
}

/// Level-function shapes for the `implicit` set kind; the level function is positive inside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ImplicitShape {
    Ellipse { center: [f64; 2], semi_axes: [f64; 2] },
    /// Star-shaped "flower" `|x − c| < r₀ + a·cos(kθ)`.
    Flower {
        center: [f64; 2],
        radius: f64,
        amplitude: f64,
        lobes: u32,
    },
}

impl ImplicitShape {
    pub fn level(&self, x: &Point) -> f64 {
        match self {
            ImplicitShape::Ellipse { center, semi_axes } => {
                let u = (x.x - center[0]) / semi_axes[0];
                let v = (x.y - center[1]) / semi_axes[1];
                1.0 - (u * u + v * v).sqrt()
            }
            ImplicitShape::Flower {
                center,
                radius,
                amplitude,
                lobes,
            } => {
                let (dx, dy) = (x.x - center[0], x.y - center[1]);
                let r = (dx * dx + dy * dy).sqrt();
                let th = dy.atan2(dx);
                radius + amplitude * (*lobes as f64 * th).cos() - r
            }
        }
    }

    fn center(&self) -> Point {
        match self {
            ImplicitShape::Ellipse { center, .. } | ImplicitShape::Flower { center, .. } => point2(center[0], center[1]),
        }
    }

    /// Boundary radius along the ray at angle `theta` from the center (both shapes are star-shaped).
    fn radius_at(&self, theta: f64) -> f64 {
        match self {
            ImplicitShape::Ellipse { semi_axes, .. } => {
                let (c, s) = (theta.cos() / semi_axes[0], theta.sin() / semi_axes[1]);
                1.0 / (c * c + s * s).sqrt()
            }
            ImplicitShape::Flower {
                radius,
                amplitude,
                lobes,
                ..
            } => radius + amplitude * (*lobes as f64 * theta).cos(),
        }
    }

    /// Closed polyline through boundary points with spacing at most about `h`.
    fn boundary_samples(&self, h: f64) -> Result<Vec<Segment>> {
        let valid = match self {
            ImplicitShape::Ellipse { semi_axes, .. } => semi_axes.iter().all(|a| *a > 0.0),
            ImplicitShape::Flower { radius, amplitude, .. } => *radius > amplitude.abs() && *radius > 0.0,
        };
        if !valid {
            return Err(Error::Config("implicit: shape parameters give an empty or non-star-shaped set".into()));
        }
        let bound = match self {
            ImplicitShape::Ellipse { semi_axes, .. } => semi_axes[0].max(semi_axes[1]),
            ImplicitShape::Flower {
                radius,
                amplitude,
                lobes,
                ..
            } => radius + amplitude.abs() * (1.0 + *lobes as f64),
        };
        let n = ((TAU * bound / h).ceil() as usize).max(16);
        let c = self.center();
        let pts: Vec<Point> = (0..n)
            .map(|i| {
                let t = TAU * i as f64 / n as f64;
                let r = self.radius_at(t);
                c + point2(r * t.cos(), r * t.sin())
            })
            .collect();
        Ok((0..n).map(|i| (pts[i], pts[(i + 1) % n])).collect())
    }

    fn bbox(&self) -> Aabb {
        match self {
            ImplicitShape::Ellipse { center, semi_axes } => Aabb::new(
                point2(center[0] - semi_axes[0], center[1] - semi_axes[1]),
                point2(center[0] + semi_axes[0], center[1] + semi_axes[1]),
            ),
            ImplicitShape::Flower {
                center,
                radius,
                amplitude,
                ..
            } => {
                let r = radius + amplitude.abs();
                Aabb::new(point2(center[0] - r, center[1] - r), point2(center[0] + r, center[1] + r))
            }
        }
    }
}

/// Serializable description of an open set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    /// Open box `Π (lo_i, hi_i)`; its length fixes the dimension (2 or 3).
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Open ball. Radius 0 describes the single point `{center}` as a compact set.
    Ball { center: Vec<f64>, radius: f64 },
    /// Simple polygon. Two vertices describe a closed segment (a compact of zero area).
    Polygon { vertices: Vec<[f64; 2]> },
    /// `{x₂ > γ(x₁)}`; `window` and `top` bound the sampled and integrated part.
    Graph {
        profile: GraphProfile,
        window: [f64; 2],
        top: f64,
    },
    /// `{g > 0}` with a sampled boundary. `resolution` is the sampling cell size.
    Implicit {
        shape: ImplicitShape,
        #[serde(default)]
        resolution: Option<f64>,
    },
    /// Exterior of the closure of `of`.
    Complement { of: std::boxed::Box<SetSpec> },
    /// Binary union (planar only), distance from a sampled boundary.
    Union {
        a: std::boxed::Box<SetSpec>,
        b: std::boxed::Box<SetSpec>,
        #[serde(default)]
        resolution: Option<f64>,
    },
}

impl SetSpec {
    pub fn unit_square() -> Self {
        SetSpec::Box {
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 1.0],
        }
    }

    pub fn rect(lo: [f64; 2], hi: [f64; 2]) -> Self {
        SetSpec::Box {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
        }
    }

    pub fn disk(center: [f64; 2], radius: f64) -> Self {
        SetSpec::Ball {
            center: center.to_vec(),
            radius,
        }
    }

    pub fn l_shape() -> Self {
        SetSpec::Polygon {
            vertices: vec![[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]],
        }
    }

    pub fn sawtooth_graph() -> Self {
        SetSpec::Graph {
            profile: GraphProfile::Sawtooth {
                amplitude: 0.2,
                period: 0.5,
            },
            window: [0.0, 2.0],
            top: 1.0,
        }
    }
}

/// Where a point sits relative to a set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Location {
    Interior,
    Boundary,
    Exterior,
    /// Within the sampling tolerance of a sampled boundary.
    Uncertain,
}

#[derive(Debug)]
struct SampledBoundary {
    index: SegmentIndex,
    marched: Option<grid::SampledField>,
    spacing: f64,
}

impl SampledBoundary {
    fn build(segments: Vec<Segment>, bbox: &Aabb, spacing: f64) -> Self {
        let index = SegmentIndex::new(segments);
        let marched = (index.len() > BRUTE_FORCE_LIMIT).then(|| {
            let margin = 0.5 * (bbox.max - bbox.min).amax();
            let grid = spacing.max(bbox.diagonal() / 1024.0);
            fast_marching_2d(&bbox.inflated(margin, 2), grid, &index)
        });
        SampledBoundary {
            index,
            marched,
            spacing,
        }
    }

    fn unsigned(&self, x: &Point) -> f64 {
        if let Some(field) = &self.marched {
            let l = &field.lattice;
            let inside_grid = (0..2).all(|a| {
                x[a] >= l.origin[a] && x[a] <= l.origin[a] + (l.counts[a] - 1) as f64 * l.spacing
            });
            if inside_grid {
                return field.interpolate(x);
            }
        }
        self.index
            .nearest(x)
            .map(|p| ((x.x - p.x).powi(2) + (x.y - p.y).powi(2)).sqrt())
            .unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug)]
enum Shape {
    Box { lo: Point, hi: Point },
    Ball { center: Point, radius: f64 },
    Polygon { vertices: Vec<Point> },
    Graph {
        profile: GraphProfile,
        chain: Vec<Point>,
    },
    Implicit { shape: ImplicitShape, boundary: SampledBoundary },
    Complement(std::boxed::Box<Shape>),
    Union {
        a: std::boxed::Box<Shape>,
        b: std::boxed::Box<Shape>,
        boundary: SampledBoundary,
    },
}

/// A validated open set with membership and signed distance.
#[derive(Clone, Debug)]
pub struct SetDescriptor {
    spec: SetSpec,
    dim: usize,
    bbox: Aabb,
    shape: Arc<Shape>,
}

fn vec_point(v: &[f64], what: &str) -> Result<Point> {
    match v.len() {
        2 => Ok(point2(v[0], v[1])),
        3 => Ok(Point::new(v[0], v[1], v[2])),
        n => Err(Error::Config(format!("{what}: expected 2 or 3 coordinates, got {n}"))),
    }
}

impl SetDescriptor {
    pub fn new(spec: SetSpec) -> Result<Self> {
        let (shape, dim, bbox) = Self::build(&spec)?;
        Ok(SetDescriptor {
            spec,
            dim,
            bbox,
            shape: Arc::new(shape),
        })
    }

    fn build(spec: &SetSpec) -> Result<(Shape, usize, Aabb)> {
        match spec {
            SetSpec::Box { lo, hi } => {
                if lo.len() != hi.len() {
                    return Err(Error::Config("box: lo and hi differ in length".into()));
                }
                let (l, h) = (vec_point(lo, "box.lo")?, vec_point(hi, "box.hi")?);
                if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                    return Err(Error::Config("box: every lo must be below hi".into()));
                }
                Ok((Shape::Box { lo: l, hi: h }, lo.len(), Aabb::new(l, h)))
            }
            SetSpec::Ball { center, radius } => {
                let c = vec_point(center, "ball.center")?;
                if !(*radius >= 0.0) || !radius.is_finite() {
                    return Err(Error::Config("ball: radius must be finite and >= 0".into()));
                }
                let dim = center.len();
                let r = Point::repeat(*radius);
                let mut bb = Aabb::new(c - r, c + r);
                if dim == 2 {
                    bb.min.z = 0.0;
                    bb.max.z = 0.0;
                }
                Ok((Shape::Ball { center: c, radius: *radius }, dim, bb))
            }
            SetSpec::Polygon { vertices } => {
                if vertices.len() < 2 {
                    return Err(Error::Config("polygon: need at least 2 vertices".into()));
                }
                let pts: Vec<Point> = vertices.iter().map(|v| point2(v[0], v[1])).collect();
                let bb = pts
                    .iter()
                    .fold(Aabb::new(pts[0], pts[0]), |b, p| b.union(&Aabb::new(*p, *p)));
                Ok((Shape::Polygon { vertices: pts }, 2, bb))
            }
            SetSpec::Graph {
                profile,
                window,
                top,
            } => {
                if !(window[0] < window[1]) {
                    return Err(Error::Config("graph: window must be increasing".into()));
                }
                if let GraphProfile::Sawtooth { period, .. } = profile {
                    if !(*period > 0.0) {
                        return Err(Error::Config("graph: sawtooth period must be > 0".into()));
                    }
                }
                if let GraphProfile::Polyline { points } = profile {
                    if points.len() < 2 || points.windows(2).any(|w| !(w[0][0] < w[1][0])) {
                        return Err(Error::Config(
                            "graph: polyline needs >= 2 points with increasing x".into(),
                        ));
                    }
                }
                let (lo, hi) = profile.range(window[0], window[1]);
                if !(*top > hi) {
                    return Err(Error::Config("graph: top must lie above the profile".into()));
                }
                // Extend the profile far enough that nearest points of any query in the
                // sampled region are represented.
                let margin = (top - lo) + (window[1] - window[0]);
                let chain: Vec<Point> = profile
                    .breakpoints(window[0] - margin, window[1] + margin)
                    .into_iter()
                    .map(|x| point2(x, profile.eval(x)))
                    .collect();
                let bb = Aabb::new(point2(window[0], lo), point2(window[1], *top));
                Ok((
                    Shape::Graph {
                        profile: profile.clone(),
                        chain,
                    },
                    2,
                    bb,
                ))
            }
            SetSpec::Implicit { shape, resolution } => {
                let bb = shape.bbox();
                let h = resolution.unwrap_or(bb.diagonal() / 2048.0);
                if !(h > 0.0) {
                    return Err(Error::Config("implicit: resolution must be > 0".into()));
                }
                let segments = shape.boundary_samples(h)?;
                let boundary = SampledBoundary::build(segments, &bb, h);
                Ok((
                    Shape::Implicit {
                        shape: shape.clone(),
                        boundary,
                    },
                    2,
                    bb,
                ))
            }
            SetSpec::Complement { of } => {
                let (inner, dim, bb) = Self::build(of)?;
                Ok((Shape::Complement(std::boxed::Box::new(inner)), dim, bb))
            }
            SetSpec::Union { a, b, resolution } => {
                let (sa, da, ba) = Self::build(a)?;
                let (sb, db, bbb) = Self::build(b)?;
                if da != 2 || db != 2 {
                    return Err(Error::Config("union: only planar sets are supported".into()));
                }
                let bb = ba.union(&bbb);
                let h = resolution.unwrap_or(bb.diagonal() / 2048.0);
                let mut segments = Vec::new();
                for (own, other) in [(&sa, &sb), (&sb, &sa)] {
                    for (p, q) in boundary_polyline(own, h)? {
                        clip_outside(&p, &q, other, &mut segments);
                    }
                }
                let boundary = SampledBoundary::build(segments, &bb, h);
                Ok((
                    Shape::Union {
                        a: std::boxed::Box::new(sa),
                        b: std::boxed::Box::new(sb),
                        boundary,
                    },
                    2,
                    bb,
                ))
            }
        }
    }

    pub fn spec(&self) -> &SetSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Bounding box of `U` (of the complemented set for complements).
    pub fn bounding_box(&self) -> Aabb {
        self.bbox
    }

    /// Box containing `{d > −eps_max}` together with `U`.
    pub fn sampling_box(&self, eps_max: f64) -> Aabb {
        self.bbox.inflated(eps_max.abs(), self.dim)
    }

    /// True when the distance is closed-form rather than derived from boundary samples.
    pub fn is_exact(&self) -> bool {
        shape_is_exact(&self.shape)
    }

    /// Sampling spacing of grid-backed kinds (0 for exact kinds).
    pub fn sampling_tolerance(&self) -> f64 {
        shape_tolerance(&self.shape)
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(*self.shape, Shape::Complement(_) | Shape::Graph { .. })
    }

    /// Signed distance to `∂U`, positive in `U`.
    pub fn signed_distance(&self, x: &Point) -> f64 {
        shape_distance(&self.shape, x)
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.signed_distance(x) > 0.0
    }

    pub fn classify(&self, x: &Point) -> Location {
        let d = self.signed_distance(x);
        let tol = if self.is_exact() {
            1e-12 * (1.0 + self.bbox.diagonal())
        } else {
            self.sampling_tolerance()
        };
        if d.abs() <= tol {
            if self.is_exact() {
                Location::Boundary
            } else {
                Location::Uncertain
            }
        } else if d > 0.0 {
            Location::Interior
        } else {
            Location::Exterior
        }
    }

    /// Closest point of `∂U` when it is available in closed form or from samples.
    pub fn nearest_boundary_point(&self, x: &Point) -> Option<Point> {
        shape_nearest(&self.shape, x)
    }

    /// Boundary as planar segments with spacing at most `h` (curved parts are polygonised).
    pub fn boundary_segments(&self, h: f64) -> Result<Vec<Segment>> {
        if self.dim != 2 {
            return Err(Error::Geometry("boundary segments are planar only".into()));
        }
        boundary_polyline(&self.shape, h)
    }

    /// Distance gradient with a finite-difference conditioning check.
    pub fn distance_gradient(&self, x: &Point) -> DistanceGradient {
        let step = 1e-6 * (1.0 + self.bbox.diagonal());
        let mut fd = Point::zeros();
        for a in 0..self.dim {
            let mut xp = *x;
            let mut xm = *x;
            xp[a] += step;
            xm[a] -= step;
            fd[a] = (self.signed_distance(&xp) - self.signed_distance(&xm)) / (2.0 * step);
        }
        let fd_norm = fd.norm();
        let degenerate = (fd_norm - 1.0).abs() > DEGENERATE_GRADIENT;
        let closed_form = if degenerate || !self.is_exact() {
            None
        } else {
            self.nearest_boundary_point(x).and_then(|p| {
                let r = x - p;
                let n = r.norm();
                (n > 0.0).then(|| {
                    let s = if self.signed_distance(x) >= 0.0 { 1.0 } else { -1.0 };
                    r * (s / n)
                })
            })
        };
        let vector = match closed_form {
            Some(v) => v,
            None if fd_norm > 0.0 => fd / fd_norm,
            None => Point::zeros(),
        };
        DistanceGradient {
            vector,
            fd_norm,
            degenerate,
        }
    }
}

/// Deviation of `|∇d|` from 1 above which a point is reported as degenerate.
pub const DEGENERATE_GRADIENT: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistanceGradient {
    /// Unit vector (zero only if the finite-difference gradient vanished).
    pub vector: Point,
    /// Norm of the raw central-difference gradient.
    pub fd_norm: f64,
    pub degenerate: bool,
}

/// Signed distance of `set` at `x`.
pub fn signed_distance(set: &SetDescriptor, x: &Point) -> f64 {
    set.signed_distance(x)
}

pub fn distance_gradient(set: &SetDescriptor, x: &Point) -> DistanceGradient {
    set.distance_gradient(x)
}

fn shape_is_exact(s: &Shape) -> bool {
    match s {
        Shape::Implicit { .. } | Shape::Union { .. } => false,
        Shape::Complement(inner) => shape_is_exact(inner),
        _ => true,
    }
}

fn shape_tolerance(s: &Shape) -> f64 {
    match s {
        Shape::Implicit { boundary, .. } | Shape::Union { boundary, .. } => {
            if let Some(field) = &boundary.marched {
                4.0 * field.lattice.spacing
            } else {
                boundary.spacing
            }
        }
        Shape::Complement(inner) => shape_tolerance(inner),
        _ => 0.0,
    }
}

fn box_distance(lo: &Point, hi: &Point, dim: usize, x: &Point) -> f64 {
    let mut inside = true;
    let mut out2 = 0.0;
    let mut in_min = f64::INFINITY;
    for a in 0..dim {
        let below = lo[a] - x[a];
        let above = x[a] - hi[a];
        if below > 0.0 || above > 0.0 {
            inside = false;
            let e = below.max(above);
            out2 += e * e;
        } else {
            in_min = in_min.min((-below).min(-above));
        }
    }
    if inside {
        in_min
    } else {
        -out2.sqrt()
    }
}

fn box_dim(lo: &Point, hi: &Point) -> usize {
    if lo.z == 0.0 && hi.z == 0.0 {
        2
    } else {
        3
    }
}

fn planar_dist(x: &Point, p: &Point) -> f64 {
    ((x.x - p.x).powi(2) + (x.y - p.y).powi(2)).sqrt()
}

fn shape_distance(s: &Shape, x: &Point) -> f64 {
    match s {
        Shape::Box { lo, hi } => box_distance(lo, hi, box_dim(lo, hi), x),
        Shape::Ball { center, radius } => radius - (x - center).norm(),
        Shape::Polygon { vertices } => {
            let p = polygon::nearest_on_chain(x, vertices, vertices.len() > 2);
            let d = planar_dist(x, &p);
            if polygon::point_in_polygon(x, vertices) {
                d
            } else {
                -d
            }
        }
        Shape::Graph { profile, chain, .. } => {
            let p = polygon::nearest_on_chain(x, chain, false);
            let d = planar_dist(x, &p);
            if x.y > profile.eval(x.x) {
                d
            } else {
                -d
            }
        }
        Shape::Implicit { shape, boundary } => {
            let d = boundary.unsigned(x);
            if shape.level(x) > 0.0 {
                d
            } else {
                -d
            }
        }
        Shape::Complement(inner) => -shape_distance(inner, x),
        Shape::Union { a, b, boundary } => {
            let d = boundary.unsigned(x);
            if shape_distance(a, x) > 0.0 || shape_distance(b, x) > 0.0 {
                d
            } else {
                -d
            }
        }
    }
}

fn shape_nearest(s: &Shape, x: &Point) -> Option<Point> {
    match s {
        Shape::Box { lo, hi } => {
            let dim = box_dim(lo, hi);
            let mut p = *x;
            let d = box_distance(lo, hi, dim, x);
            if d > 0.0 {
                // Project onto the nearest face.
                let mut best = (f64::INFINITY, 0usize, 0.0);
                for a in 0..dim {
                    for face in [lo[a], hi[a]] {
                        let e = (x[a] - face).abs();
                        if e < best.0 {
                            best = (e, a, face);
                        }
                    }
                }
                p[best.1] = best.2;
            } else {
                for a in 0..dim {
                    p[a] = x[a].clamp(lo[a], hi[a]);
                }
            }
            Some(p)
        }
        Shape::Ball { center, radius } => {
            let r = x - center;
            let n = r.norm();
            if n == 0.0 {
                None
            } else {
                Some(center + r * (radius / n))
            }
        }
        Shape::Polygon { vertices } => Some(polygon::nearest_on_chain(x, vertices, vertices.len() > 2)),
        Shape::Graph { chain, .. } => Some(polygon::nearest_on_chain(x, chain, false)),
        Shape::Implicit { boundary, .. } | Shape::Union { boundary, .. } => boundary.index.nearest(x),
        Shape::Complement(inner) => shape_nearest(inner, x),
    }
}

fn boundary_polyline(s: &Shape, h: f64) -> Result<Vec<Segment>> {
    let closed = |pts: &[Point]| -> Vec<Segment> {
        (0..pts.len()).map(|i| (pts[i], pts[(i + 1) % pts.len()])).collect()
    };
    match s {
        Shape::Box { lo, hi } => {
            if box_dim(lo, hi) != 2 {
                return Err(Error::Geometry("boundary polyline of a 3D box".into()));
            }
            Ok(closed(&[
                point2(lo.x, lo.y),
                point2(hi.x, lo.y),
                point2(hi.x, hi.y),
                point2(lo.x, hi.y),
            ]))
        }
        Shape::Ball { center, radius } => {
            let n = ((TAU * radius / h).ceil() as usize).max(16);
            let pts: Vec<Point> = (0..n)
                .map(|i| {
                    let t = TAU * i as f64 / n as f64;
                    point2(center.x + radius * t.cos(), center.y + radius * t.sin())
                })
                .collect();
            Ok(closed(&pts))
        }
        Shape::Polygon { vertices } => {
            if vertices.len() == 2 {
                Ok(vec![(vertices[0], vertices[1])])
            } else {
                Ok(closed(vertices))
            }
        }
        Shape::Graph { chain, .. } => Ok(chain.windows(2).map(|w| (w[0], w[1])).collect()),
        Shape::Implicit { boundary, .. } | Shape::Union { boundary, .. } => {
            Ok(boundary.index.segments().to_vec())
        }
        Shape::Complement(inner) => boundary_polyline(inner, h),
    }
}

/// Appends the parts of `[p, q]` lying outside the open set `other`.
fn clip_outside(p: &Point, q: &Point, other: &Shape, out: &mut Vec<Segment>) {
    const PIECES: usize = 8;
    let at = |t: f64| p + (q - p) * t;
    let inside = |t: f64| shape_distance(other, &at(t)) > 0.0;
    let mut cuts = vec![0.0];
    for k in 0..PIECES {
        let (t0, t1) = (k as f64 / PIECES as f64, (k + 1) as f64 / PIECES as f64);
        if inside(t0) != inside(t1) {
            let (mut a, mut b) = (t0, t1);
            let sa = inside(a);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if inside(m) == sa {
                    a = m;
                } else {
                    b = m;
                }
            }
            cuts.push(0.5 * (a + b));
        }
    }
    cuts.push(1.0);
    for w in cuts.windows(2) {
        if w[1] > w[0] && !inside(0.5 * (w[0] + w[1])) {
            out.push((at(w[0]), at(w[1])));
        }
    }
}
