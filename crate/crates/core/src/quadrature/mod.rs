//! Adaptive volume integration over set descriptors, one-dimensional adaptive rules and
//! principal values.

pub mod rules;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{PI, TAU};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{point2, polygon, Aabb, GraphProfile, Point, SetDescriptor, SetSpec};
use rules::{gauss_kronrod, GaussLegendre, TRIANGLE_RULE};

/// Outcome of an adaptive volume integral.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    /// Sum over leaf cells of |coarse − refined| estimates.
    pub error_estimate: f64,
    pub cells_used: usize,
    /// Volume of cells around singular points that were dropped once they became tiny.
    pub excluded_measure: f64,
}

#[derive(Clone, Debug)]
pub struct QuadratureOptions {
    pub tol: f64,
    pub max_cells: usize,
    /// Gauss points per axis on each cell.
    pub order: usize,
    /// Cells containing a singular point are dropped once smaller than this.
    pub exclusion_size: f64,
    /// Initial subdivisions per axis of each patch.
    pub initial_split: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions {
            tol: 1e-6,
            max_cells: 10_000_000,
            order: 4,
            exclusion_size: 1e-9,
            initial_split: 4,
        }
    }
}

impl QuadratureOptions {
    pub fn with_tol(tol: f64) -> Self {
        QuadratureOptions {
            tol,
            ..Default::default()
        }
    }
}

/// Smooth image of the unit square or cube on which tensor Gauss rules are applied.
#[derive(Clone, Debug, PartialEq)]
pub enum Patch {
    Box { lo: Point, hi: Point, dim: usize },
    /// Bilinear map of the unit square onto the quadrilateral `p0 p1 p2 p3`.
    Quad { p: [Point; 4] },
    /// Collapsed square onto triangle `abc`; the Jacobian vanishes at `a`.
    Triangle { a: Point, b: Point, c: Point },
    /// Planar polar sector `r0 < r < r1`, `t0 < θ < t1`.
    Annulus { center: Point, r0: f64, r1: f64, t0: f64, t1: f64 },
    /// Spherical shell `r0 < |x − c| < r1`.
    SphericalShell { center: Point, r0: f64, r1: f64 },
    /// Axis-aligned box intersected with a region given by a 1-Lipschitz level function.
    Cut { lo: Point, hi: Point, dim: usize },
}

impl Patch {
    fn dim(&self) -> usize {
        match self {
            Patch::Box { dim, .. } | Patch::Cut { dim, .. } => *dim,
            Patch::SphericalShell { .. } => 3,
            _ => 2,
        }
    }

    /// Point and Jacobian at parameter `u ∈ [0,1]^dim`.
    fn map(&self, u: &[f64; 3]) -> (Point, f64) {
        match self {
            Patch::Box { lo, hi, dim } | Patch::Cut { lo, hi, dim } => {
                let mut x = *lo;
                let mut j = 1.0;
                for a in 0..*dim {
                    let w = hi[a] - lo[a];
                    x[a] += u[a] * w;
                    j *= w;
                }
                (x, j)
            }
            Patch::Quad { p } => {
                let (s, t) = (u[0], u[1]);
                let x = p[0] * ((1.0 - s) * (1.0 - t)) + p[1] * (s * (1.0 - t)) + p[2] * (s * t) + p[3] * ((1.0 - s) * t);
                let dxs = (p[1] - p[0]) * (1.0 - t) + (p[2] - p[3]) * t;
                let dxt = (p[3] - p[0]) * (1.0 - s) + (p[2] - p[1]) * s;
                (x, (dxs.x * dxt.y - dxs.y * dxt.x).abs())
            }
            Patch::Triangle { a, b, c } => {
                let (s, t) = (u[0], u[1]);
                let (e1, e2) = (b - a, c - b);
                let x = a + e1 * s + e2 * (s * t);
                (x, s * (e1.x * e2.y - e1.y * e2.x).abs())
            }
            Patch::Annulus { center, r0, r1, t0, t1 } => {
                let r = r0 + u[0] * (r1 - r0);
                let t = t0 + u[1] * (t1 - t0);
                (center + point2(r * t.cos(), r * t.sin()), r * (r1 - r0) * (t1 - t0))
            }
            Patch::SphericalShell { center, r0, r1 } => {
                let r = r0 + u[0] * (r1 - r0);
                let th = PI * u[1];
                let ph = TAU * u[2];
                let x = center + Point::new(r * th.sin() * ph.cos(), r * th.sin() * ph.sin(), r * th.cos());
                (x, r * r * th.sin() * (r1 - r0) * PI * TAU)
            }
        }
    }

    /// Bounding box of the image of a parameter cell (sampled at corners and mid-points).
    fn image_bbox(&self, lo: &[f64; 3], hi: &[f64; 3]) -> Aabb {
        let dim = self.dim();
        let mut b = Aabb::new(Point::repeat(f64::INFINITY), Point::repeat(f64::NEG_INFINITY));
        let steps = 3usize.pow(dim as u32);
        for k in 0..steps {
            let mut u = [0.0; 3];
            let mut kk = k;
            for a in 0..dim {
                u[a] = lo[a] + 0.5 * (kk % 3) as f64 * (hi[a] - lo[a]);
                kk /= 3;
            }
            let (x, _) = self.map(&u);
            b = b.union(&Aabb::new(x, x));
        }
        if dim == 2 {
            b.min.z = 0.0;
            b.max.z = 0.0;
        }
        // Curved patches bulge between samples; pad by a fraction of the extent.
        let pad = match self {
            Patch::Annulus { .. } | Patch::SphericalShell { .. } => 0.25 * (b.max - b.min).amax(),
            _ => 0.0,
        };
        b.inflated(pad, dim)
    }
}

/// An integration region: a level function positive inside plus optional exact patches.
pub trait Region: Sync {
    fn dim(&self) -> usize;
    fn bbox(&self) -> Aabb;
    /// 1-Lipschitz function, positive exactly on the region.
    fn level(&self, x: &Point) -> f64;
    /// Exact decomposition into patches, when one is known.
    fn patches(&self) -> Option<Vec<Patch>> {
        None
    }
}

fn polygon_patches(vertices: &[Point]) -> Vec<Patch> {
    polygon::triangulate(vertices)
        .into_iter()
        .map(|[a, b, c]| Patch::Triangle { a, b, c })
        .collect()
}

fn graph_patches(profile: &GraphProfile, window: [f64; 2], top: f64) -> Vec<Patch> {
    profile
        .breakpoints(window[0], window[1])
        .windows(2)
        .map(|w| Patch::Quad {
            p: [
                point2(w[0], profile.eval(w[0])),
                point2(w[1], profile.eval(w[1])),
                point2(w[1], top),
                point2(w[0], top),
            ],
        })
        .collect()
}

fn box_corners(set: &SetDescriptor) -> Option<(Point, Point)> {
    match set.spec() {
        SetSpec::Box { .. } => {
            let b = set.bounding_box();
            Some((b.min, b.max))
        }
        _ => None,
    }
}

impl Region for SetDescriptor {
    fn dim(&self) -> usize {
        SetDescriptor::dim(self)
    }

    fn bbox(&self) -> Aabb {
        self.bounding_box()
    }

    fn level(&self, x: &Point) -> f64 {
        self.signed_distance(x)
    }

    fn patches(&self) -> Option<Vec<Patch>> {
        match self.spec() {
            SetSpec::Box { .. } => {
                let (lo, hi) = box_corners(self)?;
                Some(vec![Patch::Box { lo, hi, dim: self.dim() }])
            }
            SetSpec::Ball { center, radius } => {
                let c = Point::new(center[0], center[1], center.get(2).copied().unwrap_or(0.0));
                if *radius == 0.0 {
                    return Some(Vec::new());
                }
                if center.len() == 2 {
                    Some(vec![Patch::Annulus {
                        center: c,
                        r0: 0.0,
                        r1: *radius,
                        t0: 0.0,
                        t1: TAU,
                    }])
                } else {
                    Some(vec![Patch::SphericalShell {
                        center: c,
                        r0: 0.0,
                        r1: *radius,
                    }])
                }
            }
            SetSpec::Polygon { vertices } => {
                if vertices.len() < 3 {
                    return Some(Vec::new());
                }
                let pts: Vec<Point> = vertices.iter().map(|v| point2(v[0], v[1])).collect();
                Some(polygon_patches(&pts))
            }
            SetSpec::Graph { profile, window, top } => Some(graph_patches(profile, *window, *top)),
            _ => None,
        }
    }
}

/// The shell `{lo < d < hi}` of a set.
pub struct Shell<'a> {
    pub set: &'a SetDescriptor,
    pub lo: f64,
    pub hi: f64,
}

impl Region for Shell<'_> {
    fn dim(&self) -> usize {
        self.set.dim()
    }

    fn bbox(&self) -> Aabb {
        self.set.sampling_box((-self.lo).max(0.0))
    }

    fn level(&self, x: &Point) -> f64 {
        let d = self.set.signed_distance(x);
        (d - self.lo).min(self.hi - d)
    }

    fn patches(&self) -> Option<Vec<Patch>> {
        if self.lo < 0.0 || self.set.dim() != 2 {
            return None;
        }
        match self.set.spec() {
            SetSpec::Box { .. } => {
                let (lo, hi) = box_corners(self.set)?;
                let (a, b) = (self.lo, self.hi.min(0.5 * (hi - lo).x.min((hi - lo).y)));
                if !(a < b) {
                    return Some(Vec::new());
                }
                let outer = [point2(lo.x + a, lo.y + a), point2(hi.x - a, lo.y + a), point2(hi.x - a, hi.y - a), point2(lo.x + a, hi.y - a)];
                let inner = [point2(lo.x + b, lo.y + b), point2(hi.x - b, lo.y + b), point2(hi.x - b, hi.y - b), point2(lo.x + b, hi.y - b)];
                Some(
                    (0..4)
                        .map(|k| Patch::Quad {
                            p: [outer[k], outer[(k + 1) % 4], inner[(k + 1) % 4], inner[k]],
                        })
                        .collect(),
                )
            }
            SetSpec::Ball { center, radius } => {
                let c = point2(center[0], center[1]);
                let (r0, r1) = ((radius - self.hi).max(0.0), radius - self.lo);
                if !(r0 < r1) {
                    return Some(Vec::new());
                }
                Some(vec![Patch::Annulus {
                    center: point2(c.x, c.y),
                    r0,
                    r1,
                    t0: 0.0,
                    t1: TAU,
                }])
            }
            _ => None,
        }
    }
}

/// Intersection of a region with a ball.
pub struct BallSection<'a, R: Region + ?Sized> {
    pub region: &'a R,
    pub center: Point,
    pub radius: f64,
}

impl<R: Region + ?Sized> Region for BallSection<'_, R> {
    fn dim(&self) -> usize {
        self.region.dim()
    }

    fn bbox(&self) -> Aabb {
        let r = Point::repeat(self.radius);
        let mut b = Aabb::new(self.center - r, self.center + r);
        if self.dim() == 2 {
            b.min.z = 0.0;
            b.max.z = 0.0;
        }
        b
    }

    fn level(&self, x: &Point) -> f64 {
        self.region.level(x).min(self.radius - (x - self.center).norm())
    }
}

/// Intersection of two regions. Two boxes intersect to an exact box patch.
pub struct Intersection<'a> {
    pub a: &'a dyn Region,
    pub b: &'a dyn Region,
}

impl Region for Intersection<'_> {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn bbox(&self) -> Aabb {
        let (a, b) = (self.a.bbox(), self.b.bbox());
        let mut out = Aabb::new(a.min.sup(&b.min), a.max.inf(&b.max));
        for k in 0..3 {
            out.max[k] = out.max[k].max(out.min[k]);
        }
        out
    }

    fn level(&self, x: &Point) -> f64 {
        self.a.level(x).min(self.b.level(x))
    }

    fn patches(&self) -> Option<Vec<Patch>> {
        match (self.a.patches()?.as_slice(), self.b.patches()?.as_slice()) {
            ([Patch::Box { lo: l1, hi: h1, dim }], [Patch::Box { lo: l2, hi: h2, .. }]) => {
                let (lo, hi) = (l1.sup(l2), h1.inf(h2));
                if (0..*dim).any(|k| hi[k] <= lo[k]) {
                    return Some(Vec::new());
                }
                Some(vec![Patch::Box { lo, hi, dim: *dim }])
            }
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Cell {
    patch: usize,
    lo: [f64; 3],
    hi: [f64; 3],
    fine: f64,
    err: f64,
    size: f64,
    center: Point,
    singular: bool,
}

#[derive(PartialEq)]
struct Keyed(f64, usize);

impl Eq for Keyed {}

impl Ord for Keyed {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .partial_cmp(&other.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Keyed {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Integrator<'a, F: Fn(&Point) -> f64 + Sync> {
    f: &'a F,
    region: &'a dyn Region,
    patches: Vec<Patch>,
    singular: &'a [Point],
    gauss: Vec<(f64, f64)>,
    opts: &'a QuadratureOptions,
}

enum CellKind {
    Inside,
    Outside,
    Straddle,
}

impl<F: Fn(&Point) -> f64 + Sync> Integrator<'_, F> {
    fn classify(&self, patch: &Patch, lo: &[f64; 3], hi: &[f64; 3]) -> CellKind {
        if !matches!(patch, Patch::Cut { .. }) {
            return CellKind::Inside;
        }
        let b = patch.image_bbox(lo, hi);
        let c = 0.5 * (b.min + b.max);
        let r = 0.5 * (b.max - b.min).norm();
        let l = self.region.level(&c);
        if l > r {
            CellKind::Inside
        } else if l < -r {
            CellKind::Outside
        } else {
            CellKind::Straddle
        }
    }

    /// Tensor Gauss rule on a parameter cell; non-finite samples yield NaN.
    fn rule(&self, patch: &Patch, lo: &[f64; 3], hi: &[f64; 3]) -> f64 {
        let dim = patch.dim();
        match self.classify(patch, lo, hi) {
            CellKind::Outside => return 0.0,
            CellKind::Straddle if dim == 2 => return self.clipped_rule(patch, lo, hi),
            _ => {}
        }
        let straddle = matches!(self.classify(patch, lo, hi), CellKind::Straddle);
        let n = self.gauss.len();
        let total = n.pow(dim as u32);
        let mut vol = 1.0;
        for a in 0..dim {
            vol *= hi[a] - lo[a];
        }
        let mut acc = 0.0;
        for k in 0..total {
            let mut u = [0.0; 3];
            let mut w = vol;
            let mut kk = k;
            for a in 0..dim {
                let (x, wx) = self.gauss[kk % n];
                u[a] = lo[a] + x * (hi[a] - lo[a]);
                w *= wx;
                kk /= n;
            }
            let (x, j) = patch.map(&u);
            if straddle && self.region.level(&x) <= 0.0 {
                continue;
            }
            if j == 0.0 {
                continue;
            }
            acc += w * j * (self.f)(&x);
        }
        acc
    }

    /// Planar cut cell: clip two triangles by the linear interpolant of the level function.
    fn clipped_rule(&self, patch: &Patch, lo: &[f64; 3], hi: &[f64; 3]) -> f64 {
        let p = [
            [lo[0], lo[1], 0.0],
            [hi[0], lo[1], 0.0],
            [hi[0], hi[1], 0.0],
            [lo[0], hi[1], 0.0],
        ]
        .map(|u| patch.map(&u).0);
        let v = p.map(|x| self.region.level(&x));
        let mut acc = 0.0;
        for tri in [[0, 1, 2], [0, 2, 3]] {
            let mut poly: Vec<(Point, f64)> = Vec::with_capacity(4);
            for k in 0..3 {
                let (a, va) = (p[tri[k]], v[tri[k]]);
                let (b, vb) = (p[tri[(k + 1) % 3]], v[tri[(k + 1) % 3]]);
                if va > 0.0 {
                    poly.push((a, va));
                }
                if (va > 0.0) != (vb > 0.0) {
                    let t = va / (va - vb);
                    poly.push((a + (b - a) * t, 0.0));
                }
            }
            for k in 1..poly.len().saturating_sub(1) {
                let (a, b, c) = (poly[0].0, poly[k].0, poly[k + 1].0);
                let area = 0.5 * ((b - a).x * (c - a).y - (b - a).y * (c - a).x).abs();
                if area == 0.0 {
                    continue;
                }
                acc += area
                    * TRIANGLE_RULE
                        .iter()
                        .map(|(bc, w)| w * (self.f)(&(a * bc[0] + b * bc[1] + c * bc[2])))
                        .sum::<f64>();
            }
        }
        acc
    }

    fn children(lo: &[f64; 3], hi: &[f64; 3], dim: usize) -> Vec<([f64; 3], [f64; 3])> {
        (0..1usize << dim)
            .map(|c| {
                let (mut l, mut h) = (*lo, *hi);
                for a in 0..dim {
                    let m = 0.5 * (lo[a] + hi[a]);
                    if c >> a & 1 == 1 {
                        l[a] = m;
                    } else {
                        h[a] = m;
                    }
                }
                (l, h)
            })
            .collect()
    }

    fn make_cell(&self, patch: usize, lo: [f64; 3], hi: [f64; 3]) -> Cell {
        let p = &self.patches[patch];
        let dim = p.dim();
        let coarse = self.rule(p, &lo, &hi);
        let fine: f64 = Self::children(&lo, &hi, dim).iter().map(|(l, h)| self.rule(p, l, h)).sum();
        let b = p.image_bbox(&lo, &hi);
        let size = (b.max - b.min).amax();
        let center = 0.5 * (b.min + b.max);
        let singular = self.singular.iter().any(|s| b.inflated(1e-14 * (1.0 + size), dim).contains(s, dim));
        let err = if coarse.is_finite() && fine.is_finite() {
            // Nested rules can agree by accident next to a singularity, so such cells
            // answer for their whole contribution.
            if singular {
                (coarse - fine).abs().max(fine.abs())
            } else {
                (coarse - fine).abs()
            }
        } else {
            f64::INFINITY
        };
        Cell {
            patch,
            lo,
            hi,
            fine,
            err,
            size,
            center,
            singular,
        }
    }

    fn cell_measure(&self, c: &Cell) -> f64 {
        let p = &self.patches[c.patch];
        let dim = p.dim();
        let mut mid = [0.0; 3];
        let mut vol = 1.0;
        for a in 0..dim {
            mid[a] = 0.5 * (c.lo[a] + c.hi[a]);
            vol *= c.hi[a] - c.lo[a];
        }
        p.map(&mid).1 * vol
    }

    fn run(&self) -> Result<QuadratureResult> {
        let split = self.opts.initial_split.max(1);
        let mut seeds = Vec::new();
        for (pi, p) in self.patches.iter().enumerate() {
            let dim = p.dim();
            let count = split.pow(dim as u32);
            for k in 0..count {
                let (mut lo, mut hi) = ([0.0; 3], [0.0; 3]);
                let mut kk = k;
                for a in 0..dim {
                    let i = kk % split;
                    kk /= split;
                    lo[a] = i as f64 / split as f64;
                    hi[a] = (i + 1) as f64 / split as f64;
                }
                seeds.push((pi, lo, hi));
            }
        }
        let mut cells: Vec<Cell> = seeds.par_iter().map(|&(p, lo, hi)| self.make_cell(p, lo, hi)).collect();
        let mut alive = vec![true; cells.len()];
        let mut excluded = 0.0;
        let mut heap: BinaryHeap<Keyed> = BinaryHeap::new();
        let min_size = self.opts.exclusion_size * (1.0 + self.region.bbox().diagonal());
        let mut total_err = 0.0;
        for (i, c) in cells.iter_mut().enumerate() {
            if !c.err.is_finite() && c.size < min_size {
                alive[i] = false;
                excluded += self.cell_measure(c);
                continue;
            }
            total_err += c.err;
            heap.push(Keyed(c.err, i));
        }
        let mut leaves = heap.len();
        let mut rounds = 0usize;
        while total_err > self.opts.tol && leaves < self.opts.max_cells {
            rounds += 1;
            if rounds % 64 == 0 {
                total_err = heap.iter().map(|k| k.0).sum();
                if total_err <= self.opts.tol {
                    break;
                }
            }
            // Refine a deterministic batch of the worst cells.
            let mut batch = Vec::new();
            while let Some(Keyed(err, i)) = heap.pop() {
                if err == 0.0 {
                    heap.push(Keyed(err, i));
                    break;
                }
                batch.push(i);
                if batch.len() >= 256 || err < 0.1 * self.opts.tol / (leaves as f64) {
                    break;
                }
            }
            if batch.is_empty() {
                break;
            }
            let mut work = Vec::new();
            for &i in &batch {
                let c = cells[i];
                alive[i] = false;
                total_err -= if c.err.is_finite() { c.err } else { 0.0 };
                leaves -= 1;
                if c.singular && c.size < min_size {
                    excluded += self.cell_measure(&c);
                    continue;
                }
                if c.size < 1e-15 * (1.0 + self.region.bbox().diagonal()) {
                    // Nothing left to resolve; keep the refined value.
                    let mut kept = c;
                    kept.err = 0.0;
                    let id = cells.len();
                    cells.push(kept);
                    alive.push(true);
                    leaves += 1;
                    heap.push(Keyed(0.0, id));
                    continue;
                }
                let dim = self.patches[c.patch].dim();
                for (lo, hi) in Self::children(&c.lo, &c.hi, dim) {
                    work.push((c.patch, lo, hi));
                }
            }
            let new: Vec<Cell> = work.par_iter().map(|&(p, lo, hi)| self.make_cell(p, lo, hi)).collect();
            for c in new {
                let id = cells.len();
                if !c.err.is_finite() && c.size < min_size {
                    excluded += self.cell_measure(&c);
                    cells.push(c);
                    alive.push(false);
                    continue;
                }
                total_err += if c.err.is_finite() { c.err } else { 0.0 };
                if !c.err.is_finite() {
                    total_err = f64::INFINITY;
                }
                cells.push(c);
                alive.push(true);
                leaves += 1;
                heap.push(Keyed(c.err, id));
            }
            if !total_err.is_finite() {
                total_err = heap.iter().map(|k| k.0).sum();
            }
        }
        let mut value = 0.0;
        let mut err = 0.0;
        let mut worst: Option<&Cell> = None;
        for (c, &a) in cells.iter().zip(&alive) {
            if a {
                value += c.fine;
                err += c.err;
                if worst.map_or(true, |w| c.err > w.err) {
                    worst = Some(c);
                }
            }
        }
        if !(err <= self.opts.tol) {
            let loc = worst.map(|c| c.center).unwrap_or_else(Point::zeros);
            return Err(Error::Quadrature {
                cells: cells.len(),
                estimate: value,
                tol: self.opts.tol,
                location: [loc.x, loc.y, loc.z],
            });
        }
        Ok(QuadratureResult {
            value,
            error_estimate: err,
            cells_used: cells.len(),
            excluded_measure: excluded,
        })
    }
}

/// Adaptive integral of `f` over `region`; cells around `singular_points` are refined until
/// their contribution stabilises and finally dropped when smaller than the exclusion size.
///
/// The error estimate compares nested tensor rules, so a jump of `f` that only clips a cell
/// between sample points goes unnoticed. Known discontinuities (e.g. the edge of a test
/// function's support) belong in the region, for instance via [`BallSection`].
pub fn volume_integral<F>(f: F, region: &dyn Region, singular_points: &[Point], tol: f64) -> Result<QuadratureResult>
where
    F: Fn(&Point) -> f64 + Sync,
{
    volume_integral_with(f, region, singular_points, &QuadratureOptions::with_tol(tol))
}

pub fn volume_integral_with<F>(f: F, region: &dyn Region, singular_points: &[Point], opts: &QuadratureOptions) -> Result<QuadratureResult>
where
    F: Fn(&Point) -> f64 + Sync,
{
    let dim = region.dim();
    let patches = match region.patches() {
        Some(p) => p,
        None => {
            let b = region.bbox();
            if !(b.diagonal().is_finite()) {
                return Err(Error::Geometry("cannot integrate over an unbounded region".into()));
            }
            // Square cells so that the clipping is isotropic.
            let side = (0..dim).map(|a| b.max[a] - b.min[a]).fold(0.0, f64::max);
            let mut hi = b.min;
            for a in 0..dim {
                hi[a] = b.min[a] + side;
            }
            vec![Patch::Cut { lo: b.min, hi, dim }]
        }
    };
    let split = if patches.iter().any(|p| matches!(p, Patch::Cut { .. })) {
        opts.initial_split.max(16)
    } else {
        opts.initial_split
    };
    let opts = QuadratureOptions {
        initial_split: split,
        ..opts.clone()
    };
    let integrator = Integrator {
        f: &f,
        region,
        patches,
        singular: singular_points,
        gauss: GaussLegendre::new(opts.order).unit(),
        opts: &opts,
    };
    integrator.run()
}

/// Globally adaptive Gauss–Kronrod integral on `[a, b]`: `(value, error estimate)`.
pub fn integrate_1d<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<(f64, f64)> {
    integrate_1d_breaks(&mut f, &[a, b], tol)
}

/// As [`integrate_1d`] with interior break points where `f` may have kinks.
pub fn integrate_1d_breaks<F: FnMut(f64) -> f64>(f: &mut F, points: &[f64], tol: f64) -> Result<(f64, f64)> {
    const MAX_INTERVALS: usize = 20_000;
    let mut heap: BinaryHeap<Keyed> = BinaryHeap::new();
    let mut store: Vec<(f64, f64, f64, f64)> = Vec::new();
    for w in points.windows(2) {
        if w[1] > w[0] {
            let (v, e) = gauss_kronrod(f, w[0], w[1]);
            store.push((w[0], w[1], v, e));
            heap.push(Keyed(e, store.len() - 1));
        }
    }
    let mut total: f64 = store.iter().map(|s| s.3).sum();
    let mut alive = vec![true; store.len()];
    while total > tol && heap.len() < MAX_INTERVALS {
        let Some(Keyed(e, i)) = heap.pop() else { break };
        let (a, b, _, _) = store[i];
        let m = 0.5 * (a + b);
        if !(m > a && m < b) {
            heap.push(Keyed(0.0, i));
            total -= e;
            continue;
        }
        alive[i] = false;
        total -= e;
        for (l, r) in [(a, m), (m, b)] {
            let (v, e2) = gauss_kronrod(f, l, r);
            store.push((l, r, v, e2));
            alive.push(true);
            heap.push(Keyed(e2, store.len() - 1));
            total += e2;
        }
        if heap.len() % 128 == 0 {
            total = heap.iter().map(|k| k.0).sum();
        }
    }
    let (mut v, mut e) = (0.0, 0.0);
    for (s, &a) in store.iter().zip(&alive) {
        if a {
            v += s.2;
            e += s.3;
        }
    }
    if !v.is_finite() || e > tol.max(1e-14 * v.abs()) * 10.0 {
        let worst = store
            .iter()
            .zip(&alive)
            .filter(|(_, &a)| a)
            .max_by(|x, y| x.0 .3.partial_cmp(&y.0 .3).unwrap_or(Ordering::Equal))
            .map(|(s, _)| 0.5 * (s.0 + s.1))
            .unwrap_or(0.0);
        return Err(Error::Quadrature {
            cells: store.len(),
            estimate: v,
            tol,
            location: [worst, 0.0, 0.0],
        });
    }
    Ok((v, e))
}

/// `P.V. ∫_{−a}^{a} f(x)/x dx = ∫_0^a (f(x) − f(−x))/x dx`.
pub fn principal_value<F: Fn(f64) -> f64>(f: F, a: f64, tol: f64) -> Result<(f64, f64)> {
    integrate_1d(|x| if x == 0.0 { 0.0 } else { (f(x) - f(-x)) / x }, 0.0, a, tol)
}

/// `∫_{B(x, r) ∩ E} f dy` in polar coordinates about `x` for a planar region star-shaped
/// with respect to `x` (each ray leaves `E` at most once inside the ball).
pub fn ball_section_integral<F, R>(f: F, region: &R, x: &Point, r: f64, tol: f64) -> Result<(f64, f64)>
where
    F: Fn(&Point) -> f64,
    R: Region + ?Sized,
{
    if region.dim() != 2 {
        return Err(Error::Geometry("ball sections are planar only".into()));
    }
    // Along each ray the section is an interval (0, S(θ)) or empty.
    let exit = |t: f64| -> (f64, f64) {
        let e = point2(t.cos(), t.sin());
        let inside = |s: f64| region.level(&(x + e * s)) > 0.0;
        if inside(r) {
            return (0.0, r);
        }
        let s_min = 1e-9 * r;
        if !inside(s_min) {
            return (0.0, 0.0);
        }
        let (mut a, mut b) = (s_min, r);
        for _ in 0..64 {
            let m = 0.5 * (a + b);
            if inside(m) {
                a = m;
            } else {
                b = m;
            }
        }
        (0.0, 0.5 * (a + b))
    };
    let mut err_total = 0.0;
    let mut failure = None;
    let mut angular = |t: f64| -> f64 {
        let (s0, s1) = exit(t);
        if s1 <= s0 {
            return 0.0;
        }
        let e = point2(t.cos(), t.sin());
        match integrate_1d(|s| f(&(x + e * s)) * s, s0, s1, 0.01 * tol) {
            Ok((v, er)) => {
                err_total += er;
                v
            }
            Err(e) => {
                failure = Some(e);
                0.0
            }
        }
    };
    let breaks: Vec<f64> = (0..=8).map(|k| TAU * k as f64 / 8.0 - PI).collect();
    let (v, e) = integrate_1d_breaks(&mut angular, &breaks, tol)?;
    if let Some(err) = failure {
        return Err(err);
    }
    Ok((v, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ImplicitShape, SetSpec};

    fn set(spec: SetSpec) -> SetDescriptor {
        SetDescriptor::new(spec).unwrap()
    }

    #[test]
    fn unit_ball_area() {
        let r = volume_integral(|_| 1.0, &set(SetSpec::disk([0.0, 0.0], 1.0)), &[], 1e-8).unwrap();
        assert!((r.value - PI).abs() < 1e-8);
    }

    #[test]
    fn density_two_on_square() {
        let r = volume_integral(|_| 2.0, &set(SetSpec::unit_square()), &[], 1e-8).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn whitney_against_hat_matches_radial_form() {
        // F = x/|x|², φ = (R − |y − x0|)⁺ with x0 = 0: F·∇φ = −1/|y| on B(0,R), so the
        // integral is −2πR by the radial reduction ∫_0^R (−1/r) 2πr dr.
        let radius = 0.6;
        let f = |y: &Point| {
            let r = y.norm();
            if r < radius {
                -1.0 / r
            } else {
                0.0
            }
        };
        let square = set(SetSpec::rect([-1.0, -1.0], [1.0, 1.0]));
        let origin = Point::zeros();
        let region = BallSection { region: &square, center: origin, radius };
        let r = volume_integral(f, &region, &[origin], 1e-7).unwrap();
        // Radial oracle by 1D quadrature.
        let (oracle, _) = integrate_1d(|r| -TAU * r / r, 0.0, radius, 1e-12).unwrap();
        assert!((r.value - oracle).abs() < 1e-5, "{} vs {}", r.value, oracle);
        assert!(r.excluded_measure <= PI * (1e-9 * 4.0f64).powi(2) * 4.0);
    }

    #[test]
    fn cut_cells_for_sampled_sets() {
        let ell = set(SetSpec::Implicit {
            shape: ImplicitShape::Ellipse {
                center: [0.0, 0.0],
                semi_axes: [0.5, 0.3],
            },
            resolution: Some(1e-4),
        });
        let r = volume_integral(|_| 1.0, &ell, &[], 1e-5).unwrap();
        // Polyline with 1e-4 spacing: area error well below 1e-6.
        assert!((r.value - PI * 0.15).abs() < 1e-5, "{}", r.value);
    }

    #[test]
    fn shells_and_triangles() {
        let sq = set(SetSpec::unit_square());
        let shell = Shell { set: &sq, lo: 0.0, hi: 0.1 };
        let r = volume_integral(|_| 1.0, &shell, &[], 1e-10).unwrap();
        assert!((r.value - (1.0 - 0.64)).abs() < 1e-12);
        let l = set(SetSpec::l_shape());
        let r = volume_integral(|x| x.x, &l, &[], 1e-10).unwrap();
        // ∫ x over the L-shape: [0,2]×[0,1] gives 2, [0,1]×[1,2] gives 1/2.
        assert!((r.value - 2.5).abs() < 1e-10);
    }

    #[test]
    fn linearity() {
        let sq = set(SetSpec::unit_square());
        let f = |x: &Point| (3.0 * x.x).sin();
        let g = |x: &Point| (x.x * x.y).exp();
        let tol = 1e-9;
        let a = volume_integral(f, &sq, &[], tol).unwrap();
        let b = volume_integral(g, &sq, &[], tol).unwrap();
        let c = volume_integral(|x| 2.0 * f(x) - 0.5 * g(x), &sq, &[], tol).unwrap();
        assert!((c.value - (2.0 * a.value - 0.5 * b.value)).abs() < 3.0 * tol);
    }

    #[test]
    fn principal_value_of_shifted_constant() {
        // P.V. ∫_{−1}^{1} (1 + x)/x dx = 2.
        let (v, _) = principal_value(|x| 1.0 + x, 1.0, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn half_disk_section() {
        let e = set(SetSpec::rect([-1.0, -1.0], [1.0, 0.0]));
        let (v, _) = ball_section_integral(|_| 1.0, &e, &point2(0.3, 0.0), 0.1, 1e-10).unwrap();
        assert!((v - 0.5 * PI * 0.01).abs() < 1e-9);
    }
}
