//! Level sets `{u = c}` of sampled scalar fields: marching squares (2D), marching
//! tetrahedra (3D), facet quadrature and ε schedules.

use std::io::Write;

use rayon::prelude::*;

use super::grid::{Lattice, SampledField};
use super::{Aabb, Point, SetDescriptor};
use crate::error::{Error, Result};
use crate::quadrature::rules::{GaussLegendre, TRIANGLE_RULE};

/// Crossing cells whose interpolated gradient is below this are counted as degenerate.
pub const DEGENERATE_CELL_GRADIENT: f64 = 0.1;
/// A level is bad when more than this fraction of crossing cells is degenerate.
pub const MAX_DEGENERATE_FRACTION: f64 = 0.005;
/// A level is bad when more than this fraction of crossing cells is a saddle.
pub const MAX_AMBIGUOUS_FRACTION: f64 = 0.001;

/// One segment (2D) or triangle (3D) of a level-set mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Facet {
    pub centroid: Point,
    /// Unit normal pointing toward larger values of the sampled function.
    pub normal: Point,
    pub measure: f64,
    /// Segment end points in the first two slots (2D) or triangle corners (3D).
    pub vertices: [Point; 3],
}

impl Facet {
    fn segment(a: Point, b: Point, normal: Point) -> Self {
        Facet {
            centroid: 0.5 * (a + b),
            normal,
            measure: (b - a).norm(),
            vertices: [a, b, b],
        }
    }

    fn triangle(a: Point, b: Point, c: Point, normal: Point) -> Self {
        Facet {
            centroid: (a + b + c) / 3.0,
            normal,
            measure: 0.5 * (b - a).cross(&(c - a)).norm(),
            vertices: [a, b, c],
        }
    }
}

/// Polygonal approximation of a level set together with its extraction statistics.
#[derive(Clone, Debug, Default)]
pub struct SurfaceMesh {
    pub dim: usize,
    pub level: f64,
    pub facets: Vec<Facet>,
    pub total_measure: f64,
    pub crossing_cells: usize,
    pub degenerate_cells: usize,
    pub ambiguous_cells: usize,
    /// Segment end points used by a single segment (2D only); zero for closed curves.
    pub open_ends: usize,
}

impl SurfaceMesh {
    pub fn is_empty(&self) -> bool {
        self.facets.is_empty()
    }

    /// Outcome of the degeneracy screen for this level.
    pub fn is_good(&self) -> bool {
        if self.crossing_cells == 0 {
            return true;
        }
        let n = self.crossing_cells as f64;
        (self.degenerate_cells as f64) <= MAX_DEGENERATE_FRACTION * n
            && (self.ambiguous_cells as f64) <= MAX_AMBIGUOUS_FRACTION * n
    }

    /// Writes `x,y[,z],nx,ny[,nz],measure` rows at full precision.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        if self.dim == 3 {
            writeln!(w, "x,y,z,nx,ny,nz,measure")?;
        } else {
            writeln!(w, "x,y,nx,ny,measure")?;
        }
        for f in &self.facets {
            let (c, n) = (f.centroid, f.normal);
            if self.dim == 3 {
                writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    c.x, c.y, c.z, n.x, n.y, n.z, f.measure
                )?;
            } else {
                writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", c.x, c.y, n.x, n.y, f.measure)?;
            }
        }
        Ok(())
    }
}

/// A scalar field sampled once on a lattice, from which several levels are extracted.
pub struct LevelSampler {
    field: SampledField,
    center: Option<Box<dyn Fn(&Point) -> f64 + Send + Sync>>,
}

impl LevelSampler {
    /// Samples `f` on a lattice of cell size `resolution` covering `bbox`.
    pub fn from_function<F>(dim: usize, bbox: &Aabb, resolution: f64, f: F) -> Self
    where
        F: Fn(&Point) -> f64 + Send + Sync + 'static,
    {
        let lattice = Lattice::covering(bbox, dim, resolution);
        let field = lattice.sample(&f);
        LevelSampler {
            field,
            center: Some(Box::new(f)),
        }
    }

    /// Samples the signed distance of `set` on a box that holds `{d > -eps_max}`.
    pub fn for_set(set: &SetDescriptor, eps_max: f64, resolution: f64) -> Self {
        let s = set.clone();
        Self::from_function(set.dim(), &set.sampling_box(1.5 * eps_max), resolution, move |x| {
            s.signed_distance(x)
        })
    }

    pub fn field(&self) -> &SampledField {
        &self.field
    }

    /// Mesh of `{u = level}` with normals toward increasing `u`.
    pub fn extract(&self, level: f64) -> SurfaceMesh {
        let center = self.center.as_deref();
        if self.field.lattice.dim == 3 {
            march_tetrahedra(&self.field, level)
        } else {
            march_squares(&self.field, level, center)
        }
    }
}

/// `{d = eps}` of `set` (negative `eps` gives exterior levels) on a grid of cell `resolution`.
pub fn extract_level_set(set: &SetDescriptor, eps: f64, resolution: f64) -> Result<SurfaceMesh> {
    if !(resolution > 0.0) {
        return Err(Error::Config("resolution must be > 0".into()));
    }
    Ok(LevelSampler::for_set(set, eps.abs(), resolution).extract(eps))
}

struct Crossing {
    point: Point,
    entering: bool,
    edge: u64,
}

fn march_squares(
    field: &SampledField,
    level: f64,
    center: Option<&(dyn Fn(&Point) -> f64 + Send + Sync)>,
) -> SurfaceMesh {
    let l = &field.lattice;
    let (nx, ny) = (l.counts[0], l.counts[1]);
    let h = l.spacing;
    struct Row {
        facets: Vec<Facet>,
        edges: Vec<u64>,
        crossing: usize,
        degenerate: usize,
        ambiguous: usize,
    }
    let rows: Vec<Row> = (0..ny - 1)
        .into_par_iter()
        .map(|j| {
            let mut row = Row {
                facets: Vec::new(),
                edges: Vec::new(),
                crossing: 0,
                degenerate: 0,
                ambiguous: 0,
            };
            for i in 0..nx - 1 {
                let idx = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
                let s = idx.map(|(a, b)| field.at(a, b, 0) - level);
                let inside = s.map(|v| v > 0.0);
                if inside.iter().all(|&b| b) || inside.iter().all(|&b| !b) {
                    continue;
                }
                row.crossing += 1;
                let p = idx.map(|(a, b)| l.node(a, b, 0));
                let base = 2 * (j * nx + i) as u64;
                let edge_ids = [base, 2 * (j * nx + i + 1) as u64 + 1, 2 * ((j + 1) * nx + i) as u64, base + 1];
                let mut crossings: Vec<Crossing> = Vec::with_capacity(4);
                for k in 0..4 {
                    let k1 = (k + 1) % 4;
                    if inside[k] != inside[k1] {
                        let t = s[k] / (s[k] - s[k1]);
                        crossings.push(Crossing {
                            point: p[k] + (p[k1] - p[k]) * t,
                            entering: !inside[k] && inside[k1],
                            edge: edge_ids[k],
                        });
                    }
                }
                let m = crossings.len();
                let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(2);
                if m == 4 {
                    row.ambiguous += 1;
                    let c = 0.5 * (p[0] + p[2]);
                    let sc = match center {
                        Some(f) => f(&c) - level,
                        None => 0.25 * s.iter().sum::<f64>(),
                    };
                    for x in 0..4 {
                        if crossings[x].entering {
                            continue;
                        }
                        let e = if sc > 0.0 { (x + 1) % 4 } else { (x + 3) % 4 };
                        pairs.push((x, e));
                    }
                } else {
                    let x = if crossings[0].entering { 1 } else { 0 };
                    pairs.push((x, 1 - x));
                }
                let mut degenerate = false;
                for (x, e) in pairs {
                    let (a, b) = (crossings[x].point, crossings[e].point);
                    let d = b - a;
                    let len = d.norm();
                    let mid = 0.5 * (a + b);
                    let u = (mid.x - p[0].x) / h;
                    let w = (mid.y - p[0].y) / h;
                    let gu = ((s[1] - s[0]) * (1.0 - w) + (s[2] - s[3]) * w) / h;
                    let gw = ((s[3] - s[0]) * (1.0 - u) + (s[2] - s[1]) * u) / h;
                    if (gu * gu + gw * gw).sqrt() < DEGENERATE_CELL_GRADIENT {
                        degenerate = true;
                    }
                    row.edges.push(crossings[x].edge);
                    row.edges.push(crossings[e].edge);
                    if len <= 1e-14 * h {
                        continue;
                    }
                    let normal = Point::new(-d.y / len, d.x / len, 0.0);
                    row.facets.push(Facet::segment(a, b, normal));
                }
                if degenerate {
                    row.degenerate += 1;
                }
            }
            row
        })
        .collect();
    let mut mesh = SurfaceMesh {
        dim: 2,
        level,
        ..Default::default()
    };
    let mut edges = Vec::new();
    for r in rows {
        mesh.facets.extend(r.facets);
        edges.extend(r.edges);
        mesh.crossing_cells += r.crossing;
        mesh.degenerate_cells += r.degenerate;
        mesh.ambiguous_cells += r.ambiguous;
    }
    edges.sort_unstable();
    let mut k = 0;
    while k < edges.len() {
        let mut m = k + 1;
        while m < edges.len() && edges[m] == edges[k] {
            m += 1;
        }
        if m - k == 1 {
            mesh.open_ends += 1;
        }
        k = m;
    }
    mesh.total_measure = mesh.facets.iter().map(|f| f.measure).sum();
    mesh
}

const KUHN: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

fn march_tetrahedra(field: &SampledField, level: f64) -> SurfaceMesh {
    let l = &field.lattice;
    let [nx, ny, nz] = l.counts;
    let h = l.spacing;
    let slabs: Vec<(Vec<Facet>, usize, usize)> = (0..nz - 1)
        .into_par_iter()
        .map(|k| {
            let mut facets = Vec::new();
            let (mut crossing, mut degenerate) = (0, 0);
            for j in 0..ny - 1 {
                for i in 0..nx - 1 {
                    let mut cell_cross = false;
                    let mut cell_degenerate = false;
                    for perm in KUHN {
                        let mut ijk = [[i, j, k]; 4];
                        for step in 0..3 {
                            ijk[step + 1] = ijk[step];
                            ijk[step + 1][perm[step]] += 1;
                        }
                        let s = ijk.map(|c| field.at(c[0], c[1], c[2]) - level);
                        let inside = s.map(|v| v > 0.0);
                        let n_in = inside.iter().filter(|&&b| b).count();
                        if n_in == 0 || n_in == 4 {
                            continue;
                        }
                        cell_cross = true;
                        let mut grad = Point::zeros();
                        for step in 0..3 {
                            grad[perm[step]] = (s[step + 1] - s[step]) / h;
                        }
                        if grad.norm() < DEGENERATE_CELL_GRADIENT {
                            cell_degenerate = true;
                        }
                        let p = ijk.map(|c| l.node(c[0], c[1], c[2]));
                        let cut = |a: usize, b: usize| {
                            let t = s[a] / (s[a] - s[b]);
                            p[a] + (p[b] - p[a]) * t
                        };
                        let ins: Vec<usize> = (0..4).filter(|&v| inside[v]).collect();
                        let outs: Vec<usize> = (0..4).filter(|&v| !inside[v]).collect();
                        let c_in = ins.iter().map(|&v| p[v]).sum::<Point>() / ins.len() as f64;
                        let c_out = outs.iter().map(|&v| p[v]).sum::<Point>() / outs.len() as f64;
                        let dir = c_in - c_out;
                        let mut push = |a: Point, b: Point, c: Point| {
                            let n = (b - a).cross(&(c - a));
                            let len = n.norm();
                            if len <= 1e-14 * h * h {
                                return;
                            }
                            let n = if n.dot(&dir) < 0.0 { -n / len } else { n / len };
                            facets.push(Facet::triangle(a, b, c, n));
                        };
                        match (ins.len(), outs.len()) {
                            (1, 3) => push(cut(ins[0], outs[0]), cut(ins[0], outs[1]), cut(ins[0], outs[2])),
                            (3, 1) => push(cut(ins[0], outs[0]), cut(ins[1], outs[0]), cut(ins[2], outs[0])),
                            _ => {
                                let q = [
                                    cut(ins[0], outs[0]),
                                    cut(ins[0], outs[1]),
                                    cut(ins[1], outs[1]),
                                    cut(ins[1], outs[0]),
                                ];
                                push(q[0], q[1], q[2]);
                                push(q[0], q[2], q[3]);
                            }
                        }
                    }
                    if cell_cross {
                        crossing += 1;
                    }
                    if cell_degenerate {
                        degenerate += 1;
                    }
                }
            }
            (facets, crossing, degenerate)
        })
        .collect();
    let mut mesh = SurfaceMesh {
        dim: 3,
        level,
        ..Default::default()
    };
    for (f, c, d) in slabs {
        mesh.facets.extend(f);
        mesh.crossing_cells += c;
        mesh.degenerate_cells += d;
    }
    mesh.total_measure = mesh.facets.iter().map(|f| f.measure).sum();
    mesh
}

/// How facets are integrated.
#[derive(Clone, Debug)]
pub struct SurfaceRule {
    /// Gauss points per segment in 2D; 1 means facet midpoint/centroid.
    pub order: usize,
    /// Facets closer to one of these points than their own size are subdivided.
    pub singular_points: Vec<Point>,
    pub max_depth: usize,
}

impl Default for SurfaceRule {
    fn default() -> Self {
        SurfaceRule {
            order: 4,
            singular_points: Vec::new(),
            max_depth: 24,
        }
    }
}

impl SurfaceRule {
    pub fn midpoint() -> Self {
        SurfaceRule {
            order: 1,
            ..Default::default()
        }
    }

    pub fn with_singular_points(points: Vec<Point>) -> Self {
        SurfaceRule {
            singular_points: points,
            ..Default::default()
        }
    }

    fn near_singular(&self, c: &Point, size: f64) -> bool {
        self.singular_points.iter().any(|s| (s - c).norm() < 1.5 * size)
    }
}

/// `Σ ∫_facet f(x, ν) dH^{n−1}` with the default rule.
pub fn surface_integral<F>(mesh: &SurfaceMesh, integrand: F) -> Result<f64>
where
    F: Fn(&Point, &Point) -> f64 + Sync,
{
    surface_integral_with(mesh, &SurfaceRule::default(), integrand)
}

/// Facet quadrature; per-facet values are summed sequentially in facet order.
pub fn surface_integral_with<F>(mesh: &SurfaceMesh, rule: &SurfaceRule, integrand: F) -> Result<f64>
where
    F: Fn(&Point, &Point) -> f64 + Sync,
{
    let gl = GaussLegendre::new(rule.order.max(1));
    let values: Vec<f64> = mesh
        .facets
        .par_iter()
        .map(|f| {
            if mesh.dim == 3 {
                triangle_integral(f, rule, &integrand, 0)
            } else {
                segment_integral(&f.vertices[0], &f.vertices[1], &f.normal, rule, &gl, &integrand, 0)
            }
        })
        .collect();
    let mut total = 0.0;
    for (index, v) in values.iter().enumerate() {
        if !v.is_finite() {
            let c = mesh.facets[index].centroid;
            return Err(Error::NonFiniteIntegrand {
                index,
                centroid: [c.x, c.y, c.z],
            });
        }
        total += v;
    }
    Ok(total)
}

fn segment_integral<F>(a: &Point, b: &Point, n: &Point, rule: &SurfaceRule, gl: &GaussLegendre, f: &F, depth: usize) -> f64
where
    F: Fn(&Point, &Point) -> f64,
{
    let len = (b - a).norm();
    let mid = 0.5 * (a + b);
    if depth < rule.max_depth && rule.near_singular(&mid, len) {
        return segment_integral(a, &mid, n, rule, gl, f, depth + 1)
            + segment_integral(&mid, b, n, rule, gl, f, depth + 1);
    }
    if rule.order <= 1 {
        return f(&mid, n) * len;
    }
    gl.on(0.0, 1.0).map(|(t, w)| w * f(&(a + (b - a) * t), n)).sum::<f64>() * len
}

fn triangle_integral<F>(facet: &Facet, rule: &SurfaceRule, f: &F, depth: usize) -> f64
where
    F: Fn(&Point, &Point) -> f64,
{
    let [a, b, c] = facet.vertices;
    let size = (b - a).norm().max((c - a).norm()).max((c - b).norm());
    if depth < rule.max_depth && rule.near_singular(&facet.centroid, size) {
        let (ab, bc, ca) = (0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a));
        return [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
            .iter()
            .map(|t| triangle_integral(&Facet::triangle(t[0], t[1], t[2], facet.normal), rule, f, depth + 1))
            .sum();
    }
    if rule.order <= 1 {
        return f(&facet.centroid, &facet.normal) * facet.measure;
    }
    TRIANGLE_RULE
        .iter()
        .map(|(bc, w)| w * f(&(a * bc[0] + b * bc[1] + c * bc[2]), &facet.normal))
        .sum::<f64>()
        * facet.measure
}

/// Strictly decreasing positive ε values with a per-value screening flag.
#[derive(Clone, Debug, PartialEq)]
pub struct EpsilonSchedule {
    pub values: Vec<f64>,
    pub good: Vec<bool>,
}

impl EpsilonSchedule {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("epsilon schedule is empty".into()));
        }
        if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Config("epsilon schedule values must be finite and > 0".into()));
        }
        if values.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Config("epsilon schedule must be strictly decreasing".into()));
        }
        let good = vec![true; values.len()];
        Ok(EpsilonSchedule { values, good })
    }

    /// `start · ratio^k` for `k = 0..count`.
    pub fn geometric(start: f64, ratio: f64, count: usize) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::Config("geometric schedule ratio must lie in (0, 1)".into()));
        }
        Self::new((0..count).map(|k| start * ratio.powi(k as i32)).collect())
    }

    /// `2^{-k}` for `k = first..=last`.
    pub fn dyadic(first: i32, last: i32) -> Self {
        Self::new((first..=last).map(|k| 2f64.powi(-k)).collect()).expect("valid dyadic schedule")
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn good_values(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.good)
            .filter(|(_, &g)| g)
            .map(|(v, _)| *v)
            .collect()
    }

    /// Drops values not below `limit`; returns how many were removed.
    pub fn truncate_above(&mut self, limit: f64) -> usize {
        let keep: Vec<usize> = (0..self.values.len()).filter(|&i| self.values[i] < limit).collect();
        let removed = self.values.len() - keep.len();
        self.values = keep.iter().map(|&i| self.values[i]).collect();
        self.good = keep.iter().map(|&i| self.good[i]).collect();
        removed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{point2, SetSpec};
    use std::f64::consts::PI;

    fn set(spec: SetSpec) -> SetDescriptor {
        SetDescriptor::new(spec).unwrap()
    }

    #[test]
    fn disk_level_length() {
        let m = extract_level_set(&set(SetSpec::disk([0.0, 0.0], 1.0)), 0.5, 1.0 / 512.0).unwrap();
        assert!((m.total_measure - PI).abs() < 1e-4);
        assert_eq!(m.open_ends, 0);
        assert!(m.is_good());
    }

    #[test]
    fn square_offsets() {
        let sq = set(SetSpec::unit_square());
        // Corner cells cut the right angle of the inner square by a chord, so the length
        // error is first order in the cell size.
        let mut last = f64::INFINITY;
        for h in [1.0 / 128.0, 1.0 / 256.0, 1.0 / 512.0] {
            let inner = extract_level_set(&sq, 0.25, h).unwrap();
            let err = (inner.total_measure - 2.0).abs();
            assert!(err < 4.0 * h && err < last);
            last = err;
        }
        let outer = extract_level_set(&sq, -0.25, 1.0 / 256.0).unwrap();
        // Oracle: perimeter of the offset square with quarter-circle corners.
        let oracle = 4.0 + 2.0 * PI * 0.25;
        assert!((outer.total_measure - oracle).abs() < 1e-3);
    }

    #[test]
    fn normals_point_inward() {
        let sq = set(SetSpec::l_shape());
        let m = extract_level_set(&sq, 0.1, 1.0 / 128.0).unwrap();
        let h = 1e-3;
        let ok = m
            .facets
            .iter()
            .filter(|f| sq.signed_distance(&(f.centroid + f.normal * h)) > sq.signed_distance(&f.centroid))
            .count();
        assert_eq!(ok, m.facets.len());
        for f in &m.facets {
            assert!((f.normal.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn saddle_uses_center_sample() {
        // Two diagonal corners inside: the center decides whether they connect.
        let bbox = Aabb::new(point2(0.0, 0.0), point2(1.0, 1.0));
        let f = |p: &Point| (p.x - 0.5) * (p.y - 0.5);
        let m = LevelSampler::from_function(2, &bbox, 0.1, f).extract(0.0);
        assert_eq!(m.open_ends % 2, 0);
        let g = |p: &Point| (p.x - 0.5) * (p.y - 0.5) + 1e-6;
        let m2 = LevelSampler::from_function(2, &bbox, 0.1, g).extract(0.0);
        assert!(m2.total_measure > 0.0);
    }

    #[test]
    fn sphere_area_by_tetrahedra() {
        let ball = set(SetSpec::Ball {
            center: vec![0.0, 0.0, 0.0],
            radius: 1.0,
        });
        let m = extract_level_set(&ball, 0.5, 1.0 / 48.0).unwrap();
        assert!((m.total_measure - PI).abs() < 0.01 * PI, "{}", m.total_measure);
        let flux = surface_integral(&m, |x, n| x.dot(n)).unwrap();
        // ∫ x·ν_inner over the sphere of radius 1/2 is −3·volume.
        assert!((flux + 3.0 * 4.0 / 3.0 * PI / 8.0).abs() < 0.02);
    }

    #[test]
    fn schedule_validation() {
        assert!(EpsilonSchedule::new(vec![0.1, 0.2]).is_err());
        assert!(EpsilonSchedule::new(vec![0.1, -0.2]).is_err());
        let s = EpsilonSchedule::dyadic(3, 9);
        assert_eq!(s.len(), 7);
        assert_eq!(s.values[0], 0.125);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let m = extract_level_set(&set(SetSpec::unit_square()), 0.25, 0.05).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,y,nx,ny,measure\n"));
        assert_eq!(text.lines().count(), m.facets.len() + 1);
    }
}
