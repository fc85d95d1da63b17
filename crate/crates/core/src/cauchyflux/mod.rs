//! Cauchy fluxes on axis-aligned side surfaces, their axioms, and reconstruction of the
//! underlying field by averaging `μ^j(Q) = ∫ 𝓕(Q_{j,s}) ds` over small cubes.
//!
//! A side surface carries an orientation `±1`: the sign of the outer normal `±e_j` of the
//! set that owns it. Fluxes follow `𝓕(S) = −orientation · ∫_S F·e_j`, so
//! `𝓕(∂I) = −∫_{∂I} F·ν_I` for the outward normal of a box `I`, and the field is
//! recovered as `f_j = −μ^j(Q)/|Q|`.

use std::io::Read;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{total_variation, VectorField};
use crate::geometry::{Aabb, Point, SetDescriptor, SetSpec};
use crate::quadrature::integrate_1d_breaks;

/// Absolute tolerance of one face integral.
pub const FACE_TOL: f64 = 1e-11;
/// Tolerance of `μ^j` per unit slice area.
pub const MU_TOL: f64 = 1e-10;
/// One-sided offset, relative to the face coordinate, used on faces where the field jumps.
pub const ONE_SIDED_SHIFT: f64 = 1e-12;

/// A face `{x_j = s} × Π extent` of an axis-aligned box.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SideSurface {
    /// Zero-based axis `j`.
    pub axis: usize,
    pub coordinate: f64,
    /// Intervals of the remaining axes in increasing axis order.
    pub extent: Vec<[f64; 2]>,
    /// Sign of the owner's outer normal `±e_j`.
    pub orientation: f64,
}

impl SideSurface {
    pub fn new(axis: usize, coordinate: f64, extent: Vec<[f64; 2]>, orientation: f64) -> Result<Self> {
        let s = SideSurface {
            axis,
            coordinate,
            extent,
            orientation,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.extent.len() + 1
    }

    fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.dim()) || self.axis >= self.dim() {
            return Err(Error::Config(format!("side surface axis {} does not fit dimension {}", self.axis, self.dim())));
        }
        if self.orientation != 1.0 && self.orientation != -1.0 {
            return Err(Error::Config("side surface orientation must be ±1".into()));
        }
        if !self.coordinate.is_finite() || self.extent.iter().any(|e| !(e[0] < e[1]) || !e[0].is_finite() || !e[1].is_finite()) {
            return Err(Error::Config("side surface extent must be nonempty and finite".into()));
        }
        Ok(())
    }

    /// The `2n` faces of the box `[lo, hi]`, oriented by its outer normal.
    pub fn faces_of(b: &Aabb, dim: usize) -> Vec<SideSurface> {
        let mut out = Vec::with_capacity(2 * dim);
        for j in 0..dim {
            let extent: Vec<[f64; 2]> = (0..dim).filter(|&k| k != j).map(|k| [b.min[k], b.max[k]]).collect();
            out.push(SideSurface {
                axis: j,
                coordinate: b.min[j],
                extent: extent.clone(),
                orientation: -1.0,
            });
            out.push(SideSurface {
                axis: j,
                coordinate: b.max[j],
                extent,
                orientation: 1.0,
            });
        }
        out
    }

    /// The same face owned by the complementary side.
    pub fn reversed(&self) -> SideSurface {
        SideSurface {
            orientation: -self.orientation,
            ..self.clone()
        }
    }

    /// The slice `{x_j = s}` of the box `b`, owned by `{x_j < s}`.
    pub fn slice(b: &Aabb, dim: usize, axis: usize, s: f64) -> SideSurface {
        SideSurface {
            axis,
            coordinate: s,
            extent: (0..dim).filter(|&k| k != axis).map(|k| [b.min[k], b.max[k]]).collect(),
            orientation: 1.0,
        }
    }

    /// Splits the face in two halves along its first free axis.
    pub fn bisect(&self) -> (SideSurface, SideSurface) {
        let [a, b] = self.extent[0];
        let m = 0.5 * (a + b);
        let (mut l, mut r) = (self.clone(), self.clone());
        l.extent[0] = [a, m];
        r.extent[0] = [m, b];
        (l, r)
    }

    pub fn area(&self) -> f64 {
        self.extent.iter().map(|e| e[1] - e[0]).product()
    }

    fn free_axes(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&k| k != self.axis).collect()
    }
}

fn breaks_within(lo: f64, hi: f64, extra: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut b = vec![lo, hi];
    b.extend(extra.filter(|&c| c > lo && c < hi));
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

/// `∫_S g dH^{n−1}` by nested adaptive rules with breaks at `jumps[axis]`.
fn face_integral<G: Fn(&Point) -> f64>(s: &SideSurface, coordinate: f64, jumps: &[Vec<f64>; 3], g: &G) -> Result<f64> {
    let axes = s.free_axes();
    let mut x = Point::zeros();
    x[s.axis] = coordinate;
    let inner = |x: &mut Point| -> Result<f64> {
        let (k, [a, b]) = (axes[0], s.extent[0]);
        let brk = breaks_within(a, b, jumps[k].iter().copied());
        let mut f = |t: f64| {
            let mut y = *x;
            y[k] = t;
            g(&y)
        };
        Ok(integrate_1d_breaks(&mut f, &brk, FACE_TOL)?.0)
    };
    if axes.len() == 1 {
        return inner(&mut x);
    }
    let (k, [a, b]) = (axes[1], s.extent[1]);
    let brk = breaks_within(a, b, jumps[k].iter().copied());
    let mut failure = None;
    let mut f = |t: f64| {
        let mut y = x;
        y[k] = t;
        match inner(&mut y) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                0.0
            }
        }
    };
    let v = integrate_1d_breaks(&mut f, &brk, FACE_TOL)?.0;
    match failure {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

fn field_jumps(field: &VectorField) -> [Vec<f64>; 3] {
    let sing = field.singular_points();
    let mut out: [Vec<f64>; 3] = Default::default();
    for (axis, v) in out.iter_mut().enumerate() {
        *v = field.jump_coordinates(axis);
        v.extend(sing.iter().map(|p| p[axis]));
    }
    out
}

/// `𝓕(S) = −orientation · ∫_S F·e_j`, with `F` taken on the owner's side of faces where it
/// jumps.
pub fn flux_from_field(field: &VectorField, s: &SideSurface) -> Result<f64> {
    s.validate()?;
    if s.dim() != field.dim() {
        return Err(Error::Config(format!("side surface of dimension {} for a field of dimension {}", s.dim(), field.dim())));
    }
    let axes = s.free_axes();
    for p in field.singular_points() {
        let on_plane = (p[s.axis] - s.coordinate).abs() <= 1e-14 * s.coordinate.abs().max(1.0);
        let inside = axes.iter().zip(&s.extent).all(|(&k, e)| p[k] >= e[0] && p[k] <= e[1]);
        if on_plane && inside {
            return Err(Error::SingularFace {
                axis: s.axis,
                coordinate: s.coordinate,
                point: [p.x, p.y, p.z],
            });
        }
    }
    let jumps = field_jumps(field);
    let mut c = s.coordinate;
    if field.jump_coordinates(s.axis).iter().any(|&j| j == c) {
        c -= s.orientation * ONE_SIDED_SHIFT * c.abs().max(1.0);
    }
    let v = face_integral(s, c, &jumps, &|x| field.eval(x)[s.axis])?;
    Ok(-s.orientation * v)
}

type FaceFn = Arc<dyn Fn(&SideSurface) -> Result<f64> + Send + Sync>;
type SigmaFn = Arc<dyn Fn(&Aabb) -> Result<f64> + Send + Sync>;
type DensityFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

/// A flux functional with the bounds of its axioms: `|𝓕(∂U)| ≤ σ(U)` and
/// `|𝓕(S)| ≤ ∫_S h dH^{n−1}`.
#[derive(Clone)]
pub struct FluxFunctional {
    dim: usize,
    eval: FaceFn,
    sigma: SigmaFn,
    h: DensityFn,
    /// Coordinates per axis across which the flux may jump or be singular.
    jumps: [Vec<f64>; 3],
    source: Option<VectorField>,
}

impl std::fmt::Debug for FluxFunctional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FluxFunctional")
            .field("dim", &self.dim)
            .field("source", &self.source.as_ref().map(|s| s.spec()))
            .finish_non_exhaustive()
    }
}

impl FluxFunctional {
    pub fn new(dim: usize, eval: FaceFn, sigma: SigmaFn, h: DensityFn) -> Self {
        FluxFunctional {
            dim,
            eval,
            sigma,
            h,
            jumps: Default::default(),
            source: None,
        }
    }

    /// Flux manufactured from a catalog field with `σ = |div F|` and `h = |F|`.
    pub fn from_field(field: &VectorField) -> Self {
        let (f1, f2, f3) = (field.clone(), field.clone(), field.clone());
        let dim = field.dim();
        FluxFunctional {
            dim,
            eval: Arc::new(move |s| flux_from_field(&f1, s)),
            sigma: Arc::new(move |b| {
                let set = SetDescriptor::new(box_spec(b, dim))?;
                total_variation(&f2.divergence(), &set, true, 1e-10)
            }),
            h: Arc::new(move |x| f3.eval(x).norm()),
            jumps: field_jumps(field),
            source: Some(field.clone()),
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(dim, Arc::new(|_| Ok(0.0)), Arc::new(|_| Ok(0.0)), Arc::new(|_| 0.0))
    }

    /// Flux tabulated on faces `(axis, s, extent)` for orientation `+1`, interpolated
    /// linearly in `s` between rows with the same extent. No bounds are known, so `σ` and
    /// `h` are infinite.
    pub fn from_table(dim: usize, rows: Vec<FluxRow>) -> Result<Self> {
        if rows.iter().any(|r| r.axis >= dim || r.extent.len() + 1 != dim) {
            return Err(Error::Config(format!("flux table rows do not match dimension {dim}")));
        }
        let rows = Arc::new(rows);
        let eval: FaceFn = Arc::new(move |s: &SideSurface| {
            let same = |r: &&FluxRow| r.axis == s.axis && r.extent.iter().zip(&s.extent).all(|(a, b)| (a[0] - b[0]).abs() <= 1e-9 && (a[1] - b[1]).abs() <= 1e-9);
            let mut pts: Vec<(f64, f64)> = rows.iter().filter(same).map(|r| (r.s, r.value)).collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let c = s.coordinate;
            let k = pts.partition_point(|p| p.0 < c);
            let v = if k < pts.len() && pts[k].0 == c {
                pts[k].1
            } else if k == 0 || k == pts.len() {
                return Err(Error::Config(format!("no tabulated flux brackets axis {} at s = {c}", s.axis)));
            } else {
                let ((s0, v0), (s1, v1)) = (pts[k - 1], pts[k]);
                v0 + (v1 - v0) * (c - s0) / (s1 - s0)
            };
            Ok(s.orientation * v)
        });
        Ok(Self::new(dim, eval, Arc::new(|_| Ok(f64::INFINITY)), Arc::new(|_| f64::INFINITY)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source(&self) -> Option<&VectorField> {
        self.source.as_ref()
    }

    pub fn eval(&self, s: &SideSurface) -> Result<f64> {
        (self.eval)(s)
    }

    pub fn sigma(&self, b: &Aabb) -> Result<f64> {
        (self.sigma)(b)
    }

    pub fn h(&self, x: &Point) -> f64 {
        (self.h)(x)
    }

    /// `𝓕(∂I)` summed over the outward-oriented faces of `b`.
    pub fn boundary_flux(&self, b: &Aabb) -> Result<f64> {
        SideSurface::faces_of(b, self.dim).iter().map(|s| self.eval(s)).sum()
    }
}

fn box_spec(b: &Aabb, dim: usize) -> SetSpec {
    SetSpec::Box {
        lo: (0..dim).map(|k| b.min[k]).collect(),
        hi: (0..dim).map(|k| b.max[k]).collect(),
    }
}

/// One row of a tabulated flux: `axis,s,c1,d1[,c2,d2],value` with a one-based axis.
#[derive(Clone, Debug, PartialEq)]
pub struct FluxRow {
    pub axis: usize,
    pub s: f64,
    pub extent: Vec<[f64; 2]>,
    pub value: f64,
}

/// Reads a flux table with header `axis,s,c1,d1[,c2,d2],value`.
pub fn read_flux_table<R: Read>(reader: R) -> Result<Vec<FluxRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let width = rdr.headers()?.len();
    if width != 5 && width != 7 {
        return Err(Error::Config(format!("flux table needs 5 or 7 columns, found {width}")));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::Config(format!("flux table row {}: column {} is not a number", line + 2, k + 1)))
        };
        let axis = num(0)?;
        if axis.fract() != 0.0 || axis < 1.0 {
            return Err(Error::Config(format!("flux table row {}: axis must be 1, 2 or 3", line + 2)));
        }
        let extent = (0..(width - 3) / 2).map(|k| Ok([num(2 + 2 * k)?, num(3 + 2 * k)?])).collect::<Result<Vec<_>>>()?;
        rows.push(FluxRow {
            axis: axis as usize - 1,
            s: num(1)?,
            extent,
            value: num(width - 1)?,
        });
    }
    Ok(rows)
}

/// `μ^j(I) = ∫_{a_j}^{b_j} 𝓕(I_{j,s}) ds`. Slices where the flux fails are retried at
/// slightly shifted `s`; persistent failures are reported.
pub fn mu_j(flux: &FluxFunctional, b: &Aabb, axis: usize) -> Result<f64> {
    let dim = flux.dim();
    if axis >= dim {
        return Err(Error::Config(format!("axis {axis} out of range for dimension {dim}")));
    }
    let (a, c) = (b.min[axis], b.max[axis]);
    let brk = breaks_within(a, c, flux.jumps[axis].iter().copied());
    let scale = (c - a).abs().max(f64::MIN_POSITIVE);
    let mut bad = Vec::new();
    let mut first_error = None;
    let mut f = |s: f64| {
        for shift in [0.0, 1e-9, -1e-9] {
            let t = s + shift * scale;
            match flux.eval(&SideSurface::slice(b, dim, axis, t)) {
                Ok(v) => {
                    if shift != 0.0 {
                        log::debug!("flux slice at s = {s} moved to {t}");
                    }
                    return v;
                }
                Err(e) => first_error = Some(e),
            }
        }
        bad.push(s);
        0.0
    };
    let volume: f64 = (0..dim).map(|k| b.max[k] - b.min[k]).product();
    let (v, _) = integrate_1d_breaks(&mut f, &brk, MU_TOL * (volume / scale).max(f64::MIN_POSITIVE))?;
    if !bad.is_empty() {
        log::warn!("flux failed on {} slices; first error: {:?}", bad.len(), first_error);
        return Err(Error::FaceFailures { bad_s: bad });
    }
    Ok(v)
}

/// Regular grid of reconstruction points, nodes included at both ends.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub counts: Vec<usize>,
    /// Points closer than this to the origin are left out.
    #[serde(default)]
    pub exclude_radius: f64,
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<Point>> {
        let dim = self.lo.len();
        if !(2..=3).contains(&dim) || self.hi.len() != dim || self.counts.len() != dim || self.counts.iter().any(|&c| c == 0) {
            return Err(Error::Config("grid needs matching lo, hi and positive counts in 2 or 3 dimensions".into()));
        }
        let coord = |k: usize, i: usize| {
            if self.counts[k] == 1 {
                0.5 * (self.lo[k] + self.hi[k])
            } else {
                self.lo[k] + (self.hi[k] - self.lo[k]) * i as f64 / (self.counts[k] - 1) as f64
            }
        };
        let nz = if dim == 3 { self.counts[2] } else { 1 };
        let mut out = Vec::new();
        for k in 0..nz {
            for j in 0..self.counts[1] {
                for i in 0..self.counts[0] {
                    let p = Point::new(coord(0, i), coord(1, j), if dim == 3 { coord(2, k) } else { 0.0 });
                    if p.norm() >= self.exclude_radius {
                        out.push(p);
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReconstructedPoint {
    pub x: [f64; 3],
    /// `None` when the cube left the domain or the flux failed on it.
    pub value: Option<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Reconstruction {
    pub dim: usize,
    pub window: f64,
    pub points: Vec<ReconstructedPoint>,
    pub skipped: usize,
}

impl Reconstruction {
    /// `(RMS |f − F|, RMS |F|)` over the reconstructed points.
    pub fn rms_error(&self, field: &VectorField) -> (f64, f64) {
        let (mut e2, mut f2, mut n) = (0.0, 0.0, 0usize);
        for p in &self.points {
            if let Some(v) = p.value {
                let x = Point::from(p.x);
                let f = field.eval(&x);
                e2 += (Point::from(v) - f).norm_squared();
                f2 += f.norm_squared();
                n += 1;
            }
        }
        let n = n.max(1) as f64;
        ((e2 / n).sqrt(), (f2 / n).sqrt())
    }

    /// RMS error relative to the RMS of the field.
    pub fn relative_rms_error(&self, field: &VectorField) -> f64 {
        let (e, f) = self.rms_error(field);
        e / f.max(f64::MIN_POSITIVE)
    }
}

/// `f_j(x) ≈ −μ^j(Q(x, window))/|Q|` at every grid point whose cube lies in `domain`.
pub fn reconstruct_field(flux: &FluxFunctional, grid: &GridSpec, window: f64, domain: Option<&Aabb>) -> Result<Reconstruction> {
    if !(window > 0.0) {
        return Err(Error::Config("window must be > 0".into()));
    }
    let dim = flux.dim();
    if grid.lo.len() != dim {
        return Err(Error::Config(format!("grid of dimension {} for a flux of dimension {dim}", grid.lo.len())));
    }
    let points = grid.points()?;
    let half = 0.5 * window;
    let out: Vec<ReconstructedPoint> = points
        .par_iter()
        .map(|x| {
            let mut q = Aabb::new(x - Point::repeat(half), x + Point::repeat(half));
            if dim == 2 {
                q.min.z = 0.0;
                q.max.z = 0.0;
            }
            let inside = domain.map_or(true, |d| (0..dim).all(|k| q.min[k] >= d.min[k] && q.max[k] <= d.max[k]));
            let value = if inside {
                let vol = window.powi(dim as i32);
                let mut v = [0.0; 3];
                let mut ok = true;
                for (j, slot) in v.iter_mut().enumerate().take(dim) {
                    match mu_j(flux, &q, j) {
                        Ok(m) => *slot = -m / vol,
                        Err(e) => {
                            log::warn!("reconstruction skipped at {:?}: {e}", [x.x, x.y, x.z]);
                            ok = false;
                            break;
                        }
                    }
                }
                ok.then_some(v)
            } else {
                None
            };
            ReconstructedPoint { x: [x.x, x.y, x.z], value }
        })
        .collect();
    let skipped = out.iter().filter(|p| p.value.is_none()).count();
    Ok(Reconstruction {
        dim,
        window,
        points: out,
        skipped,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxiomSample {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    /// Largest `|𝓕(S) − 𝓕(S₁) − 𝓕(S₂)|` over the faces and their bisections.
    pub additivity_gap: f64,
    pub additivity: bool,
    /// `|𝓕(∂U)|`.
    pub boundary_flux: f64,
    pub sigma: f64,
    pub sigma_bound: bool,
    /// Largest `|𝓕(S)| − ∫_S h` over the faces.
    pub h_excess: f64,
    pub h_bound: bool,
}

impl AxiomSample {
    pub fn passed(&self) -> bool {
        self.additivity && self.sigma_bound && self.h_bound
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxiomReport {
    pub samples: Vec<AxiomSample>,
    pub all_pass: bool,
}

/// Spot checks of finite additivity, the `σ` bound and the `h` bound on sample boxes.
pub fn verify_axioms(flux: &FluxFunctional, boxes: &[Aabb]) -> Result<AxiomReport> {
    let dim = flux.dim();
    let mut samples = Vec::with_capacity(boxes.len());
    for b in boxes {
        let tol = |v: f64| 1e-8 * v.abs().max(1.0);
        let faces = SideSurface::faces_of(b, dim);
        let mut gap: f64 = 0.0;
        let mut h_excess = f64::NEG_INFINITY;
        let mut total = 0.0;
        for s in &faces {
            let v = flux.eval(s)?;
            total += v;
            let (l, r) = s.bisect();
            gap = gap.max((v - flux.eval(&l)? - flux.eval(&r)?).abs() / v.abs().max(1.0));
            let hb = face_integral(s, s.coordinate, &flux.jumps, &|x| flux.h(x))?;
            h_excess = h_excess.max(v.abs() - hb - tol(hb));
        }
        let sigma = flux.sigma(b)?;
        samples.push(AxiomSample {
            lo: [b.min.x, b.min.y, b.min.z],
            hi: [b.max.x, b.max.y, b.max.z],
            additivity_gap: gap,
            additivity: gap <= 1e-8,
            boundary_flux: total.abs(),
            sigma,
            sigma_bound: total.abs() <= sigma + tol(sigma),
            h_excess,
            h_bound: h_excess <= 0.0,
        });
    }
    let all_pass = samples.iter().all(AxiomSample::passed);
    Ok(AxiomReport { samples, all_pass })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DiscontinuityReport {
    /// `𝓕(∂U)`, faces owned by `U`.
    pub forward: f64,
    /// `𝓕(−∂U)`, the same faces owned by the exterior.
    pub backward: f64,
    /// `𝓕(∂U) + 𝓕(−∂U)`, zero for a flux continuous across `∂U`.
    pub jump: f64,
    pub detected: bool,
}

/// Compares `𝓕(∂U)` with `−𝓕(−∂U)` on the box `U`.
pub fn boundary_discontinuity(flux: &FluxFunctional, b: &Aabb) -> Result<DiscontinuityReport> {
    let faces = SideSurface::faces_of(b, flux.dim());
    let forward: f64 = faces.iter().map(|s| flux.eval(s)).sum::<Result<f64>>()?;
    let backward: f64 = faces.iter().map(|s| flux.eval(&s.reversed())).sum::<Result<f64>>()?;
    let jump = forward + backward;
    Ok(DiscontinuityReport {
        forward,
        backward,
        jump,
        detected: jump.abs() > 1e-8 * forward.abs().max(backward.abs()).max(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{measure_pairing, FieldSpec, TestFunction};
    use crate::geometry::point2;
    use crate::quadrature::volume_integral;
    use std::f64::consts::TAU;

    fn field(name: &str) -> VectorField {
        VectorField::catalog(name, serde_json::Value::Null).unwrap()
    }

    fn square(lo: f64, hi: f64) -> Aabb {
        Aabb::new(point2(lo, lo), point2(hi, hi))
    }

    #[test]
    fn face_flux_of_linear_field() {
        let lin = field("smooth_linear");
        let s = SideSurface::new(0, 0.7, vec![[0.2, 0.9]], 1.0).unwrap();
        assert!((flux_from_field(&lin, &s).unwrap() + 0.7 * 0.7).abs() < 1e-13);
        assert!((flux_from_field(&lin, &s.reversed()).unwrap() - 0.49).abs() < 1e-13);
        assert!(SideSurface::new(2, 0.0, vec![[0.0, 1.0]], 1.0).is_err());
        assert!(SideSurface::new(0, 0.0, vec![[1.0, 0.0]], 1.0).is_err());
    }

    #[test]
    fn whitney_box_fluxes() {
        let flux = FluxFunctional::from_field(&VectorField::whitney());
        assert!(flux.boundary_flux(&square(0.2, 0.8)).unwrap().abs() < 1e-9);
        assert!((flux.boundary_flux(&square(-0.5, 0.5)).unwrap() + TAU).abs() < 1e-9);
        let through = SideSurface::new(0, 0.0, vec![[-1.0, 1.0]], 1.0).unwrap();
        assert!(matches!(flux.eval(&through), Err(Error::SingularFace { .. })));
    }

    #[test]
    fn mu_matches_volume_integral() {
        let lin = FluxFunctional::from_field(&field("smooth_linear"));
        assert!((mu_j(&lin, &square(0.0, 1.0), 0).unwrap() + 0.5).abs() < 1e-12);
        assert_eq!(mu_j(&FluxFunctional::zero(2), &square(0.0, 1.0), 1).unwrap(), 0.0);
        let w = VectorField::whitney();
        let flux = FluxFunctional::from_field(&w);
        let b = square(0.2, 0.8);
        let set = SetDescriptor::new(SetSpec::rect([0.2, 0.2], [0.8, 0.8])).unwrap();
        for j in 0..2 {
            let oracle = -volume_integral(|x| w.eval(x)[j], &set, &[], 1e-12).unwrap().value;
            assert!((mu_j(&flux, &b, j).unwrap() - oracle).abs() < 1e-9);
        }
        // The slice through the atom is moved off it; the flux jumps there by 2π.
        let c = square(-0.5, 0.5);
        let set = SetDescriptor::new(SetSpec::rect([-0.5, -0.5], [0.5, 0.5])).unwrap();
        let oracle = -volume_integral(|x| w.eval(x)[0], &set, &[Point::zeros()], 1e-10).unwrap().value;
        assert!((mu_j(&flux, &c, 0).unwrap() - oracle).abs() < 1e-8);
    }

    #[test]
    fn gauss_green_on_cubes() {
        for name in ["smooth_linear", "whitney"] {
            let f = field(name);
            let flux = FluxFunctional::from_field(&f);
            for b in [square(0.1, 0.6), square(-0.3, 0.4)] {
                let set = SetDescriptor::new(SetSpec::rect([b.min.x, b.min.y], [b.max.x, b.max.y])).unwrap();
                let div = measure_pairing(&f.divergence(), &TestFunction::constant(1.0), &set, false, 1e-12).unwrap();
                assert!((-flux.boundary_flux(&b).unwrap() - div).abs() < 1e-9, "{name}");
            }
        }
    }

    #[test]
    fn reconstruction_of_linear_and_constant_fields() {
        let grid = GridSpec {
            lo: vec![-0.5, -0.5],
            hi: vec![0.5, 0.5],
            counts: vec![5, 5],
            exclude_radius: 0.0,
        };
        let lin = field("smooth_linear");
        let rec = reconstruct_field(&FluxFunctional::from_field(&lin), &grid, 1.0 / 16.0, None).unwrap();
        assert!(rec.rms_error(&lin).0 < 1e-10);
        let c = VectorField::new(FieldSpec::Constant { value: vec![1.0, 0.0] }).unwrap();
        let rec = reconstruct_field(&FluxFunctional::from_field(&c), &grid, 1.0 / 16.0, None).unwrap();
        assert!(rec.rms_error(&c).0 < 1e-12);
        let dom = square(-0.5, 0.5);
        let rec = reconstruct_field(&FluxFunctional::from_field(&c), &grid, 1.0 / 16.0, Some(&dom)).unwrap();
        assert_eq!(rec.skipped, 16);
    }

    #[test]
    fn tabulated_flux_round_trip() {
        let text = "axis,s,c1,d1,value\n1,0.0,0.0,1.0,0.0\n1,1.0,0.0,1.0,-1.0\n2,0.0,0.0,1.0,0.0\n2,1.0,0.0,1.0,-1.0\n";
        let rows = read_flux_table(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 4);
        let flux = FluxFunctional::from_table(2, rows).unwrap();
        let s = SideSurface::new(0, 0.25, vec![[0.0, 1.0]], 1.0).unwrap();
        assert_eq!(flux.eval(&s).unwrap(), -0.25);
        assert!((mu_j(&flux, &square(0.0, 1.0), 0).unwrap() + 0.5).abs() < 1e-12);
        let off = SideSurface::new(0, 0.25, vec![[0.0, 0.5]], 1.0).unwrap();
        assert!(flux.eval(&off).is_err());
        assert!(read_flux_table("axis,s,value\n1,0,0\n".as_bytes()).is_err());
    }

    #[test]
    fn axioms_for_whitney_and_zero() {
        let flux = FluxFunctional::from_field(&VectorField::whitney());
        let boxes = [square(0.2, 0.8), square(-0.5, 0.5), Aabb::new(point2(-0.9, 0.1), point2(-0.2, 0.3))];
        let rep = verify_axioms(&flux, &boxes).unwrap();
        assert!(rep.all_pass, "{rep:?}");
        assert!((rep.samples[1].sigma - TAU).abs() < 1e-12);
        assert!(verify_axioms(&FluxFunctional::zero(2), &boxes).unwrap().all_pass);
    }

    #[test]
    fn staircase_flux_is_discontinuous_on_the_box() {
        let st = VectorField::new(FieldSpec::StaircaseField {
            depth: 6,
            f: vec![1.0],
            g: vec![-2.0, 1.0],
        })
        .unwrap();
        let flux = FluxFunctional::from_field(&st);
        let rep = boundary_discontinuity(&flux, &square(0.0, 2.0)).unwrap();
        assert!((rep.forward + 2.0 * (1.0 - 2f64.powi(-7))).abs() < 1e-10, "{rep:?}");
        assert!(rep.backward.abs() < 1e-12);
        assert!(rep.detected);
        let smooth = boundary_discontinuity(&FluxFunctional::from_field(&VectorField::whitney()), &square(0.2, 0.8)).unwrap();
        assert!(!smooth.detected);
    }
}
