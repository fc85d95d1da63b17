//! Regularized distance: the mollified distance `G(x, τ) = ∫ d(x − τz/2) η(z) dz`, the fixed
//! point `ρ = G(x, ρ)`, its gradient, smooth level sets, and the vertical deformation of graph
//! domains onto `{ρ = ε}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{LevelSampler, Point, SetDescriptor, SetSpec, SurfaceMesh};
use crate::quadrature::rules::GaussLegendre;

pub const SOLVER_TOLERANCE: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 50;
/// Smallest admissible `1 − ∂G/∂τ`; the exact bound is 1/2.
pub const MIN_DENOMINATOR: f64 = 0.25;
/// Nondegeneracy threshold on `|∇ρ|` used to pick `ε₀`.
pub const NONDEGENERACY_THRESHOLD: f64 = 0.05;

/// Standard bump `exp(−1/(1 − s²))` on `s < 1`.
pub fn bump(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

/// Radial mollifier discretised by a positive polar product rule on `B(0,1)`.
///
/// The normalization constant is chosen so that the rule itself integrates `η` to one, which
/// makes `G` a convex combination of shifted distances.
#[derive(Clone, Debug)]
pub struct MollifierSpec {
    pub dim: usize,
    pub radial_order: usize,
    pub angular_order: usize,
    pub normalization: f64,
    nodes: Vec<(Point, f64)>,
}

impl MollifierSpec {
    /// 16 radial Gauss points and 32 angles (16 × 16 × 32 in 3D).
    pub fn new(dim: usize) -> Result<Self> {
        Self::with_orders(dim, 16, 32)
    }

    pub fn with_orders(dim: usize, radial_order: usize, angular_order: usize) -> Result<Self> {
        if !(2..=3).contains(&dim) || radial_order == 0 || angular_order < 4 {
            return Err(Error::Config("mollifier needs dim 2 or 3, radial order >= 1, angular order >= 4".into()));
        }
        let gl = GaussLegendre::new(radial_order);
        let radial: Vec<(f64, f64)> = gl.on(0.0, 1.0).collect();
        let polar: Vec<(f64, f64)> = gl.on(-1.0, 1.0).collect();
        let dphi = std::f64::consts::TAU / angular_order as f64;
        let mut nodes = Vec::new();
        for &(r, wr) in &radial {
            let eta = bump(r);
            for k in 0..angular_order {
                let phi = (k as f64 + 0.5) * dphi;
                if dim == 2 {
                    nodes.push((Point::new(r * phi.cos(), r * phi.sin(), 0.0), eta * r * wr * dphi));
                } else {
                    for &(mu, wm) in &polar {
                        let s = (1.0 - mu * mu).sqrt();
                        nodes.push((Point::new(r * s * phi.cos(), r * s * phi.sin(), r * mu), eta * r * r * wr * wm * dphi));
                    }
                }
            }
        }
        let mass: f64 = nodes.iter().map(|n| n.1).sum();
        for n in &mut nodes {
            n.1 /= mass;
        }
        let spec = MollifierSpec {
            dim,
            radial_order,
            angular_order,
            normalization: 1.0 / mass,
            nodes,
        };
        let check = spec.mass();
        if (check - 1.0).abs() > 1e-10 || spec.nodes.iter().any(|n| !(n.1 >= 0.0)) {
            return Err(Error::Config(format!("mollifier rule is not a probability rule (mass {check})")));
        }
        Ok(spec)
    }

    /// `∫ η` by the rule.
    pub fn mass(&self) -> f64 {
        self.nodes.iter().map(|n| n.1).sum()
    }

    pub fn nodes(&self) -> &[(Point, f64)] {
        &self.nodes
    }
}

/// Signed distance and a unit gradient (closed form where the nearest point is known).
pub fn distance_and_gradient(set: &SetDescriptor, y: &Point) -> (f64, Point) {
    let d = set.signed_distance(y);
    if set.is_exact() {
        if let Some(p) = set.nearest_boundary_point(y) {
            let r = y - p;
            let n = r.norm();
            if n > 0.0 {
                return (d, r * (d.signum() / n));
            }
        }
    }
    (d, set.distance_gradient(y).vector)
}

/// `G`, `∇ₓG` and `∂G/∂τ` at `(x, τ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GValue {
    pub g: f64,
    pub grad: Point,
    pub dtau: f64,
}

pub fn g_eval_full(set: &SetDescriptor, x: &Point, tau: f64, moll: &MollifierSpec) -> GValue {
    let mut out = GValue {
        g: 0.0,
        grad: Point::zeros(),
        dtau: 0.0,
    };
    for (z, w) in &moll.nodes {
        let (d, gd) = distance_and_gradient(set, &(x - z * (0.5 * tau)));
        out.g += w * d;
        out.grad += gd * *w;
        out.dtau -= 0.5 * w * gd.dot(z);
    }
    out
}

/// `G(x, τ) = ∫_{B(0,1)} d(x − τz/2) η(z) dz`.
pub fn g_eval(set: &SetDescriptor, x: &Point, tau: f64, moll: &MollifierSpec) -> f64 {
    moll.nodes.iter().map(|(z, w)| w * set.signed_distance(&(x - z * (0.5 * tau)))).sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegDistResult {
    pub rho: f64,
    pub distance: f64,
    pub iterations: usize,
    /// `|ρ − G(x, ρ)|`.
    pub residual: f64,
    /// `ρ/d`; NaN on `∂U`.
    pub ratio: f64,
}

/// Solves `ρ = G(x, ρ)` by damped Newton from `d(x)`.
pub fn regularized_distance(set: &SetDescriptor, x: &Point, moll: &MollifierSpec) -> Result<RegDistResult> {
    solve(set, x, moll).map(|(r, _)| r)
}

fn solve(set: &SetDescriptor, x: &Point, moll: &MollifierSpec) -> Result<(RegDistResult, GValue)> {
    let d = set.signed_distance(x);
    let mut r = d;
    let mut gv = g_eval_full(set, x, r, moll);
    let mut res = r - gv.g;
    for it in 0..=MAX_ITERATIONS {
        if res.abs() <= SOLVER_TOLERANCE {
            let ratio = if d != 0.0 { r / d } else { f64::NAN };
            return Ok((
                RegDistResult {
                    rho: r,
                    distance: d,
                    iterations: it,
                    residual: res.abs(),
                    ratio,
                },
                gv,
            ));
        }
        if it == MAX_ITERATIONS {
            break;
        }
        let mut step = res / (1.0 - gv.dtau);
        for _ in 0..30 {
            let trial = r - step;
            let tv = g_eval_full(set, x, trial, moll);
            let tres = trial - tv.g;
            if tres.abs() < res.abs() || step.abs() < 1e-300 {
                r = trial;
                gv = tv;
                res = tres;
                break;
            }
            step *= 0.5;
        }
    }
    Err(Error::Solver {
        point: [x.x, x.y, x.z],
        iterations: MAX_ITERATIONS,
        residual: res.abs(),
    })
}

/// `ρ` together with `∇ρ = ∇G/(1 − ∂G/∂τ)`.
pub fn regdist_with_gradient(set: &SetDescriptor, x: &Point, moll: &MollifierSpec) -> Result<(RegDistResult, Point)> {
    let (r, gv) = solve(set, x, moll)?;
    let denom = 1.0 - gv.dtau;
    if denom.abs() < MIN_DENOMINATOR {
        return Err(Error::Conditioning {
            point: [x.x, x.y, x.z],
            denominator: denom,
        });
    }
    Ok((r, gv.grad / denom))
}

pub fn regdist_gradient(set: &SetDescriptor, x: &Point, moll: &MollifierSpec) -> Result<Point> {
    regdist_with_gradient(set, x, moll).map(|(_, g)| g)
}

/// Marching extraction of `{ρ = eps}`. Nodes outside the band where the level can lie
/// (`d/eps ∈ [1/2, 3/2]`, padded by two cells) carry `d`, which has the same side as `ρ`.
pub fn extract_regdist_level(set: &SetDescriptor, eps: f64, resolution: f64, moll: &MollifierSpec) -> Result<SurfaceMesh> {
    if !(resolution > 0.0) || eps == 0.0 || !eps.is_finite() {
        return Err(Error::Config("regdist level needs resolution > 0 and eps != 0".into()));
    }
    let (s, e, pad) = (eps.signum(), eps.abs(), 2.0 * resolution);
    let (set_c, moll_c) = (set.clone(), moll.clone());
    let f = move |x: &Point| {
        let d = set_c.signed_distance(x);
        let dd = s * d;
        if dd < 0.5 * e - pad || dd > 1.5 * e + pad {
            return d;
        }
        regularized_distance(&set_c, x, &moll_c).map_or(f64::NAN, |r| r.rho)
    };
    let sampler = LevelSampler::from_function(set.dim(), &set.sampling_box(2.0 * e), resolution, f);
    if let Some(i) = sampler.field().values.iter().position(|v| !v.is_finite()) {
        let [a, b, c] = sampler.field().lattice.unravel(i);
        let p = sampler.field().lattice.node(a, b, c);
        return Err(Error::Solver {
            point: [p.x, p.y, p.z],
            iterations: MAX_ITERATIONS,
            residual: f64::NAN,
        });
    }
    Ok(sampler.extract(eps))
}

/// Smooth offset `h(ε, r)`: `ε` on `r ≤ ε`, `0` on `r ≥ 5ε/2`, with `−8/9 ≤ ∂h/∂r ≤ 0`.
/// The slope is a C¹ plateau (cubic smoothstep ramps over the outer quarters of `[ε, 5ε/2]`),
/// so `h` is C².
pub fn deformation_offset(eps: f64, r: f64) -> f64 {
    let e = eps.abs();
    if e == 0.0 {
        return 0.0;
    }
    let s = eps.signum();
    let r = s * r;
    let len = 1.5 * e;
    let t = ((r - e) / len).clamp(0.0, 1.0);
    s * e * (1.0 - plateau_integral(t) / plateau_integral(1.0))
}

/// `∂h/∂r`.
pub fn deformation_offset_slope(eps: f64, r: f64) -> f64 {
    let e = eps.abs();
    if e == 0.0 {
        return 0.0;
    }
    let r = eps.signum() * r;
    let len = 1.5 * e;
    let t = (r - e) / len;
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    -e * plateau(t) / (plateau_integral(1.0) * len)
}

const RAMP: f64 = 0.25;

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

/// 0 → 1 over `[0, RAMP]`, 1 until `1 − RAMP`, back to 0 at 1.
fn plateau(t: f64) -> f64 {
    smoothstep(t / RAMP).min(smoothstep((1.0 - t) / RAMP))
}

fn smoothstep_integral(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (1.0 - 0.5 * u)
}

/// `∫_0^t plateau`.
fn plateau_integral(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    let up = RAMP * smoothstep_integral(t / RAMP);
    let flat = (t - RAMP).clamp(0.0, 1.0 - 2.0 * RAMP);
    let down = if t > 1.0 - RAMP {
        RAMP * (0.5 - smoothstep_integral((1.0 - t) / RAMP))
    } else {
        0.0
    };
    up + flat + down
}

/// Moves `x` vertically to `x + t e₂` with `ρ(x + t e₂) = ρ(x) + h(ε, ρ(x))`; the identity where
/// `|ρ(x)| ≥ 3|ε|`. Points must lie on the side of `ε` (`ρ ≥ 0` for `ε > 0`) up to the solver
/// tolerance.
pub fn graph_deformation(domain: &SetDescriptor, eps: f64, x: &Point, moll: &MollifierSpec) -> Result<Point> {
    if !matches!(domain.spec(), SetSpec::Graph { .. }) {
        return Err(Error::Config("graph_deformation needs a graph domain".into()));
    }
    if eps == 0.0 || !eps.is_finite() {
        return Err(Error::Config("graph_deformation needs eps != 0".into()));
    }
    let s = eps.signum();
    let r0 = regularized_distance(domain, x, moll)?.rho;
    if r0.abs() >= 3.0 * eps.abs() {
        return Ok(*x);
    }
    // Boundary points may carry rounding-level negative distances.
    if s * r0 < -SOLVER_TOLERANCE {
        return Err(Error::Geometry(format!("point {:?} lies on the wrong side of the boundary for eps = {eps}", [x.x, x.y])));
    }
    let h = deformation_offset(eps, r0);
    if h == 0.0 {
        return Ok(*x);
    }
    let target = r0 + h;
    let at = |t: f64| -> Result<(f64, f64)> {
        let p = x + Point::new(0.0, s * t, 0.0);
        let (r, g) = regdist_with_gradient(domain, &p, moll)?;
        Ok((s * (r.rho - target), g.y))
    };
    // φ(t) = s(ρ(x + s t e₂) − target), φ(0) = −|h| < 0.
    let (mut lo, mut hi) = (0.0, h.abs());
    let mut f_hi = at(hi)?.0;
    let limit = 10.0 * (1.0 + domain.bounding_box().diagonal());
    while f_hi < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > limit {
            return Err(Error::Geometry(format!(
                "no vertical root of rho = {target} above {:?}; eps is too large for this domain",
                [x.x, x.y]
            )));
        }
        f_hi = at(hi)?.0;
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (f, slope) = at(t)?;
        if f.abs() <= 1e-12 {
            break;
        }
        if f < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        // Newton step inside the bracket, bisection otherwise.
        let newton = t - f / (s * slope);
        t = if slope != 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-15 * (1.0 + hi) {
            break;
        }
    }
    Ok(x + Point::new(0.0, s * t, 0.0))
}

/// Extremes of `|∇ρ|` and `ρ/d` over random probes in the band `0 < |ρ| < band`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NondegeneracyReport {
    pub band: f64,
    pub samples: usize,
    pub min_grad: f64,
    pub max_grad: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

pub fn probe_band(set: &SetDescriptor, band: f64, samples: usize, moll: &MollifierSpec, seed: u64) -> Result<NondegeneracyReport> {
    let mut rep = NondegeneracyReport {
        band,
        samples: 0,
        min_grad: f64::INFINITY,
        max_grad: 0.0,
        min_ratio: f64::INFINITY,
        max_ratio: f64::NEG_INFINITY,
    };
    for s in probe_band_samples(set, band, samples, moll, seed)? {
        rep.samples += 1;
        rep.min_grad = rep.min_grad.min(s.grad_norm);
        rep.max_grad = rep.max_grad.max(s.grad_norm);
        rep.min_ratio = rep.min_ratio.min(s.ratio);
        rep.max_ratio = rep.max_ratio.max(s.ratio);
    }
    Ok(rep)
}

/// One probe inside the band.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeSample {
    pub x: Point,
    pub distance: f64,
    pub rho: f64,
    pub ratio: f64,
    pub grad_norm: f64,
}

/// The probes behind [`probe_band`]: exactly `samples` points with `0 < |ρ| < band`, drawn
/// in batches from a seeded stream.
pub fn probe_band_samples(set: &SetDescriptor, band: f64, samples: usize, moll: &MollifierSpec, seed: u64) -> Result<Vec<ProbeSample>> {
    let bb = set.sampling_box(1.5 * band);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = set.dim();
    let mut out = Vec::with_capacity(samples);
    let mut attempts = 0usize;
    while out.len() < samples {
        let want = samples - out.len();
        let mut candidates = Vec::with_capacity(want);
        while candidates.len() < want {
            attempts += 1;
            if attempts > 10_000 * samples.max(1) {
                return Err(Error::Geometry(format!("could not place probes in the band |rho| < {band}")));
            }
            let mut p = Point::zeros();
            for a in 0..dim {
                p[a] = rng.gen_range(bb.min[a]..bb.max[a]);
            }
            let d = set.signed_distance(&p);
            // |ρ| < band implies |d| < 3 band/2.
            if d != 0.0 && d.abs() < 1.5 * band {
                candidates.push(p);
            }
        }
        let evaluated: Vec<(RegDistResult, Point)> = candidates.par_iter().map(|p| regdist_with_gradient(set, p, moll)).collect::<Result<_>>()?;
        out.extend(
            candidates
                .into_iter()
                .zip(evaluated)
                .filter(|(_, (r, _))| r.rho != 0.0 && r.rho.abs() < band)
                .map(|(x, (r, g))| ProbeSample {
                    x,
                    distance: r.distance,
                    rho: r.rho,
                    ratio: r.ratio,
                    grad_norm: g.norm(),
                }),
        );
    }
    Ok(out)
}

/// Largest value of the decreasing `schedule` at which probes show `min |∇ρ|` above the
/// nondegeneracy threshold.
pub fn estimate_eps0(set: &SetDescriptor, schedule: &[f64], samples: usize, moll: &MollifierSpec, seed: u64) -> Result<Option<f64>> {
    for &e in schedule {
        let rep = probe_band(set, e, samples, moll, seed)?;
        if rep.samples > 0 && rep.min_grad > NONDEGENERACY_THRESHOLD {
            return Ok(Some(e));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{point2, GraphProfile};

    fn set(spec: SetSpec) -> SetDescriptor {
        SetDescriptor::new(spec).unwrap()
    }

    fn half_plane() -> SetDescriptor {
        set(SetSpec::Graph {
            profile: GraphProfile::Flat { level: 0.0 },
            window: [-1.0, 1.0],
            top: 1.0,
        })
    }

    #[test]
    fn mollifier_is_a_probability_rule() {
        let m = MollifierSpec::new(2).unwrap();
        assert!((m.mass() - 1.0).abs() < 1e-14);
        assert!(m.nodes().iter().all(|(z, w)| *w >= 0.0 && z.norm() < 1.0));
        // The discrete normalization agrees with the continuous one to the rule's accuracy.
        let (cont, _) = crate::quadrature::integrate_1d(|r| bump(r) * r * std::f64::consts::TAU, 0.0, 1.0, 1e-14).unwrap();
        assert!((m.normalization * cont - 1.0).abs() < 1e-5);
        let m3 = MollifierSpec::with_orders(3, 8, 16).unwrap();
        assert!((m3.mass() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn half_plane_is_its_own_regularization() {
        let hp = half_plane();
        let m = MollifierSpec::new(2).unwrap();
        for x in [point2(0.1, 0.3), point2(-0.2, -0.05), point2(0.0, 0.7)] {
            assert!((g_eval(&hp, &x, 0.4, &m) - x.y).abs() < 1e-14);
            let (r, g) = regdist_with_gradient(&hp, &x, &m).unwrap();
            assert!((r.rho - x.y).abs() < 1e-12);
            assert!((g - point2(0.0, 1.0)).norm() < 1e-12);
        }
        let b = regularized_distance(&set(SetSpec::unit_square()), &point2(0.3, 0.0), &m).unwrap();
        assert_eq!(b.rho, 0.0);
        assert!(b.ratio.is_nan());
    }

    #[test]
    fn g_at_zero_shift_is_distance() {
        let m = MollifierSpec::new(2).unwrap();
        let l = set(SetSpec::l_shape());
        let x = point2(1.3, 0.4);
        assert!((g_eval(&l, &x, 0.0, &m) - l.signed_distance(&x)).abs() < 1e-14);
    }

    #[test]
    fn g_against_refined_reference() {
        let disk = set(SetSpec::disk([0.0, 0.0], 1.0));
        let x = point2(0.5, 0.0);
        let g = g_eval(&disk, &x, 0.2, &MollifierSpec::new(2).unwrap());
        let reference = g_eval(&disk, &x, 0.2, &MollifierSpec::with_orders(2, 64, 128).unwrap());
        assert!((g - reference).abs() < 1e-6, "{g} vs {reference}");
    }

    #[test]
    fn unit_square_center() {
        let m = MollifierSpec::new(2).unwrap();
        let r = regularized_distance(&set(SetSpec::unit_square()), &point2(0.5, 0.5), &m).unwrap();
        assert!(r.rho >= 0.25 && r.rho <= 1.0, "{r:?}");
        assert!(r.ratio >= 0.5 && r.ratio <= 2.0);
        assert!(r.residual <= SOLVER_TOLERANCE);
    }

    #[test]
    fn gradient_bounds_on_ring() {
        let m = MollifierSpec::new(2).unwrap();
        let disk = set(SetSpec::disk([0.0, 0.0], 1.0));
        for k in 0..64 {
            let t = k as f64 * std::f64::consts::TAU / 64.0;
            let x = point2(0.7 * t.cos(), 0.7 * t.sin());
            let gv = g_eval_full(&disk, &x, 0.3, &m);
            assert!(gv.grad.norm() <= 1.0 + 1e-9 && gv.dtau.abs() <= 0.5 + 1e-9);
            let g = regdist_gradient(&disk, &x, &m).unwrap();
            assert!(g.norm() > 0.0 && g.norm() <= 2.0 + 1e-6);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = MollifierSpec::new(2).unwrap();
        let disk = set(SetSpec::disk([0.0, 0.0], 1.0));
        let x = point2(0.55, 0.2);
        let g = regdist_gradient(&disk, &x, &m).unwrap();
        let h = 1e-5;
        let rho = |p: Point| regularized_distance(&disk, &p, &m).unwrap().rho;
        let fd = point2(
            (rho(x + point2(h, 0.0)) - rho(x - point2(h, 0.0))) / (2.0 * h),
            (rho(x + point2(0.0, h)) - rho(x - point2(0.0, h))) / (2.0 * h),
        );
        assert!((g - fd).norm() < 1e-6, "{g:?} vs {fd:?}");
    }

    #[test]
    fn l_shape_nondegenerate_near_boundary() {
        let m = MollifierSpec::new(2).unwrap();
        let rep = probe_band(&set(SetSpec::l_shape()), 0.1, 1000, &m, 5).unwrap();
        assert!(rep.samples > 500);
        assert!(rep.min_grad > 0.0 && rep.max_grad <= 2.0 + 1e-6, "{rep:?}");
        assert!(rep.min_ratio >= 0.5 && rep.max_ratio <= 2.0, "{rep:?}");
    }

    #[test]
    fn offset_profile() {
        let e = 0.05;
        assert_eq!(deformation_offset(e, 0.0), e);
        assert_eq!(deformation_offset(e, e), e);
        assert!(deformation_offset(e, 2.5 * e).abs() < 1e-17);
        assert_eq!(deformation_offset(e, 3.0 * e), 0.0);
        let mut min_slope: f64 = 0.0;
        for k in 0..=3000 {
            let r = k as f64 * 3.0 * e / 3000.0;
            let s = deformation_offset_slope(e, r);
            min_slope = min_slope.min(s);
            assert!(s <= 0.0);
            let h = 1e-7;
            if r > h {
                let fd = (deformation_offset(e, r + h) - deformation_offset(e, r - h)) / (2.0 * h);
                assert!((fd - s).abs() < 1e-6, "{r}: {fd} vs {s}");
            }
        }
        assert!(min_slope > -0.9 && min_slope < -0.85, "{min_slope}");
        assert_eq!(deformation_offset(-e, -0.5 * e), -e);
    }

    #[test]
    fn half_plane_deformation() {
        let m = MollifierSpec::new(2).unwrap();
        let hp = half_plane();
        let y = graph_deformation(&hp, 0.1, &point2(0.0, 0.0), &m).unwrap();
        assert!((y - point2(0.0, 0.1)).norm() < 1e-10, "{y:?}");
        let far = point2(0.2, 0.3);
        assert_eq!(graph_deformation(&hp, 0.1, &far, &m).unwrap(), far);
        assert!(graph_deformation(&set(SetSpec::unit_square()), 0.1, &far, &m).is_err());
    }

    #[test]
    fn regdist_level_of_square_is_closed() {
        let m = MollifierSpec::new(2).unwrap();
        let sq = set(SetSpec::unit_square());
        let mesh = extract_regdist_level(&sq, 0.1, 1.0 / 128.0, &m).unwrap();
        assert_eq!(mesh.open_ends, 0);
        // ρ/d ∈ [1/2, 2] puts the level between the offsets at 0.05 and 0.2.
        let inner = 4.0 * (1.0 - 2.0 * 0.2);
        let outer = 4.0 * (1.0 - 2.0 * 0.05);
        assert!(mesh.total_measure > inner && mesh.total_measure < outer, "{}", mesh.total_measure);
    }
}
