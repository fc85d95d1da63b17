//! Normal traces as limits of boundary integrals over level sets of the signed distance,
//! averaged traces, product-rule and Green-identity checks, and diagnostics on whether a
//! trace is a measure.
//!
//! Sign convention: boundary integrals are always taken with the inner normal of the level
//! set (the direction of increasing `d`). The trace is the volume side
//! `∫ φ d div F + ∫ F·∇φ dx`, and a correct identity has `volume_side + limit ≈ 0`.

use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{measure_pairing, FieldSpec, Potential, TestFunction, VectorField, Weight};
use crate::geometry::{minkowski_content, surface_integral_with, EpsilonSchedule, LevelSampler, Location, MinkowskiReport, Point, SetDescriptor, SetSpec, SurfaceRule};
use crate::quadrature::{ball_section_integral, volume_integral, BallSection, Intersection, Region, Shell};
use crate::regdist::distance_and_gradient;

/// Absolute tolerance of the volume integrals behind `volume_side`.
pub const VOLUME_TOL: f64 = 1e-8;
/// Accepted range of the observed order in Richardson extrapolation.
pub const RICHARDSON_ORDER: (f64, f64) = (0.5, 4.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSide {
    /// `∂U` approached from inside through `{d = ε}`.
    Interior,
    /// `∂Ū` approached from outside through `{d = −ε}`.
    Exterior,
    /// `∂K` of a compact set through `{dist(·, K) = ε}`.
    Compact,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpsSample {
    pub eps: f64,
    /// `∫_{level} φ F·ν dH^{n−1}` with the inner normal `ν`.
    pub boundary_integral: f64,
    pub good: bool,
    /// `H^{n−1}` of the extracted level.
    pub level_measure: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceEstimate {
    pub side: TraceSide,
    pub per_eps: Vec<EpsSample>,
    /// `∫ φ d div F + ∫ F·∇φ dx` over the set (or its closure).
    pub volume_side: f64,
    /// Extrapolated limit of the good boundary integrals.
    pub limit: f64,
    pub limit_error: f64,
    /// `|volume_side + limit|`.
    pub residual: f64,
    pub good_count: usize,
}

impl TraceEstimate {
    fn assemble(side: TraceSide, per_eps: Vec<EpsSample>, volume_side: f64) -> Result<Self> {
        let (eps, vals): (Vec<f64>, Vec<f64>) = per_eps.iter().filter(|s| s.good).map(|s| (s.eps, s.boundary_integral)).unzip();
        let (limit, limit_error) = richardson(&eps, &vals)?;
        Ok(TraceEstimate {
            side,
            volume_side,
            limit,
            limit_error,
            residual: (volume_side + limit).abs(),
            good_count: eps.len(),
            per_eps,
        })
    }

    /// The trace value `⟨F·ν, φ⟩`.
    pub fn value(&self) -> f64 {
        self.volume_side
    }

    /// The trace value as seen from the boundary integrals.
    pub fn boundary_value(&self) -> f64 {
        -self.limit
    }

    pub fn recompute_residual(&self) -> f64 {
        (self.volume_side + self.limit).abs()
    }

    /// `eps,boundary_integral,good_flag` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "eps,boundary_integral,good_flag")?;
        for s in &self.per_eps {
            writeln!(w, "{:.16e},{:.16e},{}", s.eps, s.boundary_integral, u8::from(s.good))?;
        }
        Ok(())
    }
}

impl fmt::Display for TraceEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?} trace: volume side {:.12e}, boundary limit {:.12e} (inner normal, ±{:.1e}), residual {:.3e}, {} good eps",
            self.side, self.volume_side, self.limit, self.limit_error, self.residual, self.good_count
        )
    }
}

/// Limit of `values` as `eps → 0`, Richardson-extrapolated from the last three entries.
///
/// The order `p` is observed from the last three values; outside [`RICHARDSON_ORDER`] the
/// last value is returned with the last difference as its error.
pub fn richardson(eps: &[f64], values: &[f64]) -> Result<(f64, f64)> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientSchedule { good: n });
    }
    let (v2, v3) = (values[n - 2], values[n - 1]);
    let fallback = (v3, (v3 - v2).abs());
    if n < 3 {
        return Ok(fallback);
    }
    let (e1, e2, e3) = (eps[n - 3], eps[n - 2], eps[n - 1]);
    let v1 = values[n - 3];
    let (d1, d2) = ((v1 - v2).abs(), (v2 - v3).abs());
    if d2 <= 1e-15 * v3.abs().max(1.0) || d1 == 0.0 {
        return Ok(fallback);
    }
    let p = (d1 / d2).ln() / (e1 / e2).ln();
    if !(p >= RICHARDSON_ORDER.0 && p <= RICHARDSON_ORDER.1) || (v1 - v2) * (v2 - v3) < 0.0 {
        return Ok(fallback);
    }
    let r = (e2 / e3).powf(p);
    let limit = v3 + (v3 - v2) / (r - 1.0);
    Ok((limit, (limit - v3).abs()))
}

fn rule_for(field: &VectorField, extra: Vec<Point>) -> SurfaceRule {
    let mut points = field.singular_points();
    points.extend(extra);
    SurfaceRule::with_singular_points(points)
}

/// Inner-normal boundary integrals of `integrand` over `{d = sign·ε}` for each schedule value.
fn boundary_series<F>(set: &SetDescriptor, sign: f64, schedule: &EpsilonSchedule, resolution: f64, rule: &SurfaceRule, integrand: F) -> Result<Vec<EpsSample>>
where
    F: Fn(&Point, &Point) -> f64 + Sync,
{
    if !(resolution > 0.0) {
        return Err(Error::Config("resolution must be > 0".into()));
    }
    let sampler = LevelSampler::for_set(set, schedule.values[0], resolution);
    let mut out = Vec::with_capacity(schedule.len());
    for (&eps, &good) in schedule.values.iter().zip(&schedule.good) {
        let mesh = sampler.extract(sign * eps);
        if mesh.is_empty() {
            log::warn!("level d = {} is empty at resolution {resolution}; dropping it from the schedule", sign * eps);
            continue;
        }
        let value = surface_integral_with(&mesh, rule, &integrand)?;
        out.push(EpsSample {
            eps,
            boundary_integral: value,
            good: good && mesh.is_good() && (mesh.dim == 3 || mesh.open_ends == 0),
            level_measure: mesh.total_measure,
        });
    }
    Ok(out)
}

fn has_zero_volume(set: &SetDescriptor) -> bool {
    matches!(set.patches(), Some(p) if p.is_empty())
}

/// `∫ φ d div F` over the set (closure if `closure`) plus `∫_set F·∇φ dx`.
pub fn volume_side(field: &VectorField, set: &SetDescriptor, phi: &TestFunction, closure: bool) -> Result<f64> {
    let pairing = measure_pairing(&field.divergence(), phi, set, closure, VOLUME_TOL)?;
    if phi.lipschitz_bound() == 0.0 || has_zero_volume(set) {
        return Ok(pairing);
    }
    let mut singular = field.singular_points();
    singular.extend(phi.kink_points());
    let integrand = |x: &Point| {
        let g = phi.grad(x);
        if g == Point::zeros() {
            0.0
        } else {
            field.eval(x).dot(&g)
        }
    };
    let lines = phi.kink_lines();
    if set.dim() == 2 && lines.iter().any(|l| !l.is_empty()) {
        return Ok(pairing + split_volume_integral(&integrand, set, &lines, &singular)?);
    }
    let q = match phi.integration_ball() {
        Some((center, radius)) => volume_integral(integrand, &BallSection { region: set, center, radius }, &singular, VOLUME_TOL)?,
        None => volume_integral(integrand, set, &singular, VOLUME_TOL)?,
    };
    Ok(pairing + q.value)
}

/// Integral over `set` cut into the cells of the grid spanned by `lines`, so that no cell
/// straddles a jump of the integrand.
fn split_volume_integral<F>(f: &F, set: &SetDescriptor, lines: &[Vec<f64>; 2], singular: &[Point]) -> Result<f64>
where
    F: Fn(&Point) -> f64 + Sync,
{
    let bb = set.bounding_box();
    let cuts = |a: usize| {
        let mut c = vec![bb.min[a]];
        c.extend(lines[a].iter().copied().filter(|&t| t > bb.min[a] && t < bb.max[a]));
        c.push(bb.max[a]);
        c.sort_by(f64::total_cmp);
        c.dedup();
        c
    };
    let (xs, ys) = (cuts(0), cuts(1));
    let tol = VOLUME_TOL / ((xs.len() - 1) * (ys.len() - 1)) as f64;
    let mut total = 0.0;
    for x in xs.windows(2) {
        for y in ys.windows(2) {
            let cell = SetDescriptor::new(SetSpec::rect([x[0], y[0]], [x[1], y[1]]))?;
            let region = Intersection { a: set, b: &cell };
            total += volume_integral(f, &region, singular, tol)?.value;
        }
    }
    Ok(total)
}

fn check_inputs(set: &SetDescriptor, phi: &TestFunction, schedule: &EpsilonSchedule) -> Result<()> {
    if !set.is_bounded() {
        return Err(Error::Geometry("normal traces need a bounded set".into()));
    }
    if schedule.is_empty() {
        return Err(Error::InsufficientSchedule { good: 0 });
    }
    phi.validate()
}

fn trace(field: &VectorField, set: &SetDescriptor, phi: &TestFunction, schedule: &EpsilonSchedule, resolution: f64, side: TraceSide) -> Result<TraceEstimate> {
    check_inputs(set, phi, schedule)?;
    let (sign, closure) = match side {
        TraceSide::Interior => (1.0, false),
        TraceSide::Exterior | TraceSide::Compact => (-1.0, true),
    };
    let rule = rule_for(field, phi.kink_points());
    let per_eps = boundary_series(set, sign, schedule, resolution, &rule, |x, n| {
        let p = phi.eval(x);
        if p == 0.0 {
            0.0
        } else {
            p * field.eval(x).dot(n)
        }
    })?;
    let vs = volume_side(field, set, phi, closure)?;
    TraceEstimate::assemble(side, per_eps, vs)
}

/// Interior normal trace on `∂U` from the levels `{d = ε}`.
pub fn interior_trace(field: &VectorField, set: &SetDescriptor, phi: &TestFunction, schedule: &EpsilonSchedule, resolution: f64) -> Result<TraceEstimate> {
    trace(field, set, phi, schedule, resolution, TraceSide::Interior)
}

/// Exterior normal trace on `∂Ū` from the levels `{d = −ε}`.
pub fn exterior_trace(field: &VectorField, set: &SetDescriptor, phi: &TestFunction, schedule: &EpsilonSchedule, resolution: f64) -> Result<TraceEstimate> {
    trace(field, set, phi, schedule, resolution, TraceSide::Exterior)
}

/// Normal trace on `∂K` for the compact closure `K` of `compact` (a point is a ball of radius
/// 0, a segment a two-vertex polygon). Outward integrals `∫ φ F·∇dist(·, K)` are the
/// negated `per_eps` values.
pub fn compact_trace(field: &VectorField, compact: &SetDescriptor, phi: &TestFunction, schedule: &EpsilonSchedule, resolution: f64) -> Result<TraceEstimate> {
    trace(field, compact, phi, schedule, resolution, TraceSide::Compact)
}

/// `−(1/ε) ∫_{0 < d < ε} φ F·∇d dx`.
pub fn averaged_trace(field: &VectorField, set: &SetDescriptor, phi: &TestFunction, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Config("averaging width must be > 0".into()));
    }
    if !set.is_bounded() {
        return Err(Error::Geometry("averaged traces need a bounded set".into()));
    }
    phi.validate()?;
    let shell = Shell { set, lo: 0.0, hi: eps };
    match shell.patches() {
        Some(p) if p.is_empty() => return Err(Error::EmptyShell { eps }),
        Some(_) => {}
        None => {
            if volume_integral(|_| 1.0, &shell, &[], 1e-6 * eps)?.value <= 0.0 {
                return Err(Error::EmptyShell { eps });
            }
        }
    }
    let mut singular = field.singular_points();
    singular.extend(phi.kink_points());
    let integrand = |x: &Point| {
        let p = phi.eval(x);
        if p == 0.0 {
            return 0.0;
        }
        let (_, grad) = distance_and_gradient(set, x);
        p * field.eval(x).dot(&grad)
    };
    let tol = VOLUME_TOL * eps;
    let q = match phi.integration_ball() {
        Some((center, radius)) => volume_integral(integrand, &BallSection { region: &shell, center, radius }, &singular, tol)?,
        None => volume_integral(integrand, &shell, &singular, tol)?,
    };
    Ok(-q.value / eps)
}

fn support_disk(psi: &TestFunction, dim: usize) -> Result<SetDescriptor> {
    let (c, r) = psi
        .support()
        .filter(|s| s.1.is_finite() && s.1 > 0.0)
        .ok_or_else(|| Error::Config("the test function ψ needs a bounded support".into()))?;
    SetDescriptor::new(SetSpec::Ball {
        center: (0..dim).map(|k| c[k]).collect(),
        radius: r,
    })
}

/// `|−∫ g F·∇ψ − (∫ gψ d div F + ∫ ψ F·∇g)|`, the product rule `div(gF) = g div F + F·∇g`
/// tested against `ψ`.
pub fn product_rule_residual(field: &VectorField, g: &TestFunction, psi: &TestFunction) -> Result<f64> {
    g.validate()?;
    psi.validate()?;
    let disk = support_disk(psi, field.dim())?;
    let mut singular = field.singular_points();
    singular.extend(g.kink_points());
    singular.extend(psi.kink_points());
    let lhs = -volume_integral(|x| g.eval(x) * field.eval(x).dot(&psi.grad(x)), &disk, &singular, VOLUME_TOL)?.value;
    let product = TestFunction::Product {
        factors: vec![g.clone(), psi.clone()],
    };
    let pairing = measure_pairing(&field.divergence(), &product, &disk, true, VOLUME_TOL)?;
    let transport = volume_integral(|x| psi.eval(x) * field.eval(x).dot(&g.grad(x)), &disk, &singular, VOLUME_TOL)?.value;
    Ok((lhs - (pairing + transport)).abs())
}

fn gradient_field(u: Potential) -> VectorField {
    VectorField::new(FieldSpec::GradientOfPotential { potential: u }).expect("potential gradients are valid fields")
}

/// First Green identity: the interior trace of `∇u`, whose divergence is `Δu`.
pub fn green_first(u: Potential, set: &SetDescriptor, phi: &TestFunction, schedule: &EpsilonSchedule, resolution: f64) -> Result<TraceEstimate> {
    interior_trace(&gradient_field(u), set, phi, schedule, resolution)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GreenSecond {
    /// `∫_U v dΔu − ∫_U u dΔv`.
    pub left: f64,
    /// `−lim ∫_{d=ε} (v∇u − u∇v)·ν`.
    pub right: f64,
    pub per_eps: Vec<EpsSample>,
    pub limit_error: f64,
    pub residual: f64,
}

/// Both sides of the second Green identity on the same level sequence.
pub fn green_second(u: Potential, v: Potential, set: &SetDescriptor, schedule: &EpsilonSchedule, resolution: f64) -> Result<GreenSecond> {
    check_inputs(set, &TestFunction::constant(1.0), schedule)?;
    let (fu, fv) = (gradient_field(u), gradient_field(v));
    // Antisymmetric in (u, v); also avoids pairing log|x| with its own atom.
    let left = if u == v {
        0.0
    } else {
        measure_pairing(&fu.divergence(), &v, set, false, VOLUME_TOL)? - measure_pairing(&fv.divergence(), &u, set, false, VOLUME_TOL)?
    };
    let mut singular = Weight::singular_points(&u);
    singular.extend(Weight::singular_points(&v));
    let per_eps = boundary_series(set, 1.0, schedule, resolution, &SurfaceRule::with_singular_points(singular), |x, n| {
        let w = u.gradient(x) * v.value(x) - v.gradient(x) * u.value(x);
        w.dot(n)
    })?;
    let (eps, vals): (Vec<f64>, Vec<f64>) = per_eps.iter().filter(|s| s.good).map(|s| (s.eps, s.boundary_integral)).unzip();
    let (limit, limit_error) = richardson(&eps, &vals)?;
    let right = -limit;
    Ok(GreenSecond {
        left,
        right,
        per_eps,
        limit_error,
        residual: (left - right).abs(),
    })
}

/// Integrability regimes of the necessary condition for a measure trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `p < n/(n−1)`: the radial integral is `O(r)`.
    SubCritical,
    /// `p ≥ n/(n−1)`: the radial integral is `o(r)`.
    SuperCritical,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeReport {
    pub point: [f64; 3],
    /// `(r, ∫_{B(x,r)∩E} F(y)·(y−x)/|y−x| dy)`.
    pub values: Vec<(f64, f64)>,
    /// Least-squares slope of `log|value|` against `log r`; `None` when the values vanish.
    pub growth_exponent: Option<f64>,
    /// `max |value|/r`.
    pub linear_ratio: f64,
    /// `max |value|/r^n`, the bound for `H^{n−1}`-almost every boundary point.
    pub hausdorff_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NecessaryReport {
    pub p: f64,
    pub critical_exponent: f64,
    pub regime: Regime,
    pub probes: Vec<ProbeReport>,
}

fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// Radial integrals `∫_{B(x,r)∩E} F(y)·(y−x)/|y−x| dy` at boundary probes, their growth in
/// `r`, and the integrability regime of the field. Planar sets only.
pub fn trace_measure_necessary(field: &VectorField, set: &SetDescriptor, probes: &[Point], radii: &[f64]) -> Result<NecessaryReport> {
    let n = field.dim() as f64;
    let p = field.integrability();
    let critical = n / (n - 1.0);
    let mut reports = Vec::with_capacity(probes.len());
    for x in probes {
        let mut values = Vec::with_capacity(radii.len());
        for &r in radii {
            let integrand = |y: &Point| {
                let d = y - x;
                let len = d.norm();
                if len == 0.0 {
                    0.0
                } else {
                    field.eval(y).dot(&d) / len
                }
            };
            let (v, _) = ball_section_integral(integrand, set, x, r, 1e-9 * r * r)?;
            values.push((r, v));
        }
        let nonzero: Vec<(f64, f64)> = values.iter().filter(|(_, v)| v.abs() > 1e-300).map(|&(r, v)| (r.ln(), v.abs().ln())).collect();
        let (lr, lv): (Vec<f64>, Vec<f64>) = nonzero.into_iter().unzip();
        reports.push(ProbeReport {
            point: [x.x, x.y, x.z],
            growth_exponent: fit_slope(&lr, &lv),
            linear_ratio: values.iter().map(|(r, v)| v.abs() / r).fold(0.0, f64::max),
            hausdorff_ratio: values.iter().map(|(r, v)| v.abs() / r.powf(n)).fold(0.0, f64::max),
            values,
        });
    }
    Ok(NecessaryReport {
        p,
        critical_exponent: critical,
        regime: if p < critical { Regime::SubCritical } else { Regime::SuperCritical },
        probes: reports,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SufficientReport {
    pub minkowski: MinkowskiReport,
    /// Exponent used for the shell averages: `∞` for bounded fields, otherwise 1.
    pub p: f64,
    /// `(ε, (1/ε) ∫_{0<d<ε} |F|^p dx)`; empty when `p = ∞`.
    pub shell_averages: Vec<(f64, f64)>,
    /// Slope of the averages against `log(1/ε)` over the last two values.
    pub log_slope: Option<f64>,
    /// Whether the averages look bounded: their logarithmic trend, continued over the whole
    /// schedule, stays below 5% of the last average.
    pub averages_bounded: bool,
    /// `p = ∞`, or bounded shell averages, together with finite Minkowski content.
    pub average_condition_holds: bool,
    /// All atoms, density supports and surface parts of `div F` lie strictly inside the set.
    pub divergence_inside: bool,
    /// Catalog flag: `F` is the Newtonian field of its divergence.
    pub representation: bool,
    /// Compactly supported divergence, representation flag and finite Minkowski content.
    pub representation_condition_holds: bool,
}

fn strictly_inside(set: &SetDescriptor, x: &Point) -> bool {
    set.classify(x) == Location::Interior && set.signed_distance(x) > 0.0
}

/// Minkowski content of `∂U`, shell averages of `|F|^p`, and the two sufficient conditions
/// for the interior trace to be a measure.
pub fn trace_measure_sufficient(field: &VectorField, set: &SetDescriptor, schedule: &EpsilonSchedule, resolution: f64) -> Result<SufficientReport> {
    let minkowski = minkowski_content(set, schedule, resolution)?;
    let content_finite = minkowski.estimate.is_finite();
    let p = if field.singular_points().is_empty() { f64::INFINITY } else { 1.0 };
    let mut shell_averages = Vec::new();
    if p.is_finite() {
        let singular = field.singular_points();
        for &eps in &schedule.good_values() {
            let shell = Shell { set, lo: 0.0, hi: eps };
            let q = volume_integral(|x| field.eval(x).norm(), &shell, &singular, VOLUME_TOL * eps)?;
            shell_averages.push((eps, q.value / eps));
        }
    }
    let log_slope = match shell_averages.as_slice() {
        [.., (e1, a1), (e2, a2)] => Some((a2 - a1) / (e1 / e2).ln()),
        _ => None,
    };
    let averages_bounded = match (log_slope, shell_averages.first(), shell_averages.last()) {
        (Some(s), Some((e0, _)), Some((e1, a1))) => s * (e0 / e1).ln() <= 0.05 * a1.abs(),
        _ => p.is_infinite(),
    };
    let mu = field.divergence();
    let divergence_inside = mu.atoms.iter().all(|(x, _)| strictly_inside(set, x))
        && mu.density.iter().all(|d| match d.support {
            Some(b) => {
                let corners = [b.min, Point::new(b.max.x, b.min.y, b.min.z), b.max, Point::new(b.min.x, b.max.y, b.min.z)];
                corners.iter().all(|c| strictly_inside(set, c))
            }
            None => false,
        })
        && mu.surface_parts.iter().all(|s| strictly_inside(set, &s.a) && strictly_inside(set, &s.b));
    let representation = field.is_divergence_potential();
    Ok(SufficientReport {
        average_condition_holds: content_finite && averages_bounded,
        representation_condition_holds: content_finite && divergence_inside && representation,
        minkowski,
        p,
        shell_averages,
        log_slope,
        averages_bounded,
        divergence_inside,
        representation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{point2, SetSpec};
    use std::f64::consts::TAU;

    fn set(spec: SetSpec) -> SetDescriptor {
        SetDescriptor::new(spec).unwrap()
    }

    fn field(name: &str) -> VectorField {
        VectorField::catalog(name, serde_json::Value::Null).unwrap()
    }

    #[test]
    fn richardson_recovers_power_law_limit() {
        let eps: Vec<f64> = (3..8).map(|k| 2f64.powi(-k)).collect();
        let vals: Vec<f64> = eps.iter().map(|e| 1.5 + 0.7 * e * e).collect();
        let (l, err) = richardson(&eps, &vals).unwrap();
        assert!((l - 1.5).abs() < 1e-12, "{l}");
        assert!(err < 1e-4);
        let noisy = [1.0, 1.0 + 1e-9, 1.0 - 1e-9];
        let (l, _) = richardson(&eps[..3], &noisy).unwrap();
        assert_eq!(l, 1.0 - 1e-9);
        assert!(matches!(richardson(&eps[..1], &[1.0]), Err(Error::InsufficientSchedule { good: 1 })));
    }

    #[test]
    fn whitney_square_interior_and_exterior() {
        let w = VectorField::whitney();
        let sq = set(SetSpec::unit_square());
        let one = TestFunction::constant(1.0);
        let sched = EpsilonSchedule::dyadic(3, 6);
        let int = interior_trace(&w, &sq, &one, &sched, 1.0 / 256.0).unwrap();
        assert_eq!(int.volume_side, 0.0);
        assert!(int.limit.abs() < 1e-6, "{int}");
        assert_eq!(int.good_count, 4);
        let ext = exterior_trace(&w, &sq, &one, &sched, 1.0 / 256.0).unwrap();
        assert_eq!(ext.volume_side, TAU);
        for s in &ext.per_eps {
            assert!((s.boundary_integral + TAU).abs() < 1e-6, "{s:?}");
        }
        assert!(ext.residual < 1e-6);
        assert_eq!(ext.recompute_residual(), ext.residual);
    }

    #[test]
    fn linear_field_on_disk() {
        let lin = field("smooth_linear");
        let disk = set(SetSpec::disk([0.0, 0.0], 1.0));
        let one = TestFunction::constant(1.0);
        // Levels carry −2π(1 ∓ ε)², so the extrapolation needs ε well below 1.
        let sched = EpsilonSchedule::dyadic(5, 9);
        let int = interior_trace(&lin, &disk, &one, &sched, 1.0 / 1024.0).unwrap();
        assert!((int.volume_side - TAU).abs() < 1e-7);
        assert!((int.limit + TAU).abs() < 1e-3, "{int}");
        let ext = exterior_trace(&lin, &disk, &one, &sched, 1.0 / 1024.0).unwrap();
        assert!((ext.volume_side - TAU).abs() < 1e-7);
        assert!(ext.residual < 1e-3, "{ext}");
    }

    #[test]
    fn zero_test_function_gives_zero() {
        let w = VectorField::whitney();
        let sq = set(SetSpec::unit_square());
        let est = exterior_trace(&w, &sq, &TestFunction::constant(0.0), &EpsilonSchedule::dyadic(3, 5), 1.0 / 128.0).unwrap();
        assert_eq!(est.volume_side, 0.0);
        assert_eq!(est.limit, 0.0);
    }

    #[test]
    fn compact_point_and_segment() {
        let w = VectorField::whitney();
        let one = TestFunction::constant(1.0);
        let sched = EpsilonSchedule::dyadic(2, 5);
        let point = set(SetSpec::disk([0.0, 0.0], 0.0));
        let est = compact_trace(&w, &point, &one, &sched, 1.0 / 256.0).unwrap();
        assert_eq!(est.value(), TAU);
        assert!(est.residual < 1e-6, "{est}");
        let seg = set(SetSpec::Polygon {
            vertices: vec![[0.5, 0.5], [1.0, 0.8]],
        });
        let est = compact_trace(&w, &seg, &one, &sched, 1.0 / 256.0).unwrap();
        assert_eq!(est.value(), 0.0);
        assert!(est.limit.abs() < 1e-6, "{est}");
    }

    #[test]
    fn insufficient_schedule() {
        let w = VectorField::whitney();
        let sq = set(SetSpec::unit_square());
        let sched = EpsilonSchedule::new(vec![0.1]).unwrap();
        assert!(matches!(
            interior_trace(&w, &sq, &TestFunction::constant(1.0), &sched, 1.0 / 64.0),
            Err(Error::InsufficientSchedule { good: 1 })
        ));
    }

    #[test]
    fn interior_levels_beyond_inradius_are_dropped() {
        let w = VectorField::whitney();
        let sq = set(SetSpec::rect([0.0, 0.0], [0.4, 0.4]));
        let sched = EpsilonSchedule::new(vec![0.3, 0.1, 0.05, 0.025]).unwrap();
        let est = interior_trace(&w, &sq, &TestFunction::constant(1.0), &sched, 1.0 / 256.0).unwrap();
        assert_eq!(est.per_eps.len(), 3);
    }

    #[test]
    fn locality_for_interior_support() {
        let lin = field("smooth_linear");
        let sq = set(SetSpec::unit_square());
        let phi = TestFunction::bump([0.5, 0.5], 0.2);
        let est = interior_trace(&lin, &sq, &phi, &EpsilonSchedule::dyadic(3, 6), 1.0 / 256.0).unwrap();
        assert!(est.volume_side.abs() < 1e-7, "{est}");
        assert_eq!(est.limit, 0.0);
    }

    #[test]
    fn rotational_principal_value() {
        let rot = field("rotational");
        let e = set(SetSpec::rect([-1.0, -1.0], [1.0, 0.0]));
        let phi = TestFunction::hat([0.3, 0.0], 0.5);
        let est = interior_trace(&rot, &e, &phi, &EpsilonSchedule::dyadic(4, 8), 1.0 / 512.0).unwrap();
        let (pv, _) = crate::quadrature::principal_value(|x| (0.5 - (x - 0.3f64).abs()).max(0.0), 1.0, 1e-12).unwrap();
        assert!((est.value() - pv).abs() < 1e-6, "{} vs {pv}", est.value());
        assert!(est.residual < 1e-3, "{est}");
    }

    #[test]
    fn averaged_trace_cases() {
        let w = VectorField::whitney();
        let sq = set(SetSpec::unit_square());
        let one = TestFunction::constant(1.0);
        assert!(averaged_trace(&w, &sq, &one, 0.1).unwrap().abs() < 1e-6);
        assert_eq!(averaged_trace(&w, &sq, &TestFunction::constant(0.0), 0.1).unwrap(), 0.0);
        let lin = field("smooth_linear");
        let disk = set(SetSpec::disk([0.0, 0.0], 1.0));
        // −(1/ε)∫ x·(−x/|x|) over 1−ε < |x| < 1 = 2π(1 − (1−ε)³)/(3ε)
        for eps in [0.1, 0.01] {
            let exact = TAU * (1.0 - (1.0 - eps as f64).powi(3)) / (3.0 * eps);
            assert!((averaged_trace(&lin, &disk, &one, eps).unwrap() - exact).abs() < 1e-6);
        }
        let small = set(SetSpec::disk([0.0, 0.0], 0.0));
        assert!(matches!(averaged_trace(&w, &small, &one, 0.1), Err(Error::EmptyShell { .. })));
    }

    #[test]
    fn product_rule_cases() {
        let w = VectorField::whitney();
        let psi = TestFunction::bump([0.1, -0.2], 0.7);
        let r = product_rule_residual(&w, &TestFunction::constant(1.0), &psi).unwrap();
        assert!(r < 1e-4, "{r}");
        let g = TestFunction::poly2(&[(1.0, 0, 0), (0.5, 1, 1), (-0.3, 2, 0)]);
        let r = product_rule_residual(&w, &g, &psi).unwrap();
        assert!(r < 1e-4, "{r}");
        let lin = field("smooth_linear");
        let r = product_rule_residual(&lin, &g, &TestFunction::hat([0.2, 0.3], 0.5)).unwrap();
        assert!(r < 1e-6, "{r}");
        assert!(product_rule_residual(&lin, &g, &TestFunction::constant(1.0)).is_err());
    }

    #[test]
    fn green_identities() {
        let sq = set(SetSpec::unit_square());
        let one = TestFunction::constant(1.0);
        let sched = EpsilonSchedule::dyadic(3, 6);
        let g = green_first(Potential::Log, &sq, &one, &sched, 1.0 / 256.0).unwrap();
        assert!(g.residual < 1e-3, "{g}");
        let disk = set(SetSpec::disk([0.0, 0.0], 1.0));
        let g = green_first(Potential::HalfSquare, &disk, &one, &EpsilonSchedule::dyadic(5, 9), 1.0 / 1024.0).unwrap();
        assert!((g.value() - TAU).abs() < 1e-7);
        assert!(g.residual < 1e-3, "{g}");
        let g = green_first(Potential::HarmonicXy, &disk, &one, &sched, 1.0 / 256.0).unwrap();
        assert_eq!(g.value(), 0.0);
        assert!(g.limit.abs() < 1e-6);

        let same = green_second(Potential::HalfSquare, Potential::HalfSquare, &disk, &sched, 1.0 / 128.0).unwrap();
        assert_eq!((same.left, same.right), (0.0, 0.0));
        let same = green_second(Potential::Log, Potential::Log, &sq, &sched, 1.0 / 128.0).unwrap();
        assert_eq!((same.left, same.right), (0.0, 0.0));
        let centered = set(SetSpec::disk([0.1, 0.0], 0.5));
        let same = green_second(Potential::Log, Potential::Log, &centered, &sched, 1.0 / 128.0).unwrap();
        assert_eq!((same.left, same.right), (0.0, 0.0));
        let harm = green_second(Potential::HarmonicXy, Potential::HarmonicCubic, &disk, &sched, 1.0 / 256.0).unwrap();
        assert_eq!(harm.left, 0.0);
        assert!(harm.residual < 1e-3, "{harm:?}");
    }

    #[test]
    fn green_second_log_against_half_square() {
        // Disk of radius 1 about c = (0.3, 0.2): left = 2π v(0) − 2∫ log|x| dx with v(0) = 0.
        let c = point2(0.3, 0.2);
        let disk = set(SetSpec::disk([c.x, c.y], 1.0));
        let res = green_second(Potential::Log, Potential::HalfSquare, &disk, &EpsilonSchedule::dyadic(3, 7), 1.0 / 512.0).unwrap();
        // Mean of log|x| over a circle of radius s about c is log max(s, |c|).
        let m = c.norm();
        let (oracle, _) = crate::quadrature::integrate_1d_breaks(&mut |s: f64| -2.0 * TAU * s * s.max(m).ln(), &[0.0, m, 1.0], 1e-13).unwrap();
        assert!((res.left - oracle).abs() < 1e-6, "{} vs {oracle}", res.left);
        assert!(res.residual < 1e-3, "{res:?}");
    }

    #[test]
    fn necessary_condition_on_rotational_field() {
        let rot = field("rotational");
        let e = set(SetSpec::rect([-1.0, -1.0], [1.0, 0.0]));
        let radii = [0.05, 0.025, 0.0125];
        let rep = trace_measure_necessary(&rot, &e, &[point2(0.5, 0.0), point2(0.0, 0.0)], &radii).unwrap();
        assert_eq!(rep.regime, Regime::SubCritical);
        for (r, v) in &rep.probes[0].values {
            let ratio = v.abs() / (r * r / 0.5);
            assert!((ratio - 1.0).abs() < 0.02, "{ratio}");
        }
        assert!((rep.probes[0].growth_exponent.unwrap() - 2.0).abs() < 0.02);
        assert!(rep.probes[1].values.iter().all(|(_, v)| v.abs() <= 1e-12));
        let lin = field("smooth_linear");
        let rep = trace_measure_necessary(&lin, &set(SetSpec::unit_square()), &[point2(0.5, 0.0)], &radii).unwrap();
        assert_eq!(rep.regime, Regime::SuperCritical);
        assert!(rep.probes[0].growth_exponent.unwrap() >= 2.0 - 1e-6);
    }

    #[test]
    fn sufficient_condition_reports() {
        let sq = set(SetSpec::unit_square());
        let sched = EpsilonSchedule::dyadic(3, 7);
        let lin = field("smooth_linear");
        let rep = trace_measure_sufficient(&lin, &sq, &sched, 1.0 / 512.0).unwrap();
        assert!(rep.p.is_infinite() && rep.average_condition_holds);
        assert!((rep.minkowski.estimate - 4.0).abs() < 0.06, "{}", rep.minkowski.estimate);
        assert!(!rep.representation_condition_holds);

        let w = VectorField::whitney();
        let rep = trace_measure_sufficient(&w, &sq, &sched, 1.0 / 512.0).unwrap();
        assert_eq!(rep.p, 1.0);
        assert!(!rep.divergence_inside);
        // The corner at the atom makes the averages grow like 2 log(1/ε).
        assert!((rep.log_slope.unwrap() - 2.0).abs() < 0.1, "{:?}", rep.log_slope);
        assert!(!rep.averages_bounded);
        let inner = set(SetSpec::rect([-0.5, -0.5], [0.5, 0.5]));
        let rep = trace_measure_sufficient(&w, &inner, &sched, 1.0 / 512.0).unwrap();
        assert!(rep.averages_bounded, "{:?}", rep.shell_averages);
        assert!(rep.representation_condition_holds);
    }
}
