//! Catalog of divergence-measure vector fields with exact divergence decompositions, test
//! functions, and pairings of divergence measures with test functions over sets.

mod testfn;

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{point2, Aabb, Location, Point, SetDescriptor, SetSpec};
use crate::quadrature::{integrate_1d_breaks, volume_integral, BallSection, Intersection, Region};

pub use testfn::{Monomial, Smoothness, TestFunction};

/// Scalar function shared between a field and its divergence measure.
pub type ScalarFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

fn default_depth() -> usize {
    6
}

fn default_f() -> Vec<f64> {
    vec![1.0]
}

fn default_g() -> Vec<f64> {
    vec![-2.0, 1.0]
}

/// Scalar potentials `u` whose gradients are catalog fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Potential {
    /// `log|x|`, `Δu = 2π δ₀`.
    Log,
    /// `|x|²/2`, `Δu = 2`.
    HalfSquare,
    /// `x₁ x₂`.
    HarmonicXy,
    /// `x₁² − x₂²`.
    HarmonicSquares,
    /// `x₁³ − 3 x₁ x₂²`.
    HarmonicCubic,
}

impl Potential {
    pub fn value(&self, x: &Point) -> f64 {
        let (a, b) = (x.x, x.y);
        match self {
            Potential::Log => 0.5 * (a * a + b * b).ln(),
            Potential::HalfSquare => 0.5 * (a * a + b * b),
            Potential::HarmonicXy => a * b,
            Potential::HarmonicSquares => a * a - b * b,
            Potential::HarmonicCubic => a * a * a - 3.0 * a * b * b,
        }
    }

    pub fn gradient(&self, x: &Point) -> Point {
        let (a, b) = (x.x, x.y);
        match self {
            Potential::Log => {
                let r2 = a * a + b * b;
                point2(a / r2, b / r2)
            }
            Potential::HalfSquare => point2(a, b),
            Potential::HarmonicXy => point2(b, a),
            Potential::HarmonicSquares => point2(2.0 * a, -2.0 * b),
            Potential::HarmonicCubic => point2(3.0 * (a * a - b * b), -6.0 * a * b),
        }
    }
}

/// Serializable catalog entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    /// `x/|x|²`.
    Whitney,
    /// `x/(2π|x|²)`.
    WhitneyNormalized,
    /// `(−x₂, x₁)/|x|²`.
    Rotational,
    /// `(−x₂, x₁)/|x|^α`, `2 ≤ α < 3`.
    RotationalAlpha { alpha: f64 },
    /// `x/|x|ⁿ` in dimension `n ∈ {2, 3}`.
    RadialN { n: usize },
    /// `(x₁, x₂)`.
    SmoothLinear,
    /// `χ_E f(x₂) g(x₁) e₁` on the staircase set `E` truncated after `depth` steps.
    /// `f` and `g` are polynomial coefficients in ascending order.
    StaircaseField {
        #[serde(default = "default_depth")]
        depth: usize,
        #[serde(default = "default_f")]
        f: Vec<f64>,
        #[serde(default = "default_g")]
        g: Vec<f64>,
    },
    Constant { value: Vec<f64> },
    GradientOfPotential { potential: Potential },
}

fn poly(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * t + a)
}

fn poly_derivative(c: &[f64], t: f64) -> f64 {
    c.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, &a)| acc * t + k as f64 * a)
}

/// Partial sums `Σ_{k≤n} (−1)^{k−1}/k` of the alternating harmonic series.
pub fn staircase_offsets(depth: usize) -> Vec<f64> {
    let mut s = 0.0;
    (1..=depth)
        .map(|k| {
            s += if k % 2 == 1 { 1.0 } else { -1.0 } / k as f64;
            s
        })
        .collect()
}

/// Horizontal strip `(0, right) × (lo, hi)` of the staircase set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Strip {
    pub right: f64,
    pub lo: f64,
    pub hi: f64,
}

/// The staircase set: the base `(0,1) × (0,1/2)` and strips
/// `(0, 1 + s_n) × (1 − 2⁻ⁿ, 1 − 2⁻ⁿ⁻¹)` for `n = 1..depth`.
pub fn staircase_strips(depth: usize) -> Vec<Strip> {
    let mut strips = vec![Strip { right: 1.0, lo: 0.0, hi: 0.5 }];
    for (n, s) in staircase_offsets(depth).into_iter().enumerate() {
        let n = n as i32 + 1;
        strips.push(Strip {
            right: 1.0 + s,
            lo: 1.0 - 2f64.powi(-n),
            hi: 1.0 - 2f64.powi(-n - 1),
        });
    }
    strips
}

fn in_staircase(strips: &[Strip], x: &Point) -> bool {
    if x.x <= 0.0 {
        return false;
    }
    for (k, s) in strips.iter().enumerate() {
        if x.y > s.lo && x.y < s.hi {
            return x.x < s.right;
        }
        // Shared edge of consecutive strips is interior where both strips are present.
        if x.y == s.hi {
            return strips.get(k + 1).is_some_and(|t| x.x < s.right.min(t.right));
        }
    }
    false
}

/// Absolutely continuous part of a divergence measure, supported in an optional box.
#[derive(Clone)]
pub struct DensityPart {
    pub density: ScalarFn,
    /// Box outside which the density vanishes; it may jump across the box faces.
    pub support: Option<Aabb>,
}

/// Segment `[a, b]` carrying the measure `density · H¹`.
#[derive(Clone)]
pub struct SurfacePart {
    pub a: Point,
    pub b: Point,
    pub density: ScalarFn,
}

/// Divergence measure `density · Lⁿ + Σ mass δ_p + Σ density · H¹⌊segment`.
#[derive(Clone, Default)]
pub struct DivergenceMeasure {
    pub density: Vec<DensityPart>,
    pub atoms: Vec<(Point, f64)>,
    pub surface_parts: Vec<SurfacePart>,
}

impl fmt::Debug for DivergenceMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DivergenceMeasure")
            .field("density_parts", &self.density.len())
            .field("atoms", &self.atoms)
            .field("surface_parts", &self.surface_parts.iter().map(|s| (s.a, s.b)).collect::<Vec<_>>())
            .finish()
    }
}

impl DivergenceMeasure {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn atom(point: Point, mass: f64) -> Self {
        DivergenceMeasure {
            atoms: vec![(point, mass)],
            ..Self::default()
        }
    }

    pub fn with_density(density: ScalarFn) -> Self {
        DivergenceMeasure {
            density: vec![DensityPart { density, support: None }],
            ..Self::default()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.density.is_empty() && self.atoms.iter().all(|a| a.1 == 0.0) && self.surface_parts.is_empty()
    }

    /// Value of the absolutely continuous part at `x`.
    pub fn density_at(&self, x: &Point) -> f64 {
        self.density
            .iter()
            .filter(|p| p.support.map_or(true, |b| b.contains(x, 3)))
            .map(|p| (p.density)(x))
            .sum()
    }
}

/// A catalog field with its singular locus and divergence decomposition.
#[derive(Clone, Debug)]
pub struct VectorField {
    spec: FieldSpec,
    dim: usize,
    strips: Vec<Strip>,
}

impl VectorField {
    pub fn new(spec: FieldSpec) -> Result<Self> {
        let bad = |m: String| Err(Error::Config(m));
        let mut strips = Vec::new();
        let dim = match &spec {
            FieldSpec::RotationalAlpha { alpha } => {
                if !(*alpha >= 2.0 && *alpha < 3.0) {
                    return bad(format!("rotational_alpha needs alpha in [2, 3), got {alpha}"));
                }
                2
            }
            FieldSpec::RadialN { n } => {
                if !(2..=3).contains(n) {
                    return bad(format!("radial_n supports n = 2 or 3, got {n}"));
                }
                *n
            }
            FieldSpec::StaircaseField { depth, f, g } => {
                if *depth == 0 || *depth > 40 {
                    return bad(format!("staircase depth must lie in 1..=40, got {depth}"));
                }
                if f.is_empty() || g.is_empty() || f.iter().chain(g).any(|c| !c.is_finite()) {
                    return bad("staircase f and g need finite coefficients".into());
                }
                strips = staircase_strips(*depth);
                2
            }
            FieldSpec::Constant { value } => {
                if !(2..=3).contains(&value.len()) || value.iter().any(|v| !v.is_finite()) {
                    return bad("constant field needs 2 or 3 finite components".into());
                }
                value.len()
            }
            _ => 2,
        };
        Ok(VectorField { spec, dim, strips })
    }

    /// Builds a catalog entry from its name and a table of parameters.
    pub fn catalog(name: &str, params: serde_json::Value) -> Result<Self> {
        let mut table = match params {
            serde_json::Value::Object(m) => m,
            serde_json::Value::Null => serde_json::Map::new(),
            other => return Err(Error::Config(format!("field parameters must be a table, got {other}"))),
        };
        table.insert("name".into(), serde_json::Value::String(name.into()));
        let spec: FieldSpec = serde_json::from_value(serde_json::Value::Object(table)).map_err(|e| Error::Config(format!("field `{name}`: {e}")))?;
        Self::new(spec)
    }

    pub fn whitney() -> Self {
        Self::new(FieldSpec::Whitney).expect("valid")
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &Point) -> Point {
        let planar = point2(x.x, x.y);
        match &self.spec {
            FieldSpec::Whitney => planar / planar.norm_squared(),
            FieldSpec::WhitneyNormalized => planar / (TAU * planar.norm_squared()),
            FieldSpec::Rotational => point2(-x.y, x.x) / planar.norm_squared(),
            FieldSpec::RotationalAlpha { alpha } => point2(-x.y, x.x) / planar.norm().powf(*alpha),
            FieldSpec::RadialN { n } => {
                let v = if *n == 2 { planar } else { *x };
                v / v.norm().powi(*n as i32)
            }
            FieldSpec::SmoothLinear => planar,
            FieldSpec::StaircaseField { f, g, .. } => {
                if in_staircase(&self.strips, x) {
                    point2(poly(f, x.y) * poly(g, x.x), 0.0)
                } else {
                    Point::zeros()
                }
            }
            FieldSpec::Constant { value } => Point::new(value[0], value[1], value.get(2).copied().unwrap_or(0.0)),
            FieldSpec::GradientOfPotential { potential } => potential.gradient(x),
        }
    }

    /// Points where the field is unbounded.
    pub fn singular_points(&self) -> Vec<Point> {
        match &self.spec {
            FieldSpec::Whitney
            | FieldSpec::WhitneyNormalized
            | FieldSpec::Rotational
            | FieldSpec::RotationalAlpha { .. }
            | FieldSpec::RadialN { .. }
            | FieldSpec::GradientOfPotential { potential: Potential::Log } => vec![Point::zeros()],
            _ => Vec::new(),
        }
    }

    /// Coordinates `c` such that the field may jump across the hyperplane `{x_axis = c}`.
    pub fn jump_coordinates(&self, axis: usize) -> Vec<f64> {
        if self.strips.is_empty() {
            return Vec::new();
        }
        let mut c: Vec<f64> = match axis {
            0 => std::iter::once(0.0).chain(self.strips.iter().map(|s| s.right)).collect(),
            1 => self.strips.iter().flat_map(|s| [s.lo, s.hi]).collect(),
            _ => Vec::new(),
        };
        c.sort_by(f64::total_cmp);
        c.dedup();
        c
    }

    /// Exponent above which `|F|^p` stops being locally integrable (∞ for bounded fields).
    pub fn integrability_bound(&self) -> f64 {
        let n = self.dim as f64;
        match &self.spec {
            FieldSpec::RotationalAlpha { alpha } => 2.0 / (alpha - 1.0),
            _ if !self.singular_points().is_empty() => n / (n - 1.0),
            _ => f64::INFINITY,
        }
    }

    /// Declared exponent `p` with `F ∈ L^p_loc`, strictly inside the admissible range.
    pub fn integrability(&self) -> f64 {
        let b = self.integrability_bound();
        if b.is_finite() {
            0.5 * (1.0 + b)
        } else {
            f64::INFINITY
        }
    }

    /// Blow-up rate `k` in `|F(x)| ~ |x − s|^{−k}` near the singular points.
    pub fn singularity_order(&self) -> f64 {
        match &self.spec {
            FieldSpec::RotationalAlpha { alpha } => alpha - 1.0,
            _ if !self.singular_points().is_empty() => self.dim as f64 - 1.0,
            _ => 0.0,
        }
    }

    /// Whether `F(x) = (1/nωₙ) ∫ (x − y)/|x − y|ⁿ d div F(y)`.
    pub fn is_divergence_potential(&self) -> bool {
        matches!(
            self.spec,
            FieldSpec::Whitney | FieldSpec::WhitneyNormalized | FieldSpec::RadialN { .. } | FieldSpec::GradientOfPotential { potential: Potential::Log }
        )
    }

    /// Scalar potential when the field is a gradient.
    pub fn potential(&self) -> Option<Potential> {
        match &self.spec {
            FieldSpec::GradientOfPotential { potential } => Some(*potential),
            FieldSpec::Whitney => Some(Potential::Log),
            FieldSpec::SmoothLinear => Some(Potential::HalfSquare),
            _ => None,
        }
    }

    /// Exact distributional divergence.
    pub fn divergence(&self) -> DivergenceMeasure {
        let origin = Point::zeros();
        match &self.spec {
            FieldSpec::Whitney | FieldSpec::GradientOfPotential { potential: Potential::Log } => DivergenceMeasure::atom(origin, TAU),
            FieldSpec::WhitneyNormalized => DivergenceMeasure::atom(origin, 1.0),
            FieldSpec::RadialN { n } => DivergenceMeasure::atom(origin, if *n == 2 { TAU } else { 4.0 * PI }),
            FieldSpec::SmoothLinear | FieldSpec::GradientOfPotential { potential: Potential::HalfSquare } => {
                DivergenceMeasure::with_density(Arc::new(|_: &Point| 2.0))
            }
            FieldSpec::StaircaseField { f, g, .. } => self.staircase_divergence(f, g),
            _ => DivergenceMeasure::zero(),
        }
    }

    fn staircase_divergence(&self, f: &[f64], g: &[f64]) -> DivergenceMeasure {
        let (f, g): (Arc<[f64]>, Arc<[f64]>) = (f.into(), g.into());
        let mut mu = DivergenceMeasure::zero();
        for s in &self.strips {
            let (fc, gc) = (f.clone(), g.clone());
            mu.density.push(DensityPart {
                density: Arc::new(move |x: &Point| poly(&fc, x.y) * poly_derivative(&gc, x.x)),
                support: Some(Aabb::new(point2(0.0, s.lo), point2(s.right, s.hi))),
            });
            let (fc, g_right) = (f.clone(), poly(&g, s.right));
            mu.surface_parts.push(SurfacePart {
                a: point2(s.right, s.lo),
                b: point2(s.right, s.hi),
                density: Arc::new(move |x: &Point| -poly(&fc, x.y) * g_right),
            });
        }
        let top = self.strips.last().map_or(0.5, |s| s.hi);
        let (fc, g_left) = (f.clone(), poly(&g, 0.0));
        mu.surface_parts.push(SurfacePart {
            a: point2(0.0, 0.0),
            b: point2(0.0, top),
            density: Arc::new(move |x: &Point| poly(&fc, x.y) * g_left),
        });
        mu
    }
}

/// A scalar weight that can be paired with a divergence measure.
pub trait Weight: Sync {
    fn value(&self, x: &Point) -> f64;
    /// Points where the weight is singular or has a kink.
    fn singular_points(&self) -> Vec<Point> {
        Vec::new()
    }
    /// Ball outside of which the weight vanishes or has a kink on its sphere.
    fn restriction_ball(&self) -> Option<(Point, f64)> {
        None
    }
}

impl Weight for TestFunction {
    fn value(&self, x: &Point) -> f64 {
        self.eval(x)
    }

    fn singular_points(&self) -> Vec<Point> {
        self.kink_points()
    }

    fn restriction_ball(&self) -> Option<(Point, f64)> {
        self.integration_ball()
    }
}

impl Weight for Potential {
    fn value(&self, x: &Point) -> f64 {
        Potential::value(self, x)
    }

    fn singular_points(&self) -> Vec<Point> {
        match self {
            Potential::Log => vec![Point::zeros()],
            _ => Vec::new(),
        }
    }
}

/// `∫_region φ d μ`; atoms and surface parts on `∂region` count iff `closure`.
pub fn measure_pairing<W: Weight + ?Sized>(mu: &DivergenceMeasure, phi: &W, region: &SetDescriptor, closure: bool, tol: f64) -> Result<f64> {
    pair(mu, phi, region, closure, tol, false)
}

/// Total variation `|μ|` of the region (or of its closure).
pub fn total_variation(mu: &DivergenceMeasure, region: &SetDescriptor, closure: bool, tol: f64) -> Result<f64> {
    pair(mu, &TestFunction::constant(1.0), region, closure, tol, true)
}

fn pair<W: Weight + ?Sized>(mu: &DivergenceMeasure, phi: &W, region: &SetDescriptor, closure: bool, tol: f64, absolute: bool) -> Result<f64> {
    if !region.is_bounded() {
        return Err(Error::Geometry("measure pairing needs a bounded region".into()));
    }
    let weight = |v: f64| if absolute { v.abs() } else { v };
    let parts = (mu.density.len() + mu.surface_parts.len()).max(1) as f64;
    let mut total = 0.0;

    for part in &mu.density {
        let support = part.support.map(|b| {
            let (lo, hi) = (b.min, b.max);
            SetDescriptor::new(SetSpec::rect([lo.x, lo.y], [hi.x, hi.y]))
        });
        let support = support.transpose()?;
        let clipped;
        let mut r: &dyn Region = region;
        if let Some(s) = &support {
            clipped = Intersection { a: region, b: s };
            r = &clipped;
        }
        let ball;
        if let Some((center, radius)) = phi.restriction_ball() {
            ball = BallSection { region: r, center, radius };
            r = &ball;
        }
        let density = &part.density;
        let q = volume_integral(|x| weight(phi.value(x) * density(x)), r, &phi.singular_points(), tol / parts)?;
        total += q.value;
    }

    for (p, mass) in &mu.atoms {
        let include = match region.classify(p) {
            Location::Interior => true,
            Location::Boundary => closure,
            Location::Exterior => false,
            Location::Uncertain => {
                return Err(Error::AmbiguousAtom {
                    point: [p.x, p.y, p.z],
                    distance: region.signed_distance(p).abs(),
                })
            }
        };
        if include {
            total += weight(mass * phi.value(p));
        }
    }

    for s in &mu.surface_parts {
        for (t0, t1) in clip_segment(region, &s.a, &s.b, closure)? {
            let len = (s.b - s.a).norm();
            let mut g = |t: f64| {
                let x = s.a + (s.b - s.a) * t;
                weight(phi.value(&x) * (s.density)(&x)) * len
            };
            total += integrate_1d_breaks(&mut g, &[t0, t1], tol / parts)?.0;
        }
    }
    Ok(total)
}

/// Parameter intervals of `[a, b]` inside the region (plus boundary-lying pieces if `closure`).
fn clip_segment(region: &SetDescriptor, a: &Point, b: &Point, closure: bool) -> Result<Vec<(f64, f64)>> {
    const SAMPLES: usize = 256;
    let at = |t: f64| a + (b - a) * t;
    let class = |t: f64| -> Result<Location> {
        let x = at(t);
        match region.classify(&x) {
            Location::Uncertain => Err(Error::AmbiguousAtom {
                point: [x.x, x.y, x.z],
                distance: region.signed_distance(&x).abs(),
            }),
            c => Ok(c),
        }
    };
    let mut cuts = vec![0.0];
    let mut prev = class(0.0)?;
    for k in 1..=SAMPLES {
        let t = k as f64 / SAMPLES as f64;
        let c = class(t)?;
        if c != prev {
            let (mut lo, mut hi) = (t - 1.0 / SAMPLES as f64, t);
            for _ in 0..60 {
                let m = 0.5 * (lo + hi);
                if class(m)? == prev {
                    lo = m;
                } else {
                    hi = m;
                }
            }
            cuts.push(0.5 * (lo + hi));
            prev = c;
        }
    }
    cuts.push(1.0);
    let mut out: Vec<(f64, f64)> = Vec::new();
    for w in cuts.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let keep = match class(0.5 * (w[0] + w[1]))? {
            Location::Interior => true,
            Location::Boundary => closure,
            _ => false,
        };
        if keep {
            match out.last_mut() {
                Some(last) if last.1 == w[0] => last.1 = w[1],
                _ => out.push((w[0], w[1])),
            }
        }
    }
    Ok(out)
}
