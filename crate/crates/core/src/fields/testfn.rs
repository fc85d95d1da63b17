use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothness {
    Lipschitz,
    C1,
    Cinf,
}

/// One term `coef · x^x y^y z^z` of a polynomial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coef: f64,
    #[serde(default)]
    pub x: u32,
    #[serde(default)]
    pub y: u32,
    #[serde(default)]
    pub z: u32,
}

/// Test functions with closed-form gradients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunction {
    Constant {
        value: f64,
    },
    Polynomial {
        terms: Vec<Monomial>,
    },
    /// Radial hat `(r − |y − c|)⁺`.
    Hat {
        center: Vec<f64>,
        radius: f64,
    },
    /// `exp(1 − 1/(1 − s²))` with `s = |y − c|/r`; equals 1 at the center.
    Bump {
        center: Vec<f64>,
        radius: f64,
    },
    /// One-sided plateau `a(x₁) b(x₂)`: `a` ramps up on `[δ, 2δ]` and down on `[1/2, 3/4]`,
    /// `b` is 1 for `|x₂| ≤ 1/4` and vanishes for `|x₂| ≥ 1/2`.
    Plateau {
        delta: f64,
    },
    Product {
        factors: Vec<TestFunction>,
    },
}

fn to_point(c: &[f64]) -> Point {
    Point::new(c[0], c.get(1).copied().unwrap_or(0.0), c.get(2).copied().unwrap_or(0.0))
}

fn bump_profile(s2: f64) -> f64 {
    if s2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s2)).exp()
    }
}

/// `max_s |d/ds exp(1 − 1/(1 − s²))|`, attained near s ≈ 0.45.
fn bump_slope() -> f64 {
    (1..10_000)
        .map(|k| {
            let s = k as f64 / 10_000.0;
            let q = 1.0 - s * s;
            bump_profile(s * s) * 2.0 * s / (q * q)
        })
        .fold(0.0, f64::max)
        * 1.01
}

fn ramp_up(t: f64, a: f64, b: f64) -> (f64, f64) {
    if t <= a {
        (0.0, 0.0)
    } else if t >= b {
        (1.0, 0.0)
    } else {
        ((t - a) / (b - a), 1.0 / (b - a))
    }
}

fn plateau_a(x: f64, delta: f64) -> (f64, f64) {
    if x <= 0.5 {
        ramp_up(x, delta, 2.0 * delta)
    } else {
        let (v, d) = ramp_up(x, 0.5, 0.75);
        (1.0 - v, -d)
    }
}

fn plateau_b(y: f64) -> (f64, f64) {
    let (v, d) = ramp_up(y.abs(), 0.25, 0.5);
    (1.0 - v, -d * y.signum())
}

impl TestFunction {
    pub fn constant(value: f64) -> Self {
        TestFunction::Constant { value }
    }

    pub fn hat(center: [f64; 2], radius: f64) -> Self {
        TestFunction::Hat {
            center: center.to_vec(),
            radius,
        }
    }

    pub fn bump(center: [f64; 2], radius: f64) -> Self {
        TestFunction::Bump {
            center: center.to_vec(),
            radius,
        }
    }

    /// Polynomial from `(coef, i, j)` terms in two variables.
    pub fn poly2(terms: &[(f64, u32, u32)]) -> Self {
        TestFunction::Polynomial {
            terms: terms.iter().map(|&(coef, x, y)| Monomial { coef, x, y, z: 0 }).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        match self {
            TestFunction::Constant { value } if !value.is_finite() => bad("constant test function must be finite"),
            TestFunction::Hat { center, radius } | TestFunction::Bump { center, radius } => {
                if !(2..=3).contains(&center.len()) {
                    bad("test function center must have 2 or 3 coordinates")
                } else if !(*radius > 0.0 && radius.is_finite()) {
                    bad("test function radius must be positive")
                } else {
                    Ok(())
                }
            }
            TestFunction::Plateau { delta } if !(*delta > 0.0 && *delta <= 0.25) => bad("plateau delta must lie in (0, 1/4]"),
            TestFunction::Product { factors } => factors.iter().try_for_each(|f| f.validate()),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, y: &Point) -> f64 {
        match self {
            TestFunction::Constant { value } => *value,
            TestFunction::Polynomial { terms } => terms
                .iter()
                .map(|m| m.coef * y.x.powi(m.x as i32) * y.y.powi(m.y as i32) * y.z.powi(m.z as i32))
                .sum(),
            TestFunction::Hat { center, radius } => (radius - (y - to_point(center)).norm()).max(0.0),
            TestFunction::Bump { center, radius } => bump_profile((y - to_point(center)).norm_squared() / (radius * radius)),
            TestFunction::Plateau { delta } => plateau_a(y.x, *delta).0 * plateau_b(y.y).0,
            TestFunction::Product { factors } => factors.iter().map(|f| f.eval(y)).product(),
        }
    }

    pub fn grad(&self, y: &Point) -> Point {
        match self {
            TestFunction::Constant { .. } => Point::zeros(),
            TestFunction::Polynomial { terms } => {
                let mut g = Point::zeros();
                for m in terms {
                    let p = [m.x, m.y, m.z];
                    for a in 0..3 {
                        if p[a] == 0 {
                            continue;
                        }
                        let mut t = m.coef * p[a] as f64;
                        for b in 0..3 {
                            let e = if a == b { p[b] - 1 } else { p[b] };
                            t *= y[b].powi(e as i32);
                        }
                        g[a] += t;
                    }
                }
                g
            }
            TestFunction::Hat { center, radius } => {
                let r = y - to_point(center);
                let n = r.norm();
                if n >= *radius || n == 0.0 {
                    Point::zeros()
                } else {
                    -r / n
                }
            }
            TestFunction::Bump { center, radius } => {
                let r = y - to_point(center);
                let s2 = r.norm_squared() / (radius * radius);
                if s2 >= 1.0 {
                    return Point::zeros();
                }
                let q = 1.0 - s2;
                // d/dy exp(1 − 1/q) = exp(·) · (−1/q²) · (−2 r / R²)
                r * (-2.0 * bump_profile(s2) / (q * q * radius * radius))
            }
            TestFunction::Plateau { delta } => {
                let (a, da) = plateau_a(y.x, *delta);
                let (b, db) = plateau_b(y.y);
                Point::new(da * b, a * db, 0.0)
            }
            TestFunction::Product { factors } => {
                let vals: Vec<f64> = factors.iter().map(|f| f.eval(y)).collect();
                let mut g = Point::zeros();
                for (i, f) in factors.iter().enumerate() {
                    let others: f64 = vals.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v).product();
                    if others != 0.0 {
                        g += f.grad(y) * others;
                    }
                }
                g
            }
        }
    }

    /// Ball outside of which the function vanishes; `None` when the support is unbounded.
    pub fn support(&self) -> Option<(Point, f64)> {
        match self {
            TestFunction::Constant { value } if *value == 0.0 => Some((Point::zeros(), 0.0)),
            TestFunction::Constant { .. } | TestFunction::Polynomial { .. } => None,
            TestFunction::Hat { center, radius } | TestFunction::Bump { center, radius } => Some((to_point(center), *radius)),
            TestFunction::Plateau { .. } => Some((Point::zeros(), (0.75f64.powi(2) + 0.25).sqrt())),
            TestFunction::Product { factors } => factors
                .iter()
                .filter_map(|f| f.support())
                .min_by(|a, b| a.1.total_cmp(&b.1)),
        }
    }

    pub fn support_radius(&self) -> f64 {
        self.support().map_or(f64::INFINITY, |s| s.1)
    }

    /// Ball whose sphere carries a kink or whose interior is the natural integration domain;
    /// integrals against the function are restricted to it.
    pub fn integration_ball(&self) -> Option<(Point, f64)> {
        match self {
            TestFunction::Hat { .. } | TestFunction::Bump { .. } => self.support(),
            TestFunction::Product { factors } => factors
                .iter()
                .filter_map(|f| f.integration_ball())
                .min_by(|a, b| a.1.total_cmp(&b.1)),
            _ => None,
        }
    }

    /// Isolated points where the gradient is discontinuous.
    pub fn kink_points(&self) -> Vec<Point> {
        match self {
            TestFunction::Hat { center, .. } => vec![to_point(center)],
            TestFunction::Product { factors } => factors.iter().flat_map(|f| f.kink_points()).collect(),
            _ => Vec::new(),
        }
    }

    /// Coordinates `[x₁, x₂]` of axis-aligned lines across which the gradient jumps.
    pub fn kink_lines(&self) -> [Vec<f64>; 2] {
        match self {
            TestFunction::Plateau { delta } => [vec![*delta, 2.0 * delta, 0.5, 0.75], vec![-0.5, -0.25, 0.25, 0.5]],
            TestFunction::Product { factors } => {
                let mut out = [Vec::new(), Vec::new()];
                for f in factors {
                    let [a, b] = f.kink_lines();
                    out[0].extend(a);
                    out[1].extend(b);
                }
                for v in &mut out {
                    v.sort_by(f64::total_cmp);
                    v.dedup();
                }
                out
            }
            _ => [Vec::new(), Vec::new()],
        }
    }

    pub fn sup_abs(&self) -> f64 {
        match self {
            TestFunction::Constant { value } => value.abs(),
            TestFunction::Polynomial { .. } => f64::INFINITY,
            TestFunction::Hat { radius, .. } => *radius,
            TestFunction::Bump { .. } | TestFunction::Plateau { .. } => 1.0,
            TestFunction::Product { factors } => factors.iter().map(|f| f.sup_abs()).product(),
        }
    }

    pub fn lipschitz_bound(&self) -> f64 {
        match self {
            TestFunction::Constant { .. } => 0.0,
            TestFunction::Polynomial { terms } => {
                if terms.iter().all(|m| m.x + m.y + m.z == 0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            TestFunction::Hat { .. } => 1.0,
            TestFunction::Bump { radius, .. } => bump_slope() / radius,
            TestFunction::Plateau { delta } => (1.0 / delta).hypot(4.0),
            TestFunction::Product { factors } => (0..factors.len())
                .map(|i| {
                    let rest: f64 = factors.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, f)| f.sup_abs()).product();
                    factors[i].lipschitz_bound() * rest
                })
                .sum(),
        }
    }

    pub fn smoothness(&self) -> Smoothness {
        match self {
            TestFunction::Constant { .. } | TestFunction::Polynomial { .. } | TestFunction::Bump { .. } => Smoothness::Cinf,
            TestFunction::Hat { .. } | TestFunction::Plateau { .. } => Smoothness::Lipschitz,
            TestFunction::Product { factors } => factors.iter().map(|f| f.smoothness()).min().unwrap_or(Smoothness::Cinf),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::point2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fd_grad(f: &TestFunction, y: &Point, h: f64) -> Point {
        let mut g = Point::zeros();
        for a in 0..2 {
            let mut p = *y;
            let mut m = *y;
            p[a] += h;
            m[a] -= h;
            g[a] = (f.eval(&p) - f.eval(&m)) / (2.0 * h);
        }
        g
    }

    #[test]
    fn gradients_match_central_differences() {
        let funcs = [
            TestFunction::poly2(&[(1.0, 2, 1), (-0.5, 0, 3), (2.0, 1, 0)]),
            TestFunction::bump([0.2, -0.1], 0.7),
            TestFunction::Product {
                factors: vec![TestFunction::bump([0.0, 0.0], 1.0), TestFunction::poly2(&[(1.0, 1, 1), (0.3, 0, 0)])],
            },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for f in &funcs {
            for _ in 0..1000 {
                let y = point2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let g = f.grad(&y);
                let fd = fd_grad(f, &y, 1e-5);
                assert!((g - fd).norm() <= 1e-6 * (1.0 + g.norm()), "{f:?} at {y:?}: {g:?} vs {fd:?}");
            }
        }
    }

    #[test]
    fn lipschitz_gradients_away_from_kinks() {
        let hat = TestFunction::hat([0.1, 0.2], 0.5);
        let y = point2(0.3, 0.4);
        assert!((hat.grad(&y) - fd_grad(&hat, &y, 1e-6)).norm() < 1e-8);
        let p = TestFunction::Plateau { delta: 0.125 };
        for y in [point2(0.2, 0.1), point2(0.6, -0.3), point2(0.3, 0.4)] {
            assert!((p.grad(&y) - fd_grad(&p, &y, 1e-7)).norm() < 1e-6);
        }
        assert_eq!(p.eval(&point2(0.3, 0.0)), 1.0);
        assert_eq!(p.eval(&point2(0.1, 0.0)), 0.0);
        assert_eq!(p.eval(&point2(0.1875, 0.375)), 0.5 * 0.5);
    }

    #[test]
    fn vanishes_outside_support() {
        let funcs = [
            TestFunction::hat([0.1, 0.2], 0.5),
            TestFunction::bump([0.0, 0.3], 0.25),
            TestFunction::Plateau { delta: 0.0625 },
            TestFunction::Product {
                factors: vec![TestFunction::constant(3.0), TestFunction::hat([0.0, 0.0], 0.3)],
            },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for f in &funcs {
            let (c, r) = f.support().unwrap();
            for _ in 0..1000 {
                let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let s = r * rng.gen_range(1.0..3.0);
                let y = c + point2(s * t.cos(), s * t.sin());
                assert_eq!(f.eval(&y), 0.0);
            }
        }
    }

    #[test]
    fn lipschitz_bounds_hold_on_samples() {
        let funcs = [
            TestFunction::bump([0.0, 0.0], 0.5),
            TestFunction::Plateau { delta: 0.1 },
            TestFunction::Product {
                factors: vec![TestFunction::hat([0.0, 0.0], 0.8), TestFunction::bump([0.2, 0.0], 0.6)],
            },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for f in &funcs {
            let l = f.lipschitz_bound();
            for _ in 0..2000 {
                let a = point2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let b = a + point2(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05));
                assert!((f.eval(&a) - f.eval(&b)).abs() <= l * (a - b).norm() + 1e-12);
            }
        }
    }

    #[test]
    fn smoothness_tags_and_validation() {
        assert_eq!(TestFunction::bump([0.0, 0.0], 1.0).smoothness(), Smoothness::Cinf);
        let prod = TestFunction::Product {
            factors: vec![TestFunction::bump([0.0, 0.0], 1.0), TestFunction::hat([0.0, 0.0], 1.0)],
        };
        assert_eq!(prod.smoothness(), Smoothness::Lipschitz);
        assert!(TestFunction::Plateau { delta: 0.3 }.validate().is_err());
        assert!(TestFunction::hat([0.0, 0.0], -1.0).validate().is_err());
        let parsed: TestFunction = toml::from_str("kind = \"hat\"\ncenter = [0.0, 0.5]\nradius = 0.25").unwrap();
        assert_eq!(parsed, TestFunction::hat([0.0, 0.5], 0.25));
    }
}
