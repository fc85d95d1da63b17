//! Planar segment/polygon primitives shared by the exact and sampled backends.

use super::Point;

/// Closest point to `x` on the segment `[a, b]` (2D, z ignored).
pub fn closest_on_segment(x: &Point, a: &Point, b: &Point) -> Point {
    let ab = b - a;
    let len2 = ab.x * ab.x + ab.y * ab.y;
    if len2 == 0.0 {
        return *a;
    }
    let t = (((x.x - a.x) * ab.x + (x.y - a.y) * ab.y) / len2).clamp(0.0, 1.0);
    Point::new(a.x + t * ab.x, a.y + t * ab.y, 0.0)
}

pub fn dist2_to_segment(x: &Point, a: &Point, b: &Point) -> f64 {
    let p = closest_on_segment(x, a, b);
    (x.x - p.x).powi(2) + (x.y - p.y).powi(2)
}

/// Twice the signed area (positive for counter-clockwise vertex order).
pub fn signed_area2(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    (0..n)
        .map(|i| {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            a.x * b.y - b.x * a.y
        })
        .sum()
}

/// Even-odd crossing test; points on an edge may land on either side.
pub fn point_in_polygon(x: &Point, vertices: &[Point]) -> bool {
    let n = vertices.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (vi, vj) = (vertices[i], vertices[j]);
        if (vi.y > x.y) != (vj.y > x.y) {
            let xc = vj.x + (x.y - vj.y) * (vi.x - vj.x) / (vi.y - vj.y);
            if x.x < xc {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Nearest point on a closed polygon boundary (or an open polyline when `closed` is false).
pub fn nearest_on_chain(x: &Point, vertices: &[Point], closed: bool) -> Point {
    let n = vertices.len();
    if n == 1 {
        return vertices[0];
    }
    let edges = if closed { n } else { n - 1 };
    let mut best = vertices[0];
    let mut best_d2 = f64::INFINITY;
    for i in 0..edges {
        let p = closest_on_segment(x, &vertices[i], &vertices[(i + 1) % n]);
        let d2 = (x.x - p.x).powi(2) + (x.y - p.y).powi(2);
        if d2 < best_d2 {
            best_d2 = d2;
            best = p;
        }
    }
    best
}

fn is_convex_corner(a: &Point, b: &Point, c: &Point) -> bool {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x) > 0.0
}

fn in_triangle(p: &Point, a: &Point, b: &Point, c: &Point) -> bool {
    let s = |u: &Point, v: &Point| (v.x - u.x) * (p.y - u.y) - (v.y - u.y) * (p.x - u.x);
    s(a, b) >= 0.0 && s(b, c) >= 0.0 && s(c, a) >= 0.0
}

/// Ear-clipping triangulation of a simple polygon. Output triangles are counter-clockwise.
pub fn triangulate(vertices: &[Point]) -> Vec<[Point; 3]> {
    let mut poly: Vec<Point> = vertices.to_vec();
    if signed_area2(&poly) < 0.0 {
        poly.reverse();
    }
    let mut idx: Vec<usize> = (0..poly.len()).collect();
    let mut tris = Vec::with_capacity(poly.len().saturating_sub(2));
    let mut guard = 0;
    while idx.len() > 3 && guard < 10 * poly.len() * poly.len() {
        guard += 1;
        let m = idx.len();
        let mut clipped = false;
        for k in 0..m {
            let (ia, ib, ic) = (idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]);
            let (a, b, c) = (poly[ia], poly[ib], poly[ic]);
            if !is_convex_corner(&a, &b, &c) {
                continue;
            }
            let blocked = idx
                .iter()
                .filter(|&&j| j != ia && j != ib && j != ic)
                .any(|&j| in_triangle(&poly[j], &a, &b, &c));
            if !blocked {
                tris.push([a, b, c]);
                idx.remove(k);
                clipped = true;
                break;
            }
        }
        if !clipped {
            break;
        }
    }
    if idx.len() == 3 {
        tris.push([poly[idx[0]], poly[idx[1]], poly[idx[2]]]);
    }
    tris
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y, 0.0)
    }

    #[test]
    fn l_shape_triangulation_covers_area() {
        let l = vec![p(0., 0.), p(2., 0.), p(2., 1.), p(1., 1.), p(1., 2.), p(0., 2.)];
        let tris = triangulate(&l);
        assert_eq!(tris.len(), 4);
        let area: f64 = tris.iter().map(|t| 0.5 * signed_area2(&t[..])).sum();
        assert!((area - 3.0).abs() < 1e-14);
        assert!(tris.iter().all(|t| signed_area2(&t[..]) > 0.0));
    }

    #[test]
    fn crossing_test() {
        let sq = vec![p(0., 0.), p(1., 0.), p(1., 1.), p(0., 1.)];
        assert!(point_in_polygon(&p(0.5, 0.5), &sq));
        assert!(!point_in_polygon(&p(1.5, 0.5), &sq));
    }
}
