//! Distance to boundaries known only through samples: a bucketed nearest-segment search
//! (exact with respect to the sampled polyline) and a fast-marching grid for large samples.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::grid::{Lattice, SampledField};
use super::polygon::closest_on_segment;
use super::{Aabb, Point};

/// Sample counts above this switch the distance backend to fast marching.
pub const BRUTE_FORCE_LIMIT: usize = 100_000;

pub type Segment = (Point, Point);

/// Uniform bucket index over a set of planar segments.
#[derive(Debug)]
pub struct SegmentIndex {
    segments: Vec<Segment>,
    min: [f64; 2],
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

impl SegmentIndex {
    pub fn new(segments: Vec<Segment>) -> Self {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for (a, b) in &segments {
            for p in [a, b] {
                min[0] = min[0].min(p.x);
                min[1] = min[1].min(p.y);
                max[0] = max[0].max(p.x);
                max[1] = max[1].max(p.y);
            }
        }
        if segments.is_empty() {
            min = [0.0; 2];
            max = [1.0; 2];
        }
        let w = (max[0] - min[0]).max(1e-12);
        let h = (max[1] - min[1]).max(1e-12);
        let target = (segments.len() as f64).sqrt().max(1.0);
        let cell = (w.max(h) / target).max(1e-12);
        let nx = ((w / cell).ceil() as usize).max(1);
        let ny = ((h / cell).ceil() as usize).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        for (s, (a, b)) in segments.iter().enumerate() {
            let (i0, j0) = Self::cell_of(min, cell, nx, ny, a.x.min(b.x), a.y.min(b.y));
            let (i1, j1) = Self::cell_of(min, cell, nx, ny, a.x.max(b.x), a.y.max(b.y));
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(s as u32);
                }
            }
        }
        SegmentIndex {
            segments,
            min,
            cell,
            nx,
            ny,
            buckets,
        }
    }

    fn cell_of(min: [f64; 2], cell: f64, nx: usize, ny: usize, x: f64, y: f64) -> (usize, usize) {
        let i = ((x - min[0]) / cell).floor().clamp(0.0, (nx - 1) as f64) as usize;
        let j = ((y - min[1]) / cell).floor().clamp(0.0, (ny - 1) as f64) as usize;
        (i, j)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Closest point on any indexed segment, or `None` when the index is empty.
    pub fn nearest(&self, x: &Point) -> Option<Point> {
        if self.segments.is_empty() {
            return None;
        }
        let gx = [self.min[0], self.min[0] + self.nx as f64 * self.cell];
        let gy = [self.min[1], self.min[1] + self.ny as f64 * self.cell];
        let q = [x.x.clamp(gx[0], gx[1]), x.y.clamp(gy[0], gy[1])];
        let off2 = (x.x - q[0]).powi(2) + (x.y - q[1]).powi(2);
        let (ci, cj) = Self::cell_of(self.min, self.cell, self.nx, self.ny, q[0], q[1]);
        let mut best = None;
        let mut best_d2 = f64::INFINITY;
        let max_ring = self.nx.max(self.ny);
        for ring in 0..=max_ring {
            let lb = (ring as f64 - 1.0).max(0.0) * self.cell;
            if best_d2 <= off2 + lb * lb {
                break;
            }
            let (i0, i1) = (ci as isize - ring as isize, ci as isize + ring as isize);
            let (j0, j1) = (cj as isize - ring as isize, cj as isize + ring as isize);
            for j in j0..=j1 {
                if j < 0 || j >= self.ny as isize {
                    continue;
                }
                for i in i0..=i1 {
                    if i < 0 || i >= self.nx as isize {
                        continue;
                    }
                    if i != i0 && i != i1 && j != j0 && j != j1 {
                        continue;
                    }
                    for &s in &self.buckets[j as usize * self.nx + i as usize] {
                        let (a, b) = &self.segments[s as usize];
                        let p = closest_on_segment(x, a, b);
                        let d2 = (x.x - p.x).powi(2) + (x.y - p.y).powi(2);
                        if d2 < best_d2 {
                            best_d2 = d2;
                            best = Some(p);
                        }
                    }
                }
            }
        }
        best
    }
}

#[derive(Copy, Clone, PartialEq)]
struct Frontier {
    value: f64,
    idx: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .value
            .partial_cmp(&self.value)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Unsigned distance on a 2D lattice by first-order fast marching, seeded with exact
/// segment distances in a two-cell band around the boundary.
pub fn fast_marching_2d(bbox: &Aabb, spacing: f64, index: &SegmentIndex) -> SampledField {
    let lattice = Lattice::covering(bbox, 2, spacing);
    let (nx, ny) = (lattice.counts[0], lattice.counts[1]);
    let n = nx * ny;
    let mut value = vec![f64::INFINITY; n];
    let mut frozen = vec![false; n];
    let mut heap = BinaryHeap::new();
    let band = 2.0 * spacing;
    for (a, b) in index.segments() {
        let lo = [a.x.min(b.x) - band, a.y.min(b.y) - band];
        let hi = [a.x.max(b.x) + band, a.y.max(b.y) + band];
        let i0 = (((lo[0] - lattice.origin.x) / spacing).floor().max(0.0)) as usize;
        let j0 = (((lo[1] - lattice.origin.y) / spacing).floor().max(0.0)) as usize;
        let i1 = ((((hi[0] - lattice.origin.x) / spacing).ceil()) as usize).min(nx - 1);
        let j1 = ((((hi[1] - lattice.origin.y) / spacing).ceil()) as usize).min(ny - 1);
        for j in j0..=j1 {
            for i in i0..=i1 {
                let p = lattice.node(i, j, 0);
                let q = closest_on_segment(&p, a, b);
                let d = ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt();
                let idx = lattice.index(i, j, 0);
                if d <= band && d < value[idx] {
                    value[idx] = d;
                }
            }
        }
    }
    for (idx, v) in value.iter().enumerate() {
        if v.is_finite() {
            frozen[idx] = true;
            heap.push(Frontier { value: *v, idx });
        }
    }
    // Seeds are final; start the march from all of them.
    let mut accepted = frozen.clone();
    while let Some(Frontier { value: v, idx }) = heap.pop() {
        if v > value[idx] {
            continue;
        }
        accepted[idx] = true;
        let [i, j, _] = lattice.unravel(idx);
        let neighbours = [
            (i.wrapping_sub(1), j),
            (i + 1, j),
            (i, j.wrapping_sub(1)),
            (i, j + 1),
        ];
        for (ni, nj) in neighbours {
            if ni >= nx || nj >= ny {
                continue;
            }
            let nidx = lattice.index(ni, nj, 0);
            if accepted[nidx] || frozen[nidx] {
                continue;
            }
            let pick = |a: usize, b: usize| -> f64 {
                let va = if a < usize::MAX { value[a] } else { f64::INFINITY };
                let vb = if b < usize::MAX { value[b] } else { f64::INFINITY };
                va.min(vb)
            };
            let xm = if ni > 0 { lattice.index(ni - 1, nj, 0) } else { usize::MAX };
            let xp = if ni + 1 < nx { lattice.index(ni + 1, nj, 0) } else { usize::MAX };
            let ym = if nj > 0 { lattice.index(ni, nj - 1, 0) } else { usize::MAX };
            let yp = if nj + 1 < ny { lattice.index(ni, nj + 1, 0) } else { usize::MAX };
            let ux = pick(xm, xp);
            let uy = pick(ym, yp);
            let (a, b) = if ux < uy { (ux, uy) } else { (uy, ux) };
            let cand = if (b - a) >= spacing || !b.is_finite() {
                a + spacing
            } else {
                0.5 * (a + b + (2.0 * spacing * spacing - (a - b) * (a - b)).sqrt())
            };
            if cand < value[nidx] {
                value[nidx] = cand;
                heap.push(Frontier {
                    value: cand,
                    idx: nidx,
                });
            }
        }
    }
    SampledField {
        lattice,
        values: value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(n: usize, r: f64) -> Vec<Segment> {
        (0..n)
            .map(|i| {
                let t0 = std::f64::consts::TAU * i as f64 / n as f64;
                let t1 = std::f64::consts::TAU * (i + 1) as f64 / n as f64;
                (
                    Point::new(r * t0.cos(), r * t0.sin(), 0.0),
                    Point::new(r * t1.cos(), r * t1.sin(), 0.0),
                )
            })
            .collect()
    }

    #[test]
    fn bucket_search_matches_linear_scan() {
        let idx = SegmentIndex::new(circle(500, 1.0));
        for &(x, y) in &[(0.1, 0.2), (3.0, -4.0), (-0.99, 0.0), (0.0, 0.0), (10.0, 10.0)] {
            let p = Point::new(x, y, 0.0);
            let fast = idx.nearest(&p).unwrap();
            let slow = idx
                .segments()
                .iter()
                .map(|(a, b)| closest_on_segment(&p, a, b))
                .min_by(|u, v| (u - p).norm().partial_cmp(&(v - p).norm()).unwrap())
                .unwrap();
            assert!(((fast - p).norm() - (slow - p).norm()).abs() < 1e-14);
        }
    }

    #[test]
    fn fast_marching_approximates_circle_distance() {
        let idx = SegmentIndex::new(circle(2000, 0.5));
        let bbox = Aabb::new(Point::new(-1.0, -1.0, 0.0), Point::new(1.0, 1.0, 0.0));
        let f = fast_marching_2d(&bbox, 0.01, &idx);
        for &(x, y) in &[(0.9, 0.0), (0.0, -0.8), (0.1, 0.1), (0.6, 0.6)] {
            let p = Point::new(x, y, 0.0);
            let exact = ((x * x + y * y).sqrt() - 0.5).abs();
            assert!((f.interpolate(&p) - exact).abs() < 0.02, "{x},{y}");
        }
    }
}
