//! Regular sampling lattices and sampled scalar fields.

use rayon::prelude::*;

use super::{Aabb, Point};

/// Fraction of a cell by which lattices are shifted off the bounding box corner, so that
/// axis-aligned level sets at "round" offsets never fall exactly on grid lines.
const LATTICE_SHIFT: [f64; 3] = [0.381_966_011_250_105, 0.273_457_981_230_512, 0.183_215_712_114_387];

/// A uniform lattice with `counts[i]` nodes along axis `i` (1 node along unused axes).
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    pub dim: usize,
    pub origin: Point,
    pub spacing: f64,
    pub counts: [usize; 3],
}

impl Lattice {
    /// Lattice covering `bbox` with cell size at most `spacing`, shifted off the box corner.
    pub fn covering(bbox: &Aabb, dim: usize, spacing: f64) -> Self {
        let mut counts = [1usize; 3];
        let mut origin = bbox.min;
        for a in 0..dim {
            let len = bbox.max[a] - bbox.min[a];
            origin[a] = bbox.min[a] - LATTICE_SHIFT[a] * spacing;
            counts[a] = ((len + spacing) / spacing).ceil() as usize + 2;
        }
        for a in dim..3 {
            origin[a] = 0.0;
        }
        Lattice {
            dim,
            origin,
            spacing,
            counts,
        }
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.counts[1] + j) * self.counts[0] + i
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.counts[0];
        let j = (idx / self.counts[0]) % self.counts[1];
        let k = idx / (self.counts[0] * self.counts[1]);
        [i, j, k]
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize, k: usize) -> Point {
        let mut p = self.origin;
        p[0] += i as f64 * self.spacing;
        if self.dim > 1 {
            p[1] += j as f64 * self.spacing;
        }
        if self.dim > 2 {
            p[2] += k as f64 * self.spacing;
        }
        p
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Number of cells along each axis (0 cells along unused axes is reported as 1).
    pub fn cell_counts(&self) -> [usize; 3] {
        let mut c = [1usize; 3];
        for a in 0..self.dim {
            c[a] = self.counts[a] - 1;
        }
        c
    }

    /// Evaluates `f` at every node; the result is index-ordered regardless of thread count.
    pub fn sample<F>(&self, f: F) -> SampledField
    where
        F: Fn(&Point) -> f64 + Sync,
    {
        let values: Vec<f64> = (0..self.len())
            .into_par_iter()
            .map(|idx| {
                let [i, j, k] = self.unravel(idx);
                f(&self.node(i, j, k))
            })
            .collect();
        SampledField {
            lattice: self.clone(),
            values,
        }
    }
}

/// Scalar values on the nodes of a [`Lattice`].
#[derive(Clone, Debug)]
pub struct SampledField {
    pub lattice: Lattice,
    pub values: Vec<f64>,
}

impl SampledField {
    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.lattice.index(i, j, k)]
    }

    /// Multilinear interpolation; points outside the lattice are clamped to it.
    pub fn interpolate(&self, x: &Point) -> f64 {
        let l = &self.lattice;
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..l.dim {
            let s = ((x[a] - l.origin[a]) / l.spacing).clamp(0.0, (l.counts[a] - 1) as f64);
            let b = (s.floor() as usize).min(l.counts[a] - 2);
            base[a] = b;
            frac[a] = s - b as f64;
        }
        let corners = 1usize << l.dim;
        let mut acc = 0.0;
        for c in 0..corners {
            let mut w = 1.0;
            let mut ix = base;
            for a in 0..l.dim {
                if c >> a & 1 == 1 {
                    ix[a] += 1;
                    w *= frac[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            acc += w * self.at(ix[0], ix[1], ix[2]);
        }
        acc
    }
}
