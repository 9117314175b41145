//! Points, balls and uniform Cartesian grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 3];

#[inline]
pub fn distance(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

impl Ball {
    pub fn contains(&self, p: Point) -> bool {
        distance(self.center, p) <= self.radius
    }

    /// Distance from `p` to the closed ball (0 inside).
    pub fn distance_to(&self, p: Point) -> f64 {
        (distance(self.center, p) - self.radius).max(0.0)
    }
}

/// Uniform Cartesian grid. Nodes are stored x-fastest:
/// `index = i + nx * (j + ny * k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid3 {
    pub origin: Point,
    pub spacing: f64,
    pub dims: [usize; 3],
}

impl Grid3 {
    pub fn new(origin: Point, spacing: f64, dims: [usize; 3]) -> Result<Self> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "grid spacing must be positive, got {spacing}"
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!("empty grid dims {dims:?}")));
        }
        Ok(Self {
            origin,
            spacing,
            dims,
        })
    }

    /// Grid covering the box `[lo, hi]` with spacing `h`, rounded so that both
    /// corners are nodes when the extents are multiples of `h`.
    pub fn covering(lo: Point, hi: Point, h: f64) -> Result<Self> {
        let mut dims = [0usize; 3];
        for a in 0..3 {
            let n = ((hi[a] - lo[a]) / h).round();
            if n < 0.0 {
                return Err(Error::InvalidArgument("box with negative extent".into()));
            }
            dims[a] = n as usize + 1;
        }
        Self::new(lo, h, dims)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let r = idx / self.dims[0];
        [i, r % self.dims[1], r / self.dims[1]]
    }

    #[inline]
    pub fn position(&self, i: usize, j: usize, k: usize) -> Point {
        [
            self.origin[0] + i as f64 * self.spacing,
            self.origin[1] + j as f64 * self.spacing,
            self.origin[2] + k as f64 * self.spacing,
        ]
    }

    pub fn node_position(&self, idx: usize) -> Point {
        let [i, j, k] = self.coords(idx);
        self.position(i, j, k)
    }

    pub fn upper_corner(&self) -> Point {
        self.position(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1)
    }

    pub fn contains(&self, p: Point) -> bool {
        let hi = self.upper_corner();
        let eps = 1e-9 * self.spacing;
        (0..3).all(|a| p[a] >= self.origin[a] - eps && p[a] <= hi[a] + eps)
    }

    /// Fractional grid coordinates of `p`.
    pub fn fractional(&self, p: Point) -> [f64; 3] {
        [
            (p[0] - self.origin[0]) / self.spacing,
            (p[1] - self.origin[1]) / self.spacing,
            (p[2] - self.origin[2]) / self.spacing,
        ]
    }

    /// Nearest node index, if `p` is inside the grid.
    pub fn nearest(&self, p: Point) -> Option<usize> {
        if !self.contains(p) {
            return None;
        }
        let f = self.fractional(p);
        let mut c = [0usize; 3];
        for a in 0..3 {
            c[a] = (f[a].round().max(0.0) as usize).min(self.dims[a] - 1);
        }
        Some(self.index(c[0], c[1], c[2]))
    }

    /// Trilinear interpolation stencil of `p`: up to eight (index, weight)
    /// pairs. Points outside the grid are clamped to the boundary.
    pub fn trilinear_stencil(&self, p: Point) -> [(usize, f64); 8] {
        let f = self.fractional(p);
        let mut base = [0usize; 3];
        let mut frac = [0f64; 3];
        for a in 0..3 {
            let n = self.dims[a];
            if n == 1 {
                base[a] = 0;
                frac[a] = 0.0;
                continue;
            }
            let x = f[a].clamp(0.0, (n - 1) as f64);
            let b = (x.floor() as usize).min(n - 2);
            base[a] = b;
            frac[a] = x - b as f64;
        }
        let mut out = [(0usize, 0f64); 8];
        let mut m = 0;
        for dk in 0..2 {
            for dj in 0..2 {
                for di in 0..2 {
                    let w = if di == 1 { frac[0] } else { 1.0 - frac[0] }
                        * if dj == 1 { frac[1] } else { 1.0 - frac[1] }
                        * if dk == 1 { frac[2] } else { 1.0 - frac[2] };
                    let i = (base[0] + di).min(self.dims[0] - 1);
                    let j = (base[1] + dj).min(self.dims[1] - 1);
                    let k = (base[2] + dk).min(self.dims[2] - 1);
                    out[m] = (self.index(i, j, k), w);
                    m += 1;
                }
            }
        }
        out
    }

    pub fn interpolate(&self, values: &[f64], p: Point) -> f64 {
        self.trilinear_stencil(p)
            .iter()
            .map(|&(i, w)| w * values[i])
            .sum()
    }

    /// Indices of the 6-neighbourhood of `idx` that exist in the grid.
    pub fn neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let [i, j, k] = self.coords(idx);
        let c = [i as isize, j as isize, k as isize];
        const OFFS: [[isize; 3]; 6] = [
            [-1, 0, 0],
            [1, 0, 0],
            [0, -1, 0],
            [0, 1, 0],
            [0, 0, -1],
            [0, 0, 1],
        ];
        OFFS.iter().filter_map(move |o| {
            let n = [c[0] + o[0], c[1] + o[1], c[2] + o[2]];
            if (0..3).all(|a| n[a] >= 0 && (n[a] as usize) < self.dims[a]) {
                Some(self.index(n[0] as usize, n[1] as usize, n[2] as usize))
            } else {
                None
            }
        })
    }

    /// True when the node is at least `margin` nodes away from every face.
    pub fn is_interior(&self, idx: usize, margin: usize) -> bool {
        let c = self.coords(idx);
        (0..3).all(|a| c[a] >= margin && c[a] + margin < self.dims[a])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let g = Grid3::new([0.0; 3], 0.5, [3, 4, 5]).unwrap();
        for idx in 0..g.len() {
            let [i, j, k] = g.coords(idx);
            assert_eq!(g.index(i, j, k), idx);
        }
    }

    #[test]
    fn trilinear_reproduces_linear_functions() {
        let g = Grid3::new([-1.0, 0.0, 2.0], 0.25, [9, 9, 9]).unwrap();
        let vals: Vec<f64> = (0..g.len())
            .map(|i| {
                let p = g.node_position(i);
                1.0 + 2.0 * p[0] - p[1] + 0.5 * p[2]
            })
            .collect();
        let p = [-0.33, 1.17, 2.9];
        let expect = 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[2];
        assert!((g.interpolate(&vals, p) - expect).abs() < 1e-12);
    }

    #[test]
    fn covering_grid_hits_both_corners() {
        let g = Grid3::covering([0.0; 3], [1.0, 1.0, 0.5], 0.125).unwrap();
        assert_eq!(g.dims, [9, 9, 5]);
        let hi = g.upper_corner();
        assert!((hi[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_spacing() {
        assert!(Grid3::new([0.0; 3], 0.0, [2, 2, 2]).is_err());
        assert!(Grid3::new([0.0; 3], 1.0, [2, 0, 2]).is_err());
    }
}
