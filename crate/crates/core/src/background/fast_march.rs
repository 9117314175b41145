//! First-order fast marching for `c0^2 |grad zeta|^2 = 1`.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::geometry::{distance, Grid3, Point};

use super::SpeedField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastMarchOptions {
    /// Nodes closer to the source than this many grid spacings are
    /// initialized with the straight-ray travel time before marching.
    pub init_radius: f64,
    /// Physical lower bound on the initialization radius. Keeping it fixed
    /// under refinement removes the logarithmic error growth of a point
    /// source and restores first-order convergence.
    pub init_length: f64,
}

impl Default for FastMarchOptions {
    fn default() -> Self {
        Self {
            init_radius: 2.0,
            init_length: 0.125,
        }
    }
}

/// Travel times from `source` to every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct TravelTimeField {
    pub source: Point,
    pub grid: Grid3,
    pub values: Vec<f64>,
}

impl TravelTimeField {
    pub fn value_at(&self, p: Point) -> f64 {
        self.grid.interpolate(&self.values, p)
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        // ties broken by node index for a deterministic accept order
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    Far,
    Trial,
    Known,
}

pub fn fast_march(speed: &SpeedField, source: Point) -> Result<TravelTimeField> {
    fast_march_with(speed, source, FastMarchOptions::default())
}

pub fn fast_march_with(
    speed: &SpeedField,
    source: Point,
    opts: FastMarchOptions,
) -> Result<TravelTimeField> {
    let grid = *speed.grid();
    if !grid.contains(source) {
        return Err(Error::OutsideGrid(source));
    }
    if let Some((node, &value)) = speed
        .values()
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > 0.0))
    {
        return Err(Error::NonPositiveSpeed { node, value });
    }
    let h = grid.spacing;
    let n = grid.len();
    let mut zeta = vec![f64::INFINITY; n];
    let mut state = vec![State::Far; n];

    // Straight-ray initialization: Simpson average of the slowness along the
    // segment, second-order accurate near the source.
    let c_src = speed.value_at(source);
    let r_init = (opts.init_radius.max(1.0) * h).max(opts.init_length);
    let f = grid.fractional(source);
    let reach = (r_init / h).ceil() as isize + 1;
    let mut seeded = 0usize;
    for dk in -reach..=reach {
        for dj in -reach..=reach {
            for di in -reach..=reach {
                let c = [
                    f[0].round() as isize + di,
                    f[1].round() as isize + dj,
                    f[2].round() as isize + dk,
                ];
                if (0..3).any(|a| c[a] < 0 || c[a] as usize >= grid.dims[a]) {
                    continue;
                }
                let idx = grid.index(c[0] as usize, c[1] as usize, c[2] as usize);
                let p = grid.node_position(idx);
                let d = distance(p, source);
                if d > r_init + 1e-12 * h {
                    continue;
                }
                let mid = [
                    0.5 * (p[0] + source[0]),
                    0.5 * (p[1] + source[1]),
                    0.5 * (p[2] + source[2]),
                ];
                let slow = (1.0 / c_src + 4.0 / speed.value_at(mid) + 1.0 / speed.values()[idx]) / 6.0;
                zeta[idx] = d * slow;
                state[idx] = State::Known;
                seeded += 1;
            }
        }
    }
    debug_assert!(seeded > 0);

    march(&grid, speed, &mut zeta, &mut state);

    Ok(TravelTimeField {
        source,
        grid,
        values: zeta,
    })
}


/// Fast marching from prescribed values at `seeds` (node index, travel time).
/// Seed nodes are frozen; every other node is marched outward from them.
pub fn fast_march_seeded(speed: &SpeedField, seeds: &[(usize, f64)]) -> Result<Vec<f64>> {
    let grid = *speed.grid();
    if let Some((node, &value)) = speed
        .values()
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > 0.0))
    {
        return Err(Error::NonPositiveSpeed { node, value });
    }
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("fast marching needs at least one seed".into()));
    }
    let n = grid.len();
    let mut zeta = vec![f64::INFINITY; n];
    let mut state = vec![State::Far; n];
    for &(idx, value) in seeds {
        if idx >= n {
            return Err(Error::InvalidArgument(format!("seed node {idx} outside the grid")));
        }
        zeta[idx] = value;
        state[idx] = State::Known;
    }
    march(&grid, speed, &mut zeta, &mut state);
    Ok(zeta)
}

fn march(grid: &Grid3, speed: &SpeedField, zeta: &mut [f64], state: &mut [State]) {
    let h = grid.spacing;
    let n = grid.len();
    let mut heap: BinaryHeap<Reverse<Key>> = BinaryHeap::new();
    for idx in 0..n {
        if state[idx] != State::Known {
            continue;
        }
        for nb in grid.neighbors(idx) {
            if state[nb] == State::Far || state[nb] == State::Trial {
                let u = local_update(grid, zeta, state, nb, h / speed.values()[nb]);
                if u < zeta[nb] {
                    zeta[nb] = u;
                    state[nb] = State::Trial;
                    heap.push(Reverse(Key(u, nb)));
                }
            }
        }
    }

    while let Some(Reverse(Key(u, idx))) = heap.pop() {
        if state[idx] == State::Known || u > zeta[idx] {
            continue;
        }
        state[idx] = State::Known;
        for nb in grid.neighbors(idx) {
            if state[nb] == State::Known {
                continue;
            }
            let cand = local_update(grid, zeta, state, nb, h / speed.values()[nb]);
            if cand < zeta[nb] {
                zeta[nb] = cand;
                state[nb] = State::Trial;
                heap.push(Reverse(Key(cand, nb)));
            }
        }
    }

}

/// Upwind quadratic update at `idx` from its known neighbours; `hs` is the
/// grid spacing times the local slowness.
fn local_update(grid: &Grid3, zeta: &[f64], state: &[State], idx: usize, hs: f64) -> f64 {
    let c = grid.coords(idx);
    let mut a = [f64::INFINITY; 3];
    for axis in 0..3 {
        for step in [-1isize, 1] {
            let q = c[axis] as isize + step;
            if q < 0 || q as usize >= grid.dims[axis] {
                continue;
            }
            let mut nc = c;
            nc[axis] = q as usize;
            let nb = grid.index(nc[0], nc[1], nc[2]);
            if state[nb] == State::Known {
                a[axis] = a[axis].min(zeta[nb]);
            }
        }
    }
    a.sort_by(|x, y| x.total_cmp(y));
    let mut u = a[0] + hs;
    if u > a[1] {
        let d = 2.0 * hs * hs - (a[0] - a[1]).powi(2);
        u = 0.5 * (a[0] + a[1] + d.max(0.0).sqrt());
        if u > a[2] {
            let s = a[0] + a[1] + a[2];
            let q = a[0] * a[0] + a[1] * a[1] + a[2] * a[2];
            let disc = s * s - 3.0 * (q - hs * hs);
            u = (s + disc.max(0.0).sqrt()) / 3.0;
        }
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::travel_time_constant;

    #[test]
    fn source_outside_grid_is_rejected() {
        let g = Grid3::new([0.0; 3], 0.1, [5, 5, 5]).unwrap();
        let c = SpeedField::constant(g, 1.0).unwrap();
        assert!(matches!(
            fast_march(&c, [1.0, 0.0, 0.0]),
            Err(Error::OutsideGrid(_))
        ));
    }

    #[test]
    fn zero_at_source_and_nonnegative() {
        let g = Grid3::new([0.0; 3], 0.1, [11, 11, 11]).unwrap();
        let c = SpeedField::constant(g, 1.0).unwrap();
        let t = fast_march(&c, [0.5, 0.5, 0.5]).unwrap();
        let src = g.nearest([0.5, 0.5, 0.5]).unwrap();
        assert_eq!(t.values[src], 0.0);
        assert!(t.values.iter().all(|v| *v >= 0.0 && v.is_finite()));
    }

    #[test]
    fn axis_aligned_distances_are_exact() {
        let g = Grid3::new([0.0; 3], 0.1, [21, 3, 3]).unwrap();
        let c = SpeedField::constant(g, 2.0).unwrap();
        let t = fast_march(&c, [0.0, 0.1, 0.1]).unwrap();
        for i in 0..21 {
            let idx = g.index(i, 1, 1);
            let exact = travel_time_constant(g.node_position(idx), [0.0, 0.1, 0.1], 2.0);
            assert!((t.values[idx] - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_for_constant_speed() {
        let g = Grid3::new([0.0; 3], 1.0 / 16.0, [17, 17, 17]).unwrap();
        let c = SpeedField::constant(g, 1.0).unwrap();
        let x = [0.0, 0.25, 0.5];
        let z = [0.75, 0.5, 0.625];
        let tx = fast_march(&c, x).unwrap();
        let tz = fast_march(&c, z).unwrap();
        assert!((tx.value_at(z) - tz.value_at(x)).abs() <= 2.0 * g.spacing);
    }
}
