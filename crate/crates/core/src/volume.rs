//! Densification of a surface point cloud into a volume-filling particle
//! set: voxelize the surface, flood the exterior from the grid boundary,
//! and sample one point per enclosed voxel.

use std::collections::VecDeque;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::GridDims;

/// Default jitter as a fraction of the voxel size.
pub const DEFAULT_JITTER: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Voxel {
    /// Empty, or reachable from the grid boundary after filling.
    Empty,
    Shell,
    Interior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub dims: GridDims,
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
    pub voxels: Vec<Voxel>,
}

impl OccupancyGrid {
    pub fn voxel_size(&self) -> Vector3<f64> {
        let res = self.dims.as_array();
        Vector3::from_fn(|d, _| (self.max[d] - self.min[d]) / res[d] as f64)
    }

    pub fn count(&self, state: Voxel) -> usize {
        self.voxels.iter().filter(|v| **v == state).count()
    }

    pub fn center(&self, c: [usize; 3]) -> Vector3<f64> {
        let size = self.voxel_size();
        Vector3::from_fn(|d, _| self.min[d] + (c[d] as f64 + 0.5) * size[d])
    }

    /// Voxel containing `p`, if inside the bounds. Points on the upper
    /// bound belong to the last voxel.
    pub fn locate(&self, p: &Vector3<f64>) -> Option<[usize; 3]> {
        let res = self.dims.as_array();
        let size = self.voxel_size();
        let mut c = [0usize; 3];
        for d in 0..3 {
            if !(p[d] >= self.min[d] && p[d] <= self.max[d]) {
                return None;
            }
            c[d] = (((p[d] - self.min[d]) / size[d]).floor() as usize).min(res[d] - 1);
        }
        Some(c)
    }
}

/// Mark every voxel holding at least one point as shell. Points outside the
/// bounds are ignored.
pub fn shell_voxelize(points: &[Vector3<f64>], resolution: [usize; 3], min: Vector3<f64>, max: Vector3<f64>) -> Result<OccupancyGrid> {
    if resolution.iter().any(|&r| r < 2) {
        return Err(Error::InvalidArgument(format!("volume resolution must be at least 2 per axis, got {resolution:?}")));
    }
    if (0..3).any(|d| !(max[d] > min[d]) || !min[d].is_finite() || !max[d].is_finite()) {
        return Err(Error::InvalidArgument(format!("empty or invalid bounds {min:?} .. {max:?}")));
    }
    let dims = GridDims::from_array(resolution);
    let mut grid = OccupancyGrid { dims, min, max, voxels: vec![Voxel::Empty; dims.len()] };
    for p in points {
        if let Some([x, y, z]) = grid.locate(p) {
            grid.voxels[dims.index(x, y, z)] = Voxel::Shell;
        }
    }
    Ok(grid)
}

/// Flood the non-shell voxels reachable from the grid boundary through
/// face neighbors; every other non-shell voxel becomes interior. A shell
/// with holes encloses nothing.
pub fn fill_interior(grid: &OccupancyGrid) -> OccupancyGrid {
    let dims = grid.dims;
    let res = dims.as_array();
    let open = |v: Voxel| v != Voxel::Shell;
    let mut outside = vec![false; dims.len()];
    let mut queue = VecDeque::new();
    for c in dims.iter_coords() {
        let on_boundary = (0..3).any(|d| c[d] == 0 || c[d] + 1 == res[d]);
        let i = dims.index(c[0], c[1], c[2]);
        if on_boundary && open(grid.voxels[i]) {
            outside[i] = true;
            queue.push_back(c);
        }
    }
    while let Some(c) = queue.pop_front() {
        for d in 0..3 {
            for s in [-1i64, 1] {
                let mut nb = [c[0] as i64, c[1] as i64, c[2] as i64];
                nb[d] += s;
                if let Some(j) = dims.checked_index(nb) {
                    if !outside[j] && open(grid.voxels[j]) {
                        outside[j] = true;
                        queue.push_back(dims.coords(j));
                    }
                }
            }
        }
    }
    let voxels = grid
        .voxels
        .iter()
        .zip(&outside)
        .map(|(v, out)| match v {
            Voxel::Shell => Voxel::Shell,
            _ if *out => Voxel::Empty,
            _ => Voxel::Interior,
        })
        .collect();
    OccupancyGrid { voxels, ..grid.clone() }
}

/// One point per interior voxel at its center, displaced on each axis by a
/// uniform offset of at most `jitter` voxel sizes. Deterministic in `seed`.
pub fn sample_interior(grid: &OccupancyGrid, jitter: f64, seed: u64) -> Result<Vec<Vector3<f64>>> {
    if !(0.0..0.5).contains(&jitter) {
        return Err(Error::InvalidArgument(format!("jitter must lie in [0, 0.5), got {jitter}")));
    }
    let size = grid.voxel_size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(grid.count(Voxel::Interior));
    for c in grid.dims.iter_coords() {
        if grid.voxels[grid.dims.index(c[0], c[1], c[2])] != Voxel::Interior {
            continue;
        }
        let mut p = grid.center(c);
        if jitter > 0.0 {
            for d in 0..3 {
                p[d] += rng.gen_range(-jitter..=jitter) * size[d];
            }
        }
        out.push(p);
    }
    Ok(out)
}

/// Surface points followed by sampled interior points.
pub fn densify(
    points: &[Vector3<f64>],
    resolution: [usize; 3],
    min: Vector3<f64>,
    max: Vector3<f64>,
    jitter: f64,
    seed: u64,
) -> Result<(Vec<Vector3<f64>>, OccupancyGrid)> {
    let grid = fill_interior(&shell_voxelize(points, resolution, min, max)?);
    let mut out = points.to_vec();
    out.extend(sample_interior(&grid, jitter, seed)?);
    Ok((out, grid))
}

/// Bounding box of `points` grown by `margin` on every side.
pub fn bounds_of(points: &[Vector3<f64>], margin: f64) -> Option<(Vector3<f64>, Vector3<f64>)> {
    let first = points.first()?;
    let (mut lo, mut hi) = (*first, *first);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    Some((lo.add_scalar(-margin), hi.add_scalar(margin)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> (Vector3<f64>, Vector3<f64>) {
        (Vector3::zeros(), Vector3::repeat(1.0))
    }

    /// Points at the centers of the outer layer of voxels of an `n`^3 grid.
    fn cube_shell(n: usize) -> Vec<Vector3<f64>> {
        let h = 1.0 / n as f64;
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if [i, j, k].iter().any(|&c| c == 0 || c == n - 1) {
                        pts.push(Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * h);
                    }
                }
            }
        }
        pts
    }

    /// Dense points on a sphere: a latitude-longitude net fine enough that
    /// consecutive points are much closer than a voxel.
    fn sphere(center: Vector3<f64>, r: f64, step: f64) -> Vec<Vector3<f64>> {
        let rings = (std::f64::consts::PI * r / step).ceil() as usize;
        let mut pts = Vec::new();
        for a in 0..=rings {
            let theta = std::f64::consts::PI * a as f64 / rings as f64;
            let around = ((2.0 * std::f64::consts::PI * r * theta.sin() / step).ceil() as usize).max(1);
            for b in 0..around {
                let phi = 2.0 * std::f64::consts::PI * b as f64 / around as f64;
                pts.push(center + Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()) * r);
            }
        }
        pts
    }

    #[test]
    fn shell_examples() {
        let (lo, hi) = unit();
        let g = shell_voxelize(&[Vector3::repeat(0.3)], [4, 4, 4], lo, hi).unwrap();
        assert_eq!(g.count(Voxel::Shell), 1);
        assert_eq!(g.voxels[g.dims.index(1, 1, 1)], Voxel::Shell);
        let g = shell_voxelize(&[], [4, 4, 4], lo, hi).unwrap();
        assert_eq!(g.count(Voxel::Empty), 64);
        assert_eq!(fill_interior(&g).count(Voxel::Interior), 0);
        assert!(shell_voxelize(&[], [1, 4, 4], lo, hi).is_err());
        let g = shell_voxelize(&[Vector3::repeat(1.0), Vector3::repeat(2.0)], [4, 4, 4], lo, hi).unwrap();
        assert_eq!(g.count(Voxel::Shell), 1);
    }

    #[test]
    fn hollow_cube_encloses_a_thousand_voxels() {
        let (lo, hi) = unit();
        let g = fill_interior(&shell_voxelize(&cube_shell(12), [12, 12, 12], lo, hi).unwrap());
        assert_eq!(g.count(Voxel::Interior), 1000);
        let pts = sample_interior(&g, DEFAULT_JITTER, 3).unwrap();
        assert_eq!(pts.len(), 1000);
    }

    #[test]
    fn holed_shell_encloses_nothing() {
        let (lo, hi) = unit();
        let mut pts = cube_shell(12);
        let h = 1.0 / 12.0;
        let hole = Vector3::new(5.5, 5.5, 0.5) * h;
        pts.retain(|p| (p - hole).norm() > 1e-9);
        let g = fill_interior(&shell_voxelize(&pts, [12, 12, 12], lo, hi).unwrap());
        assert_eq!(g.count(Voxel::Interior), 0);
    }

    #[test]
    fn sphere_interior_matches_geometry() {
        let (lo, hi) = unit();
        let n = 32;
        let (c, r) = (Vector3::repeat(0.5), 0.35);
        let shell = shell_voxelize(&sphere(c, r, 0.25 / n as f64), [n; 3], lo, hi).unwrap();
        let g = fill_interior(&shell);
        let h = 1.0 / n as f64;
        let half_diag = 0.5 * 3f64.sqrt() * h;
        let mut strictly_inside = 0;
        for v in g.dims.iter_coords() {
            let state = g.voxels[g.dims.index(v[0], v[1], v[2])];
            let dist = (g.center(v) - c).norm();
            // a voxel wholly inside the sphere is never reachable from outside
            if dist + half_diag < r && state != Voxel::Shell {
                assert_eq!(state, Voxel::Interior, "{v:?}");
                strictly_inside += 1;
            }
            // a voxel wholly outside the sphere is never enclosed
            if dist - half_diag > r {
                assert_eq!(state, Voxel::Empty, "{v:?}");
            }
        }
        assert!(strictly_inside > 0);
        // every enclosed voxel touches the ball
        for v in g.dims.iter_coords() {
            if g.voxels[g.dims.index(v[0], v[1], v[2])] == Voxel::Interior {
                assert!((g.center(v) - c).norm() - half_diag <= r);
            }
        }
    }

    /// Shell of voxel centers with `|d - r| <= h/2`. A face step moves the
    /// center distance by at most `h`, so no face path crosses the band and
    /// the enclosed voxels are exactly those with `d < r - h/2`.
    #[test]
    fn voxel_band_sphere_encloses_exact_count() {
        let (lo, hi) = unit();
        for (n, r) in [(16, 0.3), (24, 0.41), (32, 0.27)] {
            let h = 1.0 / n as f64;
            let c = Vector3::new(0.5, 0.52, 0.49);
            let dist = |v: [usize; 3]| (Vector3::new(v[0] as f64 + 0.5, v[1] as f64 + 0.5, v[2] as f64 + 0.5) * h - c).norm();
            let dims = GridDims::cubic(n);
            let shell: Vec<_> = dims
                .iter_coords()
                .filter(|v| (dist(*v) - r).abs() <= 0.5 * h)
                .map(|v| Vector3::new(v[0] as f64 + 0.5, v[1] as f64 + 0.5, v[2] as f64 + 0.5) * h)
                .collect();
            let expected = dims.iter_coords().filter(|v| dist(*v) < r - 0.5 * h).count();
            let g = fill_interior(&shell_voxelize(&shell, [n; 3], lo, hi).unwrap());
            assert_eq!(g.count(Voxel::Interior), expected, "n = {n}");
        }
    }

    #[test]
    fn fill_is_idempotent() {
        let (lo, hi) = unit();
        let g = fill_interior(&shell_voxelize(&sphere(Vector3::repeat(0.5), 0.3, 0.01), [16; 3], lo, hi).unwrap());
        assert_eq!(fill_interior(&g), g);
    }

    #[test]
    fn jitter_zero_samples_centers_and_range_is_checked() {
        let (lo, hi) = unit();
        let g = fill_interior(&shell_voxelize(&cube_shell(6), [6; 3], lo, hi).unwrap());
        let pts = sample_interior(&g, 0.0, 1).unwrap();
        let centers: Vec<_> = g
            .dims
            .iter_coords()
            .filter(|v| g.voxels[g.dims.index(v[0], v[1], v[2])] == Voxel::Interior)
            .map(|v| g.center(v))
            .collect();
        assert_eq!(pts, centers);
        assert!(sample_interior(&g, 0.5, 1).is_err());
        assert!(sample_interior(&g, -0.1, 1).is_err());
    }

    proptest! {
        #[test]
        fn samples_stay_in_their_voxel_and_repeat(seed in 0u64..10_000, jitter in 0.0f64..0.4999) {
            let (lo, hi) = unit();
            let g = fill_interior(&shell_voxelize(&cube_shell(6), [6; 3], lo, hi).unwrap());
            let a = sample_interior(&g, jitter, seed).unwrap();
            prop_assert_eq!(&a, &sample_interior(&g, jitter, seed).unwrap());
            for p in &a {
                let v = g.locate(p).unwrap();
                prop_assert_eq!(g.voxels[g.dims.index(v[0], v[1], v[2])], Voxel::Interior);
                prop_assert!((p - g.center(v)).amax() <= jitter / 6.0 + 1e-12);
            }
        }

        #[test]
        fn interior_count_is_rotation_invariant(axis in 0usize..3, quarter in 1usize..4) {
            let (lo, hi) = unit();
            let pts = sphere(Vector3::new(0.45, 0.55, 0.5), 0.3, 0.01);
            let rotated: Vec<_> = pts
                .iter()
                .map(|p| {
                    let mut q = p - Vector3::repeat(0.5);
                    for _ in 0..quarter {
                        let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
                        let (x, y) = (q[a], q[b]);
                        q[a] = -y;
                        q[b] = x;
                    }
                    q + Vector3::repeat(0.5)
                })
                .collect();
            let count = |p: &[Vector3<f64>]| fill_interior(&shell_voxelize(p, [20; 3], lo, hi).unwrap()).count(Voxel::Interior);
            let base = count(&pts) as f64;
            let turned = count(&rotated) as f64;
            // a quarter turn maps voxels onto voxels except for points on faces
            prop_assert!((base - turned).abs() <= 0.02 * base, "{} vs {}", base, turned);
        }
    }
}
