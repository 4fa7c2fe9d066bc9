//! Exchange between the particle object and the lattice wind: particles
//! become a solid mask for the lattice, lattice velocities become drag
//! forces on the MPM grid and guide directions for reconstruction.

use nalgebra::Vector3;

use crate::field::NodalField;
use crate::grid::GridDims;
use crate::lbm::LbmField;
use crate::mpm::ParticleSet;
use crate::scene::{FluidParams, Scene};

/// Speeds below this (m/s) have no defined direction.
pub const SPEED_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolidMask {
    pub dims: GridDims,
    pub occupied: Vec<bool>,
}

impl SolidMask {
    pub fn empty(dims: GridDims) -> Self {
        Self { dims, occupied: vec![false; dims.len()] }
    }

    pub fn count(&self) -> usize {
        self.occupied.iter().filter(|o| **o).count()
    }

    /// Fluid nodes sharing a face with an occupied node.
    pub fn surface_shell(&self) -> Vec<bool> {
        let dims = self.dims;
        (0..dims.len())
            .map(|n| {
                if self.occupied[n] {
                    return false;
                }
                let c = dims.coords(n);
                (0..3).any(|d| {
                    [-1i64, 1].into_iter().any(|s| {
                        let mut nb = [c[0] as i64, c[1] as i64, c[2] as i64];
                        nb[d] += s;
                        dims.checked_index(nb).is_some_and(|j| self.occupied[j])
                    })
                })
            })
            .collect()
    }
}

/// Node `i` is occupied iff some particle has `0 <= x_p - x_i < dx` on every
/// axis. When rounding lets two nodes satisfy this, the particle goes to the
/// upper one. Particles outside the node range are ignored.
pub fn voxelize(particles: &ParticleSet, scene: &Scene) -> SolidMask {
    let dims = scene.dims;
    let mut mask = SolidMask::empty(dims);
    for x in particles.x.iter().filter(|x| x.iter().all(|c| c.is_finite())) {
        let mut cell = [0i64; 3];
        for d in 0..3 {
            // the last node at or below the particle; stepping fixes floors
            // that round across an integer
            let node = |i: i64| scene.domain_min[d] + i as f64 * scene.dx;
            let mut i = ((x[d] - scene.domain_min[d]) / scene.dx).floor() as i64;
            while node(i) > x[d] {
                i -= 1;
            }
            while node(i + 1) <= x[d] {
                i += 1;
            }
            cell[d] = i;
        }
        if let Some(idx) = dims.checked_index(cell) {
            mask.occupied[idx] = true;
        }
    }
    mask
}

/// Drag `F = 1/2 rho_w C_D A_ref |v|^2 v/|v|` on every fluid node adjacent to
/// the solid, from the local wind velocity `v` in m/s.
pub fn drag_force(u_w: &[Vector3<f64>], fluid: &FluidParams, mask: &SolidMask) -> NodalField {
    let shell = mask.surface_shell();
    let k = 0.5 * fluid.rho_w * fluid.c_d * fluid.drag_area;
    NodalField {
        dims: mask.dims,
        values: u_w
            .iter()
            .zip(&shell)
            .map(|(v, on)| {
                let speed = v.norm();
                if *on && speed >= SPEED_EPSILON {
                    v * (k * speed)
                } else {
                    Vector3::zeros()
                }
            })
            .collect(),
    }
}

/// Lattice velocities converted to m/s. Solid nodes report zero.
pub fn wind_velocity(field: &LbmField, scene: &Scene) -> Vec<Vector3<f64>> {
    (0..field.len())
        .map(|n| if field.solid[n] { Vector3::zeros() } else { scene.velocity_from_lattice(field.u[n]) })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuideField {
    pub dims: GridDims,
    /// Unit wind direction, `None` where the air is calm.
    pub dir: Vec<Option<Vector3<f64>>>,
    /// Wind speed in m/s.
    pub speed: Vec<f64>,
}

impl GuideField {
    pub fn from_velocity(dims: GridDims, u: &[Vector3<f64>]) -> Self {
        let speed: Vec<f64> = u.iter().map(|v| v.norm()).collect();
        let dir = u.iter().zip(&speed).map(|(v, s)| (*s >= SPEED_EPSILON).then(|| v / *s)).collect();
        Self { dims, dir, speed }
    }

    /// The same direction at every node.
    pub fn uniform(dims: GridDims, d: Vector3<f64>) -> Self {
        Self::from_velocity(dims, &vec![d; dims.len()])
    }

    pub fn defined_count(&self) -> usize {
        self.dir.iter().filter(|d| d.is_some()).count()
    }
}

pub fn guide_from_field(field: &LbmField, scene: &Scene) -> GuideField {
    GuideField::from_velocity(field.dims, &wind_velocity(field, scene))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::SceneBuilder;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scene() -> Scene {
        SceneBuilder::cube(1.0, 8).build().unwrap()
    }

    fn one(x: Vector3<f64>) -> ParticleSet {
        let mut p = ParticleSet::new();
        p.push(x, 1.0, 1.0, 0, 0);
        p
    }

    #[test]
    fn voxelize_examples() {
        let sc = scene();
        let h = 0.5 * sc.dx;
        let m = voxelize(&one(Vector3::new(h, h, h)), &sc);
        assert_eq!(m.count(), 1);
        assert!(m.occupied[0]);

        let x = sc.node_position([3, 5, 2]);
        let m = voxelize(&one(x), &sc);
        assert_eq!(m.count(), 1);
        assert!(m.occupied[sc.dims.index(3, 5, 2)]);

        assert_eq!(voxelize(&ParticleSet::new(), &sc).count(), 0);
    }

    #[test]
    fn voxelize_inequality_on_awkward_spacing() {
        let sc = SceneBuilder::cube(0.3, 7).build().unwrap();
        for i in 0..7 {
            let x = sc.node_position([i, i, i]);
            let m = voxelize(&one(x), &sc);
            assert!(m.occupied[sc.dims.index(i, i, i)], "node {i}");
            if i > 0 {
                let below = Vector3::from_fn(|d, _| f64::from_bits(x[d].to_bits() - 1));
                assert!(voxelize(&one(below), &sc).occupied[sc.dims.index(i - 1, i - 1, i - 1)]);
            }
        }
    }

    #[test]
    fn voxelize_is_translation_consistent() {
        let sc = scene();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut set = ParticleSet::new();
        for _ in 0..30 {
            set.push(Vector3::from_fn(|_, _| rng.gen_range(0.1..0.6)), 1.0, 1.0, 0, 0);
        }
        let a = voxelize(&set, &sc);
        let mut shifted = set.clone();
        shifted.translate(Vector3::new(0.0, sc.dx, 0.0));
        let b = voxelize(&shifted, &sc);
        for n in 0..sc.dims.len() {
            let [x, y, z] = sc.dims.coords(n);
            if y + 1 < sc.dims.ny {
                assert_eq!(a.occupied[n], b.occupied[sc.dims.index(x, y + 1, z)]);
            }
        }
    }

    #[test]
    fn drag_examples() {
        let sc = scene();
        let mut fluid = sc.fluid;
        fluid.rho_w = 1.2;
        fluid.c_d = 1.0;
        fluid.drag_area = 1.0;
        let mut mask = SolidMask::empty(sc.dims);
        mask.occupied[sc.dims.index(4, 4, 4)] = true;
        let node = sc.dims.index(3, 4, 4);
        let mut u = vec![Vector3::zeros(); sc.dims.len()];
        u[node] = Vector3::new(2.0, 0.0, 0.0);
        let f = drag_force(&u, &fluid, &mask);
        assert!((f.values[node] - Vector3::new(2.4, 0.0, 0.0)).norm() < 1e-15);
        assert_eq!(f.values.iter().filter(|v| v.norm() > 0.0).count(), 1);

        let zero = drag_force(&vec![Vector3::zeros(); sc.dims.len()], &fluid, &mask);
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn drag_is_parallel_and_quadratic() {
        let sc = scene();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut mask = SolidMask::empty(sc.dims);
        for n in 0..sc.dims.len() {
            mask.occupied[n] = rng.gen_bool(0.3);
        }
        let u: Vec<Vector3<f64>> = (0..sc.dims.len()).map(|_| Vector3::from_fn(|_, _| rng.gen_range(-3.0..3.0))).collect();
        let f = drag_force(&u, &sc.fluid, &mask);
        let u2: Vec<Vector3<f64>> = u.iter().map(|v| v * 2.0).collect();
        let f2 = drag_force(&u2, &sc.fluid, &mask);
        for n in 0..u.len() {
            let (a, v) = (f.values[n], u[n]);
            if a.norm() > 0.0 {
                assert!((a.dot(&v) - a.norm() * v.norm()).abs() <= 1e-12 * a.norm() * v.norm());
                assert!((f2.values[n].norm() / a.norm() - 4.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn guide_directions() {
        let dims = GridDims::cubic(3);
        let g = GuideField::uniform(dims, Vector3::new(1.0, 0.0, 0.0));
        assert!(g.dir.iter().all(|d| *d == Some(Vector3::new(1.0, 0.0, 0.0))));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut u: Vec<Vector3<f64>> = (0..dims.len()).map(|_| Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0))).collect();
        u[4] = Vector3::zeros();
        let a = GuideField::from_velocity(dims, &u);
        assert_eq!(a.dir[4], None);
        for d in a.dir.iter().flatten() {
            assert!((d.norm() - 1.0).abs() < 1e-9);
        }
        let scaled: Vec<Vector3<f64>> = u.iter().map(|v| v * 7.5).collect();
        let b = GuideField::from_velocity(dims, &scaled);
        for (x, y) in a.dir.iter().zip(&b.dir) {
            match (x, y) {
                (Some(x), Some(y)) => assert!((x - y).norm() < 1e-15),
                (None, None) => {}
                _ => panic!("null pattern changed under scaling"),
            }
        }
    }
}
