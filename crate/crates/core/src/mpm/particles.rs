use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::scene::Scene;

/// Particle participates in the observation loss.
pub const FLAG_MARKER: u32 = 1;
/// Particle was added by interior densification.
pub const FLAG_INTERNAL: u32 = 2;

/// Lagrangian object state, stored as parallel arrays.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParticleSet {
    pub x: Vec<Vector3<f64>>,
    pub v: Vec<Vector3<f64>>,
    pub mass: Vec<f64>,
    /// Rest volume.
    pub volume0: Vec<f64>,
    /// Affine velocity.
    pub c: Vec<Matrix3<f64>>,
    /// Deformation gradient.
    pub f: Vec<Matrix3<f64>>,
    pub material_id: Vec<u32>,
    pub flags: Vec<u32>,
}

impl ParticleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Add a particle at rest with an undeformed state.
    pub fn push(&mut self, x: Vector3<f64>, mass: f64, volume0: f64, material_id: u32, flags: u32) {
        self.x.push(x);
        self.v.push(Vector3::zeros());
        self.mass.push(mass);
        self.volume0.push(volume0);
        self.c.push(Matrix3::zeros());
        self.f.push(Matrix3::identity());
        self.material_id.push(material_id);
        self.flags.push(flags);
    }

    /// Regular lattice of particles filling the box `[lo, hi)` with the
    /// given spacing, at rest, every particle flagged as a marker.
    pub fn block(scene: &Scene, lo: Vector3<f64>, hi: Vector3<f64>, spacing: f64, material_id: u32) -> Result<Self> {
        let mat = scene
            .material(material_id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown material id {material_id}")))?;
        if !(spacing > 0.0) {
            return Err(Error::InvalidArgument(format!("particle spacing must be positive, got {spacing}")));
        }
        let counts: Vec<usize> = (0..3).map(|d| (((hi[d] - lo[d]) / spacing) - 1e-9).ceil().max(0.0) as usize).collect();
        let vol = spacing.powi(3);
        let mut set = Self::new();
        for k in 0..counts[2] {
            for j in 0..counts[1] {
                for i in 0..counts[0] {
                    let x = lo + Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * spacing;
                    set.push(x, mat.density * vol, vol, material_id, FLAG_MARKER);
                }
            }
        }
        Ok(set)
    }

    pub fn is_marker(&self, p: usize) -> bool {
        self.flags[p] & FLAG_MARKER != 0
    }

    /// Indices of marker particles in storage order.
    pub fn marker_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&p| self.is_marker(p)).collect()
    }

    pub fn positions_of(&self, indices: &[usize]) -> Vec<Vector3<f64>> {
        indices.iter().map(|&p| self.x[p]).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn momentum(&self) -> Vector3<f64> {
        self.v.iter().zip(&self.mass).map(|(v, m)| v * *m).sum()
    }

    /// Mass-weighted centroid.
    pub fn centroid(&self) -> Vector3<f64> {
        let m = self.total_mass();
        self.x.iter().zip(&self.mass).map(|(x, mp)| x * *mp).sum::<Vector3<f64>>() / m
    }

    pub fn translate(&mut self, offset: Vector3<f64>) {
        for x in &mut self.x {
            *x += offset;
        }
    }

    /// Keep only the particles for which `keep` returns true.
    pub fn retain(&mut self, mut keep: impl FnMut(usize) -> bool) {
        let idx: Vec<usize> = (0..self.len()).filter(|&p| keep(p)).collect();
        macro_rules! pick {
            ($($field:ident),*) => { $( self.$field = idx.iter().map(|&p| self.$field[p].clone()).collect(); )* };
        }
        pick!(x, v, mass, volume0, c, f, material_id, flags);
    }

    pub fn check_consistent(&self) -> Result<()> {
        let n = self.x.len();
        let lens = [
            self.v.len(),
            self.mass.len(),
            self.volume0.len(),
            self.c.len(),
            self.f.len(),
            self.material_id.len(),
            self.flags.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::Shape(format!("particle arrays have inconsistent lengths ({n} positions, {lens:?})")));
        }
        Ok(())
    }
}
