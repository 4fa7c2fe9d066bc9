//! One MLS-MPM substep: P2G, grid update, G2P and deformation update.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use super::constitutive::neo_hookean_stress;
use super::kernel::{Stencil, APIC_D_INV_SCALE, OFFSETS};
use super::particles::ParticleSet;
use crate::error::{Error, Result};
use crate::field::NodalField;
use crate::grid::GridDims;
use crate::scene::{Scene, WallBc, WindForceMode};

/// Nodes at or below this mass are treated as empty.
pub const MASS_EPSILON: f64 = 1e-10;

/// Width, in nodes, of the band next to each domain face where wall
/// conditions act.
pub const BC_BAND: usize = 2;

/// How the particle-to-grid scatter is evaluated.
///
/// Both modes are deterministic: `Serial` accumulates in particle order,
/// `Parallel` gathers per node over particles binned by cell, so its
/// summation order is independent of the thread count. The two modes agree
/// to rounding but not bitwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    #[default]
    Serial,
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpmGrid {
    pub dims: GridDims,
    pub mass: Vec<f64>,
    pub momentum: Vec<Vector3<f64>>,
    pub velocity: Vec<Vector3<f64>>,
    /// Wind force applied at each node in the last grid update.
    pub force: Vec<Vector3<f64>>,
}

impl MpmGrid {
    pub fn new(dims: GridDims) -> Self {
        let n = dims.len();
        Self {
            dims,
            mass: vec![0.0; n],
            momentum: vec![Vector3::zeros(); n],
            velocity: vec![Vector3::zeros(); n],
            force: vec![Vector3::zeros(); n],
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn total_momentum(&self) -> Vector3<f64> {
        self.momentum.iter().sum()
    }

    /// Momentum carried by the updated velocities.
    pub fn velocity_momentum(&self) -> Vector3<f64> {
        self.velocity.iter().zip(&self.mass).map(|(v, m)| v * *m).sum()
    }

    pub fn is_loaded(&self, node: usize) -> bool {
        self.mass[node] > MASS_EPSILON
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GridUpdateStats {
    pub loaded_nodes: usize,
    /// Loaded nodes whose velocity was modified by a wall condition.
    pub clamped_nodes: usize,
}

/// Per-particle Lamé parameters looked up from the scene materials.
pub fn particle_lame(particles: &ParticleSet, scene: &Scene) -> Result<Vec<(f64, f64)>> {
    particles
        .material_id
        .iter()
        .map(|&id| {
            scene
                .material(id)
                .map(|m| (m.mu, m.lambda))
                .ok_or_else(|| Error::InvalidArgument(format!("particle references unknown material id {id}")))
        })
        .collect()
}

/// Stencils for all particles, checking that every stencil lies inside the grid.
pub fn particle_stencils(particles: &ParticleSet, scene: &Scene) -> Result<Vec<Stencil>> {
    let inv_dx = 1.0 / scene.dx;
    let dims = scene.dims.as_array();
    particles
        .x
        .iter()
        .enumerate()
        .map(|(p, x)| {
            let s = Stencil::new(x, &scene.domain_min, inv_dx);
            let inside = (0..3).all(|d| s.base[d] >= 0 && s.base[d] + 2 < dims[d] as i64);
            if !inside || !x.iter().all(|c| c.is_finite()) {
                return Err(Error::ParticleOutOfDomain { index: p, position: [x[0], x[1], x[2]] });
            }
            Ok(s)
        })
        .collect()
}

/// Affine momentum matrix of a particle: APIC term plus the MLS-fused
/// internal-stress impulse `-dt * 4/dx^2 * V0 * P F^T`.
pub(crate) fn affine_matrix(
    particles: &ParticleSet,
    p: usize,
    lame: (f64, f64),
    dx: f64,
    dt: f64,
) -> Result<Matrix3<f64>> {
    let f = &particles.f[p];
    let stress = neo_hookean_stress(f, lame.0, lame.1).map_err(|e| match e {
        Error::SingularDeformation(det) => Error::Inversion { index: p, det },
        other => other,
    })?;
    let scale = -dt * APIC_D_INV_SCALE / (dx * dx) * particles.volume0[p];
    Ok(stress * f.transpose() * scale + particles.c[p] * particles.mass[p])
}

/// Transfer mass and momentum (with the fused stress impulse) to the grid.
pub fn p2g(particles: &ParticleSet, scene: &Scene, dt: f64) -> Result<MpmGrid> {
    p2g_with(particles, scene, dt, ExecMode::Serial)
}

pub fn p2g_with(particles: &ParticleSet, scene: &Scene, dt: f64, mode: ExecMode) -> Result<MpmGrid> {
    particles.check_consistent()?;
    let stencils = particle_stencils(particles, scene)?;
    let lame = particle_lame(particles, scene)?;
    let dx = scene.dx;
    let affine: Vec<Matrix3<f64>> = (0..particles.len())
        .map(|p| affine_matrix(particles, p, lame[p], dx, dt))
        .collect::<Result<_>>()?;
    let dims = scene.dims;
    let mut grid = MpmGrid::new(dims);
    match mode {
        ExecMode::Serial => {
            for (p, s) in stencils.iter().enumerate() {
                let mv = particles.v[p] * particles.mass[p];
                for o in OFFSETS {
                    let w = s.weight(o);
                    let node = dims.checked_index(s.node(o)).expect("stencil checked");
                    grid.mass[node] += w * particles.mass[p];
                    grid.momentum[node] += (mv + affine[p] * s.dpos(o, dx)) * w;
                }
            }
        }
        ExecMode::Parallel => {
            // Bin particles by base cell, then gather per node.
            let mut bins: Vec<Vec<usize>> = vec![Vec::new(); dims.len()];
            for (p, s) in stencils.iter().enumerate() {
                bins[dims.checked_index(s.base).expect("stencil checked")].push(p);
            }
            let gathered: Vec<(f64, Vector3<f64>)> = (0..dims.len())
                .into_par_iter()
                .map(|node| {
                    let c = dims.coords(node);
                    let mut m = 0.0;
                    let mut mom = Vector3::zeros();
                    for o in OFFSETS {
                        let base = [c[0] as i64 - o[0] as i64, c[1] as i64 - o[1] as i64, c[2] as i64 - o[2] as i64];
                        let Some(b) = dims.checked_index(base) else { continue };
                        for &p in &bins[b] {
                            let s = &stencils[p];
                            let w = s.weight(o);
                            m += w * particles.mass[p];
                            mom += (particles.v[p] * particles.mass[p] + affine[p] * s.dpos(o, dx)) * w;
                        }
                    }
                    (m, mom)
                })
                .collect();
            for (node, (m, mom)) in gathered.into_iter().enumerate() {
                grid.mass[node] = m;
                grid.momentum[node] = mom;
            }
        }
    }
    Ok(grid)
}

/// Wall-condition projection for a node: returns a per-axis keep mask
/// (1 keeps the component, 0 zeroes it) or `None` when no wall acts.
pub(crate) fn wall_mask(scene: &Scene, c: [usize; 3]) -> Option<Vector3<f64>> {
    let dims = scene.dims.as_array();
    let mut keep = Vector3::repeat(1.0);
    let mut any = false;
    for d in 0..3 {
        let faces = [(c[d] < BC_BAND, false), (c[d] + BC_BAND >= dims[d], true)];
        for (inside, high) in faces {
            if !inside {
                continue;
            }
            match scene.walls.get(d, high) {
                WallBc::Sticky => {
                    keep = Vector3::zeros();
                    any = true;
                }
                WallBc::Slip => {
                    keep[d] = 0.0;
                    any = true;
                }
                WallBc::Open => {}
            }
        }
    }
    any.then_some(keep)
}

/// Momentum to velocity with wind force, gravity and wall conditions.
pub fn grid_update(grid: &mut MpmGrid, force: &NodalField, scene: &Scene, dt: f64) -> Result<GridUpdateStats> {
    force.check_dims(grid.dims)?;
    let mut stats = GridUpdateStats::default();
    let per_mass = scene.fluid.wind_force == WindForceMode::PerMass;
    for node in 0..grid.dims.len() {
        let m = grid.mass[node];
        if m <= MASS_EPSILON {
            grid.velocity[node] = Vector3::zeros();
            grid.force[node] = Vector3::zeros();
            continue;
        }
        stats.loaded_nodes += 1;
        let f = force.values[node];
        let accel = if per_mass { f } else { f / m };
        let mut v = grid.momentum[node] / m + (accel + scene.gravity) * dt;
        if let Some(keep) = wall_mask(scene, grid.dims.coords(node)) {
            let clamped = v.component_mul(&keep);
            if clamped != v {
                stats.clamped_nodes += 1;
            }
            v = clamped;
        }
        grid.velocity[node] = v;
        grid.force[node] = f;
    }
    Ok(stats)
}

/// Interpolate grid velocities back to particles, rebuild the affine matrix
/// and advect positions.
pub fn g2p(grid: &MpmGrid, particles: &mut ParticleSet, scene: &Scene, dt: f64) -> Result<()> {
    g2p_with(grid, particles, scene, dt, ExecMode::Serial)
}

pub fn g2p_with(grid: &MpmGrid, particles: &mut ParticleSet, scene: &Scene, dt: f64, mode: ExecMode) -> Result<()> {
    let stencils = particle_stencils(particles, scene)?;
    let dx = scene.dx;
    let d_inv = APIC_D_INV_SCALE / (dx * dx);
    let dims = grid.dims;
    let gather = |s: &Stencil| {
        let mut v = Vector3::zeros();
        let mut b = Matrix3::zeros();
        for o in OFFSETS {
            let w = s.weight(o);
            let vi = grid.velocity[dims.checked_index(s.node(o)).expect("stencil checked")];
            v += vi * w;
            b += vi * s.dpos(o, dx).transpose() * w;
        }
        (v, b * d_inv)
    };
    let results: Vec<(Vector3<f64>, Matrix3<f64>)> = match mode {
        ExecMode::Serial => stencils.iter().map(gather).collect(),
        ExecMode::Parallel => stencils.par_iter().map(gather).collect(),
    };
    for (p, (v, c)) in results.into_iter().enumerate() {
        particles.v[p] = v;
        particles.c[p] = c;
        particles.x[p] += v * dt;
    }
    Ok(())
}

/// `F <- (I + dt C) F`, rejecting inverted elements.
pub fn update_deformation(particles: &mut ParticleSet, dt: f64) -> Result<()> {
    for p in 0..particles.len() {
        let f = (Matrix3::identity() + particles.c[p] * dt) * particles.f[p];
        let det = f.determinant();
        if !(det > 0.0) {
            return Err(Error::Inversion { index: p, det });
        }
        particles.f[p] = f;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub grid: GridUpdateStats,
}

/// One substep: p2g, grid update, g2p, deformation update.
pub fn mpm_step(particles: &mut ParticleSet, force: &NodalField, scene: &Scene, dt: f64) -> Result<StepStats> {
    mpm_step_with(particles, force, scene, dt, ExecMode::Serial)
}

pub fn mpm_step_with(
    particles: &mut ParticleSet,
    force: &NodalField,
    scene: &Scene,
    dt: f64,
    mode: ExecMode,
) -> Result<StepStats> {
    let mut grid = p2g_with(particles, scene, dt, mode)?;
    let stats = grid_update(&mut grid, force, scene, dt)?;
    g2p_with(&grid, particles, scene, dt, mode)?;
    update_deformation(particles, dt)?;
    Ok(StepStats { grid: stats })
}
