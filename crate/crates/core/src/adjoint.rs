//! Reverse-mode gradients of an MPM substep window with respect to the
//! nodal wind force.
//!
//! The force is held constant over the window. The forward pass records
//! every intermediate particle state and grid; the reverse pass walks the
//! substeps backwards through the deformation update, G2P, the grid update
//! and P2G (including the stress Jacobian).

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::NodalField;
use crate::mpm::constitutive::{neo_hookean_stress, neo_hookean_stress_vjp};
use crate::mpm::kernel::{APIC_D_INV_SCALE, OFFSETS};
use crate::mpm::transfer::{
    affine_matrix, g2p_with, grid_update, p2g_with, particle_lame, particle_stencils, update_deformation, wall_mask,
};
use crate::mpm::{ExecMode, MpmGrid, ParticleSet};
use crate::scene::{Scene, WindForceMode};

/// Per-particle P2G adjoint: position, velocity, affine and deformation parts.
type ParticleAdjoint = (Vector3<f64>, Vector3<f64>, Matrix3<f64>, Matrix3<f64>);

/// Largest grid (node count) accepted by [`finite_difference_grad`].
pub const FD_MAX_NODES: usize = 16 * 16 * 16;

/// Everything the reverse pass needs from one forward window.
#[derive(Debug, Clone)]
pub struct Tape {
    pub dt: f64,
    pub mode: ExecMode,
    pub force: NodalField,
    /// `states[0]` is the window's initial state, `states[k + 1]` the state
    /// after substep `k`.
    pub states: Vec<ParticleSet>,
    /// Grid of each substep after the grid update.
    pub grids: Vec<MpmGrid>,
}

impl Tape {
    pub fn substeps(&self) -> usize {
        self.grids.len()
    }

    pub fn final_state(&self) -> &ParticleSet {
        self.states.last().expect("tape holds the initial state")
    }

    /// Re-run the window from the recorded initial state.
    pub fn replay(&self, scene: &Scene) -> Result<ParticleSet> {
        let (out, _) = forward_record_with(&self.states[0], &self.force, scene, self.substeps(), self.mode)?;
        Ok(out)
    }
}

/// Adjoints of the window inputs.
#[derive(Debug, Clone)]
pub struct Gradients {
    /// `dL/dF_w`, the force gradient.
    pub force: NodalField,
    pub x: Vec<Vector3<f64>>,
    pub v: Vec<Vector3<f64>>,
    pub c: Vec<Matrix3<f64>>,
    pub f: Vec<Matrix3<f64>>,
}

/// Advance `substeps` substeps under a constant force, recording a tape.
pub fn forward_record(
    state: &ParticleSet,
    force: &NodalField,
    scene: &Scene,
    substeps: usize,
) -> Result<(ParticleSet, Tape)> {
    forward_record_with(state, force, scene, substeps, ExecMode::Serial)
}

pub fn forward_record_with(
    state: &ParticleSet,
    force: &NodalField,
    scene: &Scene,
    substeps: usize,
    mode: ExecMode,
) -> Result<(ParticleSet, Tape)> {
    force.check_dims(scene.dims)?;
    let dt = scene.dt();
    let mut states = Vec::with_capacity(substeps + 1);
    let mut grids = Vec::with_capacity(substeps);
    states.push(state.clone());
    let mut current = state.clone();
    for _ in 0..substeps {
        let mut grid = p2g_with(&current, scene, dt, mode)?;
        grid_update(&mut grid, force, scene, dt)?;
        g2p_with(&grid, &mut current, scene, dt, mode)?;
        update_deformation(&mut current, dt)?;
        states.push(current.clone());
        grids.push(grid);
    }
    Ok((current, Tape { dt, mode, force: force.clone(), states, grids }))
}

/// Plain forward window without recording.
pub fn advance(state: &ParticleSet, force: &NodalField, scene: &Scene, substeps: usize) -> Result<ParticleSet> {
    let mut current = state.clone();
    for _ in 0..substeps {
        crate::mpm::mpm_step(&mut current, force, scene, scene.dt())?;
    }
    Ok(current)
}

/// Reverse pass. `x_bar` and `v_bar` are `dL/dx` and `dL/dv` of the final
/// particle state.
pub fn backward(tape: &Tape, scene: &Scene, x_bar: &[Vector3<f64>], v_bar: &[Vector3<f64>]) -> Result<Gradients> {
    let np = tape.states[0].len();
    if x_bar.len() != np || v_bar.len() != np {
        return Err(Error::Shape(format!(
            "adjoint seeds have {} / {} entries for {np} particles",
            x_bar.len(),
            v_bar.len()
        )));
    }
    let dims = scene.dims;
    let dt = tape.dt;
    let dx = scene.dx;
    let inv_dx = 1.0 / dx;
    let k = APIC_D_INV_SCALE / (dx * dx);
    let per_mass = scene.fluid.wind_force == WindForceMode::PerMass;
    let lame = particle_lame(&tape.states[0], scene)?;

    let mut xb = x_bar.to_vec();
    let mut vb = v_bar.to_vec();
    let mut cb = vec![Matrix3::zeros(); np];
    let mut fb = vec![Matrix3::zeros(); np];
    let mut force_grad = NodalField::zeros(dims);

    for step in (0..tape.substeps()).rev() {
        let pre = &tape.states[step];
        let post = &tape.states[step + 1];
        let grid = &tape.grids[step];
        let stencils = particle_stencils(pre, scene)?;

        // F' = (I + dt C') F and x' = x + dt v'
        let mut c_out = vec![Matrix3::zeros(); np];
        let mut v_out = vec![Vector3::zeros(); np];
        for p in 0..np {
            c_out[p] = cb[p] + fb[p] * pre.f[p].transpose() * dt;
            fb[p] = (Matrix3::identity() + post.c[p] * dt).transpose() * fb[p];
            v_out[p] = vb[p] + xb[p] * dt;
        }

        // G2P
        let mut grid_vb = vec![Vector3::zeros(); dims.len()];
        for (p, s) in stencils.iter().enumerate() {
            for o in OFFSETS {
                let i = dims.checked_index(s.node(o)).expect("stencil checked");
                let w = s.weight(o);
                let d = s.dpos(o, dx);
                let vi = grid.velocity[i];
                let cd = c_out[p] * d;
                grid_vb[i] += (v_out[p] + cd * k) * w;
                xb[p] += s.grad(o, inv_dx) * (vi.dot(&v_out[p]) + k * vi.dot(&cd)) - c_out[p].transpose() * vi * (k * w);
            }
        }

        // grid update
        let mut mom_b = vec![Vector3::zeros(); dims.len()];
        let mut mass_b = vec![0.0; dims.len()];
        for i in 0..dims.len() {
            if !grid.is_loaded(i) {
                continue;
            }
            let mut vt_b = grid_vb[i];
            if let Some(keep) = wall_mask(scene, dims.coords(i)) {
                vt_b = vt_b.component_mul(&keep);
            }
            let m = grid.mass[i];
            let f = tape.force.values[i];
            mom_b[i] = vt_b / m;
            let numerator = if per_mass {
                force_grad.values[i] += vt_b * dt;
                grid.momentum[i]
            } else {
                force_grad.values[i] += vt_b * (dt / m);
                grid.momentum[i] + f * dt
            };
            mass_b[i] = -numerator.dot(&vt_b) / (m * m);
        }

        // P2G, per particle
        let per_particle: Vec<Result<ParticleAdjoint>> = (0..np)
            .into_par_iter()
            .map(|p| {
                let s = &stencils[p];
                let mp = pre.mass[p];
                let a = affine_matrix(pre, p, lame[p], dx, dt)?;
                let mv = pre.v[p] * mp;
                let mut x_acc = Vector3::zeros();
                let mut v_acc = Vector3::zeros();
                let mut a_bar = Matrix3::zeros();
                for o in OFFSETS {
                    let i = dims.checked_index(s.node(o)).expect("stencil checked");
                    let w = s.weight(o);
                    let d = s.dpos(o, dx);
                    let qb = mom_b[i];
                    v_acc += qb * (w * mp);
                    a_bar += qb * d.transpose() * w;
                    x_acc += s.grad(o, inv_dx) * (mass_b[i] * mp + qb.dot(&(mv + a * d))) - a.transpose() * qb * w;
                }
                let f = pre.f[p];
                let m_bar = a_bar * (-dt * k * pre.volume0[p]);
                let stress = neo_hookean_stress(&f, lame[p].0, lame[p].1)?;
                let p_bar = m_bar * f;
                let f_acc = m_bar.transpose() * stress + neo_hookean_stress_vjp(&f, lame[p].0, lame[p].1, &p_bar)?;
                Ok((x_acc, v_acc, a_bar * mp, f_acc))
            })
            .collect();
        for (p, r) in per_particle.into_iter().enumerate() {
            let (x_acc, v_acc, c_acc, f_acc) = r?;
            xb[p] += x_acc;
            vb[p] = v_acc;
            cb[p] = c_acc;
            fb[p] += f_acc;
        }
    }
    Ok(Gradients { force: force_grad, x: xb, v: vb, c: cb, f: fb })
}

/// Central-difference gradient of `loss(final state)` with respect to every
/// force component. Costs two windows per component, so the grid is capped
/// at [`FD_MAX_NODES`].
pub fn finite_difference_grad(
    state: &ParticleSet,
    force: &NodalField,
    scene: &Scene,
    substeps: usize,
    loss: &(dyn Fn(&ParticleSet) -> f64 + Sync),
    h: f64,
) -> Result<NodalField> {
    if scene.dims.len() > FD_MAX_NODES {
        return Err(Error::InvalidArgument(format!(
            "finite differences need {} windows on a {:?} grid; limit is {FD_MAX_NODES} nodes",
            6 * scene.dims.len(),
            scene.dims.as_array()
        )));
    }
    let components: Vec<usize> = (0..3 * scene.dims.len()).collect();
    let values = finite_difference_components(state, force, scene, substeps, loss, h, &components)?;
    let mut grad = NodalField::zeros(scene.dims);
    for (c, v) in components.into_iter().zip(values) {
        grad.values[c / 3][c % 3] = v;
    }
    Ok(grad)
}

/// Central differences for selected components, indexed `3 * node + axis`.
pub fn finite_difference_components(
    state: &ParticleSet,
    force: &NodalField,
    scene: &Scene,
    substeps: usize,
    loss: &(dyn Fn(&ParticleSet) -> f64 + Sync),
    h: f64,
    components: &[usize],
) -> Result<Vec<f64>> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {h}")));
    }
    force.check_dims(scene.dims)?;
    components
        .par_iter()
        .map(|&c| {
            let eval = |delta: f64| -> Result<f64> {
                let mut f = force.clone();
                f.values[c / 3][c % 3] += delta;
                Ok(loss(&advance(state, &f, scene, substeps)?))
            };
            Ok((eval(h)? - eval(-h)?) / (2.0 * h))
        })
        .collect()
}

/// Relative error used for gradient comparisons: `|a - b|` over the larger
/// magnitude, floored at `floor` so components that are zero up to
/// rounding do not dominate.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
