//! Lattice Boltzmann wind solver.
//!
//! The primary solver stores only moments `(rho, u, S)` per node and
//! rebuilds populations from a third-order Hermite expansion each step
//! (reconstruct, stream, collide in moment space). A classical BGK solver
//! with Guo forcing and persistent populations runs on the same field type
//! and serves as a cross-check.

pub mod field;
pub mod home;
pub mod lattice;
pub mod stream;

use nalgebra::Vector3;
use rayon::prelude::*;

pub use field::{init_equilibrium, sym_outer, sym_to_matrix, LbmField, Sym3, MACH_LIMIT, MACH_WARN};
pub use home::{moment_update, reconstruct_distributions};
pub use lattice::LatticeSpec;
pub use stream::{stream, StreamBoundary, Streamed};

use crate::error::{Error, Result};
use crate::scene::{MomentClosure, Scene};

/// Density, velocity and strain rate of one node.
type Moments = (f64, Vector3<f64>, Sym3);
/// [`Moments`] plus the node's forcing term.
type ForcedMoments = (f64, Vector3<f64>, Sym3, Vector3<f64>);

/// Lattice parameters of a step, normally taken from the scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbmParams {
    pub tau: f64,
    pub closure: MomentClosure,
    pub boundary: StreamBoundary,
}

impl LbmParams {
    pub fn from_scene(scene: &Scene) -> Self {
        Self {
            tau: scene.fluid.tau,
            closure: scene.fluid.closure,
            boundary: StreamBoundary { faces: scene.fluid.faces, inlet_velocity: scene.inlet_lattice_velocity() },
        }
    }

    pub fn periodic(tau: f64) -> Self {
        Self { tau, closure: MomentClosure::Consistent, boundary: StreamBoundary::periodic() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LbmStepStats {
    /// Momentum transferred to solid nodes in this step (lattice units).
    pub momentum_exchange: Vector3<f64>,
    pub solidified: usize,
    pub released: usize,
}

/// Bring the field's solid flags in line with `mask`. Nodes that turn solid
/// lose their velocity and stress; nodes released into the fluid start at
/// rest with the mean density of their fluid face neighbors.
fn apply_mask(field: &mut LbmField, mask: &[bool]) -> (usize, usize) {
    let dims = field.dims;
    let mut solidified = 0;
    let mut released = Vec::new();
    for n in 0..field.len() {
        match (field.solid[n], mask[n]) {
            (false, true) => {
                solidified += 1;
                field.u[n] = Vector3::zeros();
                field.s[n] = [0.0; 6];
            }
            (true, false) => released.push(n),
            _ => {}
        }
    }
    for &n in &released {
        let c = dims.coords(n);
        let mut sum = 0.0;
        let mut count = 0;
        for d in 0..3 {
            for step in [-1i64, 1] {
                let mut nb = [c[0] as i64, c[1] as i64, c[2] as i64];
                nb[d] += step;
                if let Some(j) = dims.checked_index(nb) {
                    if !mask[j] && !field.solid[j] {
                        sum += field.rho[j];
                        count += 1;
                    }
                }
            }
        }
        if count > 0 {
            field.rho[n] = sum / count as f64;
        }
        field.u[n] = Vector3::zeros();
        field.s[n] = [0.0; 6];
    }
    field.solid.copy_from_slice(mask);
    if solidified + released.len() > 0 {
        field.f_current = false;
    }
    (solidified, released.len())
}

fn check_inputs(field: &LbmField, force: &[Vector3<f64>], mask: &[bool]) -> Result<()> {
    if force.len() != field.len() || mask.len() != field.len() {
        return Err(Error::Shape(format!(
            "lattice has {} nodes, force has {}, mask has {}",
            field.len(),
            force.len(),
            mask.len()
        )));
    }
    Ok(())
}

fn check_node(dims: &crate::grid::GridDims, n: usize, rho: f64, u: &Vector3<f64>, s: &Sym3) -> Result<()> {
    let what = if !rho.is_finite() || !(rho > 0.0) {
        format!("density {rho}")
    } else if !u.iter().all(|v| v.is_finite()) {
        format!("velocity {:?}", [u.x, u.y, u.z])
    } else if !s.iter().all(|v| v.is_finite()) {
        format!("stress {s:?}")
    } else {
        return Ok(());
    };
    Err(Error::Instability { node: dims.coords(n), what })
}

/// One moment-encoded step: reconstruct, stream, compute moments, collide.
pub fn lbm_step(field: &mut LbmField, force: &[Vector3<f64>], solid_mask: &[bool], scene: &Scene) -> Result<LbmStepStats> {
    lbm_step_with(field, force, solid_mask, &LbmParams::from_scene(scene))
}

pub fn lbm_step_with(
    field: &mut LbmField,
    force: &[Vector3<f64>],
    solid_mask: &[bool],
    params: &LbmParams,
) -> Result<LbmStepStats> {
    check_inputs(field, force, solid_mask)?;
    let (solidified, released) = apply_mask(field, solid_mask);
    let mut buf = std::mem::take(&mut field.f);
    home::fill_distributions(field, params.closure, &mut buf);
    let q = field.lattice.q;
    let dims = field.dims;
    let fref = &*field;
    let results: Vec<Result<Option<ForcedMoments>>> = (0..field.len())
        .into_par_iter()
        .map(|n| {
            if fref.solid[n] {
                return Ok(None);
            }
            let mut pulled = [0.0; 27];
            let pulled = &mut pulled[..q];
            let exchange = stream::pull_node(&dims, &fref.lattice, &params.boundary, &buf, &fref.solid, n, pulled);
            let (rho, u, s) = home::node_moments(&fref.lattice, pulled, &force[n]);
            let (rho, u, s) = home::moment_update_node(rho, &u, &s, &force[n], params.tau, params.closure);
            check_node(&dims, n, rho, &u, &s)?;
            Ok(Some((rho, u, s, exchange)))
        })
        .collect();
    let mut exchange = Vector3::zeros();
    for (n, r) in results.into_iter().enumerate() {
        if let Some((rho, u, s, ex)) = r? {
            field.rho[n] = rho;
            field.u[n] = u;
            field.s[n] = s;
            exchange += ex;
        }
    }
    field.f = buf;
    field.f_current = false;
    Ok(LbmStepStats { momentum_exchange: exchange, solidified, released })
}

/// Second-order equilibrium populations.
pub fn bgk_equilibrium(lattice: &LatticeSpec, rho: f64, u: &Vector3<f64>, out: &mut [f64]) {
    let cs2 = lattice.cs2;
    let u2 = u.norm_squared();
    for i in 0..lattice.q {
        let c = lattice.cf(i);
        let cu = c[0] * u.x + c[1] * u.y + c[2] * u.z;
        out[i] = lattice.w[i] * rho * (1.0 + cu / cs2 + cu * cu / (2.0 * cs2 * cs2) - u2 / (2.0 * cs2));
    }
}

/// One single-relaxation-time step with Guo forcing on persistent
/// populations. Populations are seeded from the moments when stale.
pub fn bgk_step(field: &mut LbmField, force: &[Vector3<f64>], solid_mask: &[bool], scene: &Scene) -> Result<LbmStepStats> {
    bgk_step_with(field, force, solid_mask, &LbmParams::from_scene(scene))
}

pub fn bgk_step_with(
    field: &mut LbmField,
    force: &[Vector3<f64>],
    solid_mask: &[bool],
    params: &LbmParams,
) -> Result<LbmStepStats> {
    check_inputs(field, force, solid_mask)?;
    let (solidified, released) = apply_mask(field, solid_mask);
    if !field.f_current {
        let mut buf = std::mem::take(&mut field.f);
        home::fill_distributions(field, MomentClosure::Consistent, &mut buf);
        field.f = buf;
    }
    let q = field.lattice.q;
    let dims = field.dims;
    let tau = params.tau;
    let streamed = stream(dims, &field.lattice, &field.f, &field.solid, &params.boundary);
    let mut next = streamed.f;
    let lattice = &field.lattice;
    let solid = &field.solid;
    let cs2 = lattice.cs2;
    let moments: Vec<Result<Option<Moments>>> = next
        .par_chunks_mut(q)
        .enumerate()
        .map(|(n, fi)| {
            if solid[n] {
                return Ok(None);
            }
            let fv = force[n];
            let (rho, u, _) = home::node_moments(lattice, fi, &fv);
            let mut feq = [0.0; 27];
            bgk_equilibrium(lattice, rho, &u, &mut feq[..q]);
            for i in 0..q {
                let c = lattice.cf(i);
                let c = Vector3::new(c[0], c[1], c[2]);
                let source = lattice.w[i] * ((c - u) / cs2 + c * (c.dot(&u) / (cs2 * cs2))).dot(&fv);
                fi[i] += -(fi[i] - feq[i]) / tau + (1.0 - 0.5 / tau) * source;
            }
            let (rho, u, s) = home::node_moments(lattice, fi, &Vector3::zeros());
            check_node(&dims, n, rho, &u, &s)?;
            Ok(Some((rho, u, s)))
        })
        .collect();
    for (n, m) in moments.into_iter().enumerate() {
        if let Some((rho, u, s)) = m? {
            field.rho[n] = rho;
            field.u[n] = u;
            field.s[n] = s;
        }
    }
    field.f = next;
    field.f_current = true;
    Ok(LbmStepStats { momentum_exchange: streamed.momentum_exchange, solidified, released })
}
