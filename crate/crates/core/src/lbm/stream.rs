//! Pull streaming with periodic, bounce-back, velocity-inlet and
//! zero-gradient outlet boundaries.

use nalgebra::Vector3;
use rayon::prelude::*;

use super::lattice::LatticeSpec;
use crate::grid::GridDims;
use crate::scene::{Faces, LatticeFace};

/// Boundary description for streaming.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamBoundary {
    pub faces: Faces<LatticeFace>,
    /// Inlet velocity in lattice units.
    pub inlet_velocity: Vector3<f64>,
}

impl StreamBoundary {
    pub fn periodic() -> Self {
        Self { faces: Faces::uniform(LatticeFace::Periodic), inlet_velocity: Vector3::zeros() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Streamed {
    pub f: Vec<f64>,
    /// Momentum handed to solid nodes by bounce-back, `sum 2 c f` over
    /// every fluid-to-solid link (lattice units).
    pub momentum_exchange: Vector3<f64>,
}

enum Source {
    Node(usize),
    /// Reflect the opposite population of the receiving node; `wall_u` is
    /// the wall velocity (zero for solids and plain walls).
    Bounce { wall_u: Vector3<f64>, solid: bool },
}

fn source(dims: &GridDims, bc: &StreamBoundary, solid: &[bool], at: [usize; 3], c: [i32; 3]) -> Source {
    let n = dims.as_array();
    let mut src = [0usize; 3];
    let mut inlet = false;
    let mut outlet = [false; 3];
    for d in 0..3 {
        let s = at[d] as i64 - c[d] as i64;
        if s >= 0 && (s as usize) < n[d] {
            src[d] = s as usize;
            continue;
        }
        match bc.faces.get(d, s >= 0) {
            LatticeFace::Periodic => src[d] = s.rem_euclid(n[d] as i64) as usize,
            LatticeFace::Wall => return Source::Bounce { wall_u: Vector3::zeros(), solid: false },
            LatticeFace::Inlet => inlet = true,
            LatticeFace::Outlet => {
                outlet[d] = true;
                src[d] = at[d];
            }
        }
    }
    if inlet {
        return Source::Bounce { wall_u: bc.inlet_velocity, solid: false };
    }
    let idx = dims.index(src[0], src[1], src[2]);
    if solid[idx] && !outlet.iter().any(|o| *o) {
        return Source::Bounce { wall_u: Vector3::zeros(), solid: true };
    }
    Source::Node(idx)
}

/// Streamed populations of one fluid node. Returns the momentum exchanged
/// with solid neighbors.
pub(crate) fn pull_node(
    dims: &GridDims,
    lattice: &LatticeSpec,
    bc: &StreamBoundary,
    f: &[f64],
    solid: &[bool],
    node: usize,
    out: &mut [f64],
) -> Vector3<f64> {
    let q = lattice.q;
    let at = dims.coords(node);
    let own = &f[node * q..(node + 1) * q];
    let mut exchange = Vector3::zeros();
    let mut rho_local: Option<f64> = None;
    for i in 0..q {
        match source(dims, bc, solid, at, lattice.c[i]) {
            Source::Node(s) => out[i] = f[s * q + i],
            Source::Bounce { wall_u, solid: hit_solid } => {
                let o = lattice.opposite[i];
                let mut v = own[o];
                if wall_u != Vector3::zeros() {
                    let rho = *rho_local.get_or_insert_with(|| own.iter().sum());
                    let c = lattice.cf(i);
                    let cu = c[0] * wall_u.x + c[1] * wall_u.y + c[2] * wall_u.z;
                    v += 2.0 * lattice.w[i] * rho * cu / lattice.cs2;
                }
                out[i] = v;
                if hit_solid {
                    let co = lattice.cf(o);
                    exchange += Vector3::new(co[0], co[1], co[2]) * (2.0 * own[o]);
                }
            }
        }
    }
    exchange
}

/// Stream all fluid nodes. Solid nodes keep their populations.
pub fn stream(dims: GridDims, lattice: &LatticeSpec, f: &[f64], solid: &[bool], bc: &StreamBoundary) -> Streamed {
    let q = lattice.q;
    let mut out = vec![0.0; f.len()];
    let exchanges: Vec<Vector3<f64>> = out
        .par_chunks_mut(q)
        .enumerate()
        .map(|(n, dst)| {
            if solid[n] {
                dst.copy_from_slice(&f[n * q..(n + 1) * q]);
                Vector3::zeros()
            } else {
                pull_node(&dims, lattice, bc, f, solid, n, dst)
            }
        })
        .collect();
    Streamed { f: out, momentum_exchange: exchanges.iter().sum() }
}
