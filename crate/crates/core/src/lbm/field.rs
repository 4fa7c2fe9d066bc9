//! Moment-encoded lattice state.

use nalgebra::{Matrix3, Vector3};

use super::lattice::LatticeSpec;
use crate::error::{Error, Result};
use crate::grid::GridDims;

/// Velocities above this (lattice units) trigger a warning at initialization.
pub const MACH_WARN: f64 = 0.1;
/// Velocities above this (lattice units) are rejected at initialization.
pub const MACH_LIMIT: f64 = 0.3;

/// Symmetric 3x3 tensor stored as `[xx, yy, zz, xy, xz, yz]`.
pub type Sym3 = [f64; 6];

pub const SXX: usize = 0;
pub const SYY: usize = 1;
pub const SZZ: usize = 2;
pub const SXY: usize = 3;
pub const SXZ: usize = 4;
pub const SYZ: usize = 5;

pub fn sym_to_matrix(s: &Sym3) -> Matrix3<f64> {
    Matrix3::new(s[SXX], s[SXY], s[SXZ], s[SXY], s[SYY], s[SYZ], s[SXZ], s[SYZ], s[SZZ])
}

pub fn sym_from_matrix(m: &Matrix3<f64>) -> Sym3 {
    [m[(0, 0)], m[(1, 1)], m[(2, 2)], m[(0, 1)], m[(0, 2)], m[(1, 2)]]
}

/// `u u^T` in packed form.
pub fn sym_outer(u: &Vector3<f64>) -> Sym3 {
    [u.x * u.x, u.y * u.y, u.z * u.z, u.x * u.y, u.x * u.z, u.y * u.z]
}

/// Lattice wind state.
///
/// `s` holds the second moment shifted by the lattice sound speed,
/// `S = (sum_i c_i c_i f_i) / rho - cs^2 I`, so a fluid at rest has `S = 0`
/// and the equilibrium stress is `u u`.
///
/// `u` is the post-collision velocity, i.e. the velocity the next
/// reconstruction encodes. With a body force it exceeds the hydrodynamic
/// velocity by `F / (2 rho)`; see [`LbmField::hydrodynamic_velocity`].
#[derive(Debug, Clone, PartialEq)]
pub struct LbmField {
    pub dims: GridDims,
    pub lattice: LatticeSpec,
    pub rho: Vec<f64>,
    pub u: Vec<Vector3<f64>>,
    pub s: Vec<Sym3>,
    pub solid: Vec<bool>,
    /// Distribution buffer, `q` values per node.
    pub f: Vec<f64>,
    /// Whether `f` holds the post-collision populations matching the
    /// moments (kept by the BGK path across steps).
    pub(crate) f_current: bool,
}

impl LbmField {
    /// Uniform rest state with density 1.
    pub fn new(dims: GridDims) -> Self {
        let lattice = LatticeSpec::d3q27();
        let n = dims.len();
        Self {
            dims,
            rho: vec![1.0; n],
            u: vec![Vector3::zeros(); n],
            s: vec![[0.0; 6]; n],
            solid: vec![false; n],
            f: vec![0.0; n * lattice.q],
            lattice,
            f_current: false,
        }
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    /// Mark the distribution buffer as stale after editing moments by hand.
    pub fn invalidate_distributions(&mut self) {
        self.f_current = false;
    }

    /// Set a single node to equilibrium at `(rho, u)`.
    pub fn set_equilibrium(&mut self, node: usize, rho: f64, u: Vector3<f64>) {
        self.rho[node] = rho;
        self.u[node] = u;
        self.s[node] = sym_outer(&u);
        self.f_current = false;
    }

    /// Velocity with the half-step force contribution removed.
    pub fn hydrodynamic_velocity(&self, node: usize, force: &Vector3<f64>) -> Vector3<f64> {
        self.u[node] - force / (2.0 * self.rho[node])
    }

    /// Deviatoric part of the non-equilibrium momentum flux,
    /// `dev(rho (S - u u))`, which is proportional to the viscous stress.
    pub fn deviatoric_stress(&self, node: usize) -> Matrix3<f64> {
        let neq = (sym_to_matrix(&self.s[node]) - self.u[node] * self.u[node].transpose()) * self.rho[node];
        neq - Matrix3::identity() * (neq.trace() / 3.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.rho.iter().zip(&self.solid).filter(|(_, s)| !**s).map(|(r, _)| r).sum()
    }

    pub fn total_momentum(&self) -> Vector3<f64> {
        (0..self.len()).filter(|&n| !self.solid[n]).map(|n| self.u[n] * self.rho[n]).sum()
    }

    pub fn kinetic_energy(&self) -> f64 {
        (0..self.len()).filter(|&n| !self.solid[n]).map(|n| 0.5 * self.rho[n] * self.u[n].norm_squared()).sum()
    }
}

/// Initialize every node to equilibrium at `(rho0, u0)`.
pub fn init_equilibrium(mut field: LbmField, rho0: f64, u0: Vector3<f64>) -> Result<LbmField> {
    if !(rho0 > 0.0) || !rho0.is_finite() {
        return Err(Error::InvalidArgument(format!("initial density must be positive, got {rho0}")));
    }
    let speed = u0.norm();
    if !speed.is_finite() || speed > MACH_LIMIT {
        return Err(Error::Mach(speed));
    }
    if speed > MACH_WARN {
        log::warn!("initial lattice velocity {speed:.3} exceeds {MACH_WARN}; compressibility errors grow as u^2");
    }
    for n in 0..field.len() {
        field.set_equilibrium(n, rho0, u0);
    }
    Ok(field)
}
