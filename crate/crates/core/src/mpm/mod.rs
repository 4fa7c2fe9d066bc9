//! MLS-MPM solid simulator with APIC transfers, Neo-Hookean elasticity and
//! external wind forces on the background grid.

pub mod constitutive;
pub mod kernel;
pub mod particles;
pub mod transfer;

pub use constitutive::{neo_hookean_energy, neo_hookean_stress, neo_hookean_stress_vjp, DET_EPSILON};
pub use kernel::{quadratic_bspline, Stencil};
pub use particles::{ParticleSet, FLAG_INTERNAL, FLAG_MARKER};
pub use transfer::{
    g2p, g2p_with, grid_update, mpm_step, mpm_step_with, p2g, p2g_with, update_deformation, ExecMode,
    particle_lame, particle_stencils, GridUpdateStats, MpmGrid, StepStats, BC_BAND, MASS_EPSILON,
};
