//! Coupled wind/object simulation with force-field reconstruction.
//!
//! Objects are particle sets evolved by MLS-MPM; wind is a lattice
//! Boltzmann field in moment form. The two exchange a solid mask (particles
//! to lattice) and drag forces or guide directions (lattice to grid). The
//! [`adjoint`] module differentiates an MPM frame window with respect to the
//! nodal wind forces, which [`inverse`] uses to recover force fields from
//! observed marker motion.

pub mod adjoint;
pub mod coupling;
pub mod error;
pub mod field;
pub mod grid;
pub mod inverse;
pub mod io;
pub mod lbm;
pub mod mpm;
pub mod scene;
pub mod simulate;
pub mod volume;

pub use error::{Error, Result};
pub use field::{ForceField, NodalField};
pub use grid::GridDims;
pub use scene::Scene;
