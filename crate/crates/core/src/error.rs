use thiserror::Error;

/// Errors raised by the simulation and reconstruction engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scene:\n{}", .0.join("\n"))]
    InvalidScene(Vec<String>),

    #[error("unphysical material: {0}")]
    Material(String),

    #[error("particle {index} at ({:.6}, {:.6}, {:.6}) leaves the transfer stencil", .position[0], .position[1], .position[2])]
    ParticleOutOfDomain { index: usize, position: [f64; 3] },

    #[error("deformation gradient of particle {index} inverted or singular (det F = {det:e})")]
    Inversion { index: usize, det: f64 },

    #[error("singular deformation gradient (det F = {0:e})")]
    SingularDeformation(f64),

    #[error("lattice instability at node ({}, {}, {}): {what}", .node[0], .node[1], .node[2])]
    Instability { node: [usize; 3], what: String },

    #[error("velocity {0:.4} exceeds the low-Mach limit of 0.3 lattice units")]
    Mach(f64),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("optimization failed at timestep {timestep}: {reason}")]
    Optimization { timestep: usize, reason: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
