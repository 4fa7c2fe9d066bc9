//! Compressible Neo-Hookean elasticity.
//!
//! ```text
//! psi(F) = mu/2 (tr(F^T F) - 3) - mu ln J + lambda/2 (ln J)^2
//! P(F)   = mu (F - F^-T) + lambda ln J F^-T
//! ```

use nalgebra::Matrix3;

use crate::error::{Error, Result};

/// Deformation gradients with `det F` at or below this are rejected.
pub const DET_EPSILON: f64 = 1e-8;

fn inverse_transpose(f: &Matrix3<f64>) -> Result<(Matrix3<f64>, f64)> {
    let j = f.determinant();
    if !(j > DET_EPSILON) {
        return Err(Error::SingularDeformation(j));
    }
    let inv = f.try_inverse().ok_or(Error::SingularDeformation(j))?;
    Ok((inv.transpose(), j))
}

/// Strain energy density.
pub fn neo_hookean_energy(f: &Matrix3<f64>, mu: f64, lambda: f64) -> Result<f64> {
    let j = f.determinant();
    if !(j > DET_EPSILON) {
        return Err(Error::SingularDeformation(j));
    }
    let log_j = j.ln();
    Ok(0.5 * mu * ((f.transpose() * f).trace() - 3.0) - mu * log_j + 0.5 * lambda * log_j * log_j)
}

/// First Piola-Kirchhoff stress.
pub fn neo_hookean_stress(f: &Matrix3<f64>, mu: f64, lambda: f64) -> Result<Matrix3<f64>> {
    let (f_inv_t, j) = inverse_transpose(f)?;
    Ok(mu * (f - f_inv_t) + lambda * j.ln() * f_inv_t)
}

/// Vector-Jacobian product of the stress: given `dL/dP`, returns `dL/dF`
/// contracted through the analytic Hessian of the energy.
pub fn neo_hookean_stress_vjp(f: &Matrix3<f64>, mu: f64, lambda: f64, p_bar: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let (a, j) = inverse_transpose(f)?;
    let log_j = j.ln();
    Ok(mu * p_bar + (mu - lambda * log_j) * (a * p_bar.transpose() * a) + lambda * a.dot(p_bar) * a)
}
