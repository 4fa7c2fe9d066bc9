//! Per-node vector fields: wind forces, their gradients, guide directions.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::grid::GridDims;

/// One 3-vector per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    pub dims: GridDims,
    pub values: Vec<Vector3<f64>>,
}

impl NodalField {
    pub fn zeros(dims: GridDims) -> Self {
        Self { dims, values: vec![Vector3::zeros(); dims.len()] }
    }

    pub fn uniform(dims: GridDims, v: Vector3<f64>) -> Self {
        Self { dims, values: vec![v; dims.len()] }
    }

    pub fn from_fn(dims: GridDims, mut f: impl FnMut([usize; 3]) -> Vector3<f64>) -> Self {
        Self { dims, values: (0..dims.len()).map(|i| f(dims.coords(i))).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { dims: self.dims, values: self.values.iter().map(|v| v * k).collect() }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a.dot(b)).sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.amax()).fold(0.0, f64::max)
    }

    /// `self += k * other`
    pub fn axpy(&mut self, k: f64, other: &Self) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b * k;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn check_dims(&self, dims: GridDims) -> Result<()> {
        if self.dims != dims || self.values.len() != dims.len() {
            return Err(Error::Shape(format!(
                "field has dims {:?} ({} values), grid is {:?}",
                self.dims.as_array(),
                self.values.len(),
                dims.as_array()
            )));
        }
        Ok(())
    }
}

/// Time-indexed wind force field: one nodal force field per frame interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceField {
    pub dims: GridDims,
    pub frames: Vec<NodalField>,
}

impl ForceField {
    pub fn new(dims: GridDims) -> Self {
        Self { dims, frames: Vec::new() }
    }

    pub fn constant(field: NodalField, timesteps: usize) -> Self {
        Self { dims: field.dims, frames: vec![field; timesteps] }
    }

    pub fn timesteps(&self) -> usize {
        self.frames.len()
    }

    pub fn push(&mut self, field: NodalField) -> Result<()> {
        field.check_dims(self.dims)?;
        self.frames.push(field);
        Ok(())
    }

    pub fn check(&self) -> Result<()> {
        for (t, f) in self.frames.iter().enumerate() {
            f.check_dims(self.dims)?;
            if !f.is_finite() {
                return Err(Error::InvalidArgument(format!("force field timestep {t} has non-finite values")));
            }
        }
        Ok(())
    }
}
