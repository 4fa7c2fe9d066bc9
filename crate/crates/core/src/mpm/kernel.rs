//! Quadratic B-spline transfer stencil.
//!
//! A particle at fractional grid coordinate `s` touches the 3x3x3 block of
//! nodes starting at `floor(s - 0.5)`. With `t = s - base` in `[0.5, 1.5)`
//! the per-axis weights are
//!
//! ```text
//! w0 = (1.5 - t)^2 / 2,   w1 = 0.75 - (t - 1)^2,   w2 = (t - 0.5)^2 / 2
//! ```
//!
//! which form a partition of unity with vanishing first moment, so affine
//! fields are reproduced exactly.

use nalgebra::Vector3;

/// Inverse of the APIC inertia tensor for quadratic B-splines, times dx^2.
pub const APIC_D_INV_SCALE: f64 = 4.0;

#[inline]
pub fn quadratic_bspline(r: f64) -> f64 {
    let a = r.abs();
    if a < 0.5 {
        0.75 - a * a
    } else if a < 1.5 {
        let t = 1.5 - a;
        0.5 * t * t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub base: [i64; 3],
    /// Fractional offset `t` of the particle from `base`, per axis.
    pub t: [f64; 3],
    pub w: [[f64; 3]; 3],
    /// Per-axis weight derivatives with respect to `t`.
    pub dw: [[f64; 3]; 3],
}

impl Stencil {
    pub fn new(x: &Vector3<f64>, origin: &Vector3<f64>, inv_dx: f64) -> Self {
        let mut base = [0i64; 3];
        let mut t = [0.0; 3];
        let mut w = [[0.0; 3]; 3];
        let mut dw = [[0.0; 3]; 3];
        for d in 0..3 {
            let s = (x[d] - origin[d]) * inv_dx;
            let b = (s - 0.5).floor();
            let fx = s - b;
            base[d] = b as i64;
            t[d] = fx;
            w[d] = [0.5 * (1.5 - fx).powi(2), 0.75 - (fx - 1.0).powi(2), 0.5 * (fx - 0.5).powi(2)];
            dw[d] = [fx - 1.5, -2.0 * (fx - 1.0), fx - 0.5];
        }
        Self { base, t, w, dw }
    }

    #[inline]
    pub fn weight(&self, o: [usize; 3]) -> f64 {
        self.w[0][o[0]] * self.w[1][o[1]] * self.w[2][o[2]]
    }

    /// Gradient of the weight with respect to the particle position.
    #[inline]
    pub fn grad(&self, o: [usize; 3], inv_dx: f64) -> Vector3<f64> {
        let (w, dw) = (&self.w, &self.dw);
        Vector3::new(
            dw[0][o[0]] * w[1][o[1]] * w[2][o[2]],
            w[0][o[0]] * dw[1][o[1]] * w[2][o[2]],
            w[0][o[0]] * w[1][o[1]] * dw[2][o[2]],
        ) * inv_dx
    }

    /// `x_node - x_particle`.
    #[inline]
    pub fn dpos(&self, o: [usize; 3], dx: f64) -> Vector3<f64> {
        Vector3::new(o[0] as f64 - self.t[0], o[1] as f64 - self.t[1], o[2] as f64 - self.t[2]) * dx
    }

    #[inline]
    pub fn node(&self, o: [usize; 3]) -> [i64; 3] {
        [self.base[0] + o[0] as i64, self.base[1] + o[1] as i64, self.base[2] + o[2] as i64]
    }
}

/// The 27 stencil offsets in a fixed order.
pub const OFFSETS: [[usize; 3]; 27] = {
    let mut out = [[0usize; 3]; 27];
    let mut k = 0;
    while k < 27 {
        out[k] = [k % 3, (k / 3) % 3, k / 9];
        k += 1;
    }
    out
};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_at_node_center() {
        assert_eq!(quadratic_bspline(0.0), 0.75);
        let s = Stencil::new(&Vector3::new(2.0, 3.0, 4.0), &Vector3::zeros(), 1.0);
        assert_eq!(s.base, [1, 2, 3]);
        assert_eq!(s.weight([1, 1, 1]), 0.421875);
    }

    #[test]
    fn stencil_matches_closed_form_kernel() {
        let x = Vector3::new(0.37, 0.81, 0.55);
        let s = Stencil::new(&x, &Vector3::zeros(), 10.0);
        for o in OFFSETS {
            let node = s.node(o);
            let expect: f64 = (0..3).map(|d| quadratic_bspline(x[d] * 10.0 - node[d] as f64)).product();
            assert!((s.weight(o) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn partition_of_unity_and_zero_first_moment() {
        for &x in &[Vector3::new(0.123, 0.456, 0.789), Vector3::new(0.5, 0.5, 0.5), Vector3::new(0.2501, 0.99, 0.05)] {
            let s = Stencil::new(&x, &Vector3::zeros(), 8.0);
            let sum: f64 = OFFSETS.iter().map(|&o| s.weight(o)).sum();
            let moment: Vector3<f64> = OFFSETS.iter().map(|&o| s.dpos(o, 0.125) * s.weight(o)).sum();
            assert!((sum - 1.0).abs() < 1e-15);
            assert!(moment.norm() < 1e-16);
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let origin = Vector3::zeros();
        let x = Vector3::new(0.31, 0.47, 0.62);
        let inv_dx = 16.0;
        let s = Stencil::new(&x, &origin, inv_dx);
        let h = 1e-7;
        for o in OFFSETS {
            let g = s.grad(o, inv_dx);
            for d in 0..3 {
                let mut xp = x;
                xp[d] += h;
                let mut xm = x;
                xm[d] -= h;
                let sp = Stencil::new(&xp, &origin, inv_dx);
                let sm = Stencil::new(&xm, &origin, inv_dx);
                assert_eq!(sp.base, s.base);
                let fd = (sp.weight(o) - sm.weight(o)) / (2.0 * h);
                assert!((fd - g[d]).abs() < 1e-6, "{fd} vs {}", g[d]);
            }
        }
    }
}
