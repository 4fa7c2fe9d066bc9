//! High-order moment encoding: Hermite reconstruction of the populations
//! from `(rho, u, S)` and the moment-space collision.

use nalgebra::Vector3;
use rayon::prelude::*;

use super::field::{LbmField, Sym3, SXX, SXY, SXZ, SYY, SYZ, SZZ};
use super::lattice::LatticeSpec;
use crate::scene::MomentClosure;

/// Third-order Hermite coefficients `a_abc` in the order
/// `[xxy, xyy, xxz, xzz, yyz, yzz, xyz]`, from the regularized recursion
/// `a_abc = u_a S_bc + u_b S_ac + u_c S_ab - 2 u_a u_b u_c`.
pub fn third_order_coefficients(u: &Vector3<f64>, s: &Sym3) -> [f64; 7] {
    let (x, y, z) = (u.x, u.y, u.z);
    [
        s[SXX] * y + 2.0 * s[SXY] * x - 2.0 * x * x * y,
        s[SYY] * x + 2.0 * s[SXY] * y - 2.0 * x * y * y,
        s[SXX] * z + 2.0 * s[SXZ] * x - 2.0 * x * x * z,
        s[SZZ] * x + 2.0 * s[SXZ] * z - 2.0 * x * z * z,
        s[SYY] * z + 2.0 * s[SYZ] * y - 2.0 * y * y * z,
        s[SZZ] * y + 2.0 * s[SYZ] * z - 2.0 * y * z * z,
        s[SYZ] * x + s[SXZ] * y + s[SXY] * z - 2.0 * x * y * z,
    ]
}

/// Third-order Hermite polynomials of `c` in the same order as
/// [`third_order_coefficients`].
pub fn third_order_hermite(c: [f64; 3], cs2: f64) -> [f64; 7] {
    let [x, y, z] = c;
    [
        x * x * y - cs2 * y,
        x * y * y - cs2 * x,
        x * x * z - cs2 * z,
        x * z * z - cs2 * x,
        y * y * z - cs2 * z,
        y * z * z - cs2 * y,
        x * y * z,
    ]
}

fn second_order_term(c: [f64; 3], s: &Sym3, cs2: f64) -> f64 {
    let [x, y, z] = c;
    (x * x - cs2) * s[SXX]
        + (y * y - cs2) * s[SYY]
        + (z * z - cs2) * s[SZZ]
        + 2.0 * (x * y * s[SXY] + x * z * s[SXZ] + y * z * s[SYZ])
}

/// Third-order contribution exactly as it is usually printed, including
/// its `yyy`/`zzz` polynomials (which vanish on D3Q27), the `u_z` in the
/// `yyz` coefficient and the `S_xx u_y` in the `xyz` coefficient.
fn third_order_as_printed(c: [f64; 3], u: &Vector3<f64>, s: &Sym3, cs2: f64) -> f64 {
    let [cx, cy, cz] = c;
    let (x, y, z) = (u.x, u.y, u.z);
    let h_xxy = cx * cx * cy - cs2 * cy;
    let h_yyy = cy * cy * cy - 3.0 * cs2 * cy;
    let h_xxz = cx * cx * cz - cs2 * cz;
    let h_zzz = cz * cz * cz - 3.0 * cs2 * cz;
    let h_yzz = cy * cz * cz - cs2 * cy;
    let h_yyz = cy * cy * cz - cs2 * cz;
    let h_xyz = cx * cy * cz;
    let sum = h_xxy * (s[SXX] * y + 2.0 * s[SXY] * x - 2.0 * x * x * y)
        + h_yyy * (s[SYY] * x + 2.0 * s[SXY] * y - 2.0 * x * y * y)
        + h_xxz * (s[SXX] * z + 2.0 * s[SXZ] * x - 2.0 * x * x * z)
        + h_zzz * (s[SZZ] * x + 2.0 * s[SXZ] * z - 2.0 * x * z * z)
        + h_yzz * (s[SZZ] * y + 2.0 * s[SYZ] * z - 2.0 * y * z * z)
        + h_yyz * (s[SYY] * z + 2.0 * s[SYZ] * z - 2.0 * y * y * z)
        + h_xyz * (s[SXX] * y + s[SYZ] * x + s[SXY] * z - 2.0 * x * y * z);
    sum / (2.0 * cs2 * cs2 * cs2)
}

/// Populations of one node from its moments.
pub fn reconstruct_node(
    lattice: &LatticeSpec,
    rho: f64,
    u: &Vector3<f64>,
    s: &Sym3,
    closure: MomentClosure,
    out: &mut [f64],
) {
    let cs2 = lattice.cs2;
    let a3 = third_order_coefficients(u, s);
    for i in 0..lattice.q {
        let c = lattice.cf(i);
        let cu = c[0] * u.x + c[1] * u.y + c[2] * u.z;
        let second = second_order_term(c, s, cs2) / (2.0 * cs2 * cs2);
        let third = match closure {
            MomentClosure::Consistent => {
                let h = third_order_hermite(c, cs2);
                let cs6 = cs2 * cs2 * cs2;
                (h[..6].iter().zip(&a3[..6]).map(|(h, a)| h * a).sum::<f64>()) / (2.0 * cs6) + h[6] * a3[6] / cs6
            }
            MomentClosure::AsPrinted => third_order_as_printed(c, u, s, cs2),
        };
        out[i] = rho * lattice.w[i] * (1.0 + cu / cs2 + second + third);
    }
}

/// Populations of every node, `q` per node.
pub fn reconstruct_distributions(field: &LbmField, closure: MomentClosure) -> Vec<f64> {
    let q = field.lattice.q;
    let mut f = vec![0.0; field.len() * q];
    fill_distributions(field, closure, &mut f);
    f
}

pub(crate) fn fill_distributions(field: &LbmField, closure: MomentClosure, f: &mut [f64]) {
    let q = field.lattice.q;
    f.par_chunks_mut(q).enumerate().for_each(|(n, out)| {
        reconstruct_node(&field.lattice, field.rho[n], &field.u[n], &field.s[n], closure, out);
    });
}

/// Raw moments of one node: density, momentum `sum c f`, and the
/// second moment `sum c c f`.
pub fn raw_moments(lattice: &LatticeSpec, f: &[f64]) -> (f64, Vector3<f64>, Sym3) {
    let mut rho = 0.0;
    let mut j = Vector3::zeros();
    let mut pi = [0.0; 6];
    for i in 0..lattice.q {
        let c = lattice.cf(i);
        let fi = f[i];
        rho += fi;
        j += Vector3::new(c[0], c[1], c[2]) * fi;
        pi[SXX] += c[0] * c[0] * fi;
        pi[SYY] += c[1] * c[1] * fi;
        pi[SZZ] += c[2] * c[2] * fi;
        pi[SXY] += c[0] * c[1] * fi;
        pi[SXZ] += c[0] * c[2] * fi;
        pi[SYZ] += c[1] * c[2] * fi;
    }
    (rho, j, pi)
}

/// Macroscopic moments `(rho, u, S)` of one node's populations, with the
/// half-force correction `rho u = sum c f + F / 2`.
pub fn node_moments(lattice: &LatticeSpec, f: &[f64], force: &Vector3<f64>) -> (f64, Vector3<f64>, Sym3) {
    let (rho, j, pi) = raw_moments(lattice, f);
    let u = (j + force * 0.5) / rho;
    let mut s = pi;
    for (k, v) in s.iter_mut().enumerate() {
        *v /= rho;
        if k < 3 {
            *v -= lattice.cs2;
        }
    }
    (rho, u, s)
}

/// Moment-space collision of one node from its post-streaming moments.
pub fn moment_update_node(
    rho: f64,
    u: &Vector3<f64>,
    s: &Sym3,
    force: &Vector3<f64>,
    tau: f64,
    closure: MomentClosure,
) -> (f64, Vector3<f64>, Sym3) {
    let inv_tau = 1.0 / tau;
    let u_new = u + force / (2.0 * rho);
    let uv = [u.x, u.y, u.z];
    let fv = [force.x, force.y, force.z];
    let mut out = [0.0; 6];

    let off = (2.0 * tau - 1.0) / (2.0 * tau * rho);
    for (k, a, b) in [(SXY, 0, 1), (SXZ, 0, 2), (SYZ, 1, 2)] {
        out[k] = (1.0 - inv_tau) * s[k] + inv_tau * uv[a] * uv[b] + off * (fv[a] * uv[b] + fv[b] * uv[a]);
    }

    let u2 = u.norm_squared();
    let fu = [fv[0] * uv[0], fv[1] * uv[1], fv[2] * uv[2]];
    let relax = (tau - 1.0) / (3.0 * tau);
    let force_dev = (tau - 1.0) / (3.0 * tau * rho);
    for a in 0..3 {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        let mut v = relax * (2.0 * s[a] - s[b] - s[c])
            + u2 / 3.0
            + fu[a] / rho
            + force_dev * (2.0 * fu[a] - fu[b] - fu[c]);
        if closure == MomentClosure::Consistent {
            v += inv_tau / 3.0 * (2.0 * uv[a] * uv[a] - uv[b] * uv[b] - uv[c] * uv[c]);
        }
        out[a] = v;
    }
    (rho, u_new, out)
}

/// Apply the moment-space collision to every fluid node, reading the
/// field's moments as the post-streaming state.
pub fn moment_update(mut field: LbmField, force: &[Vector3<f64>], tau: f64, closure: MomentClosure) -> LbmField {
    for n in 0..field.len() {
        if field.solid[n] {
            continue;
        }
        let (rho, u, s) = moment_update_node(field.rho[n], &field.u[n], &field.s[n], &force[n], tau, closure);
        field.rho[n] = rho;
        field.u[n] = u;
        field.s[n] = s;
    }
    field.f_current = false;
    field
}
