//! D3Q27 velocity set.

use crate::scene::CS2;

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSpec {
    pub q: usize,
    /// Integer lattice velocities `c_i`.
    pub c: Vec<[i32; 3]>,
    pub w: Vec<f64>,
    pub cs2: f64,
    /// `opposite[i]` is the index of `-c_i`.
    pub opposite: Vec<usize>,
}

impl LatticeSpec {
    /// D3Q27 with weights 8/27, 2/27, 1/54, 1/216 by speed shell.
    /// Index 0 is the rest velocity.
    pub fn d3q27() -> Self {
        let mut c = Vec::with_capacity(27);
        for shell in 0..=3 {
            for z in -1..=1 {
                for y in -1..=1 {
                    for x in -1..=1 {
                        let v: [i32; 3] = [x, y, z];
                        if v.iter().map(|a| a * a).sum::<i32>() == shell {
                            c.push(v);
                        }
                    }
                }
            }
        }
        let w = c
            .iter()
            .map(|v| match v.iter().map(|a| a * a).sum::<i32>() {
                0 => 8.0 / 27.0,
                1 => 2.0 / 27.0,
                2 => 1.0 / 54.0,
                _ => 1.0 / 216.0,
            })
            .collect();
        let opposite = c
            .iter()
            .map(|v| c.iter().position(|o| o[0] == -v[0] && o[1] == -v[1] && o[2] == -v[2]).expect("symmetric set"))
            .collect();
        Self { q: c.len(), c, w, cs2: CS2, opposite }
    }

    #[inline]
    pub fn cf(&self, i: usize) -> [f64; 3] {
        let c = self.c[i];
        [c[0] as f64, c[1] as f64, c[2] as f64]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isotropy_up_to_second_order() {
        let l = LatticeSpec::d3q27();
        assert_eq!(l.q, 27);
        assert!((l.w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for a in 0..3 {
            let m1: f64 = (0..l.q).map(|i| l.w[i] * l.cf(i)[a]).sum();
            assert!(m1.abs() < 1e-15);
            for b in 0..3 {
                let m2: f64 = (0..l.q).map(|i| l.w[i] * l.cf(i)[a] * l.cf(i)[b]).sum();
                let expect = if a == b { l.cs2 } else { 0.0 };
                assert!((m2 - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn fourth_order_isotropy() {
        // sum w c_a c_b c_c c_d = cs^4 (d_ab d_cd + d_ac d_bd + d_ad d_bc)
        let l = LatticeSpec::d3q27();
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    for e in 0..3 {
                        let m: f64 = (0..l.q)
                            .map(|i| {
                                let v = l.cf(i);
                                l.w[i] * v[a] * v[b] * v[c] * v[e]
                            })
                            .sum();
                        let expect = l.cs2 * l.cs2 * (d(a, b) * d(c, e) + d(a, c) * d(b, e) + d(a, e) * d(b, c));
                        assert!((m - expect).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn opposites() {
        let l = LatticeSpec::d3q27();
        assert_eq!(l.c[0], [0, 0, 0]);
        for i in 0..l.q {
            let o = l.opposite[i];
            assert_eq!(l.opposite[o], i);
            assert_eq!(l.w[o], l.w[i]);
            for a in 0..3 {
                assert_eq!(l.c[o][a], -l.c[i][a]);
            }
        }
    }
}
