//! Node indexing shared by the MPM background grid and the lattice.
//!
//! Nodes are stored x-fastest: `index = x + nx * (y + ny * z)`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridDims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl GridDims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self { nx, ny, nz }
    }

    pub fn cubic(n: usize) -> Self {
        Self::new(n, n, n)
    }

    pub fn from_array(res: [usize; 3]) -> Self {
        Self::new(res[0], res[1], res[2])
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.nx;
        let yz = index / self.nx;
        [x, yz % self.ny, yz / self.ny]
    }

    /// Index of a signed coordinate, or `None` when it falls outside the grid.
    #[inline]
    pub fn checked_index(&self, c: [i64; 3]) -> Option<usize> {
        let dims = self.as_array();
        for d in 0..3 {
            if c[d] < 0 || c[d] as usize >= dims[d] {
                return None;
            }
        }
        Some(self.index(c[0] as usize, c[1] as usize, c[2] as usize))
    }

    pub fn iter_coords(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        (0..self.len()).map(move |i| self.coords(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_and_coords_are_inverse() {
        let dims = GridDims::new(3, 4, 5);
        for i in 0..dims.len() {
            let [x, y, z] = dims.coords(i);
            assert_eq!(dims.index(x, y, z), i);
        }
        assert_eq!(dims.index(1, 0, 0), 1);
        assert_eq!(dims.index(0, 1, 0), 3);
        assert_eq!(dims.index(0, 0, 1), 12);
    }

    #[test]
    fn checked_index_rejects_outside() {
        let dims = GridDims::cubic(4);
        assert_eq!(dims.checked_index([-1, 0, 0]), None);
        assert_eq!(dims.checked_index([0, 4, 0]), None);
        assert_eq!(dims.checked_index([3, 3, 3]), Some(63));
    }
}
