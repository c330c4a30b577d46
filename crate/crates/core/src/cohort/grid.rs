use serde::{Deserialize, Serialize};

/// Voxel lattice geometry shared by a CT volume and its masks.
///
/// Voxels are stored x-fastest: `index = x + nx * (y + ny * z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: [usize; 3],
    /// Physical voxel size in mm.
    pub spacing: [f64; 3],
    /// Physical position of voxel (0,0,0) in mm.
    pub origin: [f64; 3],
}

impl Grid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Self {
        Grid {
            dims,
            spacing,
            origin,
        }
    }

    pub fn isotropic(dims: [usize; 3], spacing: f64) -> Self {
        Grid::new(dims, [spacing; 3], [0.0; 3])
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// Index of the voxel at `c + offset`, or `None` when it leaves the grid.
    #[inline]
    pub fn offset(&self, c: [usize; 3], d: [i64; 3]) -> Option<usize> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let v = c[a] as i64 + d[a];
            if v < 0 || v >= self.dims[a] as i64 {
                return None;
            }
            out[a] = v as usize;
        }
        Some(self.index(out[0], out[1], out[2]))
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    /// Checks the geometry invariants: positive dims and spacing.
    pub fn validate(&self) -> Result<(), String> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(format!("zero dimension in {:?}", self.dims));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err("nonpositive spacing".to_string());
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err("non-finite origin".to_string());
        }
        Ok(())
    }

    /// Exact geometric equality; masks are never resampled onto another grid.
    pub fn same_geometry(&self, other: &Grid) -> bool {
        self.dims == other.dims && self.spacing == other.spacing && self.origin == other.origin
    }
}

/// Inclusive-exclusive axis-aligned voxel box `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoxelBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl VoxelBox {
    pub fn dims(&self) -> [usize; 3] {
        [
            self.hi[0] - self.lo[0],
            self.hi[1] - self.lo[1],
            self.hi[2] - self.lo[2],
        ]
    }

    pub fn len(&self) -> usize {
        let d = self.dims();
        d[0] * d[1] * d[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grows the box by `margin[a]` voxels per side, clipped to `grid`.
    pub fn expand(&self, margin: [usize; 3], grid: &Grid) -> VoxelBox {
        let mut lo = [0; 3];
        let mut hi = [0; 3];
        for a in 0..3 {
            lo[a] = self.lo[a].saturating_sub(margin[a]);
            hi[a] = (self.hi[a] + margin[a]).min(grid.dims[a]);
        }
        VoxelBox { lo, hi }
    }

    /// Bounding box of all set voxels, `None` if the mask is empty.
    pub fn of_mask(grid: &Grid, mask: &[bool]) -> Option<VoxelBox> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for (i, &m) in mask.iter().enumerate() {
            if m {
                any = true;
                let c = grid.coords(i);
                for a in 0..3 {
                    lo[a] = lo[a].min(c[a]);
                    hi[a] = hi[a].max(c[a] + 1);
                }
            }
        }
        any.then_some(VoxelBox { lo, hi })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_coords_roundtrip() {
        let g = Grid::isotropic([3, 4, 5], 1.0);
        for i in 0..g.len() {
            let c = g.coords(i);
            assert_eq!(g.index(c[0], c[1], c[2]), i);
        }
    }

    #[test]
    fn offset_clips_at_border() {
        let g = Grid::isotropic([2, 2, 2], 1.0);
        assert_eq!(g.offset([0, 0, 0], [-1, 0, 0]), None);
        assert_eq!(g.offset([0, 0, 0], [1, 1, 1]), Some(7));
    }

    #[test]
    fn validate_rejects_bad_spacing() {
        let g = Grid::new([2, 2, 1], [0.0, 1.0, 1.0], [0.0; 3]);
        assert_eq!(g.validate().unwrap_err(), "nonpositive spacing");
    }
}
