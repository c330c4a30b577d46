//! Exact Euclidean distance transform on anisotropic grids.
//!
//! Separable lower-envelope-of-parabolas algorithm (Felzenszwalb &
//! Huttenlocher), one pass per axis with the squared voxel spacing as the
//! parabola weight.

use crate::cohort::{Grid, VoxelBox};

/// Squared distance transform of a 1D sampled function `f` with parabola
/// weight `w`. Infinite entries never act as sites.
fn envelope_1d(f: &[f64], w: f64, out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k: usize = 0;
    let mut started = false;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        if !started {
            v[0] = q;
            z[0] = f64::NEG_INFINITY;
            z[1] = f64::INFINITY;
            started = true;
            continue;
        }
        let qf = q as f64;
        let mut s;
        loop {
            let p = v[k] as f64;
            s = ((f[q] + w * qf * qf) - (f[v[k]] + w * p * p)) / (2.0 * w * (qf - p));
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    if !started {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (p, o) in out.iter_mut().enumerate() {
        let pf = p as f64;
        while z[k + 1] < pf {
            k += 1;
        }
        let d = pf - v[k] as f64;
        *o = w * d * d + f[v[k]];
    }
}

/// Squared Euclidean distance (mm²) from every voxel of a `dims` lattice to
/// the nearest voxel where `sites` is true. `f64::INFINITY` if there is none.
pub fn squared_distance_to(dims: [usize; 3], spacing: [f64; 3], sites: &[bool]) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    let mut d: Vec<f64> = sites
        .iter()
        .map(|&s| if s { 0.0 } else { f64::INFINITY })
        .collect();
    let nmax = nx.max(ny).max(nz);
    let mut f = vec![0.0; nmax];
    let mut out = vec![0.0; nmax];
    let mut v = vec![0usize; nmax];
    let mut z = vec![0.0; nmax + 1];
    let strides = [1, nx, nx * ny];
    for axis in 0..3 {
        let n = dims[axis];
        let w = spacing[axis] * spacing[axis];
        let stride = strides[axis];
        let (oa, ob) = match axis {
            0 => ((ny, nx), (nz, nx * ny)),
            1 => ((nx, 1), (nz, nx * ny)),
            _ => ((nx, 1), (ny, nx)),
        };
        for b in 0..ob.0 {
            for a in 0..oa.0 {
                let base = a * oa.1 + b * ob.1;
                for i in 0..n {
                    f[i] = d[base + i * stride];
                }
                envelope_1d(&f[..n], w, &mut out[..n], &mut v[..n], &mut z[..n + 1]);
                for i in 0..n {
                    d[base + i * stride] = out[i];
                }
            }
        }
    }
    d
}

/// Signed Euclidean distance (mm) over a sub-box of the grid: negative
/// inside the mask (distance to the nearest outside voxel), positive outside
/// (distance to the nearest inside voxel). Distances are between voxel
/// centres; returned in box-local x-fastest order.
pub fn signed_distance_in_box(grid: &Grid, mask: &[bool], bx: &VoxelBox) -> Vec<f64> {
    let dims = bx.dims();
    let mut local = Vec::with_capacity(bx.len());
    for z in bx.lo[2]..bx.hi[2] {
        for y in bx.lo[1]..bx.hi[1] {
            for x in bx.lo[0]..bx.hi[0] {
                local.push(mask[grid.index(x, y, z)]);
            }
        }
    }
    let to_inside = squared_distance_to(dims, grid.spacing, &local);
    let outside: Vec<bool> = local.iter().map(|&m| !m).collect();
    let to_outside = squared_distance_to(dims, grid.spacing, &outside);
    local
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            if m {
                -to_outside[i].sqrt()
            } else {
                to_inside[i].sqrt()
            }
        })
        .collect()
}

/// Signed distance over the whole grid.
pub fn signed_distance(grid: &Grid, mask: &[bool]) -> Vec<f64> {
    let full = VoxelBox {
        lo: [0; 3],
        hi: grid.dims,
    };
    signed_distance_in_box(grid, mask, &full)
}
