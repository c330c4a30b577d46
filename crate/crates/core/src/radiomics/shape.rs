//! Voxel-based shape descriptors.
//!
//! Surface area is estimated from the boundary faces of the voxel set. A
//! face perpendicular to axis `a` is the projection onto that plane of a
//! surface patch with unit normal `n`; summed over the three face
//! orientations a patch of area `A` produces faces of total area
//! `A * |n|_1`. Each face therefore contributes `face_area / |n|_1`, with
//! `n` estimated from the heights of same-orientation faces in the
//! neighbouring columns. Flat faces (`n` on an axis) count exactly.

use nalgebra::{Matrix3, SymmetricEigen};

use super::RadiomicsError;
use crate::cohort::VoxelBox;
use crate::roi::Voi;

pub const SHAPE_NAMES: [&str; 14] = [
    "VoxelVolume",
    "SurfaceArea",
    "SurfaceVolumeRatio",
    "Sphericity",
    "Compactness1",
    "Compactness2",
    "SphericalDisproportion",
    "Maximum3DDiameter",
    "Maximum2DDiameterSlice",
    "MajorAxisLength",
    "MinorAxisLength",
    "LeastAxisLength",
    "Elongation",
    "Flatness",
];

/// Largest height offset searched when matching faces in neighbouring
/// columns; steeper slopes count as flat.
pub const FACE_SEARCH: i64 = 3;

/// Covariance eigenvalues at or below this fraction of the largest are zero.
const EIGEN_ROUNDOFF: f64 = 1e-12;

struct BoxMask {
    dims: [usize; 3],
    mask: Vec<bool>,
}

impl BoxMask {
    fn from_voi(voi: &Voi) -> Option<BoxMask> {
        let bx = VoxelBox::of_mask(&voi.grid, &voi.mask)?;
        let mut mask = Vec::with_capacity(bx.len());
        for z in bx.lo[2]..bx.hi[2] {
            for y in bx.lo[1]..bx.hi[1] {
                for x in bx.lo[0]..bx.hi[0] {
                    mask.push(voi.mask[voi.grid.index(x, y, z)]);
                }
            }
        }
        Some(BoxMask { dims: bx.dims(), mask })
    }

    #[inline]
    fn inside(&self, p: [i64; 3]) -> bool {
        if p.iter().zip(&self.dims).any(|(&c, &n)| c < 0 || c >= n as i64) {
            return false;
        }
        let [x, y, z] = [p[0] as usize, p[1] as usize, p[2] as usize];
        self.mask[x + self.dims[0] * (y + self.dims[1] * z)]
    }

    fn points(&self) -> Vec<[i64; 3]> {
        let mut pts = Vec::new();
        for z in 0..self.dims[2] {
            for y in 0..self.dims[1] {
                for x in 0..self.dims[0] {
                    if self.mask[x + self.dims[0] * (y + self.dims[1] * z)] {
                        pts.push([x as i64, y as i64, z as i64]);
                    }
                }
            }
        }
        pts
    }
}

#[inline]
fn add(p: [i64; 3], axis: usize, d: i64) -> [i64; 3] {
    let mut q = p;
    q[axis] += d;
    q
}

fn face_at(m: &BoxMask, p: [i64; 3], axis: usize, sign: i64) -> bool {
    m.inside(p) && !m.inside(add(p, axis, sign))
}

/// Height offset of the matching face in column `p`, nearest first, lower
/// offset on ties.
fn column_height(m: &BoxMask, p: [i64; 3], axis: usize, sign: i64) -> Option<i64> {
    if face_at(m, p, axis, sign) {
        return Some(0);
    }
    for h in 1..=FACE_SEARCH {
        for hh in [-h, h] {
            if face_at(m, add(p, axis, hh), axis, sign) {
                return Some(hh);
            }
        }
    }
    None
}

fn area_of(m: &BoxMask, spacing: [f64; 3]) -> f64 {
    let mut area = 0.0;
    for p in m.points() {
        for axis in 0..3 {
            for sign in [-1i64, 1] {
                if m.inside(add(p, axis, sign)) {
                    continue;
                }
                let others = [(axis + 1) % 3, (axis + 2) % 3];
                let mut l1 = 1.0;
                let mut l2 = 1.0;
                for &b in &others {
                    let fwd = column_height(m, add(p, b, 1), axis, sign);
                    let back = column_height(m, add(p, b, -1), axis, sign);
                    let slope = match (back, fwd) {
                        (Some(hb), Some(hf)) => (hf - hb) as f64 / 2.0,
                        (None, Some(hf)) => hf as f64,
                        (Some(hb), None) => -hb as f64,
                        (None, None) => 0.0,
                    };
                    let g = slope * spacing[axis] / spacing[b];
                    l1 += g.abs();
                    l2 += g * g;
                }
                let face = spacing[others[0]] * spacing[others[1]];
                area += face * l2.sqrt() / l1;
            }
        }
    }
    area
}

/// Surface area estimate (mm²) of a VOI.
pub fn surface_area(voi: &Voi) -> f64 {
    match BoxMask::from_voi(voi) {
        Some(m) => area_of(&m, voi.grid.spacing),
        None => 0.0,
    }
}

/// Keeps points that are extremal along every axis-parallel line through
/// them; all others lie on a segment between two set points and can never
/// realise a maximum distance.
fn line_extremes(pts: &[[i64; 3]], axes: &[usize]) -> Vec<[i64; 3]> {
    use std::collections::HashMap;
    let mut keep = vec![true; pts.len()];
    for &a in axes {
        let mut range: HashMap<[i64; 3], (i64, i64)> = HashMap::new();
        for p in pts {
            let mut key = *p;
            key[a] = 0;
            let e = range.entry(key).or_insert((p[a], p[a]));
            e.0 = e.0.min(p[a]);
            e.1 = e.1.max(p[a]);
        }
        for (k, p) in pts.iter().enumerate() {
            let mut key = *p;
            key[a] = 0;
            let (lo, hi) = range[&key];
            if p[a] != lo && p[a] != hi {
                keep[k] = false;
            }
        }
    }
    pts.iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| *p).collect()
}

fn max_distance(pts: &[[i64; 3]], spacing: [f64; 3]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let mut d2 = 0.0;
            for a in 0..3 {
                let d = (pts[i][a] - pts[j][a]) as f64 * spacing[a];
                d2 += d * d;
            }
            best = best.max(d2);
        }
    }
    best.sqrt()
}

pub fn extract_shape(voi: &Voi) -> Result<[f64; 14], RadiomicsError> {
    let m = BoxMask::from_voi(voi).ok_or(RadiomicsError::EmptyVoi)?;
    let sp = voi.grid.spacing;
    let pts = m.points();
    let n = pts.len() as f64;
    let volume = n * voi.grid.voxel_volume();
    let area = area_of(&m, sp);

    let sphere = (36.0 * std::f64::consts::PI * volume * volume).cbrt();
    let sphericity = sphere / area;
    let compactness1 = volume / (std::f64::consts::PI.sqrt() * area.powf(1.5));
    let compactness2 = 36.0 * std::f64::consts::PI * volume * volume / area.powi(3);

    let hull = line_extremes(&pts, &[0, 1, 2]);
    let max3d = max_distance(&hull, sp);
    let mut max2d = 0.0f64;
    let slice_pts = line_extremes(&pts, &[0, 1]);
    for z in 0..m.dims[2] as i64 {
        let s: Vec<[i64; 3]> = slice_pts.iter().filter(|p| p[2] == z).cloned().collect();
        max2d = max2d.max(max_distance(&s, sp));
    }

    // population covariance of physical voxel centres
    let mut mean = [0.0; 3];
    for p in &pts {
        for a in 0..3 {
            mean[a] += p[a] as f64 * sp[a];
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    let mut cov = Matrix3::<f64>::zeros();
    for p in &pts {
        let d: Vec<f64> = (0..3).map(|a| p[a] as f64 * sp[a] - mean[a]).collect();
        for r in 0..3 {
            for c in 0..3 {
                cov[(r, c)] += d[r] * d[c];
            }
        }
    }
    cov /= n;
    let mut ev: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().cloned().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    // solver round-off on flat or linear VOIs would survive the square root
    let floor = EIGEN_ROUNDOFF * ev[0].abs();
    ev.iter_mut().for_each(|l| *l = if *l <= floor { 0.0 } else { *l });
    let (major, minor, least) = (ev[0], ev[1], ev[2]);
    let (elongation, flatness) = if major > 0.0 {
        ((minor / major).sqrt(), (least / major).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };

    Ok([
        volume,
        area,
        area / volume,
        sphericity,
        compactness1,
        compactness2,
        area / sphere,
        max3d,
        max2d,
        4.0 * major.sqrt(),
        4.0 * minor.sqrt(),
        4.0 * least.sqrt(),
        elongation,
        flatness,
    ])
}
