//! Randomised contour perturbation that mimics inter-reader variability.
//!
//! A smooth Gaussian random field `g` (unit standard deviation, correlation
//! length set by the coarse lattice pitch) displaces the boundary along the
//! signed distance: `perturbed = { x : sdf(x) <= g(x) * max_displacement }`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::edt::signed_distance_in_box;
use super::{dice, Provenance, RoiError, Voi};
use crate::cohort::{Grid, VoxelBox};
use crate::seed;

const MAX_RETRIES: usize = 5;
/// Field excursions beyond this many standard deviations are truncated by
/// the working box.
const FIELD_REACH_SD: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbConfig {
    pub n_replicates: usize,
    pub max_displacement_mm: f64,
    pub correlation_length_mm: f64,
    pub seed: u64,
    pub dice_floor: f64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            n_replicates: 10,
            max_displacement_mm: 2.0,
            correlation_length_mm: 10.0,
            seed: 0,
            dice_floor: 0.85,
        }
    }
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<(), RoiError> {
        if self.n_replicates == 0 {
            return Err(RoiError::Config("n_replicates must be positive".into()));
        }
        if !(self.max_displacement_mm >= 0.0) {
            return Err(RoiError::Config("max_displacement_mm must be nonnegative".into()));
        }
        if !(self.correlation_length_mm > 0.0) {
            return Err(RoiError::Config("correlation_length_mm must be positive".into()));
        }
        if self.max_displacement_mm >= self.correlation_length_mm {
            return Err(RoiError::Config(
                "max_displacement_mm must be smaller than correlation_length_mm".into(),
            ));
        }
        if !(self.dice_floor > 0.0 && self.dice_floor < 1.0) {
            return Err(RoiError::Config("dice_floor must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// Smooth zero-mean, unit-variance random field sampled on the voxels of
/// `bx`: white noise on a lattice of pitch `pitch_mm`, tricubically
/// interpolated and standardised over the box. Box-local x-fastest order.
pub fn gaussian_field(grid: &Grid, bx: &VoxelBox, pitch_mm: f64, stream: u64) -> Vec<f64> {
    let dims = bx.dims();
    let mut nodes_n = [0usize; 3];
    for a in 0..3 {
        let extent = (dims[a].max(1) - 1) as f64 * grid.spacing[a];
        nodes_n[a] = (extent / pitch_mm).floor() as usize + 4;
    }
    let mut rng = seed::rng(stream);
    let nodes: Vec<f64> = (0..nodes_n[0] * nodes_n[1] * nodes_n[2])
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let node = |i: usize, j: usize, k: usize| nodes[i + nodes_n[0] * (j + nodes_n[1] * k)];

    // per-axis (base node, weights) for every voxel coordinate
    let axis_weights: Vec<Vec<(usize, [f64; 4])>> = (0..3)
        .map(|a| {
            (0..dims[a])
                .map(|p| {
                    let u = p as f64 * grid.spacing[a] / pitch_mm + 1.0;
                    let i0 = u.floor();
                    (i0 as usize - 1, catmull_rom(u - i0))
                })
                .collect()
        })
        .collect();

    // separable interpolation: along x, then y, then z
    let [nx, ny, nz] = dims;
    let mut along_x = vec![0.0; nx * nodes_n[1] * nodes_n[2]];
    for k in 0..nodes_n[2] {
        for j in 0..nodes_n[1] {
            for (x, (kx, wx)) in axis_weights[0].iter().enumerate() {
                along_x[x + nx * (j + nodes_n[1] * k)] = (0..4).map(|a| wx[a] * node(kx + a, j, k)).sum();
            }
        }
    }
    let mut along_y = vec![0.0; nx * ny * nodes_n[2]];
    for k in 0..nodes_n[2] {
        for (y, (ky, wy)) in axis_weights[1].iter().enumerate() {
            for x in 0..nx {
                along_y[x + nx * (y + ny * k)] = (0..4).map(|b| wy[b] * along_x[x + nx * (ky + b + nodes_n[1] * k)]).sum();
            }
        }
    }
    let mut field = vec![0.0; nx * ny * nz];
    for (z, (kz, wz)) in axis_weights[2].iter().enumerate() {
        for y in 0..ny {
            for x in 0..nx {
                field[x + nx * (y + ny * z)] = (0..4).map(|c| wz[c] * along_y[x + nx * (y + ny * (kz + c))]).sum();
            }
        }
    }
    let n = field.len() as f64;
    let mean = field.iter().sum::<f64>() / n;
    let var = field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd > 0.0 {
        field.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    } else {
        field.iter_mut().for_each(|v| *v = 0.0);
    }
    field
}

/// Draws perturbation replicate `replicate_index` of `voi`. Deterministic in
/// `(cfg.seed, replicate_index)`. If the Dice overlap with the original
/// falls below `cfg.dice_floor` the amplitude is halved and a new field is
/// drawn, up to five times.
pub fn perturb(voi: &Voi, cfg: &PerturbConfig, replicate_index: usize) -> Result<Voi, RoiError> {
    cfg.validate()?;
    if replicate_index >= cfg.n_replicates {
        return Err(RoiError::ReplicateIndex {
            index: replicate_index,
            n: cfg.n_replicates,
        });
    }
    let grid = &voi.grid;
    let bbox = VoxelBox::of_mask(grid, &voi.mask).ok_or(RoiError::Empty)?;
    let reach = FIELD_REACH_SD * cfg.max_displacement_mm;
    let mut margin = [0usize; 3];
    for a in 0..3 {
        margin[a] = (reach / grid.spacing[a]).ceil() as usize + 1;
    }
    let bx = bbox.expand(margin, grid);
    let sdf = signed_distance_in_box(grid, &voi.mask, &bx);
    let replicate_stream = seed::mix(cfg.seed, replicate_index as u64);

    let mut amplitude = cfg.max_displacement_mm;
    let mut best_dice = 0.0f64;
    for attempt in 0..=MAX_RETRIES {
        let mut mask = vec![false; grid.len()];
        let mut any = false;
        if amplitude == 0.0 {
            for (m, &o) in mask.iter_mut().zip(&voi.mask) {
                *m = o;
            }
            any = true;
        } else {
            let field =
                gaussian_field(grid, &bx, cfg.correlation_length_mm, seed::mix(replicate_stream, attempt as u64));
            let mut k = 0;
            for z in bx.lo[2]..bx.hi[2] {
                for y in bx.lo[1]..bx.hi[1] {
                    for x in bx.lo[0]..bx.hi[0] {
                        if sdf[k] <= field[k] * amplitude {
                            mask[grid.index(x, y, z)] = true;
                            any = true;
                        }
                        k += 1;
                    }
                }
            }
        }
        if any {
            let d = dice(&voi.mask, &mask);
            best_dice = best_dice.max(d);
            if d >= cfg.dice_floor {
                return Ok(Voi {
                    grid: *grid,
                    mask,
                    provenance: Provenance::Perturbed {
                        seed: cfg.seed,
                        index: replicate_index,
                    },
                });
            }
        }
        amplitude /= 2.0;
    }
    Err(RoiError::PerturbationFailed {
        attempts: MAX_RETRIES + 1,
        best_dice,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roi::edt::signed_distance;

    fn ball(n: usize, r: f64) -> Voi {
        let g = Grid::isotropic([n, n, n], 1.0);
        let c = (n / 2) as f64;
        let mask = (0..g.len())
            .map(|i| {
                let p = g.coords(i);
                (0..3).map(|a| (p[a] as f64 - c).powi(2)).sum::<f64>().sqrt() <= r
            })
            .collect();
        Voi::new(g, mask, Provenance::Original).unwrap()
    }

    #[test]
    fn zero_amplitude_is_identity() {
        let voi = ball(20, 6.0);
        let cfg = PerturbConfig { max_displacement_mm: 0.0, ..Default::default() };
        for i in 0..3 {
            assert_eq!(perturb(&voi, &cfg, i).unwrap().mask, voi.mask);
        }
    }

    #[test]
    fn deterministic_per_seed_and_index() {
        let voi = ball(24, 7.0);
        let cfg = PerturbConfig { seed: 42, ..Default::default() };
        let a = perturb(&voi, &cfg, 3).unwrap();
        let b = perturb(&voi, &cfg, 3).unwrap();
        assert_eq!(a, b);
        let c = perturb(&voi, &cfg, 4).unwrap();
        assert_ne!(a.mask, c.mask);
    }

    #[test]
    fn field_is_standardised() {
        let g = Grid::isotropic([30, 30, 30], 1.0);
        let bx = VoxelBox { lo: [0; 3], hi: [30; 3] };
        let f = gaussian_field(&g, &bx, 10.0, 9);
        let n = f.len() as f64;
        let mean = f.iter().sum::<f64>() / n;
        let var = f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9);
        // smoothness: neighbouring voxels are strongly correlated
        let mut num = 0.0;
        for i in 0..f.len() - 1 {
            num += f[i] * f[i + 1];
        }
        assert!(num / n > 0.8);
    }

    #[test]
    fn rejects_invalid_config() {
        let voi = ball(10, 3.0);
        let cfg = PerturbConfig { max_displacement_mm: 12.0, ..Default::default() };
        assert!(matches!(perturb(&voi, &cfg, 0), Err(RoiError::Config(_))));
        assert!(matches!(
            perturb(&voi, &PerturbConfig::default(), 10),
            Err(RoiError::ReplicateIndex { .. })
        ));
    }

    #[test]
    fn ball_dice_and_displacement_statistics() {
        let voi = ball(44, 15.0);
        let sdf = signed_distance(&voi.grid, &voi.mask);
        let cfg = PerturbConfig { seed: 2024, n_replicates: 100, ..Default::default() };
        let vol0 = voi.voxel_count() as f64;
        for i in 0..100 {
            let p = perturb(&voi, &cfg, i).unwrap();
            let d = dice(&voi.mask, &p.mask);
            assert!((0.85..=0.995).contains(&d), "dice {d}");
            // mean boundary displacement: |sdf| of voxels that changed label, over the
            // boundary band, stays within the configured displacement
            let changed: Vec<f64> = (0..sdf.len())
                .filter(|&k| voi.mask[k] != p.mask[k])
                .map(|k| sdf[k].abs())
                .collect();
            let mean_disp = changed.iter().sum::<f64>() / changed.len().max(1) as f64;
            assert!(mean_disp <= 2.0, "mean displacement {mean_disp}");
            let dv = (p.voxel_count() as f64 - vol0).abs() / vol0;
            assert!(dv <= 3.0 * 2.0 * 3.0 / 15.0);
        }
    }
}
