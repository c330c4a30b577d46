//! Volume-of-interest manipulation: lesion aggregation, rims and
//! segmentation perturbation.

pub mod edt;
mod perturb;
mod rim;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{Grid, Lesion, LesionSet, Site, SiteScope};

pub use perturb::{gaussian_field, perturb, PerturbConfig};
pub use rim::{make_rim, make_rim_split, RIM_WIDTH_MM};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RoiError {
    #[error("no lesion in scope '{0}'")]
    NoLesion(SiteScope),
    #[error("empty volume of interest")]
    Empty,
    #[error("rim is empty (image too small for the requested band)")]
    DegenerateRim,
    #[error("perturbation failed after {attempts} attempts (lesion too small for the configuration, best Dice {best_dice:.3})")]
    PerturbationFailed { attempts: usize, best_dice: f64 },
    #[error("invalid perturbation config: {0}")]
    Config(String),
    #[error("replicate index {index} outside [0, {n})")]
    ReplicateIndex { index: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Original,
    Perturbed { seed: u64, index: usize },
    Rim,
    Merged,
    Largest,
}

/// A binary volume of interest on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Voi {
    pub grid: Grid,
    pub mask: Vec<bool>,
    pub provenance: Provenance,
}

impl Voi {
    pub fn new(grid: Grid, mask: Vec<bool>, provenance: Provenance) -> Result<Voi, RoiError> {
        if mask.len() != grid.len() || !mask.iter().any(|&m| m) {
            return Err(RoiError::Empty);
        }
        Ok(Voi {
            grid,
            mask,
            provenance,
        })
    }

    pub fn from_lesion(grid: Grid, lesion: &Lesion) -> Result<Voi, RoiError> {
        Voi::new(grid, lesion.mask.clone(), Provenance::Original)
    }

    pub fn voxel_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn volume_mm3(&self) -> f64 {
        self.voxel_count() as f64 * self.grid.voxel_volume()
    }
}

pub fn in_scope(site: Site, scope: SiteScope) -> bool {
    match scope {
        SiteScope::All => true,
        SiteScope::Omentum => site == Site::Omentum,
        SiteScope::Pelvis => site == Site::Pelvis,
    }
}

/// The in-scope lesion with maximal physical volume; ties go to the
/// lexicographically smallest id.
pub fn largest_lesion(set: &LesionSet, scope: SiteScope) -> Result<&Lesion, RoiError> {
    set.lesions
        .iter()
        .filter(|l| in_scope(l.site, scope))
        .map(|l| (l.voxel_count() as f64 * set.grid.voxel_volume(), l))
        .max_by(|(va, a), (vb, b)| va.total_cmp(vb).then_with(|| b.id.cmp(&a.id)))
        .map(|(_, l)| l)
        .ok_or(RoiError::NoLesion(scope))
}

pub fn select_largest(set: &LesionSet, scope: SiteScope) -> Result<Voi, RoiError> {
    let l = largest_lesion(set, scope)?;
    Voi::new(set.grid, l.mask.clone(), Provenance::Largest)
}

/// Voxelwise union of all in-scope lesions.
pub fn merge_lesions(set: &LesionSet, scope: SiteScope) -> Result<Voi, RoiError> {
    let mut mask = vec![false; set.grid.len()];
    let mut any = false;
    for l in set.lesions.iter().filter(|l| in_scope(l.site, scope)) {
        any = true;
        for (m, &v) in mask.iter_mut().zip(&l.mask) {
            *m |= v;
        }
    }
    if !any {
        return Err(RoiError::NoLesion(scope));
    }
    Voi::new(set.grid, mask, Provenance::Merged)
}

/// Sørensen–Dice overlap of two masks.
pub fn dice(a: &[bool], b: &[bool]) -> f64 {
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        na += x as usize;
        nb += y as usize;
        inter += (x && y) as usize;
    }
    if na + nb == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (na + nb) as f64
    }
}
