//! Radiomics feature extraction: 102 features over six families computed
//! on a fixed bin-width discretisation of the volume of interest.

mod catalog;
mod first_order;
mod glcm;
mod gldm;
mod glrlm;
mod glszm;
mod shape;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{VoxelBox, VoxelVolume};
use crate::roi::Voi;

pub use catalog::{catalog, catalog_tsv, family_range, Family, FeatureDef, N_FEATURES};
pub use first_order::{extract_first_order, FIRST_ORDER_NAMES};
pub use glcm::{glcm_direction_matrix, glcm_features, GLCM_NAMES};
pub use gldm::{gldm_features, gldm_matrix, GLDM_NAMES};
pub use glrlm::{glrlm_direction_matrix, glrlm_features, GLRLM_NAMES};
pub use glszm::{glszm_features, glszm_matrix, GLSZM_NAMES};
pub use shape::{extract_shape, surface_area, SHAPE_NAMES};

/// The 13 unique neighbour offsets of the 26-neighbourhood.
pub const DIRECTIONS: [[i64; 3]; 13] = [
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 1, 0],
    [1, -1, 0],
    [1, 0, 1],
    [1, 0, -1],
    [0, 1, 1],
    [0, 1, -1],
    [1, 1, 1],
    [1, 1, -1],
    [1, -1, 1],
    [1, -1, -1],
];

#[derive(Debug, Error, PartialEq)]
pub enum RadiomicsError {
    #[error("volume of interest is empty")]
    EmptyVoi,
    #[error("volume and VOI grids differ")]
    GeometryMismatch,
    #[error("bin width must be positive and finite, got {0}")]
    BinWidth(f64),
    #[error("non-finite intensity inside the VOI")]
    NonFinite,
    #[error("{0} gray levels exceed the supported maximum")]
    TooManyLevels(usize),
}

/// Where bin edges sit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BinAnchor {
    /// `floor((I - I_min) / w) + 1`
    #[default]
    Minimum,
    /// Edges on multiples of `w`: `floor(I / w) - floor(I_min / w) + 1`.
    Grid,
}

impl FromStr for BinAnchor {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "minimum" => Ok(BinAnchor::Minimum),
            "grid" => Ok(BinAnchor::Grid),
            _ => Err(format!("unknown bin anchor '{s}'")),
        }
    }
}

impl fmt::Display for BinAnchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BinAnchor::Minimum => "minimum",
            BinAnchor::Grid => "grid",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscretizationConfig {
    pub bin_width: f64,
    pub anchor: BinAnchor,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        DiscretizationConfig {
            bin_width: 4.0,
            anchor: BinAnchor::Minimum,
        }
    }
}

impl DiscretizationConfig {
    pub fn validate(&self) -> Result<(), RadiomicsError> {
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return Err(RadiomicsError::BinWidth(self.bin_width));
        }
        Ok(())
    }
}

const MAX_LEVELS: usize = 65_535;

/// Gray-level image cropped to the VOI bounding box. Level 0 marks voxels
/// outside the VOI; in-VOI levels run from 1 to `n_levels`.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretized {
    pub dims: [usize; 3],
    pub levels: Vec<u16>,
    pub n_levels: usize,
    pub n_voxels: usize,
}

impl Discretized {
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn at(&self, x: i64, y: i64, z: i64) -> u16 {
        if x < 0 || y < 0 || z < 0 {
            return 0;
        }
        let (x, y, z) = (x as usize, y as usize, z as usize);
        if x >= self.dims[0] || y >= self.dims[1] || z >= self.dims[2] {
            return 0;
        }
        self.levels[self.index(x, y, z)]
    }

    /// Number of voxels per gray level, index 0 unused.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0usize; self.n_levels + 1];
        for &l in &self.levels {
            if l > 0 {
                h[l as usize] += 1;
            }
        }
        h
    }

    /// Number of distinct levels actually present.
    pub fn occupied_levels(&self) -> usize {
        self.histogram().iter().skip(1).filter(|&&c| c > 0).count()
    }
}

fn check_inputs(volume: &VoxelVolume, voi: &Voi) -> Result<VoxelBox, RadiomicsError> {
    if !volume.grid.same_geometry(&voi.grid) || voi.mask.len() != volume.data.len() {
        return Err(RadiomicsError::GeometryMismatch);
    }
    VoxelBox::of_mask(&voi.grid, &voi.mask).ok_or(RadiomicsError::EmptyVoi)
}

/// In-VOI intensities in x-fastest scan order.
pub(crate) fn voi_intensities(volume: &VoxelVolume, voi: &Voi) -> Result<Vec<f64>, RadiomicsError> {
    check_inputs(volume, voi)?;
    let v: Vec<f64> = voi
        .mask
        .iter()
        .zip(&volume.data)
        .filter(|(&m, _)| m)
        .map(|(_, &i)| i as f64)
        .collect();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(RadiomicsError::NonFinite);
    }
    Ok(v)
}

pub(crate) fn level_of(i: f64, min: f64, cfg: &DiscretizationConfig) -> usize {
    let w = cfg.bin_width;
    match cfg.anchor {
        BinAnchor::Minimum => ((i - min) / w).floor() as usize + 1,
        BinAnchor::Grid => ((i / w).floor() - (min / w).floor()) as usize + 1,
    }
}

pub fn discretize(
    volume: &VoxelVolume,
    voi: &Voi,
    cfg: &DiscretizationConfig,
) -> Result<Discretized, RadiomicsError> {
    cfg.validate()?;
    let bx = check_inputs(volume, voi)?;
    let values = voi_intensities(volume, voi)?;
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let top = level_of(max, min, cfg);
    if top > MAX_LEVELS {
        return Err(RadiomicsError::TooManyLevels(top));
    }
    let grid = &voi.grid;
    let mut levels = Vec::with_capacity(bx.len());
    let mut n_levels = 0;
    let mut n_voxels = 0;
    for z in bx.lo[2]..bx.hi[2] {
        for y in bx.lo[1]..bx.hi[1] {
            for x in bx.lo[0]..bx.hi[0] {
                let g = grid.index(x, y, z);
                if voi.mask[g] {
                    let l = level_of(volume.data[g] as f64, min, cfg);
                    n_levels = n_levels.max(l);
                    n_voxels += 1;
                    levels.push(l as u16);
                } else {
                    levels.push(0);
                }
            }
        }
    }
    Ok(Discretized {
        dims: bx.dims(),
        levels,
        n_levels,
        n_voxels,
    })
}

/// A full 102-value feature vector in catalog order. Undefined values are
/// NaN and carry a reason.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub nan_reasons: Vec<Option<&'static str>>,
}

impl FeatureVector {
    pub fn names(&self) -> impl Iterator<Item = String> + '_ {
        catalog().iter().map(|d| d.qualified())
    }

    /// Value by qualified name, e.g. `glcm.Contrast`.
    pub fn get(&self, qualified: &str) -> Option<f64> {
        catalog()
            .iter()
            .position(|d| d.qualified() == qualified)
            .map(|i| self.values[i])
    }

    fn push_family(&mut self, values: &[f64], reason: &'static str) {
        for &v in values {
            self.values.push(v);
            self.nan_reasons.push(if v.is_nan() { Some(reason) } else { None });
        }
    }
}

/// Extracts all 102 features for one VOI.
pub fn extract_all(
    volume: &VoxelVolume,
    voi: &Voi,
    cfg: &DiscretizationConfig,
) -> Result<FeatureVector, RadiomicsError> {
    let disc = discretize(volume, voi, cfg)?;
    let mut fv = FeatureVector {
        values: Vec::with_capacity(N_FEATURES),
        nan_reasons: Vec::with_capacity(N_FEATURES),
    };
    fv.push_family(&extract_shape(voi)?, "degenerate principal axes");
    fv.push_family(&extract_first_order(volume, voi, cfg)?, "undefined intensity statistic");
    fv.push_family(&glcm_features(&disc), "no voxel pairs in any direction");
    fv.push_family(&glrlm_features(&disc), "undefined run statistic");
    fv.push_family(&glszm_features(&disc), "undefined zone statistic");
    fv.push_family(&gldm_features(&disc), "undefined dependence statistic");
    debug_assert_eq!(fv.values.len(), N_FEATURES);
    Ok(fv)
}

/// Entropy term `-p log2 p`, zero for `p <= 0`.
#[inline]
pub(crate) fn neg_plogp(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}
