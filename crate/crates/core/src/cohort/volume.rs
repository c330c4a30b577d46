use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::grid::Grid;
use super::CohortError;

/// A CT image in Hounsfield units on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelVolume {
    pub grid: Grid,
    pub data: Vec<f32>,
}

impl VoxelVolume {
    pub fn new(grid: Grid, data: Vec<f32>) -> Result<Self, CohortError> {
        grid.validate().map_err(CohortError::Invalid)?;
        if data.len() != grid.len() {
            return Err(CohortError::Invalid(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                grid.dims
            )));
        }
        Ok(VoxelVolume { grid, data })
    }

    #[inline]
    pub fn at(&self, idx: usize) -> f64 {
        self.data[idx] as f64
    }
}

/// Anatomic site tag of a lesion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Site {
    Omentum,
    Pelvis,
    Other,
}

impl Site {
    pub fn as_str(&self) -> &'static str {
        match self {
            Site::Omentum => "omentum",
            Site::Pelvis => "pelvis",
            Site::Other => "other",
        }
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Site {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "omentum" => Ok(Site::Omentum),
            "pelvis" => Ok(Site::Pelvis),
            "other" => Ok(Site::Other),
            _ => Err(format!("unknown site '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lesion {
    pub id: String,
    pub site: Site,
    pub mask: Vec<bool>,
}

impl Lesion {
    pub fn voxel_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Labeled lesion masks sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LesionSet {
    pub grid: Grid,
    pub lesions: Vec<Lesion>,
}

impl LesionSet {
    /// Validates masks; overlapping lesions are accepted with a warning.
    pub fn new(grid: Grid, lesions: Vec<Lesion>) -> Result<Self, CohortError> {
        grid.validate().map_err(CohortError::Invalid)?;
        let mut seen = std::collections::HashSet::new();
        for l in &lesions {
            if l.mask.len() != grid.len() {
                return Err(CohortError::Invalid(format!(
                    "lesion '{}' mask length {} does not match grid",
                    l.id,
                    l.mask.len()
                )));
            }
            if !l.mask.iter().any(|&m| m) {
                return Err(CohortError::Invalid(format!("lesion '{}' is empty", l.id)));
            }
            if l.id.is_empty() || l.id.chars().any(char::is_whitespace) {
                return Err(CohortError::Invalid(format!("invalid lesion id '{}'", l.id)));
            }
            if !seen.insert(l.id.clone()) {
                return Err(CohortError::Invalid(format!("duplicate lesion id '{}'", l.id)));
            }
        }
        let set = LesionSet { grid, lesions };
        let overlap = set.overlap_voxels();
        if overlap > 0 {
            log::warn!("{overlap} voxels are claimed by more than one lesion; union semantics apply");
        }
        Ok(set)
    }

    /// Number of voxels covered by two or more lesions.
    pub fn overlap_voxels(&self) -> usize {
        (0..self.grid.len())
            .filter(|&i| self.lesions.iter().filter(|l| l.mask[i]).count() > 1)
            .count()
    }

    /// Checks that this set can be paired with `volume` without resampling.
    pub fn check_pairing(&self, volume: &VoxelVolume) -> Result<(), CohortError> {
        if !self.grid.same_geometry(&volume.grid) {
            return Err(CohortError::GeometryMismatch {
                volume: volume.grid.dims,
                mask: self.grid.dims,
            });
        }
        Ok(())
    }

    /// Physical volume of the union of all lesions, in mm³.
    pub fn total_volume_mm3(&self) -> f64 {
        let n = (0..self.grid.len())
            .filter(|&i| self.lesions.iter().any(|l| l.mask[i]))
            .count();
        n as f64 * self.grid.voxel_volume()
    }
}
