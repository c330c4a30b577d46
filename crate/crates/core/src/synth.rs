//! Synthetic cohorts with planted structure.
//!
//! Every lesion is an ellipsoid filled with a textured intensity field. The two
//! classes differ in the grain of that texture: the fraction `a` of white
//! noise mixed into a smooth field of the same variance. Fine grain raises
//! neighbour-to-neighbour contrast without moving the histogram, so the
//! GLCM family separates the classes and stays stable under boundary
//! perturbation. Class-1 lesions additionally carry a bright outer shell;
//! the shell signal lives on the boundary and is degraded by perturbation.
//! Post-treatment lesions shrink by a class-dependent factor so volume,
//! diameter, CRS and RECIST labels can all encode the class.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{
    write_manifest, write_mask, write_volume, CohortError, CohortManifest, Grid, Lesion, LesionSet,
    ManifestRow, Recist, Site, Timepoint, VoxelBox, VoxelVolume,
};
use crate::model::{ResponseMetric, DIAR_THRESHOLD_PCT, VOLR_THRESHOLD_PCT};
use crate::roi::gaussian_field;
use crate::seed;

/// Distance kept between a lesion surface and the image border, in mm,
/// so rims and perturbed masks fit inside the image.
pub const BORDER_MARGIN_MM: f64 = 5.0;
/// Minimum gap between two lesion surfaces, in mm.
pub const LESION_GAP_MM: f64 = 2.0;
/// Feature driven by the texture grain and stable under perturbation.
pub const ROBUST_FEATURE: &str = "glcm.DifferenceEntropy";
/// Feature driven by the dark outer shell and degraded by perturbation.
pub const FRAGILE_FEATURE: &str = "firstorder.Variance";
const PLACEMENT_TRIES: usize = 200;
const LABEL_TRIES: usize = 50;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error(transparent)]
    Cohort(#[from] CohortError),
}

/// Generative parameters of one class. Ranges are `[lo, hi]` and sampled
/// uniformly per patient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassParams {
    /// White-noise fraction of the texture field, in `[0, 1]`.
    pub grain: [f64; 2],
    /// Intensity added to the outer shell of every lesion.
    pub shell_offset: [f64; 2],
    /// Post/pre lesion radius ratio.
    pub shrink: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_patients: usize,
    /// Target fraction of class-1 (responder) patients.
    pub class1_fraction: f64,
    pub id_prefix: String,
    pub dims: [usize; 3],
    pub spacing_mm: f64,
    pub lesion_count: [usize; 2],
    /// Major semi-axis range.
    pub radius_mm: [f64; 2],
    /// Ratio range of the two minor semi-axes to the major one.
    pub aspect: [f64; 2],
    /// Site probabilities in the order omentum, pelvis, other.
    pub site_probs: [f64; 3],
    pub background_mean: f64,
    pub background_sd: f64,
    pub lesion_mean: f64,
    /// Between-patient SD of the lesion mean intensity.
    pub lesion_mean_sd: f64,
    pub texture_sd: f64,
    /// Lattice pitch of the smooth texture component.
    pub texture_pitch_mm: f64,
    pub shell_width_mm: f64,
    /// Shell profile exponent: the offset at depth `d` is scaled by
    /// `(1 - d / shell_width_mm)^shell_power`, so 0 gives a uniform shell and
    /// larger values concentrate it on the surface.
    pub shell_power: f64,
    pub class0: ClassParams,
    pub class1: ClassParams,
    /// Metrics whose labels follow the class; the others are drawn at random.
    pub encode: Vec<ResponseMetric>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_patients: 40,
            class1_fraction: 0.5,
            id_prefix: "P".into(),
            dims: [56, 56, 40],
            spacing_mm: 1.0,
            lesion_count: [1, 2],
            radius_mm: [7.0, 10.0],
            aspect: [0.45, 1.0],
            site_probs: [0.45, 0.4, 0.15],
            background_mean: 20.0,
            background_sd: 8.0,
            lesion_mean: 100.0,
            lesion_mean_sd: 10.0,
            texture_sd: 30.0,
            texture_pitch_mm: 8.0,
            shell_width_mm: 2.0,
            shell_power: 2.0,
            class0: ClassParams { grain: [0.0, 0.65], shell_offset: [0.0, 0.0], shrink: [0.85, 1.15] },
            class1: ClassParams { grain: [0.35, 1.0], shell_offset: [-60.0, -40.0], shrink: [0.4, 0.6] },
            encode: ResponseMetric::ALL.to_vec(),
            seed: 0,
        }
    }
}

fn check_range(name: &str, r: [f64; 2], lo: f64, hi: f64) -> Result<(), SynthError> {
    if !(r[0] <= r[1] && r[0] >= lo && r[1] <= hi && r[0].is_finite() && r[1].is_finite()) {
        return Err(SynthError::Config(format!("{name} range {r:?} must be ordered within [{lo}, {hi}]")));
    }
    Ok(())
}

impl SynthConfig {
    pub fn n_class1(&self) -> usize {
        (self.n_patients as f64 * self.class1_fraction).round() as usize
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let n1 = self.n_class1();
        let n0 = self.n_patients.saturating_sub(n1);
        if n0 < 5 || n1 < 5 {
            return Err(SynthError::Config(format!("each class needs at least 5 patients (got {n0} and {n1})")));
        }
        if !(self.spacing_mm > 0.0) {
            return Err(SynthError::Config("spacing_mm must be positive".into()));
        }
        check_range("aspect", self.aspect, 0.0, 1.0)?;
        if !(self.radius_mm[0] <= self.radius_mm[1] && self.radius_mm[0] * self.aspect[0] >= 3.0 * self.spacing_mm) {
            return Err(SynthError::Config(format!(
                "radius_mm {:?} with aspect {:?} must be ordered and give semi-axes of at least 3 voxels",
                self.radius_mm, self.aspect
            )));
        }
        if self.lesion_count[0] == 0 || self.lesion_count[0] > self.lesion_count[1] {
            return Err(SynthError::Config(format!("lesion_count {:?} must be ordered and positive", self.lesion_count)));
        }
        let p = self.site_probs;
        if p.iter().any(|&v| !(v >= 0.0)) || !(p.iter().sum::<f64>() > 0.0) {
            return Err(SynthError::Config("site_probs must be nonnegative with a positive sum".into()));
        }
        for (name, c) in [("class0", &self.class0), ("class1", &self.class1)] {
            check_range(&format!("{name}.grain"), c.grain, 0.0, 1.0)?;
            check_range(&format!("{name}.shell_offset"), c.shell_offset, f64::NEG_INFINITY, f64::INFINITY)?;
            check_range(&format!("{name}.shrink"), c.shrink, 0.0, f64::INFINITY)?;
            if c.shrink[0] <= 0.0 {
                return Err(SynthError::Config(format!("{name}.shrink must be positive")));
            }
        }
        if !(self.shell_width_mm >= 0.0) || !(self.shell_power >= 0.0) || !(self.texture_pitch_mm > 0.0) || !(self.texture_sd >= 0.0) {
            return Err(SynthError::Config("shell width, texture pitch and texture sd must be valid".into()));
        }
        let extent = self.dims.iter().map(|&d| d as f64 * self.spacing_mm).fold(f64::INFINITY, f64::min);
        let need = 2.0 * (self.radius_mm[1] + BORDER_MARGIN_MM);
        if need > extent {
            return Err(SynthError::Config(format!(
                "a lesion of radius {} mm plus a {BORDER_MARGIN_MM} mm border needs {need} mm but the volume spans {extent} mm",
                self.radius_mm[1]
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> Grid {
        Grid::isotropic(self.dims, self.spacing_mm)
    }
}

/// Axis-aligned ellipsoidal lesion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipsoid {
    pub center_mm: [f64; 3],
    pub semi_axes_mm: [f64; 3],
    pub site: Site,
}

impl Ellipsoid {
    pub fn major_mm(&self) -> f64 {
        self.semi_axes_mm.iter().cloned().fold(0.0, f64::max)
    }

    fn scaled(&self, s: f64) -> Ellipsoid {
        Ellipsoid { semi_axes_mm: self.semi_axes_mm.map(|a| a * s), ..*self }
    }

    /// Normalised radius of `p` (1 on the surface) and the distance from `p`
    /// to the surface along the ray from the centre.
    fn locate(&self, p: [f64; 3]) -> (f64, f64) {
        let d: [f64; 3] = [0, 1, 2].map(|a| p[a] - self.center_mm[a]);
        let rho = (0..3).map(|a| (d[a] / self.semi_axes_mm[a]).powi(2)).sum::<f64>().sqrt();
        let len = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let depth = if rho > 0.0 { len * (1.0 / rho - 1.0) } else { self.major_mm() };
        (rho, depth)
    }
}

/// One timepoint: image, lesion masks and the summed longest diameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub volume: VoxelVolume,
    pub lesions: LesionSet,
    pub sld_mm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPatient {
    pub id: String,
    pub class: bool,
    pub grain: f64,
    pub shell_offset: f64,
    pub lesions: Vec<Ellipsoid>,
    pub pre: Scan,
    pub post: Scan,
    pub crs: u8,
    pub recist: Recist,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCohort {
    pub patients: Vec<SynthPatient>,
}

fn uniform<R: Rng>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..r[1])
    } else {
        r[0]
    }
}

fn draw_site<R: Rng>(rng: &mut R, p: [f64; 3]) -> Site {
    let u = rng.random::<f64>() * p.iter().sum::<f64>();
    if u < p[0] {
        Site::Omentum
    } else if u < p[0] + p[1] {
        Site::Pelvis
    } else {
        Site::Other
    }
}

fn place_lesions<R: Rng>(cfg: &SynthConfig, rng: &mut R, id: &str) -> Result<Vec<Ellipsoid>, SynthError> {
    let count = rng.random_range(cfg.lesion_count[0]..=cfg.lesion_count[1]);
    let mut wanted: Vec<([f64; 3], Site)> = (0..count)
        .map(|_| {
            let r = uniform(rng, cfg.radius_mm);
            let mut axes = [r, r * uniform(rng, cfg.aspect), r * uniform(rng, cfg.aspect)];
            axes.shuffle(rng);
            (axes, draw_site(rng, cfg.site_probs))
        })
        .collect();
    wanted.sort_by(|a, b| b.0[0].max(b.0[1]).max(b.0[2]).total_cmp(&a.0[0].max(a.0[1]).max(a.0[2])));
    let extent: Vec<f64> = cfg.dims.iter().map(|&d| (d as f64 - 1.0) * cfg.spacing_mm).collect();
    // whole layouts are redrawn so an unlucky first lesion cannot block the rest
    'layout: for _ in 0..PLACEMENT_TRIES {
        let mut balls: Vec<Ellipsoid> = Vec::with_capacity(count);
        for &(semi_axes_mm, site) in &wanted {
            let radius = semi_axes_mm.iter().cloned().fold(0.0, f64::max);
            let lo = radius + BORDER_MARGIN_MM;
            let c: Vec<f64> =
                extent.iter().map(|&e| if e - lo > lo { rng.random_range(lo..e - lo) } else { e / 2.0 }).collect();
            let center = [c[0], c[1], c[2]];
            let clear = balls.iter().all(|b| {
                let d = (0..3).map(|a| (b.center_mm[a] - center[a]).powi(2)).sum::<f64>().sqrt();
                d >= b.major_mm() + radius + LESION_GAP_MM
            });
            if !clear {
                continue 'layout;
            }
            balls.push(Ellipsoid { center_mm: center, semi_axes_mm, site });
        }
        return Ok(balls);
    }
    Err(SynthError::Config(format!(
        "could not place {count} non-overlapping lesions for patient {id}; enlarge dims or reduce lesion_count"
    )))
}

fn position(grid: &Grid, c: [usize; 3]) -> [f64; 3] {
    [0, 1, 2].map(|a| c[a] as f64 * grid.spacing[a])
}

fn lesion_mask(grid: &Grid, e: &Ellipsoid) -> Vec<bool> {
    let mut mask = vec![false; grid.len()];
    // a point with normalised radius <= 1 lies within one semi-axis of the centre on every axis
    let range = |a: usize| {
        let lo = ((e.center_mm[a] - e.semi_axes_mm[a]) / grid.spacing[a]).floor().max(0.0) as usize;
        let hi = (((e.center_mm[a] + e.semi_axes_mm[a]) / grid.spacing[a]).ceil() as usize + 1).min(grid.dims[a]);
        lo..hi
    };
    for z in range(2) {
        for y in range(1) {
            for x in range(0) {
                if e.locate(position(grid, [x, y, z])).0 <= 1.0 {
                    mask[grid.index(x, y, z)] = true;
                }
            }
        }
    }
    mask
}

/// Renders image and masks for a set of balls.
fn render(cfg: &SynthConfig, balls: &[Ellipsoid], grain: f64, shell_offset: f64, stream: u64) -> Result<Scan, SynthError> {
    let grid = cfg.grid();
    let mut rng = seed::rng(stream);
    let bg = Normal::new(cfg.background_mean, cfg.background_sd.max(0.0)).map_err(|e| SynthError::Config(e.to_string()))?;
    let mut data: Vec<f64> = (0..grid.len()).map(|_| bg.sample(&mut rng)).collect();
    let lesion_mean = cfg.lesion_mean + cfg.lesion_mean_sd * rng.sample::<f64, _>(StandardNormal);
    let smooth_w = (1.0 - grain * grain).max(0.0).sqrt();
    let mut lesions = Vec::with_capacity(balls.len());
    for (k, b) in balls.iter().enumerate() {
        let mask = lesion_mask(&grid, b);
        let Some(bx) = VoxelBox::of_mask(&grid, &mask) else {
            continue;
        };
        let smooth = gaussian_field(&grid, &bx, cfg.texture_pitch_mm, seed::mix(stream, k as u64));
        let mut j = 0;
        for z in bx.lo[2]..bx.hi[2] {
            for y in bx.lo[1]..bx.hi[1] {
                for x in bx.lo[0]..bx.hi[0] {
                    let i = grid.index(x, y, z);
                    if mask[i] {
                        let white: f64 = rng.sample(StandardNormal);
                        let depth = b.locate(position(&grid, [x, y, z])).1;
                        let shell = if depth < cfg.shell_width_mm {
                            shell_offset * (1.0 - depth / cfg.shell_width_mm).powf(cfg.shell_power)
                        } else {
                            0.0
                        };
                        data[i] = lesion_mean + cfg.texture_sd * (smooth_w * smooth[j] + grain * white) + shell;
                    }
                    j += 1;
                }
            }
        }
        lesions.push(Lesion { id: format!("L{}", k + 1), site: b.site, mask });
    }
    let volume = VoxelVolume::new(grid, data.into_iter().map(|v| v as f32).collect())?;
    let lesions = LesionSet::new(grid, lesions)?;
    let sld_mm = balls.iter().map(|b| 2.0 * b.major_mm()).sum();
    Ok(Scan { volume, lesions, sld_mm })
}

fn pct_reduction(pre: f64, post: f64) -> f64 {
    100.0 * (pre - post) / pre
}

fn generate_patient(cfg: &SynthConfig, index: usize, class: bool) -> Result<SynthPatient, SynthError> {
    let id = format!("{}{:04}", cfg.id_prefix, index + 1);
    let stream = seed::mix_str(cfg.seed, &id);
    let mut rng = seed::rng(stream);
    let params = if class { &cfg.class1 } else { &cfg.class0 };
    let grain = uniform(&mut rng, params.grain);
    let shell_offset = uniform(&mut rng, params.shell_offset);
    let lesions = place_lesions(cfg, &mut rng, &id)?;
    let pre = render(cfg, &lesions, grain, shell_offset, seed::mix(stream, 1))?;

    // metrics outside `encode` follow an independent coin
    let mut label_of = |m: ResponseMetric| if cfg.encode.contains(&m) { class } else { rng.random::<bool>() };
    let (volr, diar, crs_resp, recist_resp) = (
        label_of(ResponseMetric::VolR),
        label_of(ResponseMetric::DiaR),
        label_of(ResponseMetric::Crs),
        label_of(ResponseMetric::Recist),
    );
    let shrink_range = |resp: bool| if resp { cfg.class1.shrink } else { cfg.class0.shrink };

    // redraw until the voxelised volume change agrees with the VolR label
    let mut post = None;
    for _ in 0..LABEL_TRIES {
        let s = uniform(&mut rng, shrink_range(volr));
        let shrunk: Vec<Ellipsoid> = lesions.iter().map(|b| b.scaled(s)).collect();
        let scan = render(cfg, &shrunk, grain, shell_offset, seed::mix(stream, 2))?;
        let change = pct_reduction(pre.lesions.total_volume_mm3(), scan.lesions.total_volume_mm3());
        if (change > VOLR_THRESHOLD_PCT) == volr {
            post = Some(scan);
            break;
        }
    }
    let mut post = post.ok_or_else(|| {
        SynthError::Config(format!("shrink ranges cannot produce a consistent volume change for patient {id}"))
    })?;
    // the recorded diameters follow the DiaR label, independently of VolR
    let mut sld_post = None;
    for _ in 0..LABEL_TRIES {
        let v = pre.sld_mm * uniform(&mut rng, shrink_range(diar));
        if (pct_reduction(pre.sld_mm, v) > DIAR_THRESHOLD_PCT) == diar {
            sld_post = Some(v);
            break;
        }
    }
    post.sld_mm = sld_post.ok_or_else(|| {
        SynthError::Config(format!("shrink ranges cannot produce a consistent diameter change for patient {id}"))
    })?;
    let crs = if crs_resp { 3 } else { rng.random_range(1..=2) };
    let recist = match (recist_resp, rng.random::<bool>()) {
        (true, _) => Recist::PR,
        (false, true) => Recist::SD,
        (false, false) => Recist::PD,
    };
    Ok(SynthPatient { id, class, grain, shell_offset, lesions, pre, post, crs, recist })
}

/// Generates a cohort. Deterministic in `cfg`; patients are generated in
/// parallel from per-patient seeds.
pub fn generate_cohort(cfg: &SynthConfig) -> Result<SynthCohort, SynthError> {
    cfg.validate()?;
    let n1 = cfg.n_class1();
    let mut classes: Vec<bool> = (0..cfg.n_patients).map(|i| i < n1).collect();
    classes.shuffle(&mut seed::rng(seed::mix_str(cfg.seed, "classes")));
    let patients = classes
        .par_iter()
        .enumerate()
        .map(|(i, &c)| generate_patient(cfg, i, c))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SynthCohort { patients })
}

/// Writes every scan as MVOL/MMASK plus `manifest.csv` into `dir`.
pub fn write_cohort(cohort: &SynthCohort, dir: &Path) -> Result<PathBuf, SynthError> {
    std::fs::create_dir_all(dir).map_err(|e| CohortError::Io { path: dir.to_path_buf(), source: e })?;
    let mut rows = Vec::with_capacity(2 * cohort.patients.len());
    for p in &cohort.patients {
        for (tp, scan) in [(Timepoint::Pre, &p.pre), (Timepoint::Post, &p.post)] {
            let volume_path = dir.join(format!("{}_{tp}.mvol", p.id));
            let mask_path = dir.join(format!("{}_{tp}.mmask", p.id));
            write_volume(&scan.volume, &volume_path)?;
            write_mask(&scan.lesions, &mask_path)?;
            rows.push(ManifestRow {
                patient_id: p.id.clone(),
                timepoint: tp,
                volume_path,
                mask_path,
                crs: (tp == Timepoint::Pre).then_some(p.crs),
                recist: (tp == Timepoint::Post).then_some(p.recist),
                sld_mm: Some(scan.sld_mm),
            });
        }
    }
    let path = dir.join("manifest.csv");
    write_manifest(&CohortManifest { rows }, &path)?;
    Ok(path)
}
