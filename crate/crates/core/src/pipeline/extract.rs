//! Per-patient feature extraction over (scope, aggregation, region) groups,
//! for the original segmentation and for perturbation replicates.

use serde::{Deserialize, Serialize};

use crate::cohort::{Aggregation, LesionSet, Region, SiteScope, VoxelVolume};
use crate::radiomics::{catalog, extract_all, DiscretizationConfig, RadiomicsError, N_FEATURES};
use crate::roi::{
    in_scope, largest_lesion, make_rim, perturb, PerturbConfig, Provenance, RoiError, Voi, RIM_WIDTH_MM,
};
use crate::seed;

/// One block of 102 feature columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Group {
    pub scope: SiteScope,
    pub aggregation: Aggregation,
    pub region: Region,
}

impl Group {
    pub fn prefix(&self) -> String {
        format!("{}.{}.{}", self.scope, self.aggregation, self.region)
    }

    pub fn column_names(&self) -> Vec<String> {
        let p = self.prefix();
        catalog().iter().map(|d| format!("{p}.{}", d.qualified())).collect()
    }
}

/// Error for one group of one patient; the group's columns become NaN.
#[derive(Debug, thiserror::Error)]
pub enum GroupError {
    #[error(transparent)]
    Roi(#[from] RoiError),
    #[error(transparent)]
    Radiomics(#[from] RadiomicsError),
}

/// Which segmentation to use: the original or perturbation replicate `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segmentation<'a> {
    Original,
    Replicate { cfg: &'a PerturbConfig, index: usize },
}

/// Perturbation stream of one lesion: keyed by patient and lesion id so
/// every lesion moves independently and reproducibly.
pub fn lesion_perturb_config(cfg: &PerturbConfig, patient: &str, lesion: &str) -> PerturbConfig {
    PerturbConfig { seed: seed::mix_str(cfg.seed, &format!("{patient}/{lesion}")), ..*cfg }
}

struct Lesions<'a> {
    set: &'a LesionSet,
    masks: Vec<Option<Result<Voi, RoiError>>>,
    patient: &'a str,
    seg: Segmentation<'a>,
}

impl<'a> Lesions<'a> {
    fn voi(&mut self, k: usize) -> Result<&Voi, RoiError> {
        if self.masks[k].is_none() {
            let l = &self.set.lesions[k];
            let orig = Voi::from_lesion(self.set.grid, l);
            let v = match self.seg {
                Segmentation::Original => orig,
                Segmentation::Replicate { cfg, index } => {
                    orig.and_then(|o| perturb(&o, &lesion_perturb_config(cfg, self.patient, &l.id), index))
                }
            };
            self.masks[k] = Some(v);
        }
        self.masks[k].as_ref().expect("filled above").as_ref().map_err(Clone::clone)
    }

    fn group_voi(&mut self, g: Group) -> Result<Voi, RoiError> {
        let set = self.set;
        match g.aggregation {
            Aggregation::Largest => {
                // the choice of lesion always follows the original segmentation
                let target = largest_lesion(set, g.scope)?;
                let k = set.lesions.iter().position(|l| l.id == target.id).expect("lesion of set");
                let v = self.voi(k)?.clone();
                match g.region {
                    Region::Full => Ok(Voi { provenance: Provenance::Largest, ..v }),
                    Region::Rim => make_rim(&v, RIM_WIDTH_MM),
                }
            }
            Aggregation::Merged => {
                if g.region == Region::Rim {
                    return Err(RoiError::Config("rim is only defined for the largest lesion".into()));
                }
                let ks: Vec<usize> =
                    (0..set.lesions.len()).filter(|&k| in_scope(set.lesions[k].site, g.scope)).collect();
                if ks.is_empty() {
                    return Err(RoiError::NoLesion(g.scope));
                }
                let mut mask = vec![false; set.grid.len()];
                for k in ks {
                    for (m, &v) in mask.iter_mut().zip(&self.voi(k)?.mask) {
                        *m |= v;
                    }
                }
                Voi::new(set.grid, mask, Provenance::Merged)
            }
        }
    }
}

/// Features of every group for one patient, concatenated in group order.
/// A group that cannot be computed (no lesion in scope, failed
/// perturbation) yields NaN columns and its error.
pub fn extract_patient(
    patient: &str,
    volume: &VoxelVolume,
    set: &LesionSet,
    groups: &[Group],
    disc: &DiscretizationConfig,
    seg: Segmentation<'_>,
) -> (Vec<f64>, Vec<(Group, GroupError)>) {
    let mut lesions = Lesions { set, masks: (0..set.lesions.len()).map(|_| None).collect(), patient, seg };
    let mut values = Vec::with_capacity(groups.len() * N_FEATURES);
    let mut errors = Vec::new();
    for &g in groups {
        let r = lesions
            .group_voi(g)
            .map_err(GroupError::from)
            .and_then(|voi| extract_all(volume, &voi, disc).map_err(GroupError::from));
        match r {
            Ok(fv) => values.extend(fv.values),
            Err(e) => {
                values.extend(std::iter::repeat_n(f64::NAN, N_FEATURES));
                errors.push((g, e));
            }
        }
    }
    (values, errors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_cohort, SynthConfig};

    fn groups() -> Vec<Group> {
        vec![
            Group { scope: SiteScope::All, aggregation: Aggregation::Largest, region: Region::Full },
            Group { scope: SiteScope::All, aggregation: Aggregation::Largest, region: Region::Rim },
            Group { scope: SiteScope::All, aggregation: Aggregation::Merged, region: Region::Full },
            Group { scope: SiteScope::Pelvis, aggregation: Aggregation::Merged, region: Region::Full },
        ]
    }

    #[test]
    fn single_lesion_largest_equals_merged() {
        let cfg = SynthConfig { n_patients: 10, lesion_count: [1, 1], dims: [32, 32, 32], ..Default::default() };
        let c = generate_cohort(&cfg).unwrap();
        let p = &c.patients[0];
        let (v, _) = extract_patient(&p.id, &p.pre.volume, &p.pre.lesions, &groups(), &Default::default(), Segmentation::Original);
        assert_eq!(v.len(), 4 * N_FEATURES);
        let (a, m) = (&v[..N_FEATURES], &v[2 * N_FEATURES..3 * N_FEATURES]);
        for (x, y) in a.iter().zip(m) {
            assert!(x == y || (x.is_nan() && y.is_nan()));
        }
    }

    #[test]
    fn missing_scope_gives_nan_and_an_error() {
        let cfg = SynthConfig { n_patients: 10, lesion_count: [1, 1], site_probs: [1.0, 0.0, 0.0], dims: [32, 32, 32], ..Default::default() };
        let p = &generate_cohort(&cfg).unwrap().patients[0];
        let (v, errs) = extract_patient(&p.id, &p.pre.volume, &p.pre.lesions, &groups(), &Default::default(), Segmentation::Original);
        assert!(v[3 * N_FEATURES..].iter().all(|x| x.is_nan()));
        assert_eq!(errs.len(), 1);
        assert!(matches!(errs[0].1, GroupError::Roi(RoiError::NoLesion(SiteScope::Pelvis))));
    }

    #[test]
    fn replicates_are_deterministic_and_differ_from_original() {
        let cfg = SynthConfig { n_patients: 10, ..Default::default() };
        let p = &generate_cohort(&cfg).unwrap().patients[1];
        let pc = PerturbConfig::default();
        let run = |seg| extract_patient(&p.id, &p.pre.volume, &p.pre.lesions, &groups()[..3], &Default::default(), seg).0;
        let r0 = run(Segmentation::Replicate { cfg: &pc, index: 0 });
        assert_eq!(r0, run(Segmentation::Replicate { cfg: &pc, index: 0 }));
        assert_ne!(r0, run(Segmentation::Original));
        assert_ne!(r0, run(Segmentation::Replicate { cfg: &pc, index: 1 }));
    }
}
