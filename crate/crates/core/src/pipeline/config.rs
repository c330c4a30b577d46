//! Run configuration: one JSON document describing cohorts, the
//! configuration grid and every tunable of the stages.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Group, PipelineError};
use crate::cohort::{Aggregation, Region, SiteScope};
use crate::eval::ConfigKey;
use crate::featsel::{Algorithm, Regime, SelectionConfig};
use crate::model::{ModelKind, ModelSpec, ResponseMetric};
use crate::radiomics::DiscretizationConfig;
use crate::robustness::IccForm;
use crate::roi::PerturbConfig;
use crate::synth::SynthConfig;

/// Cohorts generated by `gen-synth`; their seeds are derived from the run
/// seed so `--seed` varies the data as well as the analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSection {
    pub train: SynthConfig,
    pub test: SynthConfig,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            train: SynthConfig { n_patients: 120, ..Default::default() },
            test: SynthConfig { n_patients: 60, id_prefix: "T".into(), ..Default::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Training cohort manifest; defaults to the `gen-synth` output.
    pub train: Option<PathBuf>,
    /// Held-out cohort manifest; defaults to the `gen-synth` output.
    pub test: Option<PathBuf>,
    pub synth: Option<SynthSection>,
    pub site_scopes: Vec<SiteScope>,
    pub aggregations: Vec<Aggregation>,
    pub regions: Vec<Region>,
    pub metrics: Vec<ResponseMetric>,
    pub algorithms: Vec<Algorithm>,
    pub regimes: Vec<Regime>,
    pub models: Vec<ModelKind>,
    /// Allows rim configurations for metrics other than CRS.
    pub rim_any_metric: bool,
    /// Shared selection settings; algorithm, regime and seed are set per
    /// configuration.
    pub selection: SelectionConfig,
    /// Shared model settings; the kind is set per configuration.
    pub model: ModelSpec,
    pub perturbation: PerturbConfig,
    pub discretization: DiscretizationConfig,
    pub icc_form: IccForm,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: None,
            test: None,
            synth: None,
            site_scopes: SiteScope::ALL.to_vec(),
            aggregations: Aggregation::ALL.to_vec(),
            regions: vec![Region::Full],
            metrics: ResponseMetric::ALL.to_vec(),
            algorithms: Algorithm::ALL.to_vec(),
            regimes: Regime::ALL.to_vec(),
            models: ModelKind::ALL.to_vec(),
            rim_any_metric: false,
            selection: SelectionConfig::default(),
            model: ModelSpec::default(),
            perturbation: PerturbConfig::default(),
            discretization: DiscretizationConfig::default(),
            icc_form: IccForm::default(),
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

fn dedup<T: Ord + Copy>(v: &[T]) -> Vec<T> {
    let mut v = v.to_vec();
    v.sort();
    v.dedup();
    v
}

impl RunConfig {
    /// Parses JSON; relative paths are resolved against `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<RunConfig, PipelineError> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        for p in [&mut cfg.train, &mut cfg.test].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::from_json(&text, base)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.into()));
        for (name, empty) in [
            ("site_scopes", self.site_scopes.is_empty()),
            ("aggregations", self.aggregations.is_empty()),
            ("regions", self.regions.is_empty()),
            ("metrics", self.metrics.is_empty()),
            ("models", self.models.is_empty()),
        ] {
            if empty {
                return Err(PipelineError::Config(format!("{name} must not be empty")));
            }
        }
        if self.algorithms.is_empty() != self.regimes.is_empty() {
            return bad("algorithms and regimes must be both empty (baselines only) or both non-empty");
        }
        if self.regions.contains(&Region::Rim) {
            if !self.aggregations.contains(&Aggregation::Largest) {
                return bad("rim region is only defined for the largest lesion; add aggregation 'largest'");
            }
            if !self.rim_any_metric && !self.metrics.contains(&ResponseMetric::Crs) {
                return bad("rim region is used for CRS only; add metric 'CRS' or set rim_any_metric");
            }
        }
        if (self.train.is_none() || self.test.is_none()) && self.synth.is_none() {
            return bad("train and test cohorts are required unless a synth section is given");
        }
        if let Some(s) = &self.synth {
            s.train.validate().map_err(|e| PipelineError::Config(format!("synth.train: {e}")))?;
            s.test.validate().map_err(|e| PipelineError::Config(format!("synth.test: {e}")))?;
        }
        self.perturbation.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.discretization.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        for k in ModelKind::ALL {
            ModelSpec { kind: k, ..self.model }.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        self.selection.validate(usize::MAX).map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn train_manifest(&self) -> PathBuf {
        self.train.clone().unwrap_or_else(|| self.out.join("synth").join("train").join("manifest.csv"))
    }

    pub fn test_manifest(&self) -> PathBuf {
        self.test.clone().unwrap_or_else(|| self.out.join("synth").join("test").join("manifest.csv"))
    }

    /// Perturbation settings with the stream derived from the run seed.
    pub fn perturb_config(&self) -> PerturbConfig {
        PerturbConfig { seed: crate::seed::mix_str(self.seed, "perturbation"), ..self.perturbation }
    }

    /// Feature groups to extract, in canonical order. Rim is paired with
    /// the largest lesion only.
    pub fn groups(&self) -> Vec<Group> {
        let mut out = Vec::new();
        for &scope in &dedup(&self.site_scopes) {
            for &aggregation in &dedup(&self.aggregations) {
                for &region in &dedup(&self.regions) {
                    if region == Region::Rim && aggregation != Aggregation::Largest {
                        continue;
                    }
                    out.push(Group { scope, aggregation, region });
                }
            }
        }
        out
    }

    /// Every configuration of the grid in key order: one no-selection
    /// baseline per (metric, group, model) followed by its selection rows.
    pub fn configurations(&self) -> Vec<ConfigKey> {
        let mut out = Vec::new();
        for &metric in &dedup(&self.metrics) {
            for g in self.groups() {
                if g.region == Region::Rim && metric != ResponseMetric::Crs && !self.rim_any_metric {
                    continue;
                }
                for &model in &dedup(&self.models) {
                    let base = ConfigKey {
                        metric,
                        site_scope: g.scope,
                        aggregation: g.aggregation,
                        region: g.region,
                        model,
                        algorithm: None,
                        regime: None,
                    };
                    out.push(base.clone());
                    for &a in &dedup(&self.algorithms) {
                        for &r in &dedup(&self.regimes) {
                            out.push(ConfigKey { algorithm: Some(a), regime: Some(r), ..base.clone() });
                        }
                    }
                }
            }
        }
        out.sort();
        out
    }

    /// Selection settings of one configuration.
    pub fn selection_for(&self, key: &ConfigKey) -> Option<SelectionConfig> {
        Some(SelectionConfig {
            algorithm: key.algorithm?,
            regime: key.regime?,
            seed: config_seed(self.seed, key),
            ..self.selection.clone()
        })
    }

    pub fn model_for(&self, key: &ConfigKey) -> ModelSpec {
        ModelSpec { kind: key.model, ..self.model }
    }
}

/// Seed of one configuration. Baseline and selection rows of the same
/// group share it so their outer CV folds coincide.
pub fn config_seed(seed: u64, key: &ConfigKey) -> u64 {
    crate::seed::mix_str(seed, &key.baseline().to_string())
}
