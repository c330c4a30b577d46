//! The stages of a run and the artifacts they exchange. Every stage reads
//! declared inputs from upstream stage directories, writes into its own
//! directory under the output root and seals it with a cache stamp.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cache::{io_err, is_fresh, reset, seal, stage_key};
use super::config::{config_seed, RunConfig, SynthSection};
use super::{extract_patient, Group, PipelineError, Segmentation};
use crate::cohort::{
    load_manifest, load_mask, load_pair, read_feature_matrix, write_feature_matrix, CohortManifest, FeatureMatrix,
    Recist, Timepoint,
};
use crate::eval::{
    evaluate_selection, finalize_reports, parse_report_csv, report_csv, report_markdown, ConfigKey, EvalData,
    EvalReport, FittedParams,
};
use crate::featsel::{select, trace_csv, SelectionResult};
use crate::model::{derive_label, LabelInputs, ResponseMetric};
use crate::radiomics::N_FEATURES;
use crate::robustness::{profile_features, RobustnessProfile};
use crate::synth::{generate_cohort, write_cohort, SynthConfig};

pub const TRAIN_ORIGINAL: &str = "train_original.csv";
pub const TEST_ORIGINAL: &str = "test_original.csv";
pub const TRAIN_LABELS: &str = "train_labels.csv";
pub const TEST_LABELS: &str = "test_labels.csv";
pub const EXTRACT_ERRORS: &str = "errors.csv";
pub const ROBUSTNESS: &str = "robustness.csv";
pub const SELECTIONS: &str = "selections.csv";
pub const TRACES: &str = "traces";
pub const ROWS: &str = "rows.csv";
pub const PARAMS: &str = "params.json";
pub const REPORT: &str = "report.csv";
pub const SUMMARY: &str = "summary.md";

pub fn replicate_file(index: usize) -> String {
    format!("train_replicate_{:02}.csv", index + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    GenSynth,
    Extract,
    Profile,
    Select,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] =
        [Stage::GenSynth, Stage::Extract, Stage::Profile, Stage::Select, Stage::Evaluate, Stage::Report];

    /// Subcommand that runs the stage.
    pub fn name(&self) -> &'static str {
        match self {
            Stage::GenSynth => "gen-synth",
            Stage::Extract => "extract",
            Stage::Profile => "profile",
            Stage::Select => "select",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    /// Directory of the stage under the output root.
    pub fn dir_name(&self) -> &'static str {
        match self {
            Stage::GenSynth => "synth",
            s => s.name(),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: Stage,
    /// The stage directory was reused from an earlier identical run.
    pub cached: bool,
}

/// Label inputs of one patient as stored by the extract stage. Volumes are
/// the union of all lesions of the scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub patient_id: String,
    pub crs: Option<u8>,
    pub recist: Option<Recist>,
    pub sld_pre: Option<f64>,
    pub sld_post: Option<f64>,
    pub vol_pre: Option<f64>,
    pub vol_post: Option<f64>,
}

impl LabelRecord {
    pub fn inputs(&self) -> LabelInputs {
        LabelInputs {
            crs: self.crs.map(i64::from),
            recist: self.recist,
            sld_pre: self.sld_pre,
            sld_post: self.sld_post,
            vol_pre: self.vol_pre,
            vol_post: self.vol_post,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ErrorRecord {
    cohort: String,
    patient_id: String,
    segmentation: String,
    group: String,
    error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SelectionRecord {
    metric: ResponseMetric,
    site_scope: String,
    aggregation: String,
    region: String,
    model: String,
    algorithm: String,
    regime: String,
    n_train: usize,
    cv_auc: Option<f64>,
    avg_icc: Option<f64>,
    sd_icc: Option<f64>,
    selected: String,
    status: String,
}

impl SelectionRecord {
    fn key(&self) -> Result<ConfigKey, String> {
        Ok(ConfigKey {
            metric: self.metric,
            site_scope: self.site_scope.parse()?,
            aggregation: self.aggregation.parse()?,
            region: self.region.parse()?,
            model: self.model.parse()?,
            algorithm: Some(self.algorithm.parse()?),
            regime: Some(self.regime.parse()?),
        })
    }

    fn new(key: &ConfigKey, n_train: usize, outcome: &Result<SelectionResult, String>) -> SelectionRecord {
        let fin = |v: f64| v.is_finite().then_some(v);
        let (cv_auc, avg_icc, sd_icc, selected, status) = match outcome {
            Ok(s) => (fin(s.cv_auc), fin(s.avg_icc), fin(s.sd_icc), s.selected.join(";"), String::new()),
            Err(e) => (None, None, None, String::new(), e.clone()),
        };
        SelectionRecord {
            metric: key.metric,
            site_scope: key.site_scope.to_string(),
            aggregation: key.aggregation.to_string(),
            region: key.region.to_string(),
            model: key.model.to_string(),
            algorithm: key.algorithm.map_or("none".into(), |a| a.to_string()),
            regime: key.regime.map_or("none".into(), |r| r.to_string()),
            n_train,
            cv_auc,
            avg_icc,
            sd_icc,
            selected,
            status,
        }
    }

    fn result(&self, key: &ConfigKey) -> Result<SelectionResult, String> {
        if !self.status.is_empty() {
            return Err(self.status.clone());
        }
        Ok(SelectionResult {
            algorithm: key.algorithm.expect("selection key"),
            regime: key.regime.expect("selection key"),
            selected: self.selected.split(';').filter(|s| !s.is_empty()).map(str::to_string).collect(),
            ranking: vec![],
            pool: vec![],
            trace: vec![],
            cv_auc: self.cv_auc.unwrap_or(f64::NAN),
            avg_icc: self.avg_icc.unwrap_or(f64::NAN),
            sd_icc: self.sd_icc.unwrap_or(f64::NAN),
        })
    }
}

/// Fitted parameters of one configuration as written by the evaluate stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsRecord {
    pub key: String,
    pub params: Option<FittedParams>,
}

fn trace_file(key: &ConfigKey) -> String {
    format!("{}.csv", key.to_string().replace('/', "_"))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Training (or held-out) rows of one configuration.
struct Block {
    names: Vec<String>,
    x: DMatrix<f64>,
    y: Vec<bool>,
}

fn labels_by_id(labels: &[LabelRecord]) -> HashMap<&str, &LabelRecord> {
    labels.iter().map(|l| (l.patient_id.as_str(), l)).collect()
}

fn label_of(labels: &HashMap<&str, &LabelRecord>, id: &str, metric: ResponseMetric) -> Option<bool> {
    let rec = labels.get(id)?;
    derive_label(metric, &rec.inputs()).ok().map(|l| l.response)
}

/// Training block of a configuration: patients with a derivable label and
/// a computed group; feature columns finite for all of them.
fn train_block(m: &FeatureMatrix, labels: &[LabelRecord], key: &ConfigKey) -> Result<Block, String> {
    let cols = m.group_columns(key.site_scope, key.aggregation, key.region);
    if cols.is_empty() {
        return Err("feature group was not extracted".into());
    }
    let by_id = labels_by_id(labels);
    let v = m.values();
    let (mut rows, mut y) = (Vec::new(), Vec::new());
    for (i, id) in m.patient_ids().iter().enumerate() {
        if let Some(l) = label_of(&by_id, id, key.metric) {
            if cols.iter().any(|&j| v[(i, j)].is_finite()) {
                rows.push(i);
                y.push(l);
            }
        }
    }
    if rows.is_empty() {
        return Err(format!("no training patient has a {} label and the feature group", key.metric));
    }
    let keep: Vec<usize> = cols.into_iter().filter(|&j| rows.iter().all(|&i| v[(i, j)].is_finite())).collect();
    if keep.is_empty() {
        return Err("no feature is finite for every training patient".into());
    }
    let names = keep.iter().map(|&j| m.feature_names()[j].clone()).collect();
    let x = DMatrix::from_fn(rows.len(), keep.len(), |r, c| v[(rows[r], keep[c])]);
    Ok(Block { names, x, y })
}

/// Held-out rows for the training columns `names`; patients without a
/// label or with a non-finite value in those columns are left out.
fn test_block(m: &FeatureMatrix, labels: &[LabelRecord], key: &ConfigKey, names: &[String]) -> Result<Block, String> {
    let cols: Vec<usize> = names
        .iter()
        .map(|n| m.column_index(n).ok_or_else(|| format!("held-out cohort lacks column {n}")))
        .collect::<Result<_, _>>()?;
    let by_id = labels_by_id(labels);
    let v = m.values();
    let (mut rows, mut y) = (Vec::new(), Vec::new());
    for (i, id) in m.patient_ids().iter().enumerate() {
        if let Some(l) = label_of(&by_id, id, key.metric) {
            if cols.iter().all(|&j| v[(i, j)].is_finite()) {
                rows.push(i);
                y.push(l);
            }
        }
    }
    let x = DMatrix::from_fn(rows.len(), cols.len(), |r, c| v[(rows[r], cols[c])]);
    Ok(Block { names: names.to_vec(), x, y })
}

struct PatientOut {
    rows: Vec<Vec<f64>>,
    label: LabelRecord,
    errors: Vec<ErrorRecord>,
}

/// Config subset the extract stage depends on.
#[derive(Serialize)]
struct ExtractKey<'a> {
    groups: &'a [Group],
    perturbation: crate::roi::PerturbConfig,
    discretization: &'a crate::radiomics::DiscretizationConfig,
}

#[derive(Serialize)]
struct SelectKey<'a> {
    configurations: &'a [ConfigKey],
    selection: &'a crate::featsel::SelectionConfig,
    model: &'a crate::model::ModelSpec,
    seed: u64,
}

/// A configured run: the stages share one thread pool sized by `--jobs`.
pub struct Pipeline {
    cfg: RunConfig,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    /// `jobs = 0` uses every available core.
    pub fn new(cfg: RunConfig, jobs: usize) -> Result<Pipeline, PipelineError> {
        cfg.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
        Ok(Pipeline { cfg, pool })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn dir(&self, stage: Stage) -> PathBuf {
        self.cfg.out.join(stage.dir_name())
    }

    pub fn artifact(&self, stage: Stage, name: &str) -> PathBuf {
        self.dir(stage).join(name)
    }

    fn require(&self, stage: Stage, name: &str) -> Result<PathBuf, PipelineError> {
        let p = self.artifact(stage, name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(PipelineError::Dependency { artifact: p, producer: stage.name() })
        }
    }

    /// Runs every stage in order; `gen-synth` only when a cohort comes
    /// from the synth section.
    pub fn run(&self) -> Result<Vec<StageOutcome>, PipelineError> {
        let mut out = Vec::new();
        for s in Stage::ALL {
            if s == Stage::GenSynth && self.cfg.train.is_some() && self.cfg.test.is_some() {
                continue;
            }
            out.push(self.run_stage(s)?);
        }
        Ok(out)
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageOutcome, PipelineError> {
        self.pool.install(|| match stage {
            Stage::GenSynth => self.gen_synth(),
            Stage::Extract => self.extract(),
            Stage::Profile => self.profile(),
            Stage::Select => self.select(),
            Stage::Evaluate => self.evaluate(),
            Stage::Report => self.report(),
        })
    }

    /// Runs `body` unless the stage directory is fresh for `key`.
    fn cached(
        &self,
        stage: Stage,
        key: String,
        body: impl FnOnce(&Path) -> Result<(), PipelineError>,
    ) -> Result<StageOutcome, PipelineError> {
        let dir = self.dir(stage);
        if is_fresh(&dir, &key) {
            log::info!("{stage}: up to date");
            return Ok(StageOutcome { stage, cached: true });
        }
        log::info!("{stage}: running");
        reset(&dir)?;
        body(&dir)?;
        seal(&dir, stage.name(), &key)?;
        Ok(StageOutcome { stage, cached: false })
    }

    fn synth_configs(&self) -> Result<(SynthConfig, SynthConfig), PipelineError> {
        let s: &SynthSection =
            self.cfg.synth.as_ref().ok_or_else(|| PipelineError::Config("gen-synth needs a synth section".into()))?;
        let seed = |tag| crate::seed::mix_str(self.cfg.seed, tag);
        Ok((
            SynthConfig { seed: seed("synth/train"), ..s.train.clone() },
            SynthConfig { seed: seed("synth/test"), ..s.test.clone() },
        ))
    }

    pub fn gen_synth(&self) -> Result<StageOutcome, PipelineError> {
        let (train, test) = self.synth_configs()?;
        let key = stage_key(Stage::GenSynth.name(), &[], &(&train, &test))?;
        self.cached(Stage::GenSynth, key, |dir| {
            for (name, c) in [("train", &train), ("test", &test)] {
                let cohort = generate_cohort(c)?;
                write_cohort(&cohort, &dir.join(name))?;
            }
            Ok(())
        })
    }

    fn load_cohort(&self, path: &Path, from_synth: bool) -> Result<CohortManifest, PipelineError> {
        if !path.is_file() && from_synth {
            return Err(PipelineError::Dependency { artifact: path.to_path_buf(), producer: Stage::GenSynth.name() });
        }
        Ok(load_manifest(path)?)
    }

    fn cohort_inputs(name: &str, manifest_path: &Path, m: &CohortManifest) -> Vec<(String, PathBuf)> {
        let mut v = vec![(format!("{name}/manifest"), manifest_path.to_path_buf())];
        for r in &m.rows {
            v.push((format!("{name}/{}/{}/volume", r.patient_id, r.timepoint), r.volume_path.clone()));
            v.push((format!("{name}/{}/{}/mask", r.patient_id, r.timepoint), r.mask_path.clone()));
        }
        v
    }

    pub fn extract(&self) -> Result<StageOutcome, PipelineError> {
        let (tp, sp) = (self.cfg.train_manifest(), self.cfg.test_manifest());
        let train = self.load_cohort(&tp, self.cfg.train.is_none())?;
        let test = self.load_cohort(&sp, self.cfg.test.is_none())?;
        let mut inputs = Self::cohort_inputs("train", &tp, &train);
        inputs.extend(Self::cohort_inputs("test", &sp, &test));
        let groups = self.cfg.groups();
        let pc = self.cfg.perturb_config();
        let key = stage_key(
            Stage::Extract.name(),
            &inputs,
            &ExtractKey { groups: &groups, perturbation: pc, discretization: &self.cfg.discretization },
        )?;
        self.cached(Stage::Extract, key, |dir| {
            let names: Vec<String> = groups.iter().flat_map(|g| g.column_names()).collect();
            let mut errors = Vec::new();
            for (cohort, m, replicates) in [("train", &train, pc.n_replicates), ("test", &test, 0)] {
                let out = self.extract_cohort(cohort, m, &groups, replicates);
                let ids: Vec<String> = out.iter().map(|p| p.label.patient_id.clone()).collect();
                for s in 0..=replicates {
                    let mat = DMatrix::from_fn(out.len(), names.len(), |i, j| out[i].rows[s][j]);
                    let fm = FeatureMatrix::new(ids.clone(), names.clone(), mat)?;
                    let file = if s == 0 { format!("{cohort}_original.csv") } else { replicate_file(s - 1) };
                    write_feature_matrix(&fm, &dir.join(file))?;
                }
                let labels: Vec<LabelRecord> = out.iter().map(|p| p.label.clone()).collect();
                write_csv(&dir.join(format!("{cohort}_labels.csv")), &labels)?;
                errors.extend(out.into_iter().flat_map(|p| p.errors));
            }
            if !errors.is_empty() {
                log::warn!("extract: {} group errors, see {EXTRACT_ERRORS}", errors.len());
            }
            write_csv(&dir.join(EXTRACT_ERRORS), &errors)
        })
    }

    fn extract_cohort(&self, cohort: &str, m: &CohortManifest, groups: &[Group], replicates: usize) -> Vec<PatientOut> {
        let pc = self.cfg.perturb_config();
        let disc = &self.cfg.discretization;
        let width = groups.len() * N_FEATURES;
        m.patients()
            .par_iter()
            .map(|id| {
                let labels = m.labels(id);
                let mut label = LabelRecord {
                    patient_id: id.clone(),
                    crs: labels.crs,
                    recist: labels.recist,
                    sld_pre: labels.sld_pre,
                    sld_post: labels.sld_post,
                    vol_pre: None,
                    vol_post: None,
                };
                let mut errors = Vec::new();
                let err = |seg: &str, group: String, e: String| ErrorRecord {
                    cohort: cohort.into(),
                    patient_id: id.clone(),
                    segmentation: seg.into(),
                    group,
                    error: e,
                };
                let mut rows = vec![vec![f64::NAN; width]; replicates + 1];
                let pre = m.row(id, Timepoint::Pre).ok_or_else(|| "no pre-treatment scan".to_string());
                match pre.and_then(|r| load_pair(&r.volume_path, &r.mask_path).map_err(|e| e.to_string())) {
                    Ok((volume, set)) => {
                        label.vol_pre = Some(set.total_volume_mm3());
                        for (s, row) in rows.iter_mut().enumerate() {
                            let (seg, seg_name) = if s == 0 {
                                (Segmentation::Original, "original".to_string())
                            } else {
                                (Segmentation::Replicate { cfg: &pc, index: s - 1 }, format!("replicate_{s:02}"))
                            };
                            let (values, errs) = extract_patient(id, &volume, &set, groups, disc, seg);
                            *row = values;
                            errors.extend(errs.into_iter().map(|(g, e)| err(&seg_name, g.prefix(), e.to_string())));
                        }
                    }
                    Err(e) => errors.push(err("original", "*".into(), e)),
                }
                if let Some(r) = m.row(id, Timepoint::Post) {
                    match load_mask(&r.mask_path) {
                        Ok(set) => label.vol_post = Some(set.total_volume_mm3()),
                        Err(e) => errors.push(err("post", "*".into(), e.to_string())),
                    }
                }
                PatientOut { rows, label, errors }
            })
            .collect()
    }

    fn replicate_inputs(&self) -> Result<Vec<(String, PathBuf)>, PipelineError> {
        let mut v = vec![(TRAIN_ORIGINAL.to_string(), self.require(Stage::Extract, TRAIN_ORIGINAL)?)];
        for r in 0..self.cfg.perturbation.n_replicates {
            let f = replicate_file(r);
            v.push((f.clone(), self.require(Stage::Extract, &f)?));
        }
        Ok(v)
    }

    pub fn profile(&self) -> Result<StageOutcome, PipelineError> {
        let inputs = self.replicate_inputs()?;
        let key = stage_key(Stage::Profile.name(), &inputs, &self.cfg.icc_form)?;
        self.cached(Stage::Profile, key, |dir| {
            let orig = read_feature_matrix(&inputs[0].1)?;
            let reps =
                inputs[1..].iter().map(|(_, p)| read_feature_matrix(p)).collect::<Result<Vec<_>, _>>()?;
            let prof = profile_features(&orig, &reps, self.cfg.icc_form)?;
            write_text(&dir.join(ROBUSTNESS), &prof.to_csv())
        })
    }

    fn select_key<'a>(&'a self, keys: &'a [ConfigKey]) -> SelectKey<'a> {
        // shared model settings; the kind varies per configuration
        SelectKey { configurations: keys, selection: &self.cfg.selection, model: &self.cfg.model, seed: self.cfg.seed }
    }

    fn read_profile(&self) -> Result<(PathBuf, RobustnessProfile), PipelineError> {
        let p = self.require(Stage::Profile, ROBUSTNESS)?;
        let text = std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
        Ok((p, RobustnessProfile::from_csv(&text)?))
    }

    pub fn select(&self) -> Result<StageOutcome, PipelineError> {
        let tm = self.require(Stage::Extract, TRAIN_ORIGINAL)?;
        let tl = self.require(Stage::Extract, TRAIN_LABELS)?;
        let (pp, profile) = self.read_profile()?;
        let inputs = vec![(TRAIN_ORIGINAL.into(), tm.clone()), (TRAIN_LABELS.into(), tl.clone()), (ROBUSTNESS.into(), pp)];
        let keys: Vec<ConfigKey> = self.cfg.configurations().into_iter().filter(|k| k.algorithm.is_some()).collect();
        let key = stage_key(Stage::Select.name(), &inputs, &self.select_key(&keys))?;
        self.cached(Stage::Select, key, |dir| {
            let m = read_feature_matrix(&tm)?;
            let labels: Vec<LabelRecord> = read_csv(&tl)?;
            let results: Vec<(SelectionRecord, Option<String>)> = keys
                .par_iter()
                .map(|k| {
                    let cfg = self.cfg.selection_for(k).expect("selection key");
                    let spec = self.cfg.model_for(k);
                    let (n, outcome) = match train_block(&m, &labels, k) {
                        Ok(b) => (
                            b.y.len(),
                            select(&b.x, &b.names, &b.y, &profile, &cfg, &spec).map_err(|e| e.to_string()),
                        ),
                        Err(e) => (0, Err(e)),
                    };
                    if let Err(e) = &outcome {
                        log::warn!("select {k}: {e}");
                    }
                    let trace = outcome.as_ref().ok().map(|s| trace_csv(&s.trace));
                    (SelectionRecord::new(k, n, &outcome), trace)
                })
                .collect();
            let tdir = dir.join(TRACES);
            std::fs::create_dir_all(&tdir).map_err(|e| io_err(&tdir, e))?;
            for (k, (_, trace)) in keys.iter().zip(&results) {
                if let Some(t) = trace {
                    write_text(&tdir.join(trace_file(k)), t)?;
                }
            }
            let records: Vec<SelectionRecord> = results.into_iter().map(|r| r.0).collect();
            write_csv(&dir.join(SELECTIONS), &records)
        })
    }

    pub fn evaluate(&self) -> Result<StageOutcome, PipelineError> {
        let names = [TRAIN_ORIGINAL, TRAIN_LABELS, TEST_ORIGINAL, TEST_LABELS];
        let mut inputs =
            names.iter().map(|n| Ok((n.to_string(), self.require(Stage::Extract, n)?))).collect::<Result<Vec<_>, PipelineError>>()?;
        let (pp, profile) = self.read_profile()?;
        inputs.push((ROBUSTNESS.into(), pp));
        let keys = self.cfg.configurations();
        let with_selection = keys.iter().any(|k| k.algorithm.is_some());
        if with_selection {
            inputs.push((SELECTIONS.into(), self.require(Stage::Select, SELECTIONS)?));
        }
        let key = stage_key(Stage::Evaluate.name(), &inputs, &self.select_key(&keys))?;
        self.cached(Stage::Evaluate, key, |dir| {
            let train = read_feature_matrix(&inputs[0].1)?;
            let train_labels: Vec<LabelRecord> = read_csv(&inputs[1].1)?;
            let test = read_feature_matrix(&inputs[2].1)?;
            let test_labels: Vec<LabelRecord> = read_csv(&inputs[3].1)?;
            let mut selections: HashMap<ConfigKey, SelectionRecord> = HashMap::new();
            if with_selection {
                for r in read_csv::<SelectionRecord>(&inputs[5].1)? {
                    selections.insert(r.key().map_err(|e| PipelineError::Data(format!("{SELECTIONS}: {e}")))?, r);
                }
            }
            let rows: Vec<EvalReport> = keys
                .par_iter()
                .map(|k| {
                    let r = self.evaluate_one(k, &train, &train_labels, &test, &test_labels, &profile, &selections);
                    r.unwrap_or_else(|e| {
                        log::warn!("evaluate {k}: {e}");
                        EvalReport::failed(k.clone(), e)
                    })
                })
                .collect();
            write_text(&dir.join(ROWS), &report_csv(&rows))?;
            let params: Vec<ParamsRecord> =
                rows.iter().map(|r| ParamsRecord { key: r.key.to_string(), params: r.params.clone() }).collect();
            write_text(&dir.join(PARAMS), &serde_json::to_string_pretty(&params).expect("params serialize"))
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn evaluate_one(
        &self,
        k: &ConfigKey,
        train: &FeatureMatrix,
        train_labels: &[LabelRecord],
        test: &FeatureMatrix,
        test_labels: &[LabelRecord],
        profile: &RobustnessProfile,
        selections: &HashMap<ConfigKey, SelectionRecord>,
    ) -> Result<EvalReport, String> {
        let sel = match k.algorithm {
            None => None,
            Some(_) => {
                let rec = selections.get(k).ok_or("no selection recorded for this configuration")?;
                Some(rec.result(k)?)
            }
        };
        let tr = train_block(train, train_labels, k)?;
        let te = test_block(test, test_labels, k, &tr.names)?;
        let data =
            EvalData { names: &tr.names, train_x: &tr.x, train_y: &tr.y, test_x: &te.x, test_y: &te.y, profile };
        evaluate_selection(k.clone(), &data, sel, &self.cfg.model_for(k), config_seed(self.cfg.seed, k))
            .map_err(|e| e.to_string())
    }

    pub fn report(&self) -> Result<StageOutcome, PipelineError> {
        let rows_path = self.require(Stage::Evaluate, ROWS)?;
        let key = stage_key(Stage::Report.name(), &[(ROWS.into(), rows_path.clone())], &())?;
        self.cached(Stage::Report, key, |dir| {
            let text = std::fs::read_to_string(&rows_path).map_err(|e| io_err(&rows_path, e))?;
            let mut rows = parse_report_csv(&text)?;
            finalize_reports(&mut rows);
            write_text(&dir.join(REPORT), &report_csv(&rows))?;
            write_text(&dir.join(SUMMARY), &report_markdown(&rows))
        })
    }

    /// Final report rows as written by the report stage.
    pub fn read_report(&self) -> Result<Vec<EvalReport>, PipelineError> {
        let p = self.require(Stage::Report, REPORT)?;
        let text = std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
        Ok(parse_report_csv(&text)?)
    }
}
