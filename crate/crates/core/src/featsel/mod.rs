//! Univariate pre-filtering and robustness-aware feature selection.
//!
//! Every selector runs under one of four regimes. The predictive regime is
//! the weighted score `(1 - w) * s + w * cbar` at `w = 0`; fully robust
//! restricts the pool to ICC above the threshold before anything else; semi
//! robust only allows moves that keep the required robust fraction.

mod filters;
mod forest;
mod lasso;
mod subset;
mod ufs;
mod wrappers;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::set_hash;
use crate::model::{stratified_folds, Folds, ModelError, ModelSpec, Standardizer};
use crate::robustness::RobustnessProfile;
use crate::seed;

pub use filters::{fisher_scores, mi_scores, relieff_scores, ulr_scores};
pub use forest::gini_importance;
pub use lasso::{lasso_fit, lasso_lambda_max};
pub use ufs::{anova_f, ufs_prefilter, UfsConfig};

use subset::SubsetEval;

/// Upper bound on the size of any selected subset.
pub const MAX_SELECTED: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Fscore,
    Ulr,
    Relief,
    Mi,
    Gini,
    Lasso,
    Ga,
    Sbs,
    Sfs,
    Rfe,
}

impl Algorithm {
    pub const ALL: [Algorithm; 10] = [
        Algorithm::Fscore,
        Algorithm::Ulr,
        Algorithm::Relief,
        Algorithm::Mi,
        Algorithm::Gini,
        Algorithm::Lasso,
        Algorithm::Ga,
        Algorithm::Sbs,
        Algorithm::Sfs,
        Algorithm::Rfe,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Fscore => "fscore",
            Algorithm::Ulr => "ulr",
            Algorithm::Relief => "relief",
            Algorithm::Mi => "mi",
            Algorithm::Gini => "gini",
            Algorithm::Lasso => "lasso",
            Algorithm::Ga => "ga",
            Algorithm::Sbs => "sbs",
            Algorithm::Sfs => "sfs",
            Algorithm::Rfe => "rfe",
        }
    }

    pub fn is_filter(&self) -> bool {
        matches!(
            self,
            Algorithm::Fscore | Algorithm::Ulr | Algorithm::Relief | Algorithm::Mi | Algorithm::Gini
        )
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Algorithm::ALL
            .iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| format!("unknown selection algorithm '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Predictive,
    FullyRobust,
    SemiRobust,
    Weighted,
}

impl Regime {
    pub const ALL: [Regime; 4] = [
        Regime::Predictive,
        Regime::FullyRobust,
        Regime::SemiRobust,
        Regime::Weighted,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Predictive => "predictive",
            Regime::FullyRobust => "fully_robust",
            Regime::SemiRobust => "semi_robust",
            Regime::Weighted => "weighted",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Regime::ALL
            .iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| format!("unknown regime '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub algorithm: Algorithm,
    pub regime: Regime,
    /// Robustness weight of the weighted regime.
    pub w: f64,
    pub icc_threshold: f64,
    /// Minimum fraction of robust features in a semi-robust pool.
    pub pool_fraction: f64,
    pub target_k: Option<usize>,
    pub seed: u64,
    pub inner_folds: usize,
    pub ufs: UfsConfig,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            algorithm: Algorithm::Fscore,
            regime: Regime::Predictive,
            w: 0.5,
            icc_threshold: 0.8,
            pool_fraction: 0.8,
            target_k: None,
            seed: 0,
            inner_folds: 5,
            ufs: UfsConfig::default(),
        }
    }
}

impl SelectionConfig {
    pub fn new(algorithm: Algorithm, regime: Regime) -> SelectionConfig {
        SelectionConfig { algorithm, regime, ..Default::default() }
    }

    pub fn validate(&self, n_features: usize) -> Result<(), SelectionError> {
        let bad = |m: String| Err(SelectionError::Config(m));
        if !(0.0..=1.0).contains(&self.w) {
            return bad(format!("w = {} outside [0, 1]", self.w));
        }
        if !(0.0..=1.0).contains(&self.pool_fraction) || self.pool_fraction == 0.0 {
            return bad(format!("pool_fraction = {} outside (0, 1]", self.pool_fraction));
        }
        if !self.icc_threshold.is_finite() {
            return bad("icc_threshold must be finite".into());
        }
        if let Some(k) = self.target_k {
            if k == 0 || k > n_features {
                return bad(format!("target_k = {k} not in 1..={n_features}"));
            }
        }
        if self.inner_folds < 2 {
            return bad(format!("inner_folds = {} < 2", self.inner_folds));
        }
        self.ufs.validate()
    }
}

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("empty candidate pool after {stage}; ICC histogram (deciles) {histogram:?}")]
    EmptyPool { stage: &'static str, histogram: [usize; 10] },
    #[error("selection is empty: {0}")]
    EmptySelection(String),
    #[error("invalid selection config: {0}")]
    Config(String),
    #[error("robustness profile lacks feature '{0}'")]
    Profile(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One step of a selection run. `members` is the candidate set the row
/// refers to; it is kept for auditing and not written to the CSV trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub set_hash: String,
    pub s: f64,
    pub cbar: f64,
    pub s_combined: f64,
    pub action: String,
    #[serde(skip)]
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub algorithm: Algorithm,
    pub regime: Regime,
    /// In order of selection.
    pub selected: Vec<String>,
    /// Full candidate ordering where the algorithm produces one.
    pub ranking: Vec<String>,
    /// Candidates that survived the regime pre-step and UFS.
    pub pool: Vec<String>,
    pub trace: Vec<TraceRow>,
    /// Inner-CV AUC of the selected subset.
    pub cv_auc: f64,
    pub avg_icc: f64,
    pub sd_icc: f64,
}

impl SelectionResult {
    pub fn nf(&self) -> usize {
        self.selected.len()
    }
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8")
}

/// Mean and sample standard deviation of the profile ICCs of `features`.
pub fn icc_summary(profile: &RobustnessProfile, features: &[String]) -> (f64, f64) {
    let v: Vec<f64> = features.iter().filter_map(|f| profile.icc(f)).collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, sd)
}

/// Min-max scaling to [0, 1]; a constant vector maps to all ones.
pub(crate) fn minmax(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) || !(hi - lo).is_finite() {
        return vec![1.0; v.len()];
    }
    v.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

/// Shared state of one selection run over the post-UFS pool.
pub(crate) struct Ctx<'a> {
    /// Pool columns standardised with training statistics.
    pub x: DMatrix<f64>,
    pub names: Vec<String>,
    pub y: &'a [bool],
    /// Clamped ICC per pool feature.
    pub icc: Vec<f64>,
    pub robust: Vec<bool>,
    pub w: f64,
    pub semi: Option<f64>,
    pub spec: ModelSpec,
    pub cfg: &'a SelectionConfig,
    pub eval: SubsetEval,
    pub trace: Vec<TraceRow>,
}

impl Ctx<'_> {
    pub fn p(&self) -> usize {
        self.names.len()
    }

    pub fn combine(&self, s: f64, cbar: f64) -> f64 {
        (1.0 - self.w) * s + self.w * cbar
    }

    pub fn cbar(&self, set: &[usize]) -> f64 {
        if set.is_empty() {
            return 0.0;
        }
        set.iter().map(|&j| self.icc[j]).sum::<f64>() / set.len() as f64
    }

    /// Whether `set` satisfies the semi-robust pool rule (always true in
    /// other regimes).
    pub fn legal(&self, set: &[usize]) -> bool {
        match self.semi {
            None => true,
            Some(f) => {
                let r = set.iter().filter(|&&j| self.robust[j]).count();
                r as f64 >= f * set.len() as f64 - 1e-9
            }
        }
    }

    /// Largest subset size considered.
    pub fn max_k(&self) -> usize {
        self.cfg.target_k.unwrap_or(MAX_SELECTED).min(self.p())
    }

    pub fn member_names(&self, set: &[usize]) -> Vec<String> {
        set.iter().map(|&j| self.names[j].clone()).collect()
    }

    pub fn log(&mut self, set: &[usize], s: f64, cbar: f64, action: String) {
        let members = self.member_names(set);
        let row = TraceRow {
            iteration: self.trace.len(),
            set_hash: set_hash(&members),
            s,
            cbar,
            s_combined: self.combine(s, cbar),
            action,
            members,
        };
        self.trace.push(row);
    }

    /// Starting pool for backward searches in the semi-robust regime: all
    /// robust features plus the best-scoring non-robust ones the rule admits.
    pub fn backward_start(&self) -> Vec<usize> {
        let all: Vec<usize> = (0..self.p()).collect();
        let Some(f) = self.semi else { return all };
        let robust: Vec<usize> = all.iter().copied().filter(|&j| self.robust[j]).collect();
        let allowed = ((robust.len() as f64) * (1.0 - f) / f + 1e-9).floor() as usize;
        let fisher = fisher_scores(&self.x, self.y);
        let mut others: Vec<usize> = all.iter().copied().filter(|&j| !self.robust[j]).collect();
        others.sort_by(|&a, &b| fisher[b].total_cmp(&fisher[a]).then_with(|| self.names[a].cmp(&self.names[b])));
        let mut start = robust;
        start.extend(others.into_iter().take(allowed));
        start.sort_unstable();
        start
    }
}

fn clamped_icc(profile: &RobustnessProfile, name: &str) -> f64 {
    let v = profile.clamped(name);
    if v.is_nan() {
        0.0
    } else {
        v
    }
}

/// Runs the regime pre-step, UFS and the configured selector on a training
/// matrix (rows are patients, columns named by `names`).
pub fn select(
    x: &DMatrix<f64>,
    names: &[String],
    y: &[bool],
    profile: &RobustnessProfile,
    cfg: &SelectionConfig,
    spec: &ModelSpec,
) -> Result<SelectionResult, SelectionError> {
    cfg.validate(names.len())?;
    spec.validate()?;
    if x.ncols() != names.len() || x.nrows() != y.len() {
        return Err(SelectionError::Shape(format!(
            "{}x{} matrix, {} names, {} labels",
            x.nrows(),
            x.ncols(),
            names.len(),
            y.len()
        )));
    }
    if let Some(missing) = names.iter().find(|n| profile.get(n).is_none()) {
        return Err(SelectionError::Profile(missing.clone()));
    }
    let hist = |cols: &[usize]| {
        let sub: Vec<String> = cols.iter().map(|&j| names[j].clone()).collect();
        profile.restrict(&sub).histogram()
    };
    let is_robust = |j: usize| profile.icc(&names[j]).is_some_and(|v| v > cfg.icc_threshold);

    let mut cols: Vec<usize> = (0..names.len()).collect();
    if cfg.regime == Regime::FullyRobust {
        cols.retain(|&j| is_robust(j));
        if cols.is_empty() {
            return Err(SelectionError::EmptyPool { stage: "fully_robust", histogram: hist(&(0..names.len()).collect::<Vec<_>>()) });
        }
    }
    let kept = ufs_prefilter(&x.select_columns(&cols), y, &cfg.ufs)?;
    let pool: Vec<usize> = kept.iter().map(|&i| cols[i]).collect();
    if pool.is_empty() {
        return Err(SelectionError::EmptyPool { stage: "ufs", histogram: hist(&cols) });
    }
    if cfg.regime == Regime::SemiRobust && !pool.iter().any(|&j| is_robust(j)) {
        return Err(SelectionError::EmptyPool { stage: "semi_robust", histogram: hist(&pool) });
    }

    let raw = x.select_columns(&pool);
    let xs = Standardizer::fit(&raw).transform(&raw);
    let folds: Folds = stratified_folds(y, cfg.inner_folds, seed::mix_str(cfg.seed, "inner-cv"))?;
    let pool_names: Vec<String> = pool.iter().map(|&j| names[j].clone()).collect();
    let mut ctx = Ctx {
        eval: SubsetEval::new(&xs, y, &folds, spec),
        x: xs,
        icc: pool_names.iter().map(|n| clamped_icc(profile, n)).collect(),
        robust: pool.iter().map(|&j| is_robust(j)).collect(),
        names: pool_names,
        y,
        w: if cfg.regime == Regime::Weighted { cfg.w } else { 0.0 },
        semi: (cfg.regime == Regime::SemiRobust).then_some(cfg.pool_fraction),
        spec: *spec,
        cfg,
        trace: Vec::new(),
    };

    let out = match cfg.algorithm {
        a if a.is_filter() => filters::rank_filter(&mut ctx)?,
        Algorithm::Lasso => lasso::lasso_select(&mut ctx)?,
        Algorithm::Sfs => wrappers::sfs(&mut ctx)?,
        Algorithm::Sbs => wrappers::sbs(&mut ctx)?,
        Algorithm::Rfe => wrappers::rfe(&mut ctx)?,
        Algorithm::Ga => wrappers::ga(&mut ctx)?,
        _ => unreachable!(),
    };
    if out.selected.is_empty() {
        return Err(SelectionError::EmptySelection(format!("{} returned no features", cfg.algorithm)));
    }
    let cv_auc = ctx.eval.auc(&out.selected)?;
    let selected = ctx.member_names(&out.selected);
    let (avg_icc, sd_icc) = icc_summary(profile, &selected);
    Ok(SelectionResult {
        algorithm: cfg.algorithm,
        regime: cfg.regime,
        selected,
        ranking: ctx.member_names(&out.ranking),
        pool: ctx.names.clone(),
        trace: std::mem::take(&mut ctx.trace),
        cv_auc,
        avg_icc,
        sd_icc,
    })
}

/// Indices into the pool produced by a selector.
pub(crate) struct Picked {
    pub selected: Vec<usize>,
    pub ranking: Vec<usize>,
}
