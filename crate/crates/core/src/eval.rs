//! Train/test evaluation of one modelling configuration and the report
//! table built from many of them.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{Aggregation, Region, SiteScope};
use crate::featsel::{icc_summary, select, Algorithm, Regime, SelectionConfig, SelectionError, SelectionResult};
use crate::model::{
    auc, best_threshold, fit, gmean_se_sp, stratified_folds, ModelError, ModelKind, ModelSpec, ResponseMetric,
    Standardizer,
};
use crate::robustness::RobustnessProfile;
use crate::seed;

pub const OUTER_FOLDS: usize = 5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("report row {row}: {message}")]
    Parse { row: usize, message: String },
}

/// Training and held-out data of one feature group.
#[derive(Debug, Clone, Copy)]
pub struct EvalData<'a> {
    pub names: &'a [String],
    pub train_x: &'a DMatrix<f64>,
    pub train_y: &'a [bool],
    pub test_x: &'a DMatrix<f64>,
    pub test_y: &'a [bool],
    pub profile: &'a RobustnessProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub auc: f64,
    /// Percent.
    pub gmean: f64,
    pub se: f64,
    pub sp: f64,
}

impl Metrics {
    pub const NAN: Metrics = Metrics { auc: f64::NAN, gmean: f64::NAN, se: f64::NAN, sp: f64::NAN };

    fn as_array(&self) -> [f64; 4] {
        [self.auc, self.gmean, self.se, self.sp]
    }
}

/// Percent change of each test metric relative to the no-selection
/// baseline, `100 (with - without) / without`.
pub fn change_vs_baseline(with: &Metrics, without: &Metrics) -> [f64; 4] {
    let (a, b) = (with.as_array(), without.as_array());
    std::array::from_fn(|i| if b[i] == 0.0 { f64::NAN } else { 100.0 * (a[i] - b[i]) / b[i] })
}

/// Identity of a configuration; `algorithm`/`regime` are `None` for the
/// no-selection baseline.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConfigKey {
    pub metric: ResponseMetric,
    pub site_scope: SiteScope,
    pub aggregation: Aggregation,
    pub region: Region,
    pub model: ModelKind,
    pub algorithm: Option<Algorithm>,
    pub regime: Option<Regime>,
}

impl ConfigKey {
    pub fn baseline(&self) -> ConfigKey {
        ConfigKey { algorithm: None, regime: None, ..self.clone() }
    }

    pub fn group(&self) -> (ResponseMetric, SiteScope, Aggregation, Region, ModelKind) {
        (self.metric, self.site_scope, self.aggregation, self.region, self.model)
    }
}

impl fmt::Display for ConfigKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}/{}/{}/{}",
            self.metric,
            self.site_scope,
            self.aggregation,
            self.region,
            self.model,
            self.algorithm.map_or("none", |a| a.as_str()),
            self.regime.map_or("none", |r| r.as_str())
        )
    }
}

/// The model fitted on the whole training cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedParams {
    pub features: Vec<String>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub key: ConfigKey,
    pub train: Metrics,
    pub test: Metrics,
    pub nf: usize,
    pub avg_icc: f64,
    pub sd_icc: f64,
    pub change: Option<[f64; 4]>,
    pub selection: Option<SelectionResult>,
    pub params: Option<FittedParams>,
    /// Empty on success, otherwise why the configuration failed.
    pub status: String,
    pub best: bool,
}

impl EvalReport {
    pub fn failed(key: ConfigKey, reason: String) -> EvalReport {
        EvalReport {
            key,
            train: Metrics::NAN,
            test: Metrics::NAN,
            nf: 0,
            avg_icc: f64::NAN,
            sd_icc: f64::NAN,
            change: None,
            selection: None,
            params: None,
            status: reason,
            best: false,
        }
    }

    pub fn ok(&self) -> bool {
        self.status.is_empty()
    }
}

fn cols_of(names: &[String], wanted: &[String]) -> Result<Vec<usize>, EvalError> {
    wanted
        .iter()
        .map(|w| names.iter().position(|n| n == w).ok_or_else(|| EvalError::Shape(format!("unknown feature {w}"))))
        .collect()
}

fn check_shape(data: &EvalData) -> Result<(), EvalError> {
    let p = data.names.len();
    if data.train_x.ncols() != p || data.test_x.ncols() != p {
        return Err(EvalError::Shape(format!(
            "{} names, train {} cols, test {} cols",
            p,
            data.train_x.ncols(),
            data.test_x.ncols()
        )));
    }
    if data.train_x.nrows() != data.train_y.len() || data.test_x.nrows() != data.test_y.len() {
        return Err(EvalError::Shape("label count differs from row count".into()));
    }
    Ok(())
}

/// Outer-CV estimate on the training cohort with the feature set fixed:
/// mean fold AUC, and SE/SP pooled over held-out folds, each fold
/// thresholded at its own training-maximal G-Mean.
fn train_metrics(x: &DMatrix<f64>, y: &[bool], spec: &ModelSpec, seed_value: u64) -> Result<Metrics, EvalError> {
    let folds = stratified_folds(y, OUTER_FOLDS, seed::mix_str(seed_value, "outer-cv"))?;
    let (mut auc_sum, mut tp, mut tn) = (0.0, 0usize, 0usize);
    for f in 0..folds.k {
        let (tr, te) = (folds.train(f), folds.test(f));
        let xtr = x.select_rows(&tr);
        let ytr: Vec<bool> = tr.iter().map(|&i| y[i]).collect();
        let yte: Vec<bool> = te.iter().map(|&i| y[i]).collect();
        let st = Standardizer::fit(&xtr);
        let m = fit(spec, &st.transform(&xtr), &ytr)?;
        let thr = best_threshold(&m.predict_score(&st.transform(&xtr)), &ytr)?.threshold;
        let s = m.predict_score(&st.transform(&x.select_rows(&te)));
        auc_sum += auc(&s, &yte)?;
        tp += s.iter().zip(&yte).filter(|(&v, &l)| l && v >= thr).count();
        tn += s.iter().zip(&yte).filter(|(&v, &l)| !l && v < thr).count();
    }
    let n1 = y.iter().filter(|&&v| v).count();
    let n0 = y.len() - n1;
    let (se, sp) = (tp as f64 / n1 as f64, tn as f64 / n0 as f64);
    Ok(Metrics { auc: auc_sum / folds.k as f64, gmean: 100.0 * (se * sp).sqrt(), se, sp })
}

/// Selects features on the training cohort (or keeps all of them when
/// `selection` is `None`), estimates training performance by stratified CV,
/// refits on the whole training cohort and scores the held-out cohort once
/// with the training-frozen threshold.
pub fn evaluate_configuration(
    key: ConfigKey,
    data: &EvalData,
    selection: Option<&SelectionConfig>,
    spec: &ModelSpec,
    seed_value: u64,
) -> Result<EvalReport, EvalError> {
    check_shape(data)?;
    let sel = match selection {
        Some(cfg) => Some(select(data.train_x, data.names, data.train_y, data.profile, cfg, spec)?),
        None => None,
    };
    evaluate_selection(key, data, sel, spec, seed_value)
}

/// Trains and tests on a fixed selection (`None` keeps every feature).
pub fn evaluate_selection(
    key: ConfigKey,
    data: &EvalData,
    sel: Option<SelectionResult>,
    spec: &ModelSpec,
    seed_value: u64,
) -> Result<EvalReport, EvalError> {
    check_shape(data)?;
    let features: Vec<String> = sel.as_ref().map_or_else(|| data.names.to_vec(), |s| s.selected.clone());
    let cols = cols_of(data.names, &features)?;
    let xtr = data.train_x.select_columns(&cols);
    let train = train_metrics(&xtr, data.train_y, spec, seed_value)?;

    let st = Standardizer::fit(&xtr);
    let model = fit(spec, &st.transform(&xtr), data.train_y)?;
    let threshold = best_threshold(&model.predict_score(&st.transform(&xtr)), data.train_y)?.threshold;
    let scores = model.predict_score(&st.transform(&data.test_x.select_columns(&cols)));
    let op = gmean_se_sp(&scores, data.test_y, threshold)?;
    let test = Metrics { auc: auc(&scores, data.test_y)?, gmean: op.gmean, se: op.se, sp: op.sp };
    let (avg_icc, sd_icc) = match &sel {
        Some(s) => (s.avg_icc, s.sd_icc),
        None => icc_summary(data.profile, &features),
    };
    Ok(EvalReport {
        key,
        train,
        test,
        nf: features.len(),
        avg_icc,
        sd_icc,
        change: None,
        selection: sel,
        params: Some(FittedParams {
            features,
            mean: st.mean,
            sd: st.sd,
            weights: model.weights,
            bias: model.bias,
            threshold,
        }),
        status: String::new(),
        best: false,
    })
}

/// Fills change-vs-baseline for selection rows and flags, per
/// (metric, scope, aggregation, region, model), the successful selection
/// row with the highest training AUC (first in key order on ties). Rows
/// are sorted by key with the baseline first in each group.
pub fn finalize_reports(rows: &mut Vec<EvalReport>) {
    rows.sort_by(|a, b| a.key.cmp(&b.key));
    let baselines: Vec<(ConfigKey, Metrics)> = rows
        .iter()
        .filter(|r| r.key.algorithm.is_none() && r.ok())
        .map(|r| (r.key.clone(), r.test))
        .collect();
    for r in rows.iter_mut() {
        r.best = false;
        r.change = None;
        if r.key.algorithm.is_some() && r.ok() {
            if let Some((_, b)) = baselines.iter().find(|(k, _)| *k == r.key.baseline()) {
                r.change = Some(change_vs_baseline(&r.test, b));
            }
        }
    }
    let mut i = 0;
    while i < rows.len() {
        let g = rows[i].key.group();
        let mut j = i;
        let mut best: Option<usize> = None;
        while j < rows.len() && rows[j].key.group() == g {
            if rows[j].key.algorithm.is_some()
                && rows[j].ok()
                && best.is_none_or(|b| rows[j].train.auc > rows[b].train.auc)
            {
                best = Some(j);
            }
            j += 1;
        }
        if let Some(b) = best {
            rows[b].best = true;
        }
        i = j;
    }
}

pub const REPORT_HEADER: [&str; 25] = [
    "metric",
    "site_scope",
    "aggregation",
    "region",
    "model",
    "algorithm",
    "regime",
    "train_auc",
    "train_gmean",
    "train_se",
    "train_sp",
    "test_auc",
    "test_gmean",
    "test_se",
    "test_sp",
    "change_auc",
    "change_gmean",
    "change_se",
    "change_sp",
    "nf",
    "avg_icc",
    "sd_icc",
    "best",
    "selected",
    "status",
];

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Report table with one row per configuration; empty cells mark values
/// that do not apply (change on baseline rows, metrics of failed rows).
pub fn report_csv(rows: &[EvalReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER).expect("in-memory csv");
    for r in rows {
        let k = &r.key;
        let change = r.change.map_or_else(|| vec![String::new(); 4], |c| c.iter().map(|&v| num(v)).collect());
        let mut rec = vec![
            k.metric.to_string(),
            k.site_scope.to_string(),
            k.aggregation.to_string(),
            k.region.to_string(),
            k.model.to_string(),
            k.algorithm.map_or("none".into(), |a| a.to_string()),
            k.regime.map_or("none".into(), |g| g.to_string()),
        ];
        rec.extend([r.train.auc, r.train.gmean, r.train.se, r.train.sp].map(num));
        rec.extend([r.test.auc, r.test.gmean, r.test.se, r.test.sp].map(num));
        rec.extend(change);
        rec.push(if r.ok() { r.nf.to_string() } else { String::new() });
        rec.push(num(r.avg_icc));
        rec.push(num(r.sd_icc));
        rec.push(if r.best { "1".into() } else { "0".into() });
        rec.push(r.selection.as_ref().map_or(String::new(), |s| s.selected.join(";")));
        rec.push(r.status.clone());
        w.write_record(&rec).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8")
}

/// Reads rows written by [`report_csv`]. Selection details beyond the
/// selected names and their ICC summary are not part of the table and come
/// back empty.
pub fn parse_report_csv(text: &str) -> Result<Vec<EvalReport>, EvalError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| EvalError::Parse { row: 0, message: e.to_string() })?.clone();
    if header.iter().ne(REPORT_HEADER) {
        return Err(EvalError::Parse { row: 0, message: "unexpected header".into() });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let row = i + 1;
        let err = |message: String| EvalError::Parse { row, message };
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let f = |j: usize| -> Result<f64, EvalError> {
            let c = &rec[j];
            if c.is_empty() {
                Ok(f64::NAN)
            } else {
                c.parse().map_err(|_| err(format!("bad number '{c}' in {}", REPORT_HEADER[j])))
            }
        };
        let opt = |j: usize| -> Option<&str> { (&rec[j] != "none").then(|| &rec[j]) };
        let key = ConfigKey {
            metric: rec[0].parse().map_err(err)?,
            site_scope: rec[1].parse().map_err(err)?,
            aggregation: rec[2].parse().map_err(err)?,
            region: rec[3].parse().map_err(err)?,
            model: rec[4].parse().map_err(err)?,
            algorithm: opt(5).map(str::parse).transpose().map_err(err)?,
            regime: opt(6).map(str::parse).transpose().map_err(err)?,
        };
        let metrics = |o: usize| -> Result<Metrics, EvalError> {
            Ok(Metrics { auc: f(o)?, gmean: f(o + 1)?, se: f(o + 2)?, sp: f(o + 3)? })
        };
        let status = rec[24].to_string();
        let selected: Vec<String> = if rec[23].is_empty() { vec![] } else { rec[23].split(';').map(str::to_string).collect() };
        let (avg_icc, sd_icc) = (f(20)?, f(21)?);
        let selection = match (key.algorithm, key.regime) {
            (Some(algorithm), Some(regime)) if status.is_empty() => Some(SelectionResult {
                algorithm,
                regime,
                selected,
                ranking: vec![],
                pool: vec![],
                trace: vec![],
                cv_auc: f64::NAN,
                avg_icc,
                sd_icc,
            }),
            _ => None,
        };
        let change = if rec[15].is_empty() && rec[16].is_empty() && rec[17].is_empty() && rec[18].is_empty() {
            None
        } else {
            Some([f(15)?, f(16)?, f(17)?, f(18)?])
        };
        rows.push(EvalReport {
            key,
            train: metrics(7)?,
            test: metrics(11)?,
            nf: if rec[19].is_empty() { 0 } else { rec[19].parse().map_err(|_| err("bad nf".into()))? },
            avg_icc,
            sd_icc,
            change,
            selection,
            params: None,
            status,
            best: &rec[22] == "1",
        });
    }
    Ok(rows)
}

/// Markdown summary in the layout of the usual results table (values
/// rounded to two decimals, G-Mean/SE/SP in percent).
pub fn report_markdown(rows: &[EvalReport]) -> String {
    let mut out = String::from(
        "| Metric | Scope | Agg | Region | Model | FS | Regime | Train AUC | Train GMean | Train SE | Train SP | Test AUC | Test GMean | Test SE | Test SP | Change AUC % | NF | Avg ICC |\n",
    );
    out.push_str(&format!("|{}\n", "---|".repeat(18)));
    let f2 = |v: f64| if v.is_nan() { "-".to_string() } else { format!("{v:.2}") };
    let pct = |v: f64| if v.is_nan() { "-".to_string() } else { format!("{:.1}", 100.0 * v) };
    for r in rows {
        let k = &r.key;
        let name = |b: bool, s: String| if b { format!("**{s}**") } else { s };
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |\n",
            k.metric,
            k.site_scope,
            k.aggregation,
            k.region,
            k.model,
            name(r.best, k.algorithm.map_or("none".into(), |a| a.to_string())),
            k.regime.map_or("none".into(), |g| g.to_string()),
            f2(r.train.auc),
            f2(r.train.gmean),
            pct(r.train.se),
            pct(r.train.sp),
            f2(r.test.auc),
            f2(r.test.gmean),
            pct(r.test.se),
            pct(r.test.sp),
            r.change.map_or("-".into(), |c| f2(c[0])),
            if r.ok() { r.nf.to_string() } else { "-".into() },
            if r.avg_icc.is_nan() { "-".into() } else { format!("{:.2} ± {:.2}", r.avg_icc, r.sd_icc) },
        ));
        if !r.ok() {
            out.push_str(&format!("|  failed: {} |\n", r.status.replace('|', "/")));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn key(alg: Option<Algorithm>) -> ConfigKey {
        ConfigKey {
            metric: ResponseMetric::VolR,
            site_scope: SiteScope::All,
            aggregation: Aggregation::Merged,
            region: Region::Full,
            model: ModelKind::Lda,
            algorithm: alg,
            regime: alg.map(|_| Regime::Predictive),
        }
    }

    fn cohort(seed: u64, n: usize) -> (DMatrix<f64>, Vec<bool>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let x = DMatrix::from_fn(n, 6, |i, j| {
            let noise: f64 = rng.sample(StandardNormal);
            if j == 0 {
                y[i] as u8 as f64 * 4.0 + 0.1 * noise
            } else {
                noise
            }
        });
        (x, y)
    }

    #[test]
    fn planted_perfect_feature_on_identical_cohorts() {
        let (x, y) = cohort(1, 60);
        let names: Vec<String> = (0..6).map(|j| format!("f{j}")).collect();
        let prof = RobustnessProfile::uniform(&names, 1.0);
        let data = EvalData { names: &names, train_x: &x, train_y: &y, test_x: &x, test_y: &y, profile: &prof };
        let cfg = SelectionConfig::new(Algorithm::Sfs, Regime::Predictive);
        let r = evaluate_configuration(key(Some(Algorithm::Sfs)), &data, Some(&cfg), &ModelSpec::of(ModelKind::Lda), 0).unwrap();
        assert_eq!(r.test.auc, 1.0);
        assert_eq!(r.selection.unwrap().selected[0], "f0");
        assert!((r.test.gmean - 100.0 * (r.test.se * r.test.sp).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn permuted_test_labels_change_no_fitted_parameter() {
        let (x, y) = cohort(2, 60);
        let (xt, yt) = cohort(3, 40);
        let mut yp = yt.clone();
        yp.rotate_left(7);
        let names: Vec<String> = (0..6).map(|j| format!("f{j}")).collect();
        let prof = RobustnessProfile::uniform(&names, 0.9);
        let cfg = SelectionConfig::new(Algorithm::Lasso, Regime::Weighted);
        let spec = ModelSpec::default();
        let a = EvalData { names: &names, train_x: &x, train_y: &y, test_x: &xt, test_y: &yt, profile: &prof };
        let b = EvalData { test_y: &yp, ..a };
        let ra = evaluate_configuration(key(Some(Algorithm::Lasso)), &a, Some(&cfg), &spec, 5).unwrap();
        let rb = evaluate_configuration(key(Some(Algorithm::Lasso)), &b, Some(&cfg), &spec, 5).unwrap();
        assert_eq!(ra.params, rb.params);
        assert_eq!(ra.selection, rb.selection);
        assert_eq!(ra.train, rb.train);
    }

    #[test]
    fn change_and_best_flag() {
        let mut base = EvalReport::failed(key(None), String::new());
        base.test = Metrics { auc: 0.8, gmean: 50.0, se: 0.5, sp: 0.5 };
        let mut a = EvalReport::failed(key(Some(Algorithm::Fscore)), String::new());
        a.test = Metrics { auc: 0.88, gmean: 60.0, se: 0.6, sp: 0.6 };
        a.train.auc = 0.7;
        let mut b = EvalReport::failed(key(Some(Algorithm::Mi)), String::new());
        b.train.auc = 0.9;
        b.test = a.test;
        let mut rows = vec![b, a, base];
        finalize_reports(&mut rows);
        assert_eq!(rows[0].key.algorithm, None);
        assert!(rows[0].change.is_none());
        let c = rows[1].change.unwrap();
        assert!((c[0] - 10.0).abs() < 1e-9 && (c[1] - 20.0).abs() < 1e-9);
        assert!(!rows[1].best && rows[2].best);
        let csv = report_csv(&rows);
        assert_eq!(csv.lines().next().unwrap().split(',').count(), REPORT_HEADER.len());
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn report_csv_round_trips() {
        let (x, y) = cohort(4, 60);
        let names: Vec<String> = (0..6).map(|j| format!("f{j}")).collect();
        let prof = RobustnessProfile::uniform(&names, 0.9);
        let data = EvalData { names: &names, train_x: &x, train_y: &y, test_x: &x, test_y: &y, profile: &prof };
        let spec = ModelSpec::of(ModelKind::Lda);
        let cfg = SelectionConfig::new(Algorithm::Fscore, Regime::Predictive);
        let mut rows = vec![
            evaluate_configuration(key(None), &data, None, &spec, 1).unwrap(),
            evaluate_configuration(key(Some(Algorithm::Fscore)), &data, Some(&cfg), &spec, 1).unwrap(),
            EvalReport::failed(key(Some(Algorithm::Mi)), "empty pool, see log".into()),
        ];
        finalize_reports(&mut rows);
        let text = report_csv(&rows);
        let back = parse_report_csv(&text).unwrap();
        assert_eq!(report_csv(&back), text);
        assert_eq!(back[1].selection.as_ref().unwrap().selected, rows[1].selection.as_ref().unwrap().selected);
    }
}
