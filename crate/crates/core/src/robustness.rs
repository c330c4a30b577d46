//! Feature robustness to segmentation changes via intraclass correlation.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};
use thiserror::Error;

use crate::cohort::FeatureMatrix;

/// Selection rules treat a feature as robust when its ICC exceeds this.
pub const ROBUST_ICC: f64 = 0.8;
/// Reporting category bounds.
pub const EXCELLENT_ICC: f64 = 0.9;
pub const MEDIUM_ICC: f64 = 0.7;

#[derive(Debug, Error)]
pub enum RobustnessError {
    #[error("need at least 2 subjects and 2 raters, got {subjects}x{raters}")]
    TooSmall { subjects: usize, raters: usize },
    #[error("measurement matrix contains NaN")]
    NaN,
    #[error("feature matrices are not aligned: {0}")]
    Alignment(String),
    #[error("no perturbation replicates supplied")]
    NoReplicates,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("robustness csv: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum IccForm {
    /// Two-way random effects, absolute agreement, single measurement.
    #[default]
    #[serde(rename = "icc2_1")]
    Icc21,
    /// Two-way mixed effects, consistency, single measurement.
    #[serde(rename = "icc3_1")]
    Icc31,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Icc {
    pub icc: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub ms_rows: f64,
    pub ms_cols: f64,
    pub ms_err: f64,
}

fn f_quantile(p: f64, d1: f64, d2: f64) -> f64 {
    match FisherSnedecor::new(d1, d2) {
        Ok(f) => f.inverse_cdf(p),
        Err(_) => f64::NAN,
    }
}

/// ICC of a subjects x raters matrix with a 95% confidence interval.
pub fn compute_icc(x: &DMatrix<f64>, form: IccForm) -> Result<Icc, RobustnessError> {
    let (n, k) = x.shape();
    if n < 2 || k < 2 {
        return Err(RobustnessError::TooSmall { subjects: n, raters: k });
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(RobustnessError::NaN);
    }
    let (nf, kf) = (n as f64, k as f64);
    let grand = x.mean();
    let row_means: Vec<f64> = (0..n).map(|i| x.row(i).mean()).collect();
    let col_means: Vec<f64> = (0..k).map(|j| x.column(j).mean()).collect();
    let ss_total: f64 = x.iter().map(|v| (v - grand).powi(2)).sum();
    let ss_rows: f64 = kf * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_cols: f64 = nf * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_err = (ss_total - ss_rows - ss_cols).max(0.0);
    let ms_rows = ss_rows / (nf - 1.0);
    let ms_cols = ss_cols / (kf - 1.0);
    let ms_err = ss_err / ((nf - 1.0) * (kf - 1.0));

    // all measurements identical, or every rater reporting the same value
    // for each subject: perfect agreement by convention, free of round-off
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let raters_agree = (0..n).all(|i| (1..k).all(|j| x[(i, j)] == x[(i, 0)]));
    if raters_agree || ss_total <= (1e-14 * scale).powi(2) * (nf * kf) {
        return Ok(Icc { icc: 1.0, ci_lo: 1.0, ci_hi: 1.0, ms_rows, ms_cols, ms_err });
    }

    let alpha = 0.05;
    let (icc, mut lo, mut hi) = match form {
        IccForm::Icc21 => {
            let icc = (ms_rows - ms_err) / (ms_rows + (kf - 1.0) * ms_err + kf * (ms_cols - ms_err) / nf);
            let (lo, hi) = if ms_err > 0.0 {
                let fc = ms_cols / ms_err;
                let a = nf * (1.0 + (kf - 1.0) * icc) - kf * icc;
                let vn = (kf - 1.0) * (nf - 1.0) * (kf * icc * fc + a).powi(2);
                let vd = (nf - 1.0) * kf * kf * icc * icc * fc * fc + a * a;
                let v = vn / vd;
                let fu = f_quantile(1.0 - alpha / 2.0, nf - 1.0, v);
                let fl = f_quantile(1.0 - alpha / 2.0, v, nf - 1.0);
                let c = kf * ms_cols + (kf * nf - kf - nf) * ms_err;
                (
                    nf * (ms_rows - fu * ms_err) / (fu * c + nf * ms_rows),
                    nf * (fl * ms_rows - ms_err) / (c + nf * fl * ms_rows),
                )
            } else {
                (icc, icc)
            };
            (icc, lo, hi)
        }
        IccForm::Icc31 => {
            let icc = (ms_rows - ms_err) / (ms_rows + (kf - 1.0) * ms_err);
            let (lo, hi) = if ms_err > 0.0 {
                let f1 = ms_rows / ms_err;
                let df_e = (nf - 1.0) * (kf - 1.0);
                let fl = f1 / f_quantile(1.0 - alpha / 2.0, nf - 1.0, df_e);
                let fu = f1 * f_quantile(1.0 - alpha / 2.0, df_e, nf - 1.0);
                ((fl - 1.0) / (fl + kf - 1.0), (fu - 1.0) / (fu + kf - 1.0))
            } else {
                (icc, icc)
            };
            (icc, lo, hi)
        }
    };
    if !lo.is_finite() {
        lo = icc;
    }
    if !hi.is_finite() {
        hi = icc;
    }
    Ok(Icc {
        icc,
        ci_lo: lo.min(icc),
        ci_hi: hi.max(icc),
        ms_rows,
        ms_cols,
        ms_err,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Excellent,
    Medium,
    Poor,
}

impl Category {
    pub fn of(icc: f64) -> Category {
        if icc >= EXCELLENT_ICC {
            Category::Excellent
        } else if icc >= MEDIUM_ICC {
            Category::Medium
        } else {
            Category::Poor
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Excellent => "excellent",
            Category::Medium => "medium",
            Category::Poor => "poor",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "excellent" => Ok(Category::Excellent),
            "medium" => Ok(Category::Medium),
            "poor" => Ok(Category::Poor),
            _ => Err(format!("unknown category '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRobustness {
    pub feature: String,
    pub icc: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RobustnessProfile {
    pub entries: Vec<FeatureRobustness>,
    index: HashMap<String, usize>,
}

impl RobustnessProfile {
    pub fn new(entries: Vec<FeatureRobustness>) -> RobustnessProfile {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.feature.clone(), i))
            .collect();
        RobustnessProfile { entries, index }
    }

    /// Every feature gets ICC 1 (used when robustness is irrelevant).
    pub fn uniform(features: &[String], icc: f64) -> RobustnessProfile {
        RobustnessProfile::new(
            features
                .iter()
                .map(|f| FeatureRobustness {
                    feature: f.clone(),
                    icc,
                    ci_lo: icc,
                    ci_hi: icc,
                    category: Category::of(icc),
                })
                .collect(),
        )
    }

    pub fn get(&self, feature: &str) -> Option<&FeatureRobustness> {
        self.index.get(feature).map(|&i| &self.entries[i])
    }

    pub fn icc(&self, feature: &str) -> Option<f64> {
        self.get(feature).map(|e| e.icc)
    }

    /// ICC clamped to [0, 1] for use in scoring; missing features count as 0.
    pub fn clamped(&self, feature: &str) -> f64 {
        self.icc(feature).map_or(0.0, |v| v.clamp(0.0, 1.0))
    }

    pub fn is_robust(&self, feature: &str) -> bool {
        self.icc(feature).is_some_and(|v| v > ROBUST_ICC)
    }

    pub fn covers(&self, features: &[String]) -> bool {
        features.iter().all(|f| self.index.contains_key(f))
    }

    pub fn category_counts(&self) -> [(Category, usize); 3] {
        let mut c = [(Category::Excellent, 0), (Category::Medium, 0), (Category::Poor, 0)];
        for e in &self.entries {
            match e.category {
                Category::Excellent => c[0].1 += 1,
                Category::Medium => c[1].1 += 1,
                Category::Poor => c[2].1 += 1,
            }
        }
        c
    }

    /// Counts of ICC values in ten bins of width 0.1 over [0, 1]
    /// (negative values in the first bin).
    pub fn histogram(&self) -> [usize; 10] {
        let mut h = [0usize; 10];
        for e in &self.entries {
            let b = ((e.icc.clamp(0.0, 1.0) * 10.0).floor() as usize).min(9);
            h[b] += 1;
        }
        h
    }

    pub fn restrict(&self, features: &[String]) -> RobustnessProfile {
        RobustnessProfile::new(
            features
                .iter()
                .filter_map(|f| self.get(f).cloned())
                .collect(),
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,icc,ci_lo,ci_hi,category\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{},{},{}\n", e.feature, e.icc, e.ci_lo, e.ci_hi, e.category));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<RobustnessProfile, RobustnessError> {
        let mut lines = text.lines();
        if lines.next() != Some("feature,icc,ci_lo,ci_hi,category") {
            return Err(RobustnessError::Format("bad header".into()));
        }
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let c: Vec<&str> = line.split(',').collect();
            let bad = || RobustnessError::Format(format!("row {}: '{line}'", i + 2));
            if c.len() != 5 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            entries.push(FeatureRobustness {
                feature: c[0].to_string(),
                icc: num(c[1])?,
                ci_lo: num(c[2])?,
                ci_hi: num(c[3])?,
                category: c[4].parse().map_err(|_| bad())?,
            });
        }
        Ok(RobustnessProfile::new(entries))
    }

    pub fn write(&self, path: &Path) -> Result<(), RobustnessError> {
        let io = |source| RobustnessError::Io { path: path.display().to_string(), source };
        let mut f = std::fs::File::create(path).map_err(io)?;
        f.write_all(self.to_csv().as_bytes()).map_err(io)
    }

    pub fn read(path: &Path) -> Result<RobustnessProfile, RobustnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| RobustnessError::Io { path: path.display().to_string(), source })?;
        RobustnessProfile::from_csv(&text)
    }
}

/// Per-feature ICC between the original extraction (rater 0) and the
/// perturbation replicates (raters 1..). Subjects with a NaN in any rater
/// are left out of that feature's ICC; a feature with fewer than two
/// usable subjects is reported with ICC 0.
pub fn profile_features(
    original: &FeatureMatrix,
    perturbed: &[FeatureMatrix],
    form: IccForm,
) -> Result<RobustnessProfile, RobustnessError> {
    if perturbed.is_empty() {
        return Err(RobustnessError::NoReplicates);
    }
    for (r, p) in perturbed.iter().enumerate() {
        if !original.aligned_with(p) {
            return Err(RobustnessError::Alignment(format!(
                "replicate {r} differs in features or patients"
            )));
        }
    }
    let k = perturbed.len() + 1;
    let n = original.n_patients();
    let entries: Vec<FeatureRobustness> = (0..original.n_features())
        .into_par_iter()
        .map(|j| {
            let rows: Vec<usize> = (0..n)
                .filter(|&i| {
                    !original.values()[(i, j)].is_nan()
                        && perturbed.iter().all(|p| !p.values()[(i, j)].is_nan())
                })
                .collect();
            let name = original.feature_names()[j].clone();
            let x = DMatrix::from_fn(rows.len(), k, |r, c| {
                let i = rows[r];
                if c == 0 {
                    original.values()[(i, j)]
                } else {
                    perturbed[c - 1].values()[(i, j)]
                }
            });
            match compute_icc(&x, form) {
                Ok(icc) => FeatureRobustness {
                    feature: name,
                    icc: icc.icc,
                    ci_lo: icc.ci_lo,
                    ci_hi: icc.ci_hi,
                    category: Category::of(icc.icc),
                },
                Err(_) => {
                    log::warn!("feature {name}: fewer than two complete subjects, ICC set to 0");
                    FeatureRobustness {
                        feature: name,
                        icc: 0.0,
                        ci_lo: 0.0,
                        ci_hi: 0.0,
                        category: Category::Poor,
                    }
                }
            }
        })
        .collect();
    Ok(RobustnessProfile::new(entries))
}
