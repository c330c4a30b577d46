//! Linear classifiers, cross-validation, response labels and metrics.

mod cv;
mod labels;
mod linear;
mod metrics;

use thiserror::Error;

pub use cv::{cv_auc, stratified_folds, Folds};
pub use labels::{
    derive_crs, derive_diar, derive_label, derive_recist, derive_volr, LabelInputs, ResponseLabel,
    ResponseMetric, DIAR_THRESHOLD_PCT, VOLR_THRESHOLD_PCT,
};
pub use linear::{fit, FittedModel, ModelKind, ModelSpec, Standardizer};
pub use metrics::{auc, best_threshold, gmean_se_sp, se_sp, OperatingPoint};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("metric undefined: only one class present")]
    SingleClass,
    #[error("need at least {needed} samples per class, got {class0} and {class1}")]
    TooFewPerClass { needed: usize, class0: usize, class1: usize },
    #[error("singular pooled covariance; use a shrinkage gamma > 0")]
    Singular,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite input values")]
    NonFinite,
    #[error("stratification impossible: class {class} has {count} samples for {folds} folds")]
    Stratification { class: u8, count: usize, folds: usize },
    #[error("label unavailable: {0}")]
    LabelUnavailable(String),
    #[error("value out of range: {0}")]
    Range(String),
}

pub(crate) fn class_counts(y: &[bool]) -> (usize, usize) {
    let pos = y.iter().filter(|&&v| v).count();
    (y.len() - pos, pos)
}
