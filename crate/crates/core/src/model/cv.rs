use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use super::{auc, class_counts, fit, ModelError, ModelSpec, Standardizer};
use crate::seed;

/// Fold index per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Folds {
    pub k: usize,
    pub assignment: Vec<usize>,
}

impl Folds {
    pub fn train(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn test(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }
}

/// Stratified k-fold split: each class is shuffled with a seeded RNG and
/// dealt round-robin, so every fold holds both classes.
pub fn stratified_folds(y: &[bool], k: usize, seed_value: u64) -> Result<Folds, ModelError> {
    let (c0, c1) = class_counts(y);
    for (class, count) in [(0u8, c0), (1u8, c1)] {
        if count < k {
            return Err(ModelError::Stratification { class, count, folds: k });
        }
    }
    let mut rng = seed::rng(seed_value);
    let mut assignment = vec![0usize; y.len()];
    let mut offset = 0;
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        for (r, &i) in idx.iter().enumerate() {
            assignment[i] = (r + offset) % k;
        }
        // continue the deal where the first class stopped to balance sizes
        offset = (offset + idx.len()) % k;
    }
    Ok(Folds { k, assignment })
}

pub(crate) fn rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    x.select_rows(idx)
}

pub(crate) fn pick<T: Copy>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i]).collect()
}

/// Mean held-out-fold AUC of a model, standardising with each training
/// fold's statistics.
pub fn cv_auc(spec: &ModelSpec, x: &DMatrix<f64>, y: &[bool], folds: &Folds) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for f in 0..folds.k {
        let (tr, te) = (folds.train(f), folds.test(f));
        let xtr = rows(x, &tr);
        let st = Standardizer::fit(&xtr);
        let m = fit(spec, &st.transform(&xtr), &pick(y, &tr))?;
        let s = m.predict_score(&st.transform(&rows(x, &te)));
        total += auc(&s, &pick(y, &te))?;
    }
    Ok(total / folds.k as f64)
}
