use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::model::{auc, fit, Folds, ModelError, ModelSpec, Standardizer};

struct FoldData {
    xtr: DMatrix<f64>,
    ytr: Vec<bool>,
    xte: DMatrix<f64>,
    yte: Vec<bool>,
}

/// Inner-CV AUC of feature subsets with a memo. Columns are standardised
/// once per fold with that fold's training statistics, which is equivalent
/// to standardising each subset separately.
pub(crate) struct SubsetEval {
    folds: Vec<FoldData>,
    spec: ModelSpec,
    cache: Mutex<HashMap<Vec<usize>, f64>>,
}

impl SubsetEval {
    pub fn new(x: &DMatrix<f64>, y: &[bool], folds: &Folds, spec: &ModelSpec) -> SubsetEval {
        let folds = (0..folds.k)
            .map(|f| {
                let (tr, te) = (folds.train(f), folds.test(f));
                let xtr = x.select_rows(&tr);
                let st = Standardizer::fit(&xtr);
                FoldData {
                    xtr: st.transform(&xtr),
                    ytr: tr.iter().map(|&i| y[i]).collect(),
                    xte: st.transform(&x.select_rows(&te)),
                    yte: te.iter().map(|&i| y[i]).collect(),
                }
            })
            .collect();
        SubsetEval { folds, spec: *spec, cache: Mutex::new(HashMap::new()) }
    }

    /// Mean held-out-fold AUC; the empty set scores 0.5.
    pub fn auc(&self, set: &[usize]) -> Result<f64, ModelError> {
        if set.is_empty() {
            return Ok(0.5);
        }
        let mut key = set.to_vec();
        key.sort_unstable();
        if let Some(&v) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(v);
        }
        let mut total = 0.0;
        for fd in &self.folds {
            let m = fit(&self.spec, &fd.xtr.select_columns(&key), &fd.ytr)?;
            total += auc(&m.predict_score(&fd.xte.select_columns(&key)), &fd.yte)?;
        }
        let v = total / self.folds.len() as f64;
        self.cache.lock().expect("cache lock").insert(key, v);
        Ok(v)
    }

    pub fn auc_many(&self, sets: &[Vec<usize>]) -> Result<Vec<f64>, ModelError> {
        sets.par_iter().map(|s| self.auc(s)).collect()
    }
}
