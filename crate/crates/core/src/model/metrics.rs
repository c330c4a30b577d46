use super::{class_counts, ModelError};

/// Area under the ROC curve as the Mann-Whitney statistic; tied scores
/// between classes count one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, ModelError> {
    if scores.len() != labels.len() {
        return Err(ModelError::Shape(format!("{} scores vs {} labels", scores.len(), labels.len())));
    }
    let (n0, n1) = class_counts(labels);
    if n0 == 0 || n1 == 0 {
        return Err(ModelError::SingleClass);
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(ModelError::NonFinite);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of mid-ranks of the positive class
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] {
                rank_sum += mid;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;
    Ok(u / (n0 as f64 * n1 as f64))
}

/// Sensitivity and specificity when `score >= threshold` predicts response.
pub fn se_sp(scores: &[f64], labels: &[bool], threshold: f64) -> Result<(f64, f64), ModelError> {
    let (n0, n1) = class_counts(labels);
    if n0 == 0 || n1 == 0 {
        return Err(ModelError::SingleClass);
    }
    let tp = scores.iter().zip(labels).filter(|(&s, &l)| l && s >= threshold).count();
    let tn = scores.iter().zip(labels).filter(|(&s, &l)| !l && s < threshold).count();
    Ok((tp as f64 / n1 as f64, tn as f64 / n0 as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    /// Percent, `100 * sqrt(se * sp)`.
    pub gmean: f64,
    pub se: f64,
    pub sp: f64,
}

/// G-Mean (percent), sensitivity and specificity at a fixed threshold.
pub fn gmean_se_sp(scores: &[f64], labels: &[bool], threshold: f64) -> Result<OperatingPoint, ModelError> {
    let (se, sp) = se_sp(scores, labels, threshold)?;
    Ok(OperatingPoint {
        threshold,
        gmean: 100.0 * (se * sp).sqrt(),
        se,
        sp,
    })
}

/// The threshold among the observed scores that maximises G-Mean; the
/// lowest such threshold wins ties.
pub fn best_threshold(scores: &[f64], labels: &[bool]) -> Result<OperatingPoint, ModelError> {
    let mut cands: Vec<f64> = scores.to_vec();
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    let mut best: Option<OperatingPoint> = None;
    for t in cands {
        let op = gmean_se_sp(scores, labels, t)?;
        if best.is_none_or(|b| op.gmean > b.gmean) {
            best = Some(op);
        }
    }
    best.ok_or(ModelError::SingleClass)
}
