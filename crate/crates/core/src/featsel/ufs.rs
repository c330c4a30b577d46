use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::SelectionError;
use crate::model::{class_counts, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UfsConfig {
    /// Pairs with |Pearson r| above this keep only the higher-F feature.
    pub max_abs_corr: f64,
    /// Features with ANOVA p-value above this are dropped.
    pub max_p: f64,
}

impl Default for UfsConfig {
    fn default() -> Self {
        UfsConfig { max_abs_corr: 0.9, max_p: 0.5 }
    }
}

impl UfsConfig {
    pub fn validate(&self) -> Result<(), SelectionError> {
        if !(0.0..=1.0).contains(&self.max_abs_corr) || !(0.0..=1.0).contains(&self.max_p) {
            return Err(SelectionError::Config(format!("UFS thresholds out of [0, 1]: {self:?}")));
        }
        Ok(())
    }
}

/// One-way ANOVA F statistic of each column against a binary label, with
/// its p-value from F(1, n - 2). Constant columns give F = 0, p = 1.
pub fn anova_f(x: &DMatrix<f64>, y: &[bool]) -> Vec<(f64, f64)> {
    let n = y.len();
    let (n0, n1) = class_counts(y);
    let dist = FisherSnedecor::new(1.0, (n - 2) as f64).expect("n > 2");
    x.column_iter()
        .map(|c| {
            let (mut s0, mut s1) = (0.0, 0.0);
            for (v, &l) in c.iter().zip(y) {
                if l {
                    s1 += v;
                } else {
                    s0 += v;
                }
            }
            let (m0, m1) = (s0 / n0 as f64, s1 / n1 as f64);
            let m = (s0 + s1) / n as f64;
            let between = n0 as f64 * (m0 - m).powi(2) + n1 as f64 * (m1 - m).powi(2);
            let within: f64 = c
                .iter()
                .zip(y)
                .map(|(v, &l)| (v - if l { m1 } else { m0 }).powi(2))
                .sum();
            let scale = c.iter().map(|v| (v - m).powi(2)).sum::<f64>();
            if !(between > 1e-14 * scale) || !(scale > 0.0) {
                return (0.0, 1.0);
            }
            if within <= 0.0 {
                return (f64::INFINITY, 0.0);
            }
            let f = between / (within / (n - 2) as f64);
            (f, dist.sf(f))
        })
        .collect()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Univariate pre-filter. Features are visited in decreasing F order and
/// kept unless strongly correlated with an already-kept feature; survivors
/// with p above the cut are then dropped. Returns kept column indices in
/// ascending order.
pub fn ufs_prefilter(x: &DMatrix<f64>, y: &[bool], cfg: &UfsConfig) -> Result<Vec<usize>, SelectionError> {
    if x.nrows() != y.len() {
        return Err(SelectionError::Shape(format!("{} rows vs {} labels", x.nrows(), y.len())));
    }
    let (c0, c1) = class_counts(y);
    if c0 < 2 || c1 < 2 {
        return Err(ModelError::TooFewPerClass { needed: 2, class0: c0, class1: c1 }.into());
    }
    let stats = anova_f(x, y);
    let mut order: Vec<usize> = (0..x.ncols()).collect();
    order.sort_by(|&a, &b| stats[b].0.total_cmp(&stats[a].0).then(a.cmp(&b)));
    let cols: Vec<Vec<f64>> = x.column_iter().map(|c| c.iter().cloned().collect()).collect();
    let mut kept: Vec<usize> = Vec::new();
    for j in order {
        if kept.iter().all(|&k| pearson(&cols[j], &cols[k]).abs() <= cfg.max_abs_corr) {
            kept.push(j);
        }
    }
    kept.retain(|&j| stats[j].1 <= cfg.max_p);
    kept.sort_unstable();
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn labels(n: usize) -> Vec<bool> {
        (0..n).map(|i| i % 2 == 1).collect()
    }

    #[test]
    fn f_matches_squared_t() {
        // two groups {1,2,3} and {4,5,6,7}
        let x = DMatrix::from_column_slice(7, 1, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let y = [false, false, false, true, true, true, true];
        let (f, p) = anova_f(&x, &y)[0];
        // means 2 and 5.5, pooled variance (2 + 5) / 5
        let t2 = (3.5f64).powi(2) / (1.4 * (1.0 / 3.0 + 1.0 / 4.0));
        assert!((f - t2).abs() < 1e-12 * t2);
        // F(1, 5) upper tail at 15 is about 0.0118
        assert!(p > 0.011 && p < 0.0125, "{p}");
    }

    #[test]
    fn duplicated_column_keeps_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let y = labels(60);
        let a: Vec<f64> = y.iter().map(|&l| l as u8 as f64 + rng.sample::<f64, _>(StandardNormal)).collect();
        let mut data = a.clone();
        data.extend(&a);
        let x = DMatrix::from_column_slice(60, 2, &data);
        assert_eq!(ufs_prefilter(&x, &y, &UfsConfig::default()).unwrap().len(), 1);
    }

    #[test]
    fn label_copy_survives_and_noise_drops_half_the_time() {
        let n = 200;
        let y = labels(n);
        let mut dropped = 0;
        let draws = 400;
        for s in 0..draws {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(s);
            let mut data: Vec<f64> = y.iter().map(|&l| l as u8 as f64 + 1e-6 * rng.random::<f64>()).collect();
            data.extend((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let x = DMatrix::from_column_slice(n, 2, &data);
            let kept = ufs_prefilter(&x, &y, &UfsConfig::default()).unwrap();
            assert_eq!(kept[0], 0);
            if !kept.contains(&1) {
                dropped += 1;
            }
        }
        let rate = dropped as f64 / draws as f64;
        // p is uniform under the null, so P(p > 0.5) = 0.5
        assert!(rate > 0.4 && rate < 0.6, "drop rate {rate}");
    }

    #[test]
    fn constant_column_dropped() {
        let y = labels(10);
        let x = DMatrix::from_element(10, 1, 3.0);
        assert!(ufs_prefilter(&x, &y, &UfsConfig::default()).unwrap().is_empty());
    }
}
