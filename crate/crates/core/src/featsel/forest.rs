use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;

use crate::seed;

fn gini(c0: f64, c1: f64) -> f64 {
    let n = c0 + c1;
    if n == 0.0 {
        return 0.0;
    }
    let (p0, p1) = (c0 / n, c1 / n);
    1.0 - p0 * p0 - p1 * p1
}

struct Grower<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [bool],
    max_depth: usize,
    mtry: usize,
    n_total: f64,
    importance: Vec<f64>,
}

impl Grower<'_> {
    fn grow<R: Rng>(&mut self, idx: &mut [usize], depth: usize, rng: &mut R) {
        let n = idx.len();
        let c1 = idx.iter().filter(|&&i| self.y[i]).count() as f64;
        let c0 = n as f64 - c1;
        if depth >= self.max_depth || n < 2 || c0 == 0.0 || c1 == 0.0 {
            return;
        }
        let parent = gini(c0, c1);
        let p = self.x.ncols();
        // (feature, threshold, weighted child impurity)
        let mut best: Option<(usize, f64, f64)> = None;
        let mut vals: Vec<(f64, bool)> = Vec::with_capacity(n);
        for f in sample(rng, p, self.mtry.min(p)).into_iter() {
            vals.clear();
            vals.extend(idx.iter().map(|&i| (self.x[(i, f)], self.y[i])));
            vals.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (mut l0, mut l1) = (0.0, 0.0);
            for s in 0..n - 1 {
                if vals[s].1 {
                    l1 += 1.0;
                } else {
                    l0 += 1.0;
                }
                if vals[s].0 == vals[s + 1].0 {
                    continue;
                }
                let nl = (s + 1) as f64;
                let nr = n as f64 - nl;
                let child = (nl * gini(l0, l1) + nr * gini(c0 - l0, c1 - l1)) / n as f64;
                if best.is_none_or(|b| child < b.2) {
                    best = Some((f, 0.5 * (vals[s].0 + vals[s + 1].0), child));
                }
            }
        }
        let Some((f, thr, child)) = best else { return };
        self.importance[f] += n as f64 / self.n_total * (parent - child);
        let mut split = 0;
        for k in 0..n {
            if self.x[(idx[k], f)] <= thr {
                idx.swap(k, split);
                split += 1;
            }
        }
        let (left, right) = idx.split_at_mut(split);
        self.grow(left, depth + 1, rng);
        self.grow(right, depth + 1, rng);
    }
}

/// Mean decrease in Gini impurity from a random forest of depth-limited
/// trees on bootstrap samples with `sqrt(p)` candidate features per split.
/// Importances are normalised to sum to one (all zero if no split exists).
pub fn gini_importance(x: &DMatrix<f64>, y: &[bool], n_trees: usize, max_depth: usize, seed_value: u64) -> Vec<f64> {
    let (n, p) = x.shape();
    let mut g = Grower {
        x,
        y,
        max_depth,
        mtry: ((p as f64).sqrt().floor() as usize).max(1),
        n_total: n as f64,
        importance: vec![0.0; p],
    };
    for t in 0..n_trees {
        let mut rng = seed::rng(seed::mix(seed_value, t as u64));
        let mut idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        g.grow(&mut idx, 0, &mut rng);
    }
    let total: f64 = g.importance.iter().sum();
    if total > 0.0 {
        g.importance.iter().map(|v| v / total).collect()
    } else {
        g.importance
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn informative_feature_dominates() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let n = 120;
        let y: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let mut data: Vec<f64> = y.iter().map(|&l| l as u8 as f64 + 0.3 * rng.random::<f64>()).collect();
        for _ in 0..8 {
            data.extend((0..n).map(|_| rng.random::<f64>()));
        }
        let x = DMatrix::from_column_slice(n, 9, &data);
        let imp = gini_importance(&x, &y, 200, 4, 1);
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(imp[1..].iter().all(|&v| v < imp[0]));
        assert_eq!(imp, gini_importance(&x, &y, 200, 4, 1));
    }

    #[test]
    fn constant_features_have_no_importance() {
        let x = DMatrix::from_element(10, 3, 1.0);
        let y: Vec<bool> = (0..10).map(|i| i < 5).collect();
        assert_eq!(gini_importance(&x, &y, 10, 4, 0), vec![0.0; 3]);
    }
}
