use nalgebra::DMatrix;

use super::{forest, minmax, Ctx, Picked, SelectionError};
use crate::model::{class_counts, fit, ModelKind, ModelSpec};
use crate::seed;

/// Fisher score `(mu1 - mu0)^2 / (var1 + var0)` per column, population
/// variances. Columns without a mean difference score 0.
pub fn fisher_scores(x: &DMatrix<f64>, y: &[bool]) -> Vec<f64> {
    let (n0, n1) = class_counts(y);
    x.column_iter()
        .map(|c| {
            let mut m = [0.0; 2];
            for (v, &l) in c.iter().zip(y) {
                m[l as usize] += v;
            }
            m[0] /= n0 as f64;
            m[1] /= n1 as f64;
            let mut var = [0.0; 2];
            for (v, &l) in c.iter().zip(y) {
                var[l as usize] += (v - m[l as usize]).powi(2);
            }
            let num = (m[1] - m[0]).powi(2);
            if num == 0.0 {
                return 0.0;
            }
            num / (var[0] / n0 as f64 + var[1] / n1 as f64).max(1e-12)
        })
        .collect()
}

/// Absolute coefficient of a one-feature ridge logistic regression on the
/// standardised column.
pub fn ulr_scores(x: &DMatrix<f64>, y: &[bool]) -> Vec<f64> {
    let spec = ModelSpec::of(ModelKind::Lr);
    x.column_iter()
        .map(|c| {
            let n = c.len() as f64;
            let m = c.sum() / n;
            let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            if !(sd > 1e-12 * m.abs().max(1.0)) {
                return 0.0;
            }
            let z = DMatrix::from_iterator(c.len(), 1, c.iter().map(|v| (v - m) / sd));
            fit(&spec, &z, y).map_or(0.0, |f| f.weights[0].abs())
        })
        .collect()
}

/// ReliefF weights with `k` nearest hits and misses under the Manhattan
/// distance of range-normalised features.
pub fn relieff_scores(x: &DMatrix<f64>, y: &[bool], k: usize) -> Vec<f64> {
    let (n, p) = x.shape();
    let mut z = x.clone();
    for mut c in z.column_iter_mut() {
        let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let r = hi - lo;
        for v in c.iter_mut() {
            *v = if r > 0.0 { (*v - lo) / r } else { 0.0 };
        }
    }
    let dist = |a: usize, b: usize| (0..p).map(|j| (z[(a, j)] - z[(b, j)]).abs()).sum::<f64>();
    let mut w = vec![0.0; p];
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (dist(i, j), j)).collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let hits: Vec<usize> = others.iter().filter(|o| y[o.1] == y[i]).take(k).map(|o| o.1).collect();
        let misses: Vec<usize> = others.iter().filter(|o| y[o.1] != y[i]).take(k).map(|o| o.1).collect();
        for (j, wj) in w.iter_mut().enumerate() {
            if !hits.is_empty() {
                *wj -= hits.iter().map(|&h| (z[(i, j)] - z[(h, j)]).abs()).sum::<f64>() / hits.len() as f64;
            }
            if !misses.is_empty() {
                *wj += misses.iter().map(|&m| (z[(i, j)] - z[(m, j)]).abs()).sum::<f64>() / misses.len() as f64;
            }
        }
    }
    w.iter().map(|v| v / n as f64).collect()
}

/// Mutual information (nats) between each feature, discretised into
/// `bins` equal-frequency bins, and the label. Tied values share a bin.
pub fn mi_scores(x: &DMatrix<f64>, y: &[bool], bins: usize) -> Vec<f64> {
    let n = y.len();
    let nf = n as f64;
    let (n0, n1) = class_counts(y);
    let py = [n0 as f64 / nf, n1 as f64 / nf];
    x.column_iter()
        .map(|c| {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| c[a].total_cmp(&c[b]));
            let mut bin = vec![0usize; n];
            let mut r = 0;
            while r < n {
                let b = r * bins / n;
                let mut e = r;
                while e < n && c[order[e]] == c[order[r]] {
                    bin[order[e]] = b;
                    e += 1;
                }
                r = e;
            }
            let mut joint = vec![[0.0f64; 2]; bins];
            for i in 0..n {
                joint[bin[i]][y[i] as usize] += 1.0;
            }
            let mut mi = 0.0;
            for row in &joint {
                let pb = (row[0] + row[1]) / nf;
                for (cls, &cnt) in row.iter().enumerate() {
                    if cnt > 0.0 {
                        let pj = cnt / nf;
                        mi += pj * (pj / (pb * py[cls])).ln();
                    }
                }
            }
            mi.max(0.0)
        })
        .collect()
}

pub(crate) const RELIEF_K: usize = 10;
pub(crate) const MI_BINS: usize = 10;
pub(crate) const FOREST_TREES: usize = 200;
pub(crate) const FOREST_DEPTH: usize = 4;

fn raw_scores(ctx: &Ctx) -> Vec<f64> {
    use super::Algorithm::*;
    let s = match ctx.cfg.algorithm {
        Fscore => fisher_scores(&ctx.x, ctx.y),
        Ulr => ulr_scores(&ctx.x, ctx.y),
        Relief => relieff_scores(&ctx.x, ctx.y, RELIEF_K),
        Mi => mi_scores(&ctx.x, ctx.y, MI_BINS),
        Gini => forest::gini_importance(
            &ctx.x,
            ctx.y,
            FOREST_TREES,
            FOREST_DEPTH,
            seed::mix_str(ctx.cfg.seed, "forest"),
        ),
        _ => unreachable!("not a filter"),
    };
    s.into_iter().map(|v| if v.is_finite() { v } else { 0.0 }).collect()
}

/// Ranks the pool by the regime-combined score and picks the prefix length
/// with the best inner-CV AUC (smaller prefix on ties).
pub(crate) fn rank_filter(ctx: &mut Ctx) -> Result<Picked, SelectionError> {
    let s = minmax(&raw_scores(ctx));
    let comb: Vec<f64> = (0..ctx.p()).map(|j| ctx.combine(s[j], ctx.icc[j])).collect();
    let mut ranking: Vec<usize> = (0..ctx.p()).collect();
    ranking.sort_by(|&a, &b| comb[b].total_cmp(&comb[a]).then_with(|| ctx.names[a].cmp(&ctx.names[b])));

    // greedy construction; only the semi-robust rule can skip a feature
    let mut order: Vec<usize> = Vec::new();
    for &j in &ranking {
        let mut cand = order.clone();
        cand.push(j);
        if ctx.legal(&cand) {
            order = cand;
            ctx.log(&order, s[j], ctx.icc[j], format!("add {}", ctx.names[j]));
        } else {
            ctx.log(&order, s[j], ctx.icc[j], format!("skip {}", ctx.names[j]));
        }
    }

    let kmax = ctx.max_k().min(order.len());
    let k = if let Some(t) = ctx.cfg.target_k {
        t.min(order.len())
    } else {
        let prefixes: Vec<Vec<usize>> = (1..=kmax).map(|k| order[..k].to_vec()).collect();
        let aucs = ctx.eval.auc_many(&prefixes)?;
        let mut best = 0;
        for (i, &a) in aucs.iter().enumerate() {
            let cb = ctx.cbar(&prefixes[i]);
            ctx.log(&prefixes[i], a, cb, format!("prefix k={}", i + 1));
            if a > aucs[best] {
                best = i;
            }
        }
        best + 1
    };
    let chosen = order[..k].to_vec();
    let auc = ctx.eval.auc(&chosen)?;
    let cb = ctx.cbar(&chosen);
    ctx.log(&chosen, auc, cb, format!("select k={k}"));
    Ok(Picked { selected: chosen, ranking })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn fisher_hand_formula() {
        // class 0: {-0.5, 0.5} (mean 0, var 0.25); class 1: {0.5, 1.5} (mean 1, var 0.25)
        let x = DMatrix::from_column_slice(4, 1, &[-0.5, 0.5, 0.5, 1.5]);
        let y = [false, false, true, true];
        assert!((fisher_scores(&x, &y)[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn constant_feature_scores_zero() {
        let x = DMatrix::from_element(6, 1, 2.5);
        let y = [false, true, false, true, false, true];
        assert_eq!(fisher_scores(&x, &y)[0], 0.0);
        assert_eq!(ulr_scores(&x, &y)[0], 0.0);
        assert_eq!(relieff_scores(&x, &y, 10)[0], 0.0);
        assert_eq!(mi_scores(&x, &y, 10)[0], 0.0);
    }

    fn label_plus_noise(seed: u64) -> (DMatrix<f64>, Vec<bool>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = 80;
        let y: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let mut data: Vec<f64> = y.iter().map(|&l| l as u8 as f64).collect();
        for _ in 0..5 {
            data.extend((0..n).map(|_| rng.random::<f64>()));
        }
        (DMatrix::from_column_slice(n, 6, &data), y)
    }

    #[test]
    fn label_copy_ranks_first() {
        let (x, y) = label_plus_noise(5);
        for s in [fisher_scores(&x, &y), ulr_scores(&x, &y), mi_scores(&x, &y, 10)] {
            assert!(s[1..].iter().all(|&v| v < s[0]), "{s:?}");
        }
    }

    #[test]
    fn mi_of_label_copy_is_label_entropy() {
        let (x, y) = label_plus_noise(6);
        assert!((mi_scores(&x, &y, 10)[0] - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn relief_finds_xor_pair_fisher_does_not() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 200;
        let a: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let b: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let y: Vec<bool> = a.iter().zip(&b).map(|(p, q)| p ^ q).collect();
        let mut data: Vec<f64> = a.iter().map(|&v| v as u8 as f64).collect();
        data.extend(b.iter().map(|&v| v as u8 as f64));
        for _ in 0..4 {
            data.extend((0..n).map(|_| rng.random::<f64>()));
        }
        let x = DMatrix::from_column_slice(n, 6, &data);
        let r = relieff_scores(&x, &y, 10);
        assert!(r[2..].iter().all(|&v| v < r[0].min(r[1])), "{r:?}");
        let f = fisher_scores(&x, &y);
        assert!(!f[2..].iter().all(|&v| v < f[0].min(f[1])), "{f:?}");
    }

    #[test]
    fn affine_rescaling_keeps_standardised_scores() {
        // scoring always follows standardisation with training statistics
        let std = |m: &DMatrix<f64>| crate::model::Standardizer::fit(m).transform(m);
        let (x, y) = label_plus_noise(9);
        let mut x2 = x.clone();
        for (j, mut c) in x2.column_iter_mut().enumerate() {
            for v in c.iter_mut() {
                *v = 3.5 * (j as f64 + 1.0) * *v - 7.0;
            }
        }
        for (a, b) in [
            (fisher_scores(&std(&x), &y), fisher_scores(&std(&x2), &y)),
            (ulr_scores(&std(&x), &y), ulr_scores(&std(&x2), &y)),
            (relieff_scores(&std(&x), &y, 10), relieff_scores(&std(&x2), &y, 10)),
            (mi_scores(&std(&x), &y, 10), mi_scores(&std(&x2), &y, 10)),
        ] {
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() <= 1e-9 * u.abs().max(1.0), "{u} vs {v}");
            }
        }
    }
}
