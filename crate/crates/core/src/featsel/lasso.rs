use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{minmax, Ctx, Picked, SelectionError};
use crate::model::{auc, Standardizer};

const N_LAMBDA: usize = 50;
const LAMBDA_RATIO: f64 = 1e-3;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Smallest penalty at which every penalised coefficient is zero, for the
/// objective `mean NLL + lambda * sum(pf_j |b_j|)`.
pub fn lasso_lambda_max(x: &DMatrix<f64>, y: &[bool], pf: &[f64]) -> f64 {
    let n = y.len() as f64;
    let ybar = y.iter().filter(|&&v| v).count() as f64 / n;
    let mut lmax: f64 = 0.0;
    for (j, c) in x.column_iter().enumerate() {
        if pf[j] > 0.0 {
            let g: f64 = c.iter().zip(y).map(|(v, &l)| v * (l as u8 as f64 - ybar)).sum::<f64>() / n;
            lmax = lmax.max(g.abs() / pf[j]);
        }
    }
    if lmax > 0.0 {
        lmax
    } else {
        1.0
    }
}

/// L1-penalised logistic regression by iteratively reweighted least squares
/// with cyclic coordinate descent; the intercept is unpenalised. `warm`
/// supplies a starting `(intercept, coefficients)`.
pub fn lasso_fit(
    x: &DMatrix<f64>,
    y: &[bool],
    lambda: f64,
    pf: &[f64],
    warm: Option<(f64, Vec<f64>)>,
) -> (f64, Vec<f64>) {
    let (n, p) = x.shape();
    let nf = n as f64;
    let (mut b0, mut beta) = warm.unwrap_or_else(|| {
        let ybar = (y.iter().filter(|&&v| v).count() as f64 / nf).clamp(1e-6, 1.0 - 1e-6);
        ((ybar / (1.0 - ybar)).ln(), vec![0.0; p])
    });
    let t: Vec<f64> = y.iter().map(|&l| l as u8 as f64).collect();
    let cols: Vec<Vec<f64>> = x.column_iter().map(|c| c.iter().cloned().collect()).collect();
    let mut eta = vec![0.0; n];
    for _outer in 0..100 {
        for i in 0..n {
            eta[i] = b0 + (0..p).map(|j| cols[j][i] * beta[j]).sum::<f64>();
        }
        let mut w = vec![0.0; n];
        let mut z = vec![0.0; n];
        for i in 0..n {
            let pr = sigmoid(eta[i]);
            w[i] = (pr * (1.0 - pr)).max(1e-5);
            z[i] = eta[i] + (t[i] - pr) / w[i];
        }
        // residual of the working response
        let mut r: Vec<f64> = (0..n).map(|i| z[i] - eta[i]).collect();
        let xw2: Vec<f64> = (0..p).map(|j| (0..n).map(|i| w[i] * cols[j][i] * cols[j][i]).sum::<f64>() / nf).collect();
        let wsum: f64 = w.iter().sum();
        let old = beta.clone();
        let old_b0 = b0;
        for _inner in 0..1000 {
            let mut max_delta: f64 = 0.0;
            let d0 = (0..n).map(|i| w[i] * r[i]).sum::<f64>() / wsum;
            if d0 != 0.0 {
                b0 += d0;
                for ri in r.iter_mut() {
                    *ri -= d0;
                }
                max_delta = max_delta.max(d0.abs());
            }
            for j in 0..p {
                if xw2[j] <= 0.0 {
                    continue;
                }
                let c = &cols[j];
                let u = (0..n).map(|i| w[i] * c[i] * r[i]).sum::<f64>() / nf + xw2[j] * beta[j];
                let thr = lambda * pf[j];
                let nb = if u > thr {
                    (u - thr) / xw2[j]
                } else if u < -thr {
                    (u + thr) / xw2[j]
                } else {
                    0.0
                };
                let d = nb - beta[j];
                if d != 0.0 {
                    for i in 0..n {
                        r[i] -= d * c[i];
                    }
                    beta[j] = nb;
                    max_delta = max_delta.max(d.abs() * xw2[j].sqrt());
                }
            }
            if max_delta < 1e-9 {
                break;
            }
        }
        let change = (b0 - old_b0)
            .abs()
            .max(beta.iter().zip(&old).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        if change < 1e-8 || !beta.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    (b0, beta)
}

fn grid(lmax: f64) -> Vec<f64> {
    (0..N_LAMBDA)
        .map(|i| lmax * LAMBDA_RATIO.powf(i as f64 / (N_LAMBDA - 1) as f64))
        .collect()
}

/// Zeroes the weakest non-robust coefficients until the semi-robust rule
/// holds for the support.
fn trim(ctx: &Ctx, beta: &mut [f64]) {
    loop {
        let support: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
        if ctx.legal(&support) {
            return;
        }
        let weakest = support
            .iter()
            .copied()
            .filter(|&j| !ctx.robust[j])
            .min_by(|&a, &b| beta[a].abs().total_cmp(&beta[b].abs()).then_with(|| ctx.names[b].cmp(&ctx.names[a])))
            .expect("an illegal support has a non-robust member");
        beta[weakest] = 0.0;
    }
}

fn path(ctx: &Ctx, x: &DMatrix<f64>, y: &[bool], pf: &[f64], lambdas: &[f64]) -> Vec<(f64, Vec<f64>)> {
    let mut warm = None;
    lambdas
        .iter()
        .map(|&l| {
            let (b0, beta) = lasso_fit(x, y, l, pf, warm.take());
            warm = Some((b0, beta.clone()));
            let mut trimmed = beta;
            trim(ctx, &mut trimmed);
            (b0, trimmed)
        })
        .collect()
}

pub(crate) fn lasso_select(ctx: &mut Ctx) -> Result<Picked, SelectionError> {
    let pf: Vec<f64> = ctx.icc.iter().map(|&c| 1.0 - ctx.w * c).collect();
    let lambdas = grid(lasso_lambda_max(&ctx.x, ctx.y, &pf));
    let folds = crate::model::stratified_folds(ctx.y, ctx.cfg.inner_folds, crate::seed::mix_str(ctx.cfg.seed, "inner-cv"))?;

    let per_fold: Vec<Vec<f64>> = (0..folds.k)
        .into_par_iter()
        .map(|f| -> Result<Vec<f64>, SelectionError> {
            let (tr, te) = (folds.train(f), folds.test(f));
            let xtr = ctx.x.select_rows(&tr);
            let st = Standardizer::fit(&xtr);
            let ytr: Vec<bool> = tr.iter().map(|&i| ctx.y[i]).collect();
            let yte: Vec<bool> = te.iter().map(|&i| ctx.y[i]).collect();
            let xte = st.transform(&ctx.x.select_rows(&te));
            path(ctx, &st.transform(&xtr), &ytr, &pf, &lambdas)
                .into_iter()
                .map(|(b0, beta)| -> Result<f64, SelectionError> {
                    let s: Vec<f64> = (0..xte.nrows())
                        .map(|i| b0 + (0..beta.len()).map(|j| beta[j] * xte[(i, j)]).sum::<f64>())
                        .collect();
                    Ok(auc(&s, &yte)?)
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let cv: Vec<f64> = (0..lambdas.len())
        .map(|l| per_fold.iter().map(|f| f[l]).sum::<f64>() / folds.k as f64)
        .collect();

    let full = path(ctx, &ctx.x, ctx.y, &pf, &lambdas);
    let supports: Vec<Vec<usize>> = full
        .iter()
        .map(|(_, b)| (0..b.len()).filter(|&j| b[j] != 0.0).collect())
        .collect();
    let s = minmax(&cv);
    for (l, sup) in supports.iter().enumerate() {
        let cb = ctx.cbar(sup);
        ctx.log(sup, s[l], cb, format!("lambda {:.6e} cv_auc {:.6}", lambdas[l], cv[l]));
    }
    let kmax = ctx.max_k();
    let mut best: Option<usize> = None;
    for (l, sup) in supports.iter().enumerate() {
        if sup.is_empty() || sup.len() > kmax {
            continue;
        }
        let better = match (best, ctx.cfg.target_k) {
            (None, _) => true,
            // closest support size to the target from below, then AUC
            (Some(b), Some(_)) => sup.len() > supports[b].len() || (sup.len() == supports[b].len() && cv[l] > cv[b]),
            (Some(b), None) => cv[l] > cv[b],
        };
        if better {
            best = Some(l);
        }
    }
    let Some(l) = best else {
        return Err(SelectionError::EmptySelection("no penalty on the grid yields a usable support".into()));
    };
    let beta = &full[l].1;
    let mut selected = supports[l].clone();
    selected.sort_by(|&a, &b| beta[b].abs().total_cmp(&beta[a].abs()).then_with(|| ctx.names[a].cmp(&ctx.names[b])));
    let cb = ctx.cbar(&selected);
    ctx.log(&selected, s[l], cb, format!("select lambda {:.6e}", lambdas[l]));
    Ok(Picked { ranking: selected.clone(), selected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn data(seed: u64, n: usize, p: usize, informative: usize) -> (DMatrix<f64>, Vec<bool>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = (0..n)
            .map(|i| {
                let z: f64 = (0..informative).map(|j| 1.5 * x[(i, j)]).sum();
                rng.random::<f64>() < 1.0 / (1.0 + (-z).exp())
            })
            .collect();
        (x, y)
    }

    #[test]
    fn huge_penalty_selects_nothing() {
        let (x, y) = data(1, 100, 5, 2);
        let pf = vec![1.0; 5];
        let lmax = lasso_lambda_max(&x, &y, &pf);
        let (_, beta) = lasso_fit(&x, &y, 1e6, &pf, None);
        assert!(beta.iter().all(|&b| b == 0.0));
        let (_, beta) = lasso_fit(&x, &y, lmax * 1.0001, &pf, None);
        assert!(beta.iter().all(|&b| b == 0.0));
        let (_, beta) = lasso_fit(&x, &y, lmax * 0.5, &pf, None);
        assert!(beta.iter().any(|&b| b != 0.0));
    }

    #[test]
    fn small_penalty_approaches_unpenalised_optimum() {
        let (x, y) = data(2, 300, 3, 2);
        let pf = vec![1.0; 3];
        let (b0, beta) = lasso_fit(&x, &y, 1e-10, &pf, None);
        let n = y.len() as f64;
        let mut g = vec![0.0; 4];
        for i in 0..y.len() {
            let z = b0 + (0..3).map(|j| beta[j] * x[(i, j)]).sum::<f64>();
            let r = sigmoid(z) - y[i] as u8 as f64;
            for j in 0..3 {
                g[j] += r * x[(i, j)] / n;
            }
            g[3] += r / n;
        }
        let g = nalgebra::DVector::from_vec(g);
        assert!(g.norm() < 1e-6, "gradient {}", g.norm());
    }

    #[test]
    fn zero_penalty_factor_is_never_shrunk() {
        let (x, y) = data(3, 200, 4, 1);
        let pf = vec![1.0, 1.0, 1.0, 0.0];
        let (_, beta) = lasso_fit(&x, &y, 10.0, &pf, None);
        assert_eq!(&beta[..3], &[0.0, 0.0, 0.0]);
        assert!(beta[3] != 0.0);
    }
}
