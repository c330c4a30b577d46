use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use super::{class_counts, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "LR", alias = "lr")]
    Lr,
    #[serde(rename = "LDA", alias = "lda")]
    Lda,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::Lr, ModelKind::Lda];
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Lr => "LR",
            ModelKind::Lda => "LDA",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "lr" => Ok(ModelKind::Lr),
            "lda" => Ok(ModelKind::Lda),
            _ => Err(format!("unknown model '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// L2 penalty of logistic regression (intercept unpenalised).
    pub ridge: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// LDA covariance shrinkage towards its diagonal.
    pub shrinkage: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            kind: ModelKind::Lr,
            ridge: 1e-4,
            max_iter: 200,
            tol: 1e-8,
            shrinkage: 0.1,
        }
    }
}

impl ModelSpec {
    pub fn of(kind: ModelKind) -> ModelSpec {
        ModelSpec { kind, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.ridge >= 0.0) {
            return Err(ModelError::Range(format!("ridge {} < 0", self.ridge)));
        }
        if !(0.0..=1.0).contains(&self.shrinkage) {
            return Err(ModelError::Range(format!("shrinkage {} outside [0,1]", self.shrinkage)));
        }
        Ok(())
    }
}

/// Column means and standard deviations of a training matrix; constant
/// columns keep unit scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>) -> Standardizer {
        let n = x.nrows() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut sd = Vec::with_capacity(x.ncols());
        for c in x.column_iter() {
            let m = c.sum() / n;
            let v = c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            mean.push(m);
            sd.push(if v > 1e-24 * m.abs().max(1.0).powi(2) { v.sqrt() } else { 1.0 });
        }
        Standardizer { mean, sd }
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.mean[j]) / self.sd[j])
    }
}

/// A linear scorer `w . x + b`; larger scores mean more class-1 evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub kind: ModelKind,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
}

impl FittedModel {
    pub fn predict_score(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                self.bias
                    + self
                        .weights
                        .iter()
                        .enumerate()
                        .map(|(j, w)| w * x[(i, j)])
                        .sum::<f64>()
            })
            .collect()
    }
}

fn check(x: &DMatrix<f64>, y: &[bool], min_per_class: usize) -> Result<(), ModelError> {
    if x.nrows() != y.len() {
        return Err(ModelError::Shape(format!("{} rows vs {} labels", x.nrows(), y.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite);
    }
    let (c0, c1) = class_counts(y);
    if c0 < min_per_class || c1 < min_per_class {
        return Err(ModelError::TooFewPerClass { needed: min_per_class, class0: c0, class1: c1 });
    }
    Ok(())
}

pub fn fit(spec: &ModelSpec, x: &DMatrix<f64>, y: &[bool]) -> Result<FittedModel, ModelError> {
    spec.validate()?;
    check(x, y, 2)?;
    match spec.kind {
        ModelKind::Lr => fit_lr(spec, x, y),
        ModelKind::Lda => fit_lda(spec, x, y),
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(z)) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean negative log-likelihood plus ridge, over parameters `[w..., b]`.
pub(crate) fn lr_objective(x: &DMatrix<f64>, y: &[bool], theta: &DVector<f64>, ridge: f64) -> f64 {
    let p = x.ncols();
    let n = x.nrows() as f64;
    let mut nll = 0.0;
    for i in 0..x.nrows() {
        let z = theta[p] + (0..p).map(|j| theta[j] * x[(i, j)]).sum::<f64>();
        nll += if y[i] { softplus(-z) } else { softplus(z) };
    }
    nll / n + 0.5 * ridge * (0..p).map(|j| theta[j] * theta[j]).sum::<f64>()
}

pub(crate) fn lr_gradient(x: &DMatrix<f64>, y: &[bool], theta: &DVector<f64>, ridge: f64) -> DVector<f64> {
    let p = x.ncols();
    let n = x.nrows() as f64;
    let mut g = DVector::zeros(p + 1);
    for i in 0..x.nrows() {
        let z = theta[p] + (0..p).map(|j| theta[j] * x[(i, j)]).sum::<f64>();
        let r = sigmoid(z) - if y[i] { 1.0 } else { 0.0 };
        for j in 0..p {
            g[j] += r * x[(i, j)];
        }
        g[p] += r;
    }
    g /= n;
    for j in 0..p {
        g[j] += ridge * theta[j];
    }
    g
}

fn fit_lr(spec: &ModelSpec, x: &DMatrix<f64>, y: &[bool]) -> Result<FittedModel, ModelError> {
    let (n, p) = x.shape();
    let nf = n as f64;
    let mut theta = DVector::<f64>::zeros(p + 1);
    let (c0, c1) = class_counts(y);
    theta[p] = (c1 as f64 / c0 as f64).ln();
    let mut f = lr_objective(x, y, &theta, spec.ridge);
    let mut iterations = 0;
    for it in 0..spec.max_iter {
        iterations = it + 1;
        let g = lr_gradient(x, y, &theta, spec.ridge);
        if g.norm() < spec.tol {
            iterations = it;
            break;
        }
        let mut h = DMatrix::<f64>::zeros(p + 1, p + 1);
        for i in 0..n {
            let z = theta[p] + (0..p).map(|j| theta[j] * x[(i, j)]).sum::<f64>();
            let s = sigmoid(z);
            let w = s * (1.0 - s) / nf;
            for a in 0..=p {
                let xa = if a == p { 1.0 } else { x[(i, a)] };
                for b in a..=p {
                    let xb = if b == p { 1.0 } else { x[(i, b)] };
                    h[(a, b)] += w * xa * xb;
                }
            }
        }
        for a in 0..=p {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        for j in 0..p {
            h[(j, j)] += spec.ridge;
        }
        let step = solve_spd(h, &g);
        // backtracking line search on the objective
        let mut t = 1.0;
        let slope = -g.dot(&step);
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &theta - t * &step;
            let fc = lr_objective(x, y, &cand, spec.ridge);
            if fc <= f + 1e-4 * t * slope || (fc - f).abs() <= 1e-15 * f.abs().max(1.0) {
                theta = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite);
    }
    Ok(FittedModel {
        kind: ModelKind::Lr,
        weights: theta.rows(0, p).iter().cloned().collect(),
        bias: theta[p],
        iterations,
    })
}

/// Solves `h s = g` for a symmetric positive semi-definite `h`, adding a
/// small jitter when the factorisation fails.
fn solve_spd(h: DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let mut jitter = 0.0;
    let scale = h.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for _ in 0..12 {
        let mut hj = h.clone();
        for i in 0..hj.nrows() {
            hj[(i, i)] += jitter;
        }
        if let Some(ch) = hj.cholesky() {
            return ch.solve(g);
        }
        jitter = if jitter == 0.0 { 1e-12 * scale } else { jitter * 10.0 };
    }
    g.clone()
}

fn fit_lda(spec: &ModelSpec, x: &DMatrix<f64>, y: &[bool]) -> Result<FittedModel, ModelError> {
    let (n, p) = x.shape();
    let (c0, c1) = class_counts(y);
    let mut mu = [vec![0.0; p], vec![0.0; p]];
    for i in 0..n {
        let c = y[i] as usize;
        for j in 0..p {
            mu[c][j] += x[(i, j)];
        }
    }
    for j in 0..p {
        mu[0][j] /= c0 as f64;
        mu[1][j] /= c1 as f64;
    }
    let mut s = DMatrix::<f64>::zeros(p, p);
    for i in 0..n {
        let m = &mu[y[i] as usize];
        for a in 0..p {
            let da = x[(i, a)] - m[a];
            for b in a..p {
                s[(a, b)] += da * (x[(i, b)] - m[b]);
            }
        }
    }
    let dof = (n - 2).max(1) as f64;
    for a in 0..p {
        for b in a..p {
            s[(a, b)] /= dof;
            s[(b, a)] = s[(a, b)];
        }
    }
    // zero-variance features carry no discriminant information
    let active: Vec<usize> = (0..p).filter(|&j| s[(j, j)] > 1e-12).collect();
    let mut weights = vec![0.0; p];
    if !active.is_empty() {
        let g = spec.shrinkage;
        let k = active.len();
        let sigma = DMatrix::from_fn(k, k, |a, b| {
            let v = s[(active[a], active[b])];
            if a == b {
                v
            } else {
                (1.0 - g) * v
            }
        });
        let diff = DVector::from_fn(k, |a, _| mu[1][active[a]] - mu[0][active[a]]);
        let ch = sigma.cholesky().ok_or(ModelError::Singular)?;
        let l = ch.l();
        let min_pivot = l.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let max_pivot = l.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if min_pivot <= 1e-8 * max_pivot {
            return Err(ModelError::Singular);
        }
        let w = ch.solve(&diff);
        for (a, &j) in active.iter().enumerate() {
            weights[j] = w[a];
        }
    }
    let mid: f64 = (0..p).map(|j| weights[j] * 0.5 * (mu[0][j] + mu[1][j])).sum();
    let bias = -mid + (c1 as f64 / c0 as f64).ln();
    Ok(FittedModel {
        kind: ModelKind::Lda,
        weights,
        bias,
        iterations: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::auc;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn toy() -> (DMatrix<f64>, Vec<bool>) {
        let x = DMatrix::from_row_slice(8, 2, &[
            0.0, 0.1, 0.3, -0.2, -0.4, 0.5, 0.2, 0.2, 2.0, 1.9, 2.2, 2.4, 1.8, 2.1, 2.5, 1.7,
        ]);
        let y = vec![false, false, false, false, true, true, true, true];
        (x, y)
    }

    #[test]
    fn separable_training_auc() {
        let (x, y) = toy();
        for kind in ModelKind::ALL {
            let m = fit(&ModelSpec::of(kind), &x, &y).unwrap();
            assert_eq!(auc(&m.predict_score(&x), &y).unwrap(), 1.0);
        }
    }

    #[test]
    fn lr_gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let nd = Normal::new(0.0, 1.0).unwrap();
        let x = DMatrix::from_fn(60, 3, |_, _| nd.sample(&mut rng));
        let y: Vec<bool> = (0..60).map(|i| x[(i, 0)] + 0.5 * nd.sample(&mut rng) > 0.0).collect();
        let spec = ModelSpec::default();
        let m = fit(&spec, &x, &y).unwrap();
        let mut theta: Vec<f64> = m.weights.clone();
        theta.push(m.bias);
        let theta = DVector::from_vec(theta);
        let h = 1e-5;
        for k in 0..4 {
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[k] += h;
            b[k] -= h;
            let fd = (lr_objective(&x, &y, &a, spec.ridge) - lr_objective(&x, &y, &b, spec.ridge)) / (2.0 * h);
            assert!(fd.abs() < 1e-6, "component {k}: {fd}");
        }
    }

    #[test]
    fn lr_without_ridge_on_separable_data_stays_finite() {
        let (x, y) = toy();
        let spec = ModelSpec { ridge: 0.0, ..Default::default() };
        let m = fit(&spec, &x, &y).unwrap();
        assert!(m.weights.iter().all(|w| w.is_finite()));
        assert!(m.iterations <= 200);
    }

    #[test]
    fn lda_fisher_direction() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let nd = Normal::new(0.0, 1.0).unwrap();
        let n = 100_000;
        let half = n / 2;
        let delta = [1.0, -0.5, 0.25];
        // each class is whitened to exactly zero mean and identity scatter, so
        // the population Fisher direction is the mean difference itself
        let mut x = DMatrix::<f64>::zeros(n, 3);
        for c in 0..2 {
            let mut z = DMatrix::from_fn(half, 3, |_, _| nd.sample(&mut rng));
            for j in 0..3 {
                let m = z.column(j).mean();
                z.column_mut(j).add_scalar_mut(-m);
            }
            let cov = z.transpose() * &z / half as f64;
            let l = cov.cholesky().unwrap().l();
            let w = l.try_inverse().unwrap().transpose();
            let z = z * w;
            for i in 0..half {
                for j in 0..3 {
                    x[(c * half + i, j)] = z[(i, j)] + if c == 1 { delta[j] } else { 0.0 };
                }
            }
        }
        let y: Vec<bool> = (0..n).map(|i| i >= half).collect();
        let spec = ModelSpec { kind: ModelKind::Lda, shrinkage: 0.0, ..Default::default() };
        let m = fit(&spec, &x, &y).unwrap();
        let w = DVector::from_vec(m.weights.clone()).normalize();
        let d = DVector::from_row_slice(&delta).normalize();
        let angle = w.dot(&d).clamp(-1.0, 1.0).acos();
        assert!(angle < 1e-6, "angle {angle}");
    }

    #[test]
    fn lda_singular_without_shrinkage() {
        let x = DMatrix::from_row_slice(6, 2, &[0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 5.0, 5.0]);
        let y = vec![false, false, false, true, true, true];
        let spec = ModelSpec { kind: ModelKind::Lda, shrinkage: 0.0, ..Default::default() };
        assert_eq!(fit(&spec, &x, &y), Err(ModelError::Singular));
        let spec = ModelSpec { kind: ModelKind::Lda, ..Default::default() };
        assert!(fit(&spec, &x, &y).is_ok());
    }

    #[test]
    fn standardizer_uses_train_statistics() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        let s = Standardizer::fit(&x);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.sd[1], 1.0);
        let t = s.transform(&DMatrix::from_row_slice(1, 2, &[4.0, 6.0]));
        assert!((t[(0, 0)] - 2.0 / (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
