//! Multinomial logistic regression and one-vs-rest linear max-margin
//! classifiers, both trained by deterministic full-batch descent.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum ClassifierKind {
    #[default]
    #[serde(rename = "logistic")]
    MultinomialLogistic,
    #[serde(rename = "maxmargin")]
    LinearMaxMargin,
}

impl ClassifierKind {
    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::MultinomialLogistic => "logistic",
            ClassifierKind::LinearMaxMargin => "maxmargin",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(ClassifierKind::MultinomialLogistic),
            "maxmargin" | "svm" => Ok(ClassifierKind::LinearMaxMargin),
            other => Err(Error::invalid(format!("unknown classifier `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    /// L2 penalty on the non-bias weights.
    pub reg: f64,
    pub max_iter: usize,
    /// Gradient-norm stopping threshold (logistic only).
    pub tol: f64,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            reg: 1.0,
            max_iter: 2000,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifierModel {
    pub kind: ClassifierKind,
    pub n_classes: usize,
    /// `C × (F + 1)`, bias in the last column.
    pub weights: Array2<f64>,
    pub iterations: usize,
    pub final_loss: f64,
    pub seed: u64,
}

impl LinearClassifierModel {
    pub fn n_features(&self) -> usize {
        self.weights.ncols() - 1
    }
}

/// `N × C` linear scores `x W' + b`.
pub fn linear_scores(weights: &Array2<f64>, x: ArrayView2<f64>) -> Array2<f64> {
    let f = weights.ncols() - 1;
    let mut s = x.dot(&weights.slice(s![.., ..f]).t());
    s += &weights.column(f);
    s
}

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax_rows(scores: &Array2<f64>) -> Array2<f64> {
    let mut p = scores.clone();
    for mut row in p.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row /= z;
    }
    p
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in row.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn check_training_set(x: ArrayView2<f64>, labels: &[usize], n_classes: usize) -> Result<()> {
    if x.nrows() != labels.len() {
        return Err(Error::Misaligned(format!("{} rows but {} labels", x.nrows(), labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(Error::invalid(format!("label {bad} outside 0..{n_classes}")));
    }
    if labels.iter().all(|&y| y == labels[0]) {
        return Err(Error::SingleClass);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite feature value"));
    }
    Ok(())
}

/// Mean cross-entropy plus `reg / 2 ||W||^2` (bias excluded), and its gradient.
pub fn logistic_loss_and_grad(
    weights: &Array2<f64>,
    x: ArrayView2<f64>,
    labels: &[usize],
    reg: f64,
) -> (f64, Array2<f64>) {
    let (n, f) = x.dim();
    let scores = linear_scores(weights, x);
    let mut loss = 0.0;
    let mut resid = Array2::<f64>::zeros(scores.dim());
    for (i, row) in scores.rows().into_iter().enumerate() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
        loss += m + z.ln() - row[labels[i]];
        for (c, v) in row.iter().enumerate() {
            resid[[i, c]] = (v - m).exp() / z;
        }
        resid[[i, labels[i]]] -= 1.0;
    }
    let inv_n = 1.0 / n as f64;
    let mut grad = Array2::<f64>::zeros(weights.dim());
    grad.slice_mut(s![.., ..f]).assign(&(resid.t().dot(&x) * inv_n));
    grad.column_mut(f).assign(&(resid.sum_axis(Axis(0)) * inv_n));
    let w = weights.slice(s![.., ..f]);
    grad.slice_mut(s![.., ..f]).scaled_add(reg, &w);
    loss = loss * inv_n + 0.5 * reg * w.iter().map(|v| v * v).sum::<f64>();
    (loss, grad)
}

/// Gradient descent from zero with Barzilai-Borwein trial steps and Armijo
/// backtracking, so every accepted step decreases the loss.
pub fn train_logistic(
    x: ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
    opts: &TrainOptions,
) -> Result<LinearClassifierModel> {
    check_training_set(x, labels, n_classes)?;
    let mut w = Array2::<f64>::zeros((n_classes, x.ncols() + 1));
    let (mut loss, mut grad) = logistic_loss_and_grad(&w, x, labels, opts.reg);
    let mut step = 1.0;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let g2: f64 = grad.iter().map(|v| v * v).sum();
        if g2.sqrt() <= opts.tol {
            break;
        }
        iterations += 1;
        let mut accepted = None;
        while step > 1e-20 {
            let trial = &w - &(&grad * step);
            let (l, g) = logistic_loss_and_grad(&trial, x, labels, opts.reg);
            if l <= loss - 1e-4 * step * g2 {
                accepted = Some((trial, l, g));
                break;
            }
            step *= 0.5;
        }
        let Some((next, l, g)) = accepted else { break };
        let ds = &next - &w;
        let dg = &g - &grad;
        let sy: f64 = ds.iter().zip(dg.iter()).map(|(a, b)| a * b).sum();
        let ss: f64 = ds.iter().map(|v| v * v).sum();
        step = if sy > 0.0 { ss / sy } else { step * 2.0 };
        w = next;
        loss = l;
        grad = g;
    }
    Ok(LinearClassifierModel {
        kind: ClassifierKind::MultinomialLogistic,
        n_classes,
        weights: w,
        iterations,
        final_loss: loss,
        seed: opts.seed,
    })
}

/// One-vs-rest hinge loss with an L2 penalty, minimized by full-batch
/// subgradient steps `1 / (reg t)` on the weights and `1 / t` on the bias
/// for a fixed `max_iter` iterations.
pub fn train_linear_max_margin(
    x: ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
    opts: &TrainOptions,
) -> Result<LinearClassifierModel> {
    check_training_set(x, labels, n_classes)?;
    if !(opts.reg > 0.0) {
        return Err(Error::invalid("max-margin training needs reg > 0"));
    }
    let (n, f) = x.dim();
    let mut w = Array2::<f64>::zeros((n_classes, f + 1));
    let mut objective = 0.0;
    for c in 0..n_classes {
        let y: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
        let mut wc = ndarray::Array1::<f64>::zeros(f);
        let mut b = 0.0;
        for t in 1..=opts.max_iter {
            let margins = x.dot(&wc) + b;
            let mut gx = ndarray::Array1::<f64>::zeros(f);
            let mut gb = 0.0;
            for i in 0..n {
                if y[i] * margins[i] < 1.0 {
                    gx.scaled_add(y[i], &x.row(i));
                    gb += y[i];
                }
            }
            let eta = 1.0 / (opts.reg * t as f64);
            wc = &wc * (1.0 - eta * opts.reg) + &(gx * (eta / n as f64));
            b += gb / (n as f64 * t as f64);
        }
        let margins = x.dot(&wc) + b;
        let hinge: f64 = (0..n).map(|i| (1.0 - y[i] * margins[i]).max(0.0)).sum::<f64>() / n as f64;
        objective += hinge + 0.5 * opts.reg * wc.dot(&wc);
        w.slice_mut(s![c, ..f]).assign(&wc);
        w[[c, f]] = b;
    }
    Ok(LinearClassifierModel {
        kind: ClassifierKind::LinearMaxMargin,
        n_classes,
        weights: w,
        iterations: opts.max_iter,
        final_loss: objective,
        seed: opts.seed,
    })
}

pub fn train(
    kind: ClassifierKind,
    x: ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
    opts: &TrainOptions,
) -> Result<LinearClassifierModel> {
    match kind {
        ClassifierKind::MultinomialLogistic => train_logistic(x, labels, n_classes, opts),
        ClassifierKind::LinearMaxMargin => train_linear_max_margin(x, labels, n_classes, opts),
    }
}

/// `N × C` class memberships: softmax of the linear scores (for the
/// max-margin kind, of the one-vs-rest margins).
pub fn predict_posteriors(model: &LinearClassifierModel, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    if x.ncols() != model.n_features() {
        return Err(Error::Misaligned(format!(
            "model expects {} features, got {}",
            model.n_features(),
            x.ncols()
        )));
    }
    Ok(softmax_rows(&linear_scores(&model.weights, x)))
}

pub fn predict(model: &LinearClassifierModel, x: ArrayView2<f64>) -> Result<Vec<usize>> {
    Ok(predict_posteriors(model, x)?
        .rows()
        .into_iter()
        .map(|r| argmax(r.iter().copied()))
        .collect())
}

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    let hits = predicted.iter().zip(labels).filter(|(a, b)| a == b).count();
    hits as f64 / labels.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn separable() -> (Array2<f64>, Vec<usize>) {
        let x = array![[0.0, 0.1], [0.2, -0.3], [-0.4, 0.2], [3.0, 2.9], [2.5, 3.3], [3.1, 2.2]];
        (x, vec![0, 0, 0, 1, 1, 1])
    }

    fn blobs(n_per: usize, c: usize, f: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centres: Vec<Vec<f64>> = (0..c).map(|_| (0..f).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let mut x = Array2::zeros((n_per * c, f));
        let mut y = Vec::new();
        for k in 0..c {
            for i in 0..n_per {
                for j in 0..f {
                    x[[k * n_per + i, j]] = centres[k][j] + rng.random_range(-0.3..0.3);
                }
                y.push(k);
            }
        }
        (x, y)
    }

    #[test]
    fn separable_sets_are_learned() {
        let (x, y) = separable();
        let opts = TrainOptions { reg: 1e-3, ..Default::default() };
        for kind in [ClassifierKind::MultinomialLogistic, ClassifierKind::LinearMaxMargin] {
            let m = train(kind, x.view(), &y, 2, &opts).unwrap();
            assert_eq!(accuracy(&predict(&m, x.view()).unwrap(), &y), 1.0, "{kind}");
        }
        let (x, y) = blobs(10, 4, 3, 1);
        let m = train_logistic(x.view(), &y, 4, &opts).unwrap();
        assert_eq!(accuracy(&predict(&m, x.view()).unwrap(), &y), 1.0);
    }

    #[test]
    fn single_class_is_rejected() {
        let (x, _) = separable();
        assert!(matches!(train_logistic(x.view(), &[1; 6], 2, &TrainOptions::default()), Err(Error::SingleClass)));
        assert!(matches!(
            train_linear_max_margin(x.view(), &[0; 6], 2, &TrainOptions::default()),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (x, y) = blobs(4, 3, 5, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let w = Array2::from_shape_fn((3, 6), |_| rng.random_range(-1.0..1.0));
            let (_, g) = logistic_loss_and_grad(&w, x.view(), &y, 0.7);
            let h = 1e-5;
            let mut fd = Array2::zeros(w.dim());
            for idx in 0..w.len() {
                let (i, j) = (idx / 6, idx % 6);
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp[[i, j]] += h;
                wm[[i, j]] -= h;
                fd[[i, j]] = (logistic_loss_and_grad(&wp, x.view(), &y, 0.7).0
                    - logistic_loss_and_grad(&wm, x.view(), &y, 0.7).0)
                    / (2.0 * h);
            }
            let num = (&g - &fd).iter().map(|v| v * v).sum::<f64>().sqrt();
            let den = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(num / den <= 1e-5, "{}", num / den);
        }
    }

    #[test]
    fn duplicated_rows_give_same_model() {
        let (x, y) = blobs(5, 3, 4, 4);
        let x2 = ndarray::concatenate![Axis(0), x, x];
        let y2: Vec<usize> = y.iter().chain(&y).copied().collect();
        let opts = TrainOptions::default();
        let a = train_logistic(x.view(), &y, 3, &opts).unwrap();
        let b = train_logistic(x2.view(), &y2, 3, &opts).unwrap();
        let err = (&a.weights - &b.weights).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn posteriors() {
        let zero = LinearClassifierModel {
            kind: ClassifierKind::MultinomialLogistic,
            n_classes: 4,
            weights: Array2::zeros((4, 3)),
            iterations: 0,
            final_loss: 0.0,
            seed: 0,
        };
        let x = array![[1.0, 2.0], [-3.0, 0.5]];
        assert!(predict_posteriors(&zero, x.view()).unwrap().iter().all(|p| (p - 0.25).abs() < 1e-15));

        // scores for row 0: [1*1 + 2*0 + 0.5, 1*0 + 2*1 - 1] = [1.5, 1.0]
        let m = LinearClassifierModel {
            weights: array![[1.0, 0.0, 0.5], [0.0, 1.0, -1.0]],
            n_classes: 2,
            ..zero.clone()
        };
        let p = predict_posteriors(&m, x.view()).unwrap();
        let e = (1.5f64.exp(), 1.0f64.exp());
        assert!((p[[0, 0]] - e.0 / (e.0 + e.1)).abs() < 1e-15);
        assert!((p[[1, 1]] - (-0.5f64).exp() / ((-2.5f64).exp() + (-0.5f64).exp())).abs() < 1e-15);

        let mut shifted = m.clone();
        shifted.weights.column_mut(2).mapv_inplace(|b| b + 40.0);
        let q = predict_posteriors(&shifted, x.view()).unwrap();
        assert!((&p - &q).iter().all(|d| d.abs() < 1e-15));
    }

    #[test]
    fn loss_never_increases() {
        let (x, y) = blobs(6, 3, 4, 5);
        let opts = TrainOptions { reg: 0.01, ..Default::default() };
        let mut prev = f64::INFINITY;
        for iters in [0, 1, 2, 5, 10, 40, 200] {
            let m = train_logistic(x.view(), &y, 3, &TrainOptions { max_iter: iters, ..opts }).unwrap();
            assert!(m.final_loss <= prev + 1e-15);
            prev = m.final_loss;
        }
    }

    #[test]
    fn max_margin_scale_covariance() {
        let (x, y) = blobs(6, 3, 3, 6);
        let opts = TrainOptions { reg: 0.05, max_iter: 500, ..Default::default() };
        let a = train_linear_max_margin(x.view(), &y, 3, &opts).unwrap();
        let x2 = &x * 2.0;
        let b = train_linear_max_margin(x2.view(), &y, 3, &TrainOptions { reg: 0.2, ..opts }).unwrap();
        let (sa, sb) = (linear_scores(&a.weights, x.view()), linear_scores(&b.weights, x2.view()));
        assert!((&sa - &sb).iter().all(|d| d.abs() < 1e-9));
        assert_eq!(predict(&a, x.view()).unwrap(), predict(&b, x2.view()).unwrap());
    }

    #[test]
    fn two_class_max_margin_is_a_sign_rule() {
        let (x, y) = blobs(8, 2, 3, 7);
        let m = train_linear_max_margin(x.view(), &y, 2, &TrainOptions { reg: 0.1, ..Default::default() }).unwrap();
        let s = linear_scores(&m.weights, x.view());
        let pred = predict(&m, x.view()).unwrap();
        for (i, p) in pred.iter().enumerate() {
            assert_eq!(*p, if s[[i, 0]] >= 0.0 { 0 } else { 1 });
        }
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax([0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax([0.0, 0.0]), 0);
    }

    proptest! {
        #[test]
        fn posterior_rows_are_distributions(
            w in proptest::collection::vec(-5.0f64..5.0, 12),
            x in proptest::collection::vec(-5.0f64..5.0, 10),
        ) {
            let m = LinearClassifierModel {
                kind: ClassifierKind::MultinomialLogistic,
                n_classes: 3,
                weights: Array2::from_shape_vec((3, 4), w).unwrap(),
                iterations: 0,
                final_loss: 0.0,
                seed: 0,
            };
            let x = Array1::from(x[..9].to_vec()).into_shape_with_order((3, 3)).unwrap();
            let p = predict_posteriors(&m, x.view()).unwrap();
            for row in p.rows() {
                prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
                prop_assert!(row.iter().all(|v| *v > 0.0));
            }
        }
    }
}
