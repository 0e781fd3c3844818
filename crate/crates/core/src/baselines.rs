//! Comparison methods: zero-shot prediction from stored classifier logits,
//! and a linear head trained on the support features.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, FeatureMatrix};
use crate::nnfs::PredictionResult;
use crate::scalar::Scalar;
use crate::store::EmbeddingDataset;

/// Softmax of the dataset's stored logits for the given rows.
pub fn zero_shot_predict(
    dataset: &EmbeddingDataset,
    query_indices: &[usize],
) -> Result<PredictionResult<f64>> {
    if !dataset.has_logits() {
        return Err(Error::MissingLogits);
    }
    let c = dataset.num_classes;
    let mut scores = Vec::with_capacity(query_indices.len() * c);
    for &i in query_indices {
        if i >= dataset.num_samples() {
            return Err(Error::invariant("query index", format!("{i} out of range")));
        }
        let row = dataset.logit_row(i).expect("logits present");
        scores.extend(row.iter().map(|&v| v as f64));
    }
    Ok(PredictionResult::from_scores(
        query_indices.len(),
        c,
        &scores,
        Vec::new(),
    ))
}

/// Full-batch gradient-descent settings for the linear head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 0.1,
        }
    }
}

/// Multinomial logistic-regression head, `softmax(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead<T> {
    /// Row-major `num_classes × dim`.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub num_classes: usize,
    pub dim: usize,
    /// `(epoch, loss)` with the loss measured before that epoch's update.
    pub training_log: Vec<(usize, T)>,
}

impl<T: Scalar> LinearHead<T> {
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self {
            weights: vec![T::zero(); num_classes * dim],
            bias: vec![T::zero(); num_classes],
            num_classes,
            dim,
            training_log: Vec::new(),
        }
    }

    fn logits_into(&self, x: &[T], out: &mut [T]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = dot(&self.weights[c * self.dim..(c + 1) * self.dim], x) + self.bias[c];
        }
    }
}

/// Mean cross-entropy and its gradient with respect to weights and bias.
#[derive(Debug, Clone)]
pub struct HeadGradient<T> {
    pub loss: T,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Mean softmax cross-entropy of `head` on `(x, labels)` and its analytic
/// gradient.
pub fn head_loss_and_gradient<T: Scalar>(
    head: &LinearHead<T>,
    x: &FeatureMatrix<T>,
    labels: &[usize],
) -> Result<HeadGradient<T>> {
    x.check_dim(head.dim)?;
    if labels.len() != x.rows() {
        return Err(Error::invariant(
            "labels",
            format!("{} labels for {} rows", labels.len(), x.rows()),
        ));
    }
    let c = head.num_classes;
    let n = T::from_usize(x.rows()).expect("row count representable");
    let mut grad_w = vec![T::zero(); head.weights.len()];
    let mut grad_b = vec![T::zero(); c];
    let mut loss = T::zero();
    let mut logits = vec![T::zero(); c];
    for (row, &y) in x.iter_rows().zip(labels) {
        if y >= c {
            return Err(Error::LabelOutOfRange {
                label: y,
                num_classes: c,
            });
        }
        head.logits_into(row, &mut logits);
        let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let log_z = max + logits.iter().map(|&l| (l - max).exp()).sum::<T>().ln();
        loss += log_z - logits[y];
        for k in 0..c {
            let p = (logits[k] - log_z).exp();
            let residual = if k == y { p - T::one() } else { p };
            grad_b[k] += residual;
            for (g, &v) in grad_w[k * head.dim..(k + 1) * head.dim].iter_mut().zip(row) {
                *g += residual * v;
            }
        }
    }
    grad_w.iter_mut().for_each(|g| *g /= n);
    grad_b.iter_mut().for_each(|g| *g /= n);
    Ok(HeadGradient {
        loss: loss / n,
        weights: grad_w,
        bias: grad_b,
    })
}

/// Trains a zero-initialised head by full-batch gradient descent.
pub fn train_head<T: Scalar>(
    support: &FeatureMatrix<T>,
    labels: &[usize],
    num_classes: usize,
    config: HeadConfig,
) -> Result<LinearHead<T>> {
    if config.epochs == 0 {
        return Err(Error::Config(
            "head training needs at least one epoch".into(),
        ));
    }
    if !(config.learning_rate.is_finite() && config.learning_rate >= 0.0) {
        return Err(Error::Config(format!(
            "learning rate must be finite and non-negative, got {}",
            config.learning_rate
        )));
    }
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        if l >= num_classes {
            return Err(Error::LabelOutOfRange {
                label: l,
                num_classes,
            });
        }
        counts[l] += 1;
    }
    if let Some(class) = counts.iter().position(|&k| k == 0) {
        return Err(Error::EmptyClass { class });
    }

    let lr = T::lit(config.learning_rate);
    let mut head = LinearHead::zeros(num_classes, support.dim());
    for epoch in 1..=config.epochs {
        let g = head_loss_and_gradient(&head, support, labels)?;
        if !g.loss.is_finite() {
            return Err(Error::NonFinite("head training loss"));
        }
        head.training_log.push((epoch, g.loss));
        for (w, gw) in head.weights.iter_mut().zip(&g.weights) {
            *w -= lr * *gw;
        }
        for (b, gb) in head.bias.iter_mut().zip(&g.bias) {
            *b -= lr * *gb;
        }
    }
    if head
        .weights
        .iter()
        .chain(&head.bias)
        .any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite("head parameters"));
    }
    Ok(head)
}

/// `softmax(W x + b)` per query row.
pub fn head_predict<T: Scalar>(
    head: &LinearHead<T>,
    query: &FeatureMatrix<T>,
) -> Result<PredictionResult<T>> {
    query.check_dim(head.dim)?;
    let c = head.num_classes;
    let mut scores = vec![T::zero(); query.rows() * c];
    for (row, out) in query.iter_rows().zip(scores.chunks_exact_mut(c)) {
        head.logits_into(row, out);
    }
    Ok(PredictionResult::from_scores(
        query.rows(),
        c,
        &scores,
        Vec::new(),
    ))
}
