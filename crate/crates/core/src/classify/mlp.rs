//! One-hidden-layer perceptron (ReLU, two-way softmax) trained with
//! mini-batch SGD on cross-entropy.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::FeatureVector;
use super::{Label, LabeledSet};
use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub folds: usize,
    pub rng_seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig { hidden: 128, epochs: 40, batch_size: 16, learning_rate: 0.2, folds: 10, rng_seed: 0 }
    }
}

impl MlpConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // also rejects a NaN learning rate
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.epochs == 0 || self.batch_size == 0 || !(self.learning_rate > 0.0) || self.folds < 2
        {
            return Err(Error::Config(alloc::format!("invalid classifier config {self:?}")));
        }
        Ok(())
    }
}

/// Weights are row-major: `w1[i * hidden + j]` connects input `i` to hidden
/// unit `j`, `w2[j * 2 + k]` connects hidden `j` to output `k`. Output 1 is
/// the positive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub graph_dimension: usize,
    pub text_dimension: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: [f64; 2],
    pub feature_fingerprint: u64,
    pub config: MlpConfig,
}

struct Forward {
    z1: Vec<f64>,
    h: Vec<f64>,
    probs: [f64; 2],
    loss_terms: [f64; 2],
}

/// Gradient of the loss for one example, with only touched input rows stored.
#[derive(Debug, Clone, Default)]
pub struct Gradient {
    pub w1_rows: BTreeMap<usize, Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: [f64; 2],
}

impl Gradient {
    /// Component for a flat parameter index (see [`MlpModel::parameter`]).
    pub fn component(&self, model: &MlpModel, index: usize) -> f64 {
        let h = model.hidden;
        let n1 = model.input_dimension() * h;
        if index < n1 {
            return self.w1_rows.get(&(index / h)).map_or(0.0, |r| r[index % h]);
        }
        let i = index - n1;
        if i < h {
            return self.b1[i];
        }
        let i = i - h;
        if i < 2 * h {
            return self.w2[i];
        }
        self.b2[i - 2 * h]
    }

    fn add_scaled(&mut self, other: &Gradient, scale: f64) {
        for (row, g) in &other.w1_rows {
            let acc = self.w1_rows.entry(*row).or_insert_with(|| alloc::vec![0.0; g.len()]);
            acc.iter_mut().zip(g).for_each(|(a, b)| *a += scale * b);
        }
        if self.b1.is_empty() {
            self.b1 = alloc::vec![0.0; other.b1.len()];
            self.w2 = alloc::vec![0.0; other.w2.len()];
        }
        self.b1.iter_mut().zip(&other.b1).for_each(|(a, b)| *a += scale * b);
        self.w2.iter_mut().zip(&other.w2).for_each(|(a, b)| *a += scale * b);
        self.b2[0] += scale * other.b2[0];
        self.b2[1] += scale * other.b2[1];
    }
}

impl MlpModel {
    /// Xavier-uniform weights from a seeded generator, zero biases.
    pub fn init(graph_dimension: usize, text_dimension: usize, config: &MlpConfig, feature_fingerprint: u64) -> Self {
        let hidden = config.hidden;
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let input = graph_dimension + text_dimension;
        let a1 = math::sqrt(6.0 / (input + hidden) as f64);
        let a2 = math::sqrt(6.0 / (hidden + 2) as f64);
        let w1 = (0..input * hidden).map(|_| rng.random_range(-a1..a1)).collect();
        let w2 = (0..hidden * 2).map(|_| rng.random_range(-a2..a2)).collect();
        MlpModel {
            graph_dimension,
            text_dimension,
            hidden,
            w1,
            b1: alloc::vec![0.0; hidden],
            w2,
            b2: [0.0; 2],
            feature_fingerprint,
            config: *config,
        }
    }

    pub fn input_dimension(&self) -> usize {
        self.graph_dimension + self.text_dimension
    }

    /// Checks that weight shapes agree with the declared dimensions.
    pub fn validate(&self) -> Result<()> {
        let check = |expected: usize, actual: usize| {
            if expected == actual {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { expected, actual })
            }
        };
        check(self.input_dimension() * self.hidden, self.w1.len())?;
        check(self.hidden, self.b1.len())?;
        check(self.hidden * 2, self.w2.len())?;
        if self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2).any(|v| !v.is_finite()) {
            return Err(Error::Integrity("non-finite model weight".into()));
        }
        Ok(())
    }

    fn check_input(&self, x: &FeatureVector) -> Result<()> {
        if x.graph.len() != self.graph_dimension || x.text.dimension != self.text_dimension {
            return Err(Error::DimensionMismatch { expected: self.input_dimension(), actual: x.dimension() });
        }
        Ok(())
    }

    fn forward(&self, x: &FeatureVector) -> Forward {
        let h = self.hidden;
        let mut z1 = self.b1.clone();
        for (i, v) in x.nonzero() {
            let row = &self.w1[i * h..(i + 1) * h];
            z1.iter_mut().zip(row).for_each(|(z, w)| *z += v * w);
        }
        let act: Vec<f64> = z1.iter().map(|&z| z.max(0.0)).collect();
        let mut z2 = self.b2;
        for (j, a) in act.iter().enumerate() {
            z2[0] += a * self.w2[2 * j];
            z2[1] += a * self.w2[2 * j + 1];
        }
        let m = z2[0].max(z2[1]);
        let lse = m + math::ln(math::exp(z2[0] - m) + math::exp(z2[1] - m));
        let loss_terms = [lse - z2[0], lse - z2[1]];
        let probs = [math::exp(-loss_terms[0]), math::exp(-loss_terms[1])];
        Forward { z1, h: act, probs, loss_terms }
    }

    /// Softmax output `[negative, positive]`.
    pub fn output(&self, x: &FeatureVector) -> Result<[f64; 2]> {
        self.check_input(x)?;
        Ok(self.forward(x).probs)
    }

    /// Probability of the positive class.
    pub fn probability(&self, x: &FeatureVector) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.forward(x).probs[1])
    }

    /// Cross-entropy for one example.
    pub fn loss(&self, x: &FeatureVector, label: Label) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.forward(x).loss_terms[label.index()])
    }

    pub fn gradient(&self, x: &FeatureVector, label: Label) -> Result<Gradient> {
        self.check_input(x)?;
        let f = self.forward(x);
        let h = self.hidden;
        let mut dz2 = f.probs;
        dz2[label.index()] -= 1.0;
        let mut w2 = alloc::vec![0.0; 2 * h];
        let mut dz1 = alloc::vec![0.0; h];
        for j in 0..h {
            w2[2 * j] = f.h[j] * dz2[0];
            w2[2 * j + 1] = f.h[j] * dz2[1];
            if f.z1[j] > 0.0 {
                dz1[j] = self.w2[2 * j] * dz2[0] + self.w2[2 * j + 1] * dz2[1];
            }
        }
        let w1_rows = x.nonzero().map(|(i, v)| (i, dz1.iter().map(|d| d * v).collect())).collect();
        Ok(Gradient { w1_rows, b1: dz1, w2, b2: dz2 })
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 2
    }

    /// Flat parameter view in the order `w1, b1, w2, b2`.
    pub fn parameter(&self, index: usize) -> f64 {
        let (n1, nb, n2) = (self.w1.len(), self.b1.len(), self.w2.len());
        if index < n1 {
            self.w1[index]
        } else if index < n1 + nb {
            self.b1[index - n1]
        } else if index < n1 + nb + n2 {
            self.w2[index - n1 - nb]
        } else {
            self.b2[index - n1 - nb - n2]
        }
    }

    pub fn set_parameter(&mut self, index: usize, value: f64) {
        let (n1, nb, n2) = (self.w1.len(), self.b1.len(), self.w2.len());
        let slot = if index < n1 {
            &mut self.w1[index]
        } else if index < n1 + nb {
            &mut self.b1[index - n1]
        } else if index < n1 + nb + n2 {
            &mut self.w2[index - n1 - nb]
        } else {
            &mut self.b2[index - n1 - nb - n2]
        };
        *slot = value;
    }

    fn apply(&mut self, g: &Gradient, lr: f64) {
        let h = self.hidden;
        for (row, gr) in &g.w1_rows {
            self.w1[row * h..(row + 1) * h].iter_mut().zip(gr).for_each(|(w, d)| *w -= lr * d);
        }
        self.b1.iter_mut().zip(&g.b1).for_each(|(w, d)| *w -= lr * d);
        self.w2.iter_mut().zip(&g.w2).for_each(|(w, d)| *w -= lr * d);
        self.b2[0] -= lr * g.b2[0];
        self.b2[1] -= lr * g.b2[1];
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    pub probability: f64,
}

/// Positive when the positive-class probability is at least `threshold`.
pub fn predict(model: &MlpModel, x: &FeatureVector, threshold: f64) -> Result<Prediction> {
    let probability = model.probability(x)?;
    let label = if probability >= threshold { Label::Positive } else { Label::Negative };
    Ok(Prediction { label, probability })
}

/// Trains on the whole set; returns the model and the mean loss per epoch.
pub fn fit(set: &LabeledSet, cfg: &MlpConfig, fingerprint: u64) -> Result<(MlpModel, Vec<f64>)> {
    cfg.validate()?;
    let first = set.entries().first().ok_or_else(|| Error::TrainingSet("empty training set".into()))?;
    let (gd, td) = (first.features.graph.len(), first.features.text.dimension);
    let mut model = MlpModel::init(gd, td, cfg, fingerprint);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = Gradient::default();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let e = &set.entries()[i];
                total += model.loss(&e.features, e.label)?;
                acc.add_scaled(&model.gradient(&e.features, e.label)?, scale);
            }
            model.apply(&acc, cfg.learning_rate);
        }
        let mean = total / set.len() as f64;
        if !mean.is_finite() || model.b2.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
        losses.push(mean);
    }
    Ok((model, losses))
}

/// Fold index per example. Each class is shuffled and dealt round-robin,
/// negatives continuing where positives stopped, so every fold's class
/// counts are within one of the overall proportion.
pub fn stratified_folds(labels: &[Label], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || labels.len() < k {
        return Err(Error::TrainingSet(alloc::format!("cannot split {} examples into {k} folds", labels.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = alloc::vec![0; labels.len()];
    let mut next = 0usize;
    for class in [Label::Positive, Label::Negative] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            folds[i] = next % k;
            next += 1;
        }
    }
    Ok(folds)
}

/// F1 of the positive class; zero when there are no true positives.
fn positive_f1(truth: &[Label], predicted: &[Label]) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (t, p) in truth.iter().zip(predicted) {
        match (t, p) {
            (Label::Positive, Label::Positive) => tp += 1,
            (Label::Negative, Label::Positive) => fp += 1,
            (Label::Positive, Label::Negative) => fn_ += 1,
            _ => {}
        }
    }
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// Mean held-out positive-class F1 over stratified folds.
pub fn cross_validate(set: &LabeledSet, cfg: &MlpConfig, fingerprint: u64) -> Result<f64> {
    let labels: Vec<Label> = set.entries().iter().map(|e| e.label).collect();
    let folds = stratified_folds(&labels, cfg.folds, cfg.rng_seed)?;
    let mut sum = 0.0;
    for fold in 0..cfg.folds {
        let train = set.subset(|i| folds[i] != fold);
        let (model, _) = fit(&train, cfg, fingerprint)?;
        let mut truth = Vec::new();
        let mut predicted = Vec::new();
        for (_, e) in set.entries().iter().enumerate().filter(|(i, _)| folds[*i] == fold) {
            truth.push(e.label);
            predicted.push(predict(&model, &e.features, 0.5)?.label);
        }
        sum += positive_f1(&truth, &predicted);
    }
    Ok(sum / cfg.folds as f64)
}

/// Cross-validates, then fits the final model on the full balanced set.
pub fn train_mlp(set: &LabeledSet, cfg: &MlpConfig, fingerprint: u64) -> Result<(MlpModel, f64)> {
    cfg.validate()?;
    let (pos, neg) = set.class_counts();
    if pos == 0 || neg == 0 || pos.abs_diff(neg) > 1 {
        return Err(Error::TrainingSet(alloc::format!("unbalanced training set: {pos} positive, {neg} negative")));
    }
    let cv_f1 = cross_validate(set, cfg, fingerprint)?;
    let (model, _) = fit(set, cfg, fingerprint)?;
    Ok((model, cv_f1))
}
