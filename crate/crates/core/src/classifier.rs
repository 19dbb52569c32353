//! Logistic probe over frozen embeddings, trained on binary cross-entropy
//! with mini-batch SGD.
//!
//! `p(x) = sigmoid(w·x + b)`; the loss is
//! `-(1/|D|) Σ [y ln p + (1-y) ln(1-p)] + l2·‖w‖²` with `p` clamped to
//! `[1e-12, 1 - 1e-12]`. Predicted label is 1 iff `p >= 0.5`.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::f1_macro;

pub const PROB_CLAMP: f64 = 1e-12;

/// A borrowed training example.
#[derive(Clone, Copy, Debug)]
pub struct Example<'a> {
    pub features: &'a [f32],
    pub label: u8,
}

impl<'a> Example<'a> {
    pub fn new(features: &'a [f32], label: u8) -> Self {
        Self { features, label }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

impl LinearModel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    fn check_dim(&self, x: &[f32]) -> Result<()> {
        if x.len() != self.weights.len() {
            return Err(Error::DimMismatch {
                expected: self.weights.len(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn logit(&self, x: &[f32]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * *v as f64).sum::<f64>() + self.bias
    }

    /// Unclamped `sigmoid(w·x + b)`.
    fn raw_prob(&self, x: &[f32]) -> f64 {
        sigmoid(self.logit(x))
    }

    /// Probability of label 1, clamped away from 0 and 1.
    pub fn predict(&self, x: &[f32]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(clamp_prob(self.raw_prob(x)))
    }

    pub fn predict_label(&self, x: &[f32]) -> Result<u8> {
        Ok((self.predict(x)? >= 0.5) as u8)
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }

    /// Text format: a `linear-probe v1` line, `dim N`, `bias B`, then one
    /// weight per line. Floats use shortest round-trip notation.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "linear-probe v1").unwrap();
        writeln!(s, "dim {}", self.weights.len()).unwrap();
        writeln!(s, "bias {:?}", self.bias).unwrap();
        for w in &self.weights {
            writeln!(s, "{w:?}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::BadModel(m.to_string());
        let mut lines = text.lines();
        if lines.next() != Some("linear-probe v1") {
            return Err(bad("missing header"));
        }
        let dim: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("dim "))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("missing dim"))?;
        let bias: f64 = lines
            .next()
            .and_then(|l| l.strip_prefix("bias "))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("missing bias"))?;
        let weights: Vec<f64> = lines
            .map(|l| l.parse::<f64>().map_err(|_| bad("bad weight")))
            .collect::<Result<_>>()?;
        if weights.len() != dim {
            return Err(bad(&format!("expected {dim} weights, found {}", weights.len())));
        }
        let model = Self { weights, bias };
        if !model.is_finite() {
            return Err(bad("non-finite parameter"));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_text(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

fn check_data(model: &LinearModel, data: &[Example<'_>]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    for ex in data {
        model.check_dim(ex.features)?;
        if ex.label > 1 {
            return Err(Error::Config(format!("label {} is not 0 or 1", ex.label)));
        }
    }
    Ok(())
}

pub fn bce_loss(model: &LinearModel, data: &[Example<'_>], l2: f64) -> Result<f64> {
    check_data(model, data)?;
    let sum: f64 = data
        .iter()
        .map(|ex| {
            let p = clamp_prob(model.raw_prob(ex.features));
            let y = ex.label as f64;
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum();
    let reg: f64 = model.weights.iter().map(|w| w * w).sum();
    Ok(-sum / data.len() as f64 + l2 * reg)
}

/// Analytic gradient of [`bce_loss`] on `batch`:
/// `(1/|B|) Σ (p - y) x + 2·l2·w` and `(1/|B|) Σ (p - y)`.
pub fn grad(model: &LinearModel, batch: &[Example<'_>], l2: f64) -> Result<(Vec<f64>, f64)> {
    check_data(model, batch)?;
    let mut gw = vec![0.0; model.dim()];
    let mut gb = 0.0;
    for ex in batch {
        let r = model.raw_prob(ex.features) - ex.label as f64;
        for (g, x) in gw.iter_mut().zip(ex.features) {
            *g += r * *x as f64;
        }
        gb += r;
    }
    let n = batch.len() as f64;
    for (g, w) in gw.iter_mut().zip(&model.weights) {
        *g = *g / n + 2.0 * l2 * w;
    }
    Ok((gw, gb / n))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// `None` picks 10 epochs below 10,000 training examples and 5 otherwise.
    pub epochs: Option<usize>,
    pub l2: f64,
    pub rng_seed: u64,
    pub select_best_on_validation: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            batch_size: 16,
            epochs: None,
            l2: 1e-4,
            rng_seed: 0,
            select_best_on_validation: true,
        }
    }
}

impl TrainConfig {
    pub fn epochs_for(&self, train_count: usize) -> usize {
        self.epochs
            .unwrap_or(if train_count < 10_000 { 10 } else { 5 })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.epochs == Some(0) {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config("l2 must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Full training-set loss after the epoch.
    pub train_loss: f64,
    /// F1-macro on the validation set, if one was given.
    pub val_f1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` of the returned snapshot.
    pub selected_epoch: usize,
    /// Training data carried only one label.
    pub single_label: bool,
}

/// F1-macro of `model` on `data`.
pub fn evaluate_f1(model: &LinearModel, data: &[Example<'_>]) -> Result<f64> {
    let mut pred = Vec::with_capacity(data.len());
    let mut gold = Vec::with_capacity(data.len());
    for ex in data {
        pred.push(model.predict_label(ex.features)?);
        gold.push(ex.label);
    }
    f1_macro(&pred, &gold)
}

/// Mini-batch SGD from a zero model. Batches come from a seeded reshuffle
/// every epoch; the same inputs and seed give a bit-identical model.
pub fn train(
    train_set: &[Example<'_>],
    val_set: &[Example<'_>],
    config: &TrainConfig,
) -> Result<(LinearModel, TrainHistory)> {
    config.validate()?;
    let dim = train_set.first().ok_or(Error::EmptyData)?.features.len();
    let mut model = LinearModel::zeros(dim);
    check_data(&model, train_set)?;
    if !val_set.is_empty() {
        check_data(&model, val_set)?;
    }
    let single_label = train_set.iter().all(|e| e.label == train_set[0].label);

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut batch: Vec<Example<'_>> = Vec::with_capacity(config.batch_size);
    let mut records = Vec::new();
    let mut best: Option<(f64, usize, LinearModel)> = None;

    for epoch in 0..config.epochs_for(train_set.len()) {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_set[i]));
            let (gw, gb) = grad(&model, &batch, config.l2)?;
            for (w, g) in model.weights.iter_mut().zip(&gw) {
                *w -= config.learning_rate * g;
            }
            model.bias -= config.learning_rate * gb;
        }
        let train_loss = bce_loss(&model, train_set, config.l2)?;
        let val_f1 = if val_set.is_empty() {
            None
        } else {
            Some(evaluate_f1(&model, val_set)?)
        };
        if let Some(f1) = val_f1 {
            if best.as_ref().is_none_or(|(b, _, _)| f1 > *b) {
                best = Some((f1, epoch, model.clone()));
            }
        }
        records.push(EpochRecord {
            epoch,
            train_loss,
            val_f1,
        });
    }

    let last = records.len() - 1;
    let (model, selected_epoch) = match best {
        Some((_, epoch, snapshot)) if config.select_best_on_validation => (snapshot, epoch),
        _ => (model, last),
    };
    if !model.is_finite() {
        return Err(Error::Config("training diverged to non-finite parameters".into()));
    }
    Ok((
        model,
        TrainHistory {
            epochs: records,
            selected_epoch,
            single_label,
        },
    ))
}
