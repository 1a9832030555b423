//! Readout training: closed-form ridge or mini-batch gradient descent with
//! backpropagation through the frozen reservoirs into the patch embedding.

mod checkpoint;
mod model;
mod ridge;
mod tail;

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};
use crate::patches::ImageBatch;

pub use checkpoint::{read_checkpoint, shape_hash, write_checkpoint};
pub use model::{FeatureCache, ModelConfig, ViRModel};
pub use ridge::{fit_ridge, fit_ridge_streaming, one_hot, ridge_scores, with_bias_column, RidgeFit};
pub use tail::{
    forward_tail, gelu, gelu_derivative, softmax_cross_entropy, FeatureNorm, Gradients, LayerNorm, Linear,
    NormKind, ParameterCounts, Pooling, TailCache, TailNetwork, TailShape, LAYER_NORM_EPS,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Closed-form readout over pooled features; `E` stays at its initialization.
    #[default]
    Ridge,
    /// SGD with momentum on every tail tensor, `E` included.
    Gradient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub ridge_k: f64,
    pub pooling: Pooling,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub momentum: f64,
    pub seed: u64,
    /// Test images scored after each gradient epoch; all when unset.
    pub eval_limit: Option<usize>,
    /// Training images whose ridge features are kept for train accuracy.
    pub train_eval_limit: usize,
    /// Images per forward chunk during ridge harvesting and evaluation.
    pub chunk: usize,
    /// Training images used to fit the readout feature standardizers before
    /// gradient training; 0 leaves them at identity.
    pub norm_samples: usize,
    pub norm: NormKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Ridge,
            ridge_k: 1e-3,
            pooling: Pooling::MeanOverSteps,
            lr: 0.01,
            epochs: 10,
            batch_size: 64,
            weight_decay: 1e-4,
            momentum: 0.9,
            seed: 0,
            eval_limit: None,
            train_eval_limit: 10_000,
            chunk: 256,
            norm_samples: 2048,
            norm: NormKind::Center,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.chunk == 0 {
            return bad("chunk must be positive".into());
        }
        match self.mode {
            TrainMode::Ridge => {
                if !(self.ridge_k >= 0.0 && self.ridge_k.is_finite()) {
                    return bad(format!("ridge_k must be a finite value >= 0, got {}", self.ridge_k));
                }
            }
            TrainMode::Gradient => {
                if !(self.lr >= 0.0 && self.lr.is_finite()) {
                    return bad(format!("lr must be >= 0, got {}", self.lr));
                }
                if self.epochs == 0 || self.batch_size == 0 {
                    return bad("epochs and batch_size must be positive".into());
                }
                if !(0.0..1.0).contains(&self.momentum) {
                    return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
                }
                if !(self.weight_decay >= 0.0) {
                    return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub log: Vec<EpochRecord>,
    pub train_accuracy: f64,
    /// Accuracy on the whole test set after training.
    pub test_accuracy: Option<f64>,
}

pub fn write_log_csv(path: &Path, log: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "loss", "train_acc", "test_acc", "seconds"])?;
    for r in log {
        w.write_record([
            r.epoch.to_string(),
            format!("{}", r.loss),
            format!("{}", r.train_acc),
            r.test_acc.map_or(String::new(), |a| format!("{a}")),
            format!("{:.3}", r.seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Loss, gradients and hit count for one mini-batch.
pub struct BatchGradient {
    pub loss: f64,
    pub grads: Gradients,
    pub correct: usize,
}

/// Mean cross-entropy over the selected images and the gradient of every
/// tail tensor, `E` included via the reverse pass through the reservoirs.
pub fn loss_and_grad(model: &ViRModel, data: &ImageBatch, idx: &[usize], batch_index: usize) -> Result<BatchGradient> {
    if idx.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let labels: Vec<usize> = idx.iter().map(|&i| data.label(i)).collect();
    let (pooled, cache) = model.features(data, idx)?;
    let (logits, tail_cache) = model.tail.forward(&pooled)?;
    let (loss, dlogits) = softmax_cross_entropy(&logits, &labels)?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { batch: batch_index });
    }
    let correct = (0..logits.rows()).filter(|&r| logits.argmax_row(r) == labels[r]).count();
    let mut grads = model.tail.zeros_like();
    let grad_pooled = model.tail.backward(&tail_cache, &dlogits, &mut grads);
    grads.embed = model.features_backward(&cache, &grad_pooled)?;
    Ok(BatchGradient { loss, grads, correct })
}

/// Trainable parameter counts (fixed reservoir and inter-layer matrices excluded).
pub fn count_parameters(model: &ViRModel) -> ParameterCounts {
    model.tail.parameter_counts()
}

/// Variance floor for fitted feature standardizers.
pub const NORM_VARIANCE_FLOOR: f64 = 1e-6;

/// Fits each readout's standardizer to the pooled features of the first
/// `samples` images under the current model.
pub fn fit_feature_norms(
    model: &mut ViRModel,
    data: &ImageBatch,
    samples: usize,
    kind: NormKind,
    chunk: usize,
) -> Result<()> {
    let n = samples.min(data.len());
    if n == 0 {
        return Err(Error::Input("no images to fit feature norms on".into()));
    }
    let idx: Vec<usize> = (0..n).collect();
    let mut parts: Vec<Vec<Matrix>> = vec![Vec::new(); model.tail.readouts.len()];
    for part in idx.chunks(chunk.max(1)) {
        let (pooled, _) = model.features(data, part)?;
        for (b, f) in pooled.into_iter().enumerate() {
            parts[b].push(f);
        }
    }
    for (b, p) in parts.iter().enumerate() {
        let f = Matrix::vstack(p)?;
        model.tail.norms[b] = match kind {
            NormKind::Standardize => FeatureNorm::fit(&f, NORM_VARIANCE_FLOOR),
            NormKind::Center => FeatureNorm::fit_centered(&f, NORM_VARIANCE_FLOOR),
        };
    }
    Ok(())
}

fn decays(name: &str) -> bool {
    name == "embed" || name.ends_with(".weight")
}

fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total <= 1 {
        return base;
    }
    0.5 * base * (1.0 + (std::f64::consts::PI * step as f64 / total as f64).cos())
}

pub fn train(model: &mut ViRModel, train_set: &ImageBatch, test_set: Option<&ImageBatch>, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(model, train_set, test_set, config, &mut |_| {})
}

pub fn train_with_progress(
    model: &mut ViRModel,
    train_set: &ImageBatch,
    test_set: Option<&ImageBatch>,
    config: &TrainConfig,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Input("empty training set".into()));
    }
    model.check_data(train_set)?;
    if let Some(t) = test_set {
        model.check_data(t)?;
    }
    model.pooling = config.pooling;
    match config.mode {
        TrainMode::Ridge => train_ridge(model, train_set, test_set, config, progress),
        TrainMode::Gradient => train_gradient(model, train_set, test_set, config, progress),
    }
}

fn train_ridge(
    model: &mut ViRModel,
    train_set: &ImageBatch,
    test_set: Option<&ImageBatch>,
    config: &TrainConfig,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    let start = Instant::now();
    model.ridge = None;
    let fit = fit_ridge_streaming(model, train_set, config.ridge_k, config.chunk, config.train_eval_limit)?;
    model.ridge = Some(fit.readouts);
    let test_accuracy = test_set.map(|t| model.accuracy(t, config.chunk)).transpose()?;
    let record = EpochRecord {
        epoch: 1,
        loss: fit.train_mse,
        train_acc: fit.train_accuracy,
        test_acc: test_accuracy,
        seconds: start.elapsed().as_secs_f64(),
    };
    progress(&record);
    Ok(TrainOutcome {
        log: vec![record],
        train_accuracy: fit.train_accuracy,
        test_accuracy,
    })
}

fn train_gradient(
    model: &mut ViRModel,
    train_set: &ImageBatch,
    test_set: Option<&ImageBatch>,
    config: &TrainConfig,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    model.ridge = None;
    if config.norm_samples > 0 {
        fit_feature_norms(model, train_set, config.norm_samples, config.norm, config.chunk)?;
    }
    let eval_set = test_set.map(|t| match config.eval_limit {
        Some(n) if n < t.len() => t.take(n),
        _ => t.clone(),
    });
    let batches_per_epoch = train_set.len().div_ceil(config.batch_size);
    let total_steps = batches_per_epoch * config.epochs;
    let mut velocity = model.tail.zeros_like();
    let shuffle = RngStream::new(config.seed, "shuffle");
    let mut log = Vec::with_capacity(config.epochs);
    let mut step = 0;
    let mut train_accuracy = 0.0;
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut shuffle.indexed(epoch as u64).rng());
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let bg = loss_and_grad(model, train_set, idx, (epoch - 1) * batches_per_epoch + b)?;
            loss_sum += bg.loss * idx.len() as f64;
            correct += bg.correct;
            let lr = cosine_lr(config.lr, step, total_steps);
            let mut grads = bg.grads;
            for ((name, p), ((_, g), (_, v))) in model
                .tail
                .tensors_mut()
                .into_iter()
                .zip(grads.tensors_mut().into_iter().zip(velocity.tensors_mut()))
            {
                let wd = if decays(&name) { config.weight_decay } else { 0.0 };
                for ((pi, gi), vi) in p.iter_mut().zip(g.iter_mut()).zip(v.iter_mut()) {
                    *gi += wd * *pi;
                    *vi = config.momentum * *vi + *gi;
                    *pi -= lr * *vi;
                }
            }
            step += 1;
        }
        if !model.tail.is_finite() {
            return Err(Error::NonFiniteLoss { batch: step });
        }
        train_accuracy = correct as f64 / train_set.len() as f64;
        let test_acc = eval_set.as_ref().map(|t| model.accuracy(t, config.chunk)).transpose()?;
        let record = EpochRecord {
            epoch,
            loss: loss_sum / train_set.len() as f64,
            train_acc: train_accuracy,
            test_acc,
            seconds: start.elapsed().as_secs_f64(),
        };
        progress(&record);
        log.push(record);
    }
    let test_accuracy = match (test_set, &eval_set) {
        (Some(t), Some(e)) if e.len() == t.len() => log.last().and_then(|r| r.test_acc),
        (Some(t), _) => Some(model.accuracy(t, config.chunk)?),
        _ => None,
    };
    Ok(TrainOutcome {
        log,
        train_accuracy,
        test_accuracy,
    })
}
