use std::path::Path;

use ndarray::{s, Array2, Array3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{layers::sigmoid, Adam, AdamConfig, Crnn, Mode, ModelConfig};
use crate::error::{Error, Result};
use crate::symbolic::NUM_PITCHES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub min_epochs: usize,
    /// Epochs without validation improvement before stopping, counted once
    /// `min_epochs` have run.
    pub patience: usize,
    pub seed: u64,
    /// Longer examples are trained on a random window of this many frames.
    pub sequence_crop: usize,
    /// Optional global gradient-norm limit.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 8,
            max_epochs: 200,
            min_epochs: 50,
            patience: 10,
            seed: 0,
            sequence_crop: 3000,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.batch_size == 0 || self.sequence_crop == 0 {
            return Err(Error::config(
                "lr, batch_size and sequence_crop must be positive",
            ));
        }
        if self.min_epochs > self.max_epochs || self.max_epochs == 0 {
            return Err(Error::config(format!(
                "need 0 < min_epochs <= max_epochs, got {} and {}",
                self.min_epochs, self.max_epochs
            )));
        }
        Ok(())
    }
}

/// Input roll, spectrogram and target roll of one sequence, each `[n, 88]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub input_roll: Array2<f64>,
    pub features: Array2<f64>,
    pub target: Array2<f64>,
}

impl TrainingExample {
    pub fn new(
        input_roll: Array2<f64>,
        features: Array2<f64>,
        target: Array2<f64>,
    ) -> Result<Self> {
        let d = input_roll.dim();
        if features.dim() != d || target.dim() != d || d.1 != NUM_PITCHES || d.0 == 0 {
            return Err(Error::invalid(format!(
                "example shapes differ or are not [n, 88]: {:?} {:?} {:?}",
                d,
                features.dim(),
                target.dim()
            )));
        }
        Ok(TrainingExample {
            input_roll,
            features,
            target,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.input_roll.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights of the epoch with the lowest validation loss.
    pub model: Crnn,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

const CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy with predictions clamped to
/// `[1e-7, 1 - 1e-7]`.
pub fn bce_loss(pred: &Array2<f64>, target: &Array2<f64>) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::invalid(format!(
            "prediction {:?} and target {:?} differ in shape",
            pred.dim(),
            target.dim()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("empty prediction"));
    }
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let p = p.clamp(CLAMP, 1.0 - CLAMP);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / pred.len() as f64)
}

/// Binary cross-entropy on logits averaged over rows with nonzero
/// `row_weight` (all rows when `None`), with its gradient.
pub fn bce_with_logits(
    logits: &Array2<f64>,
    target: &Array2<f64>,
    row_weight: Option<&[f64]>,
) -> (f64, Array2<f64>) {
    let cols = logits.ncols() as f64;
    let weight = |r: usize| row_weight.map_or(1.0, |w| w[r]);
    let count: f64 = (0..logits.nrows())
        .map(|r| weight(r) * cols)
        .sum::<f64>()
        .max(1.0);
    let mut loss = 0.0;
    let mut grad = Array2::zeros(logits.raw_dim());
    for (r, (zr, tr)) in logits.rows().into_iter().zip(target.rows()).enumerate() {
        let w = weight(r);
        if w == 0.0 {
            continue;
        }
        for (k, (&z, &t)) in zr.iter().zip(tr).enumerate() {
            loss += w * (z.max(0.0) - z * t + (-z.abs()).exp().ln_1p());
            grad[[r, k]] = w * (sigmoid(z) - t) / count;
        }
    }
    (loss / count, grad)
}

/// Stacks examples into `[batch, len, 88]` arrays, cropping a random window
/// from longer examples and zero-padding shorter ones. Returns row weights
/// marking real frames.
fn make_batch(
    examples: &[&TrainingExample],
    crop: usize,
    rng: &mut impl Rng,
) -> (Array3<f64>, Array3<f64>, Array2<f64>, Vec<f64>) {
    let len = examples
        .iter()
        .map(|e| e.n_frames())
        .max()
        .unwrap_or(0)
        .min(crop);
    let b = examples.len();
    let mut roll = Array3::zeros((b, len, NUM_PITCHES));
    let mut feat = Array3::zeros((b, len, NUM_PITCHES));
    let mut target = Array2::zeros((b * len, NUM_PITCHES));
    let mut weight = vec![0.0; b * len];
    for (i, e) in examples.iter().enumerate() {
        let n = e.n_frames();
        let start = if n > len {
            rng.random_range(0..=n - len)
        } else {
            0
        };
        let take = (n - start).min(len);
        let src = s![start..start + take, ..];
        roll.slice_mut(s![i, ..take, ..])
            .assign(&e.input_roll.slice(src));
        feat.slice_mut(s![i, ..take, ..])
            .assign(&e.features.slice(src));
        target
            .slice_mut(s![i * len..i * len + take, ..])
            .assign(&e.target.slice(src));
        weight[i * len..i * len + take].fill(1.0);
    }
    (roll, feat, target, weight)
}

/// Mean evaluation-mode loss over full-length examples, weighted by frames.
pub(crate) fn evaluation_loss(model: &Crnn, examples: &[TrainingExample]) -> Result<f64> {
    let mut total = 0.0;
    let mut frames = 0usize;
    for e in examples {
        let logits = model.infer_logits(&e.input_roll, &e.features)?;
        total += bce_with_logits(&logits, &e.target, None).0 * e.n_frames() as f64;
        frames += e.n_frames();
    }
    Ok(total / frames.max(1) as f64)
}

/// Adam on binary cross-entropy between the network output and the target
/// rolls, with early stopping on validation loss. The same seed yields the
/// same trajectory.
pub fn train(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    train_set: &[TrainingExample],
    valid_set: &[TrainingExample],
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::config(
            "training and validation sets must be non-empty",
        ));
    }
    let mut model = Crnn::new(model_cfg.clone(), cfg.seed)?;
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            ..Default::default()
        },
        model.params(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, Crnn)> = None;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut weight_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let examples: Vec<&TrainingExample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (roll, feat, target, weight) = make_batch(&examples, cfg.sequence_crop, &mut rng);
            let mut mode = Mode {
                batch_stats: true,
                dropout: Some(&mut rng),
            };
            let (logits, cache) = model.forward(&roll, &feat, &mut mode)?;
            let (loss, dlogits) = bce_with_logits(&logits, &target, Some(&weight));
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            let mut grads = model.backward(&cache, &dlogits);
            if let Some(limit) = cfg.grad_clip {
                let norm = grads.global_norm();
                if norm > limit {
                    grads.scale(limit / norm);
                }
            }
            adam.update(model.params_mut(), &grads);
            model.update_running_stats(&cache);
            let w: f64 = weight.iter().sum();
            loss_sum += loss * w;
            weight_sum += w;
        }
        let train_loss = loss_sum / weight_sum.max(1.0);
        let valid_loss = evaluation_loss(&model, valid_set)?;
        if !valid_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: valid_loss,
            });
        }
        log::info!("epoch {epoch}: train {train_loss:.5}, valid {valid_loss:.5}");
        log.push(EpochLog {
            epoch,
            train_loss,
            valid_loss,
        });
        if best.as_ref().is_none_or(|b| valid_loss < b.0) {
            best = Some((valid_loss, epoch, model.clone()));
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
        if epoch >= cfg.min_epochs && epoch - best_epoch >= cfg.patience {
            log::info!("early stop after epoch {epoch}; best epoch {best_epoch}");
            break;
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model,
        best_epoch,
        log,
    })
}

/// CSV with columns `epoch,train_loss,valid_loss`.
pub fn write_training_log(log: &[EpochLog], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in log {
        w.serialize(e)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
