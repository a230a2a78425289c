use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::cae::CaeModel;
use crate::data::FeatureMapSet;
use crate::error::{Error, Result};
use crate::ops::{adam_step, layernorm, AdamConfig, LayerNormConfig, LayerNormMode};
use crate::tensor::MapDims;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f32,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub layernorm: LayerNormConfig,
    pub shuffle: bool,
    /// Invoke the checkpoint hook every this many epochs (0: final epoch only).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 128,
            epochs: 50,
            seed: 0,
            layernorm: LayerNormConfig::default(),
            shuffle: true,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("learning rate must be ≥ 0, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        let ln = self.layernorm;
        if !(ln.epsilon > 0.0) {
            return Err(Error::Config("layernorm epsilon must be positive".into()));
        }
        if ln.frozen_var.is_some_and(|v| !(v >= 0.0)) {
            return Err(Error::Config("layernorm frozen variance must be ≥ 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    /// Training-mode loss of every minibatch, in step order.
    pub step_losses: Vec<f64>,
}

/// Global scalar mean and population variance over every value of `set`.
fn dataset_stats(set: &FeatureMapSet) -> (f32, f32) {
    let mut count = 0usize;
    let mut sum = 0.0f64;
    for r in set.records() {
        sum += r.data.iter().map(|&v| v as f64).sum::<f64>();
        count += r.data.len();
    }
    let mean = sum / count as f64;
    let mut sq = 0.0f64;
    for r in set.records() {
        sq += r.data.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>();
    }
    (mean as f32, (sq / count as f64) as f32)
}

fn check_set(set: &FeatureMapSet, expected: MapDims, what: &str) -> Result<()> {
    if set.dims != expected {
        return Err(Error::Shape(format!(
            "{what} feature maps are {}, model expects {expected}",
            set.dims
        )));
    }
    Ok(())
}

/// Eval-mode reconstruction loss over `set`, weighted by sample count.
pub(crate) fn evaluate(model: &CaeModel, set: &FeatureMapSet, batch_size: usize) -> Result<f64> {
    let idx: Vec<usize> = (0..set.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(batch_size) {
        let (_, loss) = model.reconstruct(&set.batch(chunk)?)?;
        total += loss * chunk.len() as f64;
    }
    Ok(total / set.len() as f64)
}

pub fn train(
    model: &mut CaeModel,
    train_set: &FeatureMapSet,
    val_set: &FeatureMapSet,
    cfg: &TrainConfig,
) -> Result<TrainingLog> {
    train_with_hook(model, train_set, val_set, cfg, |_, _| Ok(()))
}

/// Minibatch reconstruction training with Adam.
///
/// `on_checkpoint` runs after every `cfg.checkpoint_every`-th epoch and
/// after the last one. With the frozen-statistics layer-norm mode and no
/// stored statistics, the global mean and variance of `train_set` are
/// computed first and stored in the model.
pub fn train_with_hook<F>(
    model: &mut CaeModel,
    train_set: &FeatureMapSet,
    val_set: &FeatureMapSet,
    cfg: &TrainConfig,
    mut on_checkpoint: F,
) -> Result<TrainingLog>
where
    F: FnMut(&EpochRecord, &CaeModel) -> Result<()>,
{
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    check_set(train_set, model.spec.input, "training")?;
    if !val_set.is_empty() {
        check_set(val_set, model.spec.input, "validation")?;
    }

    model.layernorm = cfg.layernorm;
    if cfg.layernorm.mode == LayerNormMode::FrozenStats
        && (cfg.layernorm.frozen_mean.is_none() || cfg.layernorm.frozen_var.is_none())
    {
        let (mean, var) = dataset_stats(train_set);
        model.layernorm.frozen_mean = Some(mean);
        model.layernorm.frozen_var = Some(var);
    }
    model.layernorm.validate()?;

    let adam = AdamConfig::with_lr(cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = TrainingLog::default();

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut epoch_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = train_set.batch(chunk)?;
            let target = layernorm(&batch, &model.layernorm)?;
            let y = model.forward_train(&target)?;
            let (loss, grad) = crate::ops::mse_loss(&y, &target)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss is {loss} at epoch {epoch}, batch {b}"
                )));
            }
            model.backward(&grad)?;
            adam_step(&mut model.params_mut(), &adam).map_err(|e| match e {
                Error::NonFinite(msg) => {
                    Error::NonFinite(format!("{msg} (epoch {epoch}, batch {b})"))
                }
                other => other,
            })?;
            log.step_losses.push(loss);
            epoch_sum += loss * chunk.len() as f64;
        }
        let val_loss = if val_set.is_empty() {
            None
        } else {
            Some(evaluate(model, val_set, cfg.batch_size)?)
        };
        let record = EpochRecord {
            epoch,
            train_loss: epoch_sum / train_set.len() as f64,
            val_loss,
        };
        log::info!(
            "epoch {epoch}/{}: train {:.6} val {:?}",
            cfg.epochs,
            record.train_loss,
            record.val_loss
        );
        let due = cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0;
        if due || epoch == cfg.epochs {
            on_checkpoint(&record, model)?;
        }
        log.epochs.push(record);
    }
    Ok(log)
}
