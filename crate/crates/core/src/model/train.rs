//! Mini-batch Adam with validation-based early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamHyper, AdamState};
use super::params::Parameters;
use super::{Forecaster, GcnActivation, LossKind, Sample};
use crate::error::{Error, Result};
use crate::exec::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seq_len: usize,
    pub max_epochs: usize,
    /// Stop after this many consecutive epochs without a new best
    /// validation MAE.
    pub patience_epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub loss: LossKind,
    pub gcn_activation: GcnActivation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            seq_len: 12,
            max_epochs: 2000,
            patience_epochs: 200,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            loss: LossKind::Mse,
            gcn_activation: GcnActivation::Softmax,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("train.learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("train.batch_size must be positive"));
        }
        if self.seq_len == 0 {
            return Err(Error::invalid("train.seq_len must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("train.max_epochs must be positive"));
        }
        if self.patience_epochs > self.max_epochs {
            return Err(Error::invalid("train.patience_epochs must not exceed train.max_epochs"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::invalid(
                "train Adam betas must lie in [0, 1) and epsilon be positive",
            ));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub stopped_early: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<P> {
    pub params: P,
    pub log: TrainLog,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn noise_seed(seed: u64, epoch: usize, position: usize) -> u64 {
    splitmix64(splitmix64(seed ^ epoch as u64) ^ position as u64)
}

/// Validation MAE: mean absolute error per node, weighted by `node_scale`
/// (the inverse of a per-node min-max scaling), averaged over every
/// sample, node and horizon step.
pub fn mean_abs_error<F: Forecaster>(
    model: &F,
    params: &F::Params,
    samples: &[Sample],
    node_scale: &[f64],
    exec: Exec,
) -> Result<f64> {
    let per_sample = exec.try_map(samples, |s| {
        let pred = model.predict(params, s)?;
        let mut total = 0.0;
        for i in 0..pred.rows() {
            let w = node_scale.get(i).copied().unwrap_or(1.0);
            for j in 0..pred.cols() {
                total += (pred[(i, j)] - s.y[(i, j)]).abs() * w;
            }
        }
        Ok::<_, Error>((total, pred.rows() * pred.cols()))
    })?;
    let (sum, count) = per_sample
        .into_iter()
        .fold((0.0, 0usize), |(a, n), (b, m)| (a + b, n + m));
    Ok(sum / count as f64)
}

/// Trains from a seeded initialization and returns the parameters with the
/// lowest validation MAE seen. Gradients of a batch are computed per
/// sample (in parallel when `exec` allows) and summed in batch order, so the
/// trajectory is bitwise reproducible.
pub fn train<F: Forecaster>(
    model: &F,
    train_set: &[Sample],
    val_set: &[Sample],
    config: &TrainConfig,
    node_scale: &[f64],
    exec: Exec,
) -> Result<TrainOutcome<F::Params>> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if val_set.is_empty() {
        return Err(Error::invalid("validation set is empty"));
    }

    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);

    let mut params = model.init_params(&mut init_rng);
    let mut state = AdamState::new(&params);
    let hyper = config.adam();

    let mut best = params.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut epochs = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let start = b * config.batch_size;
            let jobs: Vec<(usize, usize)> = chunk.iter().enumerate().map(|(i, &s)| (start + i, s)).collect();
            let results = exec.try_map(&jobs, |&(pos, idx)| {
                model.loss_and_grad(
                    &params,
                    &train_set[idx],
                    config.loss,
                    noise_seed(config.seed, epoch, pos),
                )
            })?;
            let mut grad = params.zeros_like();
            for (l, g) in &results {
                loss_sum += l;
                grad.add_assign(g);
            }
            grad.scale(1.0 / chunk.len() as f64);
            adam_step(&mut params, &grad, &mut state, &hyper);
            if !params.is_finite() {
                return Err(Error::NonFinite(format!("parameters after epoch {epoch}, batch {b}")));
            }
        }
        let val_mae = mean_abs_error(model, &params, val_set, node_scale, exec)?;
        epochs.push(EpochLog {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_mae,
        });
        if val_mae < best_val {
            best_val = val_mae;
            best = params.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience_epochs.max(1) {
                stopped_early = true;
                break;
            }
        }
    }
    log::debug!(
        "training finished after {} epochs; best validation MAE {best_val:.4} at epoch {best_epoch}",
        epochs.len()
    );
    Ok(TrainOutcome {
        params: best,
        log: TrainLog {
            epochs,
            best_epoch,
            best_val_mae: best_val,
            stopped_early,
        },
    })
}
