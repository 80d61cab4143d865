//! The graph-convolutional recurrent demand forecaster, its training loop,
//! and the MLP baseline that shares the same optimizer machinery.

mod adam;
mod checkpoint;
mod mlp;
mod network;
mod params;
mod train;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use checkpoint::{Checkpoint, ScalerStats, TensorRecord, CHECKPOINT_FORMAT};
pub use mlp::{Mlp, MlpDims, MlpParams};
pub use network::{gcn_forward, gru_cell, loss, loss_gradient, softmax_rows, SaMgcrn};
pub use params::{glorot_uniform, ModelParams, Parameters};
pub use train::{mean_abs_error, train, EpochLog, TrainConfig, TrainLog, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Layer sizes. `in_channels` is 1: the only per-node GCN input is demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub n_nodes: usize,
    pub seq_len: usize,
    pub n_temporal: usize,
    pub in_channels: usize,
    pub gcn_hidden: usize,
    pub gcn_out: usize,
    pub gru_hidden: usize,
    pub horizon: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_nodes", self.n_nodes),
            ("seq_len", self.seq_len),
            ("in_channels", self.in_channels),
            ("gcn_hidden", self.gcn_hidden),
            ("gcn_out", self.gcn_out),
            ("gru_hidden", self.gru_hidden),
            ("horizon", self.horizon),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("model dimension {name} must be positive")));
        }
        if self.in_channels != 1 {
            return Err(Error::invalid(
                "only single-channel (scalar demand) GCN input is supported",
            ));
        }
        Ok(())
    }

    /// Width of the GRU input: GCN filters plus temporal features.
    pub fn gru_input(&self) -> usize {
        self.gcn_out + self.n_temporal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GcnActivation {
    #[default]
    Softmax,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Mse,
    Mae,
}

/// One training window: demand `x` (N×T), temporal features `c` (T
/// matrices of N×K) and targets `y` (N×M). `t_end` is the panel hour of the
/// last input step.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Matrix,
    pub c: Vec<Matrix>,
    pub y: Matrix,
    pub t_end: usize,
}

impl Sample {
    pub fn n_nodes(&self) -> usize {
        self.x.rows()
    }

    pub fn seq_len(&self) -> usize {
        self.x.cols()
    }

    pub fn horizon(&self) -> usize {
        self.y.cols()
    }

    /// Panel hours of the targets.
    pub fn target_hours(&self) -> std::ops::RangeInclusive<usize> {
        self.t_end + 1..=self.t_end + self.horizon()
    }

    /// Panel hours of the inputs.
    pub fn input_hours(&self) -> std::ops::RangeInclusive<usize> {
        self.t_end + 1 - self.seq_len()..=self.t_end
    }
}

/// A trainable forecaster over [`Sample`]s.
pub trait Forecaster: Sync {
    type Params: Parameters;

    fn init_params(&self, rng: &mut rand_chacha::ChaCha8Rng) -> Self::Params;

    /// Predictions for one window (N×M), in training units.
    fn predict(&self, params: &Self::Params, sample: &Sample) -> Result<Matrix>;

    /// Loss of one window and its gradient. `noise_seed` drives any
    /// training-time randomness such as dropout.
    fn loss_and_grad(
        &self,
        params: &Self::Params,
        sample: &Sample,
        kind: LossKind,
        noise_seed: u64,
    ) -> Result<(f64, Self::Params)>;
}
