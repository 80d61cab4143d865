//! Per-node feedforward baseline: one ReLU hidden layer followed by dropout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{loss, loss_gradient};
use super::params::{glorot_uniform, Parameters};
use super::{Forecaster, LossKind, Sample};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpDims {
    pub seq_len: usize,
    pub n_temporal: usize,
    pub hidden: usize,
    pub horizon: usize,
}

impl MlpDims {
    pub fn input_width(&self) -> usize {
        self.seq_len * (1 + self.n_temporal)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

impl Parameters for MlpParams {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![("w1", &self.w1), ("b1", &self.b1), ("w2", &self.w2), ("b2", &self.b2)]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![
            ("w1", &mut self.w1),
            ("b1", &mut self.b1),
            ("w2", &mut self.w2),
            ("b2", &mut self.b2),
        ]
    }
}

impl MlpParams {
    pub fn zeros(d: &MlpDims) -> Self {
        Self {
            w1: Matrix::zeros(d.input_width(), d.hidden),
            b1: Matrix::zeros(1, d.hidden),
            w2: Matrix::zeros(d.hidden, d.horizon),
            b2: Matrix::zeros(1, d.horizon),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    pub dims: MlpDims,
    /// Drop probability applied to hidden units during training only.
    pub dropout: f64,
}

impl Mlp {
    pub fn new(dims: MlpDims, dropout: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::invalid(format!("dropout must lie in [0, 1), got {dropout}")));
        }
        if dims.seq_len == 0 || dims.hidden == 0 || dims.horizon == 0 {
            return Err(Error::invalid("MLP dimensions must be positive"));
        }
        Ok(Self { dims, dropout })
    }

    /// One row per node: the demand window followed by each step's features.
    pub fn flatten(&self, sample: &Sample) -> Result<Matrix> {
        let d = &self.dims;
        if sample.seq_len() != d.seq_len || sample.c.len() != d.seq_len {
            return Err(Error::Dimension {
                context: "MLP input window",
                expected: d.seq_len.to_string(),
                actual: sample.seq_len().to_string(),
            });
        }
        let n = sample.n_nodes();
        let mut out = Matrix::zeros(n, d.input_width());
        for i in 0..n {
            let row = out.row_mut(i);
            row[..d.seq_len].copy_from_slice(sample.x.row(i));
            for (t, ct) in sample.c.iter().enumerate() {
                if ct.cols() != d.n_temporal {
                    return Err(Error::Dimension {
                        context: "MLP temporal features",
                        expected: d.n_temporal.to_string(),
                        actual: ct.cols().to_string(),
                    });
                }
                let off = d.seq_len + t * d.n_temporal;
                row[off..off + d.n_temporal].copy_from_slice(ct.row(i));
            }
        }
        Ok(out)
    }
}

impl Forecaster for Mlp {
    type Params = MlpParams;

    fn init_params(&self, rng: &mut ChaCha8Rng) -> MlpParams {
        let d = &self.dims;
        MlpParams {
            w1: glorot_uniform(d.input_width(), d.hidden, rng),
            b1: Matrix::zeros(1, d.hidden),
            w2: glorot_uniform(d.hidden, d.horizon, rng),
            b2: Matrix::zeros(1, d.horizon),
        }
    }

    fn predict(&self, params: &MlpParams, sample: &Sample) -> Result<Matrix> {
        let input = self.flatten(sample)?;
        let mut a = input.matmul(&params.w1);
        a.add_row_broadcast(&params.b1);
        let h = a.map(|v| v.max(0.0));
        let mut out = h.matmul(&params.w2);
        out.add_row_broadcast(&params.b2);
        if !out.is_finite() {
            return Err(Error::NonFinite("MLP output".into()));
        }
        Ok(out)
    }

    fn loss_and_grad(
        &self,
        params: &MlpParams,
        sample: &Sample,
        kind: LossKind,
        noise_seed: u64,
    ) -> Result<(f64, MlpParams)> {
        let input = self.flatten(sample)?;
        let mut a = input.matmul(&params.w1);
        a.add_row_broadcast(&params.b1);
        let keep = 1.0 - self.dropout;
        let mask = if self.dropout > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
            let data = (0..a.rows() * a.cols())
                .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect();
            Matrix::from_vec(a.rows(), a.cols(), data)
        } else {
            Matrix::filled(a.rows(), a.cols(), 1.0)
        };
        let h = a.zip_map(&mask, |v, m| v.max(0.0) * m);
        let mut out = h.matmul(&params.w2);
        out.add_row_broadcast(&params.b2);
        if !out.is_finite() {
            return Err(Error::NonFinite("MLP output".into()));
        }
        let value = loss(&out, &sample.y, kind);

        let mut g = params.zeros_like();
        let dout = loss_gradient(&out, &sample.y, kind);
        h.t_matmul_acc(&dout, &mut g.w2);
        dout.column_sums_acc(&mut g.b2);
        let dh = dout.matmul_t(&params.w2);
        let da = dh
            .zip_map(&mask, |d, m| d * m)
            .zip_map(&a, |d, v| if v > 0.0 { d } else { 0.0 });
        input.t_matmul_acc(&da, &mut g.w1);
        da.column_sums_acc(&mut g.b1);
        Ok((value, g))
    }
}
