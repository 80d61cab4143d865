use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelDims;
use crate::linalg::Matrix;

/// A fixed, ordered set of named weight tensors.
pub trait Parameters: Clone + Send + Sync {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)>;
    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.as_mut_slice().fill(0.0);
        }
        z
    }

    fn add_assign(&mut self, other: &Self) {
        let theirs = other.tensors();
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(theirs) {
            a.add_assign(b);
        }
    }

    fn scale(&mut self, s: f64) {
        for (_, t) in self.tensors_mut() {
            t.scale_in_place(s);
        }
    }

    fn n_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.as_slice().len()).sum()
    }

    fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
    Matrix::from_vec(rows, cols, data)
}

/// All trainable weights of the graph-convolutional recurrent network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// GCN input-to-hidden, C × H_gcn.
    pub w0: Matrix,
    /// GCN hidden-to-output, H_gcn × F.
    pub w1: Matrix,
    pub w_zr: Matrix,
    pub w_hr: Matrix,
    pub w_zu: Matrix,
    pub w_hu: Matrix,
    pub w_zh: Matrix,
    pub w_hh: Matrix,
    pub b_r: Matrix,
    pub b_u: Matrix,
    pub b_h: Matrix,
    /// Output head, H_gru × M.
    pub w_out: Matrix,
    pub b_out: Matrix,
}

impl ModelParams {
    pub fn zeros(d: &ModelDims) -> Self {
        let zin = d.gru_input();
        let h = d.gru_hidden;
        Self {
            w0: Matrix::zeros(d.in_channels, d.gcn_hidden),
            w1: Matrix::zeros(d.gcn_hidden, d.gcn_out),
            w_zr: Matrix::zeros(zin, h),
            w_hr: Matrix::zeros(h, h),
            w_zu: Matrix::zeros(zin, h),
            w_hu: Matrix::zeros(h, h),
            w_zh: Matrix::zeros(zin, h),
            w_hh: Matrix::zeros(h, h),
            b_r: Matrix::zeros(1, h),
            b_u: Matrix::zeros(1, h),
            b_h: Matrix::zeros(1, h),
            w_out: Matrix::zeros(h, d.horizon),
            b_out: Matrix::zeros(1, d.horizon),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(d: &ModelDims, rng: &mut R) -> Self {
        let zin = d.gru_input();
        let h = d.gru_hidden;
        Self {
            w0: glorot_uniform(d.in_channels, d.gcn_hidden, rng),
            w1: glorot_uniform(d.gcn_hidden, d.gcn_out, rng),
            w_zr: glorot_uniform(zin, h, rng),
            w_hr: glorot_uniform(h, h, rng),
            w_zu: glorot_uniform(zin, h, rng),
            w_hu: glorot_uniform(h, h, rng),
            w_zh: glorot_uniform(zin, h, rng),
            w_hh: glorot_uniform(h, h, rng),
            b_r: Matrix::zeros(1, h),
            b_u: Matrix::zeros(1, h),
            b_h: Matrix::zeros(1, h),
            w_out: glorot_uniform(h, d.horizon, rng),
            b_out: Matrix::zeros(1, d.horizon),
        }
    }

    pub fn matches(&self, d: &ModelDims) -> bool {
        let z = Self::zeros(d);
        self.tensors()
            .iter()
            .zip(z.tensors())
            .all(|((_, a), (_, b))| a.shape() == b.shape())
    }
}

impl Parameters for ModelParams {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("w0", &self.w0),
            ("w1", &self.w1),
            ("w_zr", &self.w_zr),
            ("w_hr", &self.w_hr),
            ("w_zu", &self.w_zu),
            ("w_hu", &self.w_hu),
            ("w_zh", &self.w_zh),
            ("w_hh", &self.w_hh),
            ("b_r", &self.b_r),
            ("b_u", &self.b_u),
            ("b_h", &self.b_h),
            ("w_out", &self.w_out),
            ("b_out", &self.b_out),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![
            ("w0", &mut self.w0),
            ("w1", &mut self.w1),
            ("w_zr", &mut self.w_zr),
            ("w_hr", &mut self.w_hr),
            ("w_zu", &mut self.w_zu),
            ("w_hu", &mut self.w_hu),
            ("w_zh", &mut self.w_zh),
            ("w_hh", &mut self.w_hh),
            ("b_r", &mut self.b_r),
            ("b_u", &mut self.b_u),
            ("b_h", &mut self.b_h),
            ("w_out", &mut self.w_out),
            ("b_out", &mut self.b_out),
        ]
    }
}
