//! Forward evaluation and exact reverse-mode gradients of the two-layer GCN
//! spatial block, the node-wise GRU temporal block and the linear head.

use rand_chacha::ChaCha8Rng;

use super::params::{ModelParams, Parameters};
use super::{Forecaster, GcnActivation, LossKind, ModelDims, Sample};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

fn check_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

struct GcnTrace {
    ax: Matrix,
    p1: Matrix,
    ah1: Matrix,
    z: Matrix,
}

fn gcn_traced(x: &Matrix, a_hat: &Matrix, w0: &Matrix, w1: &Matrix, act: GcnActivation) -> GcnTrace {
    let ax = a_hat.matmul(x);
    let p1 = ax.matmul(w0);
    let h1 = p1.map(|v| v.max(0.0));
    let ah1 = a_hat.matmul(&h1);
    let p2 = ah1.matmul(w1);
    let z = match act {
        GcnActivation::Softmax => softmax_rows(&p2),
        GcnActivation::Linear => p2,
    };
    GcnTrace { ax, p1, ah1, z }
}

/// `act(Â · ReLU(Â · X · W0) · W1)` with `act` applied row-wise.
pub fn gcn_forward(x: &Matrix, a_hat: &Matrix, w0: &Matrix, w1: &Matrix, act: GcnActivation) -> Result<Matrix> {
    let n = a_hat.rows();
    if a_hat.cols() != n || x.rows() != n || x.cols() != w0.rows() || w0.cols() != w1.rows() {
        return Err(Error::Dimension {
            context: "gcn_forward",
            expected: format!("Â {n}×{n}, X {n}×{}, W0 {}×h, W1 h×f", w0.rows(), x.cols()),
            actual: format!(
                "Â {:?}, X {:?}, W0 {:?}, W1 {:?}",
                a_hat.shape(),
                x.shape(),
                w0.shape(),
                w1.shape()
            ),
        });
    }
    check_finite(x, "GCN input")?;
    Ok(gcn_traced(x, a_hat, w0, w1, act).z)
}

struct GruTrace {
    r: Matrix,
    u: Matrix,
    rh: Matrix,
    hc: Matrix,
    h: Matrix,
}

fn gate(z: &Matrix, wz: &Matrix, h: &Matrix, wh: &Matrix, b: &Matrix) -> Matrix {
    let mut a = z.matmul(wz);
    a.add_assign(&h.matmul(wh));
    a.add_row_broadcast(b);
    a
}

fn gru_traced(zp: &Matrix, h_prev: &Matrix, p: &ModelParams) -> GruTrace {
    let r = gate(zp, &p.w_zr, h_prev, &p.w_hr, &p.b_r).map(sigmoid);
    let u = gate(zp, &p.w_zu, h_prev, &p.w_hu, &p.b_u).map(sigmoid);
    let rh = r.zip_map(h_prev, |a, b| a * b);
    let hc = gate(zp, &p.w_zh, &rh, &p.w_hh, &p.b_h).map(f64::tanh);
    let mut h = u.zip_map(h_prev, |a, b| a * b);
    h.add_assign(&u.zip_map(&hc, |a, b| (1.0 - a) * b));
    GruTrace { r, u, rh, hc, h }
}

/// One GRU step applied to every node with shared weights.
pub fn gru_cell(zp: &Matrix, h_prev: &Matrix, params: &ModelParams) -> Result<Matrix> {
    if zp.cols() != params.w_zr.rows() || h_prev.cols() != params.w_hr.rows() || zp.rows() != h_prev.rows() {
        return Err(Error::Dimension {
            context: "gru_cell",
            expected: format!("Z' n×{}, H n×{}", params.w_zr.rows(), params.w_hr.rows()),
            actual: format!("Z' {:?}, H {:?}", zp.shape(), h_prev.shape()),
        });
    }
    Ok(gru_traced(zp, h_prev, params).h)
}

/// Mean over all entries of the squared or absolute error.
pub fn loss(pred: &Matrix, target: &Matrix, kind: LossKind) -> f64 {
    let n = pred.as_slice().len() as f64;
    let total: f64 = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, y)| match kind {
            LossKind::Mse => (p - y).powi(2),
            LossKind::Mae => (p - y).abs(),
        })
        .sum();
    total / n
}

/// Gradient of [`loss`] with respect to `pred`. The absolute-error
/// subgradient at zero residual is zero.
pub fn loss_gradient(pred: &Matrix, target: &Matrix, kind: LossKind) -> Matrix {
    let n = pred.as_slice().len() as f64;
    pred.zip_map(target, |p, y| match kind {
        LossKind::Mse => 2.0 * (p - y) / n,
        LossKind::Mae => {
            let d = p - y;
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        }
    })
}

struct StepTrace {
    gcn: GcnTrace,
    zp: Matrix,
    h_prev: Matrix,
    gru: GruTrace,
}

/// The full network bound to one normalized graph.
#[derive(Debug, Clone)]
pub struct SaMgcrn {
    pub dims: ModelDims,
    pub a_hat: Matrix,
    pub activation: GcnActivation,
}

impl SaMgcrn {
    pub fn new(dims: ModelDims, a_hat: Matrix, activation: GcnActivation) -> Result<Self> {
        dims.validate()?;
        if a_hat.shape() != (dims.n_nodes, dims.n_nodes) {
            return Err(Error::Dimension {
                context: "normalized adjacency",
                expected: format!("{0}×{0}", dims.n_nodes),
                actual: format!("{:?}", a_hat.shape()),
            });
        }
        Ok(Self {
            dims,
            a_hat,
            activation,
        })
    }

    fn check_inputs(&self, params: &ModelParams, x: &Matrix, c: &[Matrix]) -> Result<()> {
        let d = &self.dims;
        if !params.matches(d) {
            return Err(Error::invalid("parameter shapes do not match model dimensions"));
        }
        if x.shape() != (d.n_nodes, d.seq_len) || c.len() != d.seq_len {
            return Err(Error::Dimension {
                context: "input window",
                expected: format!("X {}×{}, {} feature steps", d.n_nodes, d.seq_len, d.seq_len),
                actual: format!("X {:?}, {} feature steps", x.shape(), c.len()),
            });
        }
        if let Some(ct) = c.iter().find(|ct| ct.shape() != (d.n_nodes, d.n_temporal)) {
            return Err(Error::Dimension {
                context: "temporal features",
                expected: format!("{}×{}", d.n_nodes, d.n_temporal),
                actual: format!("{:?}", ct.shape()),
            });
        }
        check_finite(x, "demand window")?;
        for ct in c {
            check_finite(ct, "temporal features")?;
        }
        Ok(())
    }

    fn run(&self, params: &ModelParams, x: &Matrix, c: &[Matrix], keep: bool) -> (Matrix, Vec<StepTrace>) {
        let d = &self.dims;
        let mut h = Matrix::zeros(d.n_nodes, d.gru_hidden);
        let mut traces = Vec::with_capacity(if keep { d.seq_len } else { 0 });
        for (t, ct) in c.iter().enumerate() {
            let xt = x.columns(t, t + 1);
            let gcn = gcn_traced(&xt, &self.a_hat, &params.w0, &params.w1, self.activation);
            let zp = gcn.z.hcat(ct);
            let gru = gru_traced(&zp, &h, params);
            let next = gru.h.clone();
            if keep {
                traces.push(StepTrace {
                    gcn,
                    zp,
                    h_prev: h,
                    gru,
                });
            }
            h = next;
        }
        (h, traces)
    }

    /// Predictions `H_T · W_out + b_out` for one window.
    pub fn forward(&self, params: &ModelParams, x: &Matrix, c: &[Matrix]) -> Result<Matrix> {
        self.check_inputs(params, x, c)?;
        let (h, _) = self.run(params, x, c, false);
        let mut y = h.matmul(&params.w_out);
        y.add_row_broadcast(&params.b_out);
        check_finite(&y, "model output")?;
        Ok(y)
    }

    /// Loss and exact parameter gradient for one window.
    pub fn backward(&self, params: &ModelParams, sample: &Sample, kind: LossKind) -> Result<(f64, ModelParams)> {
        self.check_inputs(params, &sample.x, &sample.c)?;
        if sample.y.shape() != (self.dims.n_nodes, self.dims.horizon) {
            return Err(Error::Dimension {
                context: "targets",
                expected: format!("{}×{}", self.dims.n_nodes, self.dims.horizon),
                actual: format!("{:?}", sample.y.shape()),
            });
        }
        let (h_last, traces) = self.run(params, &sample.x, &sample.c, true);
        let mut pred = h_last.matmul(&params.w_out);
        pred.add_row_broadcast(&params.b_out);
        check_finite(&pred, "model output")?;
        let value = loss(&pred, &sample.y, kind);

        let mut g = params.zeros_like();
        let dy = loss_gradient(&pred, &sample.y, kind);
        h_last.t_matmul_acc(&dy, &mut g.w_out);
        dy.column_sums_acc(&mut g.b_out);
        let mut dh = dy.matmul_t(&params.w_out);
        let f = self.dims.gcn_out;

        for s in traces.iter().rev() {
            let GruTrace { r, u, rh, hc, .. } = &s.gru;
            let hp = &s.h_prev;

            let du = dh.zip_map(&hp.zip_map(hc, |a, b| a - b), |a, b| a * b);
            let dhc = dh.zip_map(u, |a, b| a * (1.0 - b));
            let mut dhp = dh.zip_map(u, |a, b| a * b);

            // candidate state
            let dah = dhc.zip_map(hc, |a, b| a * (1.0 - b * b));
            s.zp.t_matmul_acc(&dah, &mut g.w_zh);
            dah.column_sums_acc(&mut g.b_h);
            let mut dzp = dah.matmul_t(&params.w_zh);
            rh.t_matmul_acc(&dah, &mut g.w_hh);
            let drh = dah.matmul_t(&params.w_hh);
            let dr = drh.zip_map(hp, |a, b| a * b);
            dhp.add_assign(&drh.zip_map(r, |a, b| a * b));

            // update gate
            let dau = du.zip_map(u, |a, b| a * b * (1.0 - b));
            s.zp.t_matmul_acc(&dau, &mut g.w_zu);
            hp.t_matmul_acc(&dau, &mut g.w_hu);
            dau.column_sums_acc(&mut g.b_u);
            dzp.add_assign(&dau.matmul_t(&params.w_zu));
            dhp.add_assign(&dau.matmul_t(&params.w_hu));

            // reset gate
            let dar = dr.zip_map(r, |a, b| a * b * (1.0 - b));
            s.zp.t_matmul_acc(&dar, &mut g.w_zr);
            hp.t_matmul_acc(&dar, &mut g.w_hr);
            dar.column_sums_acc(&mut g.b_r);
            dzp.add_assign(&dar.matmul_t(&params.w_zr));
            dhp.add_assign(&dar.matmul_t(&params.w_hr));

            // spatial block
            let dz = dzp.columns(0, f);
            let z = &s.gcn.z;
            let dp2 = match self.activation {
                GcnActivation::Linear => dz,
                GcnActivation::Softmax => {
                    let mut out = Matrix::zeros(z.rows(), z.cols());
                    for i in 0..z.rows() {
                        let dot: f64 = dz.row(i).iter().zip(z.row(i)).map(|(a, b)| a * b).sum();
                        for j in 0..z.cols() {
                            out[(i, j)] = z[(i, j)] * (dz[(i, j)] - dot);
                        }
                    }
                    out
                }
            };
            s.gcn.ah1.t_matmul_acc(&dp2, &mut g.w1);
            let dah1 = dp2.matmul_t(&params.w1);
            let dh1 = self.a_hat.t_matmul(&dah1);
            let dp1 = dh1.zip_map(&s.gcn.p1, |a, p| if p > 0.0 { a } else { 0.0 });
            s.gcn.ax.t_matmul_acc(&dp1, &mut g.w0);

            dh = dhp;
        }
        Ok((value, g))
    }
}

impl Forecaster for SaMgcrn {
    type Params = ModelParams;

    fn init_params(&self, rng: &mut ChaCha8Rng) -> ModelParams {
        ModelParams::init(&self.dims, rng)
    }

    fn predict(&self, params: &ModelParams, sample: &Sample) -> Result<Matrix> {
        self.forward(params, &sample.x, &sample.c)
    }

    fn loss_and_grad(
        &self,
        params: &ModelParams,
        sample: &Sample,
        kind: LossKind,
        _noise_seed: u64,
    ) -> Result<(f64, ModelParams)> {
        self.backward(params, sample, kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn dims(n: usize, t: usize, k: usize) -> ModelDims {
        ModelDims {
            n_nodes: n,
            seq_len: t,
            n_temporal: k,
            in_channels: 1,
            gcn_hidden: 3,
            gcn_out: 2,
            gru_hidden: 4,
            horizon: 2,
        }
    }

    fn random_matrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn zero_weights_give_uniform_softmax() {
        let a = Matrix::identity(3);
        let x = Matrix::from_rows(&[vec![1.0], vec![-2.0], vec![5.0]]);
        let z = gcn_forward(
            &x,
            &a,
            &Matrix::zeros(1, 4),
            &Matrix::zeros(4, 5),
            GcnActivation::Softmax,
        )
        .unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.2));
    }

    #[test]
    fn scalar_gcn_hand_value() {
        let z = gcn_forward(
            &Matrix::from_rows(&[vec![2.0]]),
            &Matrix::from_rows(&[vec![1.0]]),
            &Matrix::from_rows(&[vec![1.0]]),
            &Matrix::from_rows(&[vec![3.0]]),
            GcnActivation::Linear,
        )
        .unwrap();
        assert_eq!(z[(0, 0)], 6.0);
    }

    #[test]
    fn gcn_rejects_bad_input() {
        let a = Matrix::identity(2);
        let x = Matrix::from_rows(&[vec![f64::NAN], vec![0.0]]);
        assert!(matches!(
            gcn_forward(
                &x,
                &a,
                &Matrix::zeros(1, 2),
                &Matrix::zeros(2, 2),
                GcnActivation::Linear
            ),
            Err(Error::NonFinite(_))
        ));
        let x3 = Matrix::zeros(3, 1);
        assert!(gcn_forward(
            &x3,
            &a,
            &Matrix::zeros(1, 2),
            &Matrix::zeros(2, 2),
            GcnActivation::Linear
        )
        .is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_matrix(6, 5, &mut rng).map(|v| v * 30.0);
        let s = softmax_rows(&m);
        for i in 0..6 {
            assert!((s.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_params_gru_halves_state() {
        let d = dims(3, 1, 2);
        let p = ModelParams::zeros(&d);
        let h = Matrix::from_rows(&vec![vec![1.0, -2.0, 0.5, 4.0]; 3]);
        let zp = Matrix::filled(3, d.gru_input(), 0.7);
        let out = gru_cell(&zp, &h, &p).unwrap();
        assert_eq!(out, h.map(|v| 0.5 * v));
        let zero = gru_cell(&zp, &Matrix::zeros(3, 4), &p).unwrap();
        assert!(zero.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_params_forward_is_bias() {
        let d = dims(3, 4, 2);
        let mut p = ModelParams::zeros(&d);
        p.b_out = Matrix::row_vector(&[1.5, -0.25]);
        let net = SaMgcrn::new(d, Matrix::identity(3), GcnActivation::Softmax).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_matrix(3, 4, &mut rng);
        let c: Vec<_> = (0..4).map(|_| random_matrix(3, 2, &mut rng)).collect();
        let y = net.forward(&p, &x, &c).unwrap();
        for i in 0..3 {
            assert_eq!(y.row(i), &[1.5, -0.25]);
        }
    }

    #[test]
    fn closed_form_single_step() {
        // N=2, F=1, K=0, H_gru=1, M=1, T=1, linear GCN.
        let d = ModelDims {
            n_nodes: 2,
            seq_len: 1,
            n_temporal: 0,
            in_channels: 1,
            gcn_hidden: 1,
            gcn_out: 1,
            gru_hidden: 1,
            horizon: 1,
        };
        let a = Matrix::filled(2, 2, 0.5);
        let mut p = ModelParams::zeros(&d);
        p.w0 = Matrix::from_rows(&[vec![1.0]]);
        p.w1 = Matrix::from_rows(&[vec![2.0]]);
        p.w_zu = Matrix::from_rows(&[vec![0.3]]);
        p.w_zh = Matrix::from_rows(&[vec![0.4]]);
        p.b_h = Matrix::row_vector(&[0.1]);
        p.w_out = Matrix::from_rows(&[vec![3.0]]);
        p.b_out = Matrix::row_vector(&[-1.0]);
        let net = SaMgcrn::new(d, a, GcnActivation::Linear).unwrap();
        let x = Matrix::from_rows(&[vec![1.0], vec![3.0]]);
        let y = net.forward(&p, &x, &[Matrix::zeros(2, 0)]).unwrap();
        // Â X = [2, 2]; ReLU·W0 = 2; Â·2 = 2; ·W1 = 4 for both nodes.
        // H0 = 0, so R is irrelevant: U = σ(1.2), Ĥ = tanh(1.7), H = (1-U)Ĥ.
        let u = 1.0 / (1.0 + (-1.2f64).exp());
        let h = (1.0 - u) * 1.7f64.tanh();
        let expected = 3.0 * h - 1.0;
        assert!((y[(0, 0)] - expected).abs() < 1e-15);
        assert!((y[(1, 0)] - expected).abs() < 1e-15);
    }

    #[test]
    fn loss_examples() {
        let y = Matrix::from_rows(&[vec![0.0], vec![0.0]]);
        let p = Matrix::from_rows(&[vec![1.0], vec![-1.0]]);
        assert_eq!(loss(&y, &y, LossKind::Mse), 0.0);
        assert_eq!(loss(&p, &y, LossKind::Mse), 1.0);
        assert_eq!(loss(&p, &y, LossKind::Mae), 1.0);
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let d = dims(3, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = ModelParams::init(&d, &mut rng);
        let net = SaMgcrn::new(d, Matrix::identity(3), GcnActivation::Softmax).unwrap();
        let x = random_matrix(3, 3, &mut rng);
        let c: Vec<_> = (0..3).map(|_| random_matrix(3, 2, &mut rng)).collect();
        let y = net.forward(&p, &x, &c).unwrap();
        let sample = Sample { x, c, y, t_end: 2 };
        let (l, g) = net.backward(&p, &sample, LossKind::Mse).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.tensors().iter().all(|(_, t)| t.as_slice().iter().all(|&v| v == 0.0)));
    }
}
