//! Independent oracles shared by the integration tests and the acceptance
//! binary. Nothing here calls the library routine it is used to check.

#![allow(dead_code)]

use evac_core::geo::{haversine_m, LatLon};
use evac_core::graph::NodeFeatureTable;
use evac_core::linalg::Matrix;
use evac_core::model::{GcnActivation, LossKind, ModelDims, ModelParams, Parameters, SaMgcrn, Sample};
use evac_core::trip::GpsPing;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// (centroid, first minute, last minute, member count)
pub type OracleActivity = (LatLon, i64, i64, usize);

/// Stay-point detection written out with explicit member lists and a
/// centroid recomputed from scratch after every join.
pub fn cluster_oracle(pings: &[GpsPing], radius_m: f64, min_stay_min: i64) -> Vec<OracleActivity> {
    let mut out = Vec::new();
    let mut members: Vec<&GpsPing> = Vec::new();
    let centroid = |m: &[&GpsPing]| {
        let n = m.len() as f64;
        let lat: f64 = m.iter().map(|p| p.lat).sum();
        let lon: f64 = m.iter().map(|p| p.lon).sum();
        LatLon::new(lat / n, lon / n)
    };
    let flush = |m: &[&GpsPing], out: &mut Vec<OracleActivity>| {
        if let (Some(first), Some(last)) = (m.first(), m.last()) {
            if last.t - first.t >= min_stay_min {
                out.push((centroid(m), first.t, last.t, m.len()));
            }
        }
    };
    for p in pings {
        if members.is_empty() {
            members.push(p);
            continue;
        }
        let c = centroid(&members);
        if haversine_m(LatLon::new(p.lat, p.lon), c) < radius_m {
            members.push(p);
        } else {
            flush(&members, &mut out);
            members = vec![p];
        }
    }
    flush(&members, &mut out);
    out
}

/// A time-sorted single-device trace mixing dwell periods, jumps and
/// near-threshold moves.
pub fn random_trace(rng: &mut ChaCha8Rng, len: usize) -> Vec<GpsPing> {
    let mut t = rng.gen_range(0..1000i64);
    let mut lat = 38.4 + rng.gen_range(-0.05..0.05);
    let mut lon = -122.7 + rng.gen_range(-0.05..0.05);
    let deg = 1.0 / 111_195.0;
    (0..len)
        .map(|_| {
            t += rng.gen_range(0..12);
            match rng.gen_range(0..10) {
                0 => {
                    lat += rng.gen_range(-3000.0..3000.0) * deg;
                    lon += rng.gen_range(-3000.0..3000.0) * deg;
                }
                1..=2 => {
                    lat += rng.gen_range(-600.0..600.0) * deg;
                    lon += rng.gen_range(-600.0..600.0) * deg;
                }
                _ => {
                    lat += rng.gen_range(-40.0..40.0) * deg;
                    lon += rng.gen_range(-40.0..40.0) * deg;
                }
            }
            GpsPing::new("dev", t, lat, lon, 10.0)
        })
        .collect()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect(),
    )
}

/// Normalized adjacency of a random symmetric graph, via dense products.
pub fn random_a_hat(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let mut adj = vec![vec![0u8; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.4) {
                adj[i][j] = 1;
                adj[j][i] = 1;
            }
        }
    }
    dense_normalized(&adj)
}

/// `D^{-1/2} (A + I) D^{-1/2}` as two explicit dense matrix products.
pub fn dense_normalized(adj: &[Vec<u8>]) -> Matrix {
    let n = adj.len();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = if i == j { 1.0 } else { f64::from(adj[i][j]) };
        }
    }
    let d: Vec<f64> = a.iter().map(|r| r.iter().sum::<f64>().powf(-0.5)).collect();
    let mut dm = vec![vec![0.0; n]; n];
    for i in 0..n {
        dm[i][i] = d[i];
    }
    let mul = |x: &[Vec<f64>], y: &[Vec<f64>]| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..n).map(|j| (0..n).map(|k| x[i][k] * y[k][j]).sum()).collect())
            .collect()
    };
    Matrix::from_rows(&mul(&mul(&dm, &a), &dm))
}

pub fn pearson_oracle(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}

/// Column z-scores with the population standard deviation.
pub fn zscore_columns(values: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = values.len() as f64;
    let mut out = values.to_vec();
    for j in 0..values[0].len() {
        let mean = values.iter().map(|r| r[j]).sum::<f64>() / n;
        let sd = (values.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
        for r in out.iter_mut() {
            r[j] = if sd > 0.0 { (r[j] - mean) / sd } else { 0.0 };
        }
    }
    out
}

/// Brute-force similarity: Pearson of z-scored rows, 0 where undefined,
/// 1 on the diagonal.
pub fn similarity_oracle(values: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let z = zscore_columns(values);
    let n = z.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        1.0
                    } else {
                        pearson_oracle(&z[i], &z[j]).unwrap_or(0.0)
                    }
                })
                .collect()
        })
        .collect()
}

pub fn gradient_dims() -> ModelDims {
    ModelDims {
        n_nodes: 5,
        seq_len: 6,
        n_temporal: 3,
        in_channels: 1,
        gcn_hidden: 6,
        gcn_out: 4,
        gru_hidden: 8,
        horizon: 2,
    }
}

pub fn random_sample(rng: &mut ChaCha8Rng, d: &ModelDims) -> Sample {
    Sample {
        x: random_matrix(rng, d.n_nodes, d.seq_len, 1.0),
        c: (0..d.seq_len)
            .map(|_| random_matrix(rng, d.n_nodes, d.n_temporal, 1.0))
            .collect(),
        y: random_matrix(rng, d.n_nodes, d.horizon, 1.0),
        t_end: d.seq_len - 1,
    }
}

/// Largest relative gap between the analytic gradient and central finite
/// differences over every parameter scalar. Gaps are relative to
/// `max(|analytic|, |numeric|, 1e-6)`.
pub fn gradient_check(seed: u64, activation: GcnActivation, kind: LossKind, step: f64) -> f64 {
    let d = gradient_dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a_hat = random_a_hat(&mut rng, d.n_nodes);
    let model = SaMgcrn::new(d, a_hat, activation).unwrap();
    let mut params = ModelParams::init(&d, &mut rng);
    // non-zero biases so every term of the gradient is exercised
    for b in [&mut params.b_r, &mut params.b_u, &mut params.b_h, &mut params.b_out] {
        for v in b.as_mut_slice() {
            *v = rng.gen_range(-0.5..0.5);
        }
    }
    let sample = random_sample(&mut rng, &d);
    let (_, grad) = model.backward(&params, &sample, kind).unwrap();
    let loss_at = |p: &ModelParams| {
        let pred = model.forward(p, &sample.x, &sample.c).unwrap();
        evac_core::model::loss(&pred, &sample.y, kind)
    };
    let analytic: Vec<f64> = grad.tensors().iter().flat_map(|(_, t)| t.as_slice().to_vec()).collect();
    let mut worst: f64 = 0.0;
    let mut idx = 0;
    let n_tensors = params.tensors().len();
    for ti in 0..n_tensors {
        let len = params.tensors()[ti].1.as_slice().len();
        for e in 0..len {
            let mut plus = params.clone();
            plus.tensors_mut()[ti].1.as_mut_slice()[e] += step;
            let mut minus = params.clone();
            minus.tensors_mut()[ti].1.as_mut_slice()[e] -= step;
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * step);
            let a = analytic[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            idx += 1;
        }
    }
    worst
}

/// Rows are noisy copies of a few prototypes so some pairs clear 0.9.
pub fn prototype_table(rng: &mut ChaCha8Rng, n: usize, m: usize) -> NodeFeatureTable {
    let protos: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let noise = rng.gen_range(0.0..0.6);
    let values = (0..n)
        .map(|_| {
            let p = &protos[rng.gen_range(0..3)];
            p.iter().map(|v| v + noise * rng.gen_range(-1.0..1.0)).collect()
        })
        .collect();
    NodeFeatureTable::new(
        (0..n).map(|i| format!("t{i:03}")).collect(),
        (0..m).map(|j| format!("f{j}")).collect(),
        values,
    )
    .unwrap()
}
