use evac_core::harness::{
    compute_features, evaluate, forecast_day, plan_split, rolling_run, ExogenousPanel, Feature, ForecastData,
    ModelConfig, ModelKind, RollingConfig, Scalers, WindowSource, N_EXOGENOUS,
};
use evac_core::linalg::Matrix;
use evac_core::model::{Forecaster, GcnActivation, ModelDims, SaMgcrn, TrainConfig};
use evac_core::synthetic::{generate_scenario, ScenarioConfig};
use evac_core::time::{parse_date, HourGrid};
use evac_core::Exec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_data(seed: u64) -> ForecastData {
    let cfg = ScenarioConfig {
        n_devices: 80,
        days_before_fire: 4,
        fire_duration_days: 3,
        seed,
        ..ScenarioConfig::default()
    };
    generate_scenario(&cfg, Exec::Parallel)
        .unwrap()
        .forecast_data(Exec::Parallel)
        .unwrap()
}

fn quick(model: ModelKind, delay: usize, day: usize) -> RollingConfig {
    let mut params = ModelConfig::desk();
    params.train = TrainConfig {
        max_epochs: 3,
        patience_epochs: 3,
        ..params.train
    };
    RollingConfig {
        delay_hours: delay,
        test_days: Some(vec![day]),
        model,
        params,
        ..RollingConfig::default()
    }
}

fn poison(data: &ForecastData, from_hour: usize, exogenous_from: usize) -> ForecastData {
    let mut p = data.clone();
    for k in 0..p.n_tracts() {
        for h in from_hour..p.grid.n_hours {
            p.demand[k][h] = 1e6 + h as f64;
            p.active[k][h] = 7777.0;
        }
    }
    for m in &mut p.exogenous.values[exogenous_from..] {
        m.as_mut_slice().fill(-5e5);
    }
    p
}

#[test]
fn training_ignores_data_after_the_cutoff() {
    let data = small_data(3);
    let day = 5;
    for delay in [0, 24, 48] {
        let poisoned = poison(&data, day * 24 - delay, (day + 1) * 24);
        for model in [ModelKind::SaMgcrn, ModelKind::Mlp, ModelKind::Ha] {
            let cfg = quick(model, delay, day);
            let a = rolling_run(&data, &cfg, "leak", Exec::Parallel).unwrap();
            let b = rolling_run(&poisoned, &cfg, "leak", Exec::Parallel).unwrap();
            let (da, db) = (&a.days[0], &b.days[0]);
            assert_eq!(da.train_log, db.train_log, "{model:?} delay {delay}");
            assert_eq!(da.plan, db.plan);
            let json = |d: &evac_core::harness::DayResult| d.checkpoint.as_ref().map(|c| c.to_json().unwrap());
            assert_eq!(json(da), json(db));
            if model == ModelKind::Ha {
                assert_eq!(da.pred, db.pred);
            }
        }
    }
}

#[test]
fn forecast_for_an_hour_ignores_data_not_yet_delivered() {
    let data = small_data(3);
    let day = 5;
    let start = day * 24;
    let features = Feature::ALL.to_vec();
    for delay in [0, 24, 48] {
        let cfg = quick(ModelKind::SaMgcrn, delay, day);
        let run = rolling_run(&data, &cfg, "leak", Exec::Parallel).unwrap();
        let ckpt = run.days[0].checkpoint.as_ref().unwrap();
        let params = ckpt.model_params().unwrap();
        let model = SaMgcrn::new(ckpt.dims, data.graphs.fused.normalized().clone(), ckpt.activation).unwrap();
        let seq_len = ckpt.dims.seq_len;
        let scalers = Scalers::fit(&data, start - delay, start + 24).unwrap();
        let base = forecast_day(&model, &params, &data, &scalers, &features, day, delay, seq_len, 1).unwrap();
        for k in 0..data.n_tracts() {
            assert_eq!(base[k], run.days[0].pred[k]);
        }
        for i in [0, 9, 23] {
            let poisoned = poison(&data, start + i - delay, start + 24);
            let got = forecast_day(&model, &params, &poisoned, &scalers, &features, day, delay, seq_len, 1).unwrap();
            for k in 0..data.n_tracts() {
                assert_eq!(got[k][..=i], base[k][..=i], "delay {delay} hour {i}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn train_sets_nest_across_delays(days in 4usize..30, day_frac in 0.0f64..1.0, seq_len in 1usize..30, horizon in 1usize..4) {
        let n_hours = days * 24;
        let test_day = 3 + ((days - 4) as f64 * day_frac) as usize;
        let plans: Vec<_> = [0, 24, 48].iter().map(|&d| plan_split(n_hours, test_day, d, seq_len, horizon)).collect();
        for w in plans.windows(2) {
            if let (Ok(early), Ok(late)) = (&w[0], &w[1]) {
                prop_assert!(late.train_ends.iter().all(|t| early.train_ends.contains(t)));
                prop_assert!(late.cutoff + 24 == early.cutoff);
            }
            // a longer delay can only lose data
            if w[0].is_err() {
                prop_assert!(w[1].is_err());
            }
        }
        for p in plans.iter().flatten() {
            for &t in p.train_ends.iter().chain(&p.val_ends) {
                prop_assert!(t + horizon < p.cutoff);
                prop_assert!(t + 1 >= seq_len);
            }
            prop_assert!(p.train_ends.iter().all(|&t| t + horizon < p.val_day * 24));
        }
    }

    #[test]
    fn history_features_ignore_current_and_later_hours(seed in any::<u64>(), t in 0usize..72) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = HourGrid::from_days(parse_date("2019-10-16").unwrap(), 3);
        let n = 3;
        let exo = ExogenousPanel {
            tract_ids: (0..n).map(|i| i.to_string()).collect(),
            grid,
            values: vec![Matrix::zeros(n, N_EXOGENOUS); grid.n_hours],
        };
        let demand: Vec<Vec<f64>> = (0..n).map(|_| (0..72).map(|_| rng.gen_range(0.0..100.0)).collect()).collect();
        let active = vec![vec![5.0; 72]; n];
        let mut changed = demand.clone();
        for row in &mut changed {
            for v in &mut row[t..] {
                *v += rng.gen_range(1.0..50.0);
            }
        }
        let a = compute_features(&demand, &active, &[120.0; 3], &exo).unwrap();
        let b = compute_features(&changed, &active, &[120.0; 3], &exo).unwrap();
        for h in 0..=t {
            for f in [Feature::HistEmbed1, Feature::HistEmbed2] {
                for k in 0..n {
                    prop_assert_eq!(a.values[h][(k, f.index())], b.values[h][(k, f.index())]);
                }
            }
        }
        // oracle for the two embeddings at hour t
        for k in 0..n {
            let all = if t == 0 { 0.0 } else { demand[k][..t].iter().sum::<f64>() / t as f64 };
            let lo = t.saturating_sub(4);
            let recent = if t == 0 { 0.0 } else { demand[k][lo..t].iter().sum::<f64>() / (t - lo) as f64 };
            prop_assert!((a.values[t][(k, Feature::HistEmbed1.index())] - all).abs() < 1e-9);
            prop_assert!((a.values[t][(k, Feature::HistEmbed2.index())] - recent).abs() < 1e-9);
        }
    }
}

#[test]
fn zero_delay_forecast_is_direct_one_step() {
    let data = small_data(4);
    let day = 5;
    let features = Feature::ALL.to_vec();
    let seq_len = 6;
    let dims = ModelDims {
        n_nodes: data.n_tracts(),
        seq_len,
        n_temporal: features.len(),
        in_channels: 1,
        gcn_hidden: 3,
        gcn_out: 3,
        gru_hidden: 5,
        horizon: 1,
    };
    let model = SaMgcrn::new(dims, data.graphs.fused.normalized().clone(), GcnActivation::Softmax).unwrap();
    let params = model.init_params(&mut ChaCha8Rng::seed_from_u64(1));
    let scalers = Scalers::fit(&data, day * 24, (day + 1) * 24).unwrap();
    let pred = forecast_day(&model, &params, &data, &scalers, &features, day, 0, seq_len, 1).unwrap();
    for i in 0..24 {
        let h = day * 24 + i;
        let sample = WindowSource::new(&data, &scalers, &features, h).sample(h - 1, seq_len, 1);
        // the input window holds observed demand only
        for k in 0..data.n_tracts() {
            for s in 0..seq_len {
                let t = h - seq_len + s;
                let want = (data.demand[k][t] - scalers.demand_min[k]) / scalers.demand_range[k];
                assert_eq!(sample.x[(k, s)], want);
            }
        }
        let out = model.forward(&params, &sample.x, &sample.c).unwrap();
        for k in 0..data.n_tracts() {
            let v = (out[(k, 0)] * scalers.demand_range[k] + scalers.demand_min[k]).max(0.0);
            assert_eq!(pred[k][i], v);
        }
    }
}

#[test]
fn reports_satisfy_metric_identities() {
    let a = evaluate(&[vec![100.0, 200.0]], &[vec![90.0, 210.0]], None).unwrap();
    assert_eq!((a.mae, a.rmse), (10.0, 10.0));
    let b = evaluate(&[vec![0.0, 2.0]], &[vec![1.0, 1.0]], None).unwrap();
    assert_eq!((b.mae, b.rmse), (1.0, 1.0));
    let data = small_data(5);
    for model in [ModelKind::Ha, ModelKind::Mlp] {
        let mut cfg = quick(model, 24, 5);
        cfg.test_days = None;
        let r = rolling_run(&data, &cfg, "metrics", Exec::Parallel).unwrap();
        assert!(r.report.is_consistent());
        assert!(r.report.aggregate.rmse >= r.report.aggregate.mae);
        for d in &r.report.days {
            assert!(d.all.rmse >= d.all.mae);
        }
    }
}

#[test]
fn rolling_runs_are_reproducible_across_execution_modes() {
    let data = small_data(6);
    let cfg = quick(ModelKind::SaMgcrn, 0, 6);
    let a = rolling_run(&data, &cfg, "det", Exec::Parallel).unwrap();
    let b = rolling_run(&data, &cfg, "det", Exec::Sequential).unwrap();
    assert_eq!(a.days[0].pred, b.days[0].pred);
    assert_eq!(
        serde_json::to_string(&a.report).unwrap(),
        serde_json::to_string(&b.report).unwrap()
    );
}

#[test]
fn ablation_with_no_removals_reports_the_full_model() {
    let data = small_data(7);
    let cfg = quick(ModelKind::SaMgcrn, 0, 6);
    let table = evac_core::harness::ablate(&data, &cfg, &[], "ablate", Exec::Parallel).unwrap();
    let full = rolling_run(&data, &cfg, "ablate", Exec::Parallel)
        .unwrap()
        .report
        .aggregate;
    assert!(table.rows.is_empty());
    assert_eq!(table.full, full);
}
