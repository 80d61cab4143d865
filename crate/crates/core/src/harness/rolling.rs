//! Daily retrain-then-forecast loop under a data-delivery delay.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::data::{plan_split, ForecastData, GraphChoice, Scalers, SplitPlan, WindowSource};
use super::features::Feature;
use super::metrics::{evaluate, pool, DayMetrics, EvalReport, Metrics};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{
    train, Checkpoint, Forecaster, GcnActivation, Mlp, MlpDims, ModelDims, SaMgcrn, Sample, TrainConfig, TrainLog,
    TrainOutcome,
};
use crate::time::HOURS_PER_DAY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    SaMgcrn,
    Mlp,
    Ha,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::SaMgcrn => "sa-mgcrn",
            ModelKind::Mlp => "mlp",
            ModelKind::Ha => "ha",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub learning_rate: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub gcn_hidden: usize,
    pub gcn_out: usize,
    pub gru_hidden: usize,
    pub horizon: usize,
    pub mlp_hidden: usize,
    pub mlp_dropout: f64,
    pub train: TrainConfig,
    /// Learning-rate and batch-size pairs tried per update day, picked by
    /// validation MAE. Empty means the values in `train`.
    pub grid: Vec<GridPoint>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            gcn_hidden: 16,
            gcn_out: 8,
            gru_hidden: 32,
            horizon: 1,
            mlp_hidden: 64,
            mlp_dropout: 0.2,
            train: TrainConfig::default(),
            grid: Vec::new(),
        }
    }
}

impl ModelConfig {
    /// Small layers and a short patience, sized for single-core desk runs.
    pub fn desk() -> Self {
        Self {
            gcn_hidden: 4,
            gcn_out: 4,
            gru_hidden: 12,
            horizon: 1,
            mlp_hidden: 64,
            mlp_dropout: 0.2,
            train: TrainConfig {
                learning_rate: 0.01,
                batch_size: 32,
                seq_len: 8,
                max_epochs: 40,
                patience_epochs: 10,
                ..TrainConfig::default()
            },
            grid: Vec::new(),
        }
    }

    pub fn grid_points(&self) -> Vec<GridPoint> {
        if self.grid.is_empty() {
            vec![GridPoint {
                learning_rate: self.train.learning_rate,
                batch_size: self.train.batch_size,
            }]
        } else {
            self.grid.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.horizon == 0
            || self.gcn_hidden == 0
            || self.gcn_out == 0
            || self.gru_hidden == 0
            || self.mlp_hidden == 0
        {
            return Err(Error::invalid("model layer sizes and horizon must be positive"));
        }
        if !(0.0..1.0).contains(&self.mlp_dropout) {
            return Err(Error::invalid("model.mlp_dropout must lie in [0, 1)"));
        }
        for p in &self.grid {
            if !(p.learning_rate > 0.0) || p.batch_size == 0 {
                return Err(Error::invalid(
                    "model.grid entries need a positive learning rate and batch size",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RollingConfig {
    pub delay_hours: usize,
    /// Update days to forecast; the fire days when absent.
    pub test_days: Option<Vec<usize>>,
    pub model: ModelKind,
    pub features: Vec<Feature>,
    pub graph: GraphChoice,
    pub params: ModelConfig,
}

impl Default for RollingConfig {
    fn default() -> Self {
        Self {
            delay_hours: 0,
            test_days: None,
            model: ModelKind::SaMgcrn,
            features: Feature::ALL.to_vec(),
            graph: GraphChoice::Fused,
            params: ModelConfig::default(),
        }
    }
}

impl RollingConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let mut seen = self.features.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.features.len() {
            return Err(Error::invalid("rolling.features lists a feature twice"));
        }
        Ok(())
    }

    pub fn days(&self, data: &ForecastData) -> Vec<usize> {
        self.test_days.clone().unwrap_or_else(|| data.fire_days.clone())
    }
}

/// Short hex digest of a serializable configuration.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone)]
pub struct DayResult {
    pub day: usize,
    pub date: String,
    pub plan: Option<SplitPlan>,
    /// N×24 forecasts and observations in demand units.
    pub pred: Vec<Vec<f64>>,
    pub obs: Vec<Vec<f64>>,
    pub metrics: DayMetrics,
    pub train_log: Option<TrainLog>,
    pub chosen: Option<GridPoint>,
    pub checkpoint: Option<Checkpoint>,
}

#[derive(Debug, Clone)]
pub struct RollingResult {
    pub tract_ids: Vec<String>,
    pub days: Vec<DayResult>,
    pub report: EvalReport,
}

fn train_with_grid<F: Forecaster>(
    model: &F,
    train_set: &[Sample],
    val_set: &[Sample],
    config: &ModelConfig,
    node_scale: &[f64],
    exec: Exec,
) -> Result<(TrainOutcome<F::Params>, GridPoint)> {
    let mut best: Option<(TrainOutcome<F::Params>, GridPoint)> = None;
    for point in config.grid_points() {
        let tc = TrainConfig {
            learning_rate: point.learning_rate,
            batch_size: point.batch_size,
            ..config.train
        };
        let out = train(model, train_set, val_set, &tc, node_scale, exec)?;
        log::debug!(
            "grid point lr={} batch={}: validation MAE {:.4}",
            point.learning_rate,
            point.batch_size,
            out.log.best_val_mae
        );
        if best
            .as_ref()
            .is_none_or(|(b, _)| out.log.best_val_mae < b.log.best_val_mae)
        {
            best = Some((out, point));
        }
    }
    Ok(best.expect("at least one grid point"))
}

/// Forecasts every hour of the test day. Hour `h` may use observations
/// before `h − delay`; the hours in between are filled with the model's own
/// one-step forecasts, fed back in order.
#[allow(clippy::too_many_arguments)]
pub fn forecast_day<F: Forecaster>(
    model: &F,
    params: &F::Params,
    data: &ForecastData,
    scalers: &Scalers,
    features: &[Feature],
    test_day: usize,
    delay_hours: usize,
    seq_len: usize,
    horizon: usize,
) -> Result<Vec<Vec<f64>>> {
    let n = data.n_tracts();
    let start = test_day * HOURS_PER_DAY;
    if start < seq_len + delay_hours {
        return Err(Error::invalid(format!(
            "test day {test_day} leaves no room for an input window"
        )));
    }
    let mut pred = vec![vec![0.0; HOURS_PER_DAY]; n];
    for (i, h) in (start..start + HOURS_PER_DAY).enumerate() {
        let limit = h - delay_hours;
        let mut src = WindowSource::new(data, scalers, features, limit);
        for g in limit..=h {
            let sample = src.sample(g - 1, seq_len, horizon);
            let out = model.predict(params, &sample)?;
            let raw: Vec<f64> = (0..n)
                .map(|k| scalers.unscale_demand(k, out[(k, 0)]).max(0.0))
                .collect();
            if g == h {
                for (row, v) in pred.iter_mut().zip(raw) {
                    row[i] = v;
                }
            } else {
                src.push(&raw);
            }
        }
    }
    Ok(pred)
}

/// Historical average per tract and hour of day over hours before
/// `cutoff`, falling back to the tract's overall mean for empty slots.
pub fn baseline_ha(demand: &[Vec<f64>], cutoff: usize) -> Result<Vec<Vec<f64>>> {
    if cutoff == 0 {
        return Err(Error::invalid("historical average needs at least one observed hour"));
    }
    Ok(demand
        .iter()
        .map(|row| {
            let hist = &row[..cutoff.min(row.len())];
            let overall = hist.iter().sum::<f64>() / hist.len() as f64;
            (0..HOURS_PER_DAY)
                .map(|hod| {
                    let slot: Vec<f64> = hist.iter().skip(hod).step_by(HOURS_PER_DAY).copied().collect();
                    if slot.is_empty() {
                        overall
                    } else {
                        slot.iter().sum::<f64>() / slot.len() as f64
                    }
                })
                .collect()
        })
        .collect())
}

fn observed_day(data: &ForecastData, day: usize) -> Vec<Vec<f64>> {
    let start = day * HOURS_PER_DAY;
    data.demand
        .iter()
        .map(|r| r[start..start + HOURS_PER_DAY].to_vec())
        .collect()
}

struct Fitted {
    pred: Vec<Vec<f64>>,
    log: Option<TrainLog>,
    chosen: Option<GridPoint>,
    checkpoint: Option<Checkpoint>,
    plan: Option<SplitPlan>,
}

fn run_day(data: &ForecastData, cfg: &RollingConfig, day: usize, exec: Exec) -> Result<Fitted> {
    let mc = &cfg.params;
    let seq_len = mc.train.seq_len;
    let horizon = mc.horizon;
    let plan = plan_split(data.grid.n_hours, day, cfg.delay_hours, seq_len, horizon)?;
    if cfg.model == ModelKind::Ha {
        let pred = baseline_ha(&data.demand, plan.cutoff)?;
        return Ok(Fitted {
            pred,
            log: None,
            chosen: None,
            checkpoint: None,
            plan: Some(plan),
        });
    }
    // exogenous features are scheduled through the end of the test day
    let scalers = Scalers::fit(data, plan.cutoff, (day + 1) * HOURS_PER_DAY)?;
    let src = WindowSource::new(data, &scalers, &cfg.features, plan.cutoff);
    let train_set: Vec<Sample> = plan
        .train_ends
        .iter()
        .map(|&t| src.sample(t, seq_len, horizon))
        .collect();
    let val_set: Vec<Sample> = plan.val_ends.iter().map(|&t| src.sample(t, seq_len, horizon)).collect();
    let node_scale = scalers.demand_range.clone();
    let k = cfg.features.len();

    match cfg.model {
        ModelKind::SaMgcrn => {
            let dims = ModelDims {
                n_nodes: data.n_tracts(),
                seq_len,
                n_temporal: k,
                in_channels: 1,
                gcn_hidden: mc.gcn_hidden,
                gcn_out: mc.gcn_out,
                gru_hidden: mc.gru_hidden,
                horizon,
            };
            let activation: GcnActivation = mc.train.gcn_activation;
            let model = SaMgcrn::new(dims, data.graphs.normalized(cfg.graph).clone(), activation)?;
            let (out, chosen) = train_with_grid(&model, &train_set, &val_set, mc, &node_scale, exec)?;
            let pred = forecast_day(
                &model,
                &out.params,
                data,
                &scalers,
                &cfg.features,
                day,
                cfg.delay_hours,
                seq_len,
                horizon,
            )?;
            let checkpoint = Checkpoint::new(
                dims,
                activation,
                data.tract_ids.clone(),
                cfg.features.iter().map(|f| f.name().to_string()).collect(),
                scalers.stats(&cfg.features),
                &out.params,
            );
            Ok(Fitted {
                pred,
                log: Some(out.log),
                chosen: Some(chosen),
                checkpoint: Some(checkpoint),
                plan: Some(plan),
            })
        }
        ModelKind::Mlp => {
            let model = Mlp::new(
                MlpDims {
                    seq_len,
                    n_temporal: k,
                    hidden: mc.mlp_hidden,
                    horizon,
                },
                mc.mlp_dropout,
            )?;
            let (out, chosen) = train_with_grid(&model, &train_set, &val_set, mc, &node_scale, exec)?;
            let pred = forecast_day(
                &model,
                &out.params,
                data,
                &scalers,
                &cfg.features,
                day,
                cfg.delay_hours,
                seq_len,
                horizon,
            )?;
            Ok(Fitted {
                pred,
                log: Some(out.log),
                chosen: Some(chosen),
                checkpoint: None,
                plan: Some(plan),
            })
        }
        ModelKind::Ha => unreachable!("handled above"),
    }
}

/// Retrains from scratch at the end of each day preceding an update day
/// and forecasts that day. Days are independent and may run in parallel;
/// results are ordered by day.
pub fn rolling_run(data: &ForecastData, cfg: &RollingConfig, scenario: &str, exec: Exec) -> Result<RollingResult> {
    cfg.validate()?;
    let days = cfg.days(data);
    if days.is_empty() {
        return Err(Error::invalid("no update days to forecast"));
    }
    let mask: Option<&[bool]> = data.ordered.iter().any(|&o| o).then_some(&data.ordered);
    let fitted = exec.try_map(&days, |&day| {
        let f = run_day(data, cfg, day, exec)?;
        if let Some(log) = &f.log {
            log::info!(
                "{} day {day} (delay {}h): {} epochs, best validation MAE {:.3} at epoch {}",
                cfg.model.name(),
                cfg.delay_hours,
                log.epochs.len(),
                log.best_val_mae,
                log.best_epoch
            );
        }
        Ok::<_, Error>(f)
    })?;

    let mut results = Vec::with_capacity(days.len());
    for (&day, f) in days.iter().zip(fitted) {
        let obs = observed_day(data, day);
        let all = evaluate(&f.pred, &obs, None)?;
        let masked = mask.map(|m| evaluate(&f.pred, &obs, Some(m))).transpose()?;
        let date = data.grid.date_of_day(day).format("%Y-%m-%d").to_string();
        results.push(DayResult {
            day,
            date: date.clone(),
            plan: f.plan,
            pred: f.pred,
            obs,
            metrics: DayMetrics { day, date, all, masked },
            train_log: f.log,
            chosen: f.chosen,
            checkpoint: f.checkpoint,
        });
    }
    let day_all: Vec<Metrics> = results.iter().map(|d| d.metrics.all).collect();
    let day_masked: Vec<Metrics> = results.iter().filter_map(|d| d.metrics.masked).collect();
    let report = EvalReport {
        scenario: scenario.to_string(),
        model: cfg.model.name().to_string(),
        delay_hours: cfg.delay_hours,
        seed: cfg.params.train.seed,
        config_hash: config_hash(cfg)?,
        mask: data
            .tract_ids
            .iter()
            .zip(&data.ordered)
            .filter(|(_, &o)| o)
            .map(|(id, _)| id.clone())
            .collect(),
        days: results.iter().map(|d| d.metrics.clone()).collect(),
        aggregate: pool(&day_all).expect("at least one day"),
        aggregate_masked: pool(&day_masked),
    };
    Ok(RollingResult {
        tract_ids: data.tract_ids.clone(),
        days: results,
        report,
    })
}

pub fn forecast_file_name(scenario: &str, delay_hours: usize, date: &str) -> String {
    format!("forecast_{scenario}_{delay_hours}h_{date}.csv")
}

pub fn write_forecast_csv<W: Write>(writer: W, data: &ForecastData, day: &DayResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["tract_id", "hour_iso8601", "y_pred", "y_obs"])?;
    let start = day.day * HOURS_PER_DAY;
    for (k, id) in data.tract_ids.iter().enumerate() {
        for i in 0..HOURS_PER_DAY {
            w.write_record([
                id.clone(),
                data.grid.iso(start + i),
                day.pred[k][i].to_string(),
                day.obs[k][i].to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<forecast>", e))?;
    Ok(())
}

/// Forecast CSVs, per-day checkpoints and the report, written into `dir`.
/// Returns the paths written.
pub fn write_rolling_outputs(
    dir: &Path,
    scenario: &str,
    data: &ForecastData,
    result: &RollingResult,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let delay = result.report.delay_hours;
    let mut written = Vec::new();
    for day in &result.days {
        let path = dir.join(forecast_file_name(scenario, delay, &day.date));
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_forecast_csv(std::io::BufWriter::new(file), data, day)?;
        written.push(path);
        if let Some(ck) = &day.checkpoint {
            let path = dir.join(format!("checkpoint_{scenario}_{delay}h_{}.json", day.date));
            ck.save(&path)?;
            written.push(path);
        }
    }
    let path = dir.join(format!("report_{scenario}_{}_{delay}h.json", result.report.model));
    super::bundle::write_json(&path, &result.report)?;
    written.push(path);
    Ok(written)
}
