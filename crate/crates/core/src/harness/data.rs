//! The assembled forecasting dataset, scaling, windowing and day splits.

use serde::{Deserialize, Serialize};

use super::bundle::ScenarioBundle;
use super::features::{
    daily_population_ratio, exogenous_features, population_change_at, DemandHistory, ExogenousPanel, Feature,
    N_EXOGENOUS,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::graph::{build_similarity_graph, fuse_similarities, similarity_matrix, GraphKind, SimilarityGraph};
use crate::linalg::Matrix;
use crate::model::{Sample, ScalerStats};
use crate::time::{HourGrid, HOURS_PER_DAY};
use crate::trip::DemandPanel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    pub env_threshold: f64,
    pub demo_threshold: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            env_threshold: crate::graph::DEFAULT_THRESHOLD,
            demo_threshold: crate::graph::DEFAULT_THRESHOLD,
        }
    }
}

/// Which spatial graph the GCN runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphChoice {
    #[default]
    Fused,
    Environmental,
    Demographic,
}

#[derive(Debug, Clone)]
pub struct Graphs {
    pub environmental: SimilarityGraph,
    pub demographic: SimilarityGraph,
    pub fused: SimilarityGraph,
}

impl Graphs {
    pub fn normalized(&self, choice: GraphChoice) -> &Matrix {
        match choice {
            GraphChoice::Fused => self.fused.normalized(),
            GraphChoice::Environmental => self.environmental.normalized(),
            GraphChoice::Demographic => self.demographic.normalized(),
        }
    }
}

/// Everything a rolling run needs, aligned on the panel's tract order.
#[derive(Debug, Clone)]
pub struct ForecastData {
    pub tract_ids: Vec<String>,
    pub grid: HourGrid,
    /// Population-scaled demand, N×H.
    pub demand: Vec<Vec<f64>>,
    /// Active users, N×H.
    pub active: Vec<Vec<f64>>,
    pub u_baseline: Vec<f64>,
    pub exogenous: ExogenousPanel,
    pub graphs: Graphs,
    /// Tracts that receive an order or warning at some point.
    pub ordered: Vec<bool>,
    pub fire_days: Vec<usize>,
}

impl ForecastData {
    pub fn assemble(
        panel: &DemandPanel,
        bundle: &ScenarioBundle,
        graph: GraphConfig,
        fire_distance_cap: f64,
        exec: Exec,
    ) -> Result<Self> {
        let ids = panel.tract_ids.clone();
        let env = bundle.environmental.select(&ids)?;
        let demo = bundle.demographic.select(&ids)?;
        let sf = similarity_matrix(&env, exec)?;
        let sd = similarity_matrix(&demo, exec)?;
        let graphs = Graphs {
            environmental: build_similarity_graph(&env, graph.env_threshold, GraphKind::Environmental, exec)?,
            demographic: build_similarity_graph(&demo, graph.demo_threshold, GraphKind::Demographic, exec)?,
            fused: fuse_similarities(&sf, &sd, graph.env_threshold, graph.demo_threshold, ids.clone()),
        };
        let grid = panel.grid;
        let exogenous = exogenous_features(
            &ids,
            &bundle.tracts,
            &grid,
            &bundle.weather,
            &bundle.events,
            bundle.fire_distance.as_ref(),
            fire_distance_cap,
        )?;
        let ordered = ids
            .iter()
            .map(|id| bundle.events.orders.iter().any(|o| &o.tract_id == id))
            .collect();
        let data = Self {
            tract_ids: ids,
            grid,
            demand: panel.m_all.clone(),
            active: panel
                .u_gps
                .iter()
                .map(|r| r.iter().map(|&u| f64::from(u)).collect())
                .collect(),
            u_baseline: panel.u_baseline.clone(),
            exogenous,
            graphs,
            ordered,
            fire_days: bundle.calendar.fire_days()?,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.tract_ids.len();
        let h = self.grid.n_hours;
        let shapes_ok = self.demand.len() == n
            && self.active.len() == n
            && self.u_baseline.len() == n
            && self.ordered.len() == n
            && self.demand.iter().chain(&self.active).all(|r| r.len() == h)
            && self.exogenous.values.len() == h
            && self.graphs.fused.n_nodes() == n;
        if !shapes_ok {
            return Err(Error::invalid("forecast data arrays disagree on tract or hour counts"));
        }
        if self.demand.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite("demand panel".into()));
        }
        Ok(())
    }

    pub fn n_tracts(&self) -> usize {
        self.tract_ids.len()
    }

    pub fn n_days(&self) -> usize {
        self.grid.n_days()
    }
}

/// Per-tract min-max demand scaling and per-column feature scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Scalers {
    pub demand_min: Vec<f64>,
    pub demand_range: Vec<f64>,
    pub feature_min: [f64; N_EXOGENOUS],
    pub feature_range: [f64; N_EXOGENOUS],
}

fn range_or_one(lo: f64, hi: f64) -> f64 {
    if hi - lo > 1e-12 {
        hi - lo
    } else {
        1.0
    }
}

impl Scalers {
    /// Demand statistics over hours before `demand_limit`; exogenous
    /// statistics over hours before `feature_limit`.
    pub fn fit(data: &ForecastData, demand_limit: usize, feature_limit: usize) -> Result<Self> {
        if demand_limit == 0 || feature_limit == 0 {
            return Err(Error::invalid("scalers need at least one hour of data"));
        }
        let mut demand_min = Vec::with_capacity(data.n_tracts());
        let mut demand_range = Vec::with_capacity(data.n_tracts());
        for row in &data.demand {
            let lo = row[..demand_limit].iter().copied().fold(f64::INFINITY, f64::min);
            let hi = row[..demand_limit].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            demand_min.push(lo);
            demand_range.push(range_or_one(lo, hi));
        }
        let mut lo = [f64::INFINITY; N_EXOGENOUS];
        let mut hi = [f64::NEG_INFINITY; N_EXOGENOUS];
        for m in &data.exogenous.values[..feature_limit.min(data.grid.n_hours)] {
            for k in 0..m.rows() {
                for (j, &v) in m.row(k).iter().enumerate() {
                    lo[j] = lo[j].min(v);
                    hi[j] = hi[j].max(v);
                }
            }
        }
        let mut feature_range = [1.0; N_EXOGENOUS];
        for j in 0..N_EXOGENOUS {
            feature_range[j] = range_or_one(lo[j], hi[j]);
        }
        Ok(Self {
            demand_min,
            demand_range,
            feature_min: lo,
            feature_range,
        })
    }

    pub fn scale_demand(&self, k: usize, v: f64) -> f64 {
        (v - self.demand_min[k]) / self.demand_range[k]
    }

    pub fn unscale_demand(&self, k: usize, v: f64) -> f64 {
        v * self.demand_range[k] + self.demand_min[k]
    }

    /// Checkpoint form. History embeddings share the demand scaler and
    /// population change is unscaled, so their columns record 0 and 1.
    pub fn stats(&self, features: &[Feature]) -> ScalerStats {
        let (feature_min, feature_max) = features
            .iter()
            .map(|f| {
                if f.is_exogenous() {
                    let j = f.index();
                    (self.feature_min[j], self.feature_min[j] + self.feature_range[j])
                } else {
                    (0.0, 1.0)
                }
            })
            .unzip();
        ScalerStats {
            demand_min: self.demand_min.clone(),
            demand_max: self
                .demand_min
                .iter()
                .zip(&self.demand_range)
                .map(|(a, r)| a + r)
                .collect(),
            feature_min,
            feature_max,
        }
    }
}

/// A view of demand in which hours before `observed_until` are observed and
/// later hours (if any) are stand-ins appended by recursion. Feature values
/// derived from it only ever read hours before the one they describe.
pub struct WindowSource<'a> {
    pub data: &'a ForecastData,
    pub scalers: &'a Scalers,
    pub features: &'a [Feature],
    pub history: DemandHistory,
    /// Daily active-user ratios (N × days).
    pub ratios: Vec<Vec<f64>>,
    /// Hours before this are observed; governs population change.
    pub limit: usize,
}

impl<'a> WindowSource<'a> {
    pub fn new(data: &'a ForecastData, scalers: &'a Scalers, features: &'a [Feature], limit: usize) -> Self {
        let limit = limit.min(data.grid.n_hours);
        Self {
            data,
            scalers,
            features,
            history: DemandHistory::from_observed(&data.demand, limit),
            ratios: daily_population_ratio(&data.active, &data.u_baseline, data.n_days()),
            limit,
        }
    }

    /// Appends one hour of raw demand after the observed prefix.
    pub fn push(&mut self, hour_values: &[f64]) {
        self.history.push(hour_values);
    }

    pub fn known_hours(&self) -> usize {
        self.history.len()
    }

    /// Scaled feature row of tract `k` at hour `t` (t ≤ known hours).
    fn feature_row(&self, k: usize, t: usize, out: &mut [f64]) {
        let exo = self.data.exogenous.values[t].row(k);
        for (slot, f) in out.iter_mut().zip(self.features) {
            *slot = match f {
                Feature::HistEmbed1 => self.scalers.scale_demand(k, self.history.embed_all(k, t)),
                Feature::HistEmbed2 => self.scalers.scale_demand(k, self.history.embed_recent(k, t)),
                Feature::PopulationChange => population_change_at(&self.ratios[k], t / HOURS_PER_DAY, self.limit),
                f => {
                    let j = f.index();
                    (exo[j] - self.scalers.feature_min[j]) / self.scalers.feature_range[j]
                }
            };
        }
    }

    /// Window ending at `t_end` with `seq_len` inputs. Targets are the
    /// observed demand at the `horizon` following hours, zeros past the end
    /// of the grid.
    pub fn sample(&self, t_end: usize, seq_len: usize, horizon: usize) -> Sample {
        let n = self.data.n_tracts();
        let k_feat = self.features.len();
        let t0 = t_end + 1 - seq_len;
        let mut x = Matrix::zeros(n, seq_len);
        let mut c = Vec::with_capacity(seq_len);
        for s in 0..seq_len {
            let t = t0 + s;
            let mut ct = Matrix::zeros(n, k_feat);
            for k in 0..n {
                x[(k, s)] = self.scalers.scale_demand(k, self.history.value(k, t));
                self.feature_row(k, t, ct.row_mut(k));
            }
            c.push(ct);
        }
        let mut y = Matrix::zeros(n, horizon);
        for m in 0..horizon {
            let t = t_end + 1 + m;
            if t < self.data.grid.n_hours {
                for k in 0..n {
                    y[(k, m)] = self.scalers.scale_demand(k, self.data.demand[k][t]);
                }
            }
        }
        Sample { x, c, y, t_end }
    }
}

/// Sliding windows over a fully observed series: inputs `[t−T+1, t]`,
/// targets `[t+1, t+M]`, stride 1. Windows touching a non-finite value are
/// dropped. `features[t]` is the N×K feature matrix at hour `t`.
pub fn make_windows(demand: &[Vec<f64>], features: &[Matrix], seq_len: usize, horizon: usize) -> Vec<Sample> {
    let n_hours = demand.first().map_or(0, Vec::len);
    let n = demand.len();
    if seq_len == 0 || horizon == 0 || n_hours < seq_len + horizon {
        return Vec::new();
    }
    let finite_hour: Vec<bool> = (0..n_hours)
        .map(|t| demand.iter().all(|r| r[t].is_finite()) && features.get(t).is_some_and(Matrix::is_finite))
        .collect();
    (seq_len - 1..n_hours - horizon)
        .filter(|&t| (t + 1 - seq_len..=t + horizon).all(|h| finite_hour[h]))
        .map(|t| {
            let t0 = t + 1 - seq_len;
            let x = Matrix::from_vec(
                n,
                seq_len,
                demand.iter().flat_map(|r| r[t0..=t].iter().copied()).collect(),
            );
            let y = Matrix::from_vec(
                n,
                horizon,
                demand
                    .iter()
                    .flat_map(|r| r[t + 1..=t + horizon].iter().copied())
                    .collect(),
            );
            let c = (t0..=t).map(|h| features[h].clone()).collect();
            Sample { x, c, y, t_end: t }
        })
        .collect()
}

/// Which window end hours go to training, validation and test for one
/// rolling update.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub test_day: usize,
    pub delay_hours: usize,
    /// Hours before this are available when the model is retrained.
    pub cutoff: usize,
    pub val_day: usize,
    pub train_ends: Vec<usize>,
    pub val_ends: Vec<usize>,
    pub test_ends: Vec<usize>,
}

/// Retraining happens at the end of `test_day − 1`. An hour `s` is
/// available then iff it ended at least `delay` hours earlier, i.e.
/// `s < cutoff = 24·test_day − delay`. Validation targets fill the last
/// fully available day; training targets precede it. Every input and target
/// hour of a train or validation window lies before the cutoff.
pub fn plan_split(
    n_hours: usize,
    test_day: usize,
    delay_hours: usize,
    seq_len: usize,
    horizon: usize,
) -> Result<SplitPlan> {
    let start = test_day * HOURS_PER_DAY;
    if start + HOURS_PER_DAY > n_hours {
        return Err(Error::invalid(format!("test day {test_day} lies outside the panel")));
    }
    let empty = |which| Error::EmptySplit {
        which,
        test_day,
        delay: delay_hours,
    };
    let cutoff = start.checked_sub(delay_hours).ok_or_else(|| empty("train"))?;
    let complete_days = cutoff / HOURS_PER_DAY;
    if complete_days == 0 || seq_len == 0 || horizon == 0 {
        return Err(empty("validation"));
    }
    let val_day = complete_days - 1;
    let val_start = val_day * HOURS_PER_DAY;
    let first_end = seq_len - 1;
    let ends_with_targets_in = |lo: usize, hi: usize| -> Vec<usize> {
        // targets t+1..=t+horizon must lie in [lo, hi)
        let a = lo.saturating_sub(1).max(first_end);
        if hi < horizon + 1 {
            return Vec::new();
        }
        let b = hi - horizon; // exclusive upper end for t
        (a..b).filter(|&t| t + 1 >= lo).collect()
    };
    let val_ends = ends_with_targets_in(val_start, val_start + HOURS_PER_DAY);
    let train_ends = ends_with_targets_in(0, val_start);
    let test_ends: Vec<usize> = (start..start + HOURS_PER_DAY)
        .filter(|&h| h >= seq_len)
        .map(|h| h - 1)
        .collect();
    if val_ends.is_empty() {
        return Err(empty("validation"));
    }
    if train_ends.is_empty() {
        return Err(empty("train"));
    }
    if test_ends.is_empty() {
        return Err(empty("test"));
    }
    Ok(SplitPlan {
        test_day,
        delay_hours,
        cutoff,
        val_day,
        train_ends,
        val_ends,
        test_ends,
    })
}

pub struct Split<'a> {
    pub train: Vec<&'a Sample>,
    pub val: Vec<&'a Sample>,
    pub test: Vec<&'a Sample>,
}

/// Partitions prebuilt windows by their end hour according to
/// [`plan_split`].
pub fn split_for_day(samples: &[Sample], n_hours: usize, test_day: usize, delay_hours: usize) -> Result<Split<'_>> {
    let first = samples.first().ok_or(Error::EmptySplit {
        which: "train",
        test_day,
        delay: delay_hours,
    })?;
    let plan = plan_split(n_hours, test_day, delay_hours, first.seq_len(), first.horizon())?;
    let pick = |ends: &[usize]| -> Vec<&Sample> {
        samples
            .iter()
            .filter(|s| ends.binary_search(&s.t_end).is_ok())
            .collect()
    };
    let split = Split {
        train: pick(&plan.train_ends),
        val: pick(&plan.val_ends),
        test: pick(&plan.test_ends),
    };
    if split.train.is_empty() {
        return Err(Error::EmptySplit {
            which: "train",
            test_day,
            delay: delay_hours,
        });
    }
    if split.val.is_empty() {
        return Err(Error::EmptySplit {
            which: "validation",
            test_day,
            delay: delay_hours,
        });
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_counts() {
        let demand = vec![(0..30).map(f64::from).collect::<Vec<_>>()];
        let feats = vec![Matrix::zeros(1, 2); 30];
        let w = make_windows(&demand, &feats, 12, 1);
        assert_eq!(w.len(), 30 - 12);
        assert_eq!(w[0].y[(0, 0)], 12.0);
        assert_eq!(w[0].x.row(0), &demand[0][..12]);
        assert!(make_windows(&demand, &feats, 30, 1).is_empty());
    }

    #[test]
    fn windows_skip_gaps() {
        let mut demand = vec![(0..20).map(f64::from).collect::<Vec<_>>()];
        demand[0][10] = f64::NAN;
        let feats = vec![Matrix::zeros(1, 1); 20];
        let w = make_windows(&demand, &feats, 3, 1);
        assert!(w.iter().all(|s| !(s.t_end - 2..=s.t_end + 1).contains(&10)));
        assert_eq!(w.len(), 17 - 4);
    }

    #[test]
    fn split_arithmetic() {
        let p0 = plan_split(21 * 24, 7, 0, 12, 1).unwrap();
        assert_eq!(p0.cutoff, 168);
        assert_eq!(p0.val_day, 6);
        assert_eq!(*p0.train_ends.last().unwrap(), 142);
        assert_eq!(p0.val_ends, (143..167).collect::<Vec<_>>());
        assert_eq!(p0.test_ends, (167..191).collect::<Vec<_>>());
        assert_eq!(p0.train_ends[0], 11);

        let p24 = plan_split(21 * 24, 7, 24, 12, 1).unwrap();
        assert_eq!(p24.cutoff, 144);
        assert_eq!(*p24.train_ends.last().unwrap() + 24, *p0.train_ends.last().unwrap());

        assert!(matches!(
            plan_split(21 * 24, 1, 24, 12, 1),
            Err(Error::EmptySplit {
                which: "validation",
                ..
            })
        ));
    }

    #[test]
    fn multi_step_targets_stay_inside_their_day() {
        let p = plan_split(10 * 24, 5, 0, 4, 3).unwrap();
        for &t in &p.val_ends {
            assert!(t + 1 >= p.val_day * 24 && t + 3 < (p.val_day + 1) * 24);
        }
        for &t in &p.train_ends {
            assert!(t + 3 < p.val_day * 24);
        }
    }
}
