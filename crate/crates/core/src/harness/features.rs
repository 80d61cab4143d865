//! The fourteen temporal variables per tract and hour.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::bundle::{Events, FireDistanceTable, WeatherSeries};
use crate::error::{Error, Result};
use crate::geo::{ring_distance, LatLon, LocalProjection};
use crate::linalg::Matrix;
use crate::time::{parse_date, HourGrid, HOURS_PER_DAY};
use crate::trip::TractIndex;

pub const N_FEATURES: usize = 14;
/// Columns that do not depend on demand: fire distance through UV index.
pub const N_EXOGENOUS: usize = 11;
pub const DEFAULT_FIRE_DISTANCE_CAP: f64 = 250.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    FireDistance,
    EvacOrder,
    Weekend,
    Temperature,
    FeelsLike,
    WindSpeed,
    SeaLevelPressure,
    Humidity,
    Visibility,
    CloudCover,
    UvIndex,
    #[serde(rename = "hist_embed_1")]
    HistEmbed1,
    #[serde(rename = "hist_embed_2")]
    HistEmbed2,
    PopulationChange,
}

impl Feature {
    pub const ALL: [Feature; N_FEATURES] = [
        Feature::FireDistance,
        Feature::EvacOrder,
        Feature::Weekend,
        Feature::Temperature,
        Feature::FeelsLike,
        Feature::WindSpeed,
        Feature::SeaLevelPressure,
        Feature::Humidity,
        Feature::Visibility,
        Feature::CloudCover,
        Feature::UvIndex,
        Feature::HistEmbed1,
        Feature::HistEmbed2,
        Feature::PopulationChange,
    ];

    pub const WEATHER: [Feature; 8] = [
        Feature::Temperature,
        Feature::FeelsLike,
        Feature::WindSpeed,
        Feature::SeaLevelPressure,
        Feature::Humidity,
        Feature::Visibility,
        Feature::CloudCover,
        Feature::UvIndex,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::FireDistance => "fire_distance",
            Feature::EvacOrder => "evac_order",
            Feature::Weekend => "weekend",
            Feature::Temperature => "temperature",
            Feature::FeelsLike => "feels_like",
            Feature::WindSpeed => "wind_speed",
            Feature::SeaLevelPressure => "sea_level_pressure",
            Feature::Humidity => "humidity",
            Feature::Visibility => "visibility",
            Feature::CloudCover => "cloud_cover",
            Feature::UvIndex => "uv_index",
            Feature::HistEmbed1 => "hist_embed_1",
            Feature::HistEmbed2 => "hist_embed_2",
            Feature::PopulationChange => "population_change",
        }
    }

    pub fn is_exogenous(self) -> bool {
        self.index() < N_EXOGENOUS
    }
}

/// Shortest planar distance in kilometres between a tract boundary and a
/// fire perimeter, 0 when they overlap, capped at `cap`.
pub fn compute_fire_distance(tract_ring: &[LatLon], perimeter: &[LatLon], cap: f64) -> f64 {
    let ref_lat = tract_ring.iter().map(|p| p.lat).sum::<f64>() / tract_ring.len().max(1) as f64;
    let proj = LocalProjection::new(ref_lat);
    let closed = |ring: &[LatLon]| {
        let mut pts = proj.project_ring(ring);
        if let (Some(&first), Some(&last)) = (pts.first(), pts.last()) {
            if first != last {
                pts.push(first);
            }
        }
        pts
    };
    ring_distance(&closed(tract_ring), &closed(perimeter)).min(cap)
}

/// Demand-independent features, one N×11 matrix per hour.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousPanel {
    pub tract_ids: Vec<String>,
    pub grid: HourGrid,
    pub values: Vec<Matrix>,
}

impl ExogenousPanel {
    pub fn value(&self, hour: usize, tract: usize, feature: Feature) -> f64 {
        self.values[hour][(tract, feature.index())]
    }
}

/// Builds the fire-distance, order, weekend and weather columns. Fire
/// distance on a day uses the latest perimeter dated on or before it
/// (`cap` before any perimeter exists); a precomputed table, when given,
/// takes precedence over perimeters.
pub fn exogenous_features(
    tract_ids: &[String],
    tracts: &TractIndex,
    grid: &HourGrid,
    weather: &WeatherSeries,
    events: &Events,
    fire_table: Option<&FireDistanceTable>,
    cap: f64,
) -> Result<ExogenousPanel> {
    if weather.values.len() != grid.n_hours {
        return Err(Error::Dimension {
            context: "weather hours",
            expected: grid.n_hours.to_string(),
            actual: weather.values.len().to_string(),
        });
    }
    let n = tract_ids.len();
    let n_days = grid.n_days();

    let mut perimeters: Vec<(usize, Vec<LatLon>)> = Vec::new();
    for p in &events.perimeters {
        let day = grid
            .day_of_date(parse_date(&p.date)?)
            .ok_or_else(|| Error::invalid(format!("perimeter date {} outside the study period", p.date)))?;
        if p.ring.len() < 3 {
            return Err(Error::DegeneratePolygon(format!("fire perimeter {}", p.date)));
        }
        perimeters.push((day, p.latlon_ring()));
    }
    perimeters.sort_by_key(|(d, _)| *d);

    let mut fire = vec![vec![cap; n_days]; n];
    for (k, id) in tract_ids.iter().enumerate() {
        let tract = tracts
            .get(id)
            .ok_or_else(|| Error::invalid(format!("tract {id} has no geometry")))?;
        if let Some(rows) = fire_table.and_then(|t| t.by_tract.get(id)) {
            for day in 0..n_days {
                if let Some(&(_, v)) = rows.iter().rev().find(|(d, _)| *d <= day) {
                    fire[k][day] = v.min(cap);
                }
            }
            continue;
        }
        for day in 0..n_days {
            if let Some((_, ring)) = perimeters.iter().rev().find(|(d, _)| *d <= day) {
                fire[k][day] = compute_fire_distance(&tract.ring, ring, cap);
            }
        }
    }

    let mut orders: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for o in &events.orders {
        let Some(k) = tract_ids.iter().position(|t| *t == o.tract_id) else {
            continue;
        };
        let start = grid.parse_hour(&o.start)?;
        let end = match &o.end {
            Some(e) => grid.parse_hour(e)?,
            None => grid.n_hours,
        };
        orders[k].push((start, end));
    }

    let values = (0..grid.n_hours)
        .map(|h| {
            let mut m = Matrix::zeros(n, N_EXOGENOUS);
            let weekend = if grid.is_weekend(h) { 1.0 } else { 0.0 };
            for k in 0..n {
                let row = m.row_mut(k);
                row[Feature::FireDistance.index()] = fire[k][h / HOURS_PER_DAY];
                row[Feature::EvacOrder.index()] = if orders[k].iter().any(|&(a, b)| a <= h && h < b) {
                    1.0
                } else {
                    0.0
                };
                row[Feature::Weekend.index()] = weekend;
                row[Feature::Temperature.index()..N_EXOGENOUS].copy_from_slice(&weather.values[h]);
            }
            m
        })
        .collect();
    Ok(ExogenousPanel {
        tract_ids: tract_ids.to_vec(),
        grid: *grid,
        values,
    })
}

/// Per-tract demand series with running prefix sums, extendable one hour at
/// a time so forecasts can stand in for unobserved hours.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandHistory {
    values: Vec<Vec<f64>>,
    prefix: Vec<Vec<f64>>,
}

impl DemandHistory {
    /// The first `len` hours of `demand`.
    pub fn from_observed(demand: &[Vec<f64>], len: usize) -> Self {
        let mut h = Self {
            values: demand.iter().map(|_| Vec::with_capacity(len + 64)).collect(),
            prefix: demand.iter().map(|_| vec![0.0]).collect(),
        };
        for t in 0..len {
            for (k, series) in demand.iter().enumerate() {
                h.push_one(k, series[t]);
            }
        }
        h
    }

    fn push_one(&mut self, k: usize, v: f64) {
        let last = *self.prefix[k].last().expect("prefix starts at 0");
        self.values[k].push(v);
        self.prefix[k].push(last + v);
    }

    /// Appends one hour across all tracts.
    pub fn push(&mut self, hour_values: &[f64]) {
        for (k, &v) in hour_values.iter().enumerate() {
            self.push_one(k, v);
        }
    }

    pub fn len(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, k: usize, t: usize) -> f64 {
        self.values[k][t]
    }

    /// Mean of all hours before `t`; 0 at the first hour.
    pub fn embed_all(&self, k: usize, t: usize) -> f64 {
        if t == 0 {
            0.0
        } else {
            self.prefix[k][t] / t as f64
        }
    }

    /// Mean of the (up to) four hours before `t`; 0 at the first hour.
    pub fn embed_recent(&self, k: usize, t: usize) -> f64 {
        let lo = t.saturating_sub(4);
        if t == lo {
            return 0.0;
        }
        self.values[k][lo..t].iter().sum::<f64>() / (t - lo) as f64
    }
}

/// Daily active users of each tract over its pre-fire workday baseline.
pub fn daily_population_ratio(active: &[Vec<f64>], u_baseline: &[f64], n_days: usize) -> Vec<Vec<f64>> {
    active
        .iter()
        .zip(u_baseline)
        .map(|(row, &b)| {
            (0..n_days)
                .map(|d| row[d * HOURS_PER_DAY..(d + 1) * HOURS_PER_DAY].iter().sum::<f64>() / b)
                .collect()
        })
        .collect()
}

/// Population change for `day` when only hours before `limit` are known:
/// the day's own ratio if the whole day is known, otherwise the latest fully
/// known day's, and 1 when no day is complete.
pub fn population_change_at(ratios: &[f64], day: usize, limit: usize) -> f64 {
    let complete = limit / HOURS_PER_DAY;
    if complete == 0 {
        return 1.0;
    }
    ratios[day.min(complete - 1)]
}

/// All fourteen features for every tract and hour of an observed panel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePanel {
    pub tract_ids: Vec<String>,
    pub grid: HourGrid,
    pub names: Vec<String>,
    /// One N×14 matrix per hour.
    pub values: Vec<Matrix>,
}

/// Combines exogenous columns with the history-derived ones computed from
/// the full observed demand and active-user series.
pub fn compute_features(
    demand: &[Vec<f64>],
    active: &[Vec<f64>],
    u_baseline: &[f64],
    exogenous: &ExogenousPanel,
) -> Result<FeaturePanel> {
    let grid = exogenous.grid;
    let n = exogenous.tract_ids.len();
    if demand.len() != n || active.len() != n || u_baseline.len() != n {
        return Err(Error::Dimension {
            context: "feature inputs",
            expected: format!("{n} tracts"),
            actual: format!("{}/{}/{}", demand.len(), active.len(), u_baseline.len()),
        });
    }
    let history = DemandHistory::from_observed(demand, grid.n_hours);
    let ratios = daily_population_ratio(active, u_baseline, grid.n_days());
    let values = (0..grid.n_hours)
        .map(|t| {
            let mut m = Matrix::zeros(n, N_FEATURES);
            for k in 0..n {
                let row = m.row_mut(k);
                row[..N_EXOGENOUS].copy_from_slice(exogenous.values[t].row(k));
                row[Feature::HistEmbed1.index()] = history.embed_all(k, t);
                row[Feature::HistEmbed2.index()] = history.embed_recent(k, t);
                row[Feature::PopulationChange.index()] =
                    population_change_at(&ratios[k], t / HOURS_PER_DAY, grid.n_hours);
            }
            m
        })
        .collect();
    Ok(FeaturePanel {
        tract_ids: exogenous.tract_ids.clone(),
        grid,
        names: Feature::ALL.iter().map(|f| f.name().to_string()).collect(),
        values,
    })
}

impl FeaturePanel {
    pub fn value(&self, hour: usize, tract: usize, feature: Feature) -> f64 {
        self.values[hour][(tract, feature.index())]
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["tract_id".to_string(), "hour_iso8601".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (k, id) in self.tract_ids.iter().enumerate() {
            for (h, m) in self.values.iter().enumerate() {
                let mut rec = vec![id.clone(), self.grid.iso(h)];
                rec.extend(m.row(k).iter().map(f64::to_string));
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(|e| Error::io("<features>", e))?;
        Ok(())
    }
}
