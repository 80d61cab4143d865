//! Seeded synthetic wildfire scenarios: a grid of tracts, home-anchored
//! devices with planted stays and trips, weather, a growing fire and its
//! evacuation orders, plus the true hourly trip counts.

mod devices;

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use chrono::{Datelike, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use devices::{stay_pings, DevicePlan, PlantedStay};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geo::LatLon;
use crate::graph::NodeFeatureTable;
use crate::harness::{
    compute_fire_distance, write_json, Calendar, Events, ForecastData, GraphConfig, OrderInterval, Perimeter,
    ScenarioBundle, WeatherSeries, CALENDAR_FILE, DEFAULT_FIRE_DISTANCE_CAP, DEMO_FEATURES_FILE, ENV_FEATURES_FILE,
    EVENTS_FILE, GROUND_TRUTH_FILE, PINGS_FILE, TRACTS_FILE, WEATHER_FILE,
};
use crate::time::{parse_date, HourGrid, HOURS_PER_DAY};
use crate::trip::{infer_demand, tracts_to_json, write_pings, GpsPing, InferenceParams, TractGeometry, TractIndex};

/// Kilometres per degree of latitude on the haversine sphere.
const KM_PER_DEG: f64 = 6371.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub name: String,
    /// Tracts form a `grid_side × grid_side` grid.
    pub grid_side: usize,
    pub n_devices: usize,
    pub days_before_fire: usize,
    pub fire_duration_days: usize,
    pub hours_per_day: usize,
    pub start_date: String,
    /// South-west corner of the grid.
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub cell_deg: f64,
    pub population_min: u64,
    pub population_max: u64,
    /// Expected departures per device in each hour of the day.
    pub hourly_profile: Vec<f64>,
    pub weekend_factor: f64,
    /// Departure-rate multiplier in an ordered tract right after the order.
    pub evac_multiplier: f64,
    pub response_lag_hours: usize,
    pub response_hours: usize,
    /// Chance that a departure during the response is an evacuation.
    pub evacuation_probability: f64,
    /// Share of evacuees who leave the study area rather than shelter in it.
    pub offgrid_share: f64,
    pub fire_initial_radius_km: f64,
    pub fire_growth_km_per_day: f64,
    pub order_buffer_km: f64,
    pub order_hour_earliest: usize,
    pub order_hour_latest: usize,
    pub min_stay_min: i64,
    pub min_move_m: f64,
    pub travel_min_min: i64,
    pub travel_max_min: i64,
    pub ping_interval_min: i64,
    pub places_per_device: usize,
    /// Per-ping chance of an extra low-accuracy ping.
    pub decoy_rate: f64,
    /// Per-ping chance of an exact duplicate.
    pub duplicate_rate: f64,
    /// Radius of uniform positional jitter on stay pings; 0 is noise-free.
    pub jitter_m: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            grid_side: 4,
            n_devices: 200,
            days_before_fire: 7,
            fire_duration_days: 14,
            hours_per_day: 24,
            start_date: "2019-10-16".into(),
            origin_lat: 38.40,
            origin_lon: -122.90,
            cell_deg: 0.05,
            population_min: 3000,
            population_max: 7000,
            hourly_profile: vec![
                0.02, 0.02, 0.02, 0.02, 0.02, 0.04, 0.15, 0.35, 0.35, 0.20, 0.18, 0.18, 0.25, 0.20, 0.18, 0.18, 0.25,
                0.35, 0.30, 0.20, 0.12, 0.08, 0.04, 0.04,
            ],
            weekend_factor: 0.75,
            evac_multiplier: 6.0,
            response_lag_hours: 1,
            response_hours: 4,
            evacuation_probability: 0.8,
            offgrid_share: 0.5,
            fire_initial_radius_km: 1.5,
            fire_growth_km_per_day: 1.0,
            order_buffer_km: 3.0,
            order_hour_earliest: 9,
            order_hour_latest: 17,
            min_stay_min: 20,
            min_move_m: 1200.0,
            travel_min_min: 10,
            travel_max_min: 30,
            ping_interval_min: 30,
            places_per_device: 3,
            decoy_rate: 0.02,
            duplicate_rate: 0.01,
            jitter_m: 0.0,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn n_tracts(&self) -> usize {
        self.grid_side * self.grid_side
    }

    pub fn n_days(&self) -> usize {
        self.days_before_fire + self.fire_duration_days
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::invalid(format!("scenario.{msg}")));
        if self.grid_side < 2 {
            return bad("grid_side must be at least 2");
        }
        if self.n_devices == 0 {
            return bad("n_devices must be positive");
        }
        if self.days_before_fire == 0 || self.fire_duration_days == 0 {
            return bad("days_before_fire and fire_duration_days must be positive");
        }
        if self.hours_per_day != HOURS_PER_DAY {
            return bad("hours_per_day must be 24");
        }
        if self.hourly_profile.len() != HOURS_PER_DAY || self.hourly_profile.iter().any(|v| !(*v >= 0.0)) {
            return bad("hourly_profile needs 24 non-negative rates");
        }
        if self.hourly_profile.iter().all(|&v| v == 0.0) {
            return bad("hourly_profile must not be all zero");
        }
        if !(self.evac_multiplier >= 0.0) || !(self.weekend_factor >= 0.0) {
            return bad("evac_multiplier and weekend_factor must be non-negative");
        }
        for (name, p) in [
            ("evacuation_probability", self.evacuation_probability),
            ("offgrid_share", self.offgrid_share),
            ("decoy_rate", self.decoy_rate),
            ("duplicate_rate", self.duplicate_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if self.population_min == 0 || self.population_max < self.population_min {
            return bad("population range must be positive and ordered");
        }
        if !(self.cell_deg > 0.0) || !(self.min_move_m > 0.0) || !(self.jitter_m >= 0.0) {
            return bad("cell_deg, min_move_m and jitter_m must be positive (jitter may be 0)");
        }
        // stays must be recoverable as distinct clusters at the default radius
        if self.min_move_m - 2.0 * self.jitter_m <= 500.0 {
            return bad("min_move_m must exceed 500 m plus twice the jitter");
        }
        if self.min_stay_min < 5 || self.ping_interval_min <= 0 {
            return bad("min_stay_min must be at least 5 and ping_interval_min positive");
        }
        if self.travel_min_min <= 0 || self.travel_max_min < self.travel_min_min {
            return bad("travel time range must be positive and ordered");
        }
        if self.order_hour_latest >= HOURS_PER_DAY || self.order_hour_earliest > self.order_hour_latest {
            return bad("order hours must be ordered hours of the day");
        }
        if self.places_per_device == 0 {
            return bad("places_per_device must be positive");
        }
        parse_date(&self.start_date)?;
        Ok(())
    }

    /// Departure rate per device-hour.
    pub fn hazard(&self, hour_of_day: usize, weekend: bool, weather_factor: f64, responding: bool) -> f64 {
        let mut rate = self.hourly_profile[hour_of_day] * weather_factor;
        if weekend {
            rate *= self.weekend_factor;
        }
        if responding {
            rate *= self.evac_multiplier;
        }
        rate
    }
}

/// A generated scenario held in memory.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub grid: HourGrid,
    pub tracts: Vec<TractGeometry>,
    pub environmental: NodeFeatureTable,
    pub demographic: NodeFeatureTable,
    pub weather: WeatherSeries,
    /// Departure-rate factor per hour derived from visibility.
    pub weather_factor: Vec<f64>,
    pub events: Events,
    pub calendar: Calendar,
    pub pings: Vec<GpsPing>,
    pub devices: Vec<DevicePlan>,
    /// True trips per tract and hour, counted at departure from a stay
    /// inside the tract.
    pub ground_truth: Vec<Vec<u32>>,
}

impl Scenario {
    pub fn tract_ids(&self) -> Vec<String> {
        self.tracts.iter().map(|t| t.id.clone()).collect()
    }

    /// The scenario as an in-memory bundle rooted at `dir`.
    pub fn bundle(&self, dir: &Path) -> Result<ScenarioBundle> {
        Ok(ScenarioBundle {
            dir: dir.to_path_buf(),
            tracts: TractIndex::new(self.tracts.clone())?,
            environmental: self.environmental.clone(),
            demographic: self.demographic.clone(),
            weather: self.weather.clone(),
            events: self.events.clone(),
            calendar: self.calendar.clone(),
            fire_distance: None,
        })
    }

    /// Trip inference and feature assembly with default parameters.
    pub fn forecast_data(&self, exec: Exec) -> Result<ForecastData> {
        let bundle = self.bundle(Path::new(""))?;
        let workdays = self.calendar.workday_indices()?;
        let inf = infer_demand(
            &self.pings,
            &bundle.tracts,
            self.grid,
            &workdays,
            InferenceParams::default(),
            exec,
        )?;
        ForecastData::assemble(
            &inf.panel,
            &bundle,
            GraphConfig::default(),
            DEFAULT_FIRE_DISTANCE_CAP,
            exec,
        )
    }

    pub fn write_bundle(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let create = |name: &str| -> Result<BufWriter<fs::File>> {
            let path = dir.join(name);
            Ok(BufWriter::new(
                fs::File::create(&path).map_err(|e| Error::io(&path, e))?,
            ))
        };
        write_pings(create(PINGS_FILE)?, &self.pings)?;
        let tracts = tracts_to_json(&self.tracts)?;
        let path = dir.join(TRACTS_FILE);
        fs::write(&path, tracts + "\n").map_err(|e| Error::io(&path, e))?;
        self.environmental.write_csv(create(ENV_FEATURES_FILE)?)?;
        self.demographic.write_csv(create(DEMO_FEATURES_FILE)?)?;
        self.weather.write_csv(create(WEATHER_FILE)?, &self.grid)?;
        write_json(&dir.join(EVENTS_FILE), &self.events)?;
        write_json(&dir.join(CALENDAR_FILE), &self.calendar)?;
        write_ground_truth_csv(
            create(GROUND_TRUTH_FILE)?,
            &self.tract_ids(),
            &self.grid,
            &self.ground_truth,
        )?;
        Ok(())
    }
}

pub fn write_ground_truth_csv<W: Write>(writer: W, ids: &[String], grid: &HourGrid, counts: &[Vec<u32>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["tract_id", "hour_iso8601", "trips_true"])?;
    for (id, row) in ids.iter().zip(counts) {
        for (h, c) in row.iter().enumerate() {
            w.write_record([id.clone(), grid.iso(h), c.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io("<ground truth>", e))?;
    Ok(())
}

/// Reads `ground_truth.csv` into tract ids (file order) and N×H counts.
pub fn read_ground_truth_csv<R: Read>(reader: R, grid: &HourGrid) -> Result<(Vec<String>, Vec<Vec<u32>>)> {
    #[derive(Deserialize)]
    struct Row {
        tract_id: String,
        hour_iso8601: String,
        trips_true: u32,
    }
    let mut ids: Vec<String> = Vec::new();
    let mut counts: Vec<Vec<u32>> = Vec::new();
    for rec in csv::Reader::from_reader(reader).deserialize() {
        let row: Row = rec?;
        let h = grid.parse_hour(&row.hour_iso8601)?;
        let k = match ids.iter().position(|i| *i == row.tract_id) {
            Some(k) => k,
            None => {
                ids.push(row.tract_id);
                counts.push(vec![0; grid.n_hours]);
                ids.len() - 1
            }
        };
        counts[k][h] = row.trips_true;
    }
    Ok((ids, counts))
}

/// Static layout shared by every device simulation.
pub(crate) struct Layout<'a> {
    pub config: &'a ScenarioConfig,
    pub grid: HourGrid,
    pub tracts: &'a [TractGeometry],
    /// Epoch-minute window in which each tract's residents respond.
    pub response: Vec<Option<(i64, i64)>>,
    /// Epoch minute at which each tract is ordered.
    pub ordered_at: Vec<Option<i64>>,
    pub weather_factor: &'a [f64],
}

impl Layout<'_> {
    pub fn tract_of(&self, p: LatLon) -> Option<usize> {
        let c = self.config;
        let r = ((p.lat - c.origin_lat) / c.cell_deg).floor();
        let col = ((p.lon - c.origin_lon) / c.cell_deg).floor();
        let side = c.grid_side as f64;
        (r >= 0.0 && col >= 0.0 && r < side && col < side).then(|| r as usize * c.grid_side + col as usize)
    }

    /// Uniform point inside tract `k`, away from its edges.
    pub fn interior_point<R: Rng>(&self, k: usize, rng: &mut R) -> LatLon {
        let c = self.config;
        let (r, col) = (k / c.grid_side, k % c.grid_side);
        let margin = 0.15;
        let u = margin + (1.0 - 2.0 * margin) * rng.gen::<f64>();
        let v = margin + (1.0 - 2.0 * margin) * rng.gen::<f64>();
        LatLon::new(
            c.origin_lat + (r as f64 + u) * c.cell_deg,
            c.origin_lon + (col as f64 + v) * c.cell_deg,
        )
    }

    pub fn end_minute(&self) -> i64 {
        self.grid.hour_start_minute(self.grid.n_hours)
    }
}

fn tract_grid(config: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<Vec<TractGeometry>> {
    let side = config.grid_side;
    (0..side * side)
        .map(|k| {
            let (r, c) = (k / side, k % side);
            let lat0 = config.origin_lat + r as f64 * config.cell_deg;
            let lon0 = config.origin_lon + c as f64 * config.cell_deg;
            let d = config.cell_deg;
            let ring = vec![
                LatLon::new(lat0, lon0),
                LatLon::new(lat0, lon0 + d),
                LatLon::new(lat0 + d, lon0 + d),
                LatLon::new(lat0 + d, lon0),
            ];
            let population = rng.gen_range(config.population_min..=config.population_max);
            TractGeometry::new(format!("06097{:06}", 150_100 + 100 * k), population, ring)
        })
        .collect()
}

/// Block-structured attribute tables: tracts in the same block share a
/// prototype row plus small noise, so their standardized rows correlate
/// strongly. Environmental blocks are quadrants; demographic blocks split
/// the grid into row halves and alternating columns.
fn feature_tables(
    config: &ScenarioConfig,
    ids: &[String],
    rng: &mut ChaCha8Rng,
) -> Result<(NodeFeatureTable, NodeFeatureTable)> {
    let side = config.grid_side;
    let noise = Normal::new(0.0, 0.08).expect("valid sigma");
    let unit = Normal::new(0.0, 1.0).expect("valid sigma");
    let mut table =
        |names: &[(&str, f64, f64)], block_of: &dyn Fn(usize, usize) -> usize| -> Result<NodeFeatureTable> {
            let protos: Vec<Vec<f64>> = (0..4)
                .map(|_| names.iter().map(|_| unit.sample(rng)).collect())
                .collect();
            let values = (0..side * side)
                .map(|k| {
                    let b = block_of(k / side, k % side);
                    names
                        .iter()
                        .zip(&protos[b])
                        .map(|(&(_, offset, scale), &p)| offset + scale * (p + noise.sample(rng)))
                        .collect()
                })
                .collect();
            NodeFeatureTable::new(
                ids.to_vec(),
                names.iter().map(|(n, _, _)| n.to_string()).collect(),
                values,
            )
        };
    let half = side.div_ceil(2);
    let env = table(
        &[
            ("elevation_m", 150.0, 60.0),
            ("slope_deg", 8.0, 3.0),
            ("forest_cover", 0.4, 0.12),
            ("urban_cover", 0.3, 0.1),
            ("road_density", 4.0, 1.5),
            ("distance_to_highway_km", 3.0, 1.0),
        ],
        &|r, c| (r / half) * 2 + c / half,
    )?;
    let demo = table(
        &[
            ("median_income", 80_000.0, 15_000.0),
            ("median_age", 42.0, 6.0),
            ("share_over_65", 0.18, 0.05),
            ("share_no_vehicle", 0.06, 0.02),
            ("household_size", 2.5, 0.3),
            ("share_renters", 0.35, 0.1),
        ],
        &|r, c| (r / half) * 2 + c % 2,
    )?;
    Ok((env, demo))
}

fn weather_series(config: &ScenarioConfig, grid: &HourGrid, rng: &mut ChaCha8Rng) -> (WeatherSeries, Vec<f64>) {
    let noise = Normal::new(0.0, 1.0).expect("valid sigma");
    let fire_start = config.days_before_fire;
    let mut pressure = 1015.0;
    let mut day_offset = 0.0;
    let mut smoke = 0.0;
    let mut values = Vec::with_capacity(grid.n_hours);
    let mut factor = Vec::with_capacity(grid.n_hours);
    for h in 0..grid.n_hours {
        let (day, hod) = (h / HOURS_PER_DAY, h % HOURS_PER_DAY);
        if hod == 0 {
            day_offset = 2.0 * noise.sample(rng);
            smoke = if day >= fire_start {
                0.4 + 0.5 * rng.gen::<f64>()
            } else {
                0.0
            };
        }
        let phase = 2.0 * std::f64::consts::PI * (hod as f64 - 9.0) / 24.0;
        let fire = day >= fire_start;
        let temperature =
            16.0 + 8.0 * phase.sin() + day_offset + if fire { 2.0 } else { 0.0 } + 0.5 * noise.sample(rng);
        let wind_speed = (8.0 + 4.0 * phase.sin() + if fire { 10.0 } else { 0.0 } + 1.5 * noise.sample(rng)).max(0.0);
        let feels_like = temperature - 0.2 * wind_speed;
        pressure += 0.3 * noise.sample(rng) - 0.02 * (pressure - 1015.0);
        let humidity = (60.0 - 1.5 * (temperature - 16.0) - if fire { 20.0 } else { 0.0 } + 3.0 * noise.sample(rng))
            .clamp(5.0, 100.0);
        let visibility = (10.0 * (1.0 - 0.7 * smoke) + 0.3 * noise.sample(rng)).clamp(0.5, 10.0);
        let cloud_cover = (30.0 + 10.0 * noise.sample(rng)).clamp(0.0, 100.0);
        let sun = (std::f64::consts::PI * (hod as f64 - 6.0) / 12.0).sin().max(0.0);
        let uv_index = 6.0 * sun * (1.0 - cloud_cover / 200.0);
        values.push([
            temperature,
            feels_like,
            wind_speed,
            pressure,
            humidity,
            visibility,
            cloud_cover,
            uv_index,
        ]);
        factor.push(0.8 + 0.02 * visibility);
    }
    (WeatherSeries { values }, factor)
}

fn perimeter_ring(config: &ScenarioConfig, radius_km: f64) -> Vec<[f64; 2]> {
    let c_lat = config.origin_lat - 0.005;
    let c_lon = config.origin_lon - 0.005;
    let cos = c_lat.to_radians().cos();
    (0..32)
        .map(|i| {
            let th = 2.0 * std::f64::consts::PI * i as f64 / 32.0;
            [
                c_lat + radius_km * th.sin() / KM_PER_DEG,
                c_lon + radius_km * th.cos() / (KM_PER_DEG * cos),
            ]
        })
        .collect()
}

/// Daily perimeters and the first-order hour of each tract reached by the
/// fire's buffer.
fn fire_events(
    config: &ScenarioConfig,
    grid: &HourGrid,
    tracts: &[TractGeometry],
    rng: &mut ChaCha8Rng,
) -> (Events, Vec<Option<usize>>) {
    let mut events = Events::default();
    let mut order_hour = vec![None; tracts.len()];
    for f in 0..config.fire_duration_days {
        let day = config.days_before_fire + f;
        let radius = config.fire_initial_radius_km + config.fire_growth_km_per_day * f as f64;
        let ring = perimeter_ring(config, radius);
        let latlon: Vec<LatLon> = ring.iter().map(|&[a, b]| LatLon::new(a, b)).collect();
        for (k, t) in tracts.iter().enumerate() {
            if order_hour[k].is_none()
                && compute_fire_distance(&t.ring, &latlon, f64::INFINITY) < config.order_buffer_km
            {
                let hod = rng.gen_range(config.order_hour_earliest..=config.order_hour_latest);
                order_hour[k] = Some(day * HOURS_PER_DAY + hod);
            }
        }
        events.perimeters.push(Perimeter {
            date: grid.date_of_day(day).format("%Y-%m-%d").to_string(),
            ring,
        });
    }
    for (k, t) in tracts.iter().enumerate() {
        if let Some(h) = order_hour[k] {
            events.orders.push(OrderInterval {
                tract_id: t.id.clone(),
                start: grid.iso(h),
                end: None,
                kind: "order".into(),
            });
        }
    }
    (events, order_hour)
}

fn calendar(config: &ScenarioConfig, grid: &HourGrid) -> Calendar {
    let fmt = |d: usize| grid.date_of_day(d).format("%Y-%m-%d").to_string();
    let workdays = (0..config.days_before_fire)
        .filter(|&d| !matches!(grid.date_of_day(d).weekday(), Weekday::Sat | Weekday::Sun))
        .map(fmt)
        .collect();
    Calendar {
        start_date: config.start_date.clone(),
        n_days: config.n_days(),
        fire_start: fmt(config.days_before_fire),
        fire_end: fmt(config.n_days() - 1),
        workdays,
    }
}

/// Generates the whole scenario from `config.seed`. Devices are simulated
/// independently (in parallel when `exec` allows) from per-device random
/// streams and concatenated in device order, so the output does not depend
/// on the execution mode.
pub fn generate_scenario(config: &ScenarioConfig, exec: Exec) -> Result<Scenario> {
    config.validate()?;
    let grid = HourGrid::from_days(parse_date(&config.start_date)?, config.n_days());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let tracts = tract_grid(config, &mut rng)?;
    let ids: Vec<String> = tracts.iter().map(|t| t.id.clone()).collect();
    let (environmental, demographic) = feature_tables(config, &ids, &mut rng)?;
    let (weather, weather_factor) = weather_series(config, &grid, &mut rng);
    let (events, order_hour) = fire_events(config, &grid, &tracts, &mut rng);
    let calendar = calendar(config, &grid);
    if calendar.workdays.is_empty() {
        return Err(Error::invalid(
            "scenario has no pre-fire workday to anchor the active-user baseline",
        ));
    }

    let layout = Layout {
        config,
        grid,
        tracts: &tracts,
        response: order_hour
            .iter()
            .map(|o| {
                o.map(|h| {
                    let a = h + config.response_lag_hours;
                    (
                        grid.hour_start_minute(a),
                        grid.hour_start_minute(a + config.response_hours),
                    )
                })
            })
            .collect(),
        ordered_at: order_hour
            .iter()
            .map(|o| o.map(|h| grid.hour_start_minute(h)))
            .collect(),
        weather_factor: &weather_factor,
    };
    let populations: Vec<f64> = tracts.iter().map(|t| t.population as f64).collect();
    let plans = exec.map_range(config.n_devices, |i| devices::simulate_device(&layout, &populations, i));

    let mut pings = Vec::new();
    let mut ground_truth = vec![vec![0u32; grid.n_hours]; tracts.len()];
    let mut devices = Vec::with_capacity(plans.len());
    for (plan, device_pings) in plans {
        for stay in plan.stays.iter().filter(|s| s.departs) {
            if let (Some(k), Some(h)) = (stay.tract, grid.hour_of(stay.t_end)) {
                ground_truth[k][h] += 1;
            }
        }
        pings.extend(device_pings);
        devices.push(plan);
    }
    Ok(Scenario {
        config: config.clone(),
        grid,
        tracts,
        environmental,
        demographic,
        weather,
        weather_factor,
        events,
        calendar,
        pings,
        devices,
        ground_truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            n_devices: 12,
            days_before_fire: 3,
            fire_duration_days: 3,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn rejects_infeasible_configs() {
        for cfg in [
            ScenarioConfig {
                n_devices: 0,
                ..small()
            },
            ScenarioConfig {
                evac_multiplier: -1.0,
                ..small()
            },
            ScenarioConfig {
                grid_side: 1,
                ..small()
            },
            ScenarioConfig {
                min_move_m: 400.0,
                ..small()
            },
        ] {
            assert!(generate_scenario(&cfg, Exec::Sequential).is_err());
        }
    }

    #[test]
    fn hazard_scales_by_multiplier() {
        let cfg = ScenarioConfig::default();
        for hod in 0..24 {
            let base = cfg.hazard(hod, false, 1.0, false);
            let resp = cfg.hazard(hod, false, 1.0, true);
            assert!((resp - cfg.evac_multiplier * base).abs() < 1e-12);
        }
    }

    #[test]
    fn layout_ids_and_calendar() {
        let s = generate_scenario(&small(), Exec::Sequential).unwrap();
        assert_eq!(s.tracts.len(), 16);
        assert!(s.tract_ids().iter().all(|id| id.len() == 11 && id.starts_with("06097")));
        assert_eq!(s.calendar.fire_days().unwrap(), vec![3, 4, 5]);
        // 2019-10-16 is a Wednesday: Wed, Thu, Fri
        assert_eq!(s.calendar.workdays.len(), 3);
        assert_eq!(s.weather.values.len(), 6 * 24);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let a = generate_scenario(&small(), Exec::Sequential).unwrap();
        let b = generate_scenario(&small(), Exec::Parallel).unwrap();
        assert_eq!(a.pings, b.pings);
        assert_eq!(a.ground_truth, b.ground_truth);
    }
}
