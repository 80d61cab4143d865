//! Scenario bundle: the directory of inputs a rolling run consumes.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::LatLon;
use crate::graph::NodeFeatureTable;
use crate::time::{parse_date, HourGrid};
use crate::trip::{read_tracts_file, TractIndex};

pub const PINGS_FILE: &str = "pings.csv";
pub const TRACTS_FILE: &str = "tracts.json";
pub const ENV_FEATURES_FILE: &str = "env_features.csv";
pub const DEMO_FEATURES_FILE: &str = "demo_features.csv";
pub const WEATHER_FILE: &str = "weather.csv";
pub const EVENTS_FILE: &str = "events.json";
pub const CALENDAR_FILE: &str = "calendar.json";
pub const FIRE_DISTANCE_FILE: &str = "fire_distance.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";

pub const WEATHER_COLUMNS: [&str; 8] = [
    "temperature",
    "feels_like",
    "wind_speed",
    "sea_level_pressure",
    "humidity",
    "visibility",
    "cloud_cover",
    "uv_index",
];

/// Study period, fire dates and the pre-fire workdays used for baselines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Calendar {
    pub start_date: String,
    pub n_days: usize,
    pub fire_start: String,
    pub fire_end: String,
    pub workdays: Vec<String>,
}

impl Calendar {
    pub fn grid(&self) -> Result<HourGrid> {
        if self.n_days == 0 {
            return Err(Error::invalid("calendar.n_days must be positive"));
        }
        Ok(HourGrid::from_days(parse_date(&self.start_date)?, self.n_days))
    }

    fn day_index(&self, grid: &HourGrid, date: &str, field: &str) -> Result<usize> {
        let d: NaiveDate = parse_date(date)?;
        grid.day_of_date(d)
            .ok_or_else(|| Error::invalid(format!("calendar.{field} {date} lies outside the study period")))
    }

    pub fn workday_indices(&self) -> Result<Vec<usize>> {
        let grid = self.grid()?;
        let mut days = self
            .workdays
            .iter()
            .map(|d| self.day_index(&grid, d, "workdays"))
            .collect::<Result<Vec<_>>>()?;
        days.sort_unstable();
        days.dedup();
        Ok(days)
    }

    pub fn fire_start_day(&self) -> Result<usize> {
        self.day_index(&self.grid()?, &self.fire_start, "fire_start")
    }

    /// Day indices from the fire start through its end, inclusive.
    pub fn fire_days(&self) -> Result<Vec<usize>> {
        let grid = self.grid()?;
        let a = self.day_index(&grid, &self.fire_start, "fire_start")?;
        let b = self.day_index(&grid, &self.fire_end, "fire_end")?;
        if b < a {
            return Err(Error::invalid("calendar.fire_end precedes calendar.fire_start"));
        }
        Ok((a..=b).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderInterval {
    pub tract_id: String,
    /// ISO-8601 hour at which the order or warning takes effect.
    pub start: String,
    /// Exclusive end; open-ended when absent.
    #[serde(default)]
    pub end: Option<String>,
    #[serde(default = "default_kind")]
    pub kind: String,
}

fn default_kind() -> String {
    "order".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perimeter {
    pub date: String,
    /// `[lat, lon]` vertices.
    pub ring: Vec<[f64; 2]>,
}

impl Perimeter {
    pub fn latlon_ring(&self) -> Vec<LatLon> {
        self.ring.iter().map(|&[lat, lon]| LatLon::new(lat, lon)).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Events {
    #[serde(default)]
    pub orders: Vec<OrderInterval>,
    #[serde(default)]
    pub perimeters: Vec<Perimeter>,
}

/// County-level hourly weather, one row of [`WEATHER_COLUMNS`] per hour.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSeries {
    pub values: Vec<[f64; 8]>,
}

impl WeatherSeries {
    /// Reads `hour_iso8601` plus the eight weather columns. Hours missing
    /// from the file take the previous hour's values; leading gaps take the
    /// first recorded hour.
    pub fn read_csv<R: Read>(reader: R, grid: &HourGrid) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let mut col = Vec::with_capacity(8);
        for name in WEATHER_COLUMNS {
            let i = headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::invalid(format!("weather file lacks column {name}")))?;
            col.push(i);
        }
        let hour_col = headers
            .iter()
            .position(|h| h == "hour_iso8601")
            .ok_or_else(|| Error::invalid("weather file lacks column hour_iso8601"))?;

        let mut slots: Vec<Option<[f64; 8]>> = vec![None; grid.n_hours];
        for rec in rdr.records() {
            let rec = rec?;
            let h = grid.parse_hour(&rec[hour_col])?;
            let mut row = [0.0; 8];
            for (v, &i) in row.iter_mut().zip(&col) {
                *v = rec[i]
                    .trim()
                    .parse()
                    .map_err(|e| Error::invalid(format!("weather value {:?}: {e}", &rec[i])))?;
            }
            slots[h] = Some(row);
        }
        let first = slots
            .iter()
            .flatten()
            .next()
            .copied()
            .ok_or_else(|| Error::invalid("weather file has no rows inside the study period"))?;
        let mut missing = 0usize;
        let mut last = first;
        let values = slots
            .into_iter()
            .map(|s| match s {
                Some(r) => {
                    last = r;
                    r
                }
                None => {
                    missing += 1;
                    last
                }
            })
            .collect();
        if missing > 0 {
            log::warn!("weather: {missing} missing hours filled by carry-forward");
        }
        Ok(Self { values })
    }

    pub fn write_csv<W: Write>(&self, writer: W, grid: &HourGrid) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["hour_iso8601"];
        header.extend(WEATHER_COLUMNS);
        w.write_record(&header)?;
        for (h, row) in self.values.iter().enumerate() {
            let mut rec = vec![grid.iso(h)];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<weather>", e))?;
        Ok(())
    }
}

/// Precomputed fire distance per tract and day, as an alternative to
/// perimeter rings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FireDistanceTable {
    pub by_tract: HashMap<String, Vec<(usize, f64)>>,
}

impl FireDistanceTable {
    pub fn read_csv<R: Read>(reader: R, grid: &HourGrid) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            tract_id: String,
            date: String,
            fire_distance: f64,
        }
        let mut table = Self::default();
        for rec in csv::Reader::from_reader(reader).deserialize() {
            let row: Row = rec?;
            let day = grid
                .day_of_date(parse_date(&row.date)?)
                .ok_or_else(|| Error::invalid(format!("fire distance date {} outside the study period", row.date)))?;
            table
                .by_tract
                .entry(row.tract_id)
                .or_default()
                .push((day, row.fire_distance));
        }
        for v in table.by_tract.values_mut() {
            v.sort_by_key(|&(d, _)| d);
        }
        Ok(table)
    }
}

/// All non-ping inputs of a scenario, loaded and validated.
#[derive(Debug, Clone)]
pub struct ScenarioBundle {
    pub dir: PathBuf,
    pub tracts: TractIndex,
    pub environmental: NodeFeatureTable,
    pub demographic: NodeFeatureTable,
    pub weather: WeatherSeries,
    pub events: Events,
    pub calendar: Calendar,
    pub fire_distance: Option<FireDistanceTable>,
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

impl ScenarioBundle {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let calendar: Calendar = read_json(&dir.join(CALENDAR_FILE))?;
        let grid = calendar.grid()?;
        calendar.workday_indices()?;
        calendar.fire_days()?;
        let tracts = read_tracts_file(&dir.join(TRACTS_FILE))?;
        let environmental = NodeFeatureTable::read_csv_file(&dir.join(ENV_FEATURES_FILE))?;
        let demographic = NodeFeatureTable::read_csv_file(&dir.join(DEMO_FEATURES_FILE))?;
        let weather_path = dir.join(WEATHER_FILE);
        let weather = WeatherSeries::read_csv(open(&weather_path)?, &grid)
            .map_err(|e| Error::parse(&weather_path, e.to_string()))?;
        let events: Events = read_json(&dir.join(EVENTS_FILE))?;
        for o in &events.orders {
            grid.parse_hour(&o.start)?;
            if let Some(end) = &o.end {
                grid.parse_hour(end)?;
            }
        }
        let fd_path = dir.join(FIRE_DISTANCE_FILE);
        let fire_distance = if fd_path.exists() {
            Some(
                FireDistanceTable::read_csv(open(&fd_path)?, &grid)
                    .map_err(|e| Error::parse(&fd_path, e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Self {
            dir,
            tracts,
            environmental,
            demographic,
            weather,
            events,
            calendar,
            fire_distance,
        })
    }

    pub fn pings_path(&self) -> PathBuf {
        self.dir.join(PINGS_FILE)
    }

    pub fn grid(&self) -> HourGrid {
        self.calendar.grid().expect("validated on load")
    }
}
