//! Hourly time axis shared by panels, features and forecasts.

use chrono::{DateTime, Datelike, NaiveDate, Utc, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MINUTES_PER_HOUR: i64 = 60;
pub const HOURS_PER_DAY: usize = 24;

/// A contiguous run of hours starting at midnight UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HourGrid {
    /// Epoch minute of hour 0; always a multiple of 1440.
    pub start_minute: i64,
    pub n_hours: usize,
}

impl HourGrid {
    pub fn new(start_minute: i64, n_hours: usize) -> Result<Self> {
        if start_minute.rem_euclid(1440) != 0 {
            return Err(Error::invalid(format!(
                "hour grid must start at midnight UTC, got epoch minute {start_minute}"
            )));
        }
        Ok(Self { start_minute, n_hours })
    }

    pub fn from_days(start: NaiveDate, n_days: usize) -> Self {
        let start_minute = start
            .and_hms_opt(0, 0, 0)
            .expect("midnight exists")
            .and_utc()
            .timestamp()
            / 60;
        Self {
            start_minute,
            n_hours: n_days * HOURS_PER_DAY,
        }
    }

    pub fn n_days(&self) -> usize {
        self.n_hours / HOURS_PER_DAY
    }

    /// Index of the hour containing `minute`, if it falls inside the grid.
    pub fn hour_of(&self, minute: i64) -> Option<usize> {
        let offset = minute - self.start_minute;
        if offset < 0 {
            return None;
        }
        let h = (offset / MINUTES_PER_HOUR) as usize;
        (h < self.n_hours).then_some(h)
    }

    pub fn hour_start_minute(&self, hour: usize) -> i64 {
        self.start_minute + hour as i64 * MINUTES_PER_HOUR
    }

    pub fn start_date(&self) -> NaiveDate {
        self.datetime(0).date_naive()
    }

    pub fn date_of_day(&self, day: usize) -> NaiveDate {
        self.datetime(day * HOURS_PER_DAY).date_naive()
    }

    pub fn day_of_date(&self, date: NaiveDate) -> Option<usize> {
        let diff = (date - self.start_date()).num_days();
        (diff >= 0 && (diff as usize) < self.n_days()).then_some(diff as usize)
    }

    pub fn datetime(&self, hour: usize) -> DateTime<Utc> {
        DateTime::from_timestamp(self.hour_start_minute(hour) * 60, 0).expect("in range")
    }

    pub fn iso(&self, hour: usize) -> String {
        self.datetime(hour).format("%Y-%m-%dT%H:%M:%SZ").to_string()
    }

    pub fn is_weekend(&self, hour: usize) -> bool {
        matches!(self.datetime(hour).weekday(), Weekday::Sat | Weekday::Sun)
    }

    /// Parses an ISO-8601 hour stamp back to its index on this grid.
    pub fn parse_hour(&self, stamp: &str) -> Result<usize> {
        let dt =
            DateTime::parse_from_rfc3339(stamp).map_err(|e| Error::invalid(format!("bad timestamp {stamp:?}: {e}")))?;
        let minute = dt.timestamp() / 60;
        if (minute - self.start_minute).rem_euclid(MINUTES_PER_HOUR) != 0 {
            return Err(Error::invalid(format!("{stamp} is not on an hour boundary")));
        }
        self.hour_of(minute)
            .ok_or_else(|| Error::invalid(format!("{stamp} lies outside the hour grid")))
    }
}

pub fn day_of_hour(hour: usize) -> usize {
    hour / HOURS_PER_DAY
}

pub fn hour_of_day(hour: usize) -> usize {
    hour % HOURS_PER_DAY
}

pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| Error::invalid(format!("bad date {s:?}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iso_round_trip() {
        let g = HourGrid::from_days(parse_date("2019-10-16").unwrap(), 3);
        assert_eq!(g.iso(0), "2019-10-16T00:00:00Z");
        assert_eq!(g.iso(25), "2019-10-17T01:00:00Z");
        assert_eq!(g.parse_hour("2019-10-17T01:00:00Z").unwrap(), 25);
        assert!(g.parse_hour("2019-10-20T00:00:00Z").is_err());
        assert_eq!(g.hour_of(g.start_minute + 59), Some(0));
        assert_eq!(g.hour_of(g.start_minute - 1), None);
    }

    #[test]
    fn weekend_flags() {
        // 2019-10-19 was a Saturday
        let g = HourGrid::from_days(parse_date("2019-10-16").unwrap(), 7);
        assert!(!g.is_weekend(2 * 24));
        assert!(g.is_weekend(3 * 24));
        assert!(g.is_weekend(4 * 24 + 23));
        assert!(!g.is_weekend(5 * 24));
    }

    #[test]
    fn rejects_unaligned_start() {
        assert!(HourGrid::new(61, 10).is_err());
    }
}
