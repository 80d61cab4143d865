//! Hourly tract-level trip and active-user counts, and their scaling to
//! whole-population demand.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::cluster::{ActivityLocation, Trip};
use super::tract::TractIndex;
use crate::error::{Error, Result};
use crate::time::{HourGrid, HOURS_PER_DAY};

/// Trips per (tract, hour) keyed on departure time, and distinct devices
/// with an activity overlapping each (tract, hour). Activities cover the
/// inclusive minute range `[t_start, t_end]`.
pub fn count_hourly(
    trips: &[Trip],
    activities: &[(ActivityLocation, Option<String>)],
    tract_ids: &[String],
    grid: HourGrid,
) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
    let index: HashMap<&str, usize> = tract_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut m = vec![vec![0u32; grid.n_hours]; tract_ids.len()];
    let mut u = vec![vec![0u32; grid.n_hours]; tract_ids.len()];

    for trip in trips {
        let Some(k) = trip.origin_tract.as_deref().and_then(|id| index.get(id)) else {
            continue;
        };
        if let Some(h) = grid.hour_of(trip.depart_t) {
            m[*k][h] += 1;
        }
    }

    let mut seen: HashSet<(usize, usize, &str)> = HashSet::new();
    for (act, tract) in activities {
        let Some(&k) = tract.as_deref().and_then(|id| index.get(id)) else {
            continue;
        };
        let first = (act.t_start - grid.start_minute).div_euclid(60).max(0);
        let last = (act.t_end - grid.start_minute)
            .div_euclid(60)
            .min(grid.n_hours as i64 - 1);
        for h in first..=last {
            if seen.insert((k, h as usize, act.device_id.as_str())) {
                u[k][h as usize] += 1;
            }
        }
    }
    (m, u)
}

/// Average active-user hours per workday for each tract: the sum over all
/// hours of the given days divided by the number of days.
pub fn baseline_active_users(u_gps: &[Vec<u32>], workdays: &[usize]) -> Result<Vec<f64>> {
    if workdays.is_empty() {
        return Err(Error::invalid("baseline needs at least one workday"));
    }
    let n_hours = u_gps.first().map_or(0, Vec::len);
    if let Some(&d) = workdays.iter().find(|&&d| (d + 1) * HOURS_PER_DAY > n_hours) {
        return Err(Error::invalid(format!("workday {d} is not inside the panel")));
    }
    Ok(u_gps
        .iter()
        .map(|row| {
            let total: u64 = workdays
                .iter()
                .flat_map(|&d| &row[d * HOURS_PER_DAY..(d + 1) * HOURS_PER_DAY])
                .map(|&x| u64::from(x))
                .sum();
            total as f64 / workdays.len() as f64
        })
        .collect())
}

/// Trips per represented person.
pub fn trip_rate(m_gps: u32, u_baseline: f64) -> f64 {
    f64::from(m_gps) / u_baseline
}

/// Whole-population demand: trip rate times tract population.
pub fn scale_demand(m_gps: &[Vec<u32>], u_baseline: &[f64], population: &[u64]) -> Result<Vec<Vec<f64>>> {
    if m_gps.len() != u_baseline.len() || m_gps.len() != population.len() {
        return Err(Error::Dimension {
            context: "scale_demand",
            expected: format!("{} tracts", m_gps.len()),
            actual: format!("{} baselines, {} populations", u_baseline.len(), population.len()),
        });
    }
    if let Some(k) = u_baseline.iter().position(|&u| !(u > 0.0)) {
        return Err(Error::invalid(format!(
            "tract row {k} has a non-positive active-user baseline"
        )));
    }
    Ok(m_gps
        .iter()
        .zip(u_baseline)
        .zip(population)
        .map(|((row, &u), &p)| row.iter().map(|&m| trip_rate(m, u) * p as f64).collect())
        .collect())
}

/// Tract × hour demand matrices for the retained tracts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandPanel {
    pub tract_ids: Vec<String>,
    pub grid: HourGrid,
    pub m_gps: Vec<Vec<u32>>,
    pub u_gps: Vec<Vec<u32>>,
    pub u_baseline: Vec<f64>,
    pub m_all: Vec<Vec<f64>>,
    pub population: Vec<u64>,
}

impl DemandPanel {
    /// Builds the panel, dropping tracts whose workday baseline is zero.
    /// Returns the panel and the ids of dropped tracts.
    pub fn build(
        tract_ids: &[String],
        population: &[u64],
        grid: HourGrid,
        m_gps: Vec<Vec<u32>>,
        u_gps: Vec<Vec<u32>>,
        workdays: &[usize],
    ) -> Result<(Self, Vec<String>)> {
        let baseline = baseline_active_users(&u_gps, workdays)?;
        let mut panel = DemandPanel {
            tract_ids: Vec::new(),
            grid,
            m_gps: Vec::new(),
            u_gps: Vec::new(),
            u_baseline: Vec::new(),
            m_all: Vec::new(),
            population: Vec::new(),
        };
        let mut dropped = Vec::new();
        for (k, ((m, u), b)) in m_gps.into_iter().zip(u_gps).zip(baseline).enumerate() {
            if b > 0.0 {
                panel.tract_ids.push(tract_ids[k].clone());
                panel.m_gps.push(m);
                panel.u_gps.push(u);
                panel.u_baseline.push(b);
                panel.population.push(population[k]);
            } else {
                log::warn!(
                    "tract {} has no active users on baseline workdays; dropped",
                    tract_ids[k]
                );
                dropped.push(tract_ids[k].clone());
            }
        }
        panel.m_all = scale_demand(&panel.m_gps, &panel.u_baseline, &panel.population)?;
        Ok((panel, dropped))
    }

    pub fn n_tracts(&self) -> usize {
        self.tract_ids.len()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["tract_id", "hour_iso8601", "m_gps", "u_gps", "m_all"])?;
        for (k, id) in self.tract_ids.iter().enumerate() {
            for h in 0..self.grid.n_hours {
                w.write_record([
                    id.clone(),
                    self.grid.iso(h),
                    self.m_gps[k][h].to_string(),
                    self.u_gps[k][h].to_string(),
                    self.m_all[k][h].to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<panel>", e))?;
        Ok(())
    }
}

/// The long-format panel file read back as matrices, in file tract order.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelTable {
    pub tract_ids: Vec<String>,
    pub m_gps: Vec<Vec<u32>>,
    pub u_gps: Vec<Vec<u32>>,
    pub m_all: Vec<Vec<f64>>,
}

impl PanelTable {
    /// Rebuilds the full panel, taking populations from `tracts` and
    /// recomputing the baseline and scaled demand.
    pub fn into_panel(self, tracts: &TractIndex, grid: HourGrid, workdays: &[usize]) -> Result<DemandPanel> {
        let population = self
            .tract_ids
            .iter()
            .map(|id| {
                tracts
                    .get(id)
                    .map(|t| t.population)
                    .ok_or_else(|| Error::invalid(format!("panel tract {id} is not in the tract file")))
            })
            .collect::<Result<Vec<_>>>()?;
        let (panel, _) = DemandPanel::build(&self.tract_ids, &population, grid, self.m_gps, self.u_gps, workdays)?;
        Ok(panel)
    }
}

#[derive(Deserialize)]
struct PanelRow {
    tract_id: String,
    hour_iso8601: String,
    m_gps: u32,
    u_gps: u32,
    m_all: f64,
}

pub fn read_panel_csv<R: Read>(reader: R, grid: HourGrid) -> Result<PanelTable> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut table = PanelTable {
        tract_ids: Vec::new(),
        m_gps: Vec::new(),
        u_gps: Vec::new(),
        m_all: Vec::new(),
    };
    let mut index: HashMap<String, usize> = HashMap::new();
    for rec in rdr.deserialize() {
        let row: PanelRow = rec?;
        let h = grid.parse_hour(&row.hour_iso8601)?;
        let k = *index.entry(row.tract_id.clone()).or_insert_with(|| {
            table.tract_ids.push(row.tract_id.clone());
            table.m_gps.push(vec![0; grid.n_hours]);
            table.u_gps.push(vec![0; grid.n_hours]);
            table.m_all.push(vec![0.0; grid.n_hours]);
            table.tract_ids.len() - 1
        });
        table.m_gps[k][h] = row.m_gps;
        table.u_gps[k][h] = row.u_gps;
        table.m_all[k][h] = row.m_all;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::LatLon;
    use crate::time::parse_date;

    fn grid(days: usize) -> HourGrid {
        HourGrid::from_days(parse_date("2019-10-16").unwrap(), days)
    }

    fn trip(tract: &str, minute: i64) -> Trip {
        Trip {
            device_id: "d".into(),
            origin: LatLon::new(0.0, 0.0),
            destination: LatLon::new(0.0, 0.0),
            depart_t: minute,
            arrive_t: minute + 10,
            origin_tract: Some(tract.into()),
            dest_tract: None,
        }
    }

    fn activity(device: &str, t0: i64, t1: i64) -> ActivityLocation {
        ActivityLocation {
            device_id: device.into(),
            centroid: LatLon::new(0.0, 0.0),
            t_start: t0,
            t_end: t1,
            n_points: 3,
        }
    }

    #[test]
    fn trips_counted_by_departure_hour() {
        let g = grid(1);
        let ids = vec!["k".to_string()];
        let (m, _) = count_hourly(&[], &[], &ids, g);
        assert!(m[0].iter().all(|&x| x == 0));
        let s = g.start_minute;
        let trips = [
            trip("k", s + 9 * 60 + 5),
            trip("k", s + 9 * 60 + 50),
            trip("elsewhere", s),
        ];
        let (m, _) = count_hourly(&trips, &[], &ids, g);
        assert_eq!(m[0][9], 2);
        assert_eq!(m[0].iter().sum::<u32>(), 2);
    }

    #[test]
    fn active_users_match_minute_sweep() {
        let g = grid(1);
        let ids = vec!["k".to_string()];
        let s = g.start_minute;
        let acts = vec![
            (activity("a", s + 8 * 60 + 50, s + 10 * 60 + 10), Some("k".to_string())),
            // same device again inside hour 9 must not double count
            (activity("a", s + 9 * 60 + 20, s + 9 * 60 + 30), Some("k".to_string())),
            (activity("b", s + 10 * 60, s + 10 * 60 + 5), Some("k".to_string())),
        ];
        let (_, u) = count_hourly(&[], &acts, &ids, g);
        let mut brute = vec![HashSet::new(); 24];
        for (a, _) in &acts {
            for minute in a.t_start..=a.t_end {
                if let Some(h) = g.hour_of(minute) {
                    brute[h].insert(a.device_id.clone());
                }
            }
        }
        for h in 0..24 {
            assert_eq!(u[0][h] as usize, brute[h].len(), "hour {h}");
        }
        assert_eq!((u[0][8], u[0][9], u[0][10]), (1, 1, 2));
    }

    #[test]
    fn baseline_averages_over_workdays() {
        let mut row = vec![0u32; 72];
        for h in 0..24 {
            row[h] = 2; // 48 on day 0
            row[24 + h] = 1; // 24 on day 1
        }
        let b = baseline_active_users(&[row.clone()], &[0, 1]).unwrap();
        assert_eq!(b, vec![36.0]);
        let ones = vec![vec![1u32; 24]];
        assert_eq!(baseline_active_users(&ones, &[0]).unwrap(), vec![24.0]);
        assert_eq!(baseline_active_users(&[vec![0; 24]], &[0]).unwrap(), vec![0.0]);
        assert!(baseline_active_users(&[row.clone()], &[]).is_err());
        assert!(baseline_active_users(&[row], &[3]).is_err());
    }

    #[test]
    fn scaling_examples() {
        assert_eq!(trip_rate(18, 36.0), 0.5);
        let m = scale_demand(&[vec![18, 0, 7]], &[36.0], &[1000]).unwrap();
        assert_eq!(m[0][0], 500.0);
        assert_eq!(m[0][1], 0.0);
        // baseline equal to population is the identity
        let m = scale_demand(&[vec![3, 5]], &[250.0], &[250]).unwrap();
        assert_eq!(m[0], vec![3.0, 5.0]);
        assert!(scale_demand(&[vec![1]], &[0.0], &[10]).is_err());
    }

    #[test]
    fn zero_baseline_tracts_dropped() {
        let g = grid(1);
        let ids = vec!["a".to_string(), "b".to_string()];
        let m = vec![vec![1; 24], vec![1; 24]];
        let u = vec![vec![2; 24], vec![0; 24]];
        let (panel, dropped) = DemandPanel::build(&ids, &[100, 100], g, m, u, &[0]).unwrap();
        assert_eq!(panel.tract_ids, vec!["a".to_string()]);
        assert_eq!(dropped, vec!["b".to_string()]);
        assert_eq!(panel.u_baseline, vec![48.0]);

        let mut buf = Vec::new();
        panel.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("tract_id,hour_iso8601,m_gps,u_gps,m_all\na,2019-10-16T00:00:00Z,1,2,"));
        let table = read_panel_csv(buf.as_slice(), g).unwrap();
        assert_eq!(table.m_all, panel.m_all);
        assert_eq!(table.u_gps, panel.u_gps);
    }
}
