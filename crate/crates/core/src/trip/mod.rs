//! From raw GPS pings to hourly tract-level demand.

mod cluster;
mod demand;
mod ping;
mod tract;

pub use cluster::{cluster_trace, derive_trips, ActivityLocation, Trip, DEFAULT_MIN_STAY_MIN, DEFAULT_RADIUS_M};
pub use demand::{
    baseline_active_users, count_hourly, read_panel_csv, scale_demand, trip_rate, DemandPanel, PanelTable,
};
pub use ping::{filter_pings, group_by_device, read_pings, read_pings_file, write_pings, GpsPing, PING_HEADER};
pub use tract::{assign_tract, parse_tracts_json, read_tracts_file, tracts_to_json, TractGeometry, TractIndex};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec::Exec;
use crate::time::HourGrid;

pub const DEFAULT_MAX_ERROR_M: f64 = 250.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceParams {
    pub radius_m: f64,
    pub min_stay_min: i64,
    pub max_error_m: f64,
}

impl Default for InferenceParams {
    fn default() -> Self {
        Self {
            radius_m: DEFAULT_RADIUS_M,
            min_stay_min: DEFAULT_MIN_STAY_MIN,
            max_error_m: DEFAULT_MAX_ERROR_M,
        }
    }
}

/// Everything trip inference produces for one ping set.
#[derive(Debug, Clone)]
pub struct TripInference {
    pub activities: Vec<(ActivityLocation, Option<String>)>,
    pub trips: Vec<Trip>,
    pub panel: DemandPanel,
    pub dropped_tracts: Vec<String>,
}

impl TripInference {
    pub fn n_assigned_trips(&self) -> usize {
        self.trips.iter().filter(|t| t.origin_tract.is_some()).count()
    }
}

/// Filter, cluster per device, link trips, assign tracts and count.
/// Devices are processed independently and merged in device-id order.
pub fn infer_demand(
    pings: &[GpsPing],
    tracts: &TractIndex,
    grid: HourGrid,
    workdays: &[usize],
    params: InferenceParams,
    exec: Exec,
) -> Result<TripInference> {
    let clean = filter_pings(pings, params.max_error_m);
    let traces = group_by_device(clean);
    let per_device = exec.try_map(&traces, |(_, trace)| {
        let acts = cluster_trace(trace, params.radius_m, params.min_stay_min)?;
        let mut trips = derive_trips(&acts);
        for t in &mut trips {
            t.origin_tract = tracts.assign(t.origin).map(str::to_string);
            t.dest_tract = tracts.assign(t.destination).map(str::to_string);
        }
        let acts: Vec<_> = acts
            .into_iter()
            .map(|a| {
                let tract = tracts.assign(a.centroid).map(str::to_string);
                (a, tract)
            })
            .collect();
        Ok::<_, crate::Error>((acts, trips))
    })?;

    let mut activities = Vec::new();
    let mut trips = Vec::new();
    for (a, t) in per_device {
        activities.extend(a);
        trips.extend(t);
    }
    let ids = tracts.ids();
    let population: Vec<u64> = tracts.tracts().iter().map(|t| t.population).collect();
    let (m, u) = count_hourly(&trips, &activities, &ids, grid);
    let (panel, dropped_tracts) = DemandPanel::build(&ids, &population, grid, m, u, workdays)?;
    Ok(TripInference {
        activities,
        trips,
        panel,
        dropped_tracts,
    })
}
