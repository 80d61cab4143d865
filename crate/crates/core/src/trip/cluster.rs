//! Incremental stay-point clustering and trip derivation.

use serde::{Deserialize, Serialize};

use super::ping::GpsPing;
use crate::error::{Error, Result};
use crate::geo::{haversine_m, LatLon};

/// Default cluster radius in meters.
pub const DEFAULT_RADIUS_M: f64 = 500.0;
/// Default minimum stay duration in minutes.
pub const DEFAULT_MIN_STAY_MIN: i64 = 5;

/// An inferred stay: a closed cluster lasting at least the duration threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityLocation {
    pub device_id: String,
    pub centroid: LatLon,
    pub t_start: i64,
    pub t_end: i64,
    pub n_points: usize,
}

impl ActivityLocation {
    pub fn duration_min(&self) -> i64 {
        self.t_end - self.t_start
    }
}

#[derive(Debug)]
struct OpenCluster {
    sum_lat: f64,
    sum_lon: f64,
    n: usize,
    centroid: LatLon,
    t_first: i64,
    t_last: i64,
}

impl OpenCluster {
    fn start(p: &GpsPing) -> Self {
        Self {
            sum_lat: p.lat,
            sum_lon: p.lon,
            n: 1,
            centroid: p.position(),
            t_first: p.t,
            t_last: p.t,
        }
    }

    fn push(&mut self, p: &GpsPing) {
        self.sum_lat += p.lat;
        self.sum_lon += p.lon;
        self.n += 1;
        self.centroid = LatLon::new(self.sum_lat / self.n as f64, self.sum_lon / self.n as f64);
        self.t_last = p.t;
    }

    fn close(self, device_id: &str, min_stay_min: i64) -> Option<ActivityLocation> {
        (self.t_last - self.t_first >= min_stay_min).then(|| ActivityLocation {
            device_id: device_id.to_string(),
            centroid: self.centroid,
            t_start: self.t_first,
            t_end: self.t_last,
            n_points: self.n,
        })
    }
}

/// Clusters one device's time-sorted trace.
///
/// Each ping is compared only against the currently open cluster; a ping
/// closer than `radius_m` to its centroid joins it and the centroid becomes
/// the mean member position, otherwise the cluster is closed and a new one
/// opens at the ping. Closed clusters spanning at least `min_stay_min`
/// minutes are returned in time order.
pub fn cluster_trace(pings: &[GpsPing], radius_m: f64, min_stay_min: i64) -> Result<Vec<ActivityLocation>> {
    let Some(first) = pings.first() else {
        return Ok(Vec::new());
    };
    let device = first.device_id.as_str();
    for w in pings.windows(2) {
        if w[1].device_id != device {
            return Err(Error::invalid(format!(
                "trace mixes devices {device} and {}",
                w[1].device_id
            )));
        }
        if w[1].t < w[0].t {
            return Err(Error::UnsortedTrace {
                device: device.to_string(),
                prev: w[0].t,
                next: w[1].t,
            });
        }
    }

    let mut out = Vec::new();
    let mut open = OpenCluster::start(first);
    for p in &pings[1..] {
        if haversine_m(p.position(), open.centroid) < radius_m {
            open.push(p);
        } else {
            let closed = std::mem::replace(&mut open, OpenCluster::start(p));
            out.extend(closed.close(device, min_stay_min));
        }
    }
    out.extend(open.close(device, min_stay_min));
    Ok(out)
}

/// A move between two time-adjacent activities of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub device_id: String,
    pub origin: LatLon,
    pub destination: LatLon,
    pub depart_t: i64,
    pub arrive_t: i64,
    pub origin_tract: Option<String>,
    pub dest_tract: Option<String>,
}

/// One trip per consecutive pair of activities. Tracts are left unassigned.
pub fn derive_trips(activities: &[ActivityLocation]) -> Vec<Trip> {
    activities
        .windows(2)
        .map(|w| Trip {
            device_id: w[0].device_id.clone(),
            origin: w[0].centroid,
            destination: w[1].centroid,
            depart_t: w[0].t_end,
            arrive_t: w[1].t_start,
            origin_tract: None,
            dest_tract: None,
        })
        .collect()
}
