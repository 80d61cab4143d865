//! Per-device simulation: stays, departures by thinning, evacuation
//! responses and the pings that reveal them.

use rand::distributions::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use super::Layout;
use crate::geo::{haversine_m, LatLon, EARTH_RADIUS_M};
use crate::time::HOURS_PER_DAY;
use crate::trip::GpsPing;

/// A planted stationary period. `t_start..=t_end` are the first and last
/// ping minutes; a stay that `departs` ends with a trip at `t_end`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlantedStay {
    pub location: LatLon,
    /// Grid index of the containing tract, `None` off the study area.
    pub tract: Option<usize>,
    pub t_start: i64,
    pub t_end: i64,
    pub departs: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DevicePlan {
    pub device_id: String,
    pub home_tract: usize,
    pub evacuated: bool,
    pub stays: Vec<PlantedStay>,
}

impl DevicePlan {
    pub fn n_trips(&self) -> usize {
        self.stays.iter().filter(|s| s.departs).count()
    }
}

/// Noise-free pings for one stay: at arrival, every `interval_min`, and at
/// `t_end`.
pub fn stay_pings(device_id: &str, stay: &PlantedStay, interval_min: i64, accuracy_m: f64) -> Vec<GpsPing> {
    let mut times: Vec<i64> = (stay.t_start..stay.t_end)
        .step_by(interval_min.max(1) as usize)
        .collect();
    times.push(stay.t_end);
    times
        .into_iter()
        .map(|t| GpsPing::new(device_id, t, stay.location.lat, stay.location.lon, accuracy_m))
        .collect()
}

#[derive(Clone, Copy, PartialEq)]
enum Anchor {
    Home,
    Place(usize),
    Other,
}

fn offset_m<R: Rng>(p: LatLon, radius_m: f64, rng: &mut R) -> LatLon {
    let r = radius_m * rng.gen::<f64>().sqrt();
    let th = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
    let dlat = (r * th.sin() / EARTH_RADIUS_M).to_degrees();
    let dlon = (r * th.cos() / (EARTH_RADIUS_M * p.lat.to_radians().cos())).to_degrees();
    LatLon::new(p.lat + dlat, p.lon + dlon)
}

struct Sim<'a, 'b> {
    layout: &'a Layout<'b>,
    rng: ChaCha8Rng,
}

impl Sim<'_, '_> {
    fn offgrid(&mut self) -> LatLon {
        let c = self.layout.config;
        LatLon::new(
            c.origin_lat - 0.4 - 0.1 * self.rng.gen::<f64>(),
            c.origin_lon - 0.4 - 0.1 * self.rng.gen::<f64>(),
        )
    }

    fn open_at(&self, k: usize, minute: i64) -> bool {
        self.layout.ordered_at[k].is_none_or(|o| o > minute)
    }

    /// A fresh point in one of `tracts`, far enough from `from`.
    fn point_in(&mut self, tracts: &[usize], from: LatLon) -> Option<LatLon> {
        if tracts.is_empty() {
            return None;
        }
        let min_move = self.layout.config.min_move_m;
        for _ in 0..100 {
            let k = tracts[self.rng.gen_range(0..tracts.len())];
            let p = self.layout.interior_point(k, &mut self.rng);
            if haversine_m(p, from) >= min_move {
                return Some(p);
            }
        }
        None
    }

    fn departure(&mut self, at: LatLon, earliest: i64, latest: i64, lam_max: f64) -> Option<(i64, bool)> {
        let layout = self.layout;
        let tract = layout.tract_of(at)?;
        let mut t = earliest as f64;
        loop {
            let step: f64 = Exp1.sample(&mut self.rng);
            t += 60.0 * step / lam_max;
            if t >= latest as f64 {
                return None;
            }
            let m = t.floor() as i64;
            let hour = layout.grid.hour_of(m)?;
            let responding = layout.response[tract].is_some_and(|(a, b)| m >= a && m < b);
            let rate = layout.config.hazard(
                hour % HOURS_PER_DAY,
                layout.grid.is_weekend(hour),
                layout.weather_factor[hour],
                responding,
            );
            if self.rng.gen::<f64>() * lam_max < rate {
                return Some((m, responding));
            }
        }
    }
}

/// Simulates device `index` from its own random stream and returns its plan
/// with the emitted pings (noise included) in time order.
pub(crate) fn simulate_device(layout: &Layout<'_>, populations: &[f64], index: usize) -> (DevicePlan, Vec<GpsPing>) {
    let cfg = layout.config;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);
    let mut sim = Sim { layout, rng };
    let device_id = format!("dev{index:05}");
    let n_tracts = layout.tracts.len();

    let home_tract = WeightedIndex::new(populations)
        .expect("positive populations")
        .sample(&mut sim.rng);
    let mut home = layout.interior_point(home_tract, &mut sim.rng);
    let all: Vec<usize> = (0..n_tracts).collect();
    let places: Vec<LatLon> = (0..cfg.places_per_device)
        .map(|_| sim.point_in(&all, home).unwrap_or_else(|| sim.offgrid()))
        .collect();

    let start = layout.grid.start_minute;
    let end = layout.end_minute();
    let latest = end - 1 - cfg.travel_max_min - cfg.min_stay_min;
    let peak = cfg.hourly_profile.iter().cloned().fold(0.0, f64::max);
    let lam_max = peak * cfg.evac_multiplier.max(1.0) * cfg.weekend_factor.max(1.0);

    let mut stays = Vec::new();
    let mut evacuated = false;
    let mut at = home;
    let mut anchor = Anchor::Home;
    let mut t_arr = start;
    loop {
        let tract = layout.tract_of(at);
        let Some((dep, responding)) = sim.departure(at, t_arr + cfg.min_stay_min, latest, lam_max) else {
            stays.push(PlantedStay {
                location: at,
                tract,
                t_start: t_arr,
                t_end: end - 1,
                departs: false,
            });
            break;
        };
        stays.push(PlantedStay {
            location: at,
            tract,
            t_start: t_arr,
            t_end: dep,
            departs: true,
        });

        let (next, next_anchor) = if responding && sim.rng.gen::<f64>() < cfg.evacuation_probability {
            evacuated = true;
            let safe: Vec<usize> = (0..n_tracts)
                .filter(|&k| Some(k) != tract && sim.open_at(k, dep))
                .collect();
            let shelter = if sim.rng.gen::<f64>() < cfg.offgrid_share {
                None
            } else {
                sim.point_in(&safe, at)
            };
            match shelter {
                Some(p) => {
                    home = p;
                    (p, Anchor::Home)
                }
                None => (sim.offgrid(), Anchor::Other),
            }
        } else {
            let usable = |p: LatLon, sim: &Sim| {
                haversine_m(p, at) >= cfg.min_move_m && layout.tract_of(p).is_none_or(|k| sim.open_at(k, dep))
            };
            let home_ok = anchor != Anchor::Home && usable(home, &sim);
            let other: Vec<usize> = (0..places.len())
                .filter(|&i| anchor != Anchor::Place(i) && usable(places[i], &sim))
                .collect();
            let go_home = home_ok && (anchor == Anchor::Other || other.is_empty() || sim.rng.gen::<f64>() < 0.6);
            if anchor != Anchor::Home && go_home {
                (home, Anchor::Home)
            } else if !other.is_empty() {
                let i = other[sim.rng.gen_range(0..other.len())];
                (places[i], Anchor::Place(i))
            } else {
                let open: Vec<usize> = (0..n_tracts).filter(|&k| sim.open_at(k, dep)).collect();
                match sim.point_in(&open, at) {
                    Some(p) => (p, Anchor::Other),
                    None => (sim.offgrid(), Anchor::Other),
                }
            }
        };
        let travel = sim.rng.gen_range(cfg.travel_min_min..=cfg.travel_max_min);
        t_arr = dep + travel;
        at = next;
        anchor = next_anchor;
    }

    let grid_span = cfg.cell_deg * cfg.grid_side as f64;
    let mut pings = Vec::new();
    for stay in &stays {
        for mut p in stay_pings(&device_id, stay, cfg.ping_interval_min, 0.0) {
            p.accuracy_m = sim.rng.gen_range(5.0..60.0);
            if cfg.jitter_m > 0.0 {
                let q = offset_m(p.position(), cfg.jitter_m, &mut sim.rng);
                (p.lat, p.lon) = (q.lat, q.lon);
            }
            let t = p.t;
            let duplicate = sim.rng.gen::<f64>() < cfg.duplicate_rate;
            let decoy = sim.rng.gen::<f64>() < cfg.decoy_rate;
            pings.push(p);
            if duplicate {
                pings.push(pings.last().expect("just pushed").clone());
            }
            if decoy {
                let lat = cfg.origin_lat + grid_span * sim.rng.gen::<f64>();
                let lon = cfg.origin_lon + grid_span * sim.rng.gen::<f64>();
                let acc = sim.rng.gen_range(300.0..2000.0);
                pings.push(GpsPing::new(device_id.as_str(), t, lat, lon, acc));
            }
        }
    }
    (
        DevicePlan {
            device_id,
            home_tract,
            evacuated,
            stays,
        },
        pings,
    )
}
