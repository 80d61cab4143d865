//! Geodesic and planar geometry helpers.

use serde::{Deserialize, Serialize};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Geographic coordinate in degrees (WGS84).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }
}

/// Great-circle distance in meters.
pub fn haversine_m(a: LatLon, b: LatLon) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Planar point, used after projecting coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Equirectangular projection to kilometers around a reference latitude.
#[derive(Debug, Clone, Copy)]
pub struct LocalProjection {
    cos_lat0: f64,
}

impl LocalProjection {
    pub fn new(reference_lat: f64) -> Self {
        Self {
            cos_lat0: reference_lat.to_radians().cos(),
        }
    }

    pub fn project(&self, p: LatLon) -> Point2 {
        let r_km = EARTH_RADIUS_M / 1000.0;
        Point2::new(r_km * p.lon.to_radians() * self.cos_lat0, r_km * p.lat.to_radians())
    }

    pub fn project_ring(&self, ring: &[LatLon]) -> Vec<Point2> {
        ring.iter().map(|&p| self.project(p)).collect()
    }
}

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

const EDGE_EPS: f64 = 1e-12;

fn on_segment(p: Point2, a: Point2, b: Point2) -> bool {
    let scale = (b.x - a.x).abs().max((b.y - a.y).abs()).max(1.0);
    cross(a, b, p).abs() <= EDGE_EPS * scale * scale
        && p.x >= a.x.min(b.x) - EDGE_EPS
        && p.x <= a.x.max(b.x) + EDGE_EPS
        && p.y >= a.y.min(b.y) - EDGE_EPS
        && p.y <= a.y.max(b.y) + EDGE_EPS
}

/// Ray-casting containment for a closed ring. Points on an edge count as inside.
pub fn point_in_ring(p: Point2, ring: &[Point2]) -> bool {
    let n = ring.len();
    if n < 3 {
        return false;
    }
    for w in ring.windows(2) {
        if on_segment(p, w[0], w[1]) {
            return true;
        }
    }
    if ring[0] != ring[n - 1] && on_segment(p, ring[n - 1], ring[0]) {
        return true;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Lat/lon containment, treating (lon, lat) as planar (x, y).
pub fn latlon_in_ring(p: LatLon, ring: &[LatLon]) -> bool {
    let planar: Vec<Point2> = ring.iter().map(|q| Point2::new(q.lon, q.lat)).collect();
    point_in_ring(Point2::new(p.lon, p.lat), &planar)
}

fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.x + t * dx, a.y + t * dy);
    ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt()
}

fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b)
}

/// Minimum segment-to-segment distance between two polylines.
pub fn polyline_distance(p: &[Point2], q: &[Point2]) -> f64 {
    let mut best = f64::INFINITY;
    for s in p.windows(2) {
        for t in q.windows(2) {
            if segments_intersect(s[0], s[1], t[0], t[1]) {
                return 0.0;
            }
            best = best
                .min(point_segment_distance(s[0], t[0], t[1]))
                .min(point_segment_distance(s[1], t[0], t[1]))
                .min(point_segment_distance(t[0], s[0], s[1]))
                .min(point_segment_distance(t[1], s[0], s[1]));
        }
    }
    best
}

/// Distance between two closed planar rings; zero when they overlap or one
/// contains the other.
pub fn ring_distance(a: &[Point2], b: &[Point2]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    if point_in_ring(a[0], b) || point_in_ring(b[0], a) {
        return 0.0;
    }
    polyline_distance(a, b)
}
