use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::LatLon;

/// One location signal from a device. `t` is epoch minutes, floored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpsPing {
    pub device_id: String,
    #[serde(rename = "timestamp_epoch_min")]
    pub t: i64,
    pub lat: f64,
    pub lon: f64,
    pub accuracy_m: f64,
}

impl GpsPing {
    pub fn new(device_id: impl Into<String>, t: i64, lat: f64, lon: f64, accuracy_m: f64) -> Self {
        Self {
            device_id: device_id.into(),
            t,
            lat,
            lon,
            accuracy_m,
        }
    }

    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.accuracy_m >= 0.0) {
            return Err(Error::invalid(format!(
                "ping from {} at t={} has negative or NaN accuracy {}",
                self.device_id, self.t, self.accuracy_m
            )));
        }
        if !self.position().is_valid() {
            return Err(Error::invalid(format!(
                "ping from {} at t={} has coordinates out of range ({}, {})",
                self.device_id, self.t, self.lat, self.lon
            )));
        }
        Ok(())
    }
}

/// Drops pings less accurate than `max_error_m` and exact duplicates of
/// (device, time, lat, lon), keeping the first occurrence and input order.
pub fn filter_pings(pings: &[GpsPing], max_error_m: f64) -> Vec<GpsPing> {
    let mut seen: HashSet<(&str, i64, u64, u64)> = HashSet::with_capacity(pings.len());
    pings
        .iter()
        .filter(|p| p.accuracy_m <= max_error_m)
        .filter(|p| seen.insert((p.device_id.as_str(), p.t, p.lat.to_bits(), p.lon.to_bits())))
        .cloned()
        .collect()
}

/// Groups pings by device id (sorted) and sorts each trace by time. The sort
/// is stable so equal timestamps keep their input order.
pub fn group_by_device(pings: Vec<GpsPing>) -> Vec<(String, Vec<GpsPing>)> {
    let mut map: std::collections::BTreeMap<String, Vec<GpsPing>> = Default::default();
    for p in pings {
        map.entry(p.device_id.clone()).or_default().push(p);
    }
    map.into_iter()
        .map(|(id, mut trace)| {
            trace.sort_by_key(|p| p.t);
            (id, trace)
        })
        .collect()
}

pub const PING_HEADER: [&str; 5] = ["device_id", "timestamp_epoch_min", "lat", "lon", "accuracy_m"];

pub fn read_pings<R: Read>(reader: R) -> Result<Vec<GpsPing>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(PING_HEADER.iter().copied()) {
        return Err(Error::invalid(format!(
            "ping header must be {}, got {}",
            PING_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let p: GpsPing = rec?;
        p.validate()?;
        out.push(p);
    }
    Ok(out)
}

pub fn read_pings_file(path: &Path) -> Result<Vec<GpsPing>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_pings(std::io::BufReader::new(f)).map_err(|e| match e {
        Error::Io { .. } => e,
        other => Error::parse(path, other.to_string()),
    })
}

pub fn write_pings<W: Write>(writer: W, pings: &[GpsPing]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(writer);
    for p in pings {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io("<pings>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_by_accuracy_keeps_order() {
        let pings = vec![
            GpsPing::new("a", 0, 1.0, 1.0, 100.0),
            GpsPing::new("a", 1, 1.0, 1.0, 250.0),
            GpsPing::new("a", 2, 1.0, 1.0, 300.0),
        ];
        let kept = filter_pings(&pings, 250.0);
        assert_eq!(kept, pings[..2].to_vec());
        assert!(filter_pings(&[], 250.0).is_empty());
    }

    #[test]
    fn identical_pings_deduplicated() {
        let p = GpsPing::new("a", 5, 38.5, -122.7, 10.0);
        let q = GpsPing::new("a", 5, 38.5, -122.7, 20.0);
        let kept = filter_pings(&[p.clone(), p.clone(), q], 250.0);
        // the accuracy field is not part of the duplicate key
        assert_eq!(kept, vec![p]);
    }

    #[test]
    fn dedup_matches_brute_force_scan() {
        let pings: Vec<GpsPing> = (0..60)
            .map(|i| GpsPing::new(format!("d{}", i % 3), (i % 7) as i64, (i % 2) as f64, 0.0, 1.0))
            .collect();
        let kept = filter_pings(&pings, 250.0);
        let mut brute: Vec<GpsPing> = Vec::new();
        for p in &pings {
            let dup = brute
                .iter()
                .any(|q| q.device_id == p.device_id && q.t == p.t && q.lat == p.lat && q.lon == p.lon);
            if !dup {
                brute.push(p.clone());
            }
        }
        assert_eq!(kept, brute);
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let pings = vec![GpsPing::new("dev-1", 1_000, 38.25, -122.5, 12.5)];
        let mut buf = Vec::new();
        write_pings(&mut buf, &pings).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("device_id,timestamp_epoch_min,lat,lon,accuracy_m\n"));
        assert_eq!(read_pings(buf.as_slice()).unwrap(), pings);

        let bad = "device_id,timestamp_epoch_min,lat,lon,accuracy_m\nx,1,95.0,0.0,1.0\n";
        assert!(read_pings(bad.as_bytes()).is_err());
        let neg = "device_id,timestamp_epoch_min,lat,lon,accuracy_m\nx,1,5.0,0.0,-1.0\n";
        assert!(read_pings(neg.as_bytes()).is_err());
    }
}
