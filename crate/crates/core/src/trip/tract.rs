use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{latlon_in_ring, LatLon};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TractGeometry {
    pub id: String,
    pub population: u64,
    /// Closed ring of `[lat, lon]` vertices.
    #[serde(with = "ring_serde")]
    pub ring: Vec<LatLon>,
}

mod ring_serde {
    use super::LatLon;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(ring: &[LatLon], s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = ring.iter().map(|p| [p.lat, p.lon]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<LatLon>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|[lat, lon]| LatLon::new(lat, lon)).collect())
    }
}

impl TractGeometry {
    /// Closes the ring if needed and rejects degenerate polygons.
    pub fn new(id: impl Into<String>, population: u64, mut ring: Vec<LatLon>) -> Result<Self> {
        let id = id.into();
        if let (Some(&first), Some(&last)) = (ring.first(), ring.last()) {
            if first != last {
                ring.push(first);
            }
        }
        let mut distinct: Vec<(u64, u64)> = ring.iter().map(|p| (p.lat.to_bits(), p.lon.to_bits())).collect();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 3 {
            return Err(Error::DegeneratePolygon(id));
        }
        if let Some(p) = ring.iter().find(|p| !p.is_valid()) {
            return Err(Error::invalid(format!("tract {id} has invalid vertex {p:?}")));
        }
        if population == 0 {
            return Err(Error::invalid(format!("tract {id} has zero population")));
        }
        Ok(Self { id, population, ring })
    }

    pub fn contains(&self, p: LatLon) -> bool {
        latlon_in_ring(p, &self.ring)
    }

    pub fn centroid(&self) -> LatLon {
        let n = (self.ring.len() - 1) as f64;
        let (slat, slon) = self.ring[..self.ring.len() - 1]
            .iter()
            .fold((0.0, 0.0), |(a, b), p| (a + p.lat, b + p.lon));
        LatLon::new(slat / n, slon / n)
    }
}

/// Tracts ordered by id, with bounding boxes for fast rejection.
#[derive(Debug, Clone)]
pub struct TractIndex {
    tracts: Vec<TractGeometry>,
    bboxes: Vec<[f64; 4]>,
}

impl TractIndex {
    pub fn new(mut tracts: Vec<TractGeometry>) -> Result<Self> {
        tracts.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = tracts.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::invalid(format!("duplicate tract id {}", w[0].id)));
        }
        let bboxes = tracts
            .iter()
            .map(|t| {
                t.ring.iter().fold(
                    [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY],
                    |b, p| [b[0].min(p.lat), b[1].max(p.lat), b[2].min(p.lon), b[3].max(p.lon)],
                )
            })
            .collect();
        Ok(Self { tracts, bboxes })
    }

    pub fn tracts(&self) -> &[TractGeometry] {
        &self.tracts
    }

    pub fn ids(&self) -> Vec<String> {
        self.tracts.iter().map(|t| t.id.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&TractGeometry> {
        self.tracts
            .binary_search_by(|t| t.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.tracts[i])
    }

    /// Position of `id` in id order.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.tracts.binary_search_by(|t| t.id.as_str().cmp(id)).ok()
    }

    /// The containing tract; on shared edges the smallest id wins.
    pub fn assign(&self, p: LatLon) -> Option<&str> {
        self.tracts
            .iter()
            .zip(&self.bboxes)
            .filter(|(_, b)| p.lat >= b[0] && p.lat <= b[1] && p.lon >= b[2] && p.lon <= b[3])
            .find(|(t, _)| t.contains(p))
            .map(|(t, _)| t.id.as_str())
    }

    pub fn len(&self) -> usize {
        self.tracts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracts.is_empty()
    }
}

pub fn assign_tract(point: LatLon, tracts: &TractIndex) -> Option<&str> {
    tracts.assign(point)
}

#[derive(Debug, Serialize, Deserialize)]
struct TractsDoc {
    tracts: Vec<TractGeometry>,
}

pub fn parse_tracts_json(text: &str) -> Result<TractIndex> {
    let doc: TractsDoc = serde_json::from_str(text)?;
    let tracts = doc
        .tracts
        .into_iter()
        .map(|t| TractGeometry::new(t.id, t.population, t.ring))
        .collect::<Result<Vec<_>>>()?;
    TractIndex::new(tracts)
}

pub fn read_tracts_file(path: &Path) -> Result<TractIndex> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tracts_json(&text).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn tracts_to_json(tracts: &[TractGeometry]) -> Result<String> {
    Ok(serde_json::to_string_pretty(&TractsDoc {
        tracts: tracts.to_vec(),
    })?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(id: &str, lat0: f64, lon0: f64) -> TractGeometry {
        TractGeometry::new(
            id,
            100,
            vec![
                LatLon::new(lat0, lon0),
                LatLon::new(lat0, lon0 + 1.0),
                LatLon::new(lat0 + 1.0, lon0 + 1.0),
                LatLon::new(lat0 + 1.0, lon0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn interior_exterior_and_shared_edge() {
        let idx = TractIndex::new(vec![square("06097B", 0.0, 1.0), square("06097A", 0.0, 0.0)]).unwrap();
        assert_eq!(idx.assign(LatLon::new(0.5, 0.5)), Some("06097A"));
        assert_eq!(idx.assign(LatLon::new(0.5, 1.5)), Some("06097B"));
        assert_eq!(idx.assign(LatLon::new(5.0, 5.0)), None);
        // lon = 1.0 is the shared edge; both polygons contain it
        let edge = LatLon::new(0.5, 1.0);
        assert!(idx.get("06097A").unwrap().contains(edge));
        assert!(idx.get("06097B").unwrap().contains(edge));
        assert_eq!(assign_tract(edge, &idx), Some("06097A"));
    }

    #[test]
    fn ring_closed_and_degenerate_rejected() {
        let t = square("x", 0.0, 0.0);
        assert_eq!(t.ring.first(), t.ring.last());
        assert_eq!(t.ring.len(), 5);
        let bad = TractGeometry::new(
            "bad",
            10,
            vec![LatLon::new(0.0, 0.0), LatLon::new(1.0, 1.0), LatLon::new(0.0, 0.0)],
        );
        assert!(matches!(bad, Err(Error::DegeneratePolygon(_))));
    }

    #[test]
    fn json_round_trip() {
        let tracts = vec![square("a", 0.0, 0.0), square("b", 0.0, 1.0)];
        let text = tracts_to_json(&tracts).unwrap();
        let idx = parse_tracts_json(&text).unwrap();
        assert_eq!(idx.tracts(), &tracts[..]);
        let degenerate = r#"{"tracts":[{"id":"z","population":5,"ring":[[0,0],[0,0],[0,0]]}]}"#;
        assert!(parse_tracts_json(degenerate).is_err());
    }
}
