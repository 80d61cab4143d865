//! Environmental and demographic similarity graphs, their fusion, and the
//! symmetric normalized adjacency used by the graph convolution.

use std::io::{Read, Write};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::Matrix;

/// Default correlation threshold for both similarity graphs.
pub const DEFAULT_THRESHOLD: f64 = 0.9;

/// Static per-tract attributes, one row per tract.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatureTable {
    pub tract_ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl NodeFeatureTable {
    pub fn new(tract_ids: Vec<String>, feature_names: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != tract_ids.len() {
            return Err(Error::Dimension {
                context: "feature table rows",
                expected: tract_ids.len().to_string(),
                actual: values.len().to_string(),
            });
        }
        for (id, row) in tract_ids.iter().zip(&values) {
            if row.len() != feature_names.len() {
                return Err(Error::invalid(format!(
                    "tract {id} has {} values for {} features",
                    row.len(),
                    feature_names.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("feature row of tract {id}")));
            }
        }
        Ok(Self {
            tract_ids,
            feature_names,
            values,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.tract_ids.len()
    }

    /// Rows reordered (and filtered) to follow `ids`.
    pub fn select(&self, ids: &[String]) -> Result<Self> {
        let values = ids
            .iter()
            .map(|id| {
                self.tract_ids
                    .iter()
                    .position(|t| t == id)
                    .map(|k| self.values[k].clone())
                    .ok_or_else(|| Error::invalid(format!("tract {id} missing from feature table")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(ids.to_vec(), self.feature_names.clone(), values)
    }

    /// Column z-scores (population standard deviation). Constant columns
    /// become all zeros.
    pub fn standardized(&self) -> Vec<Vec<f64>> {
        let n = self.values.len() as f64;
        let m = self.feature_names.len();
        let mut out = self.values.clone();
        for j in 0..m {
            let mean = self.values.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = self.values.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            for row in &mut out {
                row[j] = if sd > 0.0 { (row[j] - mean) / sd } else { 0.0 };
            }
        }
        out
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("tract_id") {
            return Err(Error::invalid("feature table must start with a tract_id column"));
        }
        let feature_names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut ids = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            ids.push(rec[0].to_string());
            let row = rec
                .iter()
                .skip(1)
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::invalid(format!("bad feature value {s:?} for tract {}: {e}", &rec[0])))
                })
                .collect::<Result<Vec<_>>>()?;
            values.push(row);
        }
        Self::new(ids, feature_names, values)
    }

    pub fn read_csv_file(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f)).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["tract_id".to_string()];
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header)?;
        for (id, row) in self.tract_ids.iter().zip(&self.values) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<features>", e))?;
        Ok(())
    }
}

/// Sample Pearson correlation. Errors if either vector is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            context: "pearson",
            expected: x.len().to_string(),
            actual: y.len().to_string(),
        });
    }
    if x.len() < 2 {
        return Err(Error::invalid("pearson needs at least two observations"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance("pearson input is constant".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pairwise row correlations of the standardized table. Pairs involving a
/// constant row get similarity 0.
pub fn similarity_matrix(table: &NodeFeatureTable, exec: Exec) -> Result<Vec<Vec<f64>>> {
    let n = table.n_nodes();
    if n < 2 {
        return Err(Error::invalid("a similarity graph needs at least two nodes"));
    }
    let z = table.standardized();
    let rows = exec.map_range(n, |i| {
        let mut undefined = 0usize;
        let row: Vec<f64> = (0..n)
            .map(|j| {
                if i == j {
                    return 1.0;
                }
                match pearson(&z[i], &z[j]) {
                    Ok(s) => s,
                    Err(_) => {
                        undefined += 1;
                        0.0
                    }
                }
            })
            .collect();
        (row, undefined)
    });
    let mut out = Vec::with_capacity(n);
    for (i, (row, undefined)) in rows.into_iter().enumerate() {
        if undefined > 0 {
            log::warn!(
                "tract {} has a constant standardized feature row; {undefined} similarities set to 0",
                table.tract_ids[i]
            );
        }
        out.push(row);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Environmental,
    Demographic,
    Fused,
}

/// Binary undirected graph over tracts.
#[derive(Debug, Clone)]
pub struct SimilarityGraph {
    pub kind: GraphKind,
    pub threshold: f64,
    pub tract_ids: Vec<String>,
    pub adjacency: Vec<Vec<u8>>,
    normalized: OnceLock<Matrix>,
}

impl SimilarityGraph {
    pub fn from_adjacency(kind: GraphKind, threshold: f64, tract_ids: Vec<String>, adjacency: Vec<Vec<u8>>) -> Self {
        Self {
            kind,
            threshold,
            tract_ids,
            adjacency,
            normalized: OnceLock::new(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges().len()
    }

    /// Index pairs `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n_nodes();
        (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.adjacency[i][j] == 1)
            .collect()
    }

    /// `D̃^{-1/2} (A + I) D̃^{-1/2}`, computed on first use.
    pub fn normalized(&self) -> &Matrix {
        self.normalized.get_or_init(|| normalize_adjacency(&self.adjacency))
    }

    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        let e = |err| Error::io("<edges>", err);
        writeln!(w, "i,j").map_err(e)?;
        for (i, j) in self.edges() {
            writeln!(w, "{},{}", self.tract_ids[i], self.tract_ids[j]).map_err(e)?;
        }
        Ok(())
    }

    pub fn write_matrix<W: Write>(&self, mut w: W) -> Result<()> {
        for row in &self.adjacency {
            let line: Vec<String> = row.iter().map(u8::to_string).collect();
            writeln!(w, "{}", line.join(",")).map_err(|e| Error::io("<matrix>", e))?;
        }
        Ok(())
    }
}

fn threshold_graph(
    kind: GraphKind,
    threshold: f64,
    ids: Vec<String>,
    sim: impl Fn(usize, usize) -> f64,
) -> SimilarityGraph {
    let n = ids.len();
    let mut a = vec![vec![0u8; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if sim(i, j) > threshold {
                a[i][j] = 1;
                a[j][i] = 1;
            }
        }
    }
    SimilarityGraph::from_adjacency(kind, threshold, ids, a)
}

/// Links tracts whose standardized feature rows correlate above `threshold`.
pub fn build_similarity_graph(
    table: &NodeFeatureTable,
    threshold: f64,
    kind: GraphKind,
    exec: Exec,
) -> Result<SimilarityGraph> {
    let sim = similarity_matrix(table, exec)?;
    Ok(threshold_graph(kind, threshold, table.tract_ids.clone(), |i, j| {
        sim[i][j]
    }))
}

/// Links tracts whose two similarities sum above the summed thresholds. A
/// shortfall in one similarity can be made up by the other.
pub fn fuse_graphs(
    environmental: &NodeFeatureTable,
    demographic: &NodeFeatureTable,
    env_threshold: f64,
    demo_threshold: f64,
    exec: Exec,
) -> Result<SimilarityGraph> {
    if environmental.tract_ids != demographic.tract_ids {
        return Err(Error::invalid(
            "environmental and demographic tables list tracts in different orders",
        ));
    }
    let sf = similarity_matrix(environmental, exec)?;
    let sd = similarity_matrix(demographic, exec)?;
    Ok(fuse_similarities(
        &sf,
        &sd,
        env_threshold,
        demo_threshold,
        environmental.tract_ids.clone(),
    ))
}

pub fn fuse_similarities(
    sf: &[Vec<f64>],
    sd: &[Vec<f64>],
    env_threshold: f64,
    demo_threshold: f64,
    ids: Vec<String>,
) -> SimilarityGraph {
    threshold_graph(GraphKind::Fused, env_threshold + demo_threshold, ids, |i, j| {
        sf[i][j] + sd[i][j]
    })
}

/// `Â[i][j] = Ã[i][j] / sqrt(d_i d_j)` with `Ã = A + I` and `d` its row sums.
pub fn normalize_adjacency(adjacency: &[Vec<u8>]) -> Matrix {
    let n = adjacency.len();
    let degree: Vec<f64> = adjacency
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().enumerate().filter(|&(j, &a)| a == 1 && j != i).count() as f64 + 1.0)
        .collect();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let a = if i == j { 1.0 } else { f64::from(adjacency[i][j]) };
            if a != 0.0 {
                out[(i, j)] = a / (degree[i] * degree[j]).sqrt();
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::ZeroVariance(_))));
        assert!(pearson(&[1.0], &[1.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn normalization_hand_values() {
        assert_eq!(normalize_adjacency(&[vec![0]]), Matrix::from_rows(&[vec![1.0]]));
        let two = normalize_adjacency(&[vec![0, 1], vec![1, 0]]);
        assert_eq!(two, Matrix::filled(2, 2, 0.5));
        let path = normalize_adjacency(&[vec![0, 1, 0], vec![1, 0, 1], vec![0, 1, 0]]);
        assert_eq!(path[(0, 1)], 1.0 / 6f64.sqrt());
        assert_eq!(path[(1, 1)], 1.0 / 3.0);
        assert_eq!(path[(0, 2)], 0.0);
        assert_eq!(path[(0, 0)], 0.5);
    }

    #[test]
    fn fusion_compensates() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let sim = |s: f64| vec![vec![1.0, s], vec![s, 1.0]];
        let both = fuse_similarities(&sim(0.95), &sim(0.95), 0.9, 0.9, ids.clone());
        assert_eq!(both.adjacency[0][1], 1);
        let comp = fuse_similarities(&sim(0.99), &sim(0.85), 0.9, 0.9, ids.clone());
        assert_eq!(comp.adjacency[0][1], 1);
        let none = fuse_similarities(&sim(0.5), &sim(0.5), 0.9, 0.9, ids.clone());
        assert_eq!(none.adjacency[0][1], 0);
        // ties produce no edge
        let tie = fuse_similarities(&sim(0.9), &sim(0.9), 0.9, 0.9, ids);
        assert_eq!(tie.adjacency[0][1], 0);
    }

    #[test]
    fn equal_and_opposite_rows() {
        let ids: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let names: Vec<String> = ["f1", "f2", "f3"].iter().map(|s| s.to_string()).collect();
        let t = NodeFeatureTable::new(
            ids,
            names,
            vec![vec![1.0, 5.0, 2.0], vec![1.0, 5.0, 2.0], vec![3.0, -1.0, 2.5]],
        )
        .unwrap();
        let g = build_similarity_graph(&t, 0.9, GraphKind::Environmental, Exec::Sequential).unwrap();
        assert_eq!(g.adjacency[0][1], 1);
        assert_eq!(g.adjacency[0][2], 0);
        assert_eq!(g.edges(), vec![(0, 1)]);
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "i,j\na,b\n");
    }

    #[test]
    fn constant_rows_get_no_edges() {
        let ids: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let names: Vec<String> = ["f1", "f2"].iter().map(|s| s.to_string()).collect();
        // row b standardizes to a constant row
        let t = NodeFeatureTable::new(ids, names, vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        let g = build_similarity_graph(&t, 0.9, GraphKind::Demographic, Exec::Sequential).unwrap();
        assert_eq!(g.adjacency[0][1], 0);
        assert_eq!(g.adjacency[1][2], 0);
    }

    #[test]
    fn table_csv_round_trip_and_mismatch() {
        let text = "tract_id,x,y\nb,1,2\na,3,4.5\n";
        let t = NodeFeatureTable::read_csv(text.as_bytes()).unwrap();
        assert_eq!(t.feature_names, vec!["x", "y"]);
        let sel = t.select(&["a".to_string(), "b".to_string()]).unwrap();
        assert_eq!(sel.values[0], vec![3.0, 4.5]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(NodeFeatureTable::read_csv(buf.as_slice()).unwrap(), t);
        assert!(fuse_graphs(&t, &sel, 0.9, 0.9, Exec::Sequential).is_err());
        assert!(NodeFeatureTable::read_csv("id,x\na,1\n".as_bytes()).is_err());
    }
}
