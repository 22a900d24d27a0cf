//! Time-by-node label panels: CSV ingestion, lagged features and a
//! correlation k-nearest-neighbor graph.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::graph::{erdos_renyi, Graph};
use crate::numerics::rng::streams;
use crate::numerics::{gaussian_with, Matrix, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelSpec {
    pub lag: usize,
    pub knn: usize,
    /// Node columns to read; empty means every non-date column.
    #[serde(default)]
    pub label_columns: Vec<String>,
    pub date_column: String,
}

impl Default for PanelSpec {
    fn default() -> Self {
        Self {
            lag: 5,
            knn: 4,
            label_columns: Vec::new(),
            date_column: "date".into(),
        }
    }
}

/// Reads a panel CSV (date column plus one integer column per node).
pub fn load_panel_csv(path: &Path, spec: &PanelSpec) -> Result<(Vec<String>, Vec<String>, Matrix)> {
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_err(1, format!("{other:?}")),
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let date_idx = header
        .iter()
        .position(|h| h == &spec.date_column)
        .ok_or_else(|| parse_err(1, format!("missing date column `{}`", spec.date_column)))?;
    let names: Vec<String> = if spec.label_columns.is_empty() {
        header.iter().filter(|h| *h != &spec.date_column).cloned().collect()
    } else {
        spec.label_columns.clone()
    };
    let cols: Vec<usize> = names
        .iter()
        .map(|n| {
            header
                .iter()
                .position(|h| h == n)
                .ok_or_else(|| parse_err(1, format!("unknown column `{n}`")))
        })
        .collect::<Result<_>>()?;
    if cols.is_empty() {
        return Err(parse_err(1, "no node columns".into()));
    }
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let line = r + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(parse_err(line, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        dates.push(rec[date_idx].to_string());
        for (&c, name) in cols.iter().zip(&names) {
            let cell = rec[c].trim();
            if cell.is_empty() {
                return Err(parse_err(line, format!("missing value in column `{name}`")));
            }
            let v: u8 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("column `{name}`: `{cell}` is not a label")))?;
            if v > 2 {
                return Err(parse_err(line, format!("column `{name}`: label {v} outside {{0,1,2}}")));
            }
            values.push(v as f64);
        }
    }
    let rows = dates.len();
    Ok((dates, names.clone(), Matrix::from_vec(rows, names.len(), values)?))
}

pub fn write_panel_csv(path: &Path, date_column: &str, dates: &[String], names: &[String], panel: &Matrix) -> Result<()> {
    if dates.len() != panel.rows() || names.len() != panel.cols() {
        return Err(Error::shape("write_panel_csv", "dates/names do not match panel"));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let to_err = |e: csv::Error| Error::InvalidArgument(format!("write {}: {e}", path.display()));
    let mut header = vec![date_column.to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(to_err)?;
    for (t, d) in dates.iter().enumerate() {
        let mut rec = vec![d.clone()];
        rec.extend(panel.row(t).iter().map(|v| format!("{}", *v as u8)));
        w.write_record(&rec).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Sample `t` has node features `[Y_{t−1} | … | Y_{t−d}]` and label `Y_t`.
/// With `classes == 2` labels are a single 0/1 column; otherwise one-hot.
pub fn lag_features(panel: &Matrix, d: usize, classes: usize, graph: Option<Graph>) -> Result<Dataset> {
    let (t_len, nodes) = panel.shape();
    if d == 0 || t_len <= d {
        return Err(Error::InvalidArgument(format!(
            "panel of length {t_len} too short for lag {d}"
        )));
    }
    if classes < 2 {
        return Err(Error::InvalidArgument("need at least two classes".into()));
    }
    let samples = t_len - d;
    let width = if classes == 2 { 1 } else { classes };
    let mut x = Matrix::zeros(samples * nodes, d);
    let mut y = Matrix::zeros(samples * nodes, width);
    for s in 0..samples {
        let t = s + d;
        for i in 0..nodes {
            for k in 0..d {
                x[(s * nodes + i, k)] = panel[(t - 1 - k, i)];
            }
            let label = panel[(t, i)] as usize;
            if label >= classes {
                return Err(Error::InvalidArgument(format!("label {label} outside {classes} classes")));
            }
            if classes == 2 {
                y[(s * nodes + i, 0)] = label as f64;
            } else {
                y[(s * nodes + i, label)] = 1.0;
            }
        }
    }
    Dataset::new(nodes, x, y, None, graph)
}

/// Connects each node to its `k` most correlated peers (ties to the lower
/// index) and symmetrizes by union.
pub fn knn_graph_from_labels(panel: &Matrix, k: usize) -> Result<Graph> {
    let (t_len, n) = panel.shape();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!("k={k} must be in [1, {n})")));
    }
    let mut centered = panel.clone();
    let mut norms = vec![0.0; n];
    for j in 0..n {
        let mean = panel.col_values(j).iter().sum::<f64>() / t_len as f64;
        for t in 0..t_len {
            centered[(t, j)] -= mean;
        }
        norms[j] = centered.col_values(j).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norms[j] == 0.0 {
            return Err(Error::InvalidArgument(format!("node {j} has zero variance")));
        }
    }
    let cov = centered.t_matmul(&centered)?;
    let mut g = Graph::empty(n);
    for i in 0..n {
        let mut peers: Vec<(usize, f64)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (j, cov[(i, j)] / (norms[i] * norms[j])))
            .collect();
        peers.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for &(j, _) in peers.iter().take(k) {
            g.set_weight(i, j, 1.0);
        }
    }
    Ok(g)
}

/// Artifact-only panel: a latent AR(1) process with neighbor coupling on an
/// Erdős–Rényi graph, thresholded at 0 (two classes) or ±0.8 (three).
pub fn synthetic_panel(nodes: usize, length: usize, classes: usize, seed: u64) -> Result<(Matrix, Graph)> {
    const SELF_WEIGHT: f64 = 0.5;
    const NEIGHBOR_WEIGHT: f64 = 0.4;
    if !(classes == 2 || classes == 3) {
        return Err(Error::InvalidArgument("synthetic panels have 2 or 3 classes".into()));
    }
    let g = erdos_renyi(nodes, 0.3, RngStream::new(seed, streams::GRAPH))?;
    let mut rng = RngStream::new(seed, streams::DATA).rng();
    let mut z = gaussian_with(&mut rng, 0.0, 1.0, 1, nodes);
    let mut panel = Matrix::zeros(length, nodes);
    let deg = g.degrees();
    for t in 0..length {
        let noise = gaussian_with(&mut rng, 0.0, 1.0, 1, nodes);
        let mut next = Matrix::zeros(1, nodes);
        for i in 0..nodes {
            let nb: f64 = g.neighbors(i).map(|j| z[(0, j)]).sum::<f64>() / deg[i];
            next[(0, i)] = SELF_WEIGHT * z[(0, i)] + NEIGHBOR_WEIGHT * nb + noise[(0, i)];
        }
        z = next;
        for i in 0..nodes {
            let v = z[(0, i)];
            panel[(t, i)] = if classes == 2 {
                (v > 0.0) as u8 as f64
            } else if v < -0.8 {
                0.0
            } else if v <= 0.8 {
                1.0
            } else {
                2.0
            };
        }
    }
    Ok((panel, g))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lag_examples() {
        let ones = Matrix::filled(6, 3, 1.0);
        let d = lag_features(&ones, 2, 2, None).unwrap();
        assert_eq!(d.len(), 4);
        assert!(d.features.as_slice().iter().all(|&v| v == 1.0));
        assert!(d.labels.as_slice().iter().all(|&v| v == 1.0));
        assert_eq!(lag_features(&ones, 5, 2, None).unwrap().len(), 1);
        assert!(lag_features(&ones, 6, 2, None).is_err());
    }

    #[test]
    fn lag_columns_are_ordered_by_age() {
        let panel = Matrix::column(&[0.0, 1.0, 2.0, 1.0]);
        let d = lag_features(&panel, 2, 3, None).unwrap();
        assert_eq!(d.features.row(0), &[1.0, 0.0]);
        assert_eq!(d.labels.row(0), &[0.0, 0.0, 1.0]);
        assert_eq!(d.features.row(1), &[2.0, 1.0]);
    }

    #[test]
    fn lag_is_shift_equivariant() {
        let (panel, _) = synthetic_panel(5, 30, 3, 4).unwrap();
        let a = lag_features(&panel, 3, 3, None).unwrap();
        let shifted = panel.map(|v| v + 1.0);
        let b = lag_features(&shifted, 3, 4, None).unwrap();
        assert_eq!(b.features, a.features.map(|v| v + 1.0));
    }

    #[test]
    fn knn_examples() {
        let mut panel = Matrix::zeros(40, 4);
        let mut rng = RngStream::new(9, 1).rng();
        let noise = gaussian_with(&mut rng, 0.0, 1.0, 40, 4);
        for t in 0..40 {
            panel[(t, 0)] = noise[(t, 0)];
            panel[(t, 1)] = 2.0 * noise[(t, 0)] + 1.0;
            panel[(t, 2)] = noise[(t, 2)];
            panel[(t, 3)] = noise[(t, 3)];
        }
        let g = knn_graph_from_labels(&panel, 1).unwrap();
        assert!(g.has_edge(0, 1));
        let g2 = knn_graph_from_labels(&panel, 2).unwrap();
        assert!(g2.degrees().iter().all(|&d| d >= 2.0));
        assert_eq!(knn_graph_from_labels(&panel, 3).unwrap().edge_count(), 6);
        panel.as_mut_slice().iter_mut().step_by(4).for_each(|v| *v = 1.0);
        assert!(knn_graph_from_labels(&panel, 1).is_err());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panel.csv");
        let panel = Matrix::from_rows(&[&[0.0, 1.0], &[2.0, 1.0], &[1.0, 0.0]]);
        let dates: Vec<String> = ["2017-01-01", "2017-01-02", "2017-01-03"].iter().map(|s| s.to_string()).collect();
        let names = vec!["a".to_string(), "b".to_string()];
        write_panel_csv(&path, "date", &dates, &names, &panel).unwrap();
        let (d, n, p) = load_panel_csv(&path, &PanelSpec::default()).unwrap();
        assert_eq!((d, n, p.clone()), (dates, names, panel));

        std::fs::write(&path, "date,a,b\n2017-01-01,0,1\n2017-01-02,,1\n").unwrap();
        match load_panel_csv(&path, &PanelSpec::default()) {
            Err(Error::Parse { line, reason, .. }) => {
                assert_eq!(line, 3);
                assert!(reason.contains('a'));
            }
            other => panic!("{other:?}"),
        }
        let spec = PanelSpec {
            label_columns: vec!["zz".into()],
            ..PanelSpec::default()
        };
        std::fs::write(&path, "date,a\n2017-01-01,0\n").unwrap();
        assert!(load_panel_csv(&path, &spec).is_err());
    }
}
