//! Dataset directories: `meta.json`, row-major little-endian `features.bin`
//! (f64), `labels.bin` (u8), optional `expectations.bin` (f64) and an
//! optional `graph.txt` edge list.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::graph::{read_edge_list, write_edge_list};
use crate::numerics::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub samples: usize,
    pub nodes: usize,
    pub feature_dim: usize,
    pub label_dim: usize,
    pub has_expectations: bool,
    pub has_graph: bool,
    /// Free-form description of how the data were produced.
    #[serde(default)]
    pub source: String,
}

fn write_f64(path: &Path, m: &Matrix) -> Result<()> {
    let bytes: Vec<u8> = m.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_f64(path: &Path, rows: usize, cols: usize) -> Result<Matrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != rows * cols * 8 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: format!("expected {} bytes, found {}", rows * cols * 8, bytes.len()),
        });
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Matrix::from_vec(rows, cols, values)
}

pub fn write_dataset_dir(dir: &Path, data: &Dataset, source: &str) -> Result<DatasetMeta> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = DatasetMeta {
        samples: data.len(),
        nodes: data.nodes,
        feature_dim: data.feature_dim(),
        label_dim: data.label_dim(),
        has_expectations: data.expectations.is_some(),
        has_graph: data.graph.is_some(),
        source: source.to_string(),
    };
    let meta_path = dir.join("meta.json");
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    std::fs::write(&meta_path, text + "\n").map_err(|e| Error::io(&meta_path, e))?;
    write_f64(&dir.join("features.bin"), &data.features)?;
    let labels: Vec<u8> = data.labels.as_slice().iter().map(|&v| v as u8).collect();
    let label_path = dir.join("labels.bin");
    std::fs::write(&label_path, labels).map_err(|e| Error::io(&label_path, e))?;
    if let Some(e) = &data.expectations {
        write_f64(&dir.join("expectations.bin"), e)?;
    }
    if let Some(g) = &data.graph {
        write_edge_list(g, &dir.join("graph.txt"))?;
    }
    Ok(meta)
}

pub fn read_dataset_dir(dir: &Path) -> Result<(Dataset, DatasetMeta)> {
    let meta_path = dir.join("meta.json");
    let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: DatasetMeta = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: meta_path.clone(),
        line: e.line(),
        reason: e.to_string(),
    })?;
    let rows = meta.samples * meta.nodes;
    let features = read_f64(&dir.join("features.bin"), rows, meta.feature_dim)?;
    let label_path = dir.join("labels.bin");
    let raw = std::fs::read(&label_path).map_err(|e| Error::io(&label_path, e))?;
    let labels = Matrix::from_vec(rows, meta.label_dim, raw.into_iter().map(f64::from).collect())?;
    let expectations = meta
        .has_expectations
        .then(|| read_f64(&dir.join("expectations.bin"), rows, meta.label_dim))
        .transpose()?;
    let graph = meta.has_graph.then(|| read_edge_list(&dir.join("graph.txt"))).transpose()?;
    Ok((Dataset::new(meta.nodes, features, labels, expectations, graph)?, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_gcn_teacher, gen_two_moons};
    use crate::graph::erdos_renyi;
    use crate::network::{FilterKind, LayerSpec};
    use crate::numerics::{ActivationKind, RngStream};

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = erdos_renyi(6, 0.5, RngStream::new(0, 5)).unwrap();
        let spec = vec![LayerSpec::new(FilterKind::Gcn, ActivationKind::Sigmoid, 2, 1)];
        let (d, _) = gen_gcn_teacher(&g, 10, spec, 1, 2).unwrap();
        write_dataset_dir(dir.path(), &d, "test").unwrap();
        let (back, meta) = read_dataset_dir(dir.path()).unwrap();
        assert_eq!(back, d);
        assert_eq!(meta.source, "test");
        let moons = gen_two_moons(8, 0.1, 1).unwrap();
        let sub = dir.path().join("m");
        write_dataset_dir(&sub, &moons, "").unwrap();
        assert_eq!(read_dataset_dir(&sub).unwrap().0, moons);
    }
}
