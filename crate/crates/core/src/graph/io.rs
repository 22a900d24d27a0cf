//! Plain-text edge lists: a `n=<count>` header, then one `i j weight` line per
//! undirected edge with 0-indexed endpoints. Blank lines and `#` comments are
//! ignored.

use std::fmt::Write as _;
use std::path::Path;

use super::Graph;
use crate::error::{Error, Result};

pub fn format_edge_list(g: &Graph) -> String {
    let mut out = format!("n={}\n", g.n());
    for (i, j, w) in g.edges() {
        let _ = writeln!(out, "{i} {j} {w}");
    }
    out
}

pub fn parse_edge_list(text: &str, path: &Path) -> Result<Graph> {
    let err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut n = None;
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if n.is_none() {
            let count = line
                .strip_prefix("n=")
                .ok_or_else(|| err(line_no, "expected header `n=<count>`".into()))?;
            n = Some(
                count
                    .trim()
                    .parse::<usize>()
                    .map_err(|e| err(line_no, format!("bad node count: {e}")))?,
            );
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(err(line_no, format!("expected `i j weight`, got {} fields", fields.len())));
        }
        let i = fields[0]
            .parse::<usize>()
            .map_err(|e| err(line_no, format!("bad node index: {e}")))?;
        let j = fields[1]
            .parse::<usize>()
            .map_err(|e| err(line_no, format!("bad node index: {e}")))?;
        let w = fields[2]
            .parse::<f64>()
            .map_err(|e| err(line_no, format!("bad weight: {e}")))?;
        edges.push((i, j, w, line_no));
    }
    let n = n.ok_or_else(|| err(0, "missing header".into()))?;
    let mut g = Graph::empty(n);
    for (i, j, w, line_no) in edges {
        if i >= n || j >= n || i == j || !(w >= 0.0 && w.is_finite()) {
            return Err(err(line_no, format!("invalid edge ({i},{j},{w})")));
        }
        g.set_weight(i, j, w);
    }
    Ok(g)
}

pub fn write_edge_list(g: &Graph, path: &Path) -> Result<()> {
    std::fs::write(path, format_edge_list(g)).map_err(|e| Error::io(path, e))
}

pub fn read_edge_list(path: &Path) -> Result<Graph> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text, path)
}
