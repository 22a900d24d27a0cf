use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

const MAX_ATTEMPTS: usize = 1000;

/// G(n, p) with unit weights, resampled until connected.
pub fn erdos_renyi(n: usize, p: f64, stream: RngStream) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("edge probability {p} not in [0,1]")));
    }
    let mut rng = stream.rng();
    for _ in 0..MAX_ATTEMPTS {
        let mut g = Graph::empty(n);
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < p {
                    g.set_weight(i, j, 1.0);
                }
            }
        }
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::Disconnected(MAX_ATTEMPTS))
}

/// How many non-edges are inserted relative to removed edges.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbMode {
    /// Remove `⌊f|E|⌋` edges and insert `⌊f|Eᶜ|⌋` non-edges.
    #[default]
    Literal,
    /// Remove and insert `⌊f|E|⌋` each.
    Balanced,
}

/// Randomly discards a fraction of edges and inserts a fraction of non-edges.
/// Inserted edges get unit weight; candidates are drawn from the input graph.
pub fn perturb_edges(g: &Graph, frac: f64, stream: RngStream, mode: PerturbMode) -> Result<Graph> {
    if !(0.0..1.0).contains(&frac) {
        return Err(Error::InvalidArgument(format!("perturb fraction {frac} not in [0,1)")));
    }
    let edges = g.edges();
    let n = g.n();
    let mut non_edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if !g.has_edge(i, j) {
                non_edges.push((i, j));
            }
        }
    }
    let remove = (frac * edges.len() as f64).floor() as usize;
    let insert = match mode {
        PerturbMode::Literal => (frac * non_edges.len() as f64).floor() as usize,
        PerturbMode::Balanced => remove.min(non_edges.len()),
    };
    let mut rng = stream.rng();
    let mut out = g.clone();
    let mut removed = sample(&mut rng, edges.len(), remove).into_vec();
    removed.sort_unstable();
    for idx in removed {
        let (i, j, _) = edges[idx];
        out.set_weight(i, j, 0.0);
    }
    let mut inserted = sample(&mut rng, non_edges.len(), insert).into_vec();
    inserted.sort_unstable();
    for idx in inserted {
        let (i, j) = non_edges[idx];
        out.set_weight(i, j, 1.0);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_when_p_is_one() {
        let g = erdos_renyi(9, 1.0, RngStream::new(0, 0)).unwrap();
        assert_eq!(g.edge_count(), 36);
    }

    #[test]
    fn p_zero_is_disconnected() {
        assert!(matches!(
            erdos_renyi(3, 0.0, RngStream::new(0, 0)),
            Err(Error::Disconnected(1000))
        ));
    }

    #[test]
    fn mean_edge_count_binomial() {
        // Connectivity resampling biases the count upward slightly; n=40,
        // p=0.15 is connected with overwhelming probability so the bias is
        // negligible against the 4-sigma band.
        let (n, p, seeds) = (40usize, 0.15, 200);
        let pairs = (n * (n - 1) / 2) as f64;
        let total: usize = (0..seeds)
            .map(|s| erdos_renyi(n, p, RngStream::new(s, 5)).unwrap().edge_count())
            .sum();
        let mean = total as f64 / seeds as f64;
        let sd_of_mean = (pairs * p * (1.0 - p) / seeds as f64).sqrt();
        assert!((mean - p * pairs).abs() <= 4.0 * sd_of_mean, "mean {mean}");
    }

    #[test]
    fn zero_fraction_is_identity() {
        let g = erdos_renyi(10, 0.3, RngStream::new(1, 0)).unwrap();
        assert_eq!(perturb_edges(&g, 0.0, RngStream::new(1, 1), PerturbMode::Literal).unwrap(), g);
    }

    #[test]
    fn complete_graph_gets_no_insertions() {
        let g = Graph::complete(6);
        let p = perturb_edges(&g, 0.5, RngStream::new(2, 2), PerturbMode::Literal).unwrap();
        assert_eq!(p.edge_count(), 15 - 7);
    }

    #[test]
    fn literal_counts_are_exact() {
        let g = erdos_renyi(15, 0.15, RngStream::new(4, 0)).unwrap();
        let e = g.edge_count();
        let ec = 105 - e;
        let p = perturb_edges(&g, 0.2, RngStream::new(4, 1), PerturbMode::Literal).unwrap();
        let delta = p.edge_count() as i64 - e as i64;
        assert_eq!(delta, (0.2 * ec as f64).floor() as i64 - (0.2 * e as f64).floor() as i64);
        let b = perturb_edges(&g, 0.2, RngStream::new(4, 1), PerturbMode::Balanced).unwrap();
        assert_eq!(b.edge_count(), e);
        assert_eq!(p.adjacency().max_asymmetry(), 0.0);
        assert!((0..15).all(|i| p.weight(i, i) == 0.0));
    }
}
