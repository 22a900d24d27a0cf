//! Feature maps `η` applied to node-stacked batches.
//!
//! A batch of `B` samples with `n` nodes each is stored as a `(B·n) × C`
//! matrix. Every filter is a list of `n × n` blocks `P₁ … P_m` and acts as
//! `η(X) = [P₁X | … | P_mX]` on each sample, so the expanded width is `m·C`.
//! The adjoint maps `[G₁ | … | G_m]` back to `Σ P_kᵀ G_k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{chebyshev_basis, gcn_propagation, neighbor_mean_matrix, Graph};
use crate::numerics::{matmul_into, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterKind {
    /// Identity: each node is transformed independently.
    Dense,
    Gcn,
    Chebyshev { k: usize },
    /// Self features concatenated with the neighbor mean.
    Sage,
}

impl FilterKind {
    pub fn width_multiplier(self) -> usize {
        match self {
            FilterKind::Dense | FilterKind::Gcn => 1,
            FilterKind::Chebyshev { k } => k,
            FilterKind::Sage => 2,
        }
    }

    pub fn needs_graph(self) -> bool {
        !matches!(self, FilterKind::Dense)
    }
}

#[derive(Clone, Debug)]
enum Block {
    Identity,
    Dense(Matrix),
}

#[derive(Clone, Debug)]
pub(crate) struct FilterBank {
    blocks: Vec<Block>,
}

impl FilterBank {
    pub(crate) fn build(kind: FilterKind, graph: Option<&Graph>) -> Result<Self> {
        let blocks = match kind {
            FilterKind::Dense => vec![Block::Identity],
            FilterKind::Gcn => vec![Block::Dense(gcn_propagation(graph.ok_or(Error::GraphMissing(0))?))],
            FilterKind::Chebyshev { k } => chebyshev_basis(graph.ok_or(Error::GraphMissing(0))?, k)?
                .into_iter()
                .map(Block::Dense)
                .collect(),
            FilterKind::Sage => vec![Block::Identity, Block::Dense(neighbor_mean_matrix(graph.ok_or(Error::GraphMissing(0))?)?)],
        };
        Ok(Self { blocks })
    }

    pub(crate) fn is_identity(&self) -> bool {
        matches!(self.blocks.as_slice(), [Block::Identity])
    }

    pub(crate) fn apply(&self, x: &Matrix, nodes: usize) -> Matrix {
        if self.is_identity() {
            return x.clone();
        }
        let c = x.cols();
        let m = self.blocks.len();
        let batch = x.rows() / nodes;
        let mut out = Matrix::zeros(x.rows(), m * c);
        let mut tmp = Matrix::zeros(nodes, c);
        for b in 0..batch {
            let xb = x.row_block(b * nodes, nodes);
            for (k, block) in self.blocks.iter().enumerate() {
                let src = match block {
                    Block::Identity => &xb,
                    Block::Dense(p) => {
                        matmul_into(p, &xb, &mut tmp);
                        &tmp
                    }
                };
                for i in 0..nodes {
                    out.row_mut(b * nodes + i)[k * c..(k + 1) * c].copy_from_slice(src.row(i));
                }
            }
        }
        out
    }

    /// Adjoint of [`apply`](Self::apply).
    pub(crate) fn adjoint(&self, g: &Matrix, nodes: usize) -> Matrix {
        if self.is_identity() {
            return g.clone();
        }
        let m = self.blocks.len();
        let c = g.cols() / m;
        let batch = g.rows() / nodes;
        let mut out = Matrix::zeros(g.rows(), c);
        for b in 0..batch {
            let gb = g.row_block(b * nodes, nodes);
            for (k, block) in self.blocks.iter().enumerate() {
                let part = gb.col_block(k * c, c);
                let contrib = match block {
                    Block::Identity => part,
                    Block::Dense(p) => p.t_matmul(&part).expect("block shapes agree"),
                };
                for i in 0..nodes {
                    let dst = out.row_mut(b * nodes + i);
                    for (d, s) in dst.iter_mut().zip(contrib.row(i)) {
                        *d += s;
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{chebyshev_feature_map, erdos_renyi, gcn_filter, sage_feature_map};
    use crate::numerics::{gaussian, RngStream};

    #[test]
    fn bank_matches_graph_feature_maps() {
        let g = erdos_renyi(6, 0.5, RngStream::new(1, 0)).unwrap();
        let x = gaussian(RngStream::new(1, 1), 0.0, 1.0, 12, 2);
        let check = |kind, reference: &dyn Fn(&Matrix) -> Matrix| {
            let bank = FilterBank::build(kind, Some(&g)).unwrap();
            let out = bank.apply(&x, 6);
            for b in 0..2 {
                let want = reference(&x.row_block(6 * b, 6));
                assert!(out.row_block(6 * b, 6).max_abs_diff(&want).unwrap() < 1e-12);
            }
        };
        check(FilterKind::Gcn, &|xb| gcn_filter(&g, xb).unwrap());
        check(FilterKind::Sage, &|xb| sage_feature_map(&g, xb).unwrap());
        check(FilterKind::Chebyshev { k: 3 }, &|xb| chebyshev_feature_map(&g, xb, 3).unwrap());
    }

    #[test]
    fn adjoint_identity() {
        let g = erdos_renyi(5, 0.5, RngStream::new(2, 0)).unwrap();
        for kind in [FilterKind::Dense, FilterKind::Gcn, FilterKind::Sage, FilterKind::Chebyshev { k: 2 }] {
            let bank = FilterBank::build(kind, Some(&g)).unwrap();
            let x = gaussian(RngStream::new(3, 1), 0.0, 1.0, 15, 2);
            let y = gaussian(RngStream::new(3, 2), 0.0, 1.0, 15, 2 * kind.width_multiplier());
            let lhs = bank.apply(&x, 5).dot(&y).unwrap();
            let rhs = x.dot(&bank.adjoint(&y, 5)).unwrap();
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn graph_filters_need_graph() {
        assert!(matches!(FilterBank::build(FilterKind::Gcn, None), Err(Error::GraphMissing(_))));
        assert!(FilterBank::build(FilterKind::Dense, None).is_ok());
    }
}
