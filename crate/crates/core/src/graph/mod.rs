//! Weighted undirected graphs and the parameter-free feature maps built on
//! them. Every filter here is linear in the node signal, so a graph layer is
//! always `η(X)Θ` with `η` fixed by the graph.

mod io;
mod random;
mod spectral;

pub use io::{read_edge_list, write_edge_list, parse_edge_list, format_edge_list};
pub use random::{erdos_renyi, perturb_edges, PerturbMode};
pub use spectral::{
    low_energy_perturbation, mean_low_energy_norm, mismatch_bound, spectral_split, SpectralSplit,
};

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sym_eig, Matrix};

/// Undirected graph with non-negative symmetric weights and no self loops.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct Graph {
    n: usize,
    adjacency: Matrix,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl TryFrom<GraphRepr> for Graph {
    type Error = Error;

    fn try_from(r: GraphRepr) -> Result<Self> {
        Graph::from_edges(r.n, &r.edges)
    }
}

impl From<Graph> for GraphRepr {
    fn from(g: Graph) -> Self {
        GraphRepr {
            n: g.n,
            edges: g.edges(),
        }
    }
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            adjacency: Matrix::zeros(n, n),
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Self::empty(n);
        for i in 0..n {
            for j in (i + 1)..n {
                g.set_weight(i, j, 1.0);
            }
        }
        g
    }

    /// Builds a graph from unordered weighted pairs. Repeated pairs overwrite.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut g = Self::empty(n);
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({i},{j}) out of range for {n} nodes"
                )));
            }
            if i == j {
                return Err(Error::InvalidArgument(format!("self loop at node {i}")));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "edge ({i},{j}) has invalid weight {w}"
                )));
            }
            g.set_weight(i, j, w);
        }
        Ok(g)
    }

    pub fn from_adjacency(adjacency: Matrix) -> Result<Self> {
        if !adjacency.is_square() {
            return Err(Error::shape("Graph::from_adjacency", "adjacency must be square"));
        }
        let n = adjacency.rows();
        for i in 0..n {
            if adjacency[(i, i)] != 0.0 {
                return Err(Error::InvalidArgument(format!("self loop at node {i}")));
            }
            for j in 0..n {
                let w = adjacency[(i, j)];
                if !(w >= 0.0 && w.is_finite()) || w != adjacency[(j, i)] {
                    return Err(Error::InvalidArgument(format!(
                        "adjacency entry ({i},{j}) invalid or asymmetric"
                    )));
                }
            }
        }
        Ok(Self { n, adjacency })
    }

    pub(crate) fn set_weight(&mut self, i: usize, j: usize, w: f64) {
        self.adjacency[(i, j)] = w;
        self.adjacency[(j, i)] = w;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.adjacency
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[(i, j)]
    }

    /// Edges `(i, j, w)` with `i < j` in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let w = self.adjacency[(i, j)];
                if w != 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[(i, j)] != 0.0
    }

    pub fn degrees(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.adjacency.row(i).iter().sum())
            .collect()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency
            .row(i)
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(j, _)| j)
    }

    pub fn is_connected(&self) -> bool {
        if self.n <= 1 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for u in self.neighbors(v) {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    queue.push_back(u);
                }
            }
        }
        count == self.n
    }

    fn check_signal(&self, x: &Matrix, op: &'static str) -> Result<()> {
        if x.rows() != self.n {
            return Err(Error::shape(
                op,
                format!("signal has {} rows, graph has {} nodes", x.rows(), self.n),
            ));
        }
        Ok(())
    }
}

/// `L_g = I - D^{-1/2} W D^{-1/2}`.
pub fn normalized_laplacian(g: &Graph) -> Result<Matrix> {
    let deg = g.degrees();
    if let Some(i) = deg.iter().position(|&d| d <= 0.0) {
        return Err(Error::IsolatedNode(i));
    }
    let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    let n = g.n();
    let mut l = Matrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            let w = g.weight(i, j);
            if w != 0.0 {
                l[(i, j)] -= inv_sqrt[i] * w * inv_sqrt[j];
            }
        }
    }
    Ok(l)
}

/// Renormalized propagation matrix `D̃^{-1/2} (W + I) D̃^{-1/2}`.
pub fn gcn_propagation(g: &Graph) -> Matrix {
    let n = g.n();
    let deg: Vec<f64> = g.degrees().iter().map(|d| d + 1.0).collect();
    let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let w = g.weight(i, j) + if i == j { 1.0 } else { 0.0 };
            if w != 0.0 {
                a[(i, j)] = inv_sqrt[i] * w * inv_sqrt[j];
            }
        }
    }
    a
}

pub fn gcn_filter(g: &Graph, x: &Matrix) -> Result<Matrix> {
    g.check_signal(x, "gcn_filter")?;
    gcn_propagation(g).matmul(x)
}

/// `2 L_g / λ_max - I`, mapping the Laplacian spectrum into [-1, 1].
pub fn rescaled_laplacian(g: &Graph) -> Result<Matrix> {
    let l = normalized_laplacian(g)?;
    let lambda_max = sym_eig(&l)?.max();
    let n = g.n();
    let mut out = l.scale(2.0 / lambda_max);
    for i in 0..n {
        out[(i, i)] -= 1.0;
    }
    Ok(out)
}

/// Chebyshev stack `[T₁(L̂)X | … | T_K(L̂)X]` computed by the three-term
/// recurrence on the signal.
pub fn chebyshev_feature_map(g: &Graph, x: &Matrix, k: usize) -> Result<Matrix> {
    if k == 0 {
        return Err(Error::InvalidArgument("Chebyshev order must be >= 1".into()));
    }
    g.check_signal(x, "chebyshev_feature_map")?;
    let lhat = rescaled_laplacian(g)?;
    chebyshev_stack(&lhat, x, k)
}

pub(crate) fn chebyshev_stack(lhat: &Matrix, x: &Matrix, k: usize) -> Result<Matrix> {
    let mut terms: Vec<Matrix> = Vec::with_capacity(k);
    let mut prev = x.clone();
    let mut cur = lhat.matmul(x)?;
    terms.push(cur.clone());
    for _ in 1..k {
        let mut next = lhat.matmul(&cur)?.scale(2.0);
        next.axpy(-1.0, &prev)?;
        prev = std::mem::replace(&mut cur, next);
        terms.push(cur.clone());
    }
    Matrix::hstack(&terms.iter().collect::<Vec<_>>())
}

/// Polynomial matrices `T₁(L̂) … T_K(L̂)`.
pub fn chebyshev_basis(g: &Graph, k: usize) -> Result<Vec<Matrix>> {
    if k == 0 {
        return Err(Error::InvalidArgument("Chebyshev order must be >= 1".into()));
    }
    let lhat = rescaled_laplacian(g)?;
    let mut out = Vec::with_capacity(k);
    let mut prev = Matrix::identity(g.n());
    let mut cur = lhat.clone();
    out.push(cur.clone());
    for _ in 1..k {
        let mut next = lhat.matmul(&cur)?.scale(2.0);
        next.axpy(-1.0, &prev)?;
        prev = std::mem::replace(&mut cur, next);
        out.push(cur.clone());
    }
    Ok(out)
}

/// Row-normalized adjacency `D⁻¹W` (neighbor mean).
pub fn neighbor_mean_matrix(g: &Graph) -> Result<Matrix> {
    let deg = g.degrees();
    if let Some(i) = deg.iter().position(|&d| d <= 0.0) {
        return Err(Error::IsolatedNode(i));
    }
    let n = g.n();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        let cnt = g.neighbors(i).count() as f64;
        for j in g.neighbors(i) {
            m[(i, j)] = 1.0 / cnt;
        }
    }
    Ok(m)
}

/// `[X | mean of neighbor rows]`, so a SAGE layer is `η(X)[Θ₁; Θ₂]`.
pub fn sage_feature_map(g: &Graph, x: &Matrix) -> Result<Matrix> {
    g.check_signal(x, "sage_feature_map")?;
    let agg = neighbor_mean_matrix(g)?.matmul(x)?;
    Matrix::hstack(&[x, &agg])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::{gaussian, RngStream};

    fn pair() -> Graph {
        Graph::from_edges(2, &[(0, 1, 1.0)]).unwrap()
    }

    fn triangle() -> Graph {
        Graph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap()
    }

    #[test]
    fn two_node_laplacian() {
        let l = normalized_laplacian(&pair()).unwrap();
        assert_eq!(l, Matrix::from_rows(&[&[1.0, -1.0], &[-1.0, 1.0]]));
    }

    #[test]
    fn laplacian_null_vector() {
        let g = erdos_renyi(12, 0.4, RngStream::new(3, 0)).unwrap();
        let l = normalized_laplacian(&g).unwrap();
        let v = Matrix::column(&g.degrees().iter().map(|d| d.sqrt()).collect::<Vec<_>>());
        assert!(l.matmul(&v).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn laplacian_spectrum_in_range() {
        for seed in 0..50 {
            let n = if seed == 0 { 10 } else { 8 + (seed % 10) as usize };
            let g = erdos_renyi(n, 0.5, RngStream::new(seed, 0)).unwrap();
            let eig = sym_eig(&normalized_laplacian(&g).unwrap()).unwrap();
            assert!(eig.min() >= -1e-10 && eig.max() <= 2.0 + 1e-10);
        }
    }

    #[test]
    fn isolated_node_rejected() {
        let g = Graph::from_edges(3, &[(0, 1, 1.0)]).unwrap();
        assert!(matches!(normalized_laplacian(&g), Err(Error::IsolatedNode(2))));
        assert!(matches!(
            sage_feature_map(&g, &Matrix::zeros(3, 1)),
            Err(Error::IsolatedNode(2))
        ));
    }

    #[test]
    fn gcn_two_node() {
        let out = gcn_filter(&pair(), &Matrix::column(&[1.0, 0.0])).unwrap();
        assert!(out.max_abs_diff(&Matrix::column(&[0.5, 0.5])).unwrap() < 1e-15);
        assert_eq!(gcn_filter(&pair(), &Matrix::zeros(2, 3)).unwrap(), Matrix::zeros(2, 3));
        let x = gaussian(RngStream::new(1, 1), 0.0, 1.0, 4, 2);
        assert_eq!(gcn_filter(&Graph::empty(4), &x).unwrap(), x);
        assert!(gcn_filter(&pair(), &Matrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn gcn_is_linear() {
        let g = erdos_renyi(9, 0.4, RngStream::new(8, 0)).unwrap();
        for t in 0..20 {
            let x = gaussian(RngStream::new(t, 1), 0.0, 1.0, 9, 3);
            let y = gaussian(RngStream::new(t, 2), 0.0, 1.0, 9, 3);
            let (a, b) = (0.3 + t as f64, -1.7);
            let mut comb = x.scale(a);
            comb.axpy(b, &y).unwrap();
            let lhs = gcn_filter(&g, &comb).unwrap();
            let mut rhs = gcn_filter(&g, &x).unwrap().scale(a);
            rhs.axpy(b, &gcn_filter(&g, &y).unwrap()).unwrap();
            assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-10);
        }
    }

    #[test]
    fn chebyshev_first_order_is_rescaled_laplacian() {
        let g = erdos_renyi(7, 0.5, RngStream::new(2, 0)).unwrap();
        let x = gaussian(RngStream::new(2, 1), 0.0, 1.0, 7, 2);
        let lhat = rescaled_laplacian(&g).unwrap();
        assert_eq!(chebyshev_feature_map(&g, &x, 1).unwrap(), lhat.matmul(&x).unwrap());
        assert!(chebyshev_feature_map(&g, &x, 0).is_err());
    }

    #[test]
    fn chebyshev_at_identity_operator() {
        let x = gaussian(RngStream::new(5, 1), 0.0, 1.0, 4, 2);
        let stack = chebyshev_stack(&Matrix::identity(4), &x, 5).unwrap();
        for k in 0..5 {
            assert!(stack.col_block(2 * k, 2).max_abs_diff(&x).unwrap() < 1e-14);
        }
    }

    #[test]
    fn chebyshev_third_order_matches_explicit_polynomial() {
        let g = erdos_renyi(8, 0.5, RngStream::new(6, 0)).unwrap();
        let x = gaussian(RngStream::new(6, 1), 0.0, 1.0, 8, 3);
        let l = rescaled_laplacian(&g).unwrap();
        let l2 = l.matmul(&l).unwrap();
        let l3 = l2.matmul(&l).unwrap();
        let mut t3 = l3.scale(4.0);
        t3.axpy(-3.0, &l).unwrap();
        let mut t2 = l2.scale(2.0);
        t2.axpy(-1.0, &Matrix::identity(8)).unwrap();
        let stack = chebyshev_feature_map(&g, &x, 3).unwrap();
        assert!(stack.col_block(3, 3).max_abs_diff(&t2.matmul(&x).unwrap()).unwrap() < 1e-10);
        assert!(stack.col_block(6, 3).max_abs_diff(&t3.matmul(&x).unwrap()).unwrap() < 1e-10);
        let basis = chebyshev_basis(&g, 3).unwrap();
        assert!(basis[2].max_abs_diff(&t3).unwrap() < 1e-10);
    }

    #[test]
    fn sage_examples() {
        let out = sage_feature_map(&pair(), &Matrix::column(&[1.0, 3.0])).unwrap();
        assert_eq!(out, Matrix::from_rows(&[&[1.0, 3.0], &[3.0, 1.0]]));
        let t = sage_feature_map(&triangle(), &Matrix::column(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(t.col_values(1), vec![2.5, 2.0, 1.5]);
        assert_eq!(sage_feature_map(&triangle(), &Matrix::zeros(3, 2)).unwrap(), Matrix::zeros(3, 4));
    }

    #[test]
    fn serde_uses_edge_list() {
        let g = triangle();
        let s = serde_json::to_string(&g).unwrap();
        assert!(s.contains("edges"));
        let back: Graph = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
    }
}
