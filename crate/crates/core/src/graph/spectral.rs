use super::{normalized_laplacian, Graph};
use crate::error::{Error, Result};
use crate::numerics::{gaussian, spectral_norm, sym_eig, Matrix, RngStream};

/// Laplacian split into its `k` largest-magnitude eigencomponents and the rest.
#[derive(Clone, Debug)]
pub struct SpectralSplit {
    pub k: usize,
    pub laplacian: Matrix,
    pub high: Matrix,
    pub low: Matrix,
    /// Orthonormal columns spanning the retained eigenspace.
    pub high_basis: Matrix,
    /// Orthonormal columns spanning the complement.
    pub low_basis: Matrix,
    pub high_values: Vec<f64>,
    pub low_values: Vec<f64>,
}

fn outer_sum(basis: &Matrix, values: &[f64]) -> Result<Matrix> {
    let mut scaled = basis.clone();
    for i in 0..scaled.rows() {
        for (j, v) in values.iter().enumerate() {
            scaled[(i, j)] *= v;
        }
    }
    scaled.matmul_t(basis)
}

pub fn spectral_split(g: &Graph, k: usize) -> Result<SpectralSplit> {
    let n = g.n();
    if k > n {
        return Err(Error::InvalidArgument(format!("k={k} exceeds node count {n}")));
    }
    let laplacian = normalized_laplacian(g)?;
    let eig = sym_eig(&laplacian)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.values[b].abs().total_cmp(&eig.values[a].abs()));
    let pick = |idx: &[usize]| -> (Matrix, Vec<f64>) {
        let mut basis = Matrix::zeros(n, idx.len());
        for (c, &i) in idx.iter().enumerate() {
            for r in 0..n {
                basis[(r, c)] = eig.vectors[(r, i)];
            }
        }
        (basis, idx.iter().map(|&i| eig.values[i]).collect())
    };
    let (high_basis, high_values) = pick(&order[..k]);
    let (low_basis, low_values) = pick(&order[k..]);
    Ok(SpectralSplit {
        k,
        high: outer_sum(&high_basis, &high_values)?,
        low: outer_sum(&low_basis, &low_values)?,
        laplacian,
        high_basis,
        low_basis,
        high_values,
        low_values,
    })
}

impl SpectralSplit {
    /// Projection of a node signal onto the low-energy eigenspace.
    pub fn project_low(&self, x: &Matrix) -> Result<Matrix> {
        self.low_basis.matmul(&self.low_basis.t_matmul(x)?)
    }
}

/// `L' = L_g + U_low S U_lowᵀ` with `S` random symmetric and `‖S‖₂ = delta`:
/// the top-`k` eigenpairs are preserved and `‖L' - L_g‖₂ = delta`.
pub fn low_energy_perturbation(
    g: &Graph,
    k: usize,
    delta: f64,
    stream: RngStream,
) -> Result<Matrix> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("delta must be non-negative, got {delta}")));
    }
    let split = spectral_split(g, k)?;
    let m = split.low_basis.cols();
    if m == 0 || delta == 0.0 {
        return Ok(split.laplacian);
    }
    let a = gaussian(stream, 0.0, 1.0, m, m);
    let sym = a.add(&a.transpose())?;
    let norm = spectral_norm(&sym)?;
    if norm == 0.0 {
        return Err(Error::NonFinite("low_energy_perturbation"));
    }
    let s = sym.scale(delta / norm);
    let lift = split.low_basis.matmul(&s)?.matmul_t(&split.low_basis)?;
    split.laplacian.add(&lift)
}

/// Mean spectral norm of the low-eigenspace component of each sample.
pub fn mean_low_energy_norm(split: &SpectralSplit, samples: &[Matrix]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let mut total = 0.0;
    for x in samples {
        total += spectral_norm(&split.project_low(x)?)?;
    }
    Ok(total / samples.len() as f64)
}

/// `δ · K · E‖X⁻‖ · ‖Θ*‖`, the bound on how far a low-energy Laplacian
/// perturbation can move the operator.
pub fn mismatch_bound(delta: f64, lipschitz: f64, mean_low_norm: f64, theta_norm: f64) -> Result<f64> {
    for (name, v) in [
        ("delta", delta),
        ("lipschitz", lipschitz),
        ("mean_low_norm", mean_low_norm),
        ("theta_norm", theta_norm),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name} must be non-negative, got {v}")));
        }
    }
    Ok(delta * lipschitz * mean_low_norm * theta_norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::erdos_renyi;

    fn sample_graph(seed: u64) -> Graph {
        erdos_renyi(10, 0.4, RngStream::new(seed, 0)).unwrap()
    }

    #[test]
    fn split_reconstructs_laplacian() {
        for seed in 0..10 {
            let g = sample_graph(seed);
            for k in [0, 1, 3, 10] {
                let s = spectral_split(&g, k).unwrap();
                let sum = s.high.add(&s.low).unwrap();
                assert!(sum.max_abs_diff(&s.laplacian).unwrap() < 1e-10);
            }
        }
    }

    #[test]
    fn high_part_has_largest_eigenvalues() {
        let s = spectral_split(&sample_graph(1), 3).unwrap();
        let min_high = s.high_values.iter().fold(f64::INFINITY, |a, b| a.min(b.abs()));
        assert!(s.low_values.iter().all(|v| v.abs() <= min_high));
        assert!(spectral_split(&sample_graph(1), 11).is_err());
    }

    #[test]
    fn zero_delta_returns_laplacian() {
        let g = sample_graph(2);
        let l = low_energy_perturbation(&g, 3, 0.0, RngStream::new(0, 1)).unwrap();
        assert!(l.max_abs_diff(&normalized_laplacian(&g).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn perturbation_preserves_high_eigenpairs() {
        for seed in 0..5 {
            let g = sample_graph(seed);
            let s = spectral_split(&g, 3).unwrap();
            let lp = low_energy_perturbation(&g, 3, 0.3, RngStream::new(seed, 1)).unwrap();
            assert!(lp.max_asymmetry() < 1e-12);
            let diff = lp.sub(&s.laplacian).unwrap();
            assert!((spectral_norm(&diff).unwrap() - 0.3).abs() < 1e-9);
            for j in 0..3 {
                let u = Matrix::column(&s.high_basis.col_values(j));
                let lu = lp.matmul(&u).unwrap();
                let expect = u.scale(s.high_values[j]);
                assert!(lu.max_abs_diff(&expect).unwrap() < 1e-9);
            }
        }
    }

    #[test]
    fn mismatch_bound_is_product() {
        assert_eq!(mismatch_bound(0.5, 0.25, 2.0, 4.0).unwrap(), 1.0);
        assert_eq!(mismatch_bound(0.0, 0.25, 2.0, 4.0).unwrap(), 0.0);
        assert!(mismatch_bound(-1.0, 0.25, 2.0, 4.0).is_err());
    }

    #[test]
    fn low_norm_of_high_signal_is_zero() {
        let s = spectral_split(&sample_graph(3), 4).unwrap();
        let x = Matrix::column(&s.high_basis.col_values(0));
        assert!(mean_low_energy_norm(&s, &[x]).unwrap() < 1e-10);
    }
}
