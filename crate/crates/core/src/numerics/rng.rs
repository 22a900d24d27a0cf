use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Matrix;

/// Identifies an independent pseudo-random stream.
///
/// Backed by ChaCha12, a counter-based generator: the seed selects the key and
/// `stream` selects the nonce, so distinct stream ids never overlap and the
/// same pair reproduces the same draws on every platform.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

/// Well-known stream ids so data, init and batching never share draws.
pub mod streams {
    pub const DATA: u64 = 1;
    pub const INIT: u64 = 2;
    pub const BATCHES: u64 = 3;
    pub const TEACHER: u64 = 4;
    pub const GRAPH: u64 = 5;
    pub const PERTURB: u64 = 6;
    pub const LABELS: u64 = 7;
    pub const SELECT: u64 = 8;
    pub const TEST_DATA: u64 = 9;
    pub const CHECKS: u64 = 10;
}

impl RngStream {
    pub const fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Derives a child stream; useful for per-trial or per-sample splits.
    pub fn split(self, index: u64) -> Self {
        // splitmix64 finalizer keeps children of nearby ids well separated
        let mut z = self
            .stream
            .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Self {
            seed: self.seed,
            stream: z ^ (z >> 31),
        }
    }

    pub fn rng(self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// `rows x cols` matrix of i.i.d. normal draws from a fresh stream.
pub fn gaussian(stream: RngStream, mean: f64, stddev: f64, rows: usize, cols: usize) -> Matrix {
    let mut rng = stream.rng();
    gaussian_with(&mut rng, mean, stddev, rows, cols)
}

/// Normal draws from an existing generator (ziggurat sampler).
pub fn gaussian_with<R: Rng + ?Sized>(
    rng: &mut R,
    mean: f64,
    stddev: f64,
    rows: usize,
    cols: usize,
) -> Matrix {
    assert!(stddev >= 0.0, "stddev must be non-negative");
    let values = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            mean + stddev * z
        })
        .collect();
    Matrix::from_vec(rows, cols, values).expect("length matches")
}

pub fn uniform_with<R: Rng + ?Sized>(
    rng: &mut R,
    low: f64,
    high: f64,
    rows: usize,
    cols: usize,
) -> Matrix {
    let values = (0..rows * cols).map(|_| rng.random_range(low..=high)).collect();
    Matrix::from_vec(rows, cols, values).expect("length matches")
}
