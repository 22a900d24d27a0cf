const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF `Φ(x) = P(Z ≤ x)`.
///
/// Evaluated through `erfc` on the negative half-line and by reflection on the
/// positive half, so `Φ(x) + Φ(-x) = 1` up to a single rounding.
pub fn normal_cdf(x: f64) -> f64 {
    let lower = |t: f64| 0.5 * libm::erfc(-t / std::f64::consts::SQRT_2);
    if x < 0.0 {
        lower(x)
    } else {
        1.0 - lower(-x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Φ(x) = 1/2 + φ(x) Σ x^(2k+1) / (1·3·…·(2k+1)), convergent for all x.
    fn series_cdf(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        for k in 1..200 {
            term *= x * x / (2 * k + 1) as f64;
            sum += term;
        }
        0.5 + normal_pdf(x) * sum
    }

    #[test]
    fn known_points() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(10.0) - 1.0).abs() < 1e-12);
        let oracle = series_cdf(1.0);
        assert!((oracle - 0.841_344_7).abs() < 1e-7);
        assert!((normal_cdf(1.0) - oracle).abs() < 1e-7);
    }

    #[test]
    fn matches_series_on_grid() {
        for i in -60..=60 {
            let x = i as f64 * 0.1;
            assert!((normal_cdf(x) - series_cdf(x)).abs() < 1e-7, "x={x}");
        }
    }

    #[test]
    fn reflection_and_monotonicity() {
        let mut prev = 0.0;
        for i in 0..=10_000 {
            let x = -8.0 + 16.0 * i as f64 / 10_000.0;
            let v = normal_cdf(x);
            assert!(v >= prev);
            prev = v;
            assert!((normal_cdf(x) + normal_cdf(-x) - 1.0).abs() < 1e-12);
        }
    }
}
