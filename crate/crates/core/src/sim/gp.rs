//! Squared-exponential Gaussian process along arc length.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Sampled process on knots `0, h, 2h, ...` covering `[0, length]`, linearly
/// interpolated in between.
#[derive(Clone, Debug, PartialEq)]
pub struct SeProcess {
    spacing: f64,
    values: Vec<f64>,
}

impl SeProcess {
    pub fn at(&self, s: f64) -> f64 {
        if self.values.len() == 1 {
            return self.values[0];
        }
        let x = (s / self.spacing).max(0.0);
        let i = (x.floor() as usize).min(self.values.len() - 2);
        let f = (x - i as f64).min(1.0);
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }

    pub fn knots(&self) -> &[f64] {
        &self.values
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }
}

/// Draws a zero-mean process with covariance `σ² exp(-Δs² / 2ℓ²)` on knots
/// spaced `ℓ/5` apart.
pub fn sample_se_process<R: Rng + ?Sized>(
    length: f64,
    sigma: f64,
    correlation_length: f64,
    rng: &mut R,
) -> SeProcess {
    let spacing = correlation_length / 5.0;
    let n = (length / spacing).ceil() as usize + 1;
    if sigma == 0.0 {
        return SeProcess {
            spacing,
            values: vec![0.0; n],
        };
    }
    let mut k = DMatrix::from_fn(n, n, |i, j| {
        let d = (i as f64 - j as f64) * spacing;
        (-d * d / (2.0 * correlation_length * correlation_length)).exp()
    });
    let mut nugget = 1e-9;
    let l = loop {
        for i in 0..n {
            k[(i, i)] = 1.0 + nugget;
        }
        if let Some(c) = k.clone().cholesky() {
            break c.l();
        }
        nugget *= 10.0;
    };
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let values = (l * z * sigma).iter().copied().collect();
    SeProcess { spacing, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn marginal_variance_and_correlation() {
        let (sigma, ell) = (2.0, 20.0);
        let mut rng = seeded(5);
        let draws: Vec<SeProcess> = (0..4000)
            .map(|_| sample_se_process(100.0, sigma, ell, &mut rng))
            .collect();
        let var0 = draws.iter().map(|p| p.at(40.0).powi(2)).sum::<f64>() / draws.len() as f64;
        assert!((var0 / (sigma * sigma) - 1.0).abs() < 0.08, "{var0}");
        let cov = draws.iter().map(|p| p.at(40.0) * p.at(60.0)).sum::<f64>() / draws.len() as f64;
        let expected = sigma * sigma * (-0.5f64).exp();
        assert!((cov - expected).abs() < 0.25, "{cov} vs {expected}");
    }

    #[test]
    fn zero_sigma_is_flat_and_interpolation_hits_knots() {
        let mut rng = seeded(1);
        let p = sample_se_process(50.0, 0.0, 10.0, &mut rng);
        assert!(p.knots().iter().all(|&v| v == 0.0));
        let q = sample_se_process(50.0, 1.0, 10.0, &mut rng);
        for (i, v) in q.knots().iter().enumerate() {
            assert_eq!(q.at(i as f64 * q.spacing()), *v);
        }
    }
}
