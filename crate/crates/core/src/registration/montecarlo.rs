//! Monte Carlo propagation of fiducial capture noise to FRE and TRE.

use rayon::prelude::*;

use super::{horn_absolute_orientation, target_registration_error, FiducialSet};
use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform};
use crate::rng;
use crate::sim::{simulate_fiducial_capture_with, NoiseModel, CHANNEL_CAPTURE};

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloOutcome {
    pub fre_rms: Vec<f64>,
    pub fre_mean: Vec<f64>,
    /// Per draw, mean over targets.
    pub tre: Vec<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

impl MonteCarloOutcome {
    pub fn mean_fre_rms(&self) -> f64 {
        mean(&self.fre_rms)
    }

    pub fn mean_fre_mean(&self) -> f64 {
        mean(&self.fre_mean)
    }

    pub fn mean_tre(&self) -> f64 {
        mean(&self.tre)
    }

    pub fn max_tre(&self) -> f64 {
        self.tre.iter().copied().fold(0.0, f64::max)
    }

    /// Fraction of draws with TRE at or above `threshold`.
    pub fn tre_exceedance(&self, threshold: f64) -> f64 {
        self.tre.iter().filter(|&&e| e >= threshold).count() as f64 / self.tre.len() as f64
    }
}

/// Registers `draws` noisy captures of `model` and records FRE and TRE.
///
/// Draw `i` uses its own stream, so the outcome depends only on `seed`.
pub fn monte_carlo(
    model: &FiducialSet,
    truth: &RigidTransform,
    targets: &[Point3],
    fiducial_sigma: f64,
    draws: usize,
    seed: u64,
) -> Result<MonteCarloOutcome> {
    if draws == 0 {
        return Err(Error::InvalidArgument("draws must be positive".into()));
    }
    if targets.is_empty() {
        return Err(Error::InvalidArgument("no targets given".into()));
    }
    let noise = NoiseModel {
        fiducial_sigma,
        ..NoiseModel::default()
    };
    noise.validate()?;
    let rows: Vec<(f64, f64, f64)> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::substream(seed, CHANNEL_CAPTURE, i as u64);
            let captured = simulate_fiducial_capture_with(model, truth, &noise, &mut rng)?;
            let r = horn_absolute_orientation(&captured)?;
            let tre = target_registration_error(&r.transform, truth, targets)?;
            Ok((r.fre_rms, r.fre_mean, mean(&tre)))
        })
        .collect::<Result<_>>()?;
    Ok(MonteCarloOutcome {
        fre_rms: rows.iter().map(|r| r.0).collect(),
        fre_mean: rows.iter().map(|r| r.1).collect(),
        tre: rows.iter().map(|r| r.2).collect(),
    })
}
