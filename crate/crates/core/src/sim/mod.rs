//! Seeded simulation of fiducial capture and operator cut traces.

mod cut;
mod gp;
pub mod trace;

pub use cut::{derive_cut_surface, simulate_cut_trace, CutSurface};
pub use gp::sample_se_process;
pub use trace::{CutTrace, TraceSample};

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform};
use crate::registration::{DriftModel, FiducialSet};
use crate::rng;

/// Stream identifiers for [`crate::rng::substream`].
pub const CHANNEL_CAPTURE: u64 = 1;
pub const CHANNEL_LATERAL: u64 = 2;
pub const CHANNEL_JITTER: u64 = 3;
pub const CHANNEL_PAUSES: u64 = 4;
pub const CHANNEL_DRIFT: u64 = 5;
pub const CHANNEL_PARTICIPANT: u64 = 6;
pub const CHANNEL_ORDER: u64 = 7;

pub const SAMPLE_RATE_HZ: f64 = 60.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Guided,
    Unguided,
}

impl Condition {
    pub fn as_str(&self) -> &'static str {
        match self {
            Condition::Guided => "guided",
            Condition::Unguided => "unguided",
        }
    }

    pub fn other(&self) -> Condition {
        match self {
            Condition::Guided => Condition::Unguided,
            Condition::Unguided => Condition::Guided,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "guided" => Ok(Condition::Guided),
            "unguided" => Ok(Condition::Unguided),
            other => Err(Error::InvalidArgument(format!(
                "unknown condition '{other}' (expected guided or unguided)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    /// Isotropic capture noise per fiducial (mm).
    pub fiducial_sigma: f64,
    /// Isotropic tracker noise per trace sample (mm).
    pub tracker_jitter_sigma: f64,
    pub drift: DriftModel,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            fiducial_sigma: 0.0,
            tracker_jitter_sigma: 0.0,
            drift: DriftModel::none(),
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("fiducial_sigma", self.fiducial_sigma),
            ("tracker_jitter_sigma", self.tracker_jitter_sigma),
            ("drift rate", self.drift.rate_mm_per_min),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatorModel {
    pub condition: Condition,
    /// Standard deviation of the smooth lateral error (mm).
    pub lateral_error_sigma: f64,
    /// Squared-exponential length scale along the path (mm of arc).
    pub lateral_error_correlation_length: f64,
    /// Constant lateral offset, positive outward (mm).
    pub systematic_bias: f64,
    /// mm/s
    pub cut_speed: f64,
    pub pause_count_mean: f64,
    /// s
    pub pause_duration_mean: f64,
}

impl OperatorModel {
    /// An operator who traces the path exactly at `cut_speed`.
    pub fn exact(condition: Condition, cut_speed: f64) -> Self {
        Self {
            condition,
            lateral_error_sigma: 0.0,
            lateral_error_correlation_length: 20.0,
            systematic_bias: 0.0,
            cut_speed,
            pause_count_mean: 0.0,
            pause_duration_mean: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("lateral_error_sigma", self.lateral_error_sigma),
            ("pause_count_mean", self.pause_count_mean),
            ("pause_duration_mean", self.pause_duration_mean),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")));
            }
        }
        let positive = [
            ("lateral_error_correlation_length", self.lateral_error_correlation_length),
            ("cut_speed", self.cut_speed),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be > 0, got {v}")));
            }
        }
        if !self.systematic_bias.is_finite() {
            return Err(Error::InvalidArgument("systematic_bias must be finite".into()));
        }
        Ok(())
    }
}

/// Measured fiducials `t_true(model_i) + N(0, σ²I)`; the measured side of
/// `model` is ignored.
pub fn simulate_fiducial_capture(
    model: &FiducialSet,
    t_true: &RigidTransform,
    noise: &NoiseModel,
    seed: u64,
) -> Result<FiducialSet> {
    let mut rng = rng::substream(seed, CHANNEL_CAPTURE, 0);
    simulate_fiducial_capture_with(model, t_true, noise, &mut rng)
}

pub fn simulate_fiducial_capture_with<R: Rng + ?Sized>(
    model: &FiducialSet,
    t_true: &RigidTransform,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<FiducialSet> {
    noise.validate()?;
    let measured: Vec<Point3> = if noise.fiducial_sigma == 0.0 {
        model.model_points().iter().map(|p| t_true.transform_point(p)).collect()
    } else {
        let n = Normal::new(0.0, noise.fiducial_sigma).expect("sigma validated");
        model
            .model_points()
            .iter()
            .map(|p| {
                let q = t_true.transform_point(p);
                Point3::new(q.x + n.sample(rng), q.y + n.sample(rng), q.z + n.sample(rng))
            })
            .collect()
    };
    model.with_measured(measured)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    fn model() -> FiducialSet {
        FiducialSet::model_only(
            vec!["a".into(), "b".into(), "c".into()],
            vec![
                Point3::new(-90.0, 0.0, 5.0),
                Point3::new(70.0, 40.0, 30.0),
                Point3::new(20.0, -40.0, -30.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn capture_without_noise_is_exact() {
        let t = RigidTransform::from_axis_angle(Vec3::y(), 0.7, Vec3::new(4.0, 5.0, 6.0));
        let f = simulate_fiducial_capture(&model(), &t, &NoiseModel::default(), 3).unwrap();
        for (m, d) in f.model_points().iter().zip(f.measured_points()) {
            assert_eq!(t.transform_point(m), *d);
        }
    }

    #[test]
    fn capture_is_deterministic() {
        let noise = NoiseModel {
            fiducial_sigma: 1.0,
            ..NoiseModel::default()
        };
        let t = RigidTransform::identity();
        let a = simulate_fiducial_capture(&model(), &t, &noise, 11).unwrap();
        let b = simulate_fiducial_capture(&model(), &t, &noise, 11).unwrap();
        let c = simulate_fiducial_capture(&model(), &t, &noise, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn capture_noise_has_requested_spread() {
        // sample variance over 3·10⁴ values has relative sd sqrt(2/n) ≈ 0.008
        let noise = NoiseModel {
            fiducial_sigma: 1.0,
            ..NoiseModel::default()
        };
        let m = model();
        let t = RigidTransform::identity();
        let mut per_axis = [Vec::new(), Vec::new(), Vec::new()];
        for seed in 0..10_000 {
            let f = simulate_fiducial_capture(&m, &t, &noise, seed).unwrap();
            for (a, b) in f.model_points().iter().zip(f.measured_points()) {
                for k in 0..3 {
                    per_axis[k].push(b[k] - a[k]);
                }
            }
        }
        for xs in &per_axis {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let sd = var.sqrt();
            assert!((0.97..=1.03).contains(&sd), "sd {sd}");
        }
    }

    #[test]
    fn model_validation() {
        let mut op = OperatorModel::exact(Condition::Guided, 5.0);
        assert!(op.validate().is_ok());
        op.cut_speed = 0.0;
        assert!(op.validate().is_err());
        op = OperatorModel::exact(Condition::Guided, 5.0);
        op.lateral_error_correlation_length = 0.0;
        assert!(op.validate().is_err());
        op = OperatorModel::exact(Condition::Guided, 5.0);
        op.pause_count_mean = -1.0;
        assert!(op.validate().is_err());
        assert_eq!("unguided".parse::<Condition>().unwrap(), Condition::Unguided);
        assert!("both".parse::<Condition>().is_err());
    }
}
