//! Study configuration.
//!
//! The file is TOML: key-value pairs grouped in sections. Every key is
//! optional and falls back to the calibrated defaults below; unknown keys are
//! rejected.
//!
//! ```toml
//! [study]
//! n_participants = 10
//! seed = 42
//! plan = "demo"            # or a plan manifest, relative to this file
//!
//! [unguided]
//! lateral_error_sigma_mm = 4.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{DeviationMode, ScoringOptions, DEFAULT_CUT_DEPTH_MM, DEFAULT_SAMPLE_SPACING_MM};
use crate::registration::DriftModel;
use crate::sim::{Condition, OperatorModel};
use crate::stats::DEFAULT_ALPHA;

pub const DEMO_PLAN: &str = "demo";

/// Isotropic fiducial capture noise, calibrated so the demo registration
/// reproduces the reported FRE.
pub const CALIBRATED_FIDUCIAL_SIGMA_MM: f64 = 1.5;
pub const DEFAULT_TRACKER_JITTER_MM: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySettings {
    pub n_participants: usize,
    pub seed: u64,
    pub alpha: f64,
    pub order_randomization: bool,
    /// `"demo"` or a path to a plan manifest.
    pub plan: String,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringSettings {
    pub sample_spacing_mm: f64,
    pub cut_depth_mm: f64,
    /// `"direct"` or `"surface_projected"`.
    pub deviation_mode: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistrationSettings {
    /// Fiducial file with model coordinates. Empty selects the demo
    /// landmarks for the demo plan, or spread-out liver vertices otherwise.
    pub fiducials: String,
    /// Time between registration and the start of the guided cut (s).
    pub lead_time_s: f64,
    /// The participant repeats the capture while the hologram sits farther
    /// than this from the phantom at the resection site (mm); 0 accepts the
    /// first registration.
    pub confirm_threshold_mm: f64,
    pub max_attempts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSettings {
    pub fiducial_sigma_mm: f64,
    pub tracker_jitter_sigma_mm: f64,
    pub drift_rate_mm_per_min: f64,
}

/// Spread of per-participant traits, shared by both conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Population {
    /// Log-sd of the multiplier on lateral error.
    pub skill_log_sd: f64,
    /// Log-sd of the multiplier on cut speed.
    pub speed_log_sd: f64,
}

/// Operator behaviour for one condition. Per participant, the lateral sigma
/// is scaled by the skill multiplier, the speed by the speed multiplier, and
/// the bias is `bias_mean_mm + bias_sd_mm * z` with `z` the participant's
/// standard-normal bias tendency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionParams {
    pub lateral_error_sigma_mm: f64,
    pub correlation_length_mm: f64,
    pub bias_mean_mm: f64,
    pub bias_sd_mm: f64,
    pub cut_speed_mm_s: f64,
    pub pause_count_mean: f64,
    pub pause_duration_mean_s: f64,
}

/// Protocol timings with no computational role, kept for the record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Protocol {
    pub training_min: f64,
    pub rest_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub study: StudySettings,
    pub scoring: ScoringSettings,
    pub registration: RegistrationSettings,
    pub noise: NoiseSettings,
    pub population: Population,
    pub guided: ConditionParams,
    pub unguided: ConditionParams,
    pub protocol: Protocol,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Operator and population defaults come from the sweep in
/// `examples/calibrate.rs` (20 studies of 10 participants, seeds 1..=20),
/// tuned to group means of 2.0 / 5.0 mm deviation and 32 / 55 s.
impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            study: StudySettings {
                n_participants: 10,
                seed: 42,
                alpha: DEFAULT_ALPHA,
                order_randomization: true,
                plan: DEMO_PLAN.into(),
                workers: 0,
            },
            scoring: ScoringSettings {
                sample_spacing_mm: DEFAULT_SAMPLE_SPACING_MM,
                cut_depth_mm: DEFAULT_CUT_DEPTH_MM,
                deviation_mode: "direct".into(),
            },
            registration: RegistrationSettings {
                fiducials: String::new(),
                lead_time_s: 0.0,
                confirm_threshold_mm: 2.5,
                max_attempts: 5,
            },
            noise: NoiseSettings {
                fiducial_sigma_mm: CALIBRATED_FIDUCIAL_SIGMA_MM,
                tracker_jitter_sigma_mm: DEFAULT_TRACKER_JITTER_MM,
                drift_rate_mm_per_min: DriftModel::DEFAULT_RATE_MM_PER_MIN,
            },
            population: Population {
                skill_log_sd: 0.06,
                speed_log_sd: 0.2,
            },
            guided: ConditionParams {
                lateral_error_sigma_mm: 0.1,
                correlation_length_mm: 20.0,
                bias_mean_mm: 1.6,
                bias_sd_mm: 0.1,
                cut_speed_mm_s: 5.0,
                pause_count_mean: 0.0,
                pause_duration_mean_s: 0.0,
            },
            unguided: ConditionParams {
                lateral_error_sigma_mm: 6.0,
                correlation_length_mm: 6.0,
                bias_mean_mm: 0.0,
                bias_sd_mm: 0.8,
                cut_speed_mm_s: 3.5,
                pause_count_mean: 8.0,
                pause_duration_mean_s: 1.2,
            },
            protocol: Protocol {
                training_min: 5.0,
                rest_min: 5.0,
            },
            base_dir: PathBuf::new(),
        }
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl StudyConfig {
    /// Parses a config, filling missing keys from the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let user: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut merged = toml::Value::try_from(Self::default()).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, user);
        let cfg: Self = merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.study;
        if s.n_participants < 2 {
            return Err(Error::Config(format!("n_participants must be >= 2, got {}", s.n_participants)));
        }
        if !(s.alpha > 0.0 && s.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", s.alpha)));
        }
        if s.plan.trim().is_empty() {
            return Err(Error::Config("plan must name a manifest or \"demo\"".into()));
        }
        self.scoring_options()?;
        let r = &self.registration;
        if !(r.lead_time_s >= 0.0) || !r.lead_time_s.is_finite() {
            return Err(Error::Config(format!("lead_time_s must be >= 0, got {}", r.lead_time_s)));
        }
        if !(r.confirm_threshold_mm >= 0.0) || !r.confirm_threshold_mm.is_finite() {
            return Err(Error::Config(format!(
                "confirm_threshold_mm must be >= 0, got {}",
                r.confirm_threshold_mm
            )));
        }
        if r.max_attempts == 0 {
            return Err(Error::Config("max_attempts must be >= 1".into()));
        }
        let n = &self.noise;
        let p = &self.population;
        for (name, v) in [
            ("fiducial_sigma_mm", n.fiducial_sigma_mm),
            ("tracker_jitter_sigma_mm", n.tracker_jitter_sigma_mm),
            ("drift_rate_mm_per_min", n.drift_rate_mm_per_min),
            ("skill_log_sd", p.skill_log_sd),
            ("speed_log_sd", p.speed_log_sd),
            ("training_min", self.protocol.training_min),
            ("rest_min", self.protocol.rest_min),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (label, c) in [("guided", &self.guided), ("unguided", &self.unguided)] {
            if !(c.bias_sd_mm >= 0.0) || !c.bias_sd_mm.is_finite() {
                return Err(Error::Config(format!("{label}.bias_sd_mm must be >= 0, got {}", c.bias_sd_mm)));
            }
            c.operator(Condition::Guided, 1.0, 1.0, 0.0)
                .validate()
                .map_err(|e| Error::Config(format!("[{label}] {e}")))?;
        }
        Ok(())
    }

    pub fn scoring_options(&self) -> Result<ScoringOptions> {
        let s = &self.scoring;
        let mode = match s.deviation_mode.as_str() {
            "direct" => DeviationMode::Direct,
            "surface_projected" => DeviationMode::SurfaceProjected,
            other => {
                return Err(Error::Config(format!(
                    "deviation_mode must be \"direct\" or \"surface_projected\", got \"{other}\""
                )))
            }
        };
        for (name, v) in [("sample_spacing_mm", s.sample_spacing_mm), ("cut_depth_mm", s.cut_depth_mm)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(ScoringOptions {
            sample_spacing: s.sample_spacing_mm,
            cut_depth: s.cut_depth_mm,
            mode,
        })
    }

    pub fn condition(&self, c: Condition) -> &ConditionParams {
        match c {
            Condition::Guided => &self.guided,
            Condition::Unguided => &self.unguided,
        }
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

impl ConditionParams {
    pub fn operator(&self, condition: Condition, skill: f64, speed: f64, bias_z: f64) -> OperatorModel {
        OperatorModel {
            condition,
            lateral_error_sigma: self.lateral_error_sigma_mm * skill,
            lateral_error_correlation_length: self.correlation_length_mm,
            systematic_bias: self.bias_mean_mm + self.bias_sd_mm * bias_z,
            cut_speed: self.cut_speed_mm_s * speed,
            pause_count_mean: self.pause_count_mean,
            pause_duration_mean: self.pause_duration_mean_s,
        }
    }

    /// No error, no pauses.
    pub fn exact(cut_speed_mm_s: f64) -> Self {
        Self {
            lateral_error_sigma_mm: 0.0,
            correlation_length_mm: 20.0,
            bias_mean_mm: 0.0,
            bias_sd_mm: 0.0,
            cut_speed_mm_s,
            pause_count_mean: 0.0,
            pause_duration_mean_s: 0.0,
        }
    }
}
