//! Synthetic two-condition study: participants, counterbalanced order,
//! registration, simulated cuts, scoring and analysis.

mod config;

pub use config::*;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform, TriangleMesh};
use crate::metrics::{format_metrics_csv, score_trial, ScoringOptions, TrialMetrics};
use crate::planning::demo::{demo_fiducials, demo_plan, demo_world_pose};
use crate::planning::manifest::load_plan;
use crate::planning::{validate_plan, ResectionPlan};
use crate::registration::io::load_fiducials;
use crate::registration::{horn_absolute_orientation, DriftModel, FiducialSet};
use crate::rng;
use crate::sim::{
    simulate_cut_trace, simulate_fiducial_capture, Condition, CutTrace, NoiseModel, TraceSample, CHANNEL_DRIFT,
    CHANNEL_ORDER, CHANNEL_PARTICIPANT,
};
use crate::stats::{analyze, describe, Analysis, Description};

pub const REPORT_FILE: &str = "report.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const STATS_FILE: &str = "stats.csv";
pub const PARTICIPANTS_FILE: &str = "participants.csv";

const CAPTURE_SEED_BASE: u64 = 100;

pub fn participant_id(index: usize) -> String {
    format!("p{:02}", index + 1)
}

/// Which participants do the guided trial first.
///
/// With order randomization, exactly half start guided when `n` is even;
/// for odd `n` the leftover participant's order is a coin flip. Without it,
/// orders alternate starting with guided.
pub fn condition_orders(n: usize, seed: u64, randomize: bool) -> Vec<bool> {
    if !randomize {
        return (0..n).map(|i| i % 2 == 0).collect();
    }
    let mut rng = rng::substream(seed, CHANNEL_ORDER, 0);
    let mut orders: Vec<bool> = (0..n / 2).flat_map(|_| [true, false]).collect();
    if n % 2 == 1 {
        orders.push(rng.random());
    }
    orders.shuffle(&mut rng);
    orders
}

/// Three well-spread liver vertices: the one farthest from the centroid, the
/// one farthest from it, and the one farthest from the line through both.
pub fn spread_fiducials(liver: &TriangleMesh) -> Result<FiducialSet> {
    let v = liver.vertices();
    if v.len() < 3 {
        return Err(Error::EmptyMesh);
    }
    let c = liver.centroid();
    let far = |from: &dyn Fn(&Point3) -> f64| {
        (0..v.len())
            .max_by(|&a, &b| from(&v[a]).total_cmp(&from(&v[b])).then(b.cmp(&a)))
            .expect("non-empty")
    };
    let a = far(&|p| (p - c).norm());
    let b = far(&|p| (p - v[a]).norm());
    let axis = (v[b] - v[a]).normalize();
    let d = far(&|p| {
        let r = p - v[a];
        (r - axis * r.dot(&axis)).norm()
    });
    FiducialSet::model_only(
        ["fiducial-1", "fiducial-2", "fiducial-3"].iter().map(|s| s.to_string()).collect(),
        vec![v[a], v[b], v[d]],
    )
}

/// Plan, fiducials and true phantom pose for a study.
#[derive(Clone, Debug)]
pub struct StudyScene {
    pub plan: ResectionPlan,
    pub fiducials: FiducialSet,
    /// Model → world.
    pub world_pose: RigidTransform,
    pub plan_label: String,
}

impl StudyScene {
    pub fn demo() -> Result<Self> {
        Ok(Self {
            plan: demo_plan()?,
            fiducials: demo_fiducials(),
            world_pose: demo_world_pose(),
            plan_label: DEMO_PLAN.into(),
        })
    }

    /// Loads the plan named by the config and checks it before use.
    pub fn from_config(cfg: &StudyConfig) -> Result<Self> {
        let mut scene = if cfg.study.plan == DEMO_PLAN {
            Self::demo()?
        } else {
            let path = cfg.resolve(&cfg.study.plan);
            let plan = load_plan(&path)?;
            let report = validate_plan(&plan, plan.liver());
            if !report.all_passed() {
                return Err(Error::PlanInvalid(report.to_string()));
            }
            let fiducials = spread_fiducials(plan.liver())?;
            Self {
                plan,
                fiducials,
                world_pose: demo_world_pose(),
                plan_label: cfg.study.plan.clone(),
            }
        };
        if !cfg.registration.fiducials.is_empty() {
            scene.fiducials = load_fiducials(cfg.resolve(&cfg.registration.fiducials))?;
        }
        Ok(scene)
    }

    pub fn tre_target(&self) -> Point3 {
        self.plan.tumor().centroid()
    }
}

/// Traits drawn once per participant and shared by both conditions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParticipantTraits {
    pub skill: f64,
    pub speed: f64,
    pub bias_z: f64,
}

impl ParticipantTraits {
    pub fn draw(cfg: &StudyConfig, index: usize) -> Self {
        let mut r = rng::substream(cfg.study.seed, CHANNEL_PARTICIPANT, index as u64);
        let mut z = || -> f64 { StandardNormal.sample(&mut r) };
        let (a, b, c) = (z(), z(), z());
        Self {
            skill: (cfg.population.skill_log_sd * a).exp(),
            speed: (cfg.population.speed_log_sd * b).exp(),
            bias_z: c,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticipantRecord {
    pub id: String,
    pub guided_first: bool,
    pub traits: ParticipantTraits,
    pub fre_rms: f64,
    pub fre_mean: f64,
    /// At the tumor centroid.
    pub tre: f64,
    /// Captures until the overlay was confirmed.
    pub registration_attempts: usize,
    pub registration: RigidTransform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyReport {
    pub seed: u64,
    pub plan_label: String,
    pub participants: Vec<ParticipantRecord>,
    /// Participant order, each participant's trials in the order performed.
    pub trials: Vec<TrialMetrics>,
    pub analysis: Analysis,
    pub fre_rms: Description,
    pub tre: Description,
}

/// Maps a trace that followed the overlay into phantom model coordinates.
///
/// The overlay shows the plan at `estimate` (model → world), displaced by
/// drift accumulating from `lead_ms` before the first sample; the phantom
/// sits at `truth`.
pub fn overlay_to_model(
    trace: &CutTrace,
    estimate: &RigidTransform,
    truth: &RigidTransform,
    drift: &DriftModel,
    lead_ms: f64,
) -> Result<CutTrace> {
    let back = truth.inverse();
    let t0 = trace.samples()[0].t_ms;
    let samples = trace
        .samples()
        .iter()
        .map(|s| {
            let world = estimate.transform_point(&s.position) + drift.offset(lead_ms + s.t_ms - t0);
            TraceSample {
                t_ms: s.t_ms,
                position: back.transform_point(&world),
            }
        })
        .collect();
    CutTrace::with_rate(samples, trace.condition(), trace.seed(), trace.sample_rate_hz())
}

fn trial_seed(participant_seed: u64, c: Condition) -> u64 {
    rng::derive_seed(
        participant_seed,
        match c {
            Condition::Guided => 1,
            Condition::Unguided => 2,
        },
    )
}

/// Everything one participant produces: registration, traces, metrics.
#[derive(Clone, Debug)]
pub struct ParticipantRun {
    pub record: ParticipantRecord,
    /// Model-frame traces in the order performed.
    pub traces: Vec<CutTrace>,
    pub metrics: Vec<TrialMetrics>,
}

pub fn run_participant(
    cfg: &StudyConfig,
    scene: &StudyScene,
    scoring: &ScoringOptions,
    index: usize,
    guided_first: bool,
) -> Result<ParticipantRun> {
    let id = participant_id(index);
    let pseed = rng::derive_seed(cfg.study.seed, index as u64);
    let traits = ParticipantTraits::draw(cfg, index);

    let capture_noise = NoiseModel {
        fiducial_sigma: cfg.noise.fiducial_sigma_mm,
        ..NoiseModel::default()
    };
    let target = scene.tre_target();
    let threshold = cfg.registration.confirm_threshold_mm;
    let mut attempts = 0;
    let (reg, tre) = loop {
        attempts += 1;
        let capture_seed = rng::derive_seed(pseed, CAPTURE_SEED_BASE + attempts as u64);
        let captured = simulate_fiducial_capture(&scene.fiducials, &scene.world_pose, &capture_noise, capture_seed)?;
        let reg = horn_absolute_orientation(&captured)?;
        let tre = (reg.transform.transform_point(&target) - scene.world_pose.transform_point(&target)).norm();
        if threshold == 0.0 || tre <= threshold || attempts >= cfg.registration.max_attempts {
            break (reg, tre);
        }
    };
    let drift = if cfg.noise.drift_rate_mm_per_min > 0.0 {
        DriftModel::seeded(cfg.noise.drift_rate_mm_per_min, rng::derive_seed(pseed, CHANNEL_DRIFT))?
    } else {
        DriftModel::none()
    };
    let trace_noise = NoiseModel {
        tracker_jitter_sigma: cfg.noise.tracker_jitter_sigma_mm,
        ..NoiseModel::default()
    };

    let order = if guided_first {
        [Condition::Guided, Condition::Unguided]
    } else {
        [Condition::Unguided, Condition::Guided]
    };
    let mut traces = Vec::with_capacity(2);
    let mut metrics = Vec::with_capacity(2);
    for c in order {
        let op = cfg.condition(c).operator(c, traits.skill, traits.speed, traits.bias_z);
        let raw = simulate_cut_trace(&scene.plan, &op, &trace_noise, trial_seed(pseed, c))?;
        let trace = match c {
            Condition::Guided => overlay_to_model(
                &raw,
                &reg.transform,
                &scene.world_pose,
                &drift,
                cfg.registration.lead_time_s * 1000.0,
            )?,
            Condition::Unguided => raw,
        };
        metrics.push(score_trial(&id, &trace, &scene.plan, scoring)?);
        traces.push(trace);
    }
    Ok(ParticipantRun {
        record: ParticipantRecord {
            id,
            guided_first,
            traits,
            fre_rms: reg.fre_rms,
            fre_mean: reg.fre_mean,
            tre,
            registration_attempts: attempts,
            registration: reg.transform,
        },
        traces,
        metrics,
    })
}

/// Runs every participant, in parallel, and assembles the report in
/// participant order.
pub fn run_study_in(cfg: &StudyConfig, scene: &StudyScene) -> Result<StudyReport> {
    cfg.validate()?;
    let scoring = cfg.scoring_options()?;
    let n = cfg.study.n_participants;
    let orders = condition_orders(n, cfg.study.seed, cfg.study.order_randomization);
    let job = || -> Result<Vec<ParticipantRun>> {
        orders
            .par_iter()
            .enumerate()
            .map(|(i, &g)| run_participant(cfg, scene, &scoring, i, g))
            .collect()
    };
    let runs = if cfg.study.workers == 0 {
        job()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.study.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", cfg.study.workers)))?
            .install(job)?
    };
    let trials: Vec<TrialMetrics> = runs.iter().flat_map(|r| r.metrics.iter().cloned()).collect();
    let participants: Vec<ParticipantRecord> = runs.into_iter().map(|r| r.record).collect();
    let analysis = analyze(&trials, cfg.study.alpha)?;
    let fre: Vec<f64> = participants.iter().map(|p| p.fre_rms).collect();
    let tre: Vec<f64> = participants.iter().map(|p| p.tre).collect();
    Ok(StudyReport {
        seed: cfg.study.seed,
        plan_label: scene.plan_label.clone(),
        participants,
        trials,
        analysis,
        fre_rms: describe(&fre)?,
        tre: describe(&tre)?,
    })
}

pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    run_study_in(cfg, &StudyScene::from_config(cfg)?)
}

fn describe_line(s: &mut String, label: &str, d: &Description) {
    let sd = d.sd.map_or_else(|| "undefined".to_string(), |v| v.to_string());
    let _ = writeln!(
        s,
        "{label} n={} mean={} sd={sd} median={} min={} max={}",
        d.n, d.mean, d.median, d.min, d.max
    );
}

impl StudyReport {
    pub fn report_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "study seed={} plan={}", self.seed, self.plan_label);
        s.push_str(&self.analysis.report_text());
        let _ = writeln!(s, "\n[registration]");
        describe_line(&mut s, "fre_rms", &self.fre_rms);
        describe_line(&mut s, "tre_tumor_centroid", &self.tre);
        let _ = writeln!(s, "\n[participants]");
        for p in &self.participants {
            let order = if p.guided_first { "guided,unguided" } else { "unguided,guided" };
            let _ = writeln!(
                s,
                "{} order={order} fre_rms={} tre={} attempts={}",
                p.id, p.fre_rms, p.tre, p.registration_attempts
            );
        }
        s
    }

    pub fn metrics_csv(&self) -> String {
        format_metrics_csv(&self.trials)
    }

    pub fn participants_csv(&self) -> String {
        let mut s = String::from("participant,first_condition,skill,speed,bias_z,fre_rms_mm,fre_mean_mm,tre_mm,registration_attempts\n");
        for p in &self.participants {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                p.id,
                if p.guided_first { "guided" } else { "unguided" },
                p.traits.skill,
                p.traits.speed,
                p.traits.bias_z,
                p.fre_rms,
                p.fre_mean,
                p.tre,
                p.registration_attempts
            );
        }
        s
    }

    pub fn mean(&self, c: Condition, metric: &str) -> Option<f64> {
        let cmp = self.analysis.comparison(metric)?;
        Some(match c {
            Condition::Guided => cmp.guided.mean,
            Condition::Unguided => cmp.unguided.mean,
        })
    }

    /// Writes the report, metrics, statistics and participant tables.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            (REPORT_FILE, self.report_text()),
            (METRICS_FILE, self.metrics_csv()),
            (STATS_FILE, self.analysis.stats_csv()),
            (PARTICIPANTS_FILE, self.participants_csv()),
        ];
        files
            .into_iter()
            .map(|(name, body)| {
                let p = dir.join(name);
                std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
                Ok(p)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planning::demo::demo_liver;

    #[test]
    fn orders_are_balanced_for_even_n() {
        for seed in 0..200 {
            let o = condition_orders(10, seed, true);
            assert_eq!(o.iter().filter(|&&g| g).count(), 5);
        }
        assert_eq!(condition_orders(4, 0, false), vec![true, false, true, false]);
    }

    #[test]
    fn odd_n_orders_are_balanced_on_average() {
        let mut guided = 0;
        let seeds = 1000;
        for seed in 0..seeds {
            let o = condition_orders(7, seed, true);
            let g = o.iter().filter(|&&g| g).count();
            assert!(g == 3 || g == 4);
            guided += g;
        }
        let frac = guided as f64 / (7 * seeds) as f64;
        assert!((frac - 0.5).abs() < 0.05, "{frac}");
    }

    #[test]
    fn spread_fiducials_are_far_apart() {
        let f = spread_fiducials(&demo_liver()).unwrap();
        let p = f.model_points();
        assert!((p[0] - p[1]).norm() > 150.0);
        assert!((p[2] - p[0]).norm() > 60.0 && (p[2] - p[1]).norm() > 60.0);
    }

    #[test]
    fn identical_frames_leave_the_trace_alone() {
        let samples = (0..5)
            .map(|i| TraceSample {
                t_ms: i as f64 * 10.0,
                position: Point3::new(i as f64, 1.0, 2.0),
            })
            .collect();
        let trace = CutTrace::new(samples, Condition::Guided, 3).unwrap();
        let pose = demo_world_pose();
        let mapped = overlay_to_model(&trace, &pose, &pose, &DriftModel::none(), 0.0).unwrap();
        for (a, b) in mapped.samples().iter().zip(trace.samples()) {
            assert!((a.position - b.position).norm() < 1e-9);
            assert_eq!(a.t_ms, b.t_ms);
        }
        let drift = DriftModel::new(0.6, crate::geometry::Vec3::x()).unwrap();
        let shifted = overlay_to_model(&trace, &RigidTransform::identity(), &RigidTransform::identity(), &drift, 60_000.0)
            .unwrap();
        assert!((shifted.samples()[0].position.x - 0.6).abs() < 1e-12);
    }
}
