//! Trial outcome metrics: path deviation, resected margin and completion time.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::intersect::meshes_intersect;
use crate::geometry::io::Lines;
use crate::geometry::{MeshBvh, Point3, Polyline3, TriangleMesh};
use crate::planning::ResectionPlan;
use crate::sim::{derive_cut_surface, Condition, CutTrace};

pub const DEFAULT_SAMPLE_SPACING_MM: f64 = 1.0;
pub const DEFAULT_CUT_DEPTH_MM: f64 = 40.0;
pub const CSV_HEADER: &str = "participant,condition,deviation_mean_mm,deviation_max_mm,margin_min_mm,time_s,breach";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DeviationMode {
    /// Straight 3-D distance from each trace sample to the plan path.
    #[default]
    Direct,
    /// Samples are first moved to the nearest liver surface point.
    SurfaceProjected,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Deviation {
    pub mean: f64,
    pub max: f64,
}

/// Nearest-point distance from the resampled trace to the plan path.
///
/// The mean is weighted by arc length (trapezoid rule over the resampled
/// points), so it does not depend on how densely the trace was recorded.
pub fn path_deviation(trace: &CutTrace, plan: &ResectionPlan, sample_spacing: f64) -> Result<Deviation> {
    path_deviation_with(trace, plan, sample_spacing, DeviationMode::Direct)
}

pub fn path_deviation_with(
    trace: &CutTrace,
    plan: &ResectionPlan,
    sample_spacing: f64,
    mode: DeviationMode,
) -> Result<Deviation> {
    let line = trace.polyline()?;
    match mode {
        DeviationMode::Direct => polyline_deviation(&line, plan.path(), sample_spacing),
        DeviationMode::SurfaceProjected => {
            let bvh = MeshBvh::new(plan.liver());
            let moved = line
                .points()
                .iter()
                .map(|p| bvh.nearest(p).map(|n| n.point))
                .collect::<Result<Vec<_>>>()?;
            let moved = Polyline3::new_dedup(moved, false)
                .map_err(|_| Error::InvalidTrace("projected trace collapses to a point".into()))?;
            polyline_deviation(&moved, plan.path(), sample_spacing)
        }
    }
}

/// Deviation of an arbitrary polyline from a reference path.
pub fn polyline_deviation(line: &Polyline3, reference: &Polyline3, sample_spacing: f64) -> Result<Deviation> {
    if !(sample_spacing > 0.0) || !sample_spacing.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "sample spacing must be positive, got {sample_spacing}"
        )));
    }
    let length = line.length();
    if length < sample_spacing {
        return Err(Error::InvalidTrace(format!(
            "trace length {length:.4} mm is shorter than the {sample_spacing} mm sample spacing"
        )));
    }
    let (samples, arc) = line.resample_with_arc(sample_spacing)?;
    let d: Vec<f64> = samples.points().iter().map(|p| reference.project(p).distance).collect();
    let mut integral = 0.0;
    for i in 1..d.len() {
        integral += 0.5 * (d[i - 1] + d[i]) * (arc[i] - arc[i - 1]);
    }
    Ok(Deviation {
        mean: integral / length,
        max: d.iter().copied().fold(0.0, f64::max),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Margin {
    pub min_mm: f64,
    /// The cut surface passes through the tumor.
    pub breach: bool,
}

/// Closest approach between the cut surface and the tumor.
///
/// Vertices of each mesh are measured to the faces of the other and the
/// smaller minimum is returned. Intersecting meshes give 0 with `breach` set.
pub fn margin_accuracy(cut_surface: &TriangleMesh, tumor: &TriangleMesh) -> Result<Margin> {
    if cut_surface.is_empty() || tumor.is_empty() {
        return Err(Error::EmptyMesh);
    }
    if meshes_intersect(cut_surface, tumor) {
        return Ok(Margin {
            min_mm: 0.0,
            breach: true,
        });
    }
    let min_to = |from: &[Point3], to: &TriangleMesh| -> Result<f64> {
        let bvh = MeshBvh::new(to);
        from.iter()
            .map(|p| bvh.distance(p))
            .try_fold(f64::INFINITY, |m, d| d.map(|d| m.min(d)))
    };
    let a = min_to(tumor.vertices(), cut_surface)?;
    let b = min_to(cut_surface.vertices(), tumor)?;
    Ok(Margin {
        min_mm: a.min(b),
        breach: false,
    })
}

/// Seconds from the first to the last sample, pauses included.
pub fn completion_time(trace: &CutTrace) -> f64 {
    trace.duration_ms() / 1000.0
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrialMetrics {
    pub participant: String,
    pub condition: Condition,
    pub deviation_mean: f64,
    pub deviation_max: f64,
    pub margin_min: f64,
    pub completion_time: f64,
    pub breach: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoringOptions {
    pub sample_spacing: f64,
    pub cut_depth: f64,
    pub mode: DeviationMode,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        Self {
            sample_spacing: DEFAULT_SAMPLE_SPACING_MM,
            cut_depth: DEFAULT_CUT_DEPTH_MM,
            mode: DeviationMode::Direct,
        }
    }
}

/// All three metrics for one trace in model coordinates.
pub fn score_trial(
    participant: &str,
    trace: &CutTrace,
    plan: &ResectionPlan,
    options: &ScoringOptions,
) -> Result<TrialMetrics> {
    let deviation = path_deviation_with(trace, plan, options.sample_spacing, options.mode)?;
    let cut = derive_cut_surface(trace, options.cut_depth)?;
    let margin = margin_accuracy(&cut.mesh, plan.tumor())?;
    Ok(TrialMetrics {
        participant: participant.to_string(),
        condition: trace.condition(),
        deviation_mean: deviation.mean,
        deviation_max: deviation.max,
        margin_min: margin.min_mm,
        completion_time: completion_time(trace),
        breach: margin.breach,
    })
}

impl TrialMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.participant,
            self.condition,
            self.deviation_mean,
            self.deviation_max,
            self.margin_min,
            self.completion_time,
            self.breach
        )
    }
}

pub fn format_metrics_csv(rows: &[TrialMetrics]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.csv_row());
    }
    s
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<TrialMetrics>> {
    let mut lines = Lines::new(text);
    let mut rows = Vec::new();
    let mut header_seen = false;
    while let Some((off, line)) = lines.next_line() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if !header_seen {
            if t != CSV_HEADER {
                return Err(Error::parse(off, format!("expected header '{CSV_HEADER}'")));
            }
            header_seen = true;
            continue;
        }
        let cols: Vec<&str> = t.split(',').map(str::trim).collect();
        if cols.len() != 7 {
            return Err(Error::parse(off, format!("expected 7 columns, got {}", cols.len())));
        }
        let num = |i: usize| -> Result<f64> {
            cols[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(off, format!("bad number '{}'", cols[i])))
        };
        rows.push(TrialMetrics {
            participant: cols[0].to_string(),
            condition: cols[1].parse().map_err(|e: Error| Error::parse(off, e.to_string()))?,
            deviation_mean: num(2)?,
            deviation_max: num(3)?,
            margin_min: num(4)?,
            completion_time: num(5)?,
            breach: match cols[6] {
                "true" => true,
                "false" => false,
                other => return Err(Error::parse(off, format!("bad breach flag '{other}'"))),
            },
        });
    }
    if !header_seen {
        return Err(Error::parse(0, "empty metrics file"));
    }
    Ok(rows)
}

pub fn load_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<TrialMetrics>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metrics_csv(&text)
}
