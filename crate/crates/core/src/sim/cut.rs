//! Operator cut traces and the cut surfaces derived from them.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};

use super::gp::sample_se_process;
use super::trace::{CutTrace, TraceSample};
use super::{NoiseModel, OperatorModel, CHANNEL_JITTER, CHANNEL_LATERAL, CHANNEL_PAUSES, SAMPLE_RATE_HZ};
use crate::error::{Error, Result};
use crate::geometry::{Point3, TriangleMesh, Vec3};
use crate::planning::ResectionPlan;
use crate::rng;

/// Pauses as (arc position mm, duration ms), sorted by position.
fn draw_pauses(op: &OperatorModel, length: f64, seed: u64) -> Vec<(f64, f64)> {
    if op.pause_count_mean == 0.0 || op.pause_duration_mean == 0.0 {
        return Vec::new();
    }
    let mut rng = rng::substream(seed, CHANNEL_PAUSES, 0);
    let count = Poisson::new(op.pause_count_mean)
        .expect("validated")
        .sample(&mut rng) as usize;
    let duration = Exp::new(1.0 / op.pause_duration_mean).expect("validated");
    let mut pauses: Vec<(f64, f64)> = (0..count)
        .map(|_| {
            let at = rng.random_range(0.0..length);
            (at, duration.sample(&mut rng) * 1000.0)
        })
        .collect();
    pauses.sort_by(|a, b| a.0.total_cmp(&b.0));
    pauses
}

/// Simulates one pass around the plan path in model coordinates.
///
/// The tip advances at `cut_speed` and is sampled at 60 Hz, plus a final
/// sample at the end of the path. Its position is the path point displaced
/// laterally (in the surface tangent plane, outward positive) by the bias plus
/// a smooth Gaussian-process error, plus isotropic tracker jitter. Pauses
/// delay later timestamps without moving any sample.
pub fn simulate_cut_trace(
    plan: &ResectionPlan,
    op: &OperatorModel,
    noise: &NoiseModel,
    seed: u64,
) -> Result<CutTrace> {
    op.validate()?;
    noise.validate()?;
    let path = plan.path();
    let normals = plan.path_normals();
    let cum = path.cumulative_lengths();
    let length = *cum.last().unwrap();
    let moving_ms = length / op.cut_speed * 1000.0;

    let lateral = sample_se_process(
        length,
        op.lateral_error_sigma,
        op.lateral_error_correlation_length,
        &mut rng::substream(seed, CHANNEL_LATERAL, 0),
    );
    let mut jitter_rng = rng::substream(seed, CHANNEL_JITTER, 0);
    let jitter = (noise.tracker_jitter_sigma > 0.0)
        .then(|| Normal::new(0.0, noise.tracker_jitter_sigma).expect("validated"));
    let pauses = draw_pauses(op, length, seed);

    let step_ms = 1000.0 / SAMPLE_RATE_HZ;
    let mut arc_times: Vec<f64> = (0..)
        .map(|k| k as f64 * step_ms)
        .take_while(|&t| t < moving_ms - 1e-9 * moving_ms.max(1.0))
        .collect();
    arc_times.push(moving_ms);

    let mut samples = Vec::with_capacity(arc_times.len());
    let mut next_pause = 0;
    let mut paused_ms = 0.0;
    for (k, &t) in arc_times.iter().enumerate() {
        let s = if k + 1 == arc_times.len() {
            length
        } else {
            t / 1000.0 * op.cut_speed
        };
        while next_pause < pauses.len() && pauses[next_pause].0 < s {
            paused_ms += pauses[next_pause].1;
            next_pause += 1;
        }
        let (seg, u) = path.locate(s, &cum);
        let (a, b) = path.segment(seg);
        let base = a + (b - a) * u;
        let offset = op.systematic_bias + lateral.at(s);
        let mut position = base;
        if offset != 0.0 {
            let n0 = normals[seg];
            let n1 = normals[(seg + 1) % normals.len()];
            let normal = (n0 * (1.0 - u) + n1 * u).normalize();
            let side = (b - a).cross(&normal).normalize();
            position += side * offset;
        }
        if let Some(j) = &jitter {
            position += Vec3::new(
                j.sample(&mut jitter_rng),
                j.sample(&mut jitter_rng),
                j.sample(&mut jitter_rng),
            );
        }
        samples.push(TraceSample {
            t_ms: t + paused_ms,
            position,
        });
    }
    CutTrace::new(samples, op.condition, seed)
}

#[derive(Clone, Debug)]
pub struct CutSurface {
    pub mesh: TriangleMesh,
    /// Crossings between non-adjacent trace segments, seen along the cut direction.
    pub self_crossings: usize,
    /// Zero-area triangles left out, from repeated trace positions.
    pub dropped_faces: usize,
}

/// Ruled surface from the trace down to `depth` along the inward cut direction.
///
/// The inward direction is the negated Newell normal of the trace, which is
/// the outward capsule normal for a counter-clockwise loop. Vertices `0..n`
/// are the trace samples and `n..2n` their extruded copies.
pub fn derive_cut_surface(trace: &CutTrace, depth: f64) -> Result<CutSurface> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(Error::InvalidArgument(format!("cut depth must be positive, got {depth}")));
    }
    if trace.len() < 3 {
        return Err(Error::InvalidTrace(format!(
            "{} samples, at least 3 required for a cut surface",
            trace.len()
        )));
    }
    let top = trace.positions();
    let normal = newell(&top);
    if normal.norm() < 1e-9 {
        return Err(Error::InvalidTrace(
            "trace encloses no area, cut direction undefined".into(),
        ));
    }
    let down = -normal.normalize();
    let n = top.len();
    let mut vertices = top.clone();
    vertices.extend(top.iter().map(|p| p + down * depth));
    let mut faces = Vec::with_capacity(2 * (n - 1));
    for i in 0..n - 1 {
        let (t0, t1, b0, b1) = (i as u32, i as u32 + 1, (n + i) as u32, (n + i + 1) as u32);
        faces.push([t0, t1, b1]);
        faces.push([t0, b1, b0]);
    }
    let (mesh, dropped_faces) = TriangleMesh::new_dropping_degenerate(vertices, faces)?;
    Ok(CutSurface {
        mesh,
        self_crossings: count_crossings(&top, &down),
        dropped_faces,
    })
}

fn newell(points: &[Point3]) -> Vec3 {
    let mut n = Vec3::zeros();
    for i in 0..points.len() {
        let a = points[i];
        let b = points[(i + 1) % points.len()];
        n.x += (a.y - b.y) * (a.z + b.z);
        n.y += (a.z - b.z) * (a.x + b.x);
        n.z += (a.x - b.x) * (a.y + b.y);
    }
    n
}

fn count_crossings(points: &[Point3], axis: &Vec3) -> usize {
    let u = axis.cross(&if axis.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() }).normalize();
    let v = axis.cross(&u);
    let flat: Vec<[f64; 2]> = points.iter().map(|p| [p.coords.dot(&u), p.coords.dot(&v)]).collect();
    let segs = flat.len() - 1;
    let cell = (0..segs)
        .map(|i| dist2(flat[i], flat[i + 1]).sqrt())
        .fold(0.0, f64::max)
        .max(1e-6)
        * 4.0;
    let key = |p: [f64; 2]| ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for i in 0..segs {
        let (k0, k1) = (key(flat[i]), key(flat[i + 1]));
        for x in k0.0.min(k1.0)..=k0.0.max(k1.0) {
            for y in k0.1.min(k1.1)..=k0.1.max(k1.1) {
                grid.entry((x, y)).or_default().push(i);
            }
        }
    }
    let mut pairs = std::collections::HashSet::new();
    for bucket in grid.values() {
        for (x, &i) in bucket.iter().enumerate() {
            for &j in &bucket[x + 1..] {
                let (i, j) = (i.min(j), i.max(j));
                if j <= i + 1 || (i == 0 && j == segs - 1) || pairs.contains(&(i, j)) {
                    continue;
                }
                if segments_cross(flat[i], flat[i + 1], flat[j], flat[j + 1]) {
                    pairs.insert((i, j));
                }
            }
        }
    }
    pairs.len()
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}
