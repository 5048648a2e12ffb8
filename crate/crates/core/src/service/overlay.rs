//! Overlay payloads: what the trial UI draws for each condition.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Point3, TriangleMesh, Vec3};
use crate::planning::ResectionPlan;
use crate::sim::{Condition, CutTrace, TraceSample};

/// Extra radius around the tumor footprint where the bump can be felt (mm).
pub const PALPATION_BLUR_MM: f64 = 5.0;
const LIFT_HEIGHT_MM: f64 = 1000.0;

/// Orthographic top view of the capsule, looking along `-normal`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Projection {
    pub origin: [f64; 3],
    pub u_axis: [f64; 3],
    pub v_axis: [f64; 3],
    /// Toward the viewer.
    pub normal: [f64; 3],
}

impl Projection {
    pub fn for_plan(plan: &ResectionPlan) -> Self {
        let n = plan.mean_normal();
        let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let u = (helper - n * helper.dot(&n)).normalize();
        let v = n.cross(&u);
        Self {
            origin: plan.path().centroid().coords.into(),
            u_axis: u.into(),
            v_axis: v.into(),
            normal: n.into(),
        }
    }

    fn axes(&self) -> (Point3, Vec3, Vec3, Vec3) {
        (
            Point3::from(self.origin),
            Vec3::from(self.u_axis),
            Vec3::from(self.v_axis),
            Vec3::from(self.normal),
        )
    }

    pub fn to_uv(&self, p: &Point3) -> [f64; 2] {
        let (o, u, v, _) = self.axes();
        let d = p - o;
        [d.dot(&u), d.dot(&v)]
    }

    /// Point on the projection plane.
    pub fn from_uv(&self, uv: [f64; 2]) -> Point3 {
        let (o, u, v, _) = self.axes();
        o + u * uv[0] + v * uv[1]
    }
}

/// Counter-clockwise convex hull (monotone chain).
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    hull
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CueStyle {
    pub color: &'static str,
    pub opacity: f64,
    pub dashed: bool,
    pub width_px: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Styling {
    pub liver_hologram: CueStyle,
    pub path: CueStyle,
    pub tumor_highlight: CueStyle,
    pub safe_zone: CueStyle,
}

impl Default for Styling {
    fn default() -> Self {
        Self {
            liver_hologram: CueStyle {
                color: "#6fae7f",
                opacity: 0.4,
                dashed: false,
                width_px: 1.0,
            },
            path: CueStyle {
                color: "#ffd400",
                opacity: 1.0,
                dashed: true,
                width_px: 4.0,
            },
            tumor_highlight: CueStyle {
                color: "#ff2a2a",
                opacity: 0.9,
                dashed: false,
                width_px: 2.0,
            },
            safe_zone: CueStyle {
                color: "#ff2a2a",
                opacity: 0.25,
                dashed: false,
                width_px: 0.0,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PalpationHint {
    pub center_uv: [f64; 2],
    pub radius_mm: f64,
}

/// Rendering payload for one trial. Guided trials carry every cue; unguided
/// trials carry only the phantom outline and, optionally, the palpation hint.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Overlay {
    pub session_id: String,
    pub trial_index: usize,
    pub condition: &'static str,
    pub projection: Projection,
    pub liver_outline: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<[f64; 3]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tumor_silhouette: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub safe_zone: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub palpation_hint: Option<PalpationHint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub styling: Option<Styling>,
}

/// Everything an overlay needs, computed once per plan.
#[derive(Clone, Debug)]
pub struct OverlayGeometry {
    pub projection: Projection,
    pub liver_outline: Vec<[f64; 2]>,
    pub path: Vec<[f64; 3]>,
    pub tumor_silhouette: Vec<[f64; 2]>,
    pub safe_zone: Vec<[f64; 2]>,
    pub palpation: PalpationHint,
}

impl OverlayGeometry {
    pub fn new(plan: &ResectionPlan) -> Self {
        let projection = Projection::for_plan(plan);
        let project_all = |m: &TriangleMesh| -> Vec<[f64; 2]> { m.vertices().iter().map(|p| projection.to_uv(p)).collect() };
        let tumor_silhouette = convex_hull(&project_all(plan.tumor()));
        let center = projection.to_uv(&plan.tumor().centroid());
        let reach = tumor_silhouette
            .iter()
            .map(|q| ((q[0] - center[0]).powi(2) + (q[1] - center[1]).powi(2)).sqrt())
            .fold(0.0, f64::max);
        Self {
            projection,
            liver_outline: convex_hull(&project_all(plan.liver())),
            path: plan.path().points().iter().map(|p| p.coords.into()).collect(),
            tumor_silhouette,
            safe_zone: plan.path().points().iter().map(|p| projection.to_uv(p)).collect(),
            palpation: PalpationHint {
                center_uv: center,
                radius_mm: reach + PALPATION_BLUR_MM,
            },
        }
    }

    pub fn payload(&self, session_id: &str, trial_index: usize, condition: Condition, palpation: bool) -> Overlay {
        let guided = condition == Condition::Guided;
        Overlay {
            session_id: session_id.to_string(),
            trial_index,
            condition: condition.as_str(),
            projection: self.projection,
            liver_outline: self.liver_outline.clone(),
            path: guided.then(|| self.path.clone()),
            tumor_silhouette: guided.then(|| self.tumor_silhouette.clone()),
            safe_zone: guided.then(|| self.safe_zone.clone()),
            palpation_hint: (!guided && palpation).then(|| self.palpation.clone()),
            styling: guided.then(Styling::default),
        }
    }
}

fn ray_triangle(origin: &Point3, dir: &Vec3, [a, b, c]: [Point3; 3]) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = s.dot(&p) * inv;
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < -1e-12 || u + v > 1.0 + 1e-12 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t >= 0.0).then_some(t)
}

/// Drops each sample onto the first liver surface hit when looking along
/// `-normal` from far above, keeping timestamps.
pub fn lift_to_surface(trace: &CutTrace, liver: &TriangleMesh, projection: &Projection) -> Result<CutTrace> {
    let n = Vec3::from(projection.normal);
    let down = -n;
    let faces: Vec<([Point3; 3], [f64; 4])> = (0..liver.faces().len())
        .map(|f| {
            let tri = liver.triangle(f);
            let uv: Vec<[f64; 2]> = tri.iter().map(|p| projection.to_uv(p)).collect();
            let bounds = [
                uv.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min),
                uv.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max),
                uv.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min),
                uv.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max),
            ];
            (tri, bounds)
        })
        .collect();
    let samples = trace
        .samples()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let [u, v] = projection.to_uv(&s.position);
            let origin = projection.from_uv([u, v]) + n * LIFT_HEIGHT_MM;
            let t = faces
                .iter()
                .filter(|(_, b)| u >= b[0] - 1e-9 && u <= b[1] + 1e-9 && v >= b[2] - 1e-9 && v <= b[3] + 1e-9)
                .filter_map(|(tri, _)| ray_triangle(&origin, &down, *tri))
                .fold(f64::INFINITY, f64::min);
            if !t.is_finite() {
                return Err(Error::InvalidTrace(format!("sample {i}: ({u:.3}, {v:.3}) is off the phantom")));
            }
            Ok(TraceSample {
                t_ms: s.t_ms,
                position: origin + down * t,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    CutTrace::with_rate(samples, trace.condition(), trace.seed(), trace.sample_rate_hz())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planning::demo::demo_plan;

    #[test]
    fn hull_of_square_with_interior_points() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5], [0.2, 0.7]];
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        let area: f64 = (0..h.len())
            .map(|i| {
                let (a, b) = (h[i], h[(i + 1) % h.len()]);
                a[0] * b[1] - b[0] * a[1]
            })
            .sum::<f64>()
            / 2.0;
        assert!((area - 1.0).abs() < 1e-12);
    }

    #[test]
    fn payloads_follow_the_condition_contract() {
        let plan = demo_plan().unwrap();
        let g = OverlayGeometry::new(&plan);
        let guided = g.payload("s-1", 0, Condition::Guided, true);
        let path = guided.path.as_ref().unwrap();
        assert_eq!(path.len(), plan.path().len());
        for (a, b) in path.iter().zip(plan.path().points()) {
            assert_eq!(Point3::from(*a), *b);
        }
        assert!(guided.safe_zone.is_some() && guided.tumor_silhouette.is_some());
        assert!(guided.palpation_hint.is_none());
        assert_eq!(guided.styling.as_ref().unwrap().liver_hologram.opacity, 0.4);

        let unguided = g.payload("s-1", 1, Condition::Unguided, true);
        assert!(unguided.path.is_none() && unguided.safe_zone.is_none() && unguided.tumor_silhouette.is_none());
        assert!(unguided.palpation_hint.is_some());
        assert!(g.payload("s-1", 1, Condition::Unguided, false).palpation_hint.is_none());
        let json = serde_json::to_string(&unguided).unwrap();
        assert!(!json.contains("\"path\"") && !json.contains("safe_zone"));
    }

    #[test]
    fn lifting_a_projected_path_recovers_the_surface_path() {
        let plan = demo_plan().unwrap();
        let proj = Projection::for_plan(&plan);
        let samples = plan
            .path()
            .points()
            .iter()
            .enumerate()
            .map(|(i, p)| TraceSample {
                t_ms: i as f64 * 16.0,
                position: proj.from_uv(proj.to_uv(p)),
            })
            .collect();
        let flat = CutTrace::new(samples, Condition::Guided, 0).unwrap();
        let lifted = lift_to_surface(&flat, plan.liver(), &proj).unwrap();
        for (a, b) in lifted.samples().iter().zip(plan.path().points()) {
            assert!((a.position - b).norm() < 0.05, "{} vs {b}", a.position);
        }
        let off = CutTrace::new(
            vec![
                TraceSample {
                    t_ms: 0.0,
                    position: proj.from_uv([500.0, 0.0]),
                },
                TraceSample {
                    t_ms: 1.0,
                    position: proj.from_uv([501.0, 0.0]),
                },
            ],
            Condition::Guided,
            0,
        )
        .unwrap();
        assert!(lift_to_surface(&off, plan.liver(), &proj).is_err());
    }
}
