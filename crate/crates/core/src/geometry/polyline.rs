use super::{Point3, RigidTransform, Vec3};
use crate::error::{Error, Result};

/// Minimum separation between consecutive points (mm).
pub const MIN_SEPARATION: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Polyline3 {
    points: Vec<Point3>,
    closed: bool,
}

/// Result of a nearest-point query against a polyline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolylineProjection {
    pub point: Point3,
    pub segment: usize,
    /// Parameter along the segment in [0, 1].
    pub t: f64,
    pub distance: f64,
}

impl Polyline3 {
    pub fn new(points: Vec<Point3>, closed: bool) -> Result<Self> {
        let min = if closed { 3 } else { 2 };
        if points.len() < min {
            return Err(Error::InvalidPolyline(format!(
                "{} point(s), need at least {min}",
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidPolyline(format!("point {i} is not finite")));
        }
        let line = Self { points, closed };
        if let Some(s) = (0..line.segment_count()).find(|&s| {
            let (a, b) = line.segment(s);
            (b - a).norm() <= MIN_SEPARATION
        }) {
            return Err(Error::InvalidPolyline(format!(
                "points {s} and {} coincide",
                (s + 1) % line.points.len()
            )));
        }
        Ok(line)
    }

    /// Drops points closer than [`MIN_SEPARATION`] to their predecessor before validating.
    pub fn new_dedup(points: Vec<Point3>, closed: bool) -> Result<Self> {
        let mut kept: Vec<Point3> = Vec::with_capacity(points.len());
        for p in points {
            if kept
                .last()
                .is_none_or(|q: &Point3| (p - q).norm() > MIN_SEPARATION)
            {
                kept.push(p);
            }
        }
        if closed {
            while kept.len() > 1
                && (kept[0] - kept[kept.len() - 1]).norm() <= MIN_SEPARATION
            {
                kept.pop();
            }
        }
        Self::new(kept, closed)
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn segment_count(&self) -> usize {
        if self.closed {
            self.points.len()
        } else {
            self.points.len() - 1
        }
    }

    pub fn segment(&self, s: usize) -> (Point3, Point3) {
        let n = self.points.len();
        (self.points[s], self.points[(s + 1) % n])
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point3, Point3)> + '_ {
        (0..self.segment_count()).map(|s| self.segment(s))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| (b - a).norm()).sum()
    }

    /// Cumulative arc length at each vertex (first entry 0).
    pub fn cumulative_lengths(&self) -> Vec<f64> {
        let mut acc = Vec::with_capacity(self.points.len() + 1);
        let mut s = 0.0;
        acc.push(0.0);
        for (a, b) in self.segments() {
            s += (b - a).norm();
            acc.push(s);
        }
        acc
    }

    /// Point at arc length `s` (wrapped for closed lines, clamped for open ones),
    /// with the unit tangent of the containing segment.
    pub fn point_at(&self, s: f64, cumulative: &[f64]) -> (Point3, Vec3) {
        let (seg, t) = self.locate(s, cumulative);
        let (a, b) = self.segment(seg);
        (a + (b - a) * t, (b - a).normalize())
    }

    /// Segment index and parameter at arc length `s`, wrapped or clamped as in
    /// [`Polyline3::point_at`].
    pub fn locate(&self, s: f64, cumulative: &[f64]) -> (usize, f64) {
        let total = *cumulative.last().unwrap();
        let s = if self.closed {
            s.rem_euclid(total)
        } else {
            s.clamp(0.0, total)
        };
        let seg = match cumulative.partition_point(|&c| c <= s) {
            0 => 0,
            k => (k - 1).min(self.segment_count() - 1),
        };
        let len = cumulative[seg + 1] - cumulative[seg];
        (seg, ((s - cumulative[seg]) / len).clamp(0.0, 1.0))
    }

    /// Nearest point on the line; ties resolve to the lowest segment index.
    pub fn project(&self, p: &Point3) -> PolylineProjection {
        let mut best = PolylineProjection {
            point: self.points[0],
            segment: 0,
            t: 0.0,
            distance: f64::INFINITY,
        };
        let mut best_d2 = f64::INFINITY;
        for (s, (a, b)) in self.segments().enumerate() {
            let (q, t) = closest_point_on_segment(p, &a, &b);
            let d2 = (q - p).norm_squared();
            if d2 < best_d2 {
                best_d2 = d2;
                best = PolylineProjection {
                    point: q,
                    segment: s,
                    t,
                    distance: 0.0,
                };
            }
        }
        best.distance = best_d2.sqrt();
        best
    }

    /// Subdivides every segment uniformly so that consecutive gaps are at most
    /// `spacing`. Original vertices are kept, so the geometry is unchanged.
    pub fn resample(&self, spacing: f64) -> Result<Polyline3> {
        self.resample_with_arc(spacing).map(|(line, _)| line)
    }

    /// [`Polyline3::resample`] plus the source arc length of every output point.
    pub fn resample_with_arc(&self, spacing: f64) -> Result<(Polyline3, Vec<f64>)> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "resample spacing must be positive, got {spacing}"
            )));
        }
        let mut out = Vec::new();
        let mut arc = Vec::new();
        let mut start = 0.0;
        for (a, b) in self.segments() {
            let len = (b - a).norm();
            let n = ((len / spacing) - 1e-12).ceil().max(1.0) as usize;
            for k in 0..n {
                let t = k as f64 / n as f64;
                out.push(a + (b - a) * t);
                arc.push(start + len * t);
            }
            start += len;
        }
        if !self.closed {
            out.push(*self.points.last().unwrap());
            arc.push(start);
        }
        Ok((Polyline3::new(out, self.closed)?, arc))
    }

    pub fn transformed(&self, t: &RigidTransform) -> Polyline3 {
        Polyline3 {
            points: self.points.iter().map(|p| t.transform_point(p)).collect(),
            closed: self.closed,
        }
    }

    pub fn reversed(&self) -> Polyline3 {
        let mut points = self.points.clone();
        if self.closed {
            points[1..].reverse();
        } else {
            points.reverse();
        }
        Polyline3 {
            points,
            closed: self.closed,
        }
    }

    /// Newell area vector. For a closed planar loop its length is twice the
    /// enclosed area and it points along the counter-clockwise normal.
    pub fn area_vector(&self) -> Vec3 {
        let mut n = Vec3::zeros();
        let pts = &self.points;
        let len = pts.len();
        for i in 0..len {
            let a = pts[i];
            let b = pts[(i + 1) % len];
            n.x += (a.y - b.y) * (a.z + b.z);
            n.y += (a.z - b.z) * (a.x + b.x);
            n.z += (a.x - b.x) * (a.y + b.y);
        }
        n
    }

    pub fn centroid(&self) -> Point3 {
        let sum: Vec3 = self.points.iter().map(|p| p.coords).sum();
        Point3::from(sum / self.points.len() as f64)
    }
}

/// Closest point on segment `ab` and its parameter.
pub fn closest_point_on_segment(p: &Point3, a: &Point3, b: &Point3) -> (Point3, f64) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (*a, 0.0);
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (a + ab * t, t)
}

pub fn point_to_polyline_distance(p: &Point3, line: &Polyline3) -> f64 {
    line.project(p).distance
}
