#![allow(dead_code)]

use rand::Rng;
use resect_core::geometry::{Point3, Polyline3, RigidTransform, Vec3};

/// Random smooth closed loop and an open trace wandering around it.
pub fn random_trace_and_path<R: Rng>(rng: &mut R) -> (Polyline3, Polyline3) {
    let radius = rng.random_range(15.0..40.0);
    let harmonics: Vec<(f64, f64)> = (2..5)
        .map(|_| (rng.random_range(-0.08..0.08), rng.random_range(0.0..std::f64::consts::TAU)))
        .collect();
    let shape = |a: f64| {
        let r = radius * (1.0 + harmonics.iter().enumerate().map(|(k, (amp, ph))| amp * ((k + 2) as f64 * a + ph).cos()).sum::<f64>());
        let z = 0.1 * radius * (a + harmonics[0].1).sin();
        (r, z)
    };
    let pose = RigidTransform::from_axis_angle(
        Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0),
        rng.random_range(0.0..1.0),
        Vec3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), 0.0),
    );
    let n_path = 240;
    let path: Vec<Point3> = (0..n_path)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / n_path as f64;
            let (r, z) = shape(a);
            pose.transform_point(&Point3::new(r * a.cos(), r * a.sin(), z))
        })
        .collect();

    let amp = rng.random_range(0.5..6.0);
    let waves: Vec<(f64, f64, f64)> = (0..4)
        .map(|k| {
            (
                amp * rng.random_range(-1.0..1.0) / (k + 1) as f64,
                (k + 1) as f64 * rng.random_range(1.0..4.0),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let start = rng.random_range(0.0..std::f64::consts::TAU);
    let sweep = rng.random_range(0.6..1.0) * std::f64::consts::TAU;
    let n_trace = 2000;
    let trace: Vec<Point3> = (0..n_trace)
        .map(|i| {
            let a = start + sweep * i as f64 / (n_trace - 1) as f64;
            let (r, z) = shape(a);
            let dr: f64 = waves.iter().map(|(w, f, p)| w * (f * a + p).sin()).sum();
            let dz: f64 = waves.iter().map(|(w, f, p)| 0.5 * w * (f * a + 2.0 * p).cos()).sum();
            pose.transform_point(&Point3::new((r + dr) * a.cos(), (r + dr) * a.sin(), z + dz))
        })
        .collect();
    (
        Polyline3::new(trace, false).unwrap(),
        Polyline3::new(path, true).unwrap(),
    )
}

fn segment_distance(p: &Point3, a: &Point3, b: &Point3) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Mean and max distance from `n` equally spaced arc-length samples of the
/// trace to the path, by exhaustive search over path segments.
pub fn dense_deviation(trace: &Polyline3, path: &Polyline3, n: usize) -> (f64, f64) {
    let pts = trace.points();
    let seg_len: Vec<f64> = pts.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let total: f64 = seg_len.iter().sum();
    let ring: Vec<Point3> = path.points().iter().chain(path.points().first()).copied().collect();
    let (mut sum, mut max) = (0.0, 0.0f64);
    let mut seg = 0;
    let mut before = 0.0;
    for k in 0..n {
        let s = total * (k as f64 + 0.5) / n as f64;
        while seg + 1 < seg_len.len() && before + seg_len[seg] < s {
            before += seg_len[seg];
            seg += 1;
        }
        let u = ((s - before) / seg_len[seg]).clamp(0.0, 1.0);
        let p = pts[seg] + (pts[seg + 1] - pts[seg]) * u;
        let mut d = f64::INFINITY;
        for w in ring.windows(2) {
            let mid = nalgebra::center(&w[0], &w[1]);
            if (p - mid).norm() - 0.5 * (w[1] - w[0]).norm() < d {
                d = d.min(segment_distance(&p, &w[0], &w[1]));
            }
        }
        sum += d;
        max = max.max(d);
    }
    (sum / n as f64, max)
}
