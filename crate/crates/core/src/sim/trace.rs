//! Timestamped scalpel-tip traces and their text format.
//!
//! ```text
//! #trace v1
//! #condition guided
//! #seed 42
//! #sample_rate_hz 60
//! 0 12.5 -3.25 40.125
//! 16.666666666666668 12.6 -3.2 40.1
//! ```
//!
//! Sample lines are `t_ms x y z`. `#condition` is required; `#seed` defaults
//! to 0 and `#sample_rate_hz` to 60.

use std::fmt::Write as _;
use std::path::Path;

use super::{Condition, SAMPLE_RATE_HZ};
use crate::error::{Error, Result};
use crate::geometry::io::Lines;
use crate::geometry::{Point3, Polyline3, RigidTransform};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceSample {
    pub t_ms: f64,
    pub position: Point3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CutTrace {
    samples: Vec<TraceSample>,
    condition: Condition,
    seed: u64,
    sample_rate_hz: f64,
}

impl CutTrace {
    pub fn new(samples: Vec<TraceSample>, condition: Condition, seed: u64) -> Result<Self> {
        Self::with_rate(samples, condition, seed, SAMPLE_RATE_HZ)
    }

    pub fn with_rate(
        samples: Vec<TraceSample>,
        condition: Condition,
        seed: u64,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidTrace(format!(
                "{} sample(s), at least 2 required",
                samples.len()
            )));
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.t_ms.is_finite() || s.position.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidTrace(format!("sample {i}: non-finite value")));
            }
            if i > 0 && s.t_ms <= samples[i - 1].t_ms {
                return Err(Error::InvalidTrace(format!(
                    "sample {i}: timestamp {} ms not after {} ms",
                    s.t_ms,
                    samples[i - 1].t_ms
                )));
            }
        }
        if !(sample_rate_hz > 0.0) || !sample_rate_hz.is_finite() {
            return Err(Error::InvalidTrace(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        Ok(Self {
            samples,
            condition,
            seed,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[TraceSample] {
        &self.samples
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn positions(&self) -> Vec<Point3> {
        self.samples.iter().map(|s| s.position).collect()
    }

    pub fn duration_ms(&self) -> f64 {
        self.samples[self.samples.len() - 1].t_ms - self.samples[0].t_ms
    }

    /// Open polyline through the sample positions, with repeated positions merged.
    pub fn polyline(&self) -> Result<Polyline3> {
        Polyline3::new_dedup(self.positions(), false).map_err(|_| {
            Error::InvalidTrace("trace positions do not span two distinct points".into())
        })
    }

    pub fn transformed(&self, t: &RigidTransform) -> CutTrace {
        CutTrace {
            samples: self
                .samples
                .iter()
                .map(|s| TraceSample {
                    t_ms: s.t_ms,
                    position: t.transform_point(&s.position),
                })
                .collect(),
            ..self.clone()
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.samples.len() * 64);
        s.push_str("#trace v1\n");
        let _ = writeln!(s, "#condition {}", self.condition);
        let _ = writeln!(s, "#seed {}", self.seed);
        let _ = writeln!(s, "#sample_rate_hz {}", self.sample_rate_hz);
        for p in &self.samples {
            let _ = writeln!(
                s,
                "{} {} {} {}",
                p.t_ms, p.position.x, p.position.y, p.position.z
            );
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        let mut condition = None;
        let mut seed = 0u64;
        let mut rate = SAMPLE_RATE_HZ;
        let mut samples = Vec::new();
        while let Some((off, line)) = lines.next_line() {
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if let Some(directive) = t.strip_prefix('#') {
                let mut parts = directive.split_whitespace();
                let key = parts.next().unwrap_or_default();
                let value = parts.next().unwrap_or_default();
                match key {
                    "trace" if value != "v1" => {
                        return Err(Error::parse(off, format!("unsupported trace version '{value}'")))
                    }
                    "condition" => {
                        condition = Some(value.parse().map_err(|e: Error| Error::parse(off, e.to_string()))?)
                    }
                    "seed" => {
                        seed = value
                            .parse()
                            .map_err(|_| Error::parse(off, format!("bad seed '{value}'")))?
                    }
                    "sample_rate_hz" => {
                        rate = value
                            .parse()
                            .map_err(|_| Error::parse(off, format!("bad sample rate '{value}'")))?
                    }
                    _ => {}
                }
                continue;
            }
            let vals: Vec<f64> = t
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| {
                    Error::InvalidTrace(format!("sample {}: expected 't_ms x y z', got '{t}'", samples.len()))
                })?;
            if vals.len() != 4 {
                return Err(Error::InvalidTrace(format!(
                    "sample {}: expected 't_ms x y z', got '{t}'",
                    samples.len()
                )));
            }
            samples.push(TraceSample {
                t_ms: vals[0],
                position: Point3::new(vals[1], vals[2], vals[3]),
            });
        }
        let condition =
            condition.ok_or_else(|| Error::parse(0, "missing '#condition' directive"))?;
        Self::with_rate(samples, condition, seed, rate)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t_ms: f64, x: f64) -> TraceSample {
        TraceSample {
            t_ms,
            position: Point3::new(x, 0.1 * x, -x),
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let samples = (0..50)
            .map(|k| sample(k as f64 * 1000.0 / 60.0, (k as f64 * 0.37).sin() * 13.3))
            .collect();
        let t = CutTrace::new(samples, Condition::Unguided, 99).unwrap();
        let back = CutTrace::parse(&t.to_text()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_text(), t.to_text());
    }

    #[test]
    fn validation_names_first_bad_sample() {
        let err = CutTrace::new(
            vec![sample(0.0, 0.0), sample(10.0, 1.0), sample(10.0, 2.0), sample(5.0, 3.0)],
            Condition::Guided,
            0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("sample 2"), "{err}");
        assert!(CutTrace::new(vec![sample(0.0, 0.0)], Condition::Guided, 0).is_err());
        let text = "#condition guided\n0 0 0 0\n5 1 1 1\n3 2 2 2\n";
        assert!(matches!(CutTrace::parse(text), Err(Error::InvalidTrace(_))));
        assert!(CutTrace::parse("0 0 0 0\n5 1 1 1\n").is_err());
        assert!(CutTrace::parse("#condition guided\n0 0 0\n").is_err());
    }

    #[test]
    fn duration_and_polyline() {
        let t = CutTrace::new(
            vec![sample(100.0, 0.0), sample(200.0, 0.0), sample(1100.0, 3.0)],
            Condition::Guided,
            0,
        )
        .unwrap();
        assert_eq!(t.duration_ms(), 1000.0);
        assert_eq!(t.polyline().unwrap().len(), 2);
        let still = CutTrace::new(vec![sample(0.0, 1.0), sample(1.0, 1.0)], Condition::Guided, 0).unwrap();
        assert!(still.polyline().is_err());
    }
}
