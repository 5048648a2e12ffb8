//! Fiducial tables and registration records.
//!
//! Fiducial table, one fiducial per line (`#` starts a comment):
//!
//! ```text
//! label model_x model_y model_z measured_x measured_y measured_z
//! ```
//!
//! Lines with only the four model columns are accepted; their measured
//! side is copied from the model.

use std::fmt::Write as _;
use std::path::Path;

use super::{FiducialSet, LooEntry, RegistrationResult};
use crate::error::{Error, Result};
use crate::geometry::io::Lines;
use crate::geometry::{Point3, RigidTransform};

pub fn parse_fiducials(text: &str) -> Result<FiducialSet> {
    let mut lines = Lines::new(text);
    let (mut labels, mut model, mut measured) = (Vec::new(), Vec::new(), Vec::new());
    while let Some((off, line)) = lines.next_line() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut cols = t.split_whitespace();
        let label = cols.next().unwrap_or_default().to_string();
        let vals: Vec<f64> = cols
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(off, format!("bad number in fiducial line '{t}'")))?;
        if (vals.len() != 3 && vals.len() != 6) || vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(
                off,
                format!("expected 'label mx my mz [wx wy wz]', got '{t}'"),
            ));
        }
        let m = Point3::new(vals[0], vals[1], vals[2]);
        labels.push(label);
        model.push(m);
        measured.push(if vals.len() == 6 {
            Point3::new(vals[3], vals[4], vals[5])
        } else {
            m
        });
    }
    FiducialSet::new(labels, model, measured)
}

pub fn format_fiducials(f: &FiducialSet) -> String {
    let mut s = String::from("# label model_x model_y model_z measured_x measured_y measured_z\n");
    for ((l, m), d) in f.labels().iter().zip(f.model_points()).zip(f.measured_points()) {
        let _ = writeln!(s, "{l} {} {} {} {} {} {}", m.x, m.y, m.z, d.x, d.y, d.z);
    }
    s
}

pub fn load_fiducials(path: impl AsRef<Path>) -> Result<FiducialSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_fiducials(&text)
}

pub fn save_fiducials(path: impl AsRef<Path>, f: &FiducialSet) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_fiducials(f)).map_err(|e| Error::io(path, e))
}

/// Key-value record of a registration.
pub fn format_result(r: &RegistrationResult, labels: &[String]) -> String {
    let q = r.transform.quaternion_wxyz();
    let t = r.transform.translation();
    let mut s = String::new();
    let _ = writeln!(s, "quaternion_wxyz {} {} {} {}", q[0], q[1], q[2], q[3]);
    let _ = writeln!(s, "translation_xyz {} {} {}", t.x, t.y, t.z);
    let _ = writeln!(s, "fre_rms {}", r.fre_rms);
    let _ = writeln!(s, "fre_mean {}", r.fre_mean);
    for (l, v) in labels.iter().zip(&r.residuals) {
        let _ = writeln!(s, "residual {l} {v}");
    }
    if let Some(loo) = &r.leave_one_out {
        for (l, e) in labels.iter().zip(loo) {
            let _ = writeln!(s, "leave_one_out {l} {e}");
        }
    }
    s
}

/// Reads the transform back from a registration record.
pub fn parse_transform(text: &str) -> Result<RigidTransform> {
    let mut lines = Lines::new(text);
    let (mut q, mut t) = (None, None);
    while let Some((off, line)) = lines.next_line() {
        let mut cols = line.split_whitespace();
        let key = cols.next();
        let want = match key {
            Some("quaternion_wxyz") => 4,
            Some("translation_xyz") => 3,
            _ => continue,
        };
        let vals: Vec<f64> = cols
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(off, format!("bad number in '{line}'")))?;
        if vals.len() != want {
            return Err(Error::parse(off, format!("expected {want} values in '{line}'")));
        }
        if want == 4 {
            q = Some([vals[0], vals[1], vals[2], vals[3]]);
        } else {
            t = Some([vals[0], vals[1], vals[2]]);
        }
    }
    match (q, t) {
        (Some(q), Some(t)) => RigidTransform::from_wxyz(q, t),
        _ => Err(Error::parse(
            text.len(),
            "record lacks quaternion_wxyz or translation_xyz",
        )),
    }
}

pub fn load_transform(path: impl AsRef<Path>) -> Result<RigidTransform> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_transform(&text)
}

/// Parses the `leave_one_out` lines of a record.
pub fn parse_leave_one_out(text: &str) -> Vec<(String, LooEntry)> {
    text.lines()
        .filter_map(|line| {
            let mut cols = line.split_whitespace();
            if cols.next()? != "leave_one_out" {
                return None;
            }
            let label = cols.next()?.to_string();
            let entry = match cols.next()? {
                "unobservable" => LooEntry::Unobservable,
                "degenerate" => LooEntry::Degenerate,
                v => LooEntry::Error(v.parse().ok()?),
            };
            Some((label, entry))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registration::register;

    const TABLE: &str = "\
# demo
left-lobe-tip -95 0 5 -94.5 0.2 5.1
right-superior-edge 70 40 30 70.3 39.8 30
gallbladder-fossa 20 -40 -30 19.9 -40.1 -29.7
";

    #[test]
    fn fiducial_table_round_trip() {
        let f = parse_fiducials(TABLE).unwrap();
        assert_eq!(f.labels()[1], "right-superior-edge");
        assert_eq!(f.measured_points()[0], Point3::new(-94.5, 0.2, 5.1));
        assert_eq!(parse_fiducials(&format_fiducials(&f)).unwrap(), f);
    }

    #[test]
    fn model_only_rows_and_errors() {
        let f = parse_fiducials("a 0 0 0\nb 1 0 0\nc 0 1 0\n").unwrap();
        assert_eq!(f.model_points(), f.measured_points());
        let err = parse_fiducials("a 0 0 0\nb 1 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 8, .. }));
        assert!(parse_fiducials("a 0 0 0\nb x 0 0\n").is_err());
    }

    #[test]
    fn record_round_trip() {
        let f = parse_fiducials(TABLE).unwrap();
        let r = register(&f).unwrap();
        let text = format_result(&r, f.labels());
        let t = parse_transform(&text).unwrap();
        let probe = [Point3::new(1.0, 2.0, 3.0), Point3::new(-50.0, 20.0, 7.0)];
        assert!(t.max_point_discrepancy(&r.transform, &probe) < 1e-12);
        let loo = parse_leave_one_out(&text);
        assert_eq!(loo.len(), 3);
        assert_eq!(loo[0].1, LooEntry::Unobservable);
        assert!(text.contains("fre_rms "));
        assert!(parse_transform("fre_rms 1\n").is_err());
    }
}
