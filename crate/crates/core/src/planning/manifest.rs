//! Plan manifests.
//!
//! A manifest is a key-value text file naming the files of a plan, relative
//! to the manifest's directory:
//!
//! ```text
//! margin_mm 10
//! liver_mesh liver.ply
//! tumor_mesh tumor.ply
//! path path.txt
//! cutting_surface cutting_surface.ply
//! checksum sha256:3f1c...
//! ```
//!
//! The checksum is SHA-256 over the contents of the four files in the order
//! above.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::ResectionPlan;
use crate::error::{Error, Result};
use crate::geometry::io::{format_polyline, load_mesh_auto, load_polyline, write_ply, Lines};

pub const MANIFEST_NAME: &str = "plan.manifest";

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub margin_mm: f64,
    pub liver_mesh: PathBuf,
    pub tumor_mesh: PathBuf,
    pub path: PathBuf,
    pub cutting_surface: PathBuf,
    pub checksum: String,
}

impl Manifest {
    fn files(&self) -> [&Path; 4] {
        [&self.liver_mesh, &self.tumor_mesh, &self.path, &self.cutting_surface]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "margin_mm {}", self.margin_mm);
        for (key, p) in ["liver_mesh", "tumor_mesh", "path", "cutting_surface"]
            .iter()
            .zip(self.files())
        {
            let _ = writeln!(s, "{key} {}", p.display());
        }
        let _ = writeln!(s, "checksum {}", self.checksum);
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        let mut margin = None;
        let (mut liver, mut tumor, mut path, mut cutting, mut checksum) = (None, None, None, None, None);
        while let Some((off, line)) = lines.next_line() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let (key, value) = t
                .split_once(char::is_whitespace)
                .map(|(k, v)| (k, v.trim()))
                .ok_or_else(|| Error::parse(off, format!("expected 'key value', got '{t}'")))?;
            match key {
                "margin_mm" => {
                    margin = Some(
                        value
                            .parse::<f64>()
                            .map_err(|_| Error::parse(off, format!("bad margin '{value}'")))?,
                    )
                }
                "liver_mesh" => liver = Some(PathBuf::from(value)),
                "tumor_mesh" => tumor = Some(PathBuf::from(value)),
                "path" => path = Some(PathBuf::from(value)),
                "cutting_surface" => cutting = Some(PathBuf::from(value)),
                "checksum" => checksum = Some(value.to_string()),
                other => return Err(Error::parse(off, format!("unknown manifest key '{other}'"))),
            }
        }
        let need = |v: Option<PathBuf>, key: &str| {
            v.ok_or_else(|| Error::parse(text.len(), format!("manifest lacks '{key}'")))
        };
        Ok(Self {
            margin_mm: margin.ok_or_else(|| Error::parse(text.len(), "manifest lacks 'margin_mm'"))?,
            liver_mesh: need(liver, "liver_mesh")?,
            tumor_mesh: need(tumor, "tumor_mesh")?,
            path: need(path, "path")?,
            cutting_surface: need(cutting, "cutting_surface")?,
            checksum: checksum.ok_or_else(|| Error::parse(text.len(), "manifest lacks 'checksum'"))?,
        })
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn digest(base: &Path, files: [&Path; 4]) -> Result<String> {
    let mut h = Sha256::new();
    for f in files {
        let full = resolve(base, f);
        let bytes = std::fs::read(&full).map_err(|e| Error::io(&full, e))?;
        h.update(&bytes);
    }
    let hex: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok(format!("sha256:{hex}"))
}

fn write(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes the plan's files and manifest into `dir`; returns the manifest path.
pub fn save_plan(plan: &ResectionPlan, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut m = Manifest {
        margin_mm: plan.target_margin(),
        liver_mesh: "liver.ply".into(),
        tumor_mesh: "tumor.ply".into(),
        path: "path.txt".into(),
        cutting_surface: "cutting_surface.ply".into(),
        checksum: String::new(),
    };
    write(&dir.join(&m.liver_mesh), write_ply(plan.liver()).as_bytes())?;
    write(&dir.join(&m.tumor_mesh), write_ply(plan.tumor()).as_bytes())?;
    write(&dir.join(&m.path), format_polyline(plan.path()).as_bytes())?;
    write(&dir.join(&m.cutting_surface), write_ply(plan.cutting_surface()).as_bytes())?;
    m.checksum = digest(dir, m.files())?;
    let out = dir.join(MANIFEST_NAME);
    write(&out, m.to_text().as_bytes())?;
    Ok(out)
}

/// Loads a plan, verifying the checksum first.
pub fn load_plan(manifest_path: impl AsRef<Path>) -> Result<ResectionPlan> {
    let manifest_path = manifest_path.as_ref();
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let m = Manifest::parse(&text)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let actual = digest(base, m.files())?;
    if actual != m.checksum {
        return Err(Error::Checksum {
            expected: m.checksum,
            actual,
        });
    }
    let liver = load_mesh_auto(resolve(base, &m.liver_mesh))?.mesh;
    let tumor = load_mesh_auto(resolve(base, &m.tumor_mesh))?.mesh;
    let cutting = load_mesh_auto(resolve(base, &m.cutting_surface))?.mesh;
    let path = load_polyline(resolve(base, &m.path))?;
    ResectionPlan::from_parts(liver, tumor, cutting, path, m.margin_mm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::{ellipsoid, flat_grid};
    use crate::geometry::{Point3, Vec3};

    fn plan() -> ResectionPlan {
        let liver = flat_grid(50.0, 30, 0.0);
        let tumor = ellipsoid(Point3::new(0.0, 0.0, -2.0), Vec3::new(10.0, 7.0, 5.0), 2);
        ResectionPlan::build(liver, tumor, 10.0).unwrap().plan
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = plan();
        let manifest = save_plan(&p, dir.path()).unwrap();
        let back = load_plan(&manifest).unwrap();
        assert_eq!(back.path(), p.path());
        assert_eq!(back.tumor(), p.tumor());
        assert_eq!(back.liver(), p.liver());
        assert_eq!(back.cutting_surface(), p.cutting_surface());
        assert_eq!(back.target_margin(), 10.0);
        for (a, b) in back.path_normals().iter().zip(p.path_normals()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = save_plan(&plan(), dir.path()).unwrap();
        let path_file = dir.path().join("path.txt");
        let mut text = std::fs::read_to_string(&path_file).unwrap();
        text.push_str("0 0 0\n");
        std::fs::write(&path_file, text).unwrap();
        assert!(matches!(load_plan(&manifest), Err(Error::Checksum { .. })));
    }

    #[test]
    fn manifest_parse_errors() {
        assert!(Manifest::parse("margin_mm 10\n").is_err());
        assert!(Manifest::parse("colour red\n").is_err());
        let m = Manifest {
            margin_mm: 10.0,
            liver_mesh: "a.ply".into(),
            tumor_mesh: "b.ply".into(),
            path: "p.txt".into(),
            cutting_surface: "c.ply".into(),
            checksum: "sha256:00".into(),
        };
        assert_eq!(Manifest::parse(&m.to_text()).unwrap(), m);
    }
}
