//! Point-based rigid registration from paired fiducials.
//!
//! The fit is the closed-form quaternion solution to absolute orientation:
//! the optimal rotation is the eigenvector of the largest eigenvalue of a
//! symmetric 4×4 matrix built from the cross-covariance of the centred point
//! sets. A unit quaternion can only encode a proper rotation, so the fit never
//! returns a reflection, even for planar or near-planar fiducial layouts.

pub mod io;
pub mod montecarlo;

use nalgebra::{Matrix3, Matrix4, Quaternion, SymmetricEigen, UnitQuaternion};

use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform, Vec3};

/// Second singular value of the centred model points must exceed this (mm).
pub const COLLINEAR_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct FiducialSet {
    labels: Vec<String>,
    model: Vec<Point3>,
    measured: Vec<Point3>,
}

impl FiducialSet {
    pub fn new(labels: Vec<String>, model: Vec<Point3>, measured: Vec<Point3>) -> Result<Self> {
        if labels.len() != model.len() || model.len() != measured.len() {
            return Err(Error::InvalidArgument(format!(
                "fiducial lists differ in length: {} labels, {} model, {} measured",
                labels.len(),
                model.len(),
                measured.len()
            )));
        }
        if model.len() < 3 {
            return Err(Error::DegenerateConfiguration(format!(
                "{} fiducial(s), at least 3 required",
                model.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::InvalidArgument(format!("duplicate fiducial label '{dup}'")));
        }
        if model
            .iter()
            .chain(measured.iter())
            .any(|p| p.iter().any(|c| !c.is_finite()))
        {
            return Err(Error::InvalidArgument("non-finite fiducial coordinate".into()));
        }
        check_spread(&model)?;
        Ok(Self {
            labels,
            model,
            measured,
        })
    }

    /// Model points only, with the measured side copied from the model.
    pub fn model_only(labels: Vec<String>, model: Vec<Point3>) -> Result<Self> {
        let measured = model.clone();
        Self::new(labels, model, measured)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn model_points(&self) -> &[Point3] {
        &self.model
    }

    pub fn measured_points(&self) -> &[Point3] {
        &self.measured
    }

    pub fn len(&self) -> usize {
        self.model.len()
    }

    pub fn is_empty(&self) -> bool {
        self.model.is_empty()
    }

    pub fn with_measured(&self, measured: Vec<Point3>) -> Result<Self> {
        Self::new(self.labels.clone(), self.model.clone(), measured)
    }

    fn without(&self, skip: usize) -> Result<Self> {
        let keep = |v: &[Point3]| {
            v.iter()
                .enumerate()
                .filter(|&(i, _)| i != skip)
                .map(|(_, p)| *p)
                .collect::<Vec<_>>()
        };
        let labels = self
            .labels
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != skip)
            .map(|(_, l)| l.clone())
            .collect();
        Self::new(labels, keep(&self.model), keep(&self.measured))
    }
}

fn centroid(points: &[Point3]) -> Point3 {
    let sum: Vec3 = points.iter().map(|p| p.coords).sum();
    Point3::from(sum / points.len() as f64)
}

fn check_spread(points: &[Point3]) -> Result<()> {
    let c = centroid(points);
    let mut scatter = Matrix3::zeros();
    for p in points {
        let d = p - c;
        scatter += d * d.transpose();
    }
    // singular values of the centred N×3 matrix are sqrt of scatter eigenvalues
    let mut eig: Vec<f64> = SymmetricEigen::new(scatter)
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    if eig[1] <= COLLINEAR_TOLERANCE {
        return Err(Error::DegenerateConfiguration(format!(
            "model points are collinear or coincident (second singular value {:.3e})",
            eig[1]
        )));
    }
    Ok(())
}

/// Leave-one-out outcome for one fiducial.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LooEntry {
    /// Distance between the held-out fiducial's prediction and its measurement (mm).
    Error(f64),
    /// Only two fiducials remain: rotation about their axis is not constrained.
    Unobservable,
    /// The remaining fiducials are collinear.
    Degenerate,
}

impl LooEntry {
    pub fn value(&self) -> Option<f64> {
        match self {
            LooEntry::Error(v) => Some(*v),
            _ => None,
        }
    }
}

impl std::fmt::Display for LooEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LooEntry::Error(v) => write!(f, "{v}"),
            LooEntry::Unobservable => f.write_str("unobservable"),
            LooEntry::Degenerate => f.write_str("degenerate"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegistrationResult {
    /// Model → world.
    pub transform: RigidTransform,
    pub fre_rms: f64,
    /// Mean absolute residual; reported alongside the RMS value.
    pub fre_mean: f64,
    pub residuals: Vec<f64>,
    pub leave_one_out: Option<Vec<LooEntry>>,
}

/// Least-squares rigid fit of model points onto measured points.
pub fn horn_absolute_orientation(f: &FiducialSet) -> Result<RegistrationResult> {
    let transform = fit_transform(&f.model, &f.measured);
    let residuals: Vec<f64> = f
        .model
        .iter()
        .zip(&f.measured)
        .map(|(m, d)| (transform.transform_point(m) - d).norm())
        .collect();
    let n = residuals.len() as f64;
    let fre_rms = (residuals.iter().map(|r| r * r).sum::<f64>() / n).sqrt();
    let fre_mean = residuals.iter().sum::<f64>() / n;
    Ok(RegistrationResult {
        transform,
        fre_rms,
        fre_mean,
        residuals,
        leave_one_out: None,
    })
}

/// Fit plus leave-one-out errors in one call.
pub fn register(f: &FiducialSet) -> Result<RegistrationResult> {
    let mut result = horn_absolute_orientation(f)?;
    result.leave_one_out = Some(leave_one_out(f)?);
    Ok(result)
}

fn fit_transform(model: &[Point3], measured: &[Point3]) -> RigidTransform {
    let cm = centroid(model);
    let cd = centroid(measured);
    // s[(a, b)] = Σ m'_a d'_b
    let mut s = Matrix3::zeros();
    for (m, d) in model.iter().zip(measured) {
        s += (m - cm) * (d - cd).transpose();
    }
    let (sxx, sxy, sxz) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
    let (syx, syy, syz) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
    let (szx, szy, szz) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
    let n = Matrix4::new(
        sxx + syy + szz,
        syz - szy,
        szx - sxz,
        sxy - syx,
        syz - szy,
        sxx - syy - szz,
        sxy + syx,
        szx + sxz,
        szx - sxz,
        sxy + syx,
        -sxx + syy - szz,
        syz + szy,
        sxy - syx,
        szx + sxz,
        syz + szy,
        -sxx - syy + szz,
    );
    let eig = SymmetricEigen::new(n);
    let best = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(best);
    let q = UnitQuaternion::new_normalize(Quaternion::new(v[0], v[1], v[2], v[3]));
    let translation = cd.coords - q * cm.coords;
    RigidTransform::new(q, translation)
}

/// Refits without each fiducial in turn and measures the held-out error.
///
/// With exactly three fiducials every entry is [`LooEntry::Unobservable`].
pub fn leave_one_out(f: &FiducialSet) -> Result<Vec<LooEntry>> {
    if f.len() == 3 {
        return Ok(vec![LooEntry::Unobservable; 3]);
    }
    Ok((0..f.len())
        .map(|i| match f.without(i) {
            Ok(subset) => {
                let t = fit_transform(&subset.model, &subset.measured);
                LooEntry::Error((t.transform_point(&f.model[i]) - f.measured[i]).norm())
            }
            Err(_) => LooEntry::Degenerate,
        })
        .collect())
}

/// Displacement at each target between the estimated and true transforms.
pub fn target_registration_error(
    estimated: &RigidTransform,
    truth: &RigidTransform,
    targets: &[Point3],
) -> Result<Vec<f64>> {
    if targets.is_empty() {
        return Err(Error::InvalidArgument("no targets given".into()));
    }
    Ok(targets
        .iter()
        .map(|p| (estimated.transform_point(p) - truth.transform_point(p)).norm())
        .collect())
}

/// Constant-rate translational drift of the overlay in a fixed direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriftModel {
    pub rate_mm_per_min: f64,
    pub direction: Vec3,
}

impl DriftModel {
    pub const DEFAULT_RATE_MM_PER_MIN: f64 = 0.3;

    pub fn new(rate_mm_per_min: f64, direction: Vec3) -> Result<Self> {
        if !(rate_mm_per_min >= 0.0) || !rate_mm_per_min.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "drift rate must be non-negative, got {rate_mm_per_min}"
            )));
        }
        let norm = direction.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidArgument("drift direction must be non-zero".into()));
        }
        Ok(Self {
            rate_mm_per_min,
            direction: direction / norm,
        })
    }

    /// Direction drawn uniformly on the unit sphere from `seed`.
    pub fn seeded(rate_mm_per_min: f64, seed: u64) -> Result<Self> {
        use rand::Rng;
        let mut rng = crate::rng::seeded(seed);
        let z: f64 = rng.random_range(-1.0..1.0);
        let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let r = (1.0 - z * z).sqrt();
        Self::new(rate_mm_per_min, Vec3::new(r * phi.cos(), r * phi.sin(), z))
    }

    pub fn none() -> Self {
        Self {
            rate_mm_per_min: 0.0,
            direction: Vec3::x(),
        }
    }

    pub fn offset(&self, elapsed_ms: f64) -> Vec3 {
        self.direction * (self.rate_mm_per_min * elapsed_ms / 60_000.0)
    }
}

/// `t` followed by the drift translation accumulated over `elapsed_ms`.
pub fn apply_drift(t: &RigidTransform, model: &DriftModel, elapsed_ms: f64) -> Result<RigidTransform> {
    if !(elapsed_ms >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "elapsed time must be non-negative, got {elapsed_ms}"
        )));
    }
    if elapsed_ms == 0.0 {
        return Ok(*t);
    }
    Ok(RigidTransform::from_translation(model.offset(elapsed_ms)).compose(t))
}
