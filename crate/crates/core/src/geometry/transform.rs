use nalgebra::{Quaternion, Unit, UnitQuaternion};

use super::{Point3, Vec3};
use crate::error::{Error, Result};

/// Proper rigid motion in millimetres: `p ↦ R·p + t`.
///
/// The rotation is kept as a unit quaternion and renormalised after every
/// composition so the norm stays within 1e-9 of one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    rotation: UnitQuaternion<f64>,
    translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Builds a transform from raw quaternion components (w, x, y, z).
    ///
    /// The quaternion is normalised; a zero or non-finite quaternion is rejected.
    pub fn from_wxyz(wxyz: [f64; 4], translation: [f64; 3]) -> Result<Self> {
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let norm = q.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "quaternion {wxyz:?} cannot be normalised"
            )));
        }
        let t = Vec3::from(translation);
        if t.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite translation".into()));
        }
        Ok(Self::new(Unit::new_normalize(q), t))
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    /// Rotation of `angle` radians about `axis` (normalised internally).
    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3) -> Self {
        let rotation = match Unit::try_new(axis, 1e-15) {
            Some(axis) => UnitQuaternion::from_axis_angle(&axis, angle),
            None => UnitQuaternion::identity(),
        };
        Self::new(rotation, translation)
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn transform_point(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let rotation = self.rotation * other.rotation;
        let rotation = UnitQuaternion::new_normalize(rotation.into_inner());
        RigidTransform {
            rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let inv = self.rotation.inverse();
        RigidTransform {
            rotation: inv,
            translation: -(inv * self.translation),
        }
    }

    /// Angle in radians of the relative rotation between two transforms.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        let rel = self.rotation.inverse() * other.rotation;
        let q = rel.quaternion();
        2.0 * q.vector().norm().atan2(q.w.abs())
    }

    pub fn translation_distance_to(&self, other: &RigidTransform) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// Largest displacement between the two transforms over a set of probe points.
    pub fn max_point_discrepancy<'a>(
        &self,
        other: &RigidTransform,
        probes: impl IntoIterator<Item = &'a Point3>,
    ) -> f64 {
        probes
            .into_iter()
            .map(|p| (self.transform_point(p) - other.transform_point(p)).norm())
            .fold(0.0, f64::max)
    }
}

pub fn transform_point(t: &RigidTransform, p: &Point3) -> Point3 {
    t.transform_point(p)
}

pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn invert(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn arb_transform() -> impl Strategy<Value = RigidTransform> {
        (
            prop::array::uniform3(-1.0f64..1.0),
            -std::f64::consts::PI..std::f64::consts::PI,
            prop::array::uniform3(-200.0f64..200.0),
        )
            .prop_filter("axis non-zero", |(a, _, _)| Vec3::from(*a).norm() > 1e-3)
            .prop_map(|(axis, angle, t)| {
                RigidTransform::from_axis_angle(Vec3::from(axis), angle, Vec3::from(t))
            })
    }

    fn arb_point() -> impl Strategy<Value = Point3> {
        prop::array::uniform3(-300.0f64..300.0).prop_map(Point3::from)
    }

    #[test]
    fn identity_leaves_points_alone() {
        let p = Point3::new(1.0, 2.0, 3.0);
        assert_eq!(RigidTransform::identity().transform_point(&p), p);
    }

    #[test]
    fn quarter_turn_about_z() {
        let t = RigidTransform::from_axis_angle(Vec3::z(), FRAC_PI_2, Vec3::zeros());
        let q = t.transform_point(&Point3::new(1.0, 0.0, 0.0));
        assert_abs_diff_eq!(q, Point3::new(0.0, 1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn pure_translation_inverse() {
        let t = RigidTransform::from_translation(Vec3::new(5.0, 0.0, 0.0));
        let inv = t.inverse();
        assert_abs_diff_eq!(*inv.translation(), Vec3::new(-5.0, 0.0, 0.0));
        assert_eq!(RigidTransform::identity().inverse(), RigidTransform::identity());
    }

    #[test]
    fn zero_quaternion_rejected() {
        assert!(RigidTransform::from_wxyz([0.0; 4], [0.0; 3]).is_err());
        let t = RigidTransform::from_wxyz([2.0, 0.0, 0.0, 0.0], [1.0, 2.0, 3.0]).unwrap();
        assert_abs_diff_eq!(t.quaternion_wxyz()[0], 1.0);
    }

    proptest! {
        #[test]
        fn round_trip_through_inverse(t in arb_transform(), p in arb_point()) {
            let back = t.inverse().transform_point(&t.transform_point(&p));
            prop_assert!((back - p).norm() < 1e-9);
        }

        #[test]
        fn compose_matches_pointwise(a in arb_transform(), b in arb_transform(), p in arb_point()) {
            let lhs = a.compose(&b).transform_point(&p);
            let rhs = a.transform_point(&b.transform_point(&p));
            prop_assert!((lhs - rhs).norm() < 1e-9);
        }

        #[test]
        fn group_laws(a in arb_transform(), b in arb_transform(), c in arb_transform(), p in arb_point()) {
            let left = a.compose(&b).compose(&c).transform_point(&p);
            let right = a.compose(&b.compose(&c)).transform_point(&p);
            prop_assert!((left - right).norm() < 1e-9);

            let id = RigidTransform::identity();
            prop_assert!((id.compose(&a).transform_point(&p) - a.transform_point(&p)).norm() < 1e-9);
            let cancel = a.compose(&a.inverse());
            prop_assert!((cancel.transform_point(&p) - p).norm() < 1e-9);
            prop_assert!(cancel.rotation_angle_to(&id) < 1e-9);

            let twice = a.inverse().inverse();
            prop_assert!(twice.translation_distance_to(&a) < 1e-9);
            prop_assert!(twice.rotation_angle_to(&a) < 1e-9);
            prop_assert!((a.compose(&b).rotation().quaternion().norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn hundred_point_oracle_for_composition() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let random_t = |rng: &mut rand_chacha::ChaCha8Rng| {
            let axis = Vec3::new(rng.random(), rng.random(), rng.random()) - Vec3::repeat(0.5);
            let t = Vec3::new(rng.random(), rng.random(), rng.random()) * 100.0;
            RigidTransform::from_axis_angle(axis, rng.random_range(-3.0..3.0), t)
        };
        let a = random_t(&mut rng);
        let b = random_t(&mut rng);
        let ab = a.compose(&b);
        for _ in 0..100 {
            let p = Point3::new(
                rng.random_range(-100.0..100.0),
                rng.random_range(-100.0..100.0),
                rng.random_range(-100.0..100.0),
            );
            // oracle: explicit rotation matrices
            let ra = a.rotation().to_rotation_matrix();
            let rb = b.rotation().to_rotation_matrix();
            let expected = ra * (rb * p + b.translation()) + a.translation();
            assert!((ab.transform_point(&p) - expected).norm() < 1e-9);
        }
    }
}
