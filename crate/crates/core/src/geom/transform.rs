use crate::geom::{Mat3, Quaternion, Vector3};
use crate::scalar::Scalar;

/// Proper rigid motion (rotation then translation): `T(p) = R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform<S> {
    pub rotation: Quaternion<S>,
    pub translation: Vector3<S>,
}

impl<S: Scalar> RigidTransform<S> {
    pub fn identity() -> Self {
        Self { rotation: Quaternion::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: Quaternion<S>, translation: Vector3<S>) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(translation: Vector3<S>) -> Self {
        Self { rotation: Quaternion::identity(), translation }
    }

    pub fn from_yaw_translation(yaw: S, translation: Vector3<S>) -> Self {
        Self { rotation: Quaternion::from_yaw(yaw), translation }
    }

    pub fn apply(&self, p: Vector3<S>) -> Vector3<S> {
        self.rotation.rotate(p) + self.translation
    }

    pub fn apply_points(&self, points: &[Vector3<S>]) -> Vec<Vector3<S>> {
        points.iter().map(|&p| self.apply(p)).collect()
    }

    /// `self ∘ inner`: `inner` acts first, then `self`.
    pub fn compose(&self, inner: &Self) -> Self {
        Self {
            rotation: self.rotation.mul(inner.rotation),
            translation: self.rotation.rotate(inner.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let inv_rot = self.rotation.conjugate();
        Self { rotation: inv_rot, translation: -inv_rot.rotate(self.translation) }
    }

    pub fn rotation_matrix(&self) -> Mat3<S> {
        self.rotation.to_matrix()
    }

    /// Homogeneous 4x4 view, row-major.
    pub fn to_matrix4(&self) -> [[S; 4]; 4] {
        let r = self.rotation.to_matrix();
        let t = self.translation;
        let (o, l) = (S::zero(), S::one());
        [
            [r.m[0][0], r.m[0][1], r.m[0][2], t.x],
            [r.m[1][0], r.m[1][1], r.m[1][2], t.y],
            [r.m[2][0], r.m[2][1], r.m[2][2], t.z],
            [o, o, o, l],
        ]
    }

    pub fn yaw(&self) -> S {
        self.rotation.yaw()
    }

    /// Largest of rotation angle gap (radians) and translation gap (meters);
    /// a single number for closeness asserts.
    pub fn max_gap(&self, rhs: &Self) -> S {
        self.rotation
            .angle_to(rhs.rotation)
            .max(self.translation.max_abs_diff(rhs.translation))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    type T = RigidTransform<f64>;
    type V = Vector3<f64>;

    /// Independent composition route: multiply homogeneous 4x4 matrices.
    fn mat4_mul(a: [[f64; 4]; 4], b: [[f64; 4]; 4]) -> [[f64; 4]; 4] {
        let mut out = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                for (k, bk) in b.iter().enumerate() {
                    out[i][j] += a[i][k] * bk[j];
                }
            }
        }
        out
    }

    #[test]
    fn identity_fixes_points() {
        let p = V::new(1.0, -2.0, 3.0);
        assert_eq!(T::identity().apply(p), p);
    }

    #[test]
    fn pure_translation_shifts() {
        let t = T::from_translation(V::new(1.0, 2.0, 3.0));
        assert_eq!(t.apply(V::zeros()), V::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn quarter_yaw_with_offset() {
        let t = T::from_yaw_translation(FRAC_PI_2, V::new(1.0, 0.0, 0.0));
        let p = t.apply(V::new(1.0, 0.0, 0.5));
        assert!(p.max_abs_diff(V::new(1.0, 1.0, 0.5)) < 1e-15);
    }

    #[test]
    fn compose_matches_homogeneous_matrix_product() {
        let a = T::from_yaw_translation(0.8, V::new(0.5, -1.5, 2.0));
        let b = T::new(
            Quaternion::from_axis_angle(V::new(1.0, 1.0, 0.2), -1.2).unwrap(),
            V::new(-3.0, 0.25, 1.0),
        );
        let composed = a.compose(&b).to_matrix4();
        let expected = mat4_mul(a.to_matrix4(), b.to_matrix4());
        for i in 0..4 {
            for j in 0..4 {
                assert!(
                    (composed[i][j] - expected[i][j]).abs() < 1e-12,
                    "entry ({i},{j}): {} vs {}",
                    composed[i][j],
                    expected[i][j]
                );
            }
        }
    }

    #[test]
    fn inverse_composes_to_identity() {
        let t = T::new(
            Quaternion::from_axis_angle(V::new(-0.3, 0.9, 0.1), 2.2).unwrap(),
            V::new(10.0, -4.0, 0.5),
        );
        assert!(t.compose(&t.inverse()).max_gap(&T::identity()) < 1e-12);
        assert!(t.inverse().compose(&t).max_gap(&T::identity()) < 1e-12);
    }

    #[test]
    fn rotation_matrix_is_orthonormal_with_unit_det() {
        let t = T::new(
            Quaternion::from_axis_angle(V::new(0.2, 0.4, 1.0), 0.9).unwrap(),
            V::zeros(),
        );
        let r = t.rotation_matrix();
        let err = (r.transpose() * r).max_abs_diff(&Mat3::identity());
        assert!(err < 1e-15);
        assert!((r.det() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn works_at_f32() {
        let t = RigidTransform::<f32>::from_yaw_translation(0.5, Vector3::new(1.0, 2.0, 3.0));
        let p = t.inverse().apply(t.apply(Vector3::new(0.1, 0.2, 0.3)));
        assert!(p.max_abs_diff(Vector3::new(0.1, 0.2, 0.3)) < 1e-6);
    }
}
