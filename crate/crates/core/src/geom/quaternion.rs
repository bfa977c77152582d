use crate::geom::{GeomError, Mat3, Vector3};
use crate::scalar::Scalar;

/// Unit quaternion in (w, x, y, z) order with the canonical sign `w >= 0`.
///
/// Every constructor normalizes, so a stored quaternion always has unit
/// norm within 1e-9; products renormalize to keep drift out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion<S> {
    pub w: S,
    pub x: S,
    pub y: S,
    pub z: S,
}

impl<S: Scalar> Quaternion<S> {
    pub fn identity() -> Self {
        Self { w: S::one(), x: S::zero(), y: S::zero(), z: S::zero() }
    }

    /// Builds a unit quaternion from raw components.
    ///
    /// Components already unit to floating-point accuracy pass through
    /// untouched, so values written with shortest round-trip formatting
    /// read back bit for bit; dividing by a norm one ulp off 1 would
    /// perturb them.
    pub fn unit(w: S, x: S, y: S, z: S) -> Result<Self, GeomError> {
        let n2 = w * w + x * x + y * y + z * z;
        if !(n2 > S::zero()) || !n2.is_finite() {
            return Err(GeomError::ZeroQuaternion);
        }
        if (n2 - S::one()).abs() <= S::of(1e-12) {
            return Ok(Self { w, x, y, z }.canonical());
        }
        let n = n2.sqrt();
        Ok(Self { w: w / n, x: x / n, y: y / n, z: z / n }.canonical())
    }

    pub fn from_axis_angle(axis: Vector3<S>, angle: S) -> Result<Self, GeomError> {
        let axis = axis.normalized().ok_or(GeomError::ZeroQuaternion)?;
        let half = angle * S::of(0.5);
        let s = half.sin();
        Self::unit(half.cos(), axis.x * s, axis.y * s, axis.z * s)
    }

    /// Rotation about +z by `yaw` radians.
    pub fn from_yaw(yaw: S) -> Self {
        let half = yaw * S::of(0.5);
        Self { w: half.cos(), x: S::zero(), y: S::zero(), z: half.sin() }.canonical()
    }

    fn canonical(mut self) -> Self {
        if self.w < S::zero() {
            self.w = -self.w;
            self.x = -self.x;
            self.y = -self.y;
            self.z = -self.z;
        }
        self
    }

    fn renormalized(self) -> Self {
        let n = self.norm();
        Self { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }.canonical()
    }

    pub fn norm(self) -> S {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn dot(self, rhs: Self) -> S {
        self.w * rhs.w + self.x * rhs.x + self.y * rhs.y + self.z * rhs.z
    }

    /// Hamilton product; `self` applied after `rhs` when rotating vectors.
    pub fn mul(self, rhs: Self) -> Self {
        let (w1, v1) = (self.w, Vector3::new(self.x, self.y, self.z));
        let (w2, v2) = (rhs.w, Vector3::new(rhs.x, rhs.y, rhs.z));
        let w = w1 * w2 - v1.dot(v2);
        let v = v2 * w1 + v1 * w2 + v1.cross(v2);
        Self { w, x: v.x, y: v.y, z: v.z }.renormalized()
    }

    /// Inverse rotation; conjugate of a unit quaternion.
    pub fn conjugate(self) -> Self {
        Self { w: self.w, x: -self.x, y: -self.y, z: -self.z }.canonical()
    }

    pub fn rotate(self, p: Vector3<S>) -> Vector3<S> {
        let v = Vector3::new(self.x, self.y, self.z);
        let t = v.cross(p) * S::of(2.0);
        p + t * self.w + v.cross(t)
    }

    pub fn to_matrix(self) -> Mat3<S> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        let two = S::of(2.0);
        Mat3::from_rows(
            [
                S::one() - two * (y * y + z * z),
                two * (x * y - w * z),
                two * (x * z + w * y),
            ],
            [
                two * (x * y + w * z),
                S::one() - two * (x * x + z * z),
                two * (y * z - w * x),
            ],
            [
                two * (x * z - w * y),
                two * (y * z + w * x),
                S::one() - two * (x * x + y * y),
            ],
        )
    }

    /// Shepperd's method: branches on the largest diagonal combination so the
    /// extracted component is never a small difference of near-equal terms.
    pub fn from_matrix(m: &Mat3<S>) -> Self {
        let t = m.m[0][0] + m.m[1][1] + m.m[2][2];
        let half = S::of(0.5);
        let q = if t > S::zero() {
            let r = (S::one() + t).sqrt();
            let s = half / r;
            Self {
                w: half * r,
                x: (m.m[2][1] - m.m[1][2]) * s,
                y: (m.m[0][2] - m.m[2][0]) * s,
                z: (m.m[1][0] - m.m[0][1]) * s,
            }
        } else if m.m[0][0] >= m.m[1][1] && m.m[0][0] >= m.m[2][2] {
            let r = (S::one() + m.m[0][0] - m.m[1][1] - m.m[2][2]).sqrt();
            let s = half / r;
            Self {
                w: (m.m[2][1] - m.m[1][2]) * s,
                x: half * r,
                y: (m.m[0][1] + m.m[1][0]) * s,
                z: (m.m[0][2] + m.m[2][0]) * s,
            }
        } else if m.m[1][1] >= m.m[2][2] {
            let r = (S::one() + m.m[1][1] - m.m[0][0] - m.m[2][2]).sqrt();
            let s = half / r;
            Self {
                w: (m.m[0][2] - m.m[2][0]) * s,
                x: (m.m[0][1] + m.m[1][0]) * s,
                y: half * r,
                z: (m.m[1][2] + m.m[2][1]) * s,
            }
        } else {
            let r = (S::one() + m.m[2][2] - m.m[0][0] - m.m[1][1]).sqrt();
            let s = half / r;
            Self {
                w: (m.m[1][0] - m.m[0][1]) * s,
                x: (m.m[0][2] + m.m[2][0]) * s,
                y: (m.m[1][2] + m.m[2][1]) * s,
                z: half * r,
            }
        };
        q.renormalized()
    }

    /// Geodesic rotation angle to `rhs`, in [0, pi].
    ///
    /// Computed from the chord between the quaternions (sign-folded), not
    /// acos of the dot product; acos near 1 floors tiny angles at ~1e-8
    /// and identical rotations must measure exactly zero.
    pub fn angle_to(self, rhs: Self) -> S {
        let half = S::of(0.5);
        let d2 = |sign: S| {
            let dw = self.w - sign * rhs.w;
            let dx = self.x - sign * rhs.x;
            let dy = self.y - sign * rhs.y;
            let dz = self.z - sign * rhs.z;
            dw * dw + dx * dx + dy * dy + dz * dz
        };
        let chord = d2(S::one()).min(d2(-S::one())).sqrt();
        S::of(4.0) * (chord * half).min(S::one()).asin()
    }

    /// Heading about +z under the ZYX convention.
    pub fn yaw(self) -> S {
        let two = S::of(2.0);
        let siny = two * (self.w * self.z + self.x * self.y);
        let cosy = S::one() - two * (self.y * self.y + self.z * self.z);
        siny.atan2(cosy)
    }

    pub fn to_array(self) -> [S; 4] {
        [self.w, self.x, self.y, self.z]
    }
}
