use crate::scalar::Scalar;
use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

/// Column 3-vector.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct Vector3<S> {
    pub x: S,
    pub y: S,
    pub z: S,
}

impl<S: Scalar> Vector3<S> {
    pub fn new(x: S, y: S, z: S) -> Self {
        Self { x, y, z }
    }

    pub fn zeros() -> Self {
        Self::new(S::zero(), S::zero(), S::zero())
    }

    pub fn dot(self, rhs: Self) -> S {
        self.x * rhs.x + self.y * rhs.y + self.z * rhs.z
    }

    pub fn cross(self, rhs: Self) -> Self {
        Self::new(
            self.y * rhs.z - self.z * rhs.y,
            self.z * rhs.x - self.x * rhs.z,
            self.x * rhs.y - self.y * rhs.x,
        )
    }

    pub fn norm_squared(self) -> S {
        self.dot(self)
    }

    pub fn norm(self) -> S {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        (n > S::zero()).then(|| self / n)
    }

    pub fn to_array(self) -> [S; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [S; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    /// Componentwise maximum distance, useful for exact-tolerance asserts.
    pub fn max_abs_diff(self, rhs: Self) -> S {
        let d = self - rhs;
        d.x.abs().max(d.y.abs()).max(d.z.abs())
    }
}

impl Vector3<f64> {
    pub fn to_f32_array(self) -> [f32; 3] {
        [self.x as f32, self.y as f32, self.z as f32]
    }
}

impl<S: Scalar> Add for Vector3<S> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl<S: Scalar> Sub for Vector3<S> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl<S: Scalar> Neg for Vector3<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<S: Scalar> Mul<S> for Vector3<S> {
    type Output = Self;
    fn mul(self, s: S) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<S: Scalar> Div<S> for Vector3<S> {
    type Output = Self;
    fn div(self, s: S) -> Self {
        Self::new(self.x / s, self.y / s, self.z / s)
    }
}

impl<S: Scalar> AddAssign for Vector3<S> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<S: Scalar> SubAssign for Vector3<S> {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<S: Scalar> Index<usize> for Vector3<S> {
    type Output = S;
    fn index(&self, i: usize) -> &S {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("vector index {i} out of range"),
        }
    }
}
