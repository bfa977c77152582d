use crate::geom::Vector3;
use crate::scalar::Scalar;
use std::ops::{Add, Mul, Sub};

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3<S> {
    pub m: [[S; 3]; 3],
}

impl<S: Scalar> Mat3<S> {
    pub fn identity() -> Self {
        let (o, l) = (S::zero(), S::one());
        Self { m: [[l, o, o], [o, l, o], [o, o, l]] }
    }

    pub fn zeros() -> Self {
        Self { m: [[S::zero(); 3]; 3] }
    }

    pub fn from_rows(r0: [S; 3], r1: [S; 3], r2: [S; 3]) -> Self {
        Self { m: [r0, r1, r2] }
    }

    pub fn from_cols(c0: Vector3<S>, c1: Vector3<S>, c2: Vector3<S>) -> Self {
        Self {
            m: [[c0.x, c1.x, c2.x], [c0.y, c1.y, c2.y], [c0.z, c1.z, c2.z]],
        }
    }

    pub fn col(&self, j: usize) -> Vector3<S> {
        Vector3::new(self.m[0][j], self.m[1][j], self.m[2][j])
    }

    pub fn set_col(&mut self, j: usize, v: Vector3<S>) {
        self.m[0][j] = v.x;
        self.m[1][j] = v.y;
        self.m[2][j] = v.z;
    }

    pub fn transpose(&self) -> Self {
        let m = &self.m;
        Self::from_rows(
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        )
    }

    pub fn det(&self) -> S {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Outer product `a * b^T`.
    pub fn outer(a: Vector3<S>, b: Vector3<S>) -> Self {
        Self::from_rows(
            [a.x * b.x, a.x * b.y, a.x * b.z],
            [a.y * b.x, a.y * b.y, a.y * b.z],
            [a.z * b.x, a.z * b.y, a.z * b.z],
        )
    }

    pub fn scale(&self, s: S) -> Self {
        let mut out = *self;
        for r in &mut out.m {
            for v in r {
                *v *= s;
            }
        }
        out
    }

    pub fn max_abs_diff(&self, rhs: &Self) -> S {
        let mut worst = S::zero();
        for i in 0..3 {
            for j in 0..3 {
                worst = worst.max((self.m[i][j] - rhs.m[i][j]).abs());
            }
        }
        worst
    }
}

impl<S: Scalar> Mul for Mat3<S> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut out = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = S::zero();
                for k in 0..3 {
                    acc += self.m[i][k] * rhs.m[k][j];
                }
                out.m[i][j] = acc;
            }
        }
        out
    }
}

impl<S: Scalar> Mul<Vector3<S>> for Mat3<S> {
    type Output = Vector3<S>;
    fn mul(self, v: Vector3<S>) -> Vector3<S> {
        Vector3::new(
            self.m[0][0] * v.x + self.m[0][1] * v.y + self.m[0][2] * v.z,
            self.m[1][0] * v.x + self.m[1][1] * v.y + self.m[1][2] * v.z,
            self.m[2][0] * v.x + self.m[2][1] * v.y + self.m[2][2] * v.z,
        )
    }
}

impl<S: Scalar> Add for Mat3<S> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut out = self;
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] += rhs.m[i][j];
            }
        }
        out
    }
}

impl<S: Scalar> Sub for Mat3<S> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut out = self;
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] -= rhs.m[i][j];
            }
        }
        out
    }
}

/// Singular value decomposition `A = U * diag(sigma) * V^T` with
/// `sigma[0] >= sigma[1] >= sigma[2] >= 0` and orthogonal `U`, `V`.
#[derive(Debug, Clone, Copy)]
pub struct Svd3<S> {
    pub u: Mat3<S>,
    pub sigma: [S; 3],
    pub v: Mat3<S>,
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (unsorted) and the orthogonal eigenvector matrix
/// (columns). Converges in a handful of sweeps for 3x3 input.
pub fn jacobi_eigen_symmetric<S: Scalar>(a: &Mat3<S>) -> ([S; 3], Mat3<S>) {
    let mut a = *a;
    let mut v = Mat3::identity();
    let half = S::of(0.5);

    for _ in 0..64 {
        let off = a.m[0][1].abs() + a.m[0][2].abs() + a.m[1][2].abs();
        let scale = a.m[0][0].abs() + a.m[1][1].abs() + a.m[2][2].abs() + off;
        if off <= S::epsilon() * scale || scale == S::zero() {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a.m[p][q];
            if apq == S::zero() {
                continue;
            }
            let theta = (a.m[q][q] - a.m[p][p]) * half / apq;
            let t = if theta.abs() > S::of(1e18) {
                half / theta
            } else {
                let sign = if theta >= S::zero() { S::one() } else { -S::one() };
                sign / (theta.abs() + (theta * theta + S::one()).sqrt())
            };
            let c = S::one() / (t * t + S::one()).sqrt();
            let s = t * c;

            // A <- J^T A J applied to rows/cols p and q.
            for k in 0..3 {
                let akp = a.m[k][p];
                let akq = a.m[k][q];
                a.m[k][p] = c * akp - s * akq;
                a.m[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a.m[p][k];
                let aqk = a.m[q][k];
                a.m[p][k] = c * apk - s * aqk;
                a.m[q][k] = s * apk + c * aqk;
            }
            for k in 0..3 {
                let vkp = v.m[k][p];
                let vkq = v.m[k][q];
                v.m[k][p] = c * vkp - s * vkq;
                v.m[k][q] = s * vkp + c * vkq;
            }
        }
    }
    ([a.m[0][0], a.m[1][1], a.m[2][2]], v)
}

/// SVD of an arbitrary 3x3 matrix via the eigendecomposition of `A^T A`.
/// Near-null singular directions of `U` are completed by cross products,
/// so `U` is orthogonal even for rank-deficient input.
pub fn svd3<S: Scalar>(a: &Mat3<S>) -> Svd3<S> {
    let ata = a.transpose() * *a;
    let (lambda, vec) = jacobi_eigen_symmetric(&ata);

    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| lambda[j].partial_cmp(&lambda[i]).expect("finite eigenvalues"));

    let mut v = Mat3::zeros();
    let mut sigma = [S::zero(); 3];
    for (dst, &src) in order.iter().enumerate() {
        v.set_col(dst, vec.col(src));
        sigma[dst] = lambda[src].max(S::zero()).sqrt();
    }

    let tiny = sigma[0] * S::epsilon().sqrt();
    let mut u = Mat3::zeros();
    let mut rank = 0;
    for j in 0..3 {
        if sigma[j] > tiny && sigma[j] > S::zero() {
            let col = (*a * v.col(j)) / sigma[j];
            // Modified Gram-Schmidt against previous columns keeps U
            // orthogonal when singular values cluster.
            let mut col = col;
            for k in 0..j {
                let prev = u.col(k);
                col -= prev * prev.dot(col);
            }
            u.set_col(j, col.normalized().unwrap_or_else(|| complete_column(&u, j)));
            rank = j + 1;
        }
    }
    for j in rank..3 {
        u.set_col(j, complete_column(&u, j));
    }
    Svd3 { u, sigma, v }
}

/// Unit vector orthogonal to the first `j` columns of `u`.
fn complete_column<S: Scalar>(u: &Mat3<S>, j: usize) -> Vector3<S> {
    match j {
        0 => Vector3::new(S::one(), S::zero(), S::zero()),
        1 => {
            let c0 = u.col(0);
            // Cross with the axis least aligned with c0.
            let axis = if c0.x.abs() <= c0.y.abs() && c0.x.abs() <= c0.z.abs() {
                Vector3::new(S::one(), S::zero(), S::zero())
            } else if c0.y.abs() <= c0.z.abs() {
                Vector3::new(S::zero(), S::one(), S::zero())
            } else {
                Vector3::new(S::zero(), S::zero(), S::one())
            };
            c0.cross(axis).normalized().expect("axis independent of unit column")
        }
        _ => u.col(0).cross(u.col(1)),
    }
}
