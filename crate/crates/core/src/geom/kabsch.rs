use crate::geom::{svd3, GeomError, Mat3, Quaternion, RigidTransform, Vector3};
use crate::scalar::Scalar;

/// Weighted least-squares rigid alignment: the transform minimizing
/// `sum_i w_i ||T(source_i) - target_i||^2`.
///
/// Rotation comes from the SVD of the weighted cross-covariance with the
/// `diag(1, 1, det(V U^T))` correction, so the result is always a proper
/// rotation. Rank below 2 (coincident or collinear weighted points) is
/// reported as [`GeomError::DegenerateConfiguration`]; the caller decides
/// whether to fall back to the identity.
pub fn kabsch_weighted<S: Scalar>(
    source: &[Vector3<S>],
    target: &[Vector3<S>],
    weights: &[S],
) -> Result<RigidTransform<S>, GeomError> {
    if source.len() != target.len() || source.len() != weights.len() {
        return Err(GeomError::MismatchedLengths {
            sources: source.len(),
            targets: target.len(),
            weights: weights.len(),
        });
    }
    if source.len() < 3 {
        return Err(GeomError::InsufficientPoints { got: source.len() });
    }
    if weights.iter().any(|w| *w < S::zero()) {
        return Err(GeomError::NegativeWeight);
    }
    let wsum: S = weights.iter().fold(S::zero(), |a, &w| a + w);
    if !(wsum > S::zero()) {
        return Err(GeomError::NonPositiveWeightSum);
    }

    let mut src_mean = Vector3::zeros();
    let mut dst_mean = Vector3::zeros();
    for ((&p, &q), &w) in source.iter().zip(target).zip(weights) {
        src_mean += p * w;
        dst_mean += q * w;
    }
    src_mean = src_mean / wsum;
    dst_mean = dst_mean / wsum;

    // Weighted cross-covariance H = sum w (p - p_mean)(q - q_mean)^T.
    let mut h = Mat3::zeros();
    for ((&p, &q), &w) in source.iter().zip(target).zip(weights) {
        h = h + Mat3::outer(p - src_mean, q - dst_mean).scale(w);
    }

    let svd = svd3(&h);
    let tiny = svd.sigma[0] * S::epsilon().sqrt();
    if svd.sigma[0] <= S::zero() || svd.sigma[1] <= tiny {
        return Err(GeomError::DegenerateConfiguration);
    }

    let d = (svd.v * svd.u.transpose()).det();
    let mut flip = Mat3::identity();
    flip.m[2][2] = if d < S::zero() { -S::one() } else { S::one() };
    let r = svd.v * flip * svd.u.transpose();

    let rotation = Quaternion::from_matrix(&r);
    let translation = dst_mean - rotation.rotate(src_mean);
    Ok(RigidTransform::new(rotation, translation))
}
