//! Training losses with values and analytic gradients.
//!
//! Every loss returns its scalar value and the gradient with respect to the
//! prediction inputs, flattened in input order, so the finite-difference
//! checker can validate each one. None of these run during inference; they
//! exist so the accumulation model can be trained and its published loss
//! surface reproduced.

use crate::geom::{Quaternion, RigidTransform, Vector3};
use crate::scalar::Scalar;
use thiserror::Error;

/// Hard cap on the BCE class weight.
pub const BCE_WEIGHT_CAP: f64 = 50.0;
/// Prediction clamp for the BCE log terms.
pub const BCE_CLAMP: f64 = 1e-7;
/// Default weight on the quaternion term of the pose loss.
pub const POSE_ROTATION_WEIGHT: f64 = 50.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LossError {
    #[error("loss input is empty")]
    EmptyInput,
    #[error("prediction and label lengths differ: {pred} vs {gt}")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("labels must be +1 or -1, found {found} at {index}")]
    InvalidLabel { index: usize, found: i8 },
    #[error("prediction quaternion {index} has zero norm")]
    ZeroQuaternion { index: usize },
}

/// Loss value plus gradient w.r.t. the flattened prediction input.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue<S> {
    pub value: S,
    pub gradient: Vec<S>,
    /// Set when a documented degenerate-input convention produced the
    /// value (e.g. no positive labels).
    pub flagged: bool,
}

impl<S: Scalar> LossValue<S> {
    fn new(value: S, gradient: Vec<S>) -> Self {
        Self { value, gradient, flagged: false }
    }
}

/// Class-weighted binary cross entropy over probabilities in (0, 1).
///
/// Class weight `min(sqrt(n / n_class), 50)` rebalances skewed labels.
/// Predictions are clamped to `[1e-7, 1 - 1e-7]` before the logs; clamped
/// samples get zero gradient.
pub fn weighted_bce<S: Scalar>(preds: &[S], labels: &[bool]) -> Result<LossValue<S>, LossError> {
    if preds.is_empty() {
        return Err(LossError::EmptyInput);
    }
    if preds.len() != labels.len() {
        return Err(LossError::LengthMismatch { pred: preds.len(), gt: labels.len() });
    }
    let n = preds.len();
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = n - n_pos;
    let cap = S::of(BCE_WEIGHT_CAP);
    let class_weight = |count: usize| -> S {
        if count == 0 {
            cap
        } else {
            (S::of(n as f64) / S::of(count as f64)).sqrt().min(cap)
        }
    };
    let (w_pos, w_neg) = (class_weight(n_pos), class_weight(n_neg));

    let lo = S::of(BCE_CLAMP);
    let hi = S::one() - lo;
    let inv_n = S::one() / S::of(n as f64);
    let mut value = S::zero();
    let mut gradient = vec![S::zero(); n];
    for (i, (&raw, &label)) in preds.iter().zip(labels).enumerate() {
        let p = raw.max(lo).min(hi);
        let w = if label { w_pos } else { w_neg };
        let nll = if label { -p.ln() } else { -(S::one() - p).ln() };
        value += w * nll;
        if raw >= lo && raw <= hi {
            let d = if label { -S::one() / p } else { S::one() / (S::one() - p) };
            gradient[i] = inv_n * w * d;
        }
    }
    Ok(LossValue::new(value * inv_n, gradient))
}

/// Lovasz extension of the binary Jaccard loss over raw scores.
///
/// Labels are +1/-1; hinge errors `max(1 - score * label, 0)` are sorted
/// decreasingly (ties by index) and weighted by the discrete Jaccard
/// differences of the growing mispredicted set. The subgradient holds the
/// sorted permutation fixed. With no positive labels the Jaccard loss is
/// undefined; the value is 0 by convention and the result is flagged.
pub fn lovasz_softmax_binary<S: Scalar>(
    scores: &[S],
    labels: &[i8],
) -> Result<LossValue<S>, LossError> {
    if scores.is_empty() {
        return Err(LossError::EmptyInput);
    }
    if scores.len() != labels.len() {
        return Err(LossError::LengthMismatch { pred: scores.len(), gt: labels.len() });
    }
    for (index, &l) in labels.iter().enumerate() {
        if l != 1 && l != -1 {
            return Err(LossError::InvalidLabel { index, found: l });
        }
    }
    let n = scores.len();
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 {
        return Ok(LossValue { value: S::zero(), gradient: vec![S::zero(); n], flagged: true });
    }

    let errors: Vec<S> = scores
        .iter()
        .zip(labels)
        .map(|(&s, &l)| (S::one() - s * S::of(l as f64)).max(S::zero()))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        errors[b].partial_cmp(&errors[a]).expect("finite errors").then(a.cmp(&b))
    });

    // Jaccard difference of adding the i-th sorted sample to the
    // mispredicted set: intersection = P - cum_pos, union = P + cum_neg.
    let p = S::of(positives as f64);
    let mut cum_pos = S::zero();
    let mut cum_neg = S::zero();
    let mut prev_jac = S::zero();
    let mut value = S::zero();
    let mut gradient = vec![S::zero(); n];
    for &idx in &order {
        if labels[idx] == 1 {
            cum_pos += S::one();
        } else {
            cum_neg += S::one();
        }
        let jac = S::one() - (p - cum_pos) / (p + cum_neg);
        let g = jac - prev_jac;
        prev_jac = jac;
        value += errors[idx] * g;
        if errors[idx] > S::zero() {
            gradient[idx] = -S::of(labels[idx] as f64) * g;
        }
    }
    Ok(LossValue::new(value, gradient))
}

/// L1 plus cosine-direction loss on per-point offset vectors, averaged
/// over points. Gradient is w.r.t. the flattened predictions (3 per point).
///
/// Direction handling at zero norms: both zero means the prediction is
/// exactly right (term 0); a zero prediction against a nonzero target is
/// maximally wrong (term 1, zero gradient there); a zero target supervises
/// no direction (term 0).
pub fn offset_loss<S: Scalar>(
    pred: &[Vector3<S>],
    gt: &[Vector3<S>],
) -> Result<LossValue<S>, LossError> {
    if pred.is_empty() {
        return Err(LossError::EmptyInput);
    }
    if pred.len() != gt.len() {
        return Err(LossError::LengthMismatch { pred: pred.len(), gt: gt.len() });
    }
    let n = pred.len();
    let inv_n = S::one() / S::of(n as f64);
    let mut value = S::zero();
    let mut gradient = vec![S::zero(); 3 * n];
    for (i, (&d, &g)) in pred.iter().zip(gt).enumerate() {
        let diff = d - g;
        for c in 0..3 {
            value += diff[c].abs() * inv_n;
            gradient[3 * i + c] = inv_n * signum_zero(diff[c]);
        }
        let dn = d.norm();
        let gn = g.norm();
        if gn > S::zero() {
            if dn > S::zero() {
                let dh = d / dn;
                let gh = g / gn;
                value += (S::one() - dh.dot(gh)) * inv_n;
                // d(1 - <d/|d|, gh>)/dd = -(gh - <dh, gh> dh)/|d|.
                let proj = gh - dh * dh.dot(gh);
                let grad = -(proj / dn) * inv_n;
                for c in 0..3 {
                    gradient[3 * i + c] += grad[c];
                }
            } else {
                value += inv_n;
            }
        }
    }
    Ok(LossValue::new(value, gradient))
}

fn signum_zero<S: Scalar>(v: S) -> S {
    if v > S::zero() {
        S::one()
    } else if v < S::zero() {
        -S::one()
    } else {
        S::zero()
    }
}

/// Raw pose prediction for one frame: unnormalized quaternion plus
/// translation, seven numbers as the model would emit them.
#[derive(Debug, Clone, Copy)]
pub struct PosePrediction<S> {
    pub quaternion: [S; 4],
    pub translation: Vector3<S>,
}

/// Translation plus weighted quaternion distance, averaged over frames.
///
/// Per frame: `||t_gt - t|| + lambda * ||q_gt - q/||q||||`, the ground
/// truth quaternion first flipped onto the hemisphere of the prediction so
/// the double cover cannot inflate the loss. Gradient is w.r.t. the
/// flattened predictions (7 per frame: w, x, y, z, tx, ty, tz).
pub fn pose_loss<S: Scalar>(
    pred: &[PosePrediction<S>],
    gt: &[(Quaternion<S>, Vector3<S>)],
    lambda: S,
) -> Result<LossValue<S>, LossError> {
    if pred.is_empty() {
        return Err(LossError::EmptyInput);
    }
    if pred.len() != gt.len() {
        return Err(LossError::LengthMismatch { pred: pred.len(), gt: gt.len() });
    }
    let n = pred.len();
    let inv_n = S::one() / S::of(n as f64);
    let mut value = S::zero();
    let mut gradient = vec![S::zero(); 7 * n];
    for (i, (p, (gq, gt_t))) in pred.iter().zip(gt).enumerate() {
        let t_diff = p.translation - *gt_t;
        let t_norm = t_diff.norm();
        value += t_norm * inv_n;
        if t_norm > S::zero() {
            let g = t_diff / t_norm * inv_n;
            for c in 0..3 {
                gradient[7 * i + 4 + c] = g[c];
            }
        }

        let q = p.quaternion;
        let qn = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        if !(qn > S::zero()) {
            return Err(LossError::ZeroQuaternion { index: i });
        }
        let u = [q[0] / qn, q[1] / qn, q[2] / qn, q[3] / qn];
        let mut gq = gq.to_array();
        let dot = u.iter().zip(&gq).fold(S::zero(), |a, (&x, &y)| a + x * y);
        if dot < S::zero() {
            for v in &mut gq {
                *v = -*v;
            }
        }
        let r = [u[0] - gq[0], u[1] - gq[1], u[2] - gq[2], u[3] - gq[3]];
        let r_norm = r.iter().fold(S::zero(), |a, &x| a + x * x).sqrt();
        value += lambda * r_norm * inv_n;
        if r_norm > S::zero() {
            // Chain through q -> q/|q|: J = (I - u u^T) / |q|.
            let ru = r.iter().zip(&u).fold(S::zero(), |a, (&x, &y)| a + x * y);
            for c in 0..4 {
                let jr = (r[c] - u[c] * ru) / qn;
                gradient[7 * i + c] = lambda * inv_n * jr / r_norm;
            }
        }
    }
    Ok(LossValue::new(value, gradient))
}

/// Mean componentwise L1 gap between a predicted and a ground-truth rigid
/// motion, measured on a set of probe points. Gradient is w.r.t. the raw
/// 7-parameter prediction (w, x, y, z, tx, ty, tz).
pub fn trans_loss<S: Scalar>(
    pred: &PosePrediction<S>,
    gt: &RigidTransform<S>,
    points: &[Vector3<S>],
) -> Result<LossValue<S>, LossError> {
    if points.is_empty() {
        return Err(LossError::EmptyInput);
    }
    let q = pred.quaternion;
    let qn = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if !(qn > S::zero()) {
        return Err(LossError::ZeroQuaternion { index: 0 });
    }
    let u = [q[0] / qn, q[1] / qn, q[2] / qn, q[3] / qn];
    let (w, v) = (u[0], Vector3::new(u[1], u[2], u[3]));

    let inv_n = S::one() / S::of(points.len() as f64);
    let mut value = S::zero();
    let mut grad = vec![S::zero(); 7];
    for &p in points {
        let rotated = rotate_unit(u, p);
        let moved = rotated + pred.translation;
        let expected = gt.apply(p);
        let diff = moved - expected;
        // d(rotated)/du columns: w, then the vector part.
        let two = S::of(2.0);
        let dw = v.cross(p) * two;
        let vdotp = v.dot(p);
        let mut dv = [[S::zero(); 3]; 3]; // dv[c][k] = d rotated_c / d v_k
        for c in 0..3 {
            for k in 0..3 {
                let mut val = v[c] * p[k] - two * p[c] * v[k];
                if c == k {
                    val += vdotp;
                }
                // -w [p]x contribution.
                val -= w * cross_matrix_entry(p, c, k);
                dv[c][k] = two * val;
            }
        }
        for c in 0..3 {
            let s = signum_zero(diff[c]) * inv_n;
            value += diff[c].abs() * inv_n;
            grad[4 + c] += s;
            // Accumulate d|diff_c|/du then chain through normalization below.
            grad[0] += s * dw[c];
            for k in 0..3 {
                grad[1 + k] += s * dv[c][k];
            }
        }
    }
    // Chain du/dq = (I - u u^T) / |q| into the first four slots.
    let gu = [grad[0], grad[1], grad[2], grad[3]];
    let gu_dot_u = gu.iter().zip(&u).fold(S::zero(), |a, (&x, &y)| a + x * y);
    for c in 0..4 {
        grad[c] = (gu[c] - u[c] * gu_dot_u) / qn;
    }
    Ok(LossValue::new(value, grad))
}

/// `[p]x` matrix entry (row c, col k): cross-product as a matrix.
fn cross_matrix_entry<S: Scalar>(p: Vector3<S>, c: usize, k: usize) -> S {
    match (c, k) {
        (0, 1) => -p.z,
        (0, 2) => p.y,
        (1, 0) => p.z,
        (1, 2) => -p.x,
        (2, 0) => -p.y,
        (2, 1) => p.x,
        _ => S::zero(),
    }
}

/// Rotates by a unit quaternion given as an array.
fn rotate_unit<S: Scalar>(u: [S; 4], p: Vector3<S>) -> Vector3<S> {
    let v = Vector3::new(u[1], u[2], u[3]);
    let t = v.cross(p) * S::of(2.0);
    p + t * u[0] + v.cross(t)
}

/// Central-difference check of an analytic gradient.
///
/// Returns the worst relative error over all coordinates, with an absolute
/// floor of 1e-8 in the denominator so near-zero gradients do not blow up
/// the ratio.
pub fn grad_check<S: Scalar>(
    f: &dyn Fn(&[S]) -> S,
    x: &[S],
    analytic: &[S],
    step: S,
) -> S {
    assert_eq!(x.len(), analytic.len(), "gradient length must match input");
    let floor = S::of(1e-8);
    let mut worst = S::zero();
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let hi = f(&probe);
        probe[i] = x[i] - step;
        let lo = f(&probe);
        probe[i] = x[i];
        let numeric = (hi - lo) / (step + step);
        let denom = numeric.abs().max(analytic[i].abs()).max(floor);
        worst = worst.max((numeric - analytic[i]).abs() / denom);
    }
    worst
}
