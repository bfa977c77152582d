//! Evaluation metrics for flow fields and instance associations.
//!
//! Flow metrics are computed per source frame and averaged over frames
//! with equal weight, so a sparse late frame counts as much as a dense
//! early one. Association quality compares pooled point-index sets, which
//! makes temporal label flips count as association errors and not merely
//! per-frame segmentation noise.

use crate::frame::FlowField;
use crate::{Real, Vec3};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("metric input is empty")]
    EmptyInput,
    #[error("{what} shapes differ: {got} vs {expected}")]
    ShapeMismatch { what: &'static str, got: usize, expected: usize },
    #[error("metric input contains a non-finite value")]
    NonFinite,
}

/// Absolute and threshold error rates over a predicted flow field.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FlowMetrics {
    /// Mean endpoint error in meters.
    pub epe: Real,
    /// Fraction with error < 0.05 m or < 5% of the true magnitude.
    pub acc_strict: Real,
    /// Fraction with error < 0.10 m or < 10% of the true magnitude.
    pub acc_relaxed: Real,
    /// Fraction with error > 0.30 m or > 10% of the true magnitude.
    pub outliers: Real,
    /// Fraction with error > 0.30 m and > 30% of the true magnitude.
    pub routliers: Real,
    /// Frames that contributed at least one evaluated point.
    pub frames: usize,
    /// Total evaluated points.
    pub points: usize,
}

struct FrameTallies {
    epe_sum: Real,
    acc_s: usize,
    acc_r: usize,
    out: usize,
    rout: usize,
    count: usize,
}

impl FrameTallies {
    fn add(&mut self, pred: Vec3, gt: Vec3) {
        let err = (pred - gt).norm();
        let mag = gt.norm();
        let rel = if mag > 0.0 { err / mag } else { Real::INFINITY };
        self.epe_sum += err;
        self.acc_s += usize::from(err < 0.05 || rel < 0.05);
        self.acc_r += usize::from(err < 0.10 || rel < 0.10);
        self.out += usize::from(err > 0.30 || rel > 0.10);
        self.rout += usize::from(err > 0.30 && rel > 0.30);
        self.count += 1;
    }
}

/// Compares a predicted flow field against ground truth.
///
/// `masks`, when given, selects which points of each source frame are
/// evaluated. Frames where nothing passes the mask are skipped entirely
/// rather than contributing zeros to the average.
pub fn flow_metrics(
    pred: &FlowField,
    gt: &FlowField,
    masks: Option<&[Vec<bool>]>,
) -> Result<FlowMetrics, MetricsError> {
    if pred.source_count() != gt.source_count() {
        return Err(MetricsError::ShapeMismatch {
            what: "source frames",
            got: pred.source_count(),
            expected: gt.source_count(),
        });
    }
    if let Some(masks) = masks {
        if masks.len() != pred.source_count() {
            return Err(MetricsError::ShapeMismatch {
                what: "masks",
                got: masks.len(),
                expected: pred.source_count(),
            });
        }
    }
    let mut per_frame: Vec<FrameTallies> = Vec::new();
    let mut points = 0usize;
    for (slot, (p_flow, g_flow)) in pred.frames().iter().zip(gt.frames()).enumerate() {
        if p_flow.len() != g_flow.len() {
            return Err(MetricsError::ShapeMismatch {
                what: "frame flows",
                got: p_flow.len(),
                expected: g_flow.len(),
            });
        }
        if let Some(masks) = masks {
            if masks[slot].len() != p_flow.len() {
                return Err(MetricsError::ShapeMismatch {
                    what: "frame mask",
                    got: masks[slot].len(),
                    expected: p_flow.len(),
                });
            }
        }
        let mut tally =
            FrameTallies { epe_sum: 0.0, acc_s: 0, acc_r: 0, out: 0, rout: 0, count: 0 };
        for (i, (&p, &g)) in p_flow.iter().zip(g_flow).enumerate() {
            if masks.map_or(true, |m| m[slot][i]) {
                if !(p.norm().is_finite() && g.norm().is_finite()) {
                    return Err(MetricsError::NonFinite);
                }
                tally.add(p, g);
            }
        }
        if tally.count > 0 {
            points += tally.count;
            per_frame.push(tally);
        }
    }
    if per_frame.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let frames = per_frame.len();
    let inv = 1.0 / frames as Real;
    let mean = |f: &dyn Fn(&FrameTallies) -> Real| -> Real {
        per_frame.iter().map(|t| f(t) / t.count as Real).sum::<Real>() * inv
    };
    Ok(FlowMetrics {
        epe: mean(&|t| t.epe_sum),
        acc_strict: mean(&|t| t.acc_s as Real),
        acc_relaxed: mean(&|t| t.acc_r as Real),
        outliers: mean(&|t| t.out as Real),
        routliers: mean(&|t| t.rout as Real),
        frames,
        points,
    })
}

/// Coverage and detection rates between two instance labelings.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct AssociationMetrics {
    /// Size-weighted mean over ground-truth instances of the best IoU any
    /// predicted instance achieves against it.
    pub wcov: Real,
    /// Fraction of ground-truth instances matched at the IoU threshold.
    pub recall: Real,
    /// Fraction of predicted instances matched at the IoU threshold.
    pub precision: Real,
    pub gt_instances: usize,
    pub pred_instances: usize,
}

fn collect_instances(labels: &[Vec<u32>]) -> BTreeMap<u32, BTreeSet<(usize, usize)>> {
    let mut out: BTreeMap<u32, BTreeSet<(usize, usize)>> = BTreeMap::new();
    for (slot, frame) in labels.iter().enumerate() {
        for (i, &id) in frame.iter().enumerate() {
            if id != 0 {
                out.entry(id).or_default().insert((slot, i));
            }
        }
    }
    out
}

fn iou(a: &BTreeSet<(usize, usize)>, b: &BTreeSet<(usize, usize)>) -> Real {
    let inter = a.intersection(b).count();
    if inter == 0 {
        return 0.0;
    }
    let union = a.len() + b.len() - inter;
    inter as Real / union as Real
}

/// Scores predicted instance labels against ground truth.
///
/// Instances are point-index sets pooled over all frames, labels 0 being
/// background. An instance pair matches when its IoU reaches the
/// threshold (inclusive).
pub fn association_metrics(
    gt_labels: &[Vec<u32>],
    pred_labels: &[Vec<u32>],
    iou_threshold: Real,
) -> Result<AssociationMetrics, MetricsError> {
    if gt_labels.len() != pred_labels.len() {
        return Err(MetricsError::ShapeMismatch {
            what: "label frames",
            got: pred_labels.len(),
            expected: gt_labels.len(),
        });
    }
    for (g, p) in gt_labels.iter().zip(pred_labels) {
        if g.len() != p.len() {
            return Err(MetricsError::ShapeMismatch {
                what: "frame labels",
                got: p.len(),
                expected: g.len(),
            });
        }
    }
    let gt = collect_instances(gt_labels);
    let pred = collect_instances(pred_labels);
    if gt.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let total: usize = gt.values().map(BTreeSet::len).sum();

    let mut wcov = 0.0;
    let mut recalled = 0usize;
    for set in gt.values() {
        let best = pred.values().map(|p| iou(set, p)).fold(0.0, Real::max);
        wcov += set.len() as Real / total as Real * best;
        recalled += usize::from(best >= iou_threshold);
    }
    let mut precise = 0usize;
    for set in pred.values() {
        let best = gt.values().map(|g| iou(set, g)).fold(0.0, Real::max);
        precise += usize::from(best >= iou_threshold);
    }
    Ok(AssociationMetrics {
        wcov,
        recall: recalled as Real / gt.len() as Real,
        precision: if pred.is_empty() { 0.0 } else { precise as Real / pred.len() as Real },
        gt_instances: gt.len(),
        pred_instances: pred.len(),
    })
}

/// Lower median: the element at index (n - 1) / 2 of the sorted values.
pub fn lower_median(values: &[Real]) -> Result<Real, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    Ok(sorted[(sorted.len() - 1) / 2])
}

/// Empirical CDF with strict comparison: `eval(x)` is the fraction of
/// samples strictly below x.
#[derive(Debug, Clone)]
pub struct Ecdf {
    sorted: Vec<Real>,
}

impl Ecdf {
    pub fn new(values: &[Real]) -> Result<Self, MetricsError> {
        if values.is_empty() {
            return Err(MetricsError::EmptyInput);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MetricsError::NonFinite);
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
        Ok(Self { sorted })
    }

    pub fn eval(&self, x: Real) -> Real {
        let below = self.sorted.partition_point(|&v| v < x);
        below as Real / self.sorted.len() as Real
    }

    pub fn sorted_values(&self) -> &[Real] {
        &self.sorted
    }
}

/// Points that count toward evaluation: inside the square of the given
/// half extent in x and y (inclusive) and strictly above the ground plane.
pub fn eval_region_mask(points: &[Vec3], half_extent: Real, ground_z: Real) -> Vec<bool> {
    points
        .iter()
        .map(|p| p.x.abs() <= half_extent && p.y.abs() <= half_extent && p.z > ground_z)
        .collect()
}
