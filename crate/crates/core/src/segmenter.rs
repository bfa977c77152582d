//! Splitting points into static background and moving foreground.
//!
//! Two routes produce motion labels: an oracle that thresholds ground-truth
//! flow against the ego-only explanation, and a residual classifier that
//! scores how badly the estimated ego motion alone explains each observed
//! point. Box containment supplies oracle foreground masks.

use crate::frame::FrameSequence;
use crate::geom::RigidTransform;
use crate::gt::OrientedBox;
use crate::spatial::PointIndex;
use crate::{Real, Vec3};
use thiserror::Error;

/// Speed above which a point counts as dynamic, in m/s.
pub const DYNAMIC_SPEED_THRESHOLD: Real = 0.5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SegmentError {
    #[error("{what} has length {got}, expected {expected}")]
    LengthMismatch { what: &'static str, got: usize, expected: usize },
    #[error("frame {frame} has no points")]
    EmptyFrame { frame: usize },
    #[error("elapsed time for frame {frame} is not positive")]
    NonPositiveElapsed { frame: usize },
}

/// Marks points whose ground-truth motion deviates from the ego-only
/// explanation faster than `speed_threshold` (strictly).
///
/// `flow` maps each point to its true displacement toward the target frame;
/// subtracting the ego-induced displacement `T(x) - x` isolates object
/// motion, whose magnitude over the elapsed time is a speed.
pub fn label_dynamic_from_flow(
    points: &[Vec3],
    flow: &[Vec3],
    ego: &RigidTransform<Real>,
    elapsed: Real,
    speed_threshold: Real,
) -> Result<Vec<bool>, SegmentError> {
    if flow.len() != points.len() {
        return Err(SegmentError::LengthMismatch {
            what: "flow",
            got: flow.len(),
            expected: points.len(),
        });
    }
    if !(elapsed > 0.0) {
        return Err(SegmentError::NonPositiveElapsed { frame: 0 });
    }
    Ok(points
        .iter()
        .zip(flow)
        .map(|(&x, &v)| {
            let ego_flow = ego.apply(x) - x;
            (v - ego_flow).norm() / elapsed > speed_threshold
        })
        .collect())
}

/// Inclusive containment test against a set of yaw-oriented boxes.
pub fn segment_foreground_oracle(points: &[Vec3], boxes: &[OrientedBox]) -> Vec<bool> {
    points
        .iter()
        .map(|&p| boxes.iter().any(|b| b.contains(p)))
        .collect()
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ResidualSegmenterConfig {
    /// Residual speed at which the score crosses 0.5, in m/s.
    pub speed_threshold: Real,
    /// Sigmoid sharpness around the threshold.
    pub temperature: Real,
    /// Neighbor search radius in meters; points without a neighbor inside
    /// it are treated as unexplained and scored 1.
    pub neighbor_radius: Real,
}

impl Default for ResidualSegmenterConfig {
    fn default() -> Self {
        Self { speed_threshold: DYNAMIC_SPEED_THRESHOLD, temperature: 10.0, neighbor_radius: 2.0 }
    }
}

/// Per-frame dynamic scores in [0, 1], index 0 being the target frame.
#[derive(Debug, Clone)]
pub struct SegmentationScores {
    pub frames: Vec<Vec<Real>>,
}

impl SegmentationScores {
    /// Scores for the frame with the given 1-based timestamp.
    pub fn frame(&self, t: usize) -> &[Real] {
        &self.frames[t - 1]
    }
}

fn sigmoid(x: Real) -> Real {
    1.0 / (1.0 + (-x).exp())
}

/// Scores each foreground point by how fast it appears to move once the
/// estimated ego motion is compensated.
///
/// Source points are warped into the target frame by their ego transform;
/// the distance to the nearest target point, divided by the elapsed time,
/// is a residual speed fed through a sigmoid. Target-frame points are
/// scored symmetrically against every compensated source frame, keeping
/// the smallest residual speed (the best static explanation). Points whose
/// foreground score is below 0.5 are fixed at 0; foreground points with no
/// neighbor in range are fixed at 1.
pub fn score_dynamic_by_residual(
    seq: &FrameSequence,
    ego: &[RigidTransform<Real>],
    foreground: &[Vec<Real>],
    cfg: &ResidualSegmenterConfig,
) -> Result<SegmentationScores, SegmentError> {
    let t_len = seq.len();
    if ego.len() != t_len {
        return Err(SegmentError::LengthMismatch { what: "ego", got: ego.len(), expected: t_len });
    }
    if foreground.len() != t_len {
        return Err(SegmentError::LengthMismatch {
            what: "foreground",
            got: foreground.len(),
            expected: t_len,
        });
    }
    for (i, (frame, fg)) in seq.frames().iter().zip(foreground).enumerate() {
        if fg.len() != frame.points.len() {
            return Err(SegmentError::LengthMismatch {
                what: "foreground frame",
                got: fg.len(),
                expected: frame.points.len(),
            });
        }
        if frame.points.is_empty() {
            return Err(SegmentError::EmptyFrame { frame: i + 1 });
        }
    }

    let target = &seq.target().points;
    let target_index = PointIndex::build(target, cfg.neighbor_radius);
    let mut frames = vec![Vec::new(); t_len];

    // Compensated source clouds double as the static explanations offered
    // to the target frame below.
    let mut compensated: Vec<(Real, Vec<Vec3>)> = Vec::with_capacity(t_len - 1);
    for frame in seq.source_frames() {
        let t = frame.timestamp_index;
        let elapsed = seq.elapsed(t);
        if !(elapsed > 0.0) {
            return Err(SegmentError::NonPositiveElapsed { frame: t });
        }
        let warped = ego[t - 1].apply_points(&frame.points);
        let fg = &foreground[t - 1];
        let scores = warped
            .iter()
            .zip(fg)
            .map(|(&y, &f)| {
                if f < 0.5 {
                    return 0.0;
                }
                match target_index.nearest_within(y, cfg.neighbor_radius) {
                    Some((_, dist)) => {
                        sigmoid(cfg.temperature * (dist / elapsed - cfg.speed_threshold))
                    }
                    None => 1.0,
                }
            })
            .collect();
        frames[t - 1] = scores;
        compensated.push((elapsed, warped));
    }

    let source_indexes: Vec<(Real, PointIndex)> = compensated
        .iter()
        .map(|(elapsed, pts)| (*elapsed, PointIndex::build(pts, cfg.neighbor_radius)))
        .collect();
    frames[0] = target
        .iter()
        .zip(&foreground[0])
        .map(|(&p, &f)| {
            if f < 0.5 {
                return 0.0;
            }
            let mut best: Option<Real> = None;
            for (elapsed, index) in &source_indexes {
                if let Some((_, dist)) = index.nearest_within(p, cfg.neighbor_radius) {
                    let rate = dist / elapsed;
                    best = Some(best.map_or(rate, |b: Real| b.min(rate)));
                }
            }
            match best {
                Some(rate) => sigmoid(cfg.temperature * (rate - cfg.speed_threshold)),
                None => 1.0,
            }
        })
        .collect();

    Ok(SegmentationScores { frames })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Frame;

    fn seq_of(points: Vec<Vec<Vec3>>) -> FrameSequence {
        let frames = points
            .into_iter()
            .enumerate()
            .map(|(i, pts)| Frame::new(i + 1, pts))
            .collect();
        FrameSequence::new(frames, 0.1).unwrap()
    }

    #[test]
    fn flow_labeling_thresholds_residual_speed_strictly() {
        let ego = RigidTransform::from_translation(Vec3::new(1.0, 0.0, 0.0));
        let points = vec![Vec3::new(2.0, 3.0, 0.0); 3];
        // Static point, object moving 1 m beyond ego, and exactly at the
        // 0.5 m/s boundary over 1 s elapsed.
        let flow = vec![
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(1.0, 0.5, 0.0),
        ];
        let labels = label_dynamic_from_flow(&points, &flow, &ego, 1.0, 0.5).unwrap();
        assert_eq!(labels, vec![false, true, false]);
    }

    #[test]
    fn flow_labeling_scales_with_elapsed_time() {
        let ego = RigidTransform::identity();
        let points = vec![Vec3::zeros()];
        let flow = vec![Vec3::new(0.3, 0.0, 0.0)];
        // 0.3 m over 1 s is static; the same gap over 0.4 s is 0.75 m/s.
        assert_eq!(label_dynamic_from_flow(&points, &flow, &ego, 1.0, 0.5).unwrap(), vec![false]);
        assert_eq!(label_dynamic_from_flow(&points, &flow, &ego, 0.4, 0.5).unwrap(), vec![true]);
    }

    #[test]
    fn foreground_oracle_is_inclusive_on_the_boundary() {
        let boxes = vec![OrientedBox {
            center: Vec3::zeros(),
            size: Vec3::new(4.0, 2.0, 2.0),
            yaw: 0.0,
        }];
        let labels = segment_foreground_oracle(
            &[Vec3::new(2.0, 0.0, 0.0), Vec3::new(2.001, 0.0, 0.0), Vec3::new(0.0, 0.0, 0.0)],
            &boxes,
        );
        assert_eq!(labels, vec![true, false, true]);
    }

    #[test]
    fn residual_scores_separate_static_from_moving() {
        // Static column of points plus one object point that moved 1.2 m
        // between the frames; ego shifts by 1 m per frame.
        let ego_shift = Vec3::new(1.0, 0.0, 0.0);
        let statics: Vec<Vec3> =
            (0..5).map(|i| Vec3::new(i as f64 * 3.0, 5.0, 0.0)).collect();
        let mut target = statics.clone();
        target.push(Vec3::new(0.0, -5.0, 0.0));
        let mut source: Vec<Vec3> = statics.iter().map(|&p| p - ego_shift).collect();
        source.push(Vec3::new(0.0, -5.0 - 1.2, 0.0) - ego_shift);

        let seq = seq_of(vec![target.clone(), source.clone()]);
        let ego = vec![
            RigidTransform::identity(),
            RigidTransform::from_translation(ego_shift),
        ];
        let fg = vec![vec![1.0; target.len()], vec![1.0; source.len()]];
        let mut cfg = ResidualSegmenterConfig::default();
        cfg.neighbor_radius = 2.0;
        let scores = score_dynamic_by_residual(&seq, &ego, &fg, &cfg).unwrap();

        // Elapsed 0.1 s: statics have residual 0 -> sigmoid(-5); the mover
        // has residual 1.2 m -> rate 12 -> saturates to 1.
        let low = 1.0 / (1.0 + 5.0f64.exp());
        for &s in &scores.frame(2)[..5] {
            assert!((s - low).abs() < 1e-12, "static score {s}");
        }
        assert!(scores.frame(2)[5] > 0.999);
        // Target frame mirrors the split via min residual over sources.
        for &s in &scores.frame(1)[..5] {
            assert!((s - low).abs() < 1e-12);
        }
        assert!(scores.frame(1)[5] > 0.999);
    }

    #[test]
    fn residual_scores_fix_background_at_zero_and_lonely_points_at_one() {
        let target = vec![Vec3::zeros(), Vec3::new(100.0, 0.0, 0.0)];
        let source = vec![Vec3::zeros(), Vec3::new(50.0, 50.0, 0.0)];
        let seq = seq_of(vec![target, source]);
        let ego = vec![RigidTransform::identity(), RigidTransform::identity()];
        let fg = vec![vec![1.0, 0.2], vec![0.4, 1.0]];
        let scores =
            score_dynamic_by_residual(&seq, &ego, &fg, &ResidualSegmenterConfig::default())
                .unwrap();
        assert_eq!(scores.frame(1)[1], 0.0, "background pinned to zero");
        assert_eq!(scores.frame(2)[0], 0.0);
        assert_eq!(scores.frame(2)[1], 1.0, "no neighbor in range");
    }

    #[test]
    fn residual_scoring_validates_lengths() {
        let seq = seq_of(vec![vec![Vec3::zeros()], vec![Vec3::zeros()]]);
        let ego = vec![RigidTransform::identity()];
        let err = score_dynamic_by_residual(
            &seq,
            &ego,
            &[vec![1.0], vec![1.0]],
            &ResidualSegmenterConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err, SegmentError::LengthMismatch { what: "ego", got: 1, expected: 2 });
    }
}
