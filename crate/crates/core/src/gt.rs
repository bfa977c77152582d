//! Ground-truth object boxes, track interpolation, and pseudo-label
//! construction.
//!
//! Boxes live in target-aligned coordinates (the frame every cloud maps
//! into once ego motion is compensated), so a pair of boxes from the same
//! track directly yields the rigid motion an object underwent between two
//! timestamps.

use crate::frame::{FrameSequence, ObjectMotionSet};
use crate::geom::RigidTransform;
use crate::{Real, Vec3};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GtError {
    #[error("track {instance} has no boxes")]
    EmptyTrack { instance: u32 },
    #[error("instance id 0 is reserved for background")]
    ReservedInstanceId,
    #[error("duplicate track for instance {instance}")]
    DuplicateInstance { instance: u32 },
    #[error("track {instance} cannot be interpolated at the target frame")]
    MissingTargetBox { instance: u32 },
    #[error("foreground point {index} in frame {frame} is covered by no box")]
    UncoveredForegroundPoint { frame: usize, index: usize },
}

/// Yaw-oriented box: full extents along its local axes, rotated about z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Vec3,
    /// Full lengths along the local x, y, z axes.
    pub size: Vec3,
    pub yaw: Real,
}

impl OrientedBox {
    /// Inclusive containment: boundary points count as inside.
    pub fn contains(&self, p: Vec3) -> bool {
        let d = p - self.center;
        let (s, c) = self.yaw.sin_cos();
        let local = Vec3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z);
        local.x.abs() <= self.size.x * 0.5
            && local.y.abs() <= self.size.y * 0.5
            && local.z.abs() <= self.size.z * 0.5
    }

    /// Box pose as a rigid transform (local box frame to world).
    pub fn pose(&self) -> RigidTransform<Real> {
        RigidTransform::from_yaw_translation(self.yaw, self.center)
    }
}

/// One object's boxes over time, keyed by 1-based frame index.
#[derive(Debug, Clone)]
pub struct BoxTrack {
    pub instance_id: u32,
    pub boxes: BTreeMap<usize, OrientedBox>,
}

impl BoxTrack {
    pub fn new(instance_id: u32, keyed: impl IntoIterator<Item = (usize, OrientedBox)>) -> Self {
        Self { instance_id, boxes: keyed.into_iter().collect() }
    }

    /// Box at `frame`, interpolating between surrounding keyframes with a
    /// linear center and size and a shorter-arc yaw. No extrapolation:
    /// frames outside the keyed range return None.
    pub fn interpolate(&self, frame: usize) -> Option<OrientedBox> {
        if let Some(b) = self.boxes.get(&frame) {
            return Some(*b);
        }
        let prev = self.boxes.range(..frame).next_back()?;
        let next = self.boxes.range(frame + 1..).next()?;
        let alpha = (frame - prev.0) as Real / (next.0 - prev.0) as Real;
        let lerp = |a: Vec3, b: Vec3| a + (b - a) * alpha;
        Some(OrientedBox {
            center: lerp(prev.1.center, next.1.center),
            size: lerp(prev.1.size, next.1.size),
            yaw: prev.1.yaw + wrap_to_pi(next.1.yaw - prev.1.yaw) * alpha,
        })
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_to_pi(angle: Real) -> Real {
    let two_pi = 2.0 * std::f64::consts::PI;
    let wrapped = angle.rem_euclid(two_pi);
    if wrapped > std::f64::consts::PI {
        wrapped - two_pi
    } else {
        wrapped
    }
}

/// Rigid motion carrying the `from` box onto the `to` box: the pose change
/// of the object between the two observations.
pub fn box_pair_transform(from: &OrientedBox, to: &OrientedBox) -> RigidTransform<Real> {
    to.pose().compose(&from.pose().inverse())
}

/// Labels and motions derived from box tracks.
#[derive(Debug, Clone)]
pub struct PseudoGt {
    /// Per frame, whether each point falls inside some box.
    pub foreground: Vec<Vec<bool>>,
    /// Per frame, containing instance id per point (0 = background).
    pub instance_ids: Vec<Vec<u32>>,
    /// Motion toward the target frame for every (instance, source frame)
    /// whose track covers both endpoints.
    pub objects: ObjectMotionSet,
}

/// Builds per-point labels and per-object motions from box tracks.
///
/// `ego` (one transform per frame, target first) moves each cloud into
/// target-aligned coordinates before containment tests. Points claimed by
/// several boxes go to the box with the nearest center. Frames that
/// already carry foreground labels are checked against the boxes: a
/// pre-labeled foreground point outside every box is an error, since no
/// instance or motion can be assigned to it.
pub fn build_pseudo_gt(
    seq: &FrameSequence,
    tracks: &[BoxTrack],
    ego: &[RigidTransform<Real>],
) -> Result<PseudoGt, GtError> {
    let mut seen = std::collections::BTreeSet::new();
    for track in tracks {
        if track.instance_id == 0 {
            return Err(GtError::ReservedInstanceId);
        }
        if track.boxes.is_empty() {
            return Err(GtError::EmptyTrack { instance: track.instance_id });
        }
        if !seen.insert(track.instance_id) {
            return Err(GtError::DuplicateInstance { instance: track.instance_id });
        }
    }

    let t_len = seq.len();
    let mut foreground = Vec::with_capacity(t_len);
    let mut instance_ids = Vec::with_capacity(t_len);
    let mut objects = ObjectMotionSet::new();

    for frame in seq.frames() {
        let t = frame.timestamp_index;
        let aligned = ego[t - 1].apply_points(&frame.points);
        let boxes: Vec<(u32, OrientedBox)> = tracks
            .iter()
            .filter_map(|tr| tr.interpolate(t).map(|b| (tr.instance_id, b)))
            .collect();

        let mut fg = vec![false; aligned.len()];
        let mut ids = vec![0u32; aligned.len()];
        for (i, &p) in aligned.iter().enumerate() {
            let mut best: Option<(Real, u32)> = None;
            for (id, b) in &boxes {
                if b.contains(p) {
                    let d2 = (p - b.center).norm_squared();
                    let candidate = (d2, *id);
                    best = Some(match best {
                        Some(current) if current <= candidate => current,
                        _ => candidate,
                    });
                }
            }
            if let Some((_, id)) = best {
                fg[i] = true;
                ids[i] = id;
            } else if frame.foreground.get(i).copied().unwrap_or(false) {
                return Err(GtError::UncoveredForegroundPoint { frame: t, index: i });
            }
        }

        if t >= 2 {
            for (id, b) in &boxes {
                let track = tracks.iter().find(|tr| tr.instance_id == *id).expect("known id");
                let target_box =
                    track.interpolate(1).ok_or(GtError::MissingTargetBox { instance: *id })?;
                objects.insert(*id, t, box_pair_transform(b, &target_box));
            }
        }
        foreground.push(fg);
        instance_ids.push(ids);
    }
    Ok(PseudoGt { foreground, instance_ids, objects })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Frame;

    #[test]
    fn containment_respects_yaw() {
        let b = OrientedBox {
            center: Vec3::new(1.0, 1.0, 0.0),
            size: Vec3::new(4.0, 2.0, 2.0),
            yaw: std::f64::consts::FRAC_PI_2,
        };
        // The long axis now runs along y.
        assert!(b.contains(Vec3::new(1.0, 3.0, 0.0)));
        assert!(!b.contains(Vec3::new(3.0, 1.0, 0.0)));
        assert!(b.contains(Vec3::new(2.0, 1.0, 0.0)));
    }

    #[test]
    fn interpolation_is_linear_with_shorter_arc_yaw() {
        let track = BoxTrack::new(
            7,
            [
                (1, OrientedBox { center: Vec3::zeros(), size: Vec3::new(2.0, 1.0, 1.0), yaw: 3.0 }),
                (
                    5,
                    OrientedBox {
                        center: Vec3::new(4.0, 0.0, 0.0),
                        size: Vec3::new(2.0, 1.0, 1.0),
                        yaw: -3.0,
                    },
                ),
            ],
        );
        let mid = track.interpolate(3).unwrap();
        assert!((mid.center.x - 2.0).abs() < 1e-12);
        // From 3.0 to -3.0 the short way passes through pi, not 0.
        assert!(wrap_to_pi(mid.yaw - std::f64::consts::PI).abs() < 1e-12);
        assert!(track.interpolate(6).is_none(), "no extrapolation");
        assert_eq!(track.interpolate(5).unwrap().yaw, -3.0);
    }

    #[test]
    fn box_pair_transform_carries_one_box_onto_the_other() {
        let from = OrientedBox { center: Vec3::new(5.0, 0.0, 0.0), size: Vec3::new(4.0, 2.0, 2.0), yaw: 0.2 };
        let to = OrientedBox { center: Vec3::new(3.0, 1.0, 0.0), size: Vec3::new(4.0, 2.0, 2.0), yaw: 0.9 };
        let t = box_pair_transform(&from, &to);
        assert!((t.apply(from.center) - to.center).norm() < 1e-12);
        assert!((t.rotation.yaw() - 0.7).abs() < 1e-12);
        // A corner of the box lands on the matching corner.
        let corner_local = Vec3::new(2.0, 1.0, 1.0);
        let corner_from = from.pose().apply(corner_local);
        let corner_to = to.pose().apply(corner_local);
        assert!((t.apply(corner_from) - corner_to).norm() < 1e-12);
    }

    #[test]
    fn pseudo_gt_labels_points_and_extracts_motions() {
        // Object slides +2 in x between source (t=2) and target (t=1);
        // the ego is static so aligned coordinates equal raw ones.
        let box_t1 =
            OrientedBox { center: Vec3::new(2.0, 0.0, 0.0), size: Vec3::new(2.0, 2.0, 2.0), yaw: 0.0 };
        let box_t2 =
            OrientedBox { center: Vec3::new(0.0, 0.0, 0.0), size: Vec3::new(2.0, 2.0, 2.0), yaw: 0.0 };
        let track = BoxTrack::new(3, [(1, box_t1), (2, box_t2)]);
        let target = Frame::new(1, vec![Vec3::new(2.0, 0.0, 0.0), Vec3::new(9.0, 9.0, 0.0)]);
        let source = Frame::new(2, vec![Vec3::new(0.2, 0.3, 0.0), Vec3::new(9.0, 9.0, 0.0)]);
        let seq = FrameSequence::new(vec![target, source], 0.1).unwrap();
        let ego = vec![RigidTransform::identity(); 2];
        let gt = build_pseudo_gt(&seq, &[track], &ego).unwrap();

        assert_eq!(gt.foreground, vec![vec![true, false], vec![true, false]]);
        assert_eq!(gt.instance_ids, vec![vec![3, 0], vec![3, 0]]);
        let motion = gt.objects.get(3, 2).unwrap();
        assert!((motion.apply(Vec3::new(0.2, 0.3, 0.0)) - Vec3::new(2.2, 0.3, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn pseudo_gt_prefers_the_nearest_center_for_overlaps() {
        let near =
            OrientedBox { center: Vec3::new(0.5, 0.0, 0.0), size: Vec3::new(4.0, 4.0, 4.0), yaw: 0.0 };
        let far =
            OrientedBox { center: Vec3::new(-1.5, 0.0, 0.0), size: Vec3::new(8.0, 8.0, 8.0), yaw: 0.0 };
        let tracks = vec![BoxTrack::new(2, [(1, far)]), BoxTrack::new(9, [(1, near)])];
        let seq = FrameSequence::new(
            vec![Frame::new(1, vec![Vec3::zeros()]), Frame::new(2, vec![Vec3::new(50.0, 0.0, 0.0)])],
            0.1,
        )
        .unwrap();
        let ego = vec![RigidTransform::identity(); 2];
        let gt = build_pseudo_gt(&seq, &tracks, &ego).unwrap();
        assert_eq!(gt.instance_ids[0], vec![9]);
    }

    #[test]
    fn pseudo_gt_rejects_uncovered_prelabeled_foreground() {
        let mut target = Frame::new(1, vec![Vec3::new(50.0, 0.0, 0.0)]);
        target.foreground = vec![true];
        let seq =
            FrameSequence::new(vec![target, Frame::new(2, vec![Vec3::zeros()])], 0.1).unwrap();
        let b = OrientedBox { center: Vec3::zeros(), size: Vec3::new(1.0, 1.0, 1.0), yaw: 0.0 };
        let err = build_pseudo_gt(
            &seq,
            &[BoxTrack::new(1, [(1, b)])],
            &[RigidTransform::identity(), RigidTransform::identity()],
        )
        .unwrap_err();
        assert_eq!(err, GtError::UncoveredForegroundPoint { frame: 1, index: 0 });
    }

    #[test]
    fn pseudo_gt_validates_tracks() {
        let seq = FrameSequence::new(
            vec![Frame::new(1, vec![Vec3::zeros()]), Frame::new(2, vec![Vec3::zeros()])],
            0.1,
        )
        .unwrap();
        let ego = vec![RigidTransform::identity(); 2];
        let b = OrientedBox { center: Vec3::zeros(), size: Vec3::new(1.0, 1.0, 1.0), yaw: 0.0 };
        assert_eq!(
            build_pseudo_gt(&seq, &[BoxTrack::new(0, [(1, b)])], &ego).unwrap_err(),
            GtError::ReservedInstanceId
        );
        assert_eq!(
            build_pseudo_gt(&seq, &[BoxTrack::new(4, [])], &ego).unwrap_err(),
            GtError::EmptyTrack { instance: 4 }
        );
        let dup = vec![BoxTrack::new(4, [(1, b)]), BoxTrack::new(4, [(1, b)])];
        assert_eq!(
            build_pseudo_gt(&seq, &dup, &ego).unwrap_err(),
            GtError::DuplicateInstance { instance: 4 }
        );
    }

    #[test]
    fn wrap_to_pi_covers_the_boundary() {
        assert!((wrap_to_pi(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_to_pi(-0.1) + 0.1).abs() < 1e-15);
        assert_eq!(wrap_to_pi(0.0), 0.0);
    }
}
