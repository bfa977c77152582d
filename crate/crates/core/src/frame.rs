//! Point cloud frames, sequences, flow fields, and rigid flow composition.
//!
//! A sequence holds frames 1..=T in sensor coordinates, frame 1 being the
//! accumulation target. Scene flow for a source point is the displacement
//! onto its target-frame position: ego motion alone for static points, ego
//! followed by the per-object transform for points on moving instances.

use crate::{Real, RigidTransform, Vec3};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FrameError {
    #[error("frame {frame}: attribute length {got} does not match point count {points}")]
    AttributeLengthMismatch { frame: usize, got: usize, points: usize },
    #[error("frame {frame}, point {index}: instance id {id} on a non-foreground point")]
    OrphanInstanceLabel { frame: usize, index: usize, id: u32 },
    #[error("frame timestamps must be contiguous from 1, found {found} at position {position}")]
    NonContiguousTimestamps { position: usize, found: usize },
    #[error("a sequence needs at least 2 frames, got {got}")]
    TooFewFrames { got: usize },
    #[error("frame interval must be positive, got {got}")]
    NonPositiveInterval { got: f64 },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FlowError {
    #[error("no transform for instance {instance} in frame {frame}")]
    MissingObjectTransform { instance: u32, frame: usize },
    #[error("{what} has length {got}, expected {expected}")]
    LengthMismatch { what: &'static str, got: usize, expected: usize },
}

/// One LiDAR sweep in its own sensor coordinates, with optional per-point
/// annotations. Attribute vectors always match the point count.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub timestamp_index: usize,
    pub points: Vec<Vec3>,
    pub intensity: Option<Vec<Real>>,
    pub foreground: Vec<bool>,
    pub dynamic: Vec<bool>,
    pub instance_ids: Vec<u32>,
}

impl Frame {
    pub fn new(timestamp_index: usize, points: Vec<Vec3>) -> Self {
        let n = points.len();
        Self {
            timestamp_index,
            points,
            intensity: None,
            foreground: vec![false; n],
            dynamic: vec![false; n],
            instance_ids: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<(), FrameError> {
        let n = self.points.len();
        let frame = self.timestamp_index;
        for got in [
            self.foreground.len(),
            self.dynamic.len(),
            self.instance_ids.len(),
            self.intensity.as_ref().map_or(n, Vec::len),
        ] {
            if got != n {
                return Err(FrameError::AttributeLengthMismatch { frame, got, points: n });
            }
        }
        for (index, (&id, &fg)) in self.instance_ids.iter().zip(&self.foreground).enumerate() {
            if id != 0 && !fg {
                return Err(FrameError::OrphanInstanceLabel { frame, index, id });
            }
        }
        Ok(())
    }
}

/// Frames 1..=T at a fixed time interval; frame 1 is the target.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    frames: Vec<Frame>,
    interval: Real,
}

impl FrameSequence {
    pub fn new(frames: Vec<Frame>, interval: Real) -> Result<Self, FrameError> {
        if frames.len() < 2 {
            return Err(FrameError::TooFewFrames { got: frames.len() });
        }
        if !(interval > 0.0) {
            return Err(FrameError::NonPositiveInterval { got: interval });
        }
        for (position, frame) in frames.iter().enumerate() {
            if frame.timestamp_index != position + 1 {
                return Err(FrameError::NonContiguousTimestamps {
                    position,
                    found: frame.timestamp_index,
                });
            }
            frame.validate()?;
        }
        Ok(Self { frames, interval })
    }

    /// Number of frames T.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn interval(&self) -> Real {
        self.interval
    }

    /// Seconds elapsed from frame `t` back to the target frame.
    pub fn elapsed(&self, t: usize) -> Real {
        (t - 1) as Real * self.interval
    }

    pub fn target(&self) -> &Frame {
        &self.frames[0]
    }

    /// Frame by 1-based timestamp index.
    pub fn frame(&self, t: usize) -> &Frame {
        &self.frames[t - 1]
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    /// Source frames t = 2..=T in order.
    pub fn source_frames(&self) -> impl Iterator<Item = &Frame> {
        self.frames[1..].iter()
    }

    /// Truncated copy covering frames 1..=t.
    pub fn prefix(&self, t: usize) -> Result<Self, FrameError> {
        Self::new(self.frames[..t].to_vec(), self.interval)
    }
}

/// Per-point 3D flow for every source frame, indexed by timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    flows: Vec<Vec<Vec3>>,
}

impl FlowField {
    /// `flows[i]` belongs to frame `t = i + 2`.
    pub fn new(flows: Vec<Vec<Vec3>>) -> Self {
        Self { flows }
    }

    pub fn matching(seq: &FrameSequence, flows: Vec<Vec<Vec3>>) -> Result<Self, FlowError> {
        if flows.len() != seq.len() - 1 {
            return Err(FlowError::LengthMismatch {
                what: "flow frame list",
                got: flows.len(),
                expected: seq.len() - 1,
            });
        }
        for (i, f) in flows.iter().enumerate() {
            let expected = seq.frame(i + 2).len();
            if f.len() != expected {
                return Err(FlowError::LengthMismatch {
                    what: "flow vector list",
                    got: f.len(),
                    expected,
                });
            }
        }
        Ok(Self { flows })
    }

    /// Flow of source frame `t` (2-based timestamp).
    pub fn flow_for(&self, t: usize) -> &[Vec3] {
        &self.flows[t - 2]
    }

    pub fn source_count(&self) -> usize {
        self.flows.len()
    }

    pub fn frames(&self) -> &[Vec<Vec3>] {
        &self.flows
    }
}

/// Rigid motions of labeled instances, keyed by (instance id, frame).
/// A missing key means the instance has no estimate for that frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjectMotionSet {
    map: BTreeMap<(u32, usize), RigidTransform>,
}

impl ObjectMotionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, instance: u32, frame: usize, transform: RigidTransform) {
        self.map.insert((instance, frame), transform);
    }

    pub fn get(&self, instance: u32, frame: usize) -> Option<&RigidTransform> {
        self.map.get(&(instance, frame))
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, usize, &RigidTransform)> {
        self.map.iter().map(|(&(k, t), tr)| (k, t, tr))
    }

    pub fn instances(&self) -> impl Iterator<Item = u32> + '_ {
        let mut last = None;
        self.map.keys().filter_map(move |&(k, _)| {
            (last != Some(k)).then(|| {
                last = Some(k);
                k
            })
        })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Composes per-point flow from ego motion and per-instance motion.
///
/// `ego[t-1]` maps frame-t sensor coordinates into target coordinates
/// (`ego[0]` is the target's own pose and is ignored). `labels[t-1][i]`
/// names the moving instance of point i, 0 meaning static. Static points
/// receive `ego(x) - x`; labeled points `obj(ego(x)) - x`.
pub fn compose_scene_flow(
    seq: &FrameSequence,
    ego: &[RigidTransform],
    objects: &ObjectMotionSet,
    labels: &[Vec<u32>],
) -> Result<FlowField, FlowError> {
    if ego.len() != seq.len() {
        return Err(FlowError::LengthMismatch {
            what: "ego transform list",
            got: ego.len(),
            expected: seq.len(),
        });
    }
    if labels.len() != seq.len() {
        return Err(FlowError::LengthMismatch {
            what: "label list",
            got: labels.len(),
            expected: seq.len(),
        });
    }
    let mut flows = Vec::with_capacity(seq.len() - 1);
    for t in 2..=seq.len() {
        let frame = seq.frame(t);
        let frame_labels = &labels[t - 1];
        if frame_labels.len() != frame.len() {
            return Err(FlowError::LengthMismatch {
                what: "frame labels",
                got: frame_labels.len(),
                expected: frame.len(),
            });
        }
        let ego_t = &ego[t - 1];
        let mut flow = Vec::with_capacity(frame.len());
        for (&x, &id) in frame.points.iter().zip(frame_labels) {
            let aligned = ego_t.apply(x);
            let mapped = if id == 0 {
                aligned
            } else {
                let obj = objects
                    .get(id, t)
                    .ok_or(FlowError::MissingObjectTransform { instance: id, frame: t })?;
                obj.apply(aligned)
            };
            flow.push(mapped - x);
        }
        flows.push(flow);
    }
    Ok(FlowField { flows })
}
