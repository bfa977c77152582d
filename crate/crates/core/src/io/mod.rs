//! Reading and writing scenes on disk.
//!
//! A scene is a directory: one PLY cloud per frame, plus small sidecar
//! files for poses, ground-truth flow, and boxes. Every format is readable
//! by common tooling (PLY viewers, text editors) and every reader checks
//! its input instead of trusting it.

use crate::config::{Config, ConfigError};
use crate::frame::{Frame, FrameError, FlowError, FlowField, FrameSequence};
use crate::geom::RigidTransform;
use crate::gt::BoxTrack;
use crate::Real;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

mod boxes;
mod flow;
mod ply;
mod poses;

pub use boxes::{read_boxes, write_boxes};
pub use flow::{read_flow, write_flow};
pub use ply::{read_ply, write_ply, PlyCloud, PlyFormat};
pub use poses::{read_poses, write_poses};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("ply header line {line}: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("ply list property `{property}` is not supported")]
    UnsupportedProperty { property: String },
    #[error("body ended early: expected {expected} rows, got {got}")]
    TruncatedBody { expected: usize, got: usize },
    #[error("{what} has length {got}, expected {expected}")]
    AttributeLength { what: &'static str, got: usize, expected: usize },
    #[error("{file} line {line}: {reason}")]
    MalformedRecord { file: &'static str, line: usize, reason: String },
    #[error("pose line {line}: quaternion norm {norm} is too far from 1")]
    NonUnitQuaternion { line: usize, norm: f64 },
    #[error("pose frames must be contiguous from 1: expected {expected}, got {got}")]
    GapInFrames { expected: usize, got: usize },
    #[error("flow file ended early")]
    TruncatedFlow,
    #[error("duplicate box for instance {instance} at frame {frame}")]
    DuplicateBox { instance: u32, frame: usize },
    #[error("{file}: missing key `{key}`")]
    MissingKey { file: String, key: String },
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// A scene loaded from disk; sidecar data is present when its file is.
#[derive(Debug, Clone)]
pub struct SceneBundle {
    pub sequence: FrameSequence,
    pub ego: Option<Vec<RigidTransform<Real>>>,
    pub flow: Option<FlowField>,
    pub tracks: Vec<BoxTrack>,
}

fn frame_file(dir: &Path, t: usize) -> std::path::PathBuf {
    dir.join(format!("frame_{t:04}.ply"))
}

/// Writes a scene directory: meta.txt, per-frame PLYs, and whichever
/// sidecars were provided (poses.txt, flow_gt.bin, boxes.txt).
pub fn save_scene(
    dir: &Path,
    seq: &FrameSequence,
    ego: Option<&[RigidTransform<Real>]>,
    flow: Option<&FlowField>,
    tracks: &[BoxTrack],
    format: PlyFormat,
) -> Result<(), IoError> {
    fs::create_dir_all(dir)?;
    let mut meta = BufWriter::new(fs::File::create(dir.join("meta.txt"))?);
    writeln!(meta, "frames = {}", seq.len())?;
    writeln!(meta, "interval = {}", seq.interval())?;
    meta.flush()?;

    for frame in seq.frames() {
        let cloud = PlyCloud {
            points: frame.points.clone(),
            intensity: frame.intensity.clone(),
            foreground: Some(frame.foreground.clone()),
            dynamic: Some(frame.dynamic.clone()),
            instance_ids: Some(frame.instance_ids.clone()),
            source_frame: None,
        };
        let mut w = BufWriter::new(fs::File::create(frame_file(dir, frame.timestamp_index))?);
        write_ply(&mut w, &cloud, format)?;
        w.flush()?;
    }
    if let Some(ego) = ego {
        let mut w = BufWriter::new(fs::File::create(dir.join("poses.txt"))?);
        write_poses(&mut w, ego)?;
        w.flush()?;
    }
    if let Some(flow) = flow {
        let mut w = BufWriter::new(fs::File::create(dir.join("flow_gt.bin"))?);
        write_flow(&mut w, flow)?;
        w.flush()?;
    }
    if !tracks.is_empty() {
        let mut w = BufWriter::new(fs::File::create(dir.join("boxes.txt"))?);
        write_boxes(&mut w, tracks)?;
        w.flush()?;
    }
    Ok(())
}

/// Loads a scene directory written by [`save_scene`] (or assembled by
/// hand in the same layout).
pub fn load_scene(dir: &Path) -> Result<SceneBundle, IoError> {
    let meta_path = dir.join("meta.txt");
    let meta = Config::parse(&fs::read_to_string(&meta_path)?)?;
    let describe = meta_path.display().to_string();
    let frames_len = meta
        .root()
        .get_usize("frames")?
        .ok_or_else(|| IoError::MissingKey { file: describe.clone(), key: "frames".into() })?;
    let interval = meta
        .root()
        .get_f64("interval")?
        .ok_or_else(|| IoError::MissingKey { file: describe, key: "interval".into() })?;

    let mut frames = Vec::with_capacity(frames_len);
    for t in 1..=frames_len {
        let reader = BufReader::new(fs::File::open(frame_file(dir, t))?);
        let cloud = read_ply(reader)?;
        let mut frame = Frame::new(t, cloud.points);
        frame.intensity = cloud.intensity;
        if let Some(fg) = cloud.foreground {
            frame.foreground = fg;
        }
        if let Some(dynamic) = cloud.dynamic {
            frame.dynamic = dynamic;
        }
        if let Some(ids) = cloud.instance_ids {
            frame.instance_ids = ids;
        }
        frames.push(frame);
    }
    let sequence = FrameSequence::new(frames, interval)?;

    let poses_path = dir.join("poses.txt");
    let ego = if poses_path.exists() {
        let poses = read_poses(BufReader::new(fs::File::open(poses_path)?))?;
        Some(poses)
    } else {
        None
    };
    let flow_path = dir.join("flow_gt.bin");
    let flow = if flow_path.exists() {
        let flows = read_flow(BufReader::new(fs::File::open(flow_path)?))?;
        Some(FlowField::matching(&sequence, flows)?)
    } else {
        None
    };
    let boxes_path = dir.join("boxes.txt");
    let tracks = if boxes_path.exists() {
        read_boxes(BufReader::new(fs::File::open(boxes_path)?))?
    } else {
        Vec::new()
    };
    Ok(SceneBundle { sequence, ego, flow, tracks })
}
