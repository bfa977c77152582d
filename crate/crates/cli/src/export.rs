//! Merged-cloud export: every source point moved by its estimated flow,
//! all frames concatenated into one PLY with instance and source-frame
//! labels.

use crate::{labels, CliError, CliResult, PlyChoice};
use anyhow::Context as _;
use rigid_accum_core::assoc::InstanceLabeling;
use rigid_accum_core::frame::{FlowField, ObjectMotionSet};
use rigid_accum_core::io::{load_scene, read_flow, read_poses, write_ply, PlyCloud};
use rigid_accum_core::pipeline::{accumulate_points, AccumulationResult, PipelineDiagnostics};
use rigid_accum_core::segmenter::SegmentationScores;
use std::fs;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::PathBuf;

#[derive(clap::Args)]
pub struct Args {
    /// Scene bundle directory.
    pub bundle: PathBuf,
    /// Run output directory for that bundle.
    pub result: PathBuf,
    /// Merged PLY file to write.
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = PlyChoice::Binary)]
    pub format: PlyChoice,
}

pub fn cmd_export(args: &Args) -> CliResult {
    let bundle = load_scene(&args.bundle)
        .map_err(|e| CliError::input(anyhow::anyhow!("loading {}: {e}", args.bundle.display())))?;
    let seq = bundle.sequence;

    let open = |name: &str| {
        let path = args.result.join(name);
        fs::File::open(&path)
            .with_context(|| format!("opening {}", path.display()))
            .map_err(CliError::input)
    };
    let flows = read_flow(BufReader::new(open("flow.bin")?)).map_err(CliError::input)?;
    let flow = FlowField::matching(&seq, flows).map_err(|e| {
        CliError::input(anyhow::anyhow!("{} does not match the bundle: {e}", args.result.display()))
    })?;
    let label_frames = labels::read_labels(
        &fs::read_to_string(args.result.join("labels.txt"))
            .with_context(|| format!("reading {}", args.result.join("labels.txt").display()))
            .map_err(CliError::input)?,
    )
    .map_err(CliError::input)?;
    if label_frames.len() != seq.len() {
        return Err(CliError::input(anyhow::anyhow!(
            "labels cover {} frames, bundle has {}",
            label_frames.len(),
            seq.len()
        )));
    }
    for (frame, ids) in seq.frames().iter().zip(&label_frames) {
        if ids.len() != frame.len() {
            return Err(CliError::input(anyhow::anyhow!(
                "frame {} has {} labels for {} points",
                frame.timestamp_index,
                ids.len(),
                frame.len()
            )));
        }
    }
    let ego = read_poses(BufReader::new(open("poses.txt")?)).map_err(CliError::input)?;
    if ego.len() != seq.len() {
        return Err(CliError::input(anyhow::anyhow!(
            "poses cover {} frames, bundle has {}",
            ego.len(),
            seq.len()
        )));
    }

    let cluster_count = label_frames.iter().flatten().copied().max().unwrap_or(0) as usize;
    let result = AccumulationResult {
        flow,
        ego,
        objects: ObjectMotionSet::new(),
        scores: SegmentationScores { frames: Vec::new() },
        labels: InstanceLabeling { frames: label_frames, cluster_count },
        diagnostics: PipelineDiagnostics::default(),
    };
    let merged = accumulate_points(&seq, &result);
    let cloud = PlyCloud {
        points: merged.frame.points,
        intensity: merged.frame.intensity,
        foreground: Some(merged.frame.foreground),
        dynamic: Some(merged.frame.dynamic),
        instance_ids: Some(merged.frame.instance_ids),
        source_frame: Some(merged.source_frame.iter().map(|&t| t as u32).collect()),
    };
    let mut w = BufWriter::new(fs::File::create(&args.out).map_err(|e| {
        CliError::pipeline(anyhow::anyhow!("creating {}: {e}", args.out.display()))
    })?);
    write_ply(&mut w, &cloud, args.format.into()).map_err(CliError::pipeline)?;
    w.flush().map_err(CliError::pipeline)?;

    println!("merged {} points into {}", cloud.points.len(), args.out.display());
    Ok(())
}
