//! Pipeline runs: bundle in; flow, poses, labels, diagnostics, and a
//! manifest out.

use crate::manifest::{dir_entries, digest_files, write_json_atomic, Manifest};
use crate::{labels, seed_from_env, CliError, CliResult};
use anyhow::Context as _;
use rigid_accum_core::config::Config;
use rigid_accum_core::frame::ObjectMotionSet;
use rigid_accum_core::gt::{box_pair_transform, BoxTrack};
use rigid_accum_core::io::{load_scene, write_flow, write_poses};
use rigid_accum_core::pipeline::{self, AccumulationResult, OracleInputs, PipelineConfig};
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Everything the run writes besides the manifest; used for cleanup too.
const OUTPUT_FILES: [&str; 4] = ["flow.bin", "poses.txt", "labels.txt", "diagnostics.json"];

#[derive(clap::Args)]
pub struct Args {
    /// Scene bundle directory (from `simulate`, or the same layout).
    pub bundle: PathBuf,
    /// Output directory, created if missing.
    pub out: PathBuf,
    /// Run settings (`key = value` with sections); defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Settings baseline; shorthand for a `profile` key in the file.
    #[arg(long, value_enum)]
    pub profile: Option<Profile>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum Profile {
    Waymo,
    Nuscenes,
}

impl Profile {
    fn key(self) -> &'static str {
        match self {
            Profile::Waymo => "waymo",
            Profile::Nuscenes => "nuscenes",
        }
    }
}

fn resolve_config(args: &Args) -> CliResult<PipelineConfig> {
    let mut text = match &args.config {
        Some(path) => fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(CliError::input)?,
        None => String::new(),
    };
    if let Some(profile) = args.profile {
        let parsed = Config::parse(&text).map_err(CliError::input)?;
        if parsed.root().get("profile").is_some() {
            return Err(CliError::input(anyhow::anyhow!(
                "--profile conflicts with the `profile` key in the config file"
            )));
        }
        text = format!("profile = {}\n{text}", profile.key());
    }
    let config = Config::parse(&text).map_err(CliError::input)?;
    let mut cfg = PipelineConfig::from_config(&config).map_err(CliError::input)?;
    if let Some(seed) = seed_from_env()? {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Ground-truth motions toward the target frame, straight from box pairs.
/// Boxes live in target-aligned coordinates, so no ego transform applies.
fn track_motions(tracks: &[BoxTrack], frames: usize) -> CliResult<ObjectMotionSet> {
    let mut objects = ObjectMotionSet::new();
    for track in tracks {
        let target = track.interpolate(1).ok_or_else(|| {
            CliError::input(anyhow::anyhow!(
                "track {} has no box at the target frame",
                track.instance_id
            ))
        })?;
        for t in 2..=frames {
            if let Some(b) = track.interpolate(t) {
                objects.insert(track.instance_id, t, box_pair_transform(&b, &target));
            }
        }
    }
    Ok(objects)
}

fn write_outputs(dir: &Path, result: &AccumulationResult) -> anyhow::Result<()> {
    let mut w = BufWriter::new(fs::File::create(dir.join("flow.bin"))?);
    write_flow(&mut w, &result.flow)?;
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(dir.join("poses.txt"))?);
    write_poses(&mut w, &result.ego)?;
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(dir.join("labels.txt"))?);
    labels::write_labels(&mut w, &result.labels.frames)?;
    w.flush()?;

    write_json_atomic(&dir.join("diagnostics.json"), &result.diagnostics)?;
    Ok(())
}

fn remove_outputs(dir: &Path) {
    for name in OUTPUT_FILES.iter().chain(&["manifest.json"]) {
        let _ = fs::remove_file(dir.join(name));
    }
}

pub fn cmd_run(args: &Args) -> CliResult {
    let clock = Instant::now();
    let cfg = resolve_config(args)?;
    let bundle = load_scene(&args.bundle)
        .map_err(|e| CliError::input(anyhow::anyhow!("loading {}: {e}", args.bundle.display())))?;

    // Oracle stages read ground truth; require the sidecars up front so a
    // misconfigured run fails as an input error, not mid-pipeline.
    if cfg.oracle_features && bundle.flow.is_none() {
        return Err(CliError::input(anyhow::anyhow!(
            "oracle_features needs flow_gt.bin in the bundle"
        )));
    }
    let objects = if cfg.oracle_offsets {
        if bundle.tracks.is_empty() {
            return Err(CliError::input(anyhow::anyhow!(
                "oracle_offsets needs boxes.txt in the bundle"
            )));
        }
        Some(track_motions(&bundle.tracks, bundle.sequence.len())?)
    } else {
        None
    };
    let oracle = OracleInputs { flow: bundle.flow.as_ref(), objects: objects.as_ref() };

    let result = pipeline::run(&bundle.sequence, &cfg, oracle).map_err(CliError::pipeline)?;

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .map_err(CliError::input)?;
    if let Err(e) = write_outputs(&args.out, &result) {
        remove_outputs(&args.out);
        return Err(CliError::pipeline(e));
    }

    let mut inputs = BTreeMap::from([("bundle", args.bundle.display().to_string())]);
    let mut hashed = dir_entries("bundle", &args.bundle).map_err(CliError::input)?;
    if let Some(path) = &args.config {
        inputs.insert("config", path.display().to_string());
        hashed.push((format!("config/{}", path.display()), path.clone()));
    }
    let t = &result.diagnostics.timings;
    let manifest = Manifest {
        command: "run",
        config: &cfg,
        inputs,
        input_hash: digest_files(&hashed).map_err(CliError::input)?,
        outputs: OUTPUT_FILES.iter().map(|s| s.to_string()).collect(),
        timings_s: BTreeMap::from([
            ("features", t.features_s),
            ("ego", t.ego_s),
            ("segmentation", t.segmentation_s),
            ("association", t.association_s),
            ("object_motion", t.object_motion_s),
            ("composition", t.composition_s),
            ("total", clock.elapsed().as_secs_f64()),
        ]),
    };
    if let Err(e) = write_json_atomic(&args.out.join("manifest.json"), &manifest) {
        remove_outputs(&args.out);
        return Err(CliError::pipeline(e));
    }

    println!(
        "accumulated {} frames, {} instances -> {}",
        bundle.sequence.len(),
        result.labels.cluster_count,
        args.out.display()
    );
    Ok(())
}
