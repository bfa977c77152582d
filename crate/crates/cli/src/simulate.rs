//! Scene generation: description file in, bundle directory out.

use crate::manifest::{digest_files, write_json_atomic, Manifest};
use crate::{seed_from_env, CliError, CliResult, PlyChoice};
use anyhow::Context as _;
use rigid_accum_core::config::Config;
use rigid_accum_core::io::save_scene;
use rigid_accum_core::sim::{simulate, SceneSpec};
use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

#[derive(clap::Args)]
pub struct Args {
    /// Scene description: `key = value` lines with [object] sections.
    pub spec: PathBuf,
    /// Bundle directory to create.
    pub out: PathBuf,
    /// Encoding for the frame PLY files.
    #[arg(long, value_enum, default_value_t = PlyChoice::Binary)]
    pub format: PlyChoice,
}

pub fn cmd_simulate(args: &Args) -> CliResult {
    let clock = Instant::now();
    let text = fs::read_to_string(&args.spec)
        .with_context(|| format!("reading {}", args.spec.display()))
        .map_err(CliError::input)?;
    let config = Config::parse(&text).map_err(CliError::input)?;
    let mut spec = SceneSpec::from_config(&config).map_err(CliError::input)?;
    if let Some(seed) = seed_from_env()? {
        spec.seed = seed;
    }
    let scene = simulate(&spec).map_err(CliError::input)?;

    save_scene(
        &args.out,
        &scene.sequence,
        Some(&scene.ego),
        Some(&scene.flow),
        &scene.tracks,
        args.format.into(),
    )
    .map_err(|e| CliError::pipeline(anyhow::anyhow!("writing {}: {e}", args.out.display())))?;

    let mut outputs = vec!["meta.txt".to_string(), "poses.txt".into(), "flow_gt.bin".into()];
    for t in 1..=scene.sequence.len() {
        outputs.push(format!("frame_{t:04}.ply"));
    }
    if !scene.tracks.is_empty() {
        outputs.push("boxes.txt".into());
    }
    outputs.sort();

    let manifest = Manifest {
        command: "simulate",
        config: &spec,
        inputs: BTreeMap::from([("spec", args.spec.display().to_string())]),
        input_hash: digest_files(&[("spec".into(), args.spec.clone())])
            .map_err(CliError::input)?,
        outputs,
        timings_s: BTreeMap::from([("total", clock.elapsed().as_secs_f64())]),
    };
    write_json_atomic(&args.out.join("manifest.json"), &manifest).map_err(CliError::pipeline)?;

    println!(
        "simulated {} frames ({} points) into {}",
        scene.sequence.len(),
        scene.sequence.frames().iter().map(|f| f.len()).sum::<usize>(),
        args.out.display()
    );
    Ok(())
}
