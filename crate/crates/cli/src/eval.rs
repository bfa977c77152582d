//! Flow evaluation: a run's predictions against a bundle's ground truth,
//! split static/dynamic, optionally restricted to an evaluation region.

use crate::manifest::write_json_atomic;
use crate::{CliError, CliResult};
use anyhow::Context as _;
use rigid_accum_core::frame::FlowField;
use rigid_accum_core::io::{load_scene, read_flow};
use rigid_accum_core::metrics::{eval_region_mask, flow_metrics, Ecdf, FlowMetrics, MetricsError};
use rigid_accum_core::Real;
use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

#[derive(clap::Args)]
pub struct Args {
    /// Run output directory (needs flow.bin), or a directory with one
    /// such subdirectory per scene.
    pub pred: PathBuf,
    /// Ground-truth bundle matching `pred`, or a directory of bundles.
    pub gt: PathBuf,
    /// Only evaluate points within this half extent in x and y, meters.
    #[arg(long, value_name = "METERS")]
    pub region: Option<Real>,
    /// Only evaluate points strictly above this height, meters.
    #[arg(long, value_name = "Z")]
    pub ground_z: Option<Real>,
    /// Print one block per scene before the aggregate.
    #[arg(long)]
    pub per_scene: bool,
    /// Print the named error's empirical CDF as a two-column table.
    #[arg(long, value_enum, value_name = "METRIC")]
    pub ecdf: Option<EcdfMetric>,
    /// JSON report path (default: <pred>/eval.json).
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EcdfMetric {
    #[value(name = "epe")]
    Epe,
    #[value(name = "epe_static")]
    EpeStatic,
    #[value(name = "epe_dynamic")]
    EpeDynamic,
}

impl EcdfMetric {
    fn name(self) -> &'static str {
        match self {
            EcdfMetric::Epe => "epe",
            EcdfMetric::EpeStatic => "epe_static",
            EcdfMetric::EpeDynamic => "epe_dynamic",
        }
    }

    /// Which dynamic flag the metric selects; None keeps every point.
    fn wants_dynamic(self) -> Option<bool> {
        match self {
            EcdfMetric::Epe => None,
            EcdfMetric::EpeStatic => Some(false),
            EcdfMetric::EpeDynamic => Some(true),
        }
    }
}

#[derive(serde::Serialize)]
struct SplitMetrics {
    all: FlowMetrics,
    #[serde(rename = "static")]
    stat: Option<FlowMetrics>,
    dynamic: Option<FlowMetrics>,
}

#[derive(serde::Serialize)]
struct Report {
    region: Option<Real>,
    ground_z: Option<Real>,
    scenes: BTreeMap<String, SplitMetrics>,
    aggregate: SplitMetrics,
}

struct SceneEval {
    name: String,
    metrics: SplitMetrics,
    /// Per-point endpoint errors for the requested ECDF, pooled later.
    errors: Vec<Real>,
}

/// Shape mismatches are evaluation errors (exit 4); everything else about
/// the inputs (no points selected, non-finite values) is an input error.
fn metric_err(e: MetricsError) -> CliError {
    match e {
        MetricsError::ShapeMismatch { .. } => CliError::evaluation(e),
        _ => CliError::input(e),
    }
}

fn optional_metrics(r: Result<FlowMetrics, MetricsError>) -> CliResult<Option<FlowMetrics>> {
    match r {
        Ok(m) => Ok(Some(m)),
        Err(MetricsError::EmptyInput) => Ok(None),
        Err(e) => Err(metric_err(e)),
    }
}

/// Pairs up prediction and ground-truth directories: either one scene
/// (the gt directory has a meta.txt) or matching subdirectories.
fn scene_pairs(pred: &Path, gt: &Path) -> CliResult<Vec<(String, PathBuf, PathBuf)>> {
    if gt.join("meta.txt").is_file() {
        let name = gt.file_name().map(|n| n.to_string_lossy().into_owned());
        return Ok(vec![(name.unwrap_or_else(|| "scene".into()), pred.to_path_buf(), gt.to_path_buf())]);
    }
    let mut pairs = Vec::new();
    let entries = fs::read_dir(gt)
        .with_context(|| format!("reading {}", gt.display()))
        .map_err(CliError::input)?;
    for entry in entries {
        let entry = entry.map_err(CliError::input)?;
        let path = entry.path();
        if path.join("meta.txt").is_file() {
            let name = entry.file_name().to_string_lossy().into_owned();
            pairs.push((name.clone(), pred.join(&name), path));
        }
    }
    pairs.sort_by(|a, b| a.0.cmp(&b.0));
    if pairs.is_empty() {
        return Err(CliError::input(anyhow::anyhow!(
            "{} is neither a bundle nor a directory of bundles",
            gt.display()
        )));
    }
    Ok(pairs)
}

fn eval_scene(name: String, pred_dir: &Path, gt_dir: &Path, args: &Args) -> CliResult<SceneEval> {
    let bundle = load_scene(gt_dir)
        .map_err(|e| CliError::input(anyhow::anyhow!("loading {}: {e}", gt_dir.display())))?;
    let gt_flow = bundle.flow.ok_or_else(|| {
        CliError::input(anyhow::anyhow!("{} has no flow_gt.bin", gt_dir.display()))
    })?;
    let flow_path = pred_dir.join("flow.bin");
    let file = fs::File::open(&flow_path)
        .with_context(|| format!("opening {}", flow_path.display()))
        .map_err(CliError::input)?;
    let flows = read_flow(BufReader::new(file)).map_err(CliError::input)?;
    // Counts that disagree with the ground truth are the evaluation
    // mismatch case, not a malformed input.
    let pred = FlowField::matching(&bundle.sequence, flows).map_err(CliError::evaluation)?;

    let region = args.region.unwrap_or(Real::INFINITY);
    let ground_z = args.ground_z.unwrap_or(Real::NEG_INFINITY);
    let base: Vec<Vec<bool>> = bundle
        .sequence
        .source_frames()
        .map(|f| eval_region_mask(&f.points, region, ground_z))
        .collect();
    let select = |want: Option<bool>| -> Vec<Vec<bool>> {
        bundle
            .sequence
            .source_frames()
            .zip(&base)
            .map(|(f, b)| {
                f.dynamic
                    .iter()
                    .zip(b)
                    .map(|(&d, &m)| m && want.map_or(true, |w| d == w))
                    .collect()
            })
            .collect()
    };

    let all = flow_metrics(&pred, &gt_flow, Some(&select(None))).map_err(|e| match e {
        MetricsError::EmptyInput => CliError::input(anyhow::anyhow!(
            "no points selected for evaluation in {}",
            gt_dir.display()
        )),
        e => metric_err(e),
    })?;
    let stat = optional_metrics(flow_metrics(&pred, &gt_flow, Some(&select(Some(false)))))?;
    let dynamic = optional_metrics(flow_metrics(&pred, &gt_flow, Some(&select(Some(true)))))?;

    let mut errors = Vec::new();
    if let Some(metric) = args.ecdf {
        let masks = select(metric.wants_dynamic());
        for (slot, (p_flow, g_flow)) in pred.frames().iter().zip(gt_flow.frames()).enumerate() {
            for (i, (&p, &g)) in p_flow.iter().zip(g_flow).enumerate() {
                if masks[slot][i] {
                    errors.push((p - g).norm());
                }
            }
        }
    }

    Ok(SceneEval { name, metrics: SplitMetrics { all, stat, dynamic }, errors })
}

/// Equal weight per scene, matching the per-frame averaging inside one.
fn mean_metrics(items: &[&FlowMetrics]) -> FlowMetrics {
    let inv = 1.0 / items.len() as Real;
    let sum = |f: &dyn Fn(&FlowMetrics) -> Real| items.iter().map(|m| f(m)).sum::<Real>() * inv;
    FlowMetrics {
        epe: sum(&|m| m.epe),
        acc_strict: sum(&|m| m.acc_strict),
        acc_relaxed: sum(&|m| m.acc_relaxed),
        outliers: sum(&|m| m.outliers),
        routliers: sum(&|m| m.routliers),
        frames: items.iter().map(|m| m.frames).sum(),
        points: items.iter().map(|m| m.points).sum(),
    }
}

fn aggregate(scenes: &[SceneEval]) -> SplitMetrics {
    let pick = |get: &dyn Fn(&SplitMetrics) -> Option<&FlowMetrics>| -> Option<FlowMetrics> {
        let present: Vec<&FlowMetrics> =
            scenes.iter().filter_map(|s| get(&s.metrics)).collect();
        (!present.is_empty()).then(|| mean_metrics(&present))
    };
    SplitMetrics {
        all: pick(&|m| Some(&m.all)).expect("at least one scene"),
        stat: pick(&|m| m.stat.as_ref()),
        dynamic: pick(&|m| m.dynamic.as_ref()),
    }
}

fn print_block(title: &str, metrics: &SplitMetrics) {
    println!("{title}");
    println!(
        "{:<9} {:>9} {:>11} {:>12} {:>9} {:>10} {:>7} {:>8}",
        "split", "epe", "acc_strict", "acc_relaxed", "outliers", "routliers", "frames", "points"
    );
    let row = |name: &str, m: &FlowMetrics| {
        println!(
            "{:<9} {:>9.4} {:>11.4} {:>12.4} {:>9.4} {:>10.4} {:>7} {:>8}",
            name, m.epe, m.acc_strict, m.acc_relaxed, m.outliers, m.routliers, m.frames, m.points
        );
    };
    row("all", &metrics.all);
    if let Some(m) = &metrics.stat {
        row("static", m);
    }
    if let Some(m) = &metrics.dynamic {
        row("dynamic", m);
    }
}

/// At most 200 rows of `value cumulative_fraction`, both columns
/// non-decreasing, endpoints always included.
fn print_ecdf(metric: EcdfMetric, values: &[Real]) -> CliResult {
    let ecdf = Ecdf::new(values).map_err(CliError::input)?;
    let sorted = ecdf.sorted_values();
    let n = sorted.len();
    println!("# ecdf {}", metric.name());
    let mut last = usize::MAX;
    for k in 0..200usize.min(n) {
        let i = if n <= 200 { k } else { k * (n - 1) / 199 };
        if i == last {
            continue;
        }
        last = i;
        println!("{:.6} {:.6}", sorted[i], (i + 1) as Real / n as Real);
    }
    Ok(())
}

pub fn cmd_eval(args: &Args) -> CliResult {
    let pairs = scene_pairs(&args.pred, &args.gt)?;
    let mut scenes = Vec::with_capacity(pairs.len());
    for (name, pred_dir, gt_dir) in &pairs {
        scenes.push(eval_scene(name.clone(), pred_dir, gt_dir, args)?);
    }

    if args.per_scene && scenes.len() > 1 {
        for scene in &scenes {
            print_block(&format!("scene {}", scene.name), &scene.metrics);
            println!();
        }
    }
    let agg = aggregate(&scenes);
    print_block(if scenes.len() > 1 { "aggregate" } else { &scenes[0].name }, &agg);

    if let Some(metric) = args.ecdf {
        let values: Vec<Real> = scenes.iter().flat_map(|s| s.errors.iter().copied()).collect();
        if values.is_empty() {
            return Err(CliError::input(anyhow::anyhow!(
                "no points match --ecdf {}",
                metric.name()
            )));
        }
        print_ecdf(metric, &values)?;
    }

    let report = Report {
        region: args.region,
        ground_z: args.ground_z,
        scenes: scenes.into_iter().map(|s| (s.name, s.metrics)).collect(),
        aggregate: agg,
    };
    let json_path = args.json.clone().unwrap_or_else(|| args.pred.join("eval.json"));
    write_json_atomic(&json_path, &report).map_err(CliError::input)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_metrics_averages_rates_and_sums_counts() {
        let a = FlowMetrics {
            epe: 0.1,
            acc_strict: 1.0,
            acc_relaxed: 1.0,
            outliers: 0.0,
            routliers: 0.0,
            frames: 2,
            points: 10,
        };
        let b = FlowMetrics { epe: 0.3, acc_strict: 0.5, frames: 4, points: 30, ..a };
        let m = mean_metrics(&[&a, &b]);
        assert!((m.epe - 0.2).abs() < 1e-15);
        assert!((m.acc_strict - 0.75).abs() < 1e-15);
        assert_eq!((m.frames, m.points), (6, 40));
    }
}
