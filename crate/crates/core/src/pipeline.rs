//! Staged accumulation: pillar features, per-frame ego motion, moving-point
//! segmentation, instance association, per-instance motion, and finally one
//! composed flow vector per source point.
//!
//! Every stage consumes the previous stage's output through the same types
//! a learned provider would produce, so oracles can replace individual
//! stages: `oracle_features` stands in for a trained feature encoder,
//! `oracle_segmentation` for the segmentation head, `oracle_offsets` for
//! the offset head. Ego and object motion are always estimated; a failed
//! estimate degrades to the next rung of its fallback ladder instead of
//! aborting the run.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::assoc::{
    cluster_spatiotemporal, compute_gt_offsets, AssocError, ClusterConfig, InstanceLabeling,
};
use crate::config::{Config, ConfigError, Section};
use crate::frame::{compose_scene_flow, FlowError, FlowField, Frame, FrameSequence};
use crate::grid::{
    pillarize, GeometricFeaturizer, GridError, GridExtent, OraclePositionFeaturizer, PillarGrid,
    PillarSize,
};
use crate::matcher::{estimate_ego_motion, EgoDiagnostics, EgoEstimateConfig};
use crate::objmotion::{
    estimate_object_motions, icp_point_to_point, IcpConfig, ObjMotionError, ObjectMotionConfig,
    ObjectMotionDiagnostics,
};
use crate::segmenter::{
    score_dynamic_by_residual, ResidualSegmenterConfig, SegmentError, SegmentationScores,
};
use crate::{ObjectMotionSet, Real, RigidTransform, Vec3};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage} oracle needs {what}, which was not provided")]
    MissingGroundTruth { stage: &'static str, what: &'static str },
    #[error("oracle flow shape: {what}: got {got}, expected {expected}")]
    OracleShape { what: &'static str, got: usize, expected: usize },
    #[error("featurization: {0}")]
    Grid(#[from] GridError),
    #[error("segmentation: {0}")]
    Segment(#[from] SegmentError),
    #[error("association: {0}")]
    Assoc(#[from] AssocError),
    #[error("object motion: {0}")]
    ObjMotion(#[from] ObjMotionError),
    #[error("flow composition: {0}")]
    Flow(#[from] FlowError),
}

/// Everything the full run needs in one place. Defaults follow the
/// Waymo-scale profile; [`PipelineConfig::nuscenes`] switches the
/// speed bound and ICP gates to the sparser-sweep values.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PipelineConfig {
    pub extent: GridExtent,
    pub pillar: PillarSize,
    /// Background pillars sampled per side for ego matching.
    pub n_ego: usize,
    /// Foreground score at or above this marks a point (or pillar) as
    /// foreground for matching, refinement and clustering.
    pub fg_threshold: Real,
    pub sinkhorn_iterations: usize,
    pub slack_cost: Real,
    /// Speed bound, m/s, for the correspondence support gate.
    pub v_max: Real,
    /// Refinement on background points after grid matching.
    pub ego_icp: IcpConfig,
    pub refine_with_icp: bool,
    pub segmenter: ResidualSegmenterConfig,
    pub cluster: ClusterConfig,
    pub object: ObjectMotionConfig,
    /// Estimate frame-to-previous motions and chain them to the target
    /// instead of matching each frame to the target directly.
    pub chained: bool,
    pub oracle_features: bool,
    pub oracle_segmentation: bool,
    pub oracle_offsets: bool,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            extent: GridExtent::centered(32.0),
            pillar: PillarSize::default(),
            n_ego: 1024,
            fg_threshold: 0.5,
            sinkhorn_iterations: 5,
            slack_cost: 1.0,
            v_max: 30.0,
            ego_icp: IcpConfig { max_correspondence_dist: 0.1, ..IcpConfig::default() },
            refine_with_icp: true,
            segmenter: ResidualSegmenterConfig::default(),
            cluster: ClusterConfig::default(),
            object: ObjectMotionConfig::default(),
            chained: false,
            oracle_features: false,
            oracle_segmentation: false,
            oracle_offsets: false,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn waymo() -> Self {
        Self::default()
    }

    /// Slower traffic, sparser sweeps: lower speed bound, wider ICP gates.
    pub fn nuscenes() -> Self {
        let mut cfg = Self::default();
        cfg.v_max = 10.0;
        cfg.ego_icp.max_correspondence_dist = 0.2;
        cfg.object.icp.max_correspondence_dist = 0.25;
        cfg
    }

    /// Reads run settings from a parsed config.
    ///
    /// The `profile` key picks the baseline (`waymo`, the default, or
    /// `nuscenes`); every other key overrides one field on top of it.
    /// Root keys: profile, seed, extent (grid half width), n_ego,
    /// fg_threshold, sinkhorn_iterations, slack_cost, v_max, chained,
    /// refine_with_icp, oracle_features, oracle_segmentation,
    /// oracle_offsets. Sections: [pillar] x/y/z; [ego_icp] and
    /// [object_icp] max_iterations, max_correspondence_dist,
    /// convergence_rel_change, plus min_points on [object_icp];
    /// [segmenter] speed_threshold/temperature/neighbor_radius;
    /// [cluster] eps/min_pts/voxel.
    pub fn from_config(config: &Config) -> Result<Self, ConfigError> {
        config.check_sections(&["pillar", "ego_icp", "object_icp", "segmenter", "cluster"])?;
        let root = config.root();
        root.check_keys(&[
            "profile",
            "seed",
            "extent",
            "n_ego",
            "fg_threshold",
            "sinkhorn_iterations",
            "slack_cost",
            "v_max",
            "chained",
            "refine_with_icp",
            "oracle_features",
            "oracle_segmentation",
            "oracle_offsets",
        ])?;
        let mut cfg = match root.get("profile") {
            None | Some("waymo") => Self::waymo(),
            Some("nuscenes") => Self::nuscenes(),
            Some(other) => {
                return Err(ConfigError::InvalidValue {
                    key: "profile".to_string(),
                    expected: "waymo or nuscenes",
                    got: other.to_string(),
                })
            }
        };
        if let Some(v) = root.get_u64("seed")? {
            cfg.seed = v;
        }
        if let Some(v) = root.get_f64("extent")? {
            cfg.extent = GridExtent::centered(v);
        }
        if let Some(v) = root.get_usize("n_ego")? {
            cfg.n_ego = v;
        }
        if let Some(v) = root.get_f64("fg_threshold")? {
            cfg.fg_threshold = v;
        }
        if let Some(v) = root.get_usize("sinkhorn_iterations")? {
            cfg.sinkhorn_iterations = v;
        }
        if let Some(v) = root.get_f64("slack_cost")? {
            cfg.slack_cost = v;
        }
        if let Some(v) = root.get_f64("v_max")? {
            cfg.v_max = v;
        }
        if let Some(v) = root.get_bool("chained")? {
            cfg.chained = v;
        }
        if let Some(v) = root.get_bool("refine_with_icp")? {
            cfg.refine_with_icp = v;
        }
        if let Some(v) = root.get_bool("oracle_features")? {
            cfg.oracle_features = v;
        }
        if let Some(v) = root.get_bool("oracle_segmentation")? {
            cfg.oracle_segmentation = v;
        }
        if let Some(v) = root.get_bool("oracle_offsets")? {
            cfg.oracle_offsets = v;
        }
        for section in config.sections("pillar") {
            section.check_keys(&["x", "y", "z"])?;
            if let Some(v) = section.get_f64("x")? {
                cfg.pillar.x = v;
            }
            if let Some(v) = section.get_f64("y")? {
                cfg.pillar.y = v;
            }
            if let Some(v) = section.get_f64("z")? {
                cfg.pillar.z = v;
            }
        }
        for section in config.sections("ego_icp") {
            section.check_keys(ICP_KEYS)?;
            apply_icp_keys(section, &mut cfg.ego_icp)?;
        }
        for section in config.sections("object_icp") {
            section.check_keys(&[ICP_KEYS, &["min_points"]].concat())?;
            apply_icp_keys(section, &mut cfg.object.icp)?;
            if let Some(v) = section.get_usize("min_points")? {
                cfg.object.min_points = v;
            }
        }
        for section in config.sections("segmenter") {
            section.check_keys(&["speed_threshold", "temperature", "neighbor_radius"])?;
            if let Some(v) = section.get_f64("speed_threshold")? {
                cfg.segmenter.speed_threshold = v;
            }
            if let Some(v) = section.get_f64("temperature")? {
                cfg.segmenter.temperature = v;
            }
            if let Some(v) = section.get_f64("neighbor_radius")? {
                cfg.segmenter.neighbor_radius = v;
            }
        }
        for section in config.sections("cluster") {
            section.check_keys(&["eps", "min_pts", "voxel"])?;
            if let Some(v) = section.get_f64("eps")? {
                cfg.cluster.eps = v;
            }
            if let Some(v) = section.get_usize("min_pts")? {
                cfg.cluster.min_pts = v;
            }
            if let Some(v) = section.get_f64("voxel")? {
                cfg.cluster.voxel = v;
            }
        }
        Ok(cfg)
    }
}

const ICP_KEYS: &[&str] = &["max_iterations", "max_correspondence_dist", "convergence_rel_change"];

fn apply_icp_keys(section: &Section, icp: &mut IcpConfig) -> Result<(), ConfigError> {
    if let Some(v) = section.get_usize("max_iterations")? {
        icp.max_iterations = v;
    }
    if let Some(v) = section.get_f64("max_correspondence_dist")? {
        icp.max_correspondence_dist = v;
    }
    if let Some(v) = section.get_f64("convergence_rel_change")? {
        icp.convergence_rel_change = v;
    }
    Ok(())
}

/// Ground truth consumed by the stage oracles. Segmentation labels ride on
/// the frames themselves, so only flow and object motions appear here.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleInputs<'a> {
    /// True per-point flow; backs the position-feature oracle.
    pub flow: Option<&'a FlowField>,
    /// True per-instance motions; back the offset oracle together with the
    /// frames' instance labels.
    pub objects: Option<&'a ObjectMotionSet>,
}

#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct StageTimings {
    pub features_s: f64,
    pub ego_s: f64,
    pub segmentation_s: f64,
    pub association_s: f64,
    pub object_motion_s: f64,
    pub composition_s: f64,
}

/// Per-source-frame record of how the ego estimate was obtained.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FrameDiagnostics {
    pub frame: usize,
    /// Matcher report; absent when grid matching failed outright.
    pub matcher: Option<EgoDiagnostics>,
    /// Why the estimate fell back to the identity, when it did.
    pub fallback_reason: Option<String>,
    pub icp_refined: bool,
    pub icp_residual: Option<Real>,
}

#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct PipelineDiagnostics {
    pub timings: StageTimings,
    pub frames: Vec<FrameDiagnostics>,
    pub objects: Vec<ObjectMotionDiagnostics>,
    pub cluster_count: usize,
}

#[derive(Debug)]
pub struct AccumulationResult {
    pub flow: FlowField,
    /// Sensor-to-target transform per frame; entry 0 is the identity.
    pub ego: Vec<RigidTransform>,
    pub objects: ObjectMotionSet,
    pub scores: SegmentationScores,
    pub labels: InstanceLabeling,
    pub diagnostics: PipelineDiagnostics,
}

/// Pillar grids built in earlier runs, keyed by timestamp. Growing a
/// sequence frame by frame reuses every grid already built; a cached entry
/// is trusted when its fingerprint (feature mode, point count, boundary
/// points) still matches, so the caller must not mutate earlier frames.
#[derive(Debug, Default)]
pub struct GridCache {
    entries: BTreeMap<usize, (u64, PillarGrid)>,
    builds: usize,
}

impl GridCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> usize {
        self.entries.len()
    }

    /// Total grids built through this cache, across all runs.
    pub fn builds(&self) -> usize {
        self.builds
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream seed for one (pass, frame) matcher call, decorrelated from both
/// neighbors so reordering work across threads cannot change results.
fn pair_seed(seed: u64, pass: u64, t: usize) -> u64 {
    splitmix(seed ^ splitmix(pass) ^ splitmix(t as u64).rotate_left(17))
}

fn point_hash(p: Vec3) -> u64 {
    splitmix(p.x.to_bits() ^ p.y.to_bits().rotate_left(21) ^ p.z.to_bits().rotate_left(42))
}

fn grid_fingerprint(frame: &Frame, targets: Option<&[Vec3]>, mode: u8) -> u64 {
    let mut h = splitmix(u64::from(mode) ^ (frame.len() as u64).rotate_left(7));
    if let (Some(&first), Some(&last)) = (frame.points.first(), frame.points.last()) {
        h ^= point_hash(first) ^ point_hash(last).rotate_left(13);
    }
    if let Some(t) = targets {
        if let (Some(&first), Some(&last)) = (t.first(), t.last()) {
            h ^= point_hash(first).rotate_left(29) ^ point_hash(last).rotate_left(47);
        }
    }
    h
}

/// One full accumulation pass with a throwaway grid cache.
pub fn run(
    seq: &FrameSequence,
    cfg: &PipelineConfig,
    oracle: OracleInputs,
) -> Result<AccumulationResult, PipelineError> {
    run_cached(seq, cfg, oracle, &mut GridCache::new())
}

/// As [`run`], but reusing grids cached by earlier (prefix) runs.
pub fn run_cached(
    seq: &FrameSequence,
    cfg: &PipelineConfig,
    oracle: OracleInputs,
    cache: &mut GridCache,
) -> Result<AccumulationResult, PipelineError> {
    let t_len = seq.len();
    let mut timings = StageTimings::default();

    let clock = Instant::now();
    let oracle_targets = if cfg.oracle_features {
        let flow = oracle
            .flow
            .ok_or(PipelineError::MissingGroundTruth { stage: "feature", what: "flow" })?;
        Some(oracle_target_positions(seq, flow)?)
    } else {
        None
    };
    ensure_grids(seq, cfg, oracle_targets.as_deref(), cache)?;
    let grids: Vec<&PillarGrid> =
        (1..=t_len).map(|t| &cache.entries.get(&t).expect("ensured above").1).collect();
    timings.features_s = clock.elapsed().as_secs_f64();

    // Per-point foreground scores feed three consumers: pillar exclusion
    // for matching, background selection for ICP, and the cluster mask.
    let all_ones: Vec<Vec<Real>> = seq.frames().iter().map(|f| vec![1.0; f.len()]).collect();
    let (ego, frame_diags, scores) = if cfg.oracle_segmentation {
        let point_fg: Vec<Vec<Real>> = seq
            .frames()
            .iter()
            .map(|f| f.foreground.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
            .collect();
        let clock = Instant::now();
        let (ego, diags) = ego_stage(seq, &grids, &point_fg, true, 0, cfg);
        timings.ego_s += clock.elapsed().as_secs_f64();
        let scores = SegmentationScores {
            frames: seq
                .frames()
                .iter()
                .map(|f| f.dynamic.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
                .collect(),
        };
        (ego, diags, scores)
    } else {
        // Bootstrap: match treating everything as background, score
        // residual motion against that ego, then re-match and refine with
        // the scored foreground excluded.
        let all_zeros: Vec<Vec<Real>> =
            seq.frames().iter().map(|f| vec![0.0; f.len()]).collect();
        let clock = Instant::now();
        let (ego_boot, _) = ego_stage(seq, &grids, &all_zeros, false, 1, cfg);
        timings.ego_s += clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let boot_scores = score_dynamic_by_residual(seq, &ego_boot, &all_ones, &cfg.segmenter)?;
        timings.segmentation_s += clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let (ego, diags) = ego_stage(seq, &grids, &boot_scores.frames, true, 2, cfg);
        timings.ego_s += clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let scores = score_dynamic_by_residual(seq, &ego, &all_ones, &cfg.segmenter)?;
        timings.segmentation_s += clock.elapsed().as_secs_f64();
        (ego, diags, scores)
    };

    let clock = Instant::now();
    let cluster_mask: Vec<Vec<bool>> = if cfg.oracle_segmentation {
        seq.frames().iter().map(|f| f.foreground.clone()).collect()
    } else {
        scores.frames.iter().map(|f| f.iter().map(|&s| s >= cfg.fg_threshold).collect()).collect()
    };
    let offsets: Vec<Vec<Vec3>> = if cfg.oracle_offsets {
        let objects = oracle
            .objects
            .ok_or(PipelineError::MissingGroundTruth { stage: "offset", what: "object motions" })?;
        let ids: Vec<Vec<u32>> = seq.frames().iter().map(|f| f.instance_ids.clone()).collect();
        compute_gt_offsets(seq, &ego, &ids, objects)?
    } else {
        seq.frames().iter().map(|f| vec![Vec3::zeros(); f.len()]).collect()
    };
    let labels = cluster_spatiotemporal(seq, &ego, &cluster_mask, &offsets, &cfg.cluster)?;
    timings.association_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let (objects, object_diags) = estimate_object_motions(seq, &ego, &labels.frames, &cfg.object)?;
    timings.object_motion_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let flow = compose_scene_flow(seq, &ego, &objects, &labels.frames)?;
    timings.composition_s = clock.elapsed().as_secs_f64();

    let cluster_count = labels.cluster_count;
    Ok(AccumulationResult {
        flow,
        ego,
        objects,
        scores,
        labels,
        diagnostics: PipelineDiagnostics {
            timings,
            frames: frame_diags,
            objects: object_diags,
            cluster_count,
        },
    })
}

/// True target-frame position of every point; the stand-in for a trained
/// feature encoder. The target frame maps to itself.
fn oracle_target_positions(
    seq: &FrameSequence,
    flow: &FlowField,
) -> Result<Vec<Vec<Vec3>>, PipelineError> {
    if flow.source_count() != seq.len() - 1 {
        return Err(PipelineError::OracleShape {
            what: "source frame count",
            got: flow.source_count(),
            expected: seq.len() - 1,
        });
    }
    let mut out = Vec::with_capacity(seq.len());
    for frame in seq.frames() {
        let t = frame.timestamp_index;
        if t == 1 {
            out.push(frame.points.clone());
            continue;
        }
        let f = flow.flow_for(t);
        if f.len() != frame.len() {
            return Err(PipelineError::OracleShape {
                what: "per-point flow length",
                got: f.len(),
                expected: frame.len(),
            });
        }
        out.push(frame.points.iter().zip(f).map(|(&x, &v)| x + v).collect());
    }
    Ok(out)
}

fn ensure_grids(
    seq: &FrameSequence,
    cfg: &PipelineConfig,
    targets: Option<&[Vec<Vec3>]>,
    cache: &mut GridCache,
) -> Result<(), PipelineError> {
    let with_intensity = seq.frames().iter().all(|f| f.intensity.is_some());
    let mode = match targets {
        Some(_) => 2,
        None if with_intensity => 1,
        None => 0,
    };

    let missing: Vec<usize> = seq
        .frames()
        .iter()
        .filter_map(|frame| {
            let t = frame.timestamp_index;
            let tag = grid_fingerprint(frame, targets.map(|ts| ts[t - 1].as_slice()), mode);
            match cache.entries.get(&t) {
                Some((cached, _)) if *cached == tag => None,
                _ => Some(t),
            }
        })
        .collect();

    let built: Vec<(usize, u64, PillarGrid)> = missing
        .into_par_iter()
        .map(|t| -> Result<(usize, u64, PillarGrid), GridError> {
            let frame = seq.frame(t);
            let per_frame = targets.map(|ts| ts[t - 1].as_slice());
            let grid = match per_frame {
                Some(ts) => {
                    let feat = OraclePositionFeaturizer::new(ts.to_vec());
                    pillarize(frame, cfg.extent, cfg.pillar, &feat)?
                }
                None => {
                    let feat = GeometricFeaturizer { with_intensity };
                    pillarize(frame, cfg.extent, cfg.pillar, &feat)?
                }
            };
            Ok((t, grid_fingerprint(frame, per_frame, mode), grid))
        })
        .collect::<Result<_, _>>()?;

    for (t, tag, grid) in built {
        cache.entries.insert(t, (tag, grid));
        cache.builds += 1;
    }
    Ok(())
}

/// Max-pools per-point foreground scores into per-pillar scores.
fn pillar_scores(grid: &PillarGrid, frame: &Frame, point_fg: &[Real]) -> Vec<Real> {
    let (nx, ny) = grid.shape();
    let mut cells = vec![0.0; nx * ny];
    for (&p, &s) in frame.points.iter().zip(point_fg) {
        if let Some(c) = grid.cell_of_point(p) {
            if s > cells[c] {
                cells[c] = s;
            }
        }
    }
    cells
}

/// Estimates all source-frame ego transforms against the target.
///
/// Each pair (frame t, its destination) is matched on background pillars
/// and optionally refined with ICP on background points; in chained mode
/// the destination is frame t-1 and the pairwise motions compose into
/// target-frame transforms afterwards. A failed match degrades to the
/// identity and is reported, never raised.
fn ego_stage(
    seq: &FrameSequence,
    grids: &[&PillarGrid],
    point_fg: &[Vec<Real>],
    with_icp: bool,
    pass: u64,
    cfg: &PipelineConfig,
) -> (Vec<RigidTransform>, Vec<FrameDiagnostics>) {
    let t_len = seq.len();
    let cell_fg: Vec<Vec<Real>> = grids
        .par_iter()
        .zip(seq.frames().par_iter())
        .zip(point_fg.par_iter())
        .map(|((grid, frame), fg)| pillar_scores(grid, frame, fg))
        .collect();
    let background: Vec<Vec<Vec3>> = seq
        .frames()
        .par_iter()
        .zip(point_fg.par_iter())
        .map(|(frame, fg)| {
            frame
                .points
                .iter()
                .zip(fg)
                .filter(|&(_, &s)| s < cfg.fg_threshold)
                .map(|(&p, _)| p)
                .collect()
        })
        .collect();

    let pairwise: Vec<(RigidTransform, FrameDiagnostics)> = (2..=t_len)
        .into_par_iter()
        .map(|t| {
            let dst = if cfg.chained { t - 1 } else { 1 };
            let ecfg = EgoEstimateConfig {
                n_ego: cfg.n_ego,
                fg_threshold: cfg.fg_threshold,
                sinkhorn_iterations: cfg.sinkhorn_iterations,
                slack_cost: cfg.slack_cost,
                v_max: cfg.v_max,
                elapsed: (t - dst) as Real * seq.interval(),
                seed: pair_seed(cfg.seed, pass, t),
                ..EgoEstimateConfig::default()
            };
            let (mut motion, matcher, fallback_reason) = match estimate_ego_motion(
                grids[t - 1],
                &cell_fg[t - 1],
                grids[dst - 1],
                &cell_fg[dst - 1],
                &ecfg,
            ) {
                Ok((m, d)) => (m, Some(d), None),
                Err(e) => (RigidTransform::identity(), None, Some(e.to_string())),
            };
            let mut icp_refined = false;
            let mut icp_residual = None;
            if with_icp && cfg.refine_with_icp {
                let (src, dstp) = (&background[t - 1], &background[dst - 1]);
                if src.len() >= 3 && dstp.len() >= 3 {
                    if let Ok(r) = icp_point_to_point(src, dstp, &motion, &cfg.ego_icp) {
                        motion = r.transform;
                        icp_refined = true;
                        icp_residual = Some(r.residual);
                    }
                }
            }
            let diag =
                FrameDiagnostics { frame: t, matcher, fallback_reason, icp_refined, icp_residual };
            (motion, diag)
        })
        .collect();

    let mut ego = vec![RigidTransform::identity(); t_len];
    let mut diags = Vec::with_capacity(t_len - 1);
    for (i, (motion, diag)) in pairwise.into_iter().enumerate() {
        let t = i + 2;
        ego[t - 1] = if cfg.chained { ego[t - 2].compose(&motion) } else { motion };
        diags.push(diag);
    }
    (ego, diags)
}

/// The merged frame plus which sweep each point came from.
#[derive(Debug)]
pub struct AccumulatedCloud {
    pub frame: Frame,
    /// Timestamp index of the sweep that produced each merged point.
    pub source_frame: Vec<usize>,
}

/// Moves every source point by its flow and concatenates all frames,
/// target first then sources in order. Instance ids come from the
/// estimated labeling; original foreground flags are kept, widened so a
/// labeled point is never background.
pub fn accumulate_points(seq: &FrameSequence, result: &AccumulationResult) -> AccumulatedCloud {
    let total: usize = seq.frames().iter().map(Frame::len).sum();
    let with_intensity = seq.frames().iter().all(|f| f.intensity.is_some());

    let mut points = Vec::with_capacity(total);
    let mut intensity = with_intensity.then(|| Vec::with_capacity(total));
    let mut foreground = Vec::with_capacity(total);
    let mut dynamic = Vec::with_capacity(total);
    let mut instance_ids = Vec::with_capacity(total);
    let mut source_frame = Vec::with_capacity(total);

    for frame in seq.frames() {
        let t = frame.timestamp_index;
        let labels = &result.labels.frames[t - 1];
        for (i, &p) in frame.points.iter().enumerate() {
            let moved = if t == 1 { p } else { p + result.flow.flow_for(t)[i] };
            points.push(moved);
            if let Some(out) = intensity.as_mut() {
                out.push(frame.intensity.as_ref().expect("checked all frames")[i]);
            }
            foreground.push(frame.foreground[i] || labels[i] != 0);
            dynamic.push(frame.dynamic[i]);
            instance_ids.push(labels[i]);
            source_frame.push(t);
        }
    }

    let frame = Frame {
        timestamp_index: 1,
        points,
        intensity,
        foreground,
        dynamic,
        instance_ids,
    };
    AccumulatedCloud { frame, source_frame }
}
