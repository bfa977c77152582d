//! Per-object rigid motion estimation.
//!
//! Once instances are associated across frames, each object's source-frame
//! points are aligned to its target-frame points in two rounds: a centroid
//! shift, then gated point-to-point ICP seeded with it. Failures fall back
//! a rung at a time (ICP, centroid only, ego only) instead of aborting the
//! sequence, and the diagnostics say which rung produced each motion.

use crate::frame::{FrameSequence, ObjectMotionSet};
use crate::geom::{kabsch_weighted, GeomError, RigidTransform};
use crate::spatial::PointIndex;
use crate::{Real, Vec3};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ObjMotionError {
    #[error("{side} point set is empty")]
    EmptyPointSet { side: &'static str },
    #[error("only {got} gated correspondences, need at least 3")]
    InsufficientCorrespondences { got: usize },
    #[error("{what} has length {got}, expected {expected}")]
    LengthMismatch { what: &'static str, got: usize, expected: usize },
    #[error(transparent)]
    Geometry(#[from] GeomError),
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Gating radius for nearest-neighbor correspondences, in meters.
    pub max_correspondence_dist: Real,
    /// Stop once the relative residual change drops below this.
    pub convergence_rel_change: Real,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 30,
            max_correspondence_dist: 0.15,
            convergence_rel_change: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IcpResult {
    pub transform: RigidTransform<Real>,
    /// RMS distance over gated matches under the returned transform.
    pub residual: Real,
    pub iterations: usize,
    pub matched: usize,
}

/// Translation aligning the source centroid with the target centroid.
pub fn centroid_init(source: &[Vec3], target: &[Vec3]) -> Result<RigidTransform<Real>, ObjMotionError> {
    if source.is_empty() {
        return Err(ObjMotionError::EmptyPointSet { side: "source" });
    }
    if target.is_empty() {
        return Err(ObjMotionError::EmptyPointSet { side: "target" });
    }
    let mean = |pts: &[Vec3]| {
        pts.iter().fold(Vec3::zeros(), |a, &p| a + p) / pts.len() as Real
    };
    Ok(RigidTransform::from_translation(mean(target) - mean(source)))
}

/// Gated point-to-point ICP, returning the best transform seen.
///
/// Each sweep matches moved source points to their nearest target within
/// the gate, fits the incremental rigid motion by weighted least squares,
/// and composes it on. The lowest-residual transform across sweeps wins,
/// so a diverging step cannot make the answer worse than the seed. Fails
/// only when even the seed gates fewer than 3 correspondences.
pub fn icp_point_to_point(
    source: &[Vec3],
    target: &[Vec3],
    init: &RigidTransform<Real>,
    cfg: &IcpConfig,
) -> Result<IcpResult, ObjMotionError> {
    if source.is_empty() {
        return Err(ObjMotionError::EmptyPointSet { side: "source" });
    }
    if target.is_empty() {
        return Err(ObjMotionError::EmptyPointSet { side: "target" });
    }
    let gate = cfg.max_correspondence_dist;
    let index = PointIndex::build(target, gate);

    let matches = |t: &RigidTransform<Real>| -> (Vec<(Vec3, Vec3)>, Real) {
        let mut pairs = Vec::new();
        let mut sq_sum = 0.0;
        for &p in source {
            let moved = t.apply(p);
            if let Some((j, dist)) = index.nearest_within(moved, gate) {
                pairs.push((moved, target[j]));
                sq_sum += dist * dist;
            }
        }
        let residual = if pairs.is_empty() {
            Real::INFINITY
        } else {
            (sq_sum / pairs.len() as Real).sqrt()
        };
        (pairs, residual)
    };

    let (pairs, residual) = matches(init);
    if pairs.len() < 3 {
        return Err(ObjMotionError::InsufficientCorrespondences { got: pairs.len() });
    }
    let mut current = *init;
    let mut best =
        IcpResult { transform: current, residual, iterations: 0, matched: pairs.len() };
    let mut prev_residual = residual;
    let mut pairs = pairs;
    for iter in 1..=cfg.max_iterations {
        let moved: Vec<Vec3> = pairs.iter().map(|&(m, _)| m).collect();
        let targets: Vec<Vec3> = pairs.iter().map(|&(_, q)| q).collect();
        let weights = vec![1.0; pairs.len()];
        let delta = match kabsch_weighted(&moved, &targets, &weights) {
            Ok(d) => d,
            Err(_) => break, // degenerate match set; keep the best so far
        };
        current = delta.compose(&current);
        let (new_pairs, residual) = matches(&current);
        if new_pairs.len() >= 3 && residual < best.residual {
            best = IcpResult {
                transform: current,
                residual,
                iterations: iter,
                matched: new_pairs.len(),
            };
        }
        if new_pairs.len() < 3 {
            break;
        }
        let change = (prev_residual - residual).abs();
        if prev_residual.is_finite() && change <= cfg.convergence_rel_change * prev_residual.max(1e-12) {
            break;
        }
        prev_residual = residual;
        pairs = new_pairs;
    }
    Ok(best)
}

/// Which rung of the fallback ladder produced a motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum MotionMethod {
    Icp,
    CentroidOnly,
    EgoFallback,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ObjectMotionDiagnostics {
    pub instance: u32,
    pub frame: usize,
    pub method: MotionMethod,
    pub residual: Option<Real>,
    pub source_points: usize,
    pub target_points: usize,
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ObjectMotionConfig {
    pub icp: IcpConfig,
    /// Below this many points on either side, skip ICP and keep the
    /// centroid round.
    pub min_points: usize,
}

impl Default for ObjectMotionConfig {
    fn default() -> Self {
        Self { icp: IcpConfig::default(), min_points: 3 }
    }
}

/// Estimates the motion of every labeled instance in every source frame.
///
/// Points are first moved into target-aligned coordinates by the per-frame
/// ego transforms, so the returned motions compose after ego compensation.
/// Every (instance, source frame) pair with points gets an entry: the ICP
/// result when it works and improves on the centroid seed, the centroid
/// shift when ICP cannot run, and the identity (pure ego explanation) when
/// the instance has no target-frame points at all.
pub fn estimate_object_motions(
    seq: &FrameSequence,
    ego: &[RigidTransform<Real>],
    instance_ids: &[Vec<u32>],
    cfg: &ObjectMotionConfig,
) -> Result<(ObjectMotionSet, Vec<ObjectMotionDiagnostics>), ObjMotionError> {
    let t_len = seq.len();
    if ego.len() != t_len {
        return Err(ObjMotionError::LengthMismatch {
            what: "ego",
            got: ego.len(),
            expected: t_len,
        });
    }
    if instance_ids.len() != t_len {
        return Err(ObjMotionError::LengthMismatch {
            what: "instance_ids",
            got: instance_ids.len(),
            expected: t_len,
        });
    }
    for (slot, frame) in seq.frames().iter().enumerate() {
        if instance_ids[slot].len() != frame.points.len() {
            return Err(ObjMotionError::LengthMismatch {
                what: "instance_ids frame",
                got: instance_ids[slot].len(),
                expected: frame.points.len(),
            });
        }
    }

    // Ego-aligned member points per (instance, frame).
    let mut members: BTreeMap<(u32, usize), Vec<Vec3>> = BTreeMap::new();
    for (slot, frame) in seq.frames().iter().enumerate() {
        let warped = ego[slot].apply_points(&frame.points);
        for (i, &id) in instance_ids[slot].iter().enumerate() {
            if id != 0 {
                members.entry((id, frame.timestamp_index)).or_default().push(warped[i]);
            }
        }
    }

    let mut motions = ObjectMotionSet::new();
    let mut diagnostics = Vec::new();
    for (&(id, frame), source) in members.iter() {
        if frame == 1 {
            continue;
        }
        let anchor = members.get(&(id, 1)).map(Vec::as_slice).unwrap_or(&[]);
        let (transform, method, residual) = align_object(source, anchor, cfg);
        diagnostics.push(ObjectMotionDiagnostics {
            instance: id,
            frame,
            method,
            residual,
            source_points: source.len(),
            target_points: anchor.len(),
        });
        motions.insert(id, frame, transform);
    }
    Ok((motions, diagnostics))
}

fn align_object(
    source: &[Vec3],
    anchor: &[Vec3],
    cfg: &ObjectMotionConfig,
) -> (RigidTransform<Real>, MotionMethod, Option<Real>) {
    if anchor.is_empty() {
        return (RigidTransform::identity(), MotionMethod::EgoFallback, None);
    }
    let seed = match centroid_init(source, anchor) {
        Ok(t) => t,
        Err(_) => return (RigidTransform::identity(), MotionMethod::EgoFallback, None),
    };
    if source.len() < cfg.min_points || anchor.len() < cfg.min_points {
        return (seed, MotionMethod::CentroidOnly, None);
    }
    match icp_point_to_point(source, anchor, &seed, &cfg.icp) {
        Ok(result) => (result.transform, MotionMethod::Icp, Some(result.residual)),
        Err(_) => (seed, MotionMethod::CentroidOnly, None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Frame;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube_grid(center: Vec3, n: usize, spacing: Real) -> Vec<Vec3> {
        let mut pts = Vec::new();
        let half = (n as Real - 1.0) * spacing * 0.5;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    pts.push(
                        center
                            + Vec3::new(
                                i as Real * spacing - half,
                                j as Real * spacing - half,
                                k as Real * spacing - half,
                            ),
                    );
                }
            }
        }
        pts
    }

    #[test]
    fn centroid_init_matches_mean_gap() {
        let source = cube_grid(Vec3::zeros(), 3, 0.3);
        let target = cube_grid(Vec3::new(1.0, -2.0, 0.5), 3, 0.3);
        let t = centroid_init(&source, &target).unwrap();
        assert!((t.translation - Vec3::new(1.0, -2.0, 0.5)).norm() < 1e-12);
        assert!(t.rotation.angle_to(crate::Quat::identity()) < 1e-15);
    }

    #[test]
    fn icp_recovers_small_rigid_motion_exactly() {
        let source = cube_grid(Vec3::new(1.0, 2.0, 0.0), 4, 0.3);
        let truth = RigidTransform::from_yaw_translation(0.02, Vec3::new(0.06, -0.04, 0.02));
        let target = truth.apply_points(&source);
        let out = icp_point_to_point(
            &source,
            &target,
            &RigidTransform::identity(),
            &IcpConfig::default(),
        )
        .unwrap();
        assert!(out.transform.max_gap(&truth) < 1e-9, "gap {}", out.transform.max_gap(&truth));
        assert!(out.residual < 1e-9);
        assert_eq!(out.matched, source.len());
    }

    #[test]
    fn icp_survives_noise_and_gating_rejects_outliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let source = cube_grid(Vec3::zeros(), 5, 0.4);
        let truth = RigidTransform::from_yaw_translation(0.03, Vec3::new(0.05, 0.02, 0.0));
        let mut target: Vec<Vec3> = truth
            .apply_points(&source)
            .into_iter()
            .map(|p| {
                p + Vec3::new(
                    rng.gen_range(-0.01..0.01),
                    rng.gen_range(-0.01..0.01),
                    rng.gen_range(-0.01..0.01),
                )
            })
            .collect();
        // Far clutter never enters the gate.
        target.push(Vec3::new(50.0, 50.0, 0.0));
        let out = icp_point_to_point(
            &source,
            &target,
            &RigidTransform::identity(),
            &IcpConfig::default(),
        )
        .unwrap();
        assert!(out.transform.max_gap(&truth) < 0.02, "gap {}", out.transform.max_gap(&truth));
    }

    #[test]
    fn icp_rejects_disjoint_clouds() {
        let source = cube_grid(Vec3::zeros(), 2, 0.3);
        let target = cube_grid(Vec3::new(100.0, 0.0, 0.0), 2, 0.3);
        let err = icp_point_to_point(
            &source,
            &target,
            &RigidTransform::identity(),
            &IcpConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err, ObjMotionError::InsufficientCorrespondences { got: 0 });
    }

    fn labeled_scene(
        object_step: Vec3,
        yaw_step: Real,
        object_points: Vec<Vec3>,
    ) -> (FrameSequence, Vec<RigidTransform<Real>>, Vec<Vec<u32>>) {
        // Static background ring plus one object drifting backwards in
        // time; ego is identity throughout so aligned equals raw.
        let background: Vec<Vec3> =
            (0..20).map(|i| Vec3::new((i as Real * 0.7).cos() * 15.0, (i as Real * 0.7).sin() * 15.0, 0.0)).collect();
        let centroid = object_points.iter().fold(Vec3::zeros(), |a, &p| a + p)
            / object_points.len() as Real;
        let mut frames = Vec::new();
        let mut ids = Vec::new();
        for t in 1..=3usize {
            let back = (t - 1) as Real;
            // The object sat `back` steps behind its target pose.
            let spin = RigidTransform::from_yaw_translation(-yaw_step * back, Vec3::zeros());
            let pts_obj: Vec<Vec3> = object_points
                .iter()
                .map(|&p| spin.apply(p - centroid) + centroid - object_step * back)
                .collect();
            let mut pts = background.clone();
            let mut frame_ids = vec![0u32; background.len()];
            pts.extend(pts_obj);
            frame_ids.extend(vec![7u32; object_points.len()]);
            frames.push(Frame::new(t, pts));
            ids.push(frame_ids);
        }
        let seq = FrameSequence::new(frames, 0.1).unwrap();
        let ego = vec![RigidTransform::identity(); 3];
        (seq, ego, ids)
    }

    #[test]
    fn object_motions_recover_translation_and_rotation() {
        let object = cube_grid(Vec3::new(4.0, 1.0, 0.5), 3, 0.3);
        let (seq, ego, ids) =
            labeled_scene(Vec3::new(0.08, -0.03, 0.0), 0.02, object.clone());
        let (motions, diags) =
            estimate_object_motions(&seq, &ego, &ids, &ObjectMotionConfig::default()).unwrap();
        assert_eq!(diags.len(), 2);
        assert!(diags.iter().all(|d| d.method == MotionMethod::Icp));
        for t in 2..=3usize {
            let got = motions.get(7, t).unwrap();
            // Independent check: the motion must map each source-frame
            // object point onto its target-frame twin.
            let back = (t - 1) as Real;
            let centroid = object.iter().fold(Vec3::zeros(), |a, &p| a + p) / object.len() as Real;
            let spin = RigidTransform::from_yaw_translation(-0.02 * back, Vec3::zeros());
            for &p in &object {
                let src = spin.apply(p - centroid) + centroid - Vec3::new(0.08, -0.03, 0.0) * back;
                assert!((got.apply(src) - p).norm() < 1e-7, "frame {t}");
            }
        }
    }

    #[test]
    fn tiny_instances_fall_back_to_centroid_alignment() {
        let object = vec![Vec3::new(5.0, 0.0, 0.0), Vec3::new(5.2, 0.0, 0.0)];
        let (seq, ego, ids) = labeled_scene(Vec3::new(0.1, 0.0, 0.0), 0.0, object);
        let (motions, diags) =
            estimate_object_motions(&seq, &ego, &ids, &ObjectMotionConfig::default()).unwrap();
        assert!(diags.iter().all(|d| d.method == MotionMethod::CentroidOnly));
        let got = motions.get(7, 2).unwrap();
        assert!((got.translation - Vec3::new(0.1, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn unseen_target_instances_fall_back_to_ego() {
        // Instance 9 appears only in the source frame.
        let target = Frame::new(1, vec![Vec3::zeros()]);
        let source = Frame::new(2, vec![Vec3::zeros(), Vec3::new(3.0, 0.0, 0.0)]);
        let seq = FrameSequence::new(vec![target, source], 0.1).unwrap();
        let ego = vec![RigidTransform::identity(); 2];
        let ids = vec![vec![0u32], vec![0u32, 9u32]];
        let (motions, diags) =
            estimate_object_motions(&seq, &ego, &ids, &ObjectMotionConfig::default()).unwrap();
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].method, MotionMethod::EgoFallback);
        assert!(motions.get(9, 2).unwrap().max_gap(&RigidTransform::identity()) == 0.0);
    }

    #[test]
    fn motions_account_for_ego_alignment() {
        // With a real ego motion, the object transform acts on aligned
        // coordinates: a static object must come out as identity.
        let object = cube_grid(Vec3::new(2.0, 3.0, 0.0), 3, 0.3);
        let ego_shift = Vec3::new(1.5, 0.0, 0.0);
        let target = Frame::new(1, object.clone());
        let source_pts: Vec<Vec3> = object.iter().map(|&p| p - ego_shift).collect();
        let source = Frame::new(2, source_pts);
        let seq = FrameSequence::new(vec![target, source], 0.1).unwrap();
        let ego = vec![
            RigidTransform::identity(),
            RigidTransform::from_translation(ego_shift),
        ];
        let ids = vec![vec![4u32; object.len()], vec![4u32; object.len()]];
        let (motions, _) =
            estimate_object_motions(&seq, &ego, &ids, &ObjectMotionConfig::default()).unwrap();
        let got = motions.get(4, 2).unwrap();
        assert!(got.max_gap(&RigidTransform::identity()) < 1e-9);
    }
}
