//! Grouping foreground points into object instances.
//!
//! Foreground points from every frame are warped into target-aligned
//! coordinates, shifted by predicted center offsets so one object's points
//! from all timestamps pile up in one spot, then voxel-downsampled and
//! clustered. Cluster ids scatter back through the voxel assignment to the
//! original points of each frame, which is what makes the labeling
//! temporally consistent. A small constant-velocity tracker handles the
//! streaming case where frames arrive one at a time.

use crate::frame::{FrameSequence, ObjectMotionSet};
use crate::geom::RigidTransform;
use crate::spatial::PointIndex;
use crate::{Real, Vec3};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AssocError {
    #[error("{what} has length {got}, expected {expected}")]
    LengthMismatch { what: &'static str, got: usize, expected: usize },
    #[error("{name} must be positive")]
    NonPositiveParam { name: &'static str },
    #[error("no motion for instance {instance} at frame {frame}")]
    MissingObjectTransform { instance: u32, frame: usize },
}

/// Voxel-grid downsample: one centroid per occupied voxel.
#[derive(Debug, Clone)]
pub struct Downsampled {
    /// Voxel centroids, ordered by voxel key (deterministic).
    pub centroids: Vec<Vec3>,
    /// Centroid index for every input point.
    pub assignment: Vec<usize>,
    /// Members per voxel; carried into clustering so downsampling does not
    /// thin out density.
    pub counts: Vec<usize>,
}

pub fn voxel_downsample(points: &[Vec3], voxel: Real) -> Result<Downsampled, AssocError> {
    if !(voxel > 0.0) {
        return Err(AssocError::NonPositiveParam { name: "voxel" });
    }
    let key = |p: Vec3| -> (i64, i64, i64) {
        (
            (p.x / voxel).floor() as i64,
            (p.y / voxel).floor() as i64,
            (p.z / voxel).floor() as i64,
        )
    };
    let mut cells: BTreeMap<(i64, i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, &p) in points.iter().enumerate() {
        cells.entry(key(p)).or_default().push(i);
    }
    let mut centroids = Vec::with_capacity(cells.len());
    let mut counts = Vec::with_capacity(cells.len());
    let mut assignment = vec![0usize; points.len()];
    for (slot, members) in cells.values().enumerate() {
        let mut sum = Vec3::zeros();
        for &i in members {
            sum += points[i];
            assignment[i] = slot;
        }
        centroids.push(sum / members.len() as Real);
        counts.push(members.len());
    }
    Ok(Downsampled { centroids, assignment, counts })
}

/// Density clustering with labels -1 (noise) or 0..k-1.
///
/// A point is a core point when at least `min_pts` points (itself
/// included) lie within `eps`. Seeds are visited in index order and
/// clusters grow breadth-first over sorted neighbor lists, so the labeling
/// is deterministic.
pub fn dbscan(points: &[Vec3], eps: Real, min_pts: usize) -> Result<Vec<i32>, AssocError> {
    dbscan_weighted(points, None, eps, min_pts)
}

/// [`dbscan`] where each point stands for `weights[i]` original points.
///
/// Core status counts total represented mass, so clustering voxel
/// representatives with their member counts labels exactly like clustering
/// the raw points would whenever voxels are small against `eps`.
pub fn dbscan_weighted(
    points: &[Vec3],
    weights: Option<&[usize]>,
    eps: Real,
    min_pts: usize,
) -> Result<Vec<i32>, AssocError> {
    if !(eps > 0.0) {
        return Err(AssocError::NonPositiveParam { name: "eps" });
    }
    if min_pts == 0 {
        return Err(AssocError::NonPositiveParam { name: "min_pts" });
    }
    if let Some(w) = weights {
        if w.len() != points.len() {
            return Err(AssocError::LengthMismatch {
                what: "weights",
                got: w.len(),
                expected: points.len(),
            });
        }
    }
    let mass = |list: &[usize]| -> usize {
        match weights {
            Some(w) => list.iter().map(|&i| w[i]).sum(),
            None => list.len(),
        }
    };
    const UNVISITED: i32 = -2;
    const NOISE: i32 = -1;
    let index = PointIndex::build(points, eps);
    let mut labels = vec![UNVISITED; points.len()];
    let mut next_cluster = 0i32;
    for seed in 0..points.len() {
        if labels[seed] != UNVISITED {
            continue;
        }
        let neighbors = index.within(points[seed], eps);
        if mass(&neighbors) < min_pts {
            labels[seed] = NOISE;
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        labels[seed] = cluster;
        let mut queue: std::collections::VecDeque<usize> = neighbors.into();
        while let Some(p) = queue.pop_front() {
            if labels[p] == NOISE {
                labels[p] = cluster; // border point reached by a core point
            }
            if labels[p] != UNVISITED {
                continue;
            }
            labels[p] = cluster;
            let reach = index.within(points[p], eps);
            if mass(&reach) >= min_pts {
                queue.extend(reach);
            }
        }
    }
    Ok(labels)
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ClusterConfig {
    /// DBSCAN reachability radius in meters.
    pub eps: Real,
    /// Minimum neighborhood size (point itself included) for a core point.
    pub min_pts: usize,
    /// Downsampling voxel edge in meters.
    pub voxel: Real,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self { eps: 0.75, min_pts: 5, voxel: 0.15 }
    }
}

/// Instance labels per frame (0 = background or noise), consistent across
/// the whole sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceLabeling {
    pub frames: Vec<Vec<u32>>,
    pub cluster_count: usize,
}

/// Clusters foreground points from all frames at once.
///
/// Each foreground point is warped by its frame's ego transform and moved
/// by its predicted offset before pooling; the pooled cloud is voxelized
/// and clustered, and cluster ids travel back through voxel membership to
/// per-frame, per-point labels (cluster c becomes label c + 1).
pub fn cluster_spatiotemporal(
    seq: &FrameSequence,
    ego: &[RigidTransform<Real>],
    foreground: &[Vec<bool>],
    offsets: &[Vec<Vec3>],
    cfg: &ClusterConfig,
) -> Result<InstanceLabeling, AssocError> {
    let t_len = seq.len();
    if ego.len() != t_len {
        return Err(AssocError::LengthMismatch { what: "ego", got: ego.len(), expected: t_len });
    }
    if foreground.len() != t_len {
        return Err(AssocError::LengthMismatch {
            what: "foreground",
            got: foreground.len(),
            expected: t_len,
        });
    }
    if offsets.len() != t_len {
        return Err(AssocError::LengthMismatch {
            what: "offsets",
            got: offsets.len(),
            expected: t_len,
        });
    }

    // (frame slot, point index) of every pooled foreground point.
    let mut origin: Vec<(usize, usize)> = Vec::new();
    let mut pooled: Vec<Vec3> = Vec::new();
    for (slot, frame) in seq.frames().iter().enumerate() {
        let n = frame.points.len();
        if foreground[slot].len() != n {
            return Err(AssocError::LengthMismatch {
                what: "foreground frame",
                got: foreground[slot].len(),
                expected: n,
            });
        }
        if offsets[slot].len() != n {
            return Err(AssocError::LengthMismatch {
                what: "offsets frame",
                got: offsets[slot].len(),
                expected: n,
            });
        }
        for (i, &p) in frame.points.iter().enumerate() {
            if foreground[slot][i] {
                pooled.push(ego[slot].apply(p) + offsets[slot][i]);
                origin.push((slot, i));
            }
        }
    }

    let mut frames: Vec<Vec<u32>> =
        seq.frames().iter().map(|f| vec![0u32; f.points.len()]).collect();
    if pooled.is_empty() {
        return Ok(InstanceLabeling { frames, cluster_count: 0 });
    }

    let down = voxel_downsample(&pooled, cfg.voxel)?;
    let labels = dbscan_weighted(&down.centroids, Some(&down.counts), cfg.eps, cfg.min_pts)?;
    let mut cluster_count = 0usize;
    for (pooled_idx, &(slot, i)) in origin.iter().enumerate() {
        let label = labels[down.assignment[pooled_idx]];
        if label >= 0 {
            frames[slot][i] = label as u32 + 1;
            cluster_count = cluster_count.max(label as usize + 1);
        }
    }
    Ok(InstanceLabeling { frames, cluster_count })
}

/// Offsets that pull every instance point onto its target-frame centroid.
///
/// A point of instance k in frame t lands at `T_k(T_ego(x))` in the target
/// frame; the instance centroid is the mean of those landings over all
/// frames, and the offset is centroid minus the ego-aligned position.
/// Background points get zero offsets.
pub fn compute_gt_offsets(
    seq: &FrameSequence,
    ego: &[RigidTransform<Real>],
    instance_ids: &[Vec<u32>],
    objects: &ObjectMotionSet,
) -> Result<Vec<Vec<Vec3>>, AssocError> {
    let t_len = seq.len();
    if ego.len() != t_len {
        return Err(AssocError::LengthMismatch { what: "ego", got: ego.len(), expected: t_len });
    }
    if instance_ids.len() != t_len {
        return Err(AssocError::LengthMismatch {
            what: "instance_ids",
            got: instance_ids.len(),
            expected: t_len,
        });
    }

    // First pass: per-instance centroid of deformed positions.
    let mut sums: BTreeMap<u32, (Vec3, usize)> = BTreeMap::new();
    let mut aligned: Vec<Vec<Vec3>> = Vec::with_capacity(t_len);
    for (slot, frame) in seq.frames().iter().enumerate() {
        let ids = &instance_ids[slot];
        if ids.len() != frame.points.len() {
            return Err(AssocError::LengthMismatch {
                what: "instance_ids frame",
                got: ids.len(),
                expected: frame.points.len(),
            });
        }
        let warped = ego[slot].apply_points(&frame.points);
        for (i, &id) in ids.iter().enumerate() {
            if id == 0 {
                continue;
            }
            let t = frame.timestamp_index;
            let deformed = if t == 1 {
                warped[i]
            } else {
                let motion = objects
                    .get(id, t)
                    .ok_or(AssocError::MissingObjectTransform { instance: id, frame: t })?;
                motion.apply(warped[i])
            };
            let entry = sums.entry(id).or_insert((Vec3::zeros(), 0));
            entry.0 += deformed;
            entry.1 += 1;
        }
        aligned.push(warped);
    }
    let centroids: BTreeMap<u32, Vec3> =
        sums.into_iter().map(|(id, (sum, n))| (id, sum / n as Real)).collect();

    let mut offsets = Vec::with_capacity(t_len);
    for (slot, frame) in seq.frames().iter().enumerate() {
        let mut frame_offsets = vec![Vec3::zeros(); frame.points.len()];
        for (i, &id) in instance_ids[slot].iter().enumerate() {
            if id != 0 {
                frame_offsets[i] = centroids[&id] - aligned[slot][i];
            }
        }
        offsets.push(frame_offsets);
    }
    Ok(offsets)
}

#[derive(Debug, Clone, Copy)]
pub struct TrackerConfig {
    /// Maximum distance between a predicted track position and an observed
    /// centroid for them to associate, in meters.
    pub gate: Real,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self { gate: 2.0 }
    }
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: u32,
    /// Last observed position and the frame it was seen in.
    pub position: Vec3,
    pub velocity: Vec3,
    pub last_seen: usize,
    pub observations: usize,
}

impl Track {
    /// Constant-velocity prediction at the given frame.
    pub fn predict(&self, frame: usize) -> Vec3 {
        self.position + self.velocity * (frame - self.last_seen) as Real
    }
}

/// Greedy nearest-neighbor tracker over cluster centroids.
///
/// Tracks coast on their last velocity and never expire, so an object that
/// is occluded for a few frames can pick its identity back up as long as
/// the prediction stays within the gate.
#[derive(Debug)]
pub struct CentroidTracker {
    cfg: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u32,
}

impl CentroidTracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Self { cfg, tracks: Vec::new(), next_id: 1 }
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Associates the frame's centroids, returning one track id per
    /// centroid. Pairs are matched greedily by distance (ties broken by
    /// track then centroid order); leftovers start new tracks.
    pub fn step(&mut self, frame: usize, centroids: &[Vec3]) -> Vec<u32> {
        let mut pairs: Vec<(Real, usize, usize)> = Vec::new();
        for (ti, track) in self.tracks.iter().enumerate() {
            let predicted = track.predict(frame);
            for (ci, &c) in centroids.iter().enumerate() {
                let d = (c - predicted).norm();
                if d <= self.cfg.gate {
                    pairs.push((d, ti, ci));
                }
            }
        }
        pairs.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));

        let mut track_used = vec![false; self.tracks.len()];
        let mut out = vec![0u32; centroids.len()];
        for (_, ti, ci) in pairs {
            if track_used[ti] || out[ci] != 0 {
                continue;
            }
            track_used[ti] = true;
            let track = &mut self.tracks[ti];
            let dt = (frame - track.last_seen) as Real;
            if dt > 0.0 {
                track.velocity = (centroids[ci] - track.position) / dt;
            }
            track.position = centroids[ci];
            track.last_seen = frame;
            track.observations += 1;
            out[ci] = track.id;
        }
        for (ci, &c) in centroids.iter().enumerate() {
            if out[ci] == 0 {
                let id = self.next_id;
                self.next_id += 1;
                self.tracks.push(Track {
                    id,
                    position: c,
                    velocity: Vec3::zeros(),
                    last_seen: frame,
                    observations: 1,
                });
                out[ci] = id;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Frame;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn voxel_downsample_averages_within_cells() {
        let points = vec![
            Vec3::new(0.01, 0.01, 0.0),
            Vec3::new(0.09, 0.05, 0.0),
            Vec3::new(0.5, 0.0, 0.0),
            Vec3::new(-0.01, 0.0, 0.0),
        ];
        let down = voxel_downsample(&points, 0.1).unwrap();
        assert_eq!(down.centroids.len(), 3);
        // Keys sort as (-1,0,0), (0,0,0), (5,0,0).
        assert!((down.centroids[1] - Vec3::new(0.05, 0.03, 0.0)).norm() < 1e-12);
        assert_eq!(down.assignment, vec![1, 1, 2, 0]);
    }

    #[test]
    fn voxel_downsample_rejects_bad_edge() {
        assert_eq!(
            voxel_downsample(&[], 0.0).unwrap_err(),
            AssocError::NonPositiveParam { name: "voxel" }
        );
    }

    /// Textbook DBSCAN with quadratic region queries, as an independent
    /// route for comparison.
    fn dbscan_oracle(points: &[Vec3], eps: Real, min_pts: usize) -> Vec<i32> {
        let n = points.len();
        let region = |i: usize| -> Vec<usize> {
            (0..n).filter(|&j| (points[i] - points[j]).norm() <= eps).collect()
        };
        let mut labels = vec![-2i32; n];
        let mut cluster = 0;
        for i in 0..n {
            if labels[i] != -2 {
                continue;
            }
            let seeds = region(i);
            if seeds.len() < min_pts {
                labels[i] = -1;
                continue;
            }
            labels[i] = cluster;
            let mut stack = seeds;
            while let Some(j) = stack.pop() {
                if labels[j] == -1 {
                    labels[j] = cluster;
                }
                if labels[j] != -2 {
                    continue;
                }
                labels[j] = cluster;
                let r = region(j);
                if r.len() >= min_pts {
                    stack.extend(r);
                }
            }
            cluster += 1;
        }
        labels
    }

    /// Canonical form: clusters renumbered by first appearance.
    fn canonical(labels: &[i32]) -> Vec<i32> {
        let mut map = std::collections::HashMap::new();
        let mut next = 0;
        labels
            .iter()
            .map(|&l| {
                if l < 0 {
                    -1
                } else {
                    *map.entry(l).or_insert_with(|| {
                        let v = next;
                        next += 1;
                        v
                    })
                }
            })
            .collect()
    }

    #[test]
    fn dbscan_splits_blobs_and_flags_noise() {
        let mut points = Vec::new();
        for i in 0..6 {
            points.push(Vec3::new(i as Real * 0.1, 0.0, 0.0));
        }
        for i in 0..6 {
            points.push(Vec3::new(20.0 + i as Real * 0.1, 0.0, 0.0));
        }
        points.push(Vec3::new(10.0, 10.0, 0.0));
        let labels = dbscan(&points, 0.75, 5).unwrap();
        assert_eq!(labels[..6], [0; 6]);
        assert_eq!(labels[6..12], [1; 6]);
        assert_eq!(labels[12], -1);
    }

    #[test]
    fn dbscan_matches_textbook_oracle_on_separated_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let blobs = rng.gen_range(1..4);
            let mut points = Vec::new();
            for b in 0..blobs {
                let center = Vec3::new(b as Real * 30.0, rng.gen_range(-5.0..5.0), 0.0);
                for _ in 0..rng.gen_range(5..12) {
                    points.push(
                        center
                            + Vec3::new(
                                rng.gen_range(-0.3..0.3),
                                rng.gen_range(-0.3..0.3),
                                rng.gen_range(-0.3..0.3),
                            ),
                    );
                }
            }
            for _ in 0..3 {
                points.push(Vec3::new(rng.gen_range(-5.0..5.0), 100.0, 0.0));
            }
            let got = canonical(&dbscan(&points, 1.0, 5).unwrap());
            let want = canonical(&dbscan_oracle(&points, 1.0, 5));
            assert_eq!(got, want);
        }
    }

    #[test]
    fn dbscan_min_pts_counts_the_point_itself() {
        // Exactly 3 mutually close points: cores iff min_pts <= 3.
        let points =
            vec![Vec3::zeros(), Vec3::new(0.1, 0.0, 0.0), Vec3::new(0.0, 0.1, 0.0)];
        assert_eq!(dbscan(&points, 0.5, 3).unwrap(), vec![0, 0, 0]);
        assert_eq!(dbscan(&points, 0.5, 4).unwrap(), vec![-1, -1, -1]);
    }

    fn crossing_scene() -> (FrameSequence, Vec<RigidTransform<f64>>, Vec<Vec<bool>>, Vec<Vec<u32>>, ObjectMotionSet)
    {
        // Two objects on opposite lanes 0.6 m apart cross at the middle
        // frame. Pooled without offsets the footprints chain into one
        // blob (0.7 m steps, eps 0.75); GT offsets collapse each object
        // onto its target-frame centroid, 1.5 m from the other's.
        // 9 points per object per frame.
        let shape: Vec<Vec3> = (0..9)
            .map(|i| Vec3::new((i % 3) as Real * 0.1, (i / 3) as Real * 0.1, 0.0))
            .collect();
        let mut frames = Vec::new();
        let mut fg = Vec::new();
        let mut ids = Vec::new();
        let mut objects = ObjectMotionSet::new();
        for t in 1..=3usize {
            let back = (t - 1) as Real;
            let a_center = Vec3::new(-0.7 + 0.7 * back, 0.3, 0.0);
            let b_center = Vec3::new(0.7 - 0.7 * back, -0.3, 0.0);
            let mut pts = Vec::new();
            for &s in &shape {
                pts.push(a_center + s);
            }
            for &s in &shape {
                pts.push(b_center + s);
            }
            frames.push(Frame::new(t, pts));
            fg.push(vec![true; 18]);
            let mut frame_ids = vec![1u32; 9];
            frame_ids.extend(vec![2u32; 9]);
            ids.push(frame_ids);
            if t >= 2 {
                objects.insert(1, t, RigidTransform::from_translation(Vec3::new(-0.7 * back, 0.0, 0.0)));
                objects.insert(2, t, RigidTransform::from_translation(Vec3::new(0.7 * back, 0.0, 0.0)));
            }
        }
        let seq = FrameSequence::new(frames, 0.1).unwrap();
        let ego = vec![RigidTransform::identity(); 3];
        (seq, ego, fg, ids, objects)
    }

    #[test]
    fn gt_offsets_collapse_instances_onto_their_centroids() {
        let (seq, ego, _, ids, objects) = crossing_scene();
        let offsets = compute_gt_offsets(&seq, &ego, &ids, &objects).unwrap();
        // Instance 1 deforms onto its target-frame footprint; every offset
        // lands points exactly on one shared centroid.
        let mut landed = Vec::new();
        for (slot, frame) in seq.frames().iter().enumerate() {
            for (i, &id) in ids[slot].iter().enumerate() {
                if id == 1 {
                    landed.push(frame.points[i] + offsets[slot][i]);
                }
            }
        }
        for w in landed.windows(2) {
            assert!((w[0] - w[1]).norm() < 1e-12);
        }
    }

    #[test]
    fn clustering_separates_crossing_objects_only_with_offsets() {
        let (seq, ego, fg, ids, objects) = crossing_scene();
        let offsets = compute_gt_offsets(&seq, &ego, &ids, &objects).unwrap();
        let cfg = ClusterConfig::default();
        let with = cluster_spatiotemporal(&seq, &ego, &fg, &offsets, &cfg).unwrap();
        assert_eq!(with.cluster_count, 2);
        // Labels stay consistent across frames.
        for slot in 0..3 {
            assert_eq!(with.frames[slot][..9], with.frames[0][..9]);
            assert_eq!(with.frames[slot][9..], with.frames[0][9..]);
        }
        assert_ne!(with.frames[0][0], with.frames[0][9]);

        let zero: Vec<Vec<Vec3>> =
            seq.frames().iter().map(|f| vec![Vec3::zeros(); f.points.len()]).collect();
        let without = cluster_spatiotemporal(&seq, &ego, &fg, &zero, &cfg).unwrap();
        // Undeformed, the two targets overlap at the origin.
        assert_eq!(without.cluster_count, 1, "crossing objects merge without offsets");
    }

    #[test]
    fn clustering_handles_empty_foreground() {
        let (seq, ego, _, _, _) = crossing_scene();
        let fg: Vec<Vec<bool>> = seq.frames().iter().map(|f| vec![false; f.points.len()]).collect();
        let zero: Vec<Vec<Vec3>> =
            seq.frames().iter().map(|f| vec![Vec3::zeros(); f.points.len()]).collect();
        let out =
            cluster_spatiotemporal(&seq, &ego, &fg, &zero, &ClusterConfig::default()).unwrap();
        assert_eq!(out.cluster_count, 0);
        assert!(out.frames.iter().all(|f| f.iter().all(|&l| l == 0)));
    }

    #[test]
    fn tracker_follows_crossing_objects_through_the_intersection() {
        let mut tracker = CentroidTracker::new(TrackerConfig { gate: 2.0 });
        // A runs left to right, B right to left, meeting at frame 3.
        let a = |t: usize| Vec3::new(-3.0 + t as Real * 1.0, 0.3, 0.0);
        let b = |t: usize| Vec3::new(3.0 - t as Real * 1.0, -0.3, 0.0);
        let first = tracker.step(0, &[a(0), b(0)]);
        assert_eq!(first, vec![1, 2]);
        for t in 1..=6 {
            let ids = tracker.step(t, &[a(t), b(t)]);
            assert_eq!(ids, vec![1, 2], "identities through the crossing at t={t}");
        }
    }

    #[test]
    fn tracker_never_expires_and_recovers_after_occlusion() {
        let mut tracker = CentroidTracker::new(TrackerConfig { gate: 2.0 });
        let pos = |t: usize| Vec3::new(t as Real * 0.5, 0.0, 0.0);
        tracker.step(0, &[pos(0)]);
        tracker.step(1, &[pos(1)]);
        // Nothing for three frames, then the object reappears on its path.
        assert_eq!(tracker.step(2, &[]), Vec::<u32>::new());
        let ids = tracker.step(5, &[pos(5)]);
        assert_eq!(ids, vec![1], "coasting prediction reclaims the track");
        assert_eq!(tracker.tracks().len(), 1);
    }

    #[test]
    fn tracker_spawns_new_ids_outside_the_gate() {
        let mut tracker = CentroidTracker::new(TrackerConfig { gate: 2.0 });
        tracker.step(0, &[Vec3::zeros()]);
        let ids = tracker.step(1, &[Vec3::new(10.0, 0.0, 0.0)]);
        assert_eq!(ids, vec![2]);
        assert_eq!(tracker.tracks().len(), 2);
    }
}
