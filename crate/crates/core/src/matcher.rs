//! Feature matching and ego-motion estimation.
//!
//! Pooled pillar features are compared with a cosine cost, softly assigned
//! with a slack-padded entropic solver, distance-gated into weighted
//! correspondences, and fed to weighted Kabsch. The solver and cost builder
//! are scalar-generic; the ego estimator works on the concrete pipeline
//! types.

use crate::geom::GeomError;
use crate::grid::PillarGrid;
use crate::scalar::Scalar;
use crate::{Real, RigidTransform, Vec3};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MatchError {
    #[error("feature list on the {side} side is empty")]
    EmptyFeatures { side: &'static str },
    #[error("feature lengths differ: source {sources}, target {targets}")]
    FeatureLengthMismatch { sources: usize, targets: usize },
    #[error("{side} feature {index} has zero norm and cannot be normalized")]
    ZeroFeature { side: &'static str, index: usize },
    #[error("cost matrix contains a non-finite entry at ({row}, {col})")]
    NonFiniteCost { row: usize, col: usize },
    #[error("assignment shape {rows}x{cols} does not match {sources} source / {targets} target points")]
    ShapeMismatch { rows: usize, cols: usize, sources: usize, targets: usize },
    #[error("only {got} background pillars on the {side} side, need at least 3")]
    InsufficientBackground { side: &'static str, got: usize },
    #[error("support threshold must be positive, got {got}")]
    NonPositiveSupport { got: Real },
    #[error("foreground score list has length {got}, grid has {expected} cells")]
    ScoreLengthMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Geometry(#[from] GeomError),
}

/// Cosine distance matrix `M[l, m] = 2 - 2 <f_l, f_m>` over unit features,
/// entries in [0, 4]. Features off unit norm by more than 1e-6 are
/// renormalized; zero-norm features are rejected.
pub fn build_cost_matrix<S: Scalar>(
    source: &[Vec<S>],
    target: &[Vec<S>],
) -> Result<Array2<S>, MatchError> {
    let normalize = |feats: &[Vec<S>], side: &'static str| -> Result<Vec<Vec<S>>, MatchError> {
        if feats.is_empty() {
            return Err(MatchError::EmptyFeatures { side });
        }
        feats
            .iter()
            .enumerate()
            .map(|(index, f)| {
                let norm = f.iter().fold(S::zero(), |a, &x| a + x * x).sqrt();
                if !(norm > S::zero()) {
                    return Err(MatchError::ZeroFeature { side, index });
                }
                if (norm - S::one()).abs() > S::of(1e-6) {
                    Ok(f.iter().map(|&x| x / norm).collect())
                } else {
                    Ok(f.clone())
                }
            })
            .collect()
    };
    let src = normalize(source, "source")?;
    let dst = normalize(target, "target")?;
    if src[0].len() != dst[0].len() {
        return Err(MatchError::FeatureLengthMismatch {
            sources: src[0].len(),
            targets: dst[0].len(),
        });
    }

    let two = S::of(2.0);
    let four = S::of(4.0);
    let mut cost = Array2::zeros((src.len(), dst.len()));
    for (l, f) in src.iter().enumerate() {
        for (m, g) in dst.iter().enumerate() {
            let dot = f.iter().zip(g).fold(S::zero(), |a, (&x, &y)| a + x * y);
            cost[(l, m)] = (two - two * dot).max(S::zero()).min(four);
        }
    }
    Ok(cost)
}

/// Soft assignment between R source and C target items plus one slack row
/// and column, from a slack-padded log-space Sinkhorn.
#[derive(Debug, Clone)]
pub struct SoftAssignment<S> {
    matrix: Array2<S>,
    iterations: usize,
}

impl<S: Scalar> SoftAssignment<S> {
    /// Full (R+1) x (C+1) matrix including slack.
    pub fn matrix(&self) -> &Array2<S> {
        &self.matrix
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Non-slack shape (R, C).
    pub fn shape(&self) -> (usize, usize) {
        let (r, c) = self.matrix.dim();
        (r - 1, c - 1)
    }

    /// Largest deviation of a non-slack row or column sum from 1.
    pub fn marginal_deviation(&self) -> S {
        let (rows, cols) = self.shape();
        let mut worst = S::zero();
        for l in 0..rows {
            let sum = self.matrix.row(l).iter().fold(S::zero(), |a, &v| a + v);
            worst = worst.max((sum - S::one()).abs());
        }
        for m in 0..cols {
            let sum = self.matrix.column(m).iter().fold(S::zero(), |a, &v| a + v);
            worst = worst.max((sum - S::one()).abs());
        }
        worst
    }

    /// Mass of the non-slack block.
    pub fn matched_mass(&self) -> S {
        let (rows, cols) = self.shape();
        let mut sum = S::zero();
        for l in 0..rows {
            for m in 0..cols {
                sum += self.matrix[(l, m)];
            }
        }
        sum
    }
}

fn log_sum_exp<S: Scalar, I: Iterator<Item = S> + Clone>(vals: I) -> S {
    let max = vals.clone().fold(S::neg_infinity(), |a, v| a.max(v));
    if !max.is_finite() {
        return max;
    }
    let sum = vals.fold(S::zero(), |a, v| a + (v - max).exp());
    max + sum.ln()
}

/// Slack-padded Sinkhorn in log space.
///
/// The cost gets one extra slack row and column at `slack_cost`; each round
/// normalizes the non-slack rows then the non-slack columns over the padded
/// kernel `exp(-cost)`. The slack lane is exempt from the opposing
/// normalization, so unmatched mass can park there. Returns the assignment
/// and the marginal deviation recorded after every round.
pub fn sinkhorn_log_trace<S: Scalar>(
    cost: &Array2<S>,
    slack_cost: S,
    iterations: usize,
) -> Result<(SoftAssignment<S>, Vec<S>), MatchError> {
    run_sinkhorn(cost, slack_cost, iterations, true)
}

pub fn sinkhorn_log<S: Scalar>(
    cost: &Array2<S>,
    slack_cost: S,
    iterations: usize,
) -> Result<SoftAssignment<S>, MatchError> {
    run_sinkhorn(cost, slack_cost, iterations, false).map(|(a, _)| a)
}

fn run_sinkhorn<S: Scalar>(
    cost: &Array2<S>,
    slack_cost: S,
    iterations: usize,
    record: bool,
) -> Result<(SoftAssignment<S>, Vec<S>), MatchError> {
    let (rows, cols) = cost.dim();
    for ((row, col), &v) in cost.indexed_iter() {
        if !v.is_finite() {
            return Err(MatchError::NonFiniteCost { row, col });
        }
    }
    if !slack_cost.is_finite() {
        return Err(MatchError::NonFiniteCost { row: rows, col: cols });
    }

    let mut log_s = Array2::from_elem((rows + 1, cols + 1), -slack_cost);
    for ((l, m), &v) in cost.indexed_iter() {
        log_s[(l, m)] = -v;
    }

    let mut trace = Vec::new();
    for round in 0..iterations {
        for l in 0..rows {
            let lse = log_sum_exp(log_s.row(l).iter().copied());
            log_s.row_mut(l).mapv_inplace(|v| v - lse);
        }
        for m in 0..cols {
            let lse = log_sum_exp(log_s.column(m).iter().copied());
            log_s.column_mut(m).mapv_inplace(|v| v - lse);
        }
        if record {
            let snapshot =
                SoftAssignment { matrix: log_s.mapv(|v| v.exp()), iterations: round + 1 };
            trace.push(snapshot.marginal_deviation());
        }
    }

    let matrix = log_s.mapv(|v| v.exp());
    Ok((SoftAssignment { matrix, iterations }, trace))
}

/// Fraction of assignment mass parked on slack: 0 when every item is
/// matched, 1 when nothing is. Mean of the row and column leftover mass.
pub fn inlier_score<S: Scalar>(assignment: &SoftAssignment<S>) -> S {
    let (rows, cols) = assignment.shape();
    if rows == 0 || cols == 0 {
        return S::one();
    }
    let mass = assignment.matched_mass();
    let half = S::of(0.5);
    let leftover = (S::one() - mass / S::of(rows as f64))
        + (S::one() - mass / S::of(cols as f64));
    (leftover * half).max(S::zero()).min(S::one())
}

/// Distance-gated weighted targets for rigid fitting.
#[derive(Debug, Clone)]
pub struct CorrespondenceSet {
    /// Blended target position per source item.
    pub targets: Vec<Vec3>,
    /// Gated assignment mass per source item; 0 for fully masked rows.
    pub weights: Vec<Real>,
    /// Source rows whose support was entirely masked away.
    pub masked_rows: Vec<usize>,
}

/// Builds per-source correspondence targets from a soft assignment.
///
/// The support mask keeps pairs closer than `max_dist` (strict). Masked
/// assignment rows are renormalized to blend target positions; the weight
/// keeps the unnormalized gated mass. Rows with no surviving support get
/// weight 0 and their own position as target.
pub fn soft_correspondences(
    assignment: &SoftAssignment<Real>,
    source: &[Vec3],
    target: &[Vec3],
    max_dist: Real,
) -> Result<CorrespondenceSet, MatchError> {
    let (rows, cols) = assignment.shape();
    if rows != source.len() || cols != target.len() {
        return Err(MatchError::ShapeMismatch {
            rows,
            cols,
            sources: source.len(),
            targets: target.len(),
        });
    }
    if !(max_dist > 0.0) {
        return Err(MatchError::NonPositiveSupport { got: max_dist });
    }

    let mut targets = Vec::with_capacity(rows);
    let mut weights = Vec::with_capacity(rows);
    let mut masked_rows = Vec::new();
    for (l, &p) in source.iter().enumerate() {
        let mut mass = 0.0;
        let mut blend = Vec3::zeros();
        for (m, &q) in target.iter().enumerate() {
            if (p - q).norm() < max_dist {
                let s = assignment.matrix()[(l, m)];
                mass += s;
                blend += q * s;
            }
        }
        if mass > 0.0 {
            targets.push(blend / mass);
            weights.push(mass);
        } else {
            targets.push(p);
            weights.push(0.0);
            masked_rows.push(l);
        }
    }
    Ok(CorrespondenceSet { targets, weights, masked_rows })
}

/// Configuration for one ego-motion estimate.
#[derive(Debug, Clone)]
pub struct EgoEstimateConfig {
    /// Background pillars sampled per side.
    pub n_ego: usize,
    /// Pillars with a foreground score at or above this are excluded.
    pub fg_threshold: Real,
    pub sinkhorn_iterations: usize,
    pub slack_cost: Real,
    /// Multiplier on the feature cost before the solver. Cosine costs are
    /// capped at 4, so without sharpening the kernel cannot separate a true
    /// match from the dozens of candidates inside the support gate; this
    /// stands in for the annealed assignment temperature a trained matcher
    /// would learn. The slack cost is not scaled, so rows whose true
    /// counterpart is missing drain onto slack and drop out of the solve.
    pub cost_scale: Real,
    /// Speed bound used for the correspondence support gate, m/s.
    pub v_max: Real,
    /// Seconds between this frame and the target frame.
    pub elapsed: Real,
    /// Seed for the pillar subsample; derive one per frame.
    pub seed: u64,
}

impl Default for EgoEstimateConfig {
    fn default() -> Self {
        Self {
            n_ego: 1024,
            fg_threshold: 0.5,
            sinkhorn_iterations: 5,
            slack_cost: 1.0,
            cost_scale: 1.0e6,
            v_max: 30.0,
            elapsed: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EgoDiagnostics {
    pub inlier_score: Real,
    /// Weighted mean distance between transformed sources and their
    /// correspondence targets.
    pub mean_residual: Real,
    pub source_pillars: usize,
    pub target_pillars: usize,
    pub masked_rows: usize,
}

/// Estimates the rigid motion carrying `source` pillars onto `target`
/// pillars from background evidence only.
///
/// Background pillars (foreground score below the threshold) are reduced
/// to the `n_ego` cells with the highest count and pooled-feature norm per
/// side, matched by pooled feature, gated at `v_max * elapsed`, and
/// aligned with weighted Kabsch. Ranking by motion invariants keeps the
/// same physical pillars on both sides; independent random subsamples
/// would rarely contain each other's counterparts.
pub fn estimate_ego_motion(
    source: &PillarGrid,
    source_fg: &[Real],
    target: &PillarGrid,
    target_fg: &[Real],
    cfg: &EgoEstimateConfig,
) -> Result<(RigidTransform, EgoDiagnostics), MatchError> {
    let support = cfg.v_max * cfg.elapsed;
    if !(support > 0.0) {
        return Err(MatchError::NonPositiveSupport { got: support });
    }

    let pick = |grid: &PillarGrid,
                fg: &[Real],
                side: &'static str,
                rng: &mut ChaCha8Rng|
     -> Result<Vec<usize>, MatchError> {
        let (nx, ny) = grid.shape();
        if fg.len() != nx * ny {
            return Err(MatchError::ScoreLengthMismatch { got: fg.len(), expected: nx * ny });
        }
        let mut background: Vec<usize> =
            grid.occupied_cells().filter(|&c| fg[c] < cfg.fg_threshold).collect();
        if background.len() < 3 {
            return Err(MatchError::InsufficientBackground { side, got: background.len() });
        }
        // Rank by count then pooled-feature norm, both invariant under the
        // motion, so the two frames keep the same physical pillars. The
        // seeded shuffle breaks residual ties without spatial bias.
        background.shuffle(rng);
        let norm = |c: usize| grid.feature(c).iter().map(|v| v * v).sum::<Real>();
        background.sort_by(|&a, &b| {
            (grid.cell_count(b).cmp(&grid.cell_count(a))).then(norm(b).total_cmp(&norm(a)))
        });
        background.truncate(cfg.n_ego);
        background.sort_unstable();
        Ok(background)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let src_cells = pick(source, source_fg, "source", &mut rng)?;
    let dst_cells = pick(target, target_fg, "target", &mut rng)?;

    let src_feats: Vec<Vec<Real>> = src_cells.iter().map(|&c| source.feature(c).to_vec()).collect();
    let dst_feats: Vec<Vec<Real>> = dst_cells.iter().map(|&c| target.feature(c).to_vec()).collect();
    let src_pts: Vec<Vec3> = src_cells.iter().map(|&c| source.centroid(c)).collect();
    let dst_pts: Vec<Vec3> = dst_cells.iter().map(|&c| target.centroid(c)).collect();

    let mut cost = build_cost_matrix(&src_feats, &dst_feats)?;
    if cfg.cost_scale != 1.0 {
        cost.mapv_inplace(|v| v * cfg.cost_scale);
    }
    let assignment = sinkhorn_log(&cost, cfg.slack_cost, cfg.sinkhorn_iterations)?;
    let corr = soft_correspondences(&assignment, &src_pts, &dst_pts, support)?;

    let transform = crate::geom::kabsch_weighted(&src_pts, &corr.targets, &corr.weights)?;

    let wsum: Real = corr.weights.iter().sum();
    let mean_residual = if wsum > 0.0 {
        src_pts
            .iter()
            .zip(&corr.targets)
            .zip(&corr.weights)
            .map(|((&p, &q), &w)| w * (transform.apply(p) - q).norm())
            .sum::<Real>()
            / wsum
    } else {
        0.0
    };

    let diagnostics = EgoDiagnostics {
        inlier_score: inlier_score(&assignment),
        mean_residual,
        source_pillars: src_pts.len(),
        target_pillars: dst_pts.len(),
        masked_rows: corr.masked_rows.len(),
    };
    Ok((transform, diagnostics))
}
