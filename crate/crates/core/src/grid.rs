//! Pillarized bird's-eye-view grids.
//!
//! A frame collapses into vertical pillars on a regular xy grid: per pillar
//! a max-pooled feature vector, the member centroid, and the member count.
//! Features come from a pluggable [`PointFeaturizer`]; matching consumes
//! the pooled features, registration consumes the centroids.

use crate::frame::Frame;
use crate::{Real, RigidTransform, Vec3};
use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid extent is empty: x [{x_min}, {x_max}), y [{y_min}, {y_max})")]
    InvalidExtent { x_min: Real, x_max: Real, y_min: Real, y_max: Real },
    #[error("pillar dimensions must be positive, got ({0}, {1}, {2})")]
    InvalidPillarSize(Real, Real, Real),
    #[error("no input point falls inside the grid extent")]
    EmptyGrid,
    #[error("featurizer expects {expected} points, frame has {got}")]
    FeaturizerMismatch { expected: usize, got: usize },
}

/// Axis-aligned xy region covered by a grid, in meters. Points on the max
/// edges fall outside; the eval region elsewhere is inclusive, the grid
/// needs half-open cells to make binning unambiguous.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GridExtent {
    pub x_min: Real,
    pub x_max: Real,
    pub y_min: Real,
    pub y_max: Real,
}

impl GridExtent {
    /// Square extent [-half, half) on both axes.
    pub fn centered(half: Real) -> Self {
        Self { x_min: -half, x_max: half, y_min: -half, y_max: half }
    }

    pub fn contains(&self, x: Real, y: Real) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }
}

/// Pillar dimensions in meters. `z` is the nominal vertical span; binning
/// is purely planar, the full column pools into one pillar.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PillarSize {
    pub x: Real,
    pub y: Real,
    pub z: Real,
}

impl Default for PillarSize {
    fn default() -> Self {
        Self { x: 0.25, y: 0.25, z: 8.0 }
    }
}

/// Maps one point to a feature vector. `index` is the point's position in
/// the frame, so featurizers can look up side information.
pub trait PointFeaturizer: Sync {
    fn feature_len(&self) -> usize;
    /// Number of points the featurizer is bound to, if it carries
    /// per-point data.
    fn expected_points(&self) -> Option<usize> {
        None
    }
    fn feature(&self, index: usize, point: Vec3, intensity: Option<Real>, out: &mut [Real]);
}

/// Height statistics: (z, z^2, 1) plus intensity when requested. The
/// constant component keeps pooled features away from the zero vector.
#[derive(Debug, Clone, Copy, Default)]
pub struct GeometricFeaturizer {
    pub with_intensity: bool,
}

impl PointFeaturizer for GeometricFeaturizer {
    fn feature_len(&self) -> usize {
        if self.with_intensity {
            4
        } else {
            3
        }
    }

    fn feature(&self, _index: usize, point: Vec3, intensity: Option<Real>, out: &mut [Real]) {
        out[0] = point.z;
        out[1] = point.z * point.z;
        out[2] = 1.0;
        if self.with_intensity {
            out[3] = intensity.unwrap_or(0.0);
        }
    }
}

/// Test-only featurizer carrying the ground-truth target-frame position of
/// every point. Positions are embedded homogeneously as
/// `normalize([x, y, z, scale])`: unlike a normalized 3-vector this is
/// injective, so distinct positions never collide in the cost matrix.
#[derive(Debug, Clone)]
pub struct OraclePositionFeaturizer {
    pub targets: Vec<Vec3>,
    pub scale: Real,
}

impl OraclePositionFeaturizer {
    pub fn new(targets: Vec<Vec3>) -> Self {
        Self { targets, scale: 32.0 }
    }
}

impl PointFeaturizer for OraclePositionFeaturizer {
    fn feature_len(&self) -> usize {
        4
    }

    fn expected_points(&self) -> Option<usize> {
        Some(self.targets.len())
    }

    fn feature(&self, index: usize, _point: Vec3, _intensity: Option<Real>, out: &mut [Real]) {
        let t = self.targets[index];
        let n = (t.norm_squared() + self.scale * self.scale).sqrt();
        out[0] = t.x / n;
        out[1] = t.y / n;
        out[2] = t.z / n;
        out[3] = self.scale / n;
    }
}

/// Dense pillar grid; `nx * ny` cells, row-major in y then x.
#[derive(Debug)]
pub struct PillarGrid {
    extent: GridExtent,
    pillar: PillarSize,
    nx: usize,
    ny: usize,
    feature_len: usize,
    count: Vec<u32>,
    centroid: Vec<Vec3>,
    feature: Vec<Real>,
    dropped_outside: usize,
    clamped_samples: AtomicU64,
}

impl Clone for PillarGrid {
    fn clone(&self) -> Self {
        Self {
            extent: self.extent,
            pillar: self.pillar,
            nx: self.nx,
            ny: self.ny,
            feature_len: self.feature_len,
            count: self.count.clone(),
            centroid: self.centroid.clone(),
            feature: self.feature.clone(),
            dropped_outside: self.dropped_outside,
            clamped_samples: AtomicU64::new(self.clamped_samples.load(Ordering::Relaxed)),
        }
    }
}

/// Bins a frame into pillars: mean centroid, max-pooled features.
///
/// Per cell, members accumulate in coordinate-sorted order, so the result
/// is bit-identical under any permutation of the input points. Points
/// outside the extent are dropped and counted.
pub fn pillarize(
    frame: &Frame,
    extent: GridExtent,
    pillar: PillarSize,
    featurizer: &dyn PointFeaturizer,
) -> Result<PillarGrid, GridError> {
    if !(extent.x_max > extent.x_min) || !(extent.y_max > extent.y_min) {
        return Err(GridError::InvalidExtent {
            x_min: extent.x_min,
            x_max: extent.x_max,
            y_min: extent.y_min,
            y_max: extent.y_max,
        });
    }
    if !(pillar.x > 0.0) || !(pillar.y > 0.0) || !(pillar.z > 0.0) {
        return Err(GridError::InvalidPillarSize(pillar.x, pillar.y, pillar.z));
    }
    if let Some(expected) = featurizer.expected_points() {
        if expected != frame.len() {
            return Err(GridError::FeaturizerMismatch { expected, got: frame.len() });
        }
    }

    let nx = ((extent.x_max - extent.x_min) / pillar.x).ceil() as usize;
    let ny = ((extent.y_max - extent.y_min) / pillar.y).ceil() as usize;
    let cells = nx * ny;
    let feature_len = featurizer.feature_len();

    let mut members: Vec<Vec<u32>> = vec![Vec::new(); cells];
    let mut dropped_outside = 0usize;
    for (i, p) in frame.points.iter().enumerate() {
        if !extent.contains(p.x, p.y) {
            dropped_outside += 1;
            continue;
        }
        let ix = (((p.x - extent.x_min) / pillar.x) as usize).min(nx - 1);
        let iy = (((p.y - extent.y_min) / pillar.y) as usize).min(ny - 1);
        members[iy * nx + ix].push(i as u32);
    }
    if dropped_outside == frame.len() {
        return Err(GridError::EmptyGrid);
    }

    let mut count = vec![0u32; cells];
    let mut centroid = vec![Vec3::zeros(); cells];
    let mut feature = vec![0.0; cells * feature_len];
    let mut buf = vec![0.0; feature_len];
    for (cell, list) in members.iter_mut().enumerate() {
        if list.is_empty() {
            continue;
        }
        list.sort_unstable_by(|&a, &b| {
            let (pa, pb) = (frame.points[a as usize], frame.points[b as usize]);
            pa.to_array()
                .partial_cmp(&pb.to_array())
                .expect("finite coordinates")
                .then(a.cmp(&b))
        });
        let mut sum = Vec3::zeros();
        let pooled = &mut feature[cell * feature_len..(cell + 1) * feature_len];
        pooled.fill(Real::NEG_INFINITY);
        for &i in list.iter() {
            let i = i as usize;
            let p = frame.points[i];
            sum += p;
            featurizer.feature(i, p, frame.intensity.as_ref().map(|v| v[i]), &mut buf);
            for (dst, &src) in pooled.iter_mut().zip(&buf) {
                *dst = dst.max(src);
            }
        }
        count[cell] = list.len() as u32;
        centroid[cell] = sum / list.len() as Real;
    }
    for (cell, &c) in count.iter().enumerate() {
        if c == 0 {
            feature[cell * feature_len..(cell + 1) * feature_len].fill(0.0);
        }
    }

    Ok(PillarGrid {
        extent,
        pillar,
        nx,
        ny,
        feature_len,
        count,
        centroid,
        feature,
        dropped_outside,
        clamped_samples: AtomicU64::new(0),
    })
}

impl PillarGrid {
    pub fn extent(&self) -> GridExtent {
        self.extent
    }

    pub fn pillar(&self) -> PillarSize {
        self.pillar
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn feature_len(&self) -> usize {
        self.feature_len
    }

    pub fn dropped_outside(&self) -> usize {
        self.dropped_outside
    }

    /// Queries clamped to the border since construction.
    pub fn clamped_samples(&self) -> u64 {
        self.clamped_samples.load(Ordering::Relaxed)
    }

    pub fn cell_count(&self, cell: usize) -> u32 {
        self.count[cell]
    }

    pub fn is_occupied(&self, cell: usize) -> bool {
        self.count[cell] > 0
    }

    pub fn centroid(&self, cell: usize) -> Vec3 {
        self.centroid[cell]
    }

    pub fn feature(&self, cell: usize) -> &[Real] {
        &self.feature[cell * self.feature_len..(cell + 1) * self.feature_len]
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.count.len()).filter(|&c| self.count[c] > 0)
    }

    pub fn cell_center(&self, cell: usize) -> (Real, Real) {
        let ix = cell % self.nx;
        let iy = cell / self.nx;
        (
            self.extent.x_min + (ix as Real + 0.5) * self.pillar.x,
            self.extent.y_min + (iy as Real + 0.5) * self.pillar.y,
        )
    }

    /// Cell index a point bins into, or `None` outside the extent.
    pub fn cell_of_point(&self, p: Vec3) -> Option<usize> {
        if !self.extent.contains(p.x, p.y) {
            return None;
        }
        let ix = (((p.x - self.extent.x_min) / self.pillar.x) as usize).min(self.nx - 1);
        let iy = (((p.y - self.extent.y_min) / self.pillar.y) as usize).min(self.ny - 1);
        Some(iy * self.nx + ix)
    }

    /// Bilinear interpolation of pooled features over the four surrounding
    /// cell centers. Queries beyond the border centers clamp to the edge
    /// and bump the clamp counter.
    pub fn bilinear_sample(&self, x: Real, y: Real) -> Vec<Real> {
        self.sample_parts(x, y).0
    }

    fn sample_parts(&self, x: Real, y: Real) -> (Vec<Real>, Real) {
        let gx = (x - self.extent.x_min) / self.pillar.x - 0.5;
        let gy = (y - self.extent.y_min) / self.pillar.y - 0.5;
        let clamped = gx < 0.0 || gy < 0.0 || gx > (self.nx - 1) as Real || gy > (self.ny - 1) as Real;
        if clamped {
            self.clamped_samples.fetch_add(1, Ordering::Relaxed);
        }
        let gx = gx.clamp(0.0, (self.nx - 1) as Real);
        let gy = gy.clamp(0.0, (self.ny - 1) as Real);
        let ix = (gx as usize).min(self.nx.saturating_sub(2));
        let iy = (gy as usize).min(self.ny.saturating_sub(2));
        let (fx, fy) = if self.nx == 1 || self.ny == 1 {
            (if self.nx == 1 { 0.0 } else { gx - ix as Real }, if self.ny == 1 { 0.0 } else { gy - iy as Real })
        } else {
            (gx - ix as Real, gy - iy as Real)
        };
        let ix1 = (ix + 1).min(self.nx - 1);
        let iy1 = (iy + 1).min(self.ny - 1);

        let corners = [
            (iy * self.nx + ix, (1.0 - fx) * (1.0 - fy)),
            (iy * self.nx + ix1, fx * (1.0 - fy)),
            (iy1 * self.nx + ix, (1.0 - fx) * fy),
            (iy1 * self.nx + ix1, fx * fy),
        ];
        let mut out = vec![0.0; self.feature_len];
        let mut occupied_weight = 0.0;
        for (cell, w) in corners {
            if w == 0.0 {
                continue;
            }
            if self.count[cell] > 0 {
                occupied_weight += w;
            }
            for (dst, &src) in out.iter_mut().zip(self.feature(cell)) {
                *dst += w * src;
            }
        }
        (out, occupied_weight)
    }
}

/// Resamples a grid under the planar part of a rigid motion (yaw about +z
/// plus xy translation). Output cell (i, j) holds the input sampled at the
/// inverse-mapped cell center; centers mapping outside the input extent
/// become empty cells.
///
/// The result is a feature map: counts are zero and centroids sit at the
/// output cell centers, because member points do not survive resampling.
pub fn warp_grid(grid: &PillarGrid, transform: &RigidTransform) -> PillarGrid {
    let yaw = transform.yaw();
    let (cos, sin) = (yaw.cos(), yaw.sin());
    let (tx, ty) = (transform.translation.x, transform.translation.y);

    let cells = grid.nx * grid.ny;
    let mut count = vec![0u32; cells];
    let mut centroid = vec![Vec3::zeros(); cells];
    let mut feature = vec![0.0; cells * grid.feature_len];
    for cell in 0..cells {
        let (cx, cy) = grid.cell_center(cell);
        centroid[cell] = Vec3::new(cx, cy, 0.0);
        // Inverse planar map: undo translation, then rotation.
        let (dx, dy) = (cx - tx, cy - ty);
        let sx = cos * dx + sin * dy;
        let sy = -sin * dx + cos * dy;
        if !grid.extent.contains(sx, sy) {
            continue;
        }
        let (sample, occupied_weight) = grid.sample_parts(sx, sy);
        if occupied_weight > 0.0 {
            count[cell] = 1;
            feature[cell * grid.feature_len..(cell + 1) * grid.feature_len]
                .copy_from_slice(&sample);
        }
    }
    PillarGrid {
        extent: grid.extent,
        pillar: grid.pillar,
        nx: grid.nx,
        ny: grid.ny,
        feature_len: grid.feature_len,
        count,
        centroid,
        feature,
        dropped_outside: 0,
        clamped_samples: AtomicU64::new(0),
    }
}
