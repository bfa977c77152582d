//! Uniform hash grid over 3D points for nearest-neighbor and radius queries.
//!
//! Cell size should match the query radius; lookups then touch at most 27
//! cells. Ties on distance resolve to the lowest point index, which keeps
//! every consumer deterministic.

use crate::{Real, Vec3};
use std::collections::HashMap;

#[derive(Debug)]
pub struct PointIndex<'a> {
    points: &'a [Vec3],
    cell: Real,
    cells: HashMap<(i64, i64, i64), Vec<u32>>,
}

fn key(p: Vec3, cell: Real) -> (i64, i64, i64) {
    (
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    )
}

impl<'a> PointIndex<'a> {
    /// Builds the index; `cell` must be positive and is typically the
    /// largest radius the caller will query.
    pub fn build(points: &'a [Vec3], cell: Real) -> Self {
        assert!(cell > 0.0, "cell size must be positive");
        let mut cells: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (i, &p) in points.iter().enumerate() {
            cells.entry(key(p, cell)).or_default().push(i as u32);
        }
        Self { points, cell, cells }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest neighbor within `radius`, or `None`. `radius` must not
    /// exceed the build cell size for the 27-cell walk to be exhaustive.
    pub fn nearest_within(&self, q: Vec3, radius: Real) -> Option<(usize, Real)> {
        debug_assert!(radius <= self.cell * (1.0 + 1e-12));
        let (cx, cy, cz) = key(q, self.cell);
        let r2 = radius * radius;
        let mut best: Option<(usize, Real)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) else {
                        continue;
                    };
                    for &i in bucket {
                        let d2 = (self.points[i as usize] - q).norm_squared();
                        if d2 <= r2 {
                            let better = match best {
                                None => true,
                                Some((bi, bd2)) => {
                                    d2 < bd2 || (d2 == bd2 && (i as usize) < bi)
                                }
                            };
                            if better {
                                best = Some((i as usize, d2));
                            }
                        }
                    }
                }
            }
        }
        best.map(|(i, d2)| (i, d2.sqrt()))
    }

    /// All point indices within `radius` of `q`, ascending.
    pub fn within(&self, q: Vec3, radius: Real) -> Vec<usize> {
        debug_assert!(radius <= self.cell * (1.0 + 1e-12));
        let (cx, cy, cz) = key(q, self.cell);
        let r2 = radius * radius;
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &i in bucket {
                            if (self.points[i as usize] - q).norm_squared() <= r2 {
                                out.push(i as usize);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_nearest_and_respects_radius() {
        let pts = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.4, 0.0, 0.0),
        ];
        let idx = PointIndex::build(&pts, 0.5);
        let (i, d) = idx.nearest_within(Vec3::new(0.3, 0.0, 0.0), 0.5).unwrap();
        assert_eq!(i, 2);
        assert!((d - 0.1).abs() < 1e-12);
        assert!(idx.nearest_within(Vec3::new(10.0, 0.0, 0.0), 0.5).is_none());
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        let pts = vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)];
        let idx = PointIndex::build(&pts, 1.0);
        let (i, _) = idx.nearest_within(Vec3::zeros(), 1.0).unwrap();
        assert_eq!(i, 0);
    }

    #[test]
    fn within_matches_brute_force() {
        let pts: Vec<Vec3> = (0..50)
            .map(|i| {
                let f = i as f64;
                Vec3::new((f * 0.37).sin() * 3.0, (f * 0.61).cos() * 3.0, f * 0.05)
            })
            .collect();
        let idx = PointIndex::build(&pts, 0.8);
        for &q in &[Vec3::zeros(), Vec3::new(1.5, -1.0, 0.5), Vec3::new(3.0, 3.0, 2.0)] {
            let got = idx.within(q, 0.8);
            let expected: Vec<usize> = pts
                .iter()
                .enumerate()
                .filter(|(_, p)| (**p - q).norm() <= 0.8)
                .map(|(i, _)| i)
                .collect();
            assert_eq!(got, expected);
        }
    }
}
