//! Plain-text pose files: one line per frame,
//! `frame qw qx qy qz tx ty tz`, frame indices contiguous from 1.
//!
//! Numbers are written with Rust's shortest round-trip float formatting,
//! so a write/read cycle reproduces the poses bit for bit. Quaternions a
//! hair off unit length (file rounding) are renormalized; anything worse
//! is rejected as a sign the file does not hold rotations.

use super::IoError;
use crate::geom::{Quaternion, RigidTransform};
use crate::{Real, Vec3};
use std::io::{BufRead, Write};

/// Norm tolerance before a quaternion is considered corrupt.
const UNIT_TOLERANCE: f64 = 1e-3;

pub fn write_poses(w: &mut impl Write, poses: &[RigidTransform<Real>]) -> Result<(), IoError> {
    writeln!(w, "# frame qw qx qy qz tx ty tz")?;
    for (i, pose) in poses.iter().enumerate() {
        let [qw, qx, qy, qz] = pose.rotation.to_array();
        let t = pose.translation;
        writeln!(w, "{} {} {} {} {} {} {} {}", i + 1, qw, qx, qy, qz, t.x, t.y, t.z)?;
    }
    Ok(())
}

pub fn read_poses(r: impl BufRead) -> Result<Vec<RigidTransform<Real>>, IoError> {
    let mut poses = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(IoError::MalformedRecord {
                file: "poses",
                line: line_no,
                reason: format!("expected 8 fields, got {}", fields.len()),
            });
        }
        let frame: usize = fields[0].parse().map_err(|_| IoError::MalformedRecord {
            file: "poses",
            line: line_no,
            reason: format!("bad frame index `{}`", fields[0]),
        })?;
        if frame != poses.len() + 1 {
            return Err(IoError::GapInFrames { expected: poses.len() + 1, got: frame });
        }
        let mut nums = [0.0 as Real; 7];
        for (slot, field) in nums.iter_mut().zip(&fields[1..]) {
            *slot = field.parse().map_err(|_| IoError::MalformedRecord {
                file: "poses",
                line: line_no,
                reason: format!("bad number `{field}`"),
            })?;
        }
        let norm = (nums[0] * nums[0] + nums[1] * nums[1] + nums[2] * nums[2] + nums[3] * nums[3])
            .sqrt();
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(IoError::NonUnitQuaternion { line: line_no, norm });
        }
        let rotation = Quaternion::unit(nums[0], nums[1], nums[2], nums[3])
            .expect("norm checked above");
        poses.push(RigidTransform::new(rotation, Vec3::new(nums[4], nums[5], nums[6])));
    }
    if poses.is_empty() {
        return Err(IoError::MalformedRecord {
            file: "poses",
            line: 0,
            reason: "file holds no poses".into(),
        });
    }
    Ok(poses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn sample_poses() -> Vec<RigidTransform<Real>> {
        vec![
            RigidTransform::identity(),
            RigidTransform::from_yaw_translation(0.3721, Vec3::new(1.25, -0.5, 0.001)),
            RigidTransform::new(
                Quaternion::from_axis_angle(Vec3::new(0.1, 0.9, 0.2), 0.77).unwrap(),
                Vec3::new(-3.0, 2.5, 0.25),
            ),
        ]
    }

    #[test]
    fn poses_round_trip_bitwise() {
        let poses = sample_poses();
        let mut bytes = Vec::new();
        write_poses(&mut bytes, &poses).unwrap();
        let back = read_poses(Cursor::new(bytes)).unwrap();
        assert_eq!(back.len(), poses.len());
        for (a, b) in back.iter().zip(&poses) {
            assert_eq!(a.rotation.to_array(), b.rotation.to_array());
            assert_eq!(a.translation.to_array(), b.translation.to_array());
        }
    }

    #[test]
    fn slightly_denormalized_quaternions_are_repaired() {
        let text = "1 1.0004 0 0 0 5 0 0\n";
        let poses = read_poses(Cursor::new(text)).unwrap();
        assert!((poses[0].rotation.norm() - 1.0).abs() < 1e-12);
        assert_eq!(poses[0].translation.x, 5.0);
    }

    #[test]
    fn badly_denormalized_quaternions_are_rejected() {
        let text = "1 1.1 0 0 0 0 0 0\n";
        match read_poses(Cursor::new(text)).unwrap_err() {
            IoError::NonUnitQuaternion { line: 1, norm } => {
                assert!((norm - 1.1).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn frame_gaps_and_disorder_are_rejected() {
        let gap = "1 1 0 0 0 0 0 0\n3 1 0 0 0 0 0 0\n";
        match read_poses(Cursor::new(gap)).unwrap_err() {
            IoError::GapInFrames { expected: 2, got: 3 } => {}
            other => panic!("unexpected {other:?}"),
        }
        let zero_based = "0 1 0 0 0 0 0 0\n";
        assert!(matches!(
            read_poses(Cursor::new(zero_based)).unwrap_err(),
            IoError::GapInFrames { expected: 1, got: 0 }
        ));
    }

    #[test]
    fn malformed_lines_are_reported() {
        assert!(matches!(
            read_poses(Cursor::new("1 2 3\n")).unwrap_err(),
            IoError::MalformedRecord { file: "poses", line: 1, .. }
        ));
        assert!(matches!(
            read_poses(Cursor::new("1 a 0 0 0 0 0 0\n")).unwrap_err(),
            IoError::MalformedRecord { .. }
        ));
        assert!(matches!(
            read_poses(Cursor::new("# only a comment\n")).unwrap_err(),
            IoError::MalformedRecord { .. }
        ));
    }
}
