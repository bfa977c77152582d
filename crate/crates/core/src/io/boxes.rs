//! Text files of box tracks: one box per line,
//! `instance frame cx cy cz sx sy sz yaw`, in target-aligned coordinates.

use super::IoError;
use crate::gt::{BoxTrack, OrientedBox};
use crate::{Real, Vec3};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};

pub fn write_boxes(w: &mut impl Write, tracks: &[BoxTrack]) -> Result<(), IoError> {
    writeln!(w, "# instance frame cx cy cz sx sy sz yaw")?;
    for track in tracks {
        for (frame, b) in &track.boxes {
            writeln!(
                w,
                "{} {} {} {} {} {} {} {} {}",
                track.instance_id,
                frame,
                b.center.x,
                b.center.y,
                b.center.z,
                b.size.x,
                b.size.y,
                b.size.z,
                b.yaw
            )?;
        }
    }
    Ok(())
}

pub fn read_boxes(r: impl BufRead) -> Result<Vec<BoxTrack>, IoError> {
    let mut tracks: BTreeMap<u32, BTreeMap<usize, OrientedBox>> = BTreeMap::new();
    for (idx, line) in r.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 9 {
            return Err(IoError::MalformedRecord {
                file: "boxes",
                line: line_no,
                reason: format!("expected 9 fields, got {}", fields.len()),
            });
        }
        let bad = |what: &str| IoError::MalformedRecord {
            file: "boxes",
            line: line_no,
            reason: format!("bad {what}"),
        };
        let instance: u32 = fields[0].parse().map_err(|_| bad("instance id"))?;
        let frame: usize = fields[1].parse().map_err(|_| bad("frame index"))?;
        let mut nums = [0.0 as Real; 7];
        for (slot, field) in nums.iter_mut().zip(&fields[2..]) {
            *slot = field.parse().map_err(|_| bad("number"))?;
        }
        let b = OrientedBox {
            center: Vec3::new(nums[0], nums[1], nums[2]),
            size: Vec3::new(nums[3], nums[4], nums[5]),
            yaw: nums[6],
        };
        if tracks.entry(instance).or_default().insert(frame, b).is_some() {
            return Err(IoError::DuplicateBox { instance, frame });
        }
    }
    Ok(tracks
        .into_iter()
        .map(|(instance_id, boxes)| BoxTrack { instance_id, boxes })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn sample_tracks() -> Vec<BoxTrack> {
        vec![
            BoxTrack::new(
                2,
                [
                    (
                        1,
                        OrientedBox {
                            center: Vec3::new(4.5, -1.0, 0.9),
                            size: Vec3::new(4.2, 1.9, 1.6),
                            yaw: 0.31,
                        },
                    ),
                    (
                        3,
                        OrientedBox {
                            center: Vec3::new(2.5, -1.0, 0.9),
                            size: Vec3::new(4.2, 1.9, 1.6),
                            yaw: 0.35,
                        },
                    ),
                ],
            ),
            BoxTrack::new(
                9,
                [(
                    2,
                    OrientedBox {
                        center: Vec3::new(-8.0, 3.0, 1.1),
                        size: Vec3::new(1.0, 1.0, 2.0),
                        yaw: -1.2,
                    },
                )],
            ),
        ]
    }

    #[test]
    fn boxes_round_trip_bitwise() {
        let tracks = sample_tracks();
        let mut bytes = Vec::new();
        write_boxes(&mut bytes, &tracks).unwrap();
        let back = read_boxes(Cursor::new(bytes)).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in back.iter().zip(&tracks) {
            assert_eq!(a.instance_id, b.instance_id);
            assert_eq!(a.boxes.len(), b.boxes.len());
            for ((fa, ba), (fb, bb)) in a.boxes.iter().zip(&b.boxes) {
                assert_eq!(fa, fb);
                assert_eq!(ba.center.to_array(), bb.center.to_array());
                assert_eq!(ba.size.to_array(), bb.size.to_array());
                assert_eq!(ba.yaw, bb.yaw);
            }
        }
    }

    #[test]
    fn duplicate_boxes_are_rejected() {
        let text = "1 1 0 0 0 1 1 1 0\n1 1 5 0 0 1 1 1 0\n";
        assert!(matches!(
            read_boxes(Cursor::new(text)).unwrap_err(),
            IoError::DuplicateBox { instance: 1, frame: 1 }
        ));
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(matches!(
            read_boxes(Cursor::new("1 1 0 0\n")).unwrap_err(),
            IoError::MalformedRecord { file: "boxes", line: 1, .. }
        ));
        assert!(matches!(
            read_boxes(Cursor::new("x 1 0 0 0 1 1 1 0\n")).unwrap_err(),
            IoError::MalformedRecord { .. }
        ));
    }

    #[test]
    fn empty_file_means_no_tracks() {
        assert!(read_boxes(Cursor::new("# empty\n")).unwrap().is_empty());
    }
}
