//! Binary flow files.
//!
//! Layout, all little-endian: u32 source-frame count, then per frame a
//! u32 point count followed by that many xyz triples as f32. The format
//! is a plain dump with no padding, so files are comparable byte for
//! byte, which the determinism checks rely on.

use super::IoError;
use crate::{Real, Vec3};
use std::io::{Read, Write};

pub fn write_flow(w: &mut impl Write, flows: &crate::frame::FlowField) -> Result<(), IoError> {
    w.write_all(&(flows.source_count() as u32).to_le_bytes())?;
    for frame in flows.frames() {
        w.write_all(&(frame.len() as u32).to_le_bytes())?;
        for v in frame {
            for c in v.to_f32_array() {
                w.write_all(&c.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Reads the raw per-frame flow vectors; pair with
/// [`crate::frame::FlowField::matching`] to bind them to a sequence.
pub fn read_flow(mut r: impl Read) -> Result<Vec<Vec<Vec3>>, IoError> {
    let read_u32 = |r: &mut dyn Read| -> Result<u32, IoError> {
        let mut buf = [0u8; 4];
        r.read_exact(&mut buf).map_err(|e| truncated(e))?;
        Ok(u32::from_le_bytes(buf))
    };
    let frames = read_u32(&mut r)?;
    let mut out = Vec::with_capacity(frames as usize);
    for _ in 0..frames {
        let count = read_u32(&mut r)? as usize;
        let mut bytes = vec![0u8; count * 12];
        r.read_exact(&mut bytes).map_err(truncated)?;
        let mut frame = Vec::with_capacity(count);
        for chunk in bytes.chunks_exact(12) {
            let x = f32::from_le_bytes(chunk[0..4].try_into().unwrap());
            let y = f32::from_le_bytes(chunk[4..8].try_into().unwrap());
            let z = f32::from_le_bytes(chunk[8..12].try_into().unwrap());
            frame.push(Vec3::new(x as Real, y as Real, z as Real));
        }
        out.push(frame);
    }
    Ok(out)
}

fn truncated(e: std::io::Error) -> IoError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        IoError::TruncatedFlow
    } else {
        IoError::Io(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::FlowField;
    use std::io::Cursor;

    #[test]
    fn flow_round_trips_at_f32_precision() {
        let flows = FlowField::new(vec![
            vec![Vec3::new(0.5, -1.25, 0.0), Vec3::new(3.0, 0.125, -2.0)],
            vec![Vec3::new(-0.75, 0.0, 1.5)],
        ]);
        let mut bytes = Vec::new();
        write_flow(&mut bytes, &flows).unwrap();
        assert_eq!(bytes.len(), 4 + (4 + 2 * 12) + (4 + 12));
        let back = read_flow(Cursor::new(&bytes)).unwrap();
        assert_eq!(back.len(), 2);
        // These components are f32-representable, so equality is exact.
        assert_eq!(back[0][1], Vec3::new(3.0, 0.125, -2.0));
        assert_eq!(back[1][0], Vec3::new(-0.75, 0.0, 1.5));
    }

    #[test]
    fn identical_flows_serialize_to_identical_bytes() {
        let flows = FlowField::new(vec![vec![Vec3::new(1.0, 2.0, 3.0); 5]]);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_flow(&mut a, &flows).unwrap();
        write_flow(&mut b, &flows).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truncation_is_reported() {
        let flows = FlowField::new(vec![vec![Vec3::new(1.0, 2.0, 3.0); 4]]);
        let mut bytes = Vec::new();
        write_flow(&mut bytes, &flows).unwrap();
        for cut in [2, 6, bytes.len() - 1] {
            assert!(matches!(
                read_flow(Cursor::new(&bytes[..cut])).unwrap_err(),
                IoError::TruncatedFlow
            ));
        }
    }

    #[test]
    fn empty_field_is_valid() {
        let flows = FlowField::new(vec![]);
        let mut bytes = Vec::new();
        write_flow(&mut bytes, &flows).unwrap();
        assert_eq!(bytes, vec![0, 0, 0, 0]);
        assert!(read_flow(Cursor::new(&bytes)).unwrap().is_empty());
    }
}
