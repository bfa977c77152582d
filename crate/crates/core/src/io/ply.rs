//! PLY point clouds, ASCII and binary little-endian.
//!
//! Positions are stored as float32 along with the optional per-point
//! attributes this pipeline uses (intensity, foreground, dynamic,
//! instance). The reader takes properties in any declared order, skips
//! unknown scalar properties with a warning, and rejects what it cannot
//! size (list properties, unknown scalar types), since those would
//! corrupt every later byte offset.

use super::IoError;
use crate::{Real, Vec3};
use std::io::{BufRead, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Default)]
pub struct PlyCloud {
    pub points: Vec<Vec3>,
    pub intensity: Option<Vec<Real>>,
    pub foreground: Option<Vec<bool>>,
    pub dynamic: Option<Vec<bool>>,
    pub instance_ids: Option<Vec<u32>>,
    /// Timestamp index of the sweep each point came from, for merged clouds.
    pub source_frame: Option<Vec<u32>>,
}

pub fn write_ply(w: &mut impl Write, cloud: &PlyCloud, format: PlyFormat) -> Result<(), IoError> {
    let n = cloud.points.len();
    let check = |what: &'static str, len: Option<usize>| -> Result<(), IoError> {
        match len {
            Some(got) if got != n => Err(IoError::AttributeLength { what, got, expected: n }),
            _ => Ok(()),
        }
    };
    check("intensity", cloud.intensity.as_ref().map(Vec::len))?;
    check("foreground", cloud.foreground.as_ref().map(Vec::len))?;
    check("dynamic", cloud.dynamic.as_ref().map(Vec::len))?;
    check("instance", cloud.instance_ids.as_ref().map(Vec::len))?;
    check("source_frame", cloud.source_frame.as_ref().map(Vec::len))?;

    writeln!(w, "ply")?;
    match format {
        PlyFormat::Ascii => writeln!(w, "format ascii 1.0")?,
        PlyFormat::BinaryLittleEndian => writeln!(w, "format binary_little_endian 1.0")?,
    }
    writeln!(w, "element vertex {n}")?;
    writeln!(w, "property float x")?;
    writeln!(w, "property float y")?;
    writeln!(w, "property float z")?;
    if cloud.intensity.is_some() {
        writeln!(w, "property float intensity")?;
    }
    if cloud.foreground.is_some() {
        writeln!(w, "property uchar foreground")?;
    }
    if cloud.dynamic.is_some() {
        writeln!(w, "property uchar dynamic")?;
    }
    if cloud.instance_ids.is_some() {
        writeln!(w, "property uint instance")?;
    }
    if cloud.source_frame.is_some() {
        writeln!(w, "property uint source_frame")?;
    }
    writeln!(w, "end_header")?;

    for i in 0..n {
        let p = cloud.points[i].to_f32_array();
        match format {
            PlyFormat::Ascii => {
                write!(w, "{} {} {}", p[0], p[1], p[2])?;
                if let Some(intensity) = &cloud.intensity {
                    write!(w, " {}", intensity[i] as f32)?;
                }
                if let Some(fg) = &cloud.foreground {
                    write!(w, " {}", u8::from(fg[i]))?;
                }
                if let Some(dynamic) = &cloud.dynamic {
                    write!(w, " {}", u8::from(dynamic[i]))?;
                }
                if let Some(ids) = &cloud.instance_ids {
                    write!(w, " {}", ids[i])?;
                }
                if let Some(src) = &cloud.source_frame {
                    write!(w, " {}", src[i])?;
                }
                writeln!(w)?;
            }
            PlyFormat::BinaryLittleEndian => {
                for c in p {
                    w.write_all(&c.to_le_bytes())?;
                }
                if let Some(intensity) = &cloud.intensity {
                    w.write_all(&(intensity[i] as f32).to_le_bytes())?;
                }
                if let Some(fg) = &cloud.foreground {
                    w.write_all(&[u8::from(fg[i])])?;
                }
                if let Some(dynamic) = &cloud.dynamic {
                    w.write_all(&[u8::from(dynamic[i])])?;
                }
                if let Some(ids) = &cloud.instance_ids {
                    w.write_all(&ids[i].to_le_bytes())?;
                }
                if let Some(src) = &cloud.source_frame {
                    w.write_all(&src[i].to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn is_float(self) -> bool {
        matches!(self, Self::F32 | Self::F64)
    }

    fn decode(self, bytes: &[u8]) -> f64 {
        match self {
            Self::I8 => bytes[0] as i8 as f64,
            Self::U8 => bytes[0] as f64,
            Self::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Self::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Self::I32 => i32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(bytes[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Column {
    X,
    Y,
    Z,
    Intensity,
    Foreground,
    Dynamic,
    Instance,
    SourceFrame,
    Skip,
}

struct Header {
    format: PlyFormat,
    count: usize,
    columns: Vec<(Column, Scalar)>,
}

fn bad_header(line: usize, reason: impl Into<String>) -> IoError {
    IoError::MalformedHeader { line, reason: reason.into() }
}

fn read_header_line(
    r: &mut impl BufRead,
    line_no: &mut usize,
) -> Result<Option<String>, IoError> {
    let mut buf = String::new();
    if r.read_line(&mut buf)? == 0 {
        return Ok(None);
    }
    *line_no += 1;
    Ok(Some(buf.trim_end().to_string()))
}

fn parse_header(r: &mut impl BufRead) -> Result<Header, IoError> {
    let mut line_no = 0usize;

    match read_header_line(r, &mut line_no)? {
        Some(magic) if magic.trim() == "ply" => {}
        _ => return Err(bad_header(1, "file does not start with `ply`")),
    }

    let mut format = None;
    // (element name, count, columns); only `vertex` may carry rows.
    let mut elements: Vec<(String, usize, Vec<(Column, Scalar)>)> = Vec::new();
    loop {
        let line = match read_header_line(r, &mut line_no)? {
            Some(l) => l,
            None => return Err(bad_header(line_no, "header ended before end_header")),
        };
        let line = line.trim();
        let mut parts = line.split_whitespace();
        match parts.next() {
            None => continue,
            Some("comment") | Some("obj_info") => continue,
            Some("end_header") => break,
            Some("format") => {
                if format.is_some() {
                    return Err(bad_header(line_no, "duplicate format line"));
                }
                format = Some(match parts.next() {
                    Some("ascii") => PlyFormat::Ascii,
                    Some("binary_little_endian") => PlyFormat::BinaryLittleEndian,
                    Some(other) => {
                        return Err(bad_header(line_no, format!("unsupported format `{other}`")))
                    }
                    None => return Err(bad_header(line_no, "format line without a format")),
                });
            }
            Some("element") => {
                let name = parts
                    .next()
                    .ok_or_else(|| bad_header(line_no, "element without a name"))?;
                let count: usize = parts
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| bad_header(line_no, "element without a count"))?;
                elements.push((name.to_string(), count, Vec::new()));
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| bad_header(line_no, "property before any element"))?;
                let kind = parts
                    .next()
                    .ok_or_else(|| bad_header(line_no, "property without a type"))?;
                if kind == "list" {
                    let name = parts.last().unwrap_or("<unnamed>");
                    return Err(IoError::UnsupportedProperty { property: name.to_string() });
                }
                let scalar = Scalar::parse(kind)
                    .ok_or_else(|| bad_header(line_no, format!("unknown scalar `{kind}`")))?;
                let name = parts
                    .next()
                    .ok_or_else(|| bad_header(line_no, "property without a name"))?;
                let column = match name {
                    "x" => Column::X,
                    "y" => Column::Y,
                    "z" => Column::Z,
                    "intensity" => Column::Intensity,
                    "foreground" => Column::Foreground,
                    "dynamic" => Column::Dynamic,
                    "instance" => Column::Instance,
                    "source_frame" => Column::SourceFrame,
                    other => {
                        log::warn!("skipping unsupported ply property `{other}`");
                        Column::Skip
                    }
                };
                if matches!(column, Column::X | Column::Y | Column::Z | Column::Intensity)
                    && !scalar.is_float()
                {
                    return Err(bad_header(
                        line_no,
                        format!("property `{name}` must be float or double"),
                    ));
                }
                element.2.push((column, scalar));
            }
            Some(other) => {
                return Err(bad_header(line_no, format!("unrecognized directive `{other}`")))
            }
        }
    }
    let format = format.ok_or_else(|| bad_header(line_no, "missing format line"))?;

    let mut vertex = None;
    for (name, count, columns) in elements {
        if name == "vertex" {
            if vertex.is_some() {
                return Err(bad_header(line_no, "duplicate vertex element"));
            }
            vertex = Some((count, columns));
        } else if count > 0 {
            return Err(bad_header(
                line_no,
                format!("unsupported element `{name}` with {count} rows"),
            ));
        }
    }
    let (count, columns) = vertex.ok_or_else(|| bad_header(line_no, "missing vertex element"))?;
    for (needed, label) in [(Column::X, "x"), (Column::Y, "y"), (Column::Z, "z")] {
        if !columns.iter().any(|&(c, _)| c == needed) {
            return Err(bad_header(line_no, format!("missing coordinate property `{label}`")));
        }
    }
    Ok(Header { format, count, columns })
}

pub fn read_ply(mut r: impl BufRead) -> Result<PlyCloud, IoError> {
    let header = parse_header(&mut r)?;
    let cols = header.columns.len();
    let mut values = vec![0.0f64; header.count * cols];

    match header.format {
        PlyFormat::Ascii => {
            let mut body = String::new();
            r.read_to_string(&mut body)?;
            let mut tokens = body.split_whitespace();
            for row in 0..header.count {
                for (slot, &(_, scalar)) in header.columns.iter().enumerate() {
                    let token = match tokens.next() {
                        Some(t) => t,
                        None => {
                            return Err(IoError::TruncatedBody {
                                expected: header.count,
                                got: row,
                            });
                        }
                    };
                    let parsed = if scalar.is_float() {
                        token.parse::<f64>().ok()
                    } else {
                        token.parse::<i64>().ok().map(|v| v as f64)
                    };
                    match parsed {
                        Some(v) => values[row * cols + slot] = v,
                        None => {
                            return Err(IoError::MalformedRecord {
                                file: "ply body",
                                line: row + 1,
                                reason: format!("cannot parse `{token}`"),
                            });
                        }
                    }
                }
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let row_size: usize = header.columns.iter().map(|&(_, s)| s.size()).sum();
            let needed = header.count * row_size;
            let mut buf = Vec::with_capacity(needed);
            r.read_to_end(&mut buf)?;
            if buf.len() < needed {
                return Err(IoError::TruncatedBody {
                    expected: header.count,
                    got: if row_size == 0 { 0 } else { buf.len() / row_size },
                });
            }
            for row in 0..header.count {
                let mut offset = row * row_size;
                for (slot, &(_, scalar)) in header.columns.iter().enumerate() {
                    values[row * cols + slot] = scalar.decode(&buf[offset..]);
                    offset += scalar.size();
                }
            }
        }
    }

    let has = |c: Column| header.columns.iter().any(|&(col, _)| col == c);
    let column = |c: Column, row: usize| -> f64 {
        let slot = header.columns.iter().position(|&(col, _)| col == c).expect("checked");
        values[row * cols + slot]
    };
    let mut cloud = PlyCloud::default();
    cloud.points = (0..header.count)
        .map(|row| Vec3::new(column(Column::X, row), column(Column::Y, row), column(Column::Z, row)))
        .collect();
    if has(Column::Intensity) {
        cloud.intensity =
            Some((0..header.count).map(|row| column(Column::Intensity, row)).collect());
    }
    if has(Column::Foreground) {
        cloud.foreground =
            Some((0..header.count).map(|row| column(Column::Foreground, row) != 0.0).collect());
    }
    if has(Column::Dynamic) {
        cloud.dynamic =
            Some((0..header.count).map(|row| column(Column::Dynamic, row) != 0.0).collect());
    }
    if has(Column::Instance) {
        cloud.instance_ids =
            Some((0..header.count).map(|row| column(Column::Instance, row) as u32).collect());
    }
    if has(Column::SourceFrame) {
        cloud.source_frame =
            Some((0..header.count).map(|row| column(Column::SourceFrame, row) as u32).collect());
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn sample_cloud() -> PlyCloud {
        PlyCloud {
            points: vec![
                Vec3::new(1.5, -2.25, 0.125),
                Vec3::new(0.0, 10.0, -3.5),
                Vec3::new(7.75, 0.5, 2.0),
            ],
            intensity: Some(vec![0.5, 0.25, 1.0]),
            foreground: Some(vec![true, false, true]),
            dynamic: Some(vec![false, false, true]),
            instance_ids: Some(vec![4, 0, 4_000_000_000]),
            source_frame: Some(vec![1, 3, 2]),
        }
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let cloud = sample_cloud();
        let mut bytes = Vec::new();
        write_ply(&mut bytes, &cloud, PlyFormat::BinaryLittleEndian).unwrap();
        let back = read_ply(Cursor::new(bytes)).unwrap();
        // The sample coordinates are f32-representable, so equality holds.
        assert_eq!(back.points, cloud.points);
        assert_eq!(back.intensity, cloud.intensity);
        assert_eq!(back.foreground, cloud.foreground);
        assert_eq!(back.dynamic, cloud.dynamic);
        assert_eq!(back.instance_ids, cloud.instance_ids);
        assert_eq!(back.source_frame, cloud.source_frame);
    }

    #[test]
    fn ascii_round_trip_is_exact() {
        let cloud = sample_cloud();
        let mut bytes = Vec::new();
        write_ply(&mut bytes, &cloud, PlyFormat::Ascii).unwrap();
        let back = read_ply(Cursor::new(bytes)).unwrap();
        assert_eq!(back.points, cloud.points);
        assert_eq!(back.instance_ids, cloud.instance_ids);
        assert_eq!(back.source_frame, cloud.source_frame);
    }

    #[test]
    fn empty_cloud_round_trips() {
        let cloud = PlyCloud::default();
        for format in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
            let mut bytes = Vec::new();
            write_ply(&mut bytes, &cloud, format).unwrap();
            let back = read_ply(Cursor::new(bytes)).unwrap();
            assert!(back.points.is_empty());
            assert!(back.intensity.is_none());
        }
    }

    #[test]
    fn reader_handles_reordered_and_unknown_properties() {
        let text = "\
ply
format ascii 1.0
comment written elsewhere
element vertex 2
property float y
property double x
property float z
property uchar quality
end_header
1 2 3 9
4 5 6 8
";
        let cloud = read_ply(Cursor::new(text)).unwrap();
        assert_eq!(cloud.points[0], Vec3::new(2.0, 1.0, 3.0));
        assert_eq!(cloud.points[1], Vec3::new(5.0, 4.0, 6.0));
        assert!(cloud.intensity.is_none());
    }

    #[test]
    fn list_properties_are_rejected() {
        let text = "\
ply
format ascii 1.0
element vertex 1
property float x
property float y
property float z
property list uchar int neighbors
end_header
0 0 0
";
        match read_ply(Cursor::new(text)).unwrap_err() {
            IoError::UnsupportedProperty { property } => assert_eq!(property, "neighbors"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_errors_are_specific() {
        let unknown_scalar = "ply\nformat ascii 1.0\nelement vertex 1\nproperty half x\n";
        assert!(matches!(
            read_ply(Cursor::new(unknown_scalar)).unwrap_err(),
            IoError::MalformedHeader { .. }
        ));
        let not_ply = "pl_\nformat ascii 1.0\nend_header\n";
        assert!(matches!(
            read_ply(Cursor::new(not_ply)).unwrap_err(),
            IoError::MalformedHeader { line: 1, .. }
        ));
        let missing_z = "\
ply
format ascii 1.0
element vertex 1
property float x
property float y
end_header
0 0
";
        match read_ply(Cursor::new(missing_z)).unwrap_err() {
            IoError::MalformedHeader { reason, .. } => assert!(reason.contains("`z`")),
            other => panic!("unexpected {other:?}"),
        }
        let big_endian = "ply\nformat binary_big_endian 1.0\nend_header\n";
        assert!(matches!(
            read_ply(Cursor::new(big_endian)).unwrap_err(),
            IoError::MalformedHeader { .. }
        ));
        let int_coord = "\
ply
format ascii 1.0
element vertex 1
property int x
property float y
property float z
end_header
0 0 0
";
        assert!(matches!(
            read_ply(Cursor::new(int_coord)).unwrap_err(),
            IoError::MalformedHeader { .. }
        ));
    }

    #[test]
    fn foreign_elements_pass_only_when_empty() {
        let empty_face = "\
ply
format ascii 1.0
element vertex 1
property float x
property float y
property float z
element face 0
end_header
1 2 3
";
        assert_eq!(read_ply(Cursor::new(empty_face)).unwrap().points.len(), 1);
        let full_face = "\
ply
format ascii 1.0
element vertex 1
property float x
property float y
property float z
element face 2
end_header
1 2 3
";
        assert!(matches!(
            read_ply(Cursor::new(full_face)).unwrap_err(),
            IoError::MalformedHeader { .. }
        ));
    }

    #[test]
    fn truncation_is_detected_in_both_formats() {
        let cloud = sample_cloud();
        let mut ascii = Vec::new();
        write_ply(&mut ascii, &cloud, PlyFormat::Ascii).unwrap();
        let cut = ascii.len() - 20;
        match read_ply(Cursor::new(&ascii[..cut])).unwrap_err() {
            IoError::TruncatedBody { expected: 3, got } => assert!(got < 3),
            other => panic!("unexpected {other:?}"),
        }

        let mut binary = Vec::new();
        write_ply(&mut binary, &cloud, PlyFormat::BinaryLittleEndian).unwrap();
        let cut = binary.len() - 5;
        match read_ply(Cursor::new(&binary[..cut])).unwrap_err() {
            IoError::TruncatedBody { expected: 3, got } => assert_eq!(got, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn garbage_ascii_values_are_reported_with_their_row() {
        let text = "\
ply
format ascii 1.0
element vertex 2
property float x
property float y
property float z
end_header
0 0 0
1 oops 1
";
        match read_ply(Cursor::new(text)).unwrap_err() {
            IoError::MalformedRecord { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn writer_validates_attribute_lengths() {
        let mut cloud = sample_cloud();
        cloud.intensity = Some(vec![0.0]);
        let mut sink = Vec::new();
        assert!(matches!(
            write_ply(&mut sink, &cloud, PlyFormat::Ascii).unwrap_err(),
            IoError::AttributeLength { what: "intensity", got: 1, expected: 3 }
        ));
    }
}
