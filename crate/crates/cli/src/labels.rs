//! Instance labels on disk: one `frame t: id id ...` line per frame,
//! frame 1 first, 0 meaning background.

use anyhow::{bail, Context as _};
use std::io::Write;

pub fn write_labels(w: &mut impl Write, frames: &[Vec<u32>]) -> std::io::Result<()> {
    writeln!(w, "# instance labels per frame, 0 = background")?;
    for (i, ids) in frames.iter().enumerate() {
        write!(w, "frame {}:", i + 1)?;
        for id in ids {
            write!(w, " {id}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_labels(text: &str) -> anyhow::Result<Vec<Vec<u32>>> {
    let mut frames: Vec<Vec<u32>> = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let no = no + 1;
        let (head, rest) =
            line.split_once(':').with_context(|| format!("labels line {no}: missing `:`"))?;
        let frame: usize = head
            .strip_prefix("frame")
            .and_then(|f| f.trim().parse().ok())
            .with_context(|| format!("labels line {no}: expected `frame <index>:`"))?;
        if frame != frames.len() + 1 {
            bail!("labels line {no}: expected frame {}, got {frame}", frames.len() + 1);
        }
        let ids = rest
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<Vec<u32>, _>>()
            .with_context(|| format!("labels line {no}: ids must be non-negative integers"))?;
        frames.push(ids);
    }
    if frames.is_empty() {
        bail!("label file contains no frames");
    }
    Ok(frames)
}
