//! Output formats: ASCII PLY clouds, PFM range images, 8- and 16-bit PGM.

use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use crate::emvs::PointCloud;
use crate::error::{Error, Result};
use crate::fusion::RangeImage;
use crate::segmentation::LabelMap;

/// Provenance mask values in `provenance.pgm`.
pub const MASK_EMPTY: u8 = 0;
pub const MASK_FILL: u8 = 128;
pub const MASK_EVENT: u8 = 255;

/// PLY tag for points without provenance.
const PLY_UNTAGGED: u8 = 255;

/// ASCII PLY with `x y z` floats and a `provenance` uchar
/// (0 event-derived, 1 fill-derived).
pub fn write_ply<W: Write>(mut w: W, cloud: &PointCloud) -> std::io::Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "comment provenance 0 = event-derived, 1 = fill-derived")?;
    writeln!(w, "element vertex {}", cloud.len())?;
    for axis in ["x", "y", "z"] {
        writeln!(w, "property float {axis}")?;
    }
    writeln!(w, "property uchar provenance")?;
    writeln!(w, "end_header")?;
    for p in &cloud.points {
        let tag = p.provenance.map_or(PLY_UNTAGGED, |p| p.code());
        writeln!(
            w,
            "{:.6} {:.6} {:.6} {}",
            p.position.x, p.position.y, p.position.z, tag
        )?;
    }
    Ok(())
}

/// Little-endian grayscale PFM. `values` is row-major top-down; PFM stores
/// rows bottom-up.
pub fn write_pfm<W: Write>(mut w: W, width: usize, height: usize, values: &[f32]) -> std::io::Result<()> {
    assert_eq!(values.len(), width * height);
    write!(w, "Pf\n{width} {height}\n-1.0\n")?;
    let mut row = Vec::with_capacity(width * 4);
    for y in (0..height).rev() {
        row.clear();
        for v in &values[y * width..(y + 1) * width] {
            row.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&row)?;
    }
    Ok(())
}

/// Reads a grayscale PFM back into row-major top-down order.
pub fn read_pfm<R: BufRead>(mut r: R) -> Result<(usize, usize, Vec<f32>)> {
    let bad = |msg: &str| Error::parse("pfm", 0, msg);
    let mut header = Vec::new();
    let mut lines = 0;
    while lines < 3 {
        let mut byte = [0u8];
        r.read_exact(&mut byte).map_err(|_| bad("truncated header"))?;
        if byte[0] == b'\n' {
            lines += 1;
        }
        header.push(byte[0]);
    }
    let header = String::from_utf8(header).map_err(|_| bad("non-text header"))?;
    let mut tokens = header.split_whitespace();
    if tokens.next() != Some("Pf") {
        return Err(bad("not a grayscale PFM"));
    }
    let width: usize = tokens.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("bad width"))?;
    let height: usize = tokens.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("bad height"))?;
    let scale: f64 = tokens.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("bad scale"))?;
    let mut bytes = vec![0u8; width * height * 4];
    r.read_exact(&mut bytes).map_err(|_| bad("truncated data"))?;
    let mut values = vec![0f32; width * height];
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if scale < 0.0 { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (x, y_up) = (i % width, i / width);
        values[(height - 1 - y_up) * width + x] = v;
    }
    Ok((width, height, values))
}

pub fn write_pgm8<W: Write>(mut w: W, width: usize, height: usize, values: &[u8]) -> std::io::Result<()> {
    assert_eq!(values.len(), width * height);
    write!(w, "P5\n{width} {height}\n255\n")?;
    w.write_all(values)
}

/// 16-bit binary PGM (big-endian samples, as the format requires).
pub fn write_pgm16<W: Write>(mut w: W, width: usize, height: usize, values: &[u16]) -> std::io::Result<()> {
    assert_eq!(values.len(), width * height);
    write!(w, "P5\n{width} {height}\n65535\n")?;
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_be_bytes()).collect();
    w.write_all(&bytes)
}

/// Depths of a range image, 0 where empty.
pub fn range_values(ri: &RangeImage) -> Vec<f32> {
    ri.cells().iter().map(|c| c.map_or(0.0, |(d, _)| d as f32)).collect()
}

pub fn provenance_mask(ri: &RangeImage) -> Vec<u8> {
    use crate::emvs::Provenance;
    ri.cells()
        .iter()
        .map(|c| match c {
            None => MASK_EMPTY,
            Some((_, Provenance::Event)) => MASK_EVENT,
            Some((_, Provenance::Fill)) => MASK_FILL,
        })
        .collect()
}

/// Region labels saturated to 16 bits.
pub fn label_values(lmap: &LabelMap) -> Vec<u16> {
    lmap.labels().iter().map(|&l| l.min(u16::MAX as u32) as u16).collect()
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Runs `f` on a buffered writer for `path`, flushing at the end.
pub fn write_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emvs::Provenance;
    use nalgebra::Vector3;

    #[test]
    fn ply_layout() {
        let mut cloud = PointCloud::default();
        cloud.push(Vector3::new(1.0, -2.5, 0.25), Some(Provenance::Event));
        cloud.push(Vector3::new(0.0, 0.0, 3.0), Some(Provenance::Fill));
        let mut buf = Vec::new();
        write_ply(&mut buf, &cloud).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("ply\nformat ascii 1.0\n"));
        assert!(text.contains("element vertex 2\n"));
        assert!(text.contains("property uchar provenance\nend_header\n"));
        assert!(text.ends_with("1.000000 -2.500000 0.250000 0\n0.000000 0.000000 3.000000 1\n"));
    }

    #[test]
    fn pfm_round_trip_and_row_order() {
        let values = vec![1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut buf = Vec::new();
        write_pfm(&mut buf, 3, 2, &values).unwrap();
        assert!(buf.starts_with(b"Pf\n3 2\n-1.0\n"));
        // First stored row is the bottom one.
        assert_eq!(&buf[12..16], &4.0f32.to_le_bytes());
        let (w, h, back) = read_pfm(&buf[..]).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(back, values);
    }

    #[test]
    fn pgm_headers() {
        let mut buf = Vec::new();
        write_pgm8(&mut buf, 2, 1, &[7, 9]).unwrap();
        assert_eq!(buf, b"P5\n2 1\n255\n\x07\x09");
        let mut buf = Vec::new();
        write_pgm16(&mut buf, 1, 1, &[0x0102]).unwrap();
        assert_eq!(buf, b"P5\n1 1\n65535\n\x01\x02");
    }

    #[test]
    fn pgm16_is_readable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.pgm");
        write_file(&path, |w| write_pgm16(w, 3, 2, &[0, 1, 2, 300, 4, 65535])).unwrap();
        let img = image::open(&path).unwrap().into_luma16();
        assert_eq!(img.into_raw(), vec![0, 1, 2, 300, 4, 65535]);
    }
}
