//! On-disk payload formats.
//!
//! * Point cloud: `LKC1`, u32 LE point count, then per point four f32 LE
//!   values `x, y, z, intensity`.
//! * Point labels: `LKL1`, u32 LE count, then one class byte per point.
//! * Polylines: JSON array of `{"class": 1|2, "points": [[x, y, z], ...]}`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{LaneClass, Point3, PointCloud, Polyline3D};

pub const CLOUD_MAGIC: &[u8; 4] = b"LKC1";
pub const LABELS_MAGIC: &[u8; 4] = b"LKL1";

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn header<'a>(bytes: &'a [u8], magic: &[u8; 4], path: &Path) -> Result<(usize, &'a [u8])> {
    if bytes.len() < 8 || &bytes[..4] != magic {
        return Err(Error::parse(
            path,
            format!("missing {} header", String::from_utf8_lossy(magic)),
        ));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    Ok((n, &bytes[8..]))
}

/// Values are stored as f32; f64 coordinates are narrowed on write.
pub fn encode_cloud(pc: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 16 * pc.len());
    out.extend_from_slice(CLOUD_MAGIC);
    out.extend_from_slice(&(pc.len() as u32).to_le_bytes());
    for p in &pc.points {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_cloud(bytes: &[u8], path: &Path) -> Result<PointCloud> {
    let (n, body) = header(bytes, CLOUD_MAGIC, path)?;
    if body.len() != n * 16 {
        return Err(Error::parse(
            path,
            format!("{n} points need {} bytes, found {}", n * 16, body.len()),
        ));
    }
    let points = body
        .chunks_exact(16)
        .map(|c| {
            let f = |i: usize| f32::from_le_bytes(c[4 * i..4 * i + 4].try_into().unwrap()) as f64;
            Point3::new(f(0), f(1), f(2), f(3))
        })
        .collect::<Vec<_>>();
    if let Some(i) = points.iter().position(|p| !p.is_finite()) {
        return Err(Error::parse(path, format!("point {i} is not finite")));
    }
    Ok(PointCloud::new(points))
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    decode_cloud(&read(path)?, path)
}

pub fn write_cloud(path: &Path, pc: &PointCloud) -> Result<()> {
    write(path, &encode_cloud(pc))
}

pub fn encode_labels(labels: &[LaneClass]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(LABELS_MAGIC);
    out.extend_from_slice(&(labels.len() as u32).to_le_bytes());
    out.extend(labels.iter().map(|c| c.code()));
    out
}

pub fn decode_labels(bytes: &[u8], path: &Path) -> Result<Vec<LaneClass>> {
    let (n, body) = header(bytes, LABELS_MAGIC, path)?;
    if body.len() != n {
        return Err(Error::parse(path, format!("expected {n} labels, found {}", body.len())));
    }
    body.iter().map(|&b| LaneClass::try_from(b)).collect()
}

pub fn read_labels(path: &Path) -> Result<Vec<LaneClass>> {
    decode_labels(&read(path)?, path)
}

pub fn write_labels(path: &Path, labels: &[LaneClass]) -> Result<()> {
    write(path, &encode_labels(labels))
}

pub fn encode_polylines(polylines: &[Polyline3D]) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(polylines).expect("polylines serialize");
    v.push(b'\n');
    v
}

/// Parses and validates a polyline file. Annotations outside the BEV ROI are kept.
pub fn read_polylines(path: &Path) -> Result<Vec<Polyline3D>> {
    let polylines: Vec<Polyline3D> =
        serde_json::from_slice(&read(path)?).map_err(|e| Error::parse(path, e))?;
    for (i, p) in polylines.iter().enumerate() {
        p.validate()
            .map_err(|e| Error::parse(path, format!("polyline {i}: {e}")))?;
    }
    Ok(polylines)
}

pub fn write_polylines(path: &Path, polylines: &[Polyline3D]) -> Result<()> {
    write(path, &encode_polylines(polylines))
}
