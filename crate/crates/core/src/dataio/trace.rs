//! Trace manifests, lazy frame access and multi-frame fusion.
//!
//! A trace directory holds `manifest.json` plus the payload files it names.
//! Payload paths are relative to the manifest's directory. Odometry is
//! stored per frame as the 4×4 transform taking this frame's coordinates into
//! the next frame's.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::formats::{read_cloud, read_labels, read_polylines, write};
use crate::error::{Error, Result};
use crate::geometry::{apply_transform, LaneClass, PointCloud, Polyline3D, RigidTransform};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidSplit(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoadType {
    City,
    Expressway,
    Highway,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weather {
    Sunny,
    Cloudy,
    Rainy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Traffic {
    Low,
    Mid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceAttributes {
    pub road_type: RoadType,
    pub weather: Weather,
    pub traffic: Traffic,
    pub roadwork: bool,
}

impl Default for TraceAttributes {
    fn default() -> Self {
        Self {
            road_type: RoadType::Highway,
            weather: Weather::Sunny,
            traffic: Traffic::Low,
            roadwork: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub frame_id: String,
    /// Microseconds.
    pub timestamp: u64,
    pub cloud_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polylines_path: Option<PathBuf>,
    /// Transform from this frame's coordinates into the next frame's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub odom_to_next: Option<RigidTransform>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceManifest {
    pub trace_id: String,
    pub split: Split,
    pub attributes: TraceAttributes,
    pub frames: Vec<FrameEntry>,
}

/// Serde mirror of the manifest with the split left as text so that a bad
/// value surfaces as `InvalidSplit` rather than a generic parse error.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    trace_id: String,
    split: String,
    attributes: TraceAttributes,
    #[serde(default)]
    frames: Vec<FrameEntry>,
}

impl TraceManifest {
    pub fn parse(bytes: &[u8], path: &Path) -> Result<Self> {
        let raw: RawManifest = serde_json::from_slice(bytes).map_err(|e| Error::parse(path, e))?;
        let m = TraceManifest {
            trace_id: raw.trace_id,
            split: raw.split.parse()?,
            attributes: raw.attributes,
            frames: raw.frames,
        };
        m.validate(path)?;
        Ok(m)
    }

    /// Frame ids unique, timestamps strictly increasing.
    pub fn validate(&self, path: &Path) -> Result<()> {
        let mut seen = HashSet::new();
        for f in &self.frames {
            if !seen.insert(f.frame_id.as_str()) {
                return Err(Error::parse(path, format!("duplicate frame id {}", f.frame_id)));
            }
        }
        if let Some(w) = self.frames.windows(2).find(|w| w[0].timestamp >= w[1].timestamp) {
            return Err(Error::parse(
                path,
                format!("frame {} is not after frame {}", w[1].frame_id, w[0].frame_id),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("manifest serializes");
        v.push(b'\n');
        v
    }
}

/// Per-frame annotations. Either part may be missing for a given frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameAnnotations {
    pub labels: Option<Vec<LaneClass>>,
    pub polylines: Option<Vec<Polyline3D>>,
}

/// A validated manifest bound to its directory. Payloads load on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub manifest: TraceManifest,
    pub dir: PathBuf,
}

impl Trace {
    pub fn new(manifest: TraceManifest, dir: impl Into<PathBuf>) -> Self {
        Self {
            manifest,
            dir: dir.into(),
        }
    }

    pub fn id(&self) -> &str {
        &self.manifest.trace_id
    }

    pub fn frames(&self) -> &[FrameEntry] {
        &self.manifest.frames
    }

    pub fn frame_index(&self, frame_id: &str) -> Result<usize> {
        self.manifest
            .frames
            .iter()
            .position(|f| f.frame_id == frame_id)
            .ok_or_else(|| Error::UnknownFrame(frame_id.to_string()))
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        self.dir.join(p)
    }

    pub fn load_cloud(&self, idx: usize) -> Result<PointCloud> {
        let f = &self.manifest.frames[idx];
        let mut pc = read_cloud(&self.resolve(&f.cloud_path))?;
        pc.frame_id = f.frame_id.clone();
        pc.timestamp = f.timestamp;
        Ok(pc)
    }

    /// Per-point labels, checked against the cloud's point count.
    pub fn load_labels(&self, idx: usize) -> Result<Option<Vec<LaneClass>>> {
        let f = &self.manifest.frames[idx];
        let Some(path) = &f.labels_path else {
            return Ok(None);
        };
        let labels = read_labels(&self.resolve(path))?;
        let points = self.load_cloud(idx)?.len();
        if labels.len() != points {
            return Err(Error::LabelCountMismatch {
                frame: f.frame_id.clone(),
                labels: labels.len(),
                points,
            });
        }
        Ok(Some(labels))
    }

    pub fn load_polylines(&self, idx: usize) -> Result<Option<Vec<Polyline3D>>> {
        match &self.manifest.frames[idx].polylines_path {
            Some(path) => read_polylines(&self.resolve(path)).map(Some),
            None => Ok(None),
        }
    }

    pub fn load_annotations(&self, idx: usize) -> Result<FrameAnnotations> {
        Ok(FrameAnnotations {
            labels: self.load_labels(idx)?,
            polylines: self.load_polylines(idx)?,
        })
    }

    /// Writes the manifest into `self.dir`. Payload files are written separately.
    pub fn write_manifest(&self) -> Result<PathBuf> {
        let path = self.dir.join(MANIFEST_FILE);
        write(&path, &self.manifest.to_json())?;
        Ok(path)
    }
}

/// Loads and validates a manifest. Accepts the manifest file or its directory.
pub fn load_trace(path: &Path) -> Result<Trace> {
    let file = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    let bytes = std::fs::read(&file).map_err(|e| Error::io(&file, e))?;
    let manifest = TraceManifest::parse(&bytes, &file)?;
    let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
    let trace = Trace::new(manifest, dir);
    for f in trace.frames() {
        let paths = [Some(&f.cloud_path), f.labels_path.as_ref(), f.polylines_path.as_ref()];
        for p in paths.into_iter().flatten() {
            let full = trace.resolve(p);
            if !full.is_file() {
                return Err(Error::MissingFile(full));
            }
        }
    }
    Ok(trace)
}

/// Transform taking frame `from` into frame `to` (`from <= to`), composed
/// from the per-step odometry links.
pub fn chain_transform(trace: &Trace, from: usize, to: usize) -> Result<RigidTransform> {
    let frames = trace.frames();
    let mut t = RigidTransform::identity();
    for f in &frames[from..to] {
        let step = f
            .odom_to_next
            .ok_or_else(|| Error::MissingOdometry(f.frame_id.clone()))?;
        t = step.compose(&t);
    }
    Ok(t)
}

/// Concatenates the center frame with its `k` predecessors, all expressed in
/// the center frame's coordinates. Oldest frame first.
pub fn fuse_frames(trace: &Trace, center_frame_id: &str, k: usize) -> Result<PointCloud> {
    let center = trace.frame_index(center_frame_id)?;
    if k > center {
        return Err(Error::UnknownFrame(format!(
            "{} frames before {center_frame_id}",
            k
        )));
    }
    let mut points = Vec::new();
    for i in center - k..center {
        let t = chain_transform(trace, i, center)?;
        points.extend(apply_transform(&t, &trace.load_cloud(i)?).points);
    }
    let mut out = trace.load_cloud(center)?;
    points.append(&mut out.points);
    out.points = points;
    Ok(out)
}

/// Extension point for third-party dataset layouts: convert whatever lives at
/// `source` into a canonical trace directory under `dest` and return the
/// manifest path.
pub trait DatasetAdapter {
    fn convert(&self, source: &Path, dest: &Path) -> Result<PathBuf>;
}
