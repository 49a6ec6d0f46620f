//! Seeded synthetic scenes with exactly-known lane geometry.
//!
//! Ground returns are sampled uniformly over the scene rectangle. Each lane is
//! a painted stripe 15 cm wide around `y = f(x)`, with high intensity, where
//! `f` is a cubic. Dash patterns are laid out along x. All emitted values are
//! rounded to f32 so a cloud survives the binary format unchanged.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataio::formats::{write_cloud, write_labels, write_polylines};
use crate::dataio::trace::{FrameEntry, Split, Trace, TraceAttributes, TraceManifest};
use crate::error::{Error, Result};
use crate::extract::ransac::eval_poly;
use crate::geometry::{LaneClass, Point3, PointCloud, Polyline3D, RigidTransform};

/// Half-width of a painted marking.
pub const MARKING_HALF_WIDTH: f64 = 0.075;
/// Vertex spacing of truth polylines.
pub const TRUTH_STEP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gaussian {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LinePattern {
    Solid,
    /// Paint covers `x` where `(x - offset) mod (dash_len + gap_len) < dash_len`.
    Dashed {
        dash_len: f64,
        gap_len: f64,
        #[serde(default)]
        offset: f64,
    },
}

impl LinePattern {
    pub fn painted(&self, x: f64) -> bool {
        match *self {
            LinePattern::Solid => true,
            LinePattern::Dashed {
                dash_len,
                gap_len,
                offset,
            } => (x - offset).rem_euclid(dash_len + gap_len) < dash_len,
        }
    }

    /// Painted sub-intervals of `[lo, hi]`.
    pub fn intervals(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        match *self {
            LinePattern::Solid => vec![(lo, hi)],
            LinePattern::Dashed {
                dash_len,
                gap_len,
                offset,
            } => {
                let period = dash_len + gap_len;
                let mut start = offset + ((lo - offset) / period).floor() * period;
                let mut out = Vec::new();
                while start < hi {
                    let (a, b) = (start.max(lo), (start + dash_len).min(hi));
                    if a < b {
                        out.push((a, b));
                    }
                    start += period;
                }
                out
            }
        }
    }

    fn shifted(&self, dx: f64) -> LinePattern {
        match *self {
            LinePattern::Solid => LinePattern::Solid,
            LinePattern::Dashed {
                dash_len,
                gap_len,
                offset,
            } => LinePattern::Dashed {
                dash_len,
                gap_len,
                offset: offset - dx,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneSpec {
    /// `y = c0 + c1 x + c2 x² + c3 x³`.
    pub coeffs: [f64; 4],
    pub class: LaneClass,
    pub pattern: LinePattern,
}

impl LaneSpec {
    pub fn straight(y: f64, class: LaneClass, pattern: LinePattern) -> Self {
        Self {
            coeffs: [y, 0.0, 0.0, 0.0],
            class,
            pattern,
        }
    }

    pub fn lateral(&self, x: f64) -> f64 {
        eval_poly(&self.coeffs, x)
    }

    /// The same lane seen from a vehicle `dx` metres further along x.
    pub fn shifted(&self, dx: f64) -> LaneSpec {
        let [c0, c1, c2, c3] = self.coeffs;
        let coeffs = [
            c0 + dx * (c1 + dx * (c2 + dx * c3)),
            c1 + dx * (2.0 * c2 + 3.0 * c3 * dx),
            c2 + 3.0 * c3 * dx,
            c3,
        ];
        LaneSpec {
            coeffs,
            class: self.class,
            pattern: self.pattern.shifted(dx),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub lanes: Vec<LaneSpec>,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub road_intensity: Gaussian,
    pub paint_intensity: Gaussian,
    /// Ground returns per m². Paint stripes use the same density.
    pub density: f64,
    /// Gaussian lateral noise on paint points, truncated at 4σ.
    pub lateral_sigma: f64,
    /// Height noise on ground and paint points, truncated at 4σ.
    pub ground_z_sigma: f64,
    /// Fraction of emitted points removed uniformly at random.
    pub dropout: f64,
    /// Off-ground points at 0.5–3 m height.
    pub clutter: usize,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            lanes: Vec::new(),
            x_min: 0.0,
            x_max: 40.0,
            y_min: -15.0,
            y_max: 15.0,
            road_intensity: Gaussian { mean: 0.1, sd: 0.05 },
            paint_intensity: Gaussian { mean: 0.8, sd: 0.1 },
            density: 100.0,
            lateral_sigma: 0.0,
            ground_z_sigma: 0.0,
            dropout: 0.0,
            clutter: 0,
            seed: 0,
        }
    }
}

impl SceneSpec {
    /// A four-lane road: solid outer markings, dashed (3 m / 6 m) inner ones.
    pub fn highway() -> Self {
        let dashed = LinePattern::Dashed {
            dash_len: 3.0,
            gap_len: 6.0,
            offset: 0.0,
        };
        Self {
            lanes: vec![
                LaneSpec::straight(-5.25, LaneClass::White, LinePattern::Solid),
                LaneSpec::straight(-1.75, LaneClass::White, dashed),
                LaneSpec::straight(1.75, LaneClass::White, dashed),
                LaneSpec::straight(5.25, LaneClass::White, LinePattern::Solid),
            ],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        let finite = [
            self.x_min,
            self.x_max,
            self.y_min,
            self.y_max,
            self.density,
            self.lateral_sigma,
            self.ground_z_sigma,
            self.dropout,
            self.road_intensity.mean,
            self.road_intensity.sd,
            self.paint_intensity.mean,
            self.paint_intensity.sd,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("non-finite value".into());
        }
        if !(self.x_min < self.x_max && self.y_min < self.y_max) {
            return bad("empty scene extent".into());
        }
        if self.density < 0.0 {
            return bad(format!("density must be >= 0, got {}", self.density));
        }
        if self.lateral_sigma < 0.0 || self.ground_z_sigma < 0.0 {
            return bad("noise sigmas must be >= 0".into());
        }
        if self.road_intensity.sd < 0.0 || self.paint_intensity.sd < 0.0 {
            return bad("intensity sd must be >= 0".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        for (i, lane) in self.lanes.iter().enumerate() {
            if !lane.class.is_lane() {
                return bad(format!("lane {i} has background class"));
            }
            if lane.coeffs.iter().any(|c| !c.is_finite()) {
                return bad(format!("lane {i} has non-finite coefficients"));
            }
            if let LinePattern::Dashed {
                dash_len,
                gap_len,
                offset,
            } = lane.pattern
            {
                if !(dash_len > 0.0 && gap_len >= 0.0 && offset.is_finite()) {
                    return bad(format!("lane {i} has an invalid dash pattern"));
                }
            }
            let outside = truth_xs(self.x_min, self.x_max).into_iter().any(|x| {
                let y = lane.lateral(x);
                y - MARKING_HALF_WIDTH < self.y_min || y + MARKING_HALF_WIDTH >= self.y_max
            });
            if outside {
                return bad(format!("lane {i} leaves the lateral extent"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneTruth {
    /// One polyline per visible lane, vertices every 0.5 m on the generating curve.
    pub polylines: Vec<Polyline3D>,
    /// Class of every emitted point, aligned with the cloud.
    pub labels: Vec<LaneClass>,
}

fn q(v: f64) -> f64 {
    v as f32 as f64
}

fn truth_xs(lo: f64, hi: f64) -> Vec<f64> {
    let n = ((hi - lo) / TRUTH_STEP).floor() as usize;
    let mut xs: Vec<f64> = (0..=n).map(|i| lo + TRUTH_STEP * i as f64).collect();
    if hi - xs[n] > 1e-9 {
        xs.push(hi);
    }
    xs
}

fn truncated(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let n = Normal::new(0.0, sigma).unwrap();
    n.sample(rng).clamp(-4.0 * sigma, 4.0 * sigma)
}

fn intensity(rng: &mut ChaCha8Rng, g: Gaussian) -> f64 {
    let v = if g.sd == 0.0 {
        g.mean
    } else {
        Normal::new(g.mean, g.sd).unwrap().sample(rng)
    };
    v.clamp(0.0, 1.0)
}

fn count(density: f64, area: f64) -> usize {
    (density * area).round() as usize
}

/// Generates one scene. Deterministic in `spec.seed`.
pub fn generate_scene(spec: &SceneSpec) -> Result<(PointCloud, SceneTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (x0, x1, y0, y1) = (spec.x_min, spec.x_max, spec.y_min, spec.y_max);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let on_paint = |x: f64, y: f64| {
        spec.lanes
            .iter()
            .any(|l| l.pattern.painted(x) && (y - l.lateral(x)).abs() <= MARKING_HALF_WIDTH)
    };

    for _ in 0..count(spec.density, (x1 - x0) * (y1 - y0)) {
        let x = rng.random_range(x0..x1);
        let y = rng.random_range(y0..y1);
        let z = truncated(&mut rng, spec.ground_z_sigma);
        let i = intensity(&mut rng, spec.road_intensity);
        if !on_paint(x, y) {
            points.push(Point3::new(x, y, z, i));
            labels.push(LaneClass::Background);
        }
    }

    let mut polylines = Vec::new();
    for lane in &spec.lanes {
        let n = count(spec.density, 2.0 * MARKING_HALF_WIDTH * (x1 - x0));
        for _ in 0..n {
            let x = rng.random_range(x0..x1);
            let u = rng.random_range(-MARKING_HALF_WIDTH..=MARKING_HALF_WIDTH);
            let noise = truncated(&mut rng, spec.lateral_sigma);
            let z = truncated(&mut rng, spec.ground_z_sigma);
            let i = intensity(&mut rng, spec.paint_intensity);
            if lane.pattern.painted(x) {
                points.push(Point3::new(x, lane.lateral(x) + u + noise, z, i));
                labels.push(lane.class);
            }
        }
        let dashes = lane.pattern.intervals(x0, x1);
        if let (Some(first), Some(last)) = (dashes.first(), dashes.last()) {
            let xs = truth_xs(first.0, last.1);
            if xs.len() >= 2 {
                let v = xs.into_iter().map(|x| [x, lane.lateral(x), 0.0]).collect();
                polylines.push(Polyline3D::new(v, lane.class));
            }
        }
    }

    for _ in 0..spec.clutter {
        let x = rng.random_range(x0..x1);
        let y = rng.random_range(y0..y1);
        let z = rng.random_range(0.5..3.0);
        let i = rng.random_range(0.0..1.0);
        points.push(Point3::new(x, y, z, i));
        labels.push(LaneClass::Background);
    }

    if spec.dropout > 0.0 {
        let keep: Vec<bool> = (0..points.len()).map(|_| rng.random::<f64>() >= spec.dropout).collect();
        let mut k = keep.iter();
        points.retain(|_| *k.next().unwrap());
        let mut k = keep.iter();
        labels.retain(|_| *k.next().unwrap());
    }

    for p in &mut points {
        *p = Point3::new(q(p.x), q(p.y), q(p.z), q(p.intensity));
    }
    Ok((PointCloud::new(points), SceneTruth { polylines, labels }))
}

/// A trace of straight constant-speed forward motion through a fixed road.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSpec {
    pub trace_id: String,
    pub split: Split,
    pub attributes: TraceAttributes,
    /// Lane geometry in the first frame's coordinates; `seed` is the trace seed.
    pub scene: SceneSpec,
    pub frames: usize,
    /// Forward motion per frame in metres.
    pub step: f64,
    /// Microseconds between frames.
    pub frame_interval_us: u64,
}

impl Default for TraceSpec {
    fn default() -> Self {
        Self {
            trace_id: "synthetic".into(),
            split: Split::Train,
            attributes: TraceAttributes::default(),
            scene: SceneSpec::highway(),
            frames: 10,
            step: 1.0,
            frame_interval_us: 100_000,
        }
    }
}

impl TraceSpec {
    pub fn frame_id(i: usize) -> String {
        format!("{i:06}")
    }

    /// Scene of frame `i`, in that frame's coordinates.
    pub fn frame_scene(&self, i: usize) -> SceneSpec {
        let dx = self.step * i as f64;
        SceneSpec {
            lanes: self.scene.lanes.iter().map(|l| l.shifted(dx)).collect(),
            seed: frame_seed(self.scene.seed, i as u64),
            ..self.scene.clone()
        }
    }
}

/// Per-frame seed derived from the trace seed.
pub fn frame_seed(seed: u64, frame: u64) -> u64 {
    let mut z = seed ^ frame.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One generated frame, as written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedFrame {
    pub cloud: PointCloud,
    pub truth: SceneTruth,
}

/// Writes a complete trace (manifest, clouds, labels, truth polylines,
/// odometry) under `dir` and returns it loaded back.
pub fn generate_trace(spec: &TraceSpec, dir: &Path) -> Result<Trace> {
    let frames = generate_trace_frames(spec)?;
    write_trace(spec, &frames, dir)
}

/// In-memory counterpart of [`generate_trace`].
pub fn generate_trace_frames(spec: &TraceSpec) -> Result<Vec<GeneratedFrame>> {
    if spec.frames == 0 {
        return Err(Error::InvalidSpec("a trace needs at least one frame".into()));
    }
    if !spec.step.is_finite() {
        return Err(Error::InvalidSpec("step must be finite".into()));
    }
    (0..spec.frames)
        .map(|i| {
            let (mut cloud, truth) = generate_scene(&spec.frame_scene(i))?;
            cloud.frame_id = TraceSpec::frame_id(i);
            cloud.timestamp = spec.frame_interval_us * i as u64;
            Ok(GeneratedFrame { cloud, truth })
        })
        .collect()
}

pub fn write_trace(spec: &TraceSpec, frames: &[GeneratedFrame], dir: &Path) -> Result<Trace> {
    let rel = |sub: &str, id: &str, ext: &str| PathBuf::from(sub).join(format!("{id}.{ext}"));
    let mut entries = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        let id = f.cloud.frame_id.clone();
        let entry = FrameEntry {
            cloud_path: rel("clouds", &id, "lkc"),
            labels_path: Some(rel("labels", &id, "lkl")),
            polylines_path: Some(rel("polylines", &id, "json")),
            odom_to_next: (i + 1 < frames.len()).then(|| RigidTransform::translation(-spec.step, 0.0, 0.0)),
            frame_id: id,
            timestamp: f.cloud.timestamp,
        };
        write_cloud(&dir.join(&entry.cloud_path), &f.cloud)?;
        write_labels(&dir.join(entry.labels_path.as_ref().unwrap()), &f.truth.labels)?;
        write_polylines(&dir.join(entry.polylines_path.as_ref().unwrap()), &f.truth.polylines)?;
        entries.push(entry);
    }
    let trace = Trace::new(
        TraceManifest {
            trace_id: spec.trace_id.clone(),
            split: spec.split,
            attributes: spec.attributes,
            frames: entries,
        },
        dir,
    );
    trace.write_manifest()?;
    Ok(trace)
}

/// Random road with `n` roughly parallel lanes 3.5 m apart: gentle curvature,
/// solid outer markings and dashed inner ones.
pub fn random_lanes(rng: &mut impl Rng, n: usize) -> Vec<LaneSpec> {
    let c1 = rng.random_range(-0.02..0.02);
    let c2 = rng.random_range(-0.0015..0.0015);
    let c3 = rng.random_range(-2e-5..2e-5);
    let center = rng.random_range(-1.0..1.0);
    let (dash_len, gap_len) = if rng.random_bool(0.5) { (1.0, 2.0) } else { (3.0, 6.0) };
    (0..n)
        .map(|k| {
            let y = center + 3.5 * (k as f64 - (n as f64 - 1.0) / 2.0);
            let outer = k == 0 || k + 1 == n;
            LaneSpec {
                coeffs: [y, c1, c2, c3],
                class: LaneClass::White,
                pattern: if outer {
                    LinePattern::Solid
                } else {
                    LinePattern::Dashed {
                        dash_len,
                        gap_len,
                        offset: rng.random_range(0.0..dash_len + gap_len),
                    }
                },
            }
        })
        .collect()
}
