//! Shared domain types and elementary geometry.
//!
//! Coordinates are in the vehicle frame: x forward, y left, z up, all in meters.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Tolerance on orthonormality and determinant of a transform's rotation block.
pub const TRANSFORM_TOLERANCE: f64 = 1e-6;

/// Tolerance used when a query lands on the single x of a one-vertex polyline.
const SINGLE_VERTEX_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Reflectivity in [0, 1].
    pub intensity: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Self { x, y, z, intensity }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.intensity.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub frame_id: String,
    /// Microseconds.
    pub timestamp: u64,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Lane marking class. The numeric codes are part of every file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[repr(u8)]
pub enum LaneClass {
    #[default]
    Background = 0,
    White = 1,
    Yellow = 2,
}

impl LaneClass {
    pub const LANES: [LaneClass; 2] = [LaneClass::White, LaneClass::Yellow];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn is_lane(self) -> bool {
        self != LaneClass::Background
    }
}

impl TryFrom<u8> for LaneClass {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(LaneClass::Background),
            1 => Ok(LaneClass::White),
            2 => Ok(LaneClass::Yellow),
            other => Err(Error::InvalidLabelValue(other)),
        }
    }
}

impl Serialize for LaneClass {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.code())
    }
}

impl<'de> Deserialize<'de> for LaneClass {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = u8::deserialize(d)?;
        LaneClass::try_from(v).map_err(serde::de::Error::custom)
    }
}

/// A lane line as an ordered list of (x, y, z) vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline3D {
    #[serde(rename = "points")]
    pub vertices: Vec<[f64; 3]>,
    pub class: LaneClass,
}

impl Polyline3D {
    pub fn new(vertices: Vec<[f64; 3]>, class: LaneClass) -> Self {
        Self { vertices, class }
    }

    /// Checks the annotation rules: at least two finite vertices and a lane class.
    pub fn validate(&self) -> Result<()> {
        if self.vertices.len() < 2 {
            return Err(Error::TooFewVertices {
                needed: 2,
                got: self.vertices.len(),
            });
        }
        if !self.class.is_lane() {
            return Err(Error::InvalidLabelValue(self.class.code()));
        }
        if self.vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParams("non-finite polyline vertex".into()));
        }
        Ok(())
    }

    /// Projection onto the BEV plane (drops z).
    pub fn to_2d(&self) -> Polyline2D {
        Polyline2D {
            vertices: self.vertices.iter().map(|v| [v[0], v[1]]).collect(),
            class: self.class,
        }
    }
}

/// A lane line in the BEV plane. Most operations expect the canonical form
/// produced by [`canonicalize_polyline`]: x strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline2D {
    pub vertices: Vec<[f64; 2]>,
    pub class: LaneClass,
}

impl Polyline2D {
    pub fn new(vertices: Vec<[f64; 2]>, class: LaneClass) -> Self {
        Self { vertices, class }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Interpolation domain `[x_min, x_max]` of a canonical polyline.
    pub fn domain(&self) -> Option<(f64, f64)> {
        Some((self.vertices.first()?[0], self.vertices.last()?[0]))
    }

    pub fn is_canonical(&self) -> bool {
        !self.vertices.is_empty() && self.vertices.windows(2).all(|w| w[0][0] < w[1][0])
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| [v[0] + dx, v[1] + dy]).collect(),
            class: self.class,
        }
    }
}

/// Sorts vertices by x and merges vertices sharing an x by averaging their y.
pub fn canonicalize_polyline(p: &Polyline2D) -> Result<Polyline2D> {
    if p.vertices.is_empty() {
        return Err(Error::EmptyPolyline);
    }
    let mut sorted = p.vertices.clone();
    sorted.sort_by(|a, b| a[0].total_cmp(&b[0]));

    let mut out: Vec<[f64; 2]> = Vec::with_capacity(sorted.len());
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i][0];
        let mut j = i;
        let mut sum = 0.0;
        while j < sorted.len() && sorted[j][0] == x {
            sum += sorted[j][1];
            j += 1;
        }
        let n = j - i;
        let y = if n == 1 { sorted[i][1] } else { sum / n as f64 };
        out.push([x, y]);
        i = j;
    }
    Ok(Polyline2D {
        vertices: out,
        class: p.class,
    })
}

/// Linearly interpolated lateral position of a canonical polyline at `x`.
///
/// Returns `None` when `x` lies outside the polyline's domain. Exact vertex
/// positions return the vertex's own y.
pub fn interp_lateral(p: &Polyline2D, x: f64) -> Option<f64> {
    debug_assert!(p.is_canonical(), "interp_lateral expects a canonical polyline");
    let v = &p.vertices;
    let (first, last) = (v.first()?, v.last()?);
    if v.len() == 1 {
        return ((x - first[0]).abs() <= SINGLE_VERTEX_EPS).then_some(first[1]);
    }
    if !(x >= first[0] && x <= last[0]) {
        return None;
    }
    // first index whose x is >= query
    let hi = v.partition_point(|q| q[0] < x);
    if v[hi][0] == x {
        return Some(v[hi][1]);
    }
    let (a, b) = (v[hi - 1], v[hi]);
    let t = (x - a[0]) / (b[0] - a[0]);
    Some(a[1] + t * (b[1] - a[1]))
}

/// Straightness of a polyline as the absolute Pearson correlation of its
/// vertices' x and y coordinates.
///
/// An axis-aligned polyline (zero spread in x or y) is perfectly straight and
/// scores 1.0.
pub fn pearson_straightness(p: &Polyline3D) -> Result<f64> {
    let n = p.vertices.len();
    if n < 2 {
        return Err(Error::TooFewVertices { needed: 2, got: n });
    }
    let nf = n as f64;
    let mx = p.vertices.iter().map(|v| v[0]).sum::<f64>() / nf;
    let my = p.vertices.iter().map(|v| v[1]).sum::<f64>() / nf;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for v in &p.vertices {
        let dx = v[0] - mx;
        let dy = v[1] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let degenerate = |ss: f64, mean: f64, max_abs: f64| {
        let spread = (ss / nf).sqrt();
        spread <= 1e-12 * (1.0 + mean.abs().max(max_abs))
    };
    let max_x = p.vertices.iter().map(|v| v[0].abs()).fold(0.0, f64::max);
    let max_y = p.vertices.iter().map(|v| v[1].abs()).fold(0.0, f64::max);
    if degenerate(sxx, mx, max_x) || degenerate(syy, my, max_y) {
        return Ok(1.0);
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.abs().min(1.0))
}

/// Homogeneous 4x4 rigid transform, row-major, meters.
///
/// Construction validates the bottom row and that the rotation block is
/// orthonormal with determinant +1, so every value of this type is valid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(into = "[[f64; 4]; 4]")]
pub struct RigidTransform {
    m: [[f64; 4]; 4],
}

impl From<RigidTransform> for [[f64; 4]; 4] {
    fn from(t: RigidTransform) -> Self {
        t.m
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = <[[f64; 4]; 4]>::deserialize(d)?;
        RigidTransform::new(m).map_err(serde::de::Error::custom)
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(m: [[f64; 4]; 4]) -> Result<Self> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite entry".into()));
        }
        let bottom = [0.0, 0.0, 0.0, 1.0];
        if m[3].iter().zip(bottom).any(|(a, b)| (a - b).abs() > TRANSFORM_TOLERANCE) {
            return Err(Error::InvalidTransform(format!("bottom row {:?}", m[3])));
        }
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| m[i][k] * m[j][k]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot - expect).abs() > TRANSFORM_TOLERANCE {
                    return Err(Error::InvalidTransform(
                        "rotation block is not orthonormal".into(),
                    ));
                }
            }
        }
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        if (det - 1.0).abs() > TRANSFORM_TOLERANCE {
            return Err(Error::InvalidTransform(format!("determinant {det}")));
        }
        Ok(Self { m })
    }

    pub fn identity() -> Self {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self { m }
    }

    pub fn translation(x: f64, y: f64, z: f64) -> Self {
        let mut t = Self::identity();
        t.m[0][3] = x;
        t.m[1][3] = y;
        t.m[2][3] = z;
        t
    }

    /// Rotation by `angle` radians about the z axis.
    pub fn rotation_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let mut t = Self::identity();
        t.m[0][0] = c;
        t.m[0][1] = -s;
        t.m[1][0] = s;
        t.m[1][1] = c;
        t
    }

    pub fn matrix(&self) -> &[[f64; 4]; 4] {
        &self.m
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..4).map(|k| self.m[i][k] * other.m[k][j]).sum();
            }
        }
        RigidTransform { m }
    }

    pub fn inverse(&self) -> RigidTransform {
        let mut m = [[0.0; 4]; 4];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = self.m[j][i];
            }
        }
        for i in 0..3 {
            m[i][3] = -(0..3).map(|k| m[i][k] * self.m[k][3]).sum::<f64>();
        }
        m[3][3] = 1.0;
        RigidTransform { m }
    }

    pub fn apply_xyz(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.m;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + r[0][3],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + r[1][3],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + r[2][3],
        ]
    }

    pub fn apply_point(&self, p: &Point3) -> Point3 {
        let [x, y, z] = self.apply_xyz([p.x, p.y, p.z]);
        Point3 {
            x,
            y,
            z,
            intensity: p.intensity,
        }
    }
}

/// Applies `t` to every point of `pc`. Intensity, order and metadata are kept.
pub fn apply_transform(t: &RigidTransform, pc: &PointCloud) -> PointCloud {
    PointCloud {
        points: pc.points.iter().map(|p| t.apply_point(p)).collect(),
        frame_id: pc.frame_id.clone(),
        timestamp: pc.timestamp,
    }
}
