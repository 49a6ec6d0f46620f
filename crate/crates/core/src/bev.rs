//! Bird's-eye-view meshgrid: discretization of the frontal ROI and per-cell
//! feature / label rasterization.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{LaneClass, PointCloud};

/// Region of interest and cell size of the BEV grid.
///
/// Intervals are half-open: `x ∈ [x_min, x_max)`, `y ∈ [y_min, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BevConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub cell_size: f64,
}

impl Default for BevConfig {
    /// 0–40 m ahead, ±15 m to the sides, 5 cm cells (800×600).
    fn default() -> Self {
        Self {
            x_min: 0.0,
            x_max: 40.0,
            y_min: -15.0,
            y_max: 15.0,
            cell_size: 0.05,
        }
    }
}

impl BevConfig {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.x_min, self.x_max, self.y_min, self.y_max, self.cell_size];
        if vals.iter().any(|v| !v.is_finite()) || self.cell_size <= 0.0 {
            return Err(Error::InvalidParams("BEV config must be finite with cell_size > 0".into()));
        }
        for (lo, hi) in [(self.x_min, self.x_max), (self.y_min, self.y_max)] {
            let n = (hi - lo) / self.cell_size;
            if hi <= lo || (n - n.round()).abs() > 1e-6 {
                return Err(Error::InvalidParams(format!(
                    "range [{lo}, {hi}) is not a whole number of {} m cells",
                    self.cell_size
                )));
            }
        }
        Ok(())
    }

    /// Number of rows (along x).
    pub fn rows(&self) -> usize {
        ((self.x_max - self.x_min) / self.cell_size).round() as usize
    }

    /// Number of columns (along y).
    pub fn cols(&self) -> usize {
        ((self.y_max - self.y_min) / self.cell_size).round() as usize
    }

    pub fn num_cells(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }

    /// Cell `(row, col)` containing `(x, y)`, or `None` outside the ROI.
    pub fn cell_index(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !self.contains(x, y) {
            return None;
        }
        // float division can round a value just below the upper bound onto it
        let row = (((x - self.x_min) / self.cell_size).floor() as usize).min(self.rows() - 1);
        let col = (((y - self.y_min) / self.cell_size).floor() as usize).min(self.cols() - 1);
        Some((row, col))
    }

    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.x_min + (row as f64 + 0.5) * self.cell_size,
            self.y_min + (col as f64 + 0.5) * self.cell_size,
        )
    }

    pub(crate) fn flat(&self, row: usize, col: usize) -> usize {
        row * self.cols() + col
    }
}

/// Free-function form of [`BevConfig::cell_index`].
pub fn cell_index(cfg: &BevConfig, x: f64, y: f64) -> Option<(usize, usize)> {
    cfg.cell_index(x, y)
}

/// Per-cell feature channels, row-major with row 0 at the `x_min` edge.
///
/// Empty cells hold zeros in every channel; `point_count == 0` marks them.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    pub config: BevConfig,
    pub max_intensity: Vec<f32>,
    pub max_height: Vec<f32>,
    pub min_height: Vec<f32>,
    pub point_count: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    MaxIntensity,
    MaxHeight,
    MinHeight,
    PointCount,
}

impl Channel {
    pub const ALL: [Channel; 4] = [
        Channel::MaxIntensity,
        Channel::MaxHeight,
        Channel::MinHeight,
        Channel::PointCount,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::MaxIntensity => "max_intensity",
            Channel::MaxHeight => "max_height",
            Channel::MinHeight => "min_height",
            Channel::PointCount => "point_count",
        }
    }
}

/// Height range mapped onto the 0..=255 gray levels of exported height images.
const HEIGHT_IMAGE_RANGE: (f32, f32) = (-1.0, 3.0);

impl BevGrid {
    pub fn empty(config: BevConfig) -> Self {
        let n = config.num_cells();
        Self {
            config,
            max_intensity: vec![0.0; n],
            max_height: vec![0.0; n],
            min_height: vec![0.0; n],
            point_count: vec![0; n],
        }
    }

    pub fn idx(&self, row: usize, col: usize) -> usize {
        self.config.flat(row, col)
    }

    /// 8-bit rendering of one channel, row-major.
    ///
    /// Intensity maps [0,1] to 0..=255, heights map [-1,3] m to 0..=255 (empty
    /// cells are 0), counts saturate at 255.
    pub fn channel_image(&self, channel: Channel) -> Vec<u8> {
        let (lo, hi) = HEIGHT_IMAGE_RANGE;
        let height = |h: f32, n: u32| {
            if n == 0 {
                0
            } else {
                (((h - lo) / (hi - lo)).clamp(0.0, 1.0) * 255.0).round() as u8
            }
        };
        match channel {
            Channel::MaxIntensity => self
                .max_intensity
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
                .collect(),
            Channel::MaxHeight => self
                .max_height
                .iter()
                .zip(&self.point_count)
                .map(|(&h, &n)| height(h, n))
                .collect(),
            Channel::MinHeight => self
                .min_height
                .iter()
                .zip(&self.point_count)
                .map(|(&h, &n)| height(h, n))
                .collect(),
            Channel::PointCount => self.point_count.iter().map(|&n| n.min(255) as u8).collect(),
        }
    }

    /// Writes one channel as a binary PGM (P5) image, `rows` high and `cols` wide.
    pub fn write_pgm(&self, channel: Channel, path: &Path) -> Result<()> {
        let pixels = self.channel_image(channel);
        let mut out = format!("P5\n{} {}\n255\n", self.config.cols(), self.config.rows()).into_bytes();
        out.extend_from_slice(&pixels);
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }
}

/// Projects a cloud onto the grid. Points outside the ROI are dropped.
pub fn rasterize_cloud(cfg: &BevConfig, pc: &PointCloud) -> BevGrid {
    let mut grid = BevGrid::empty(*cfg);
    for p in &pc.points {
        let Some((r, c)) = cfg.cell_index(p.x, p.y) else {
            continue;
        };
        let i = grid.idx(r, c);
        let (z, intensity) = (p.z as f32, p.intensity as f32);
        if grid.point_count[i] == 0 {
            grid.max_height[i] = z;
            grid.min_height[i] = z;
            grid.max_intensity[i] = intensity;
        } else {
            grid.max_height[i] = grid.max_height[i].max(z);
            grid.min_height[i] = grid.min_height[i].min(z);
            grid.max_intensity[i] = grid.max_intensity[i].max(intensity);
        }
        grid.point_count[i] += 1;
    }
    grid
}

/// Per-cell lane class, row-major with row 0 at the `x_min` edge.
#[derive(Debug, Clone, PartialEq)]
pub struct BevLabelGrid {
    pub config: BevConfig,
    pub labels: Vec<LaneClass>,
}

impl BevLabelGrid {
    pub fn background(config: BevConfig) -> Self {
        Self {
            config,
            labels: vec![LaneClass::Background; config.num_cells()],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> LaneClass {
        self.labels[self.config.flat(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, class: LaneClass) {
        let i = self.config.flat(row, col);
        self.labels[i] = class;
    }

    pub fn lane_cells(&self) -> usize {
        self.labels.iter().filter(|c| c.is_lane()).count()
    }

    pub fn same_shape(&self, other: &BevLabelGrid) -> Result<()> {
        let (r, c) = (self.config.rows(), self.config.cols());
        let (or, oc) = (other.config.rows(), other.config.cols());
        if self.config != other.config || self.labels.len() != other.labels.len() {
            return Err(Error::DimsMismatch {
                rows: r,
                cols: c,
                got_rows: or,
                got_cols: oc,
            });
        }
        Ok(())
    }
}

/// Rasterizes per-point labels. A cell takes the highest-priority class among
/// its points, Yellow over White over Background.
pub fn rasterize_labels(cfg: &BevConfig, pc: &PointCloud, labels: &[LaneClass]) -> Result<BevLabelGrid> {
    if labels.len() != pc.points.len() {
        return Err(Error::LengthMismatch {
            expected: pc.points.len(),
            got: labels.len(),
        });
    }
    let mut grid = BevLabelGrid::background(*cfg);
    for (p, &class) in pc.points.iter().zip(labels) {
        if let Some((r, c)) = cfg.cell_index(p.x, p.y) {
            let i = cfg.flat(r, c);
            // the numeric codes are ordered by priority
            grid.labels[i] = grid.labels[i].max(class);
        }
    }
    Ok(grid)
}
