//! Cell-wise metrics: segmentation F1 and rasterized polyline F1.

use serde::{Deserialize, Serialize};

use super::MatchCounts;
use crate::bev::{BevConfig, BevLabelGrid};
use crate::error::Result;
use crate::geometry::{LaneClass, Polyline2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SegmentationScores {
    /// Any lane class vs background.
    pub lane: MatchCounts,
    pub white: MatchCounts,
    pub yellow: MatchCounts,
}

impl SegmentationScores {
    pub fn f1(&self) -> f64 {
        self.lane.f1()
    }
}

fn cell_counts(gt: impl Iterator<Item = bool>, pred: impl Iterator<Item = bool>) -> MatchCounts {
    let mut c = MatchCounts::default();
    for (g, p) in gt.zip(pred) {
        match (g, p) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => {}
        }
    }
    c
}

pub fn segmentation_f1(gt: &BevLabelGrid, pred: &BevLabelGrid) -> Result<SegmentationScores> {
    gt.same_shape(pred)?;
    let per_class = |class: LaneClass| {
        cell_counts(
            gt.labels.iter().map(|&c| c == class),
            pred.labels.iter().map(|&c| c == class),
        )
    };
    Ok(SegmentationScores {
        lane: cell_counts(
            gt.labels.iter().map(|c| c.is_lane()),
            pred.labels.iter().map(|c| c.is_lane()),
        ),
        white: per_class(LaneClass::White),
        yellow: per_class(LaneClass::Yellow),
    })
}

/// Binary lane/background occupancy over the BEV grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneMask {
    pub config: BevConfig,
    pub cells: Vec<bool>,
}

impl LaneMask {
    pub fn empty(config: BevConfig) -> Self {
        Self {
            config,
            cells: vec![false; config.num_cells()],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[self.config.flat(row, col)]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    fn mark(&mut self, row: usize, col: usize) {
        let i = self.config.flat(row, col);
        self.cells[i] = true;
    }

    /// Square dilation with the given radius in cells.
    pub fn dilate(&self, radius: usize) -> LaneMask {
        if radius == 0 {
            return self.clone();
        }
        let (rows, cols) = (self.config.rows(), self.config.cols());
        let mut out = LaneMask::empty(self.config);
        for r in 0..rows {
            for c in 0..cols {
                if !self.get(r, c) {
                    continue;
                }
                for rr in r.saturating_sub(radius)..=(r + radius).min(rows - 1) {
                    for cc in c.saturating_sub(radius)..=(c + radius).min(cols - 1) {
                        out.mark(rr, cc);
                    }
                }
            }
        }
        out
    }
}

/// Clips a segment to the closed ROI rectangle (Liang–Barsky). Returns the
/// parameter interval kept.
fn clip_segment(cfg: &BevConfig, a: [f64; 2], b: [f64; 2]) -> Option<(f64, f64)> {
    let d = [b[0] - a[0], b[1] - a[1]];
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    let checks = [
        (-d[0], a[0] - cfg.x_min),
        (d[0], cfg.x_max - a[0]),
        (-d[1], a[1] - cfg.y_min),
        (d[1], cfg.y_max - a[1]),
    ];
    for (p, q) in checks {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    (t0 <= t1).then_some((t0, t1))
}

/// Marks every cell the segment a→b passes through (grid traversal in the
/// style of Amanatides & Woo). Endpoints on the far ROI edge map to the last
/// row/column.
fn traverse(mask: &mut LaneMask, a: [f64; 2], b: [f64; 2]) {
    let cfg = mask.config;
    let (rows, cols) = (cfg.rows() as i64, cfg.cols() as i64);
    let u0 = (a[0] - cfg.x_min) / cfg.cell_size;
    let v0 = (a[1] - cfg.y_min) / cfg.cell_size;
    let u1 = (b[0] - cfg.x_min) / cfg.cell_size;
    let v1 = (b[1] - cfg.y_min) / cfg.cell_size;
    let cell = |u: f64, max: i64| (u.floor() as i64).clamp(0, max - 1);
    let (mut r, mut c) = (cell(u0, rows), cell(v0, cols));
    let (re, ce) = (cell(u1, rows), cell(v1, cols));

    let axis = |start: f64, d: f64, idx: i64| -> (i64, f64, f64) {
        if d > 0.0 {
            (1, ((idx + 1) as f64 - start) / d, 1.0 / d)
        } else if d < 0.0 {
            (-1, (start - idx as f64) / -d, -1.0 / d)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (step_r, mut t_r, dt_r) = axis(u0, u1 - u0, r);
    let (step_c, mut t_c, dt_c) = axis(v0, v1 - v0, c);

    mask.mark(r as usize, c as usize);
    let steps = (re - r).abs() + (ce - c).abs();
    for _ in 0..steps {
        let move_row = if r == re {
            false
        } else if c == ce {
            true
        } else {
            t_r < t_c
        };
        if move_row {
            r += if step_r != 0 { step_r } else { (re - r).signum() };
            t_r += dt_r;
        } else {
            c += if step_c != 0 { step_c } else { (ce - c).signum() };
            t_c += dt_c;
        }
        mask.mark(r as usize, c as usize);
    }
}

/// Rasterizes polylines (vertex order as given) into a lane mask of
/// `width_cells` thickness. Parts outside the ROI are clipped away.
pub fn rasterize_polylines(cfg: &BevConfig, polylines: &[Polyline2D], width_cells: usize) -> LaneMask {
    let mut mask = LaneMask::empty(*cfg);
    for p in polylines {
        let v = &p.vertices;
        if v.len() == 1 {
            if let Some((r, c)) = cfg.cell_index(v[0][0], v[0][1]) {
                mask.mark(r, c);
            }
        }
        for w in v.windows(2) {
            let (a, b) = (w[0], w[1]);
            let Some((t0, t1)) = clip_segment(cfg, a, b) else {
                continue;
            };
            let at = |t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let (ca, cb) = (
                if t0 == 0.0 { a } else { at(t0) },
                if t1 == 1.0 { b } else { at(t1) },
            );
            traverse(&mut mask, ca, cb);
        }
    }
    mask.dilate(width_cells.max(1).saturating_sub(1) / 2)
}

pub fn raster_polyline_f1(
    cfg: &BevConfig,
    gt: &[Polyline2D],
    pred: &[Polyline2D],
    width_cells: usize,
) -> MatchCounts {
    let g = rasterize_polylines(cfg, gt, width_cells);
    let p = rasterize_polylines(cfg, pred, width_cells);
    cell_counts(g.cells.iter().copied(), p.cells.iter().copied())
}
