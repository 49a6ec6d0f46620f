//! Evaluation metrics for lane polylines.
//!
//! * [`iam`]: interpolation-aware matching F1 between polylines, with
//!   one-to-one assignment of lanes within a frame.
//! * [`raster`]: cell-wise F1 on segmentation grids and on rasterized
//!   polylines.
//! * [`report`]: per-trace and dataset aggregation.

mod hungarian;
pub mod iam;
pub mod raster;
pub mod report;

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

pub use hungarian::min_cost_assignment;
pub use iam::{
    clip_polyline_x, evaluate_frame, iam_match_pair, match_polyline_sets, pair_cost, Assignment,
    FrameEvaluation, MatchConfig, PairMatch, PointMatchRecord, Verdict,
};
pub use raster::{raster_polyline_f1, rasterize_polylines, segmentation_f1, LaneMask, SegmentationScores};
pub use report::{aggregate, AggregationMode, FrameRecord, Report, ReportRow, TraceRecord};

/// True positive / false negative / false positive tally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
}

impl MatchCounts {
    pub fn new(tp: u64, fn_: u64, fp: u64) -> Self {
        Self { tp, fn_, fp }
    }

    pub fn is_empty(&self) -> bool {
        self.tp == 0 && self.fn_ == 0 && self.fp == 0
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `2TP / (2TP + FP + FN)`, 0 when all counts are 0.
    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Add for MatchCounts {
    type Output = MatchCounts;

    fn add(self, o: MatchCounts) -> MatchCounts {
        MatchCounts::new(self.tp + o.tp, self.fn_ + o.fn_, self.fp + o.fp)
    }
}

impl AddAssign for MatchCounts {
    fn add_assign(&mut self, o: MatchCounts) {
        *self = *self + o;
    }
}

impl std::iter::Sum for MatchCounts {
    fn sum<I: Iterator<Item = MatchCounts>>(iter: I) -> Self {
        iter.fold(MatchCounts::default(), Add::add)
    }
}
