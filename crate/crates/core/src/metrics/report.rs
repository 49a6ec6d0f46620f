//! Per-trace and dataset-level aggregation of frame metrics.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::MatchCounts;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    /// Sum counts, then compute F1.
    #[default]
    Micro,
    /// Mean of per-frame F1 within a trace, mean of trace rows overall.
    Macro,
}

impl std::str::FromStr for AggregationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "micro" => Ok(Self::Micro),
            "macro" => Ok(Self::Macro),
            other => Err(Error::InvalidParams(format!("unknown aggregation mode {other:?}"))),
        }
    }
}

/// All metric counts for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: String,
    pub iam: MatchCounts,
    pub raster: MatchCounts,
    /// Absent when the frame has no point labels or no predicted mask.
    pub seg: Option<MatchCounts>,
    pub vacuous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub name: String,
    pub frames: Vec<FrameRecord>,
}

/// One line of the report. F1 values are `None` when there was nothing to score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub trace: String,
    pub seg_f1: Option<f64>,
    pub raster_f1: Option<f64>,
    pub iam_f1: Option<f64>,
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub mode: AggregationMode,
    pub rows: Vec<ReportRow>,
    pub average: ReportRow,
}

fn micro(counts: impl Iterator<Item = MatchCounts>) -> Option<f64> {
    let total: MatchCounts = counts.sum();
    (!total.is_empty()).then(|| total.f1())
}

fn mean(vals: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = vals.fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    (n > 0).then(|| s / n as f64)
}

fn trace_row(t: &TraceRecord, mode: AggregationMode) -> ReportRow {
    let iam: MatchCounts = t.frames.iter().map(|f| f.iam).sum();
    let (seg_f1, raster_f1, iam_f1) = match mode {
        AggregationMode::Micro => (
            micro(t.frames.iter().filter_map(|f| f.seg)),
            micro(t.frames.iter().map(|f| f.raster)),
            micro(t.frames.iter().map(|f| f.iam)),
        ),
        AggregationMode::Macro => (
            mean(t.frames.iter().filter_map(|f| f.seg).filter(|c| !c.is_empty()).map(|c| c.f1())),
            mean(t.frames.iter().map(|f| f.raster).filter(|c| !c.is_empty()).map(|c| c.f1())),
            mean(t.frames.iter().filter(|f| !f.vacuous).map(|f| f.iam.f1())),
        ),
    };
    ReportRow {
        trace: t.name.clone(),
        seg_f1,
        raster_f1,
        iam_f1,
        tp: iam.tp,
        fn_: iam.fn_,
        fp: iam.fp,
    }
}

/// Builds per-trace rows plus an `Average` row.
///
/// In micro mode the average row pools the counts of every frame; in macro
/// mode it is the mean of the trace rows.
pub fn aggregate(traces: &[TraceRecord], mode: AggregationMode) -> Result<Report> {
    if !traces.iter().flat_map(|t| &t.frames).any(|f| !f.vacuous) {
        return Err(Error::NoFrames);
    }
    let rows: Vec<ReportRow> = traces.iter().map(|t| trace_row(t, mode)).collect();
    let all = TraceRecord {
        name: "Average".into(),
        frames: traces.iter().flat_map(|t| t.frames.iter().cloned()).collect(),
    };
    let average = match mode {
        AggregationMode::Micro => trace_row(&all, mode),
        AggregationMode::Macro => {
            let pooled = trace_row(&all, AggregationMode::Micro);
            ReportRow {
                seg_f1: mean(rows.iter().filter_map(|r| r.seg_f1)),
                raster_f1: mean(rows.iter().filter_map(|r| r.raster_f1)),
                iam_f1: mean(rows.iter().filter_map(|r| r.iam_f1)),
                ..pooled
            }
        }
    };
    Ok(Report { mode, rows, average })
}

impl Report {
    /// Fixed-width table with F1 values rounded to 4 decimals.
    pub fn to_text(&self) -> String {
        let name_w = self
            .rows
            .iter()
            .map(|r| r.trace.len())
            .chain([self.average.trace.len(), "trace".len()])
            .max()
            .unwrap_or(5);
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<name_w$} | {:>12} | {:>19} | {:>15}",
            "trace", "Segmentation", "Polyline (meshgrid)", "Polyline (ours)"
        );
        let rule = format!("{}-+-{}-+-{}-+-{}", "-".repeat(name_w), "-".repeat(12), "-".repeat(19), "-".repeat(15));
        let _ = writeln!(s, "{rule}");
        let line = |s: &mut String, r: &ReportRow| {
            let _ = writeln!(
                s,
                "{:<name_w$} | {:>12} | {:>19} | {:>15}",
                r.trace,
                fmt(r.seg_f1),
                fmt(r.raster_f1),
                fmt(r.iam_f1)
            );
        };
        for r in &self.rows {
            line(&mut s, r);
        }
        let _ = writeln!(s, "{rule}");
        line(&mut s, &self.average);
        s
    }
}
