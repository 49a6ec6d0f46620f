//! Dataset statistics and split checks.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::Serialize;

use super::trace::{RoadType, Split, Trace, TraceAttributes, TraceManifest, Traffic, Weather};
use crate::error::Result;
use crate::geometry::{pearson_straightness, Polyline3D};

pub const STRAIGHTNESS_BINS: usize = 20;

/// Fixed-width histogram over `[lo, hi]`. The upper edge falls in the last bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Self {
            lo,
            hi,
            counts: vec![0; bins],
        }
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    /// Values outside the range are clamped into the end bins.
    pub fn add(&mut self, v: f64) {
        let n = self.counts.len();
        let b = ((v - self.lo) / self.bin_width()).floor();
        let b = if b.is_nan() { 0 } else { (b.max(0.0) as usize).min(n - 1) };
        self.counts[b] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_range(&self, i: usize) -> (f64, f64) {
        let w = self.bin_width();
        (self.lo + w * i as f64, self.lo + w * (i + 1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttributeCell {
    pub label: String,
    pub count: usize,
}

impl AttributeCell {
    pub fn percent(&self, total: usize) -> f64 {
        if total == 0 {
            0.0
        } else {
            100.0 * self.count as f64 / total as f64
        }
    }

    /// `"24 (82.8%)"`.
    pub fn format(&self, total: usize) -> String {
        format!("{} ({:.1}%)", self.count, self.percent(total))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttributeGroup {
    pub name: String,
    pub cells: Vec<AttributeCell>,
}

/// Trace counts per scenario attribute value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttributeTable {
    pub total: usize,
    pub groups: Vec<AttributeGroup>,
}

impl AttributeTable {
    pub fn from_attributes<'a>(attrs: impl IntoIterator<Item = &'a TraceAttributes>) -> Self {
        let attrs: Vec<&TraceAttributes> = attrs.into_iter().collect();
        let count = |f: &dyn Fn(&TraceAttributes) -> bool| attrs.iter().filter(|a| f(a)).count();
        let group = |name: &str, cells: Vec<(&str, usize)>| AttributeGroup {
            name: name.into(),
            cells: cells
                .into_iter()
                .map(|(label, count)| AttributeCell {
                    label: label.into(),
                    count,
                })
                .collect(),
        };
        let groups = vec![
            group(
                "Road Type",
                vec![
                    ("City", count(&|a| a.road_type == RoadType::City)),
                    ("Expressway", count(&|a| a.road_type == RoadType::Expressway)),
                    ("Highway", count(&|a| a.road_type == RoadType::Highway)),
                ],
            ),
            group(
                "Weather Type",
                vec![
                    ("Sunny", count(&|a| a.weather == Weather::Sunny)),
                    ("Cloudy", count(&|a| a.weather == Weather::Cloudy)),
                    ("Rainy", count(&|a| a.weather == Weather::Rainy)),
                ],
            ),
            group(
                "Traffic Level",
                vec![
                    ("Mid-traffic", count(&|a| a.traffic == Traffic::Mid)),
                    ("Low-traffic", count(&|a| a.traffic == Traffic::Low)),
                ],
            ),
            group(
                "Roadwork",
                vec![
                    ("No const.", count(&|a| !a.roadwork)),
                    ("Const. zone", count(&|a| a.roadwork)),
                ],
            ),
        ];
        Self {
            total: attrs.len(),
            groups,
        }
    }

    pub fn cell(&self, label: &str) -> Option<&AttributeCell> {
        self.groups.iter().flat_map(|g| &g.cells).find(|c| c.label == label)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for g in &self.groups {
            let _ = writeln!(s, "{}", g.name);
            for c in &g.cells {
                let _ = writeln!(s, "  {:<12} {}", c.label, c.format(self.total));
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub traces: usize,
    pub frames: usize,
    /// Frames that carry a polyline annotation file.
    pub annotated_frames: usize,
    pub polylines: usize,
    pub straightness: Histogram,
    /// `lane_counts[n]` = number of annotated frames with `n` polylines.
    pub lane_counts: Vec<u64>,
    pub attributes: AttributeTable,
}

impl StatsReport {
    /// Most frequent lane count, ties to the smaller count.
    pub fn lane_count_peak(&self) -> Option<usize> {
        let max = *self.lane_counts.iter().max()?;
        (max > 0).then(|| self.lane_counts.iter().position(|&c| c == max).unwrap())
    }
}

/// Incremental statistics collector for callers that already hold the data.
#[derive(Debug, Clone)]
pub struct StatsBuilder {
    attrs: Vec<TraceAttributes>,
    frames: usize,
    annotated_frames: usize,
    polylines: usize,
    straightness: Histogram,
    lane_counts: Vec<u64>,
}

impl Default for StatsBuilder {
    fn default() -> Self {
        Self {
            attrs: Vec::new(),
            frames: 0,
            annotated_frames: 0,
            polylines: 0,
            straightness: Histogram::new(0.0, 1.0, STRAIGHTNESS_BINS),
            lane_counts: Vec::new(),
        }
    }
}

impl StatsBuilder {
    pub fn add_trace(&mut self, attrs: TraceAttributes) {
        self.attrs.push(attrs);
    }

    pub fn add_unannotated_frame(&mut self) {
        self.frames += 1;
    }

    pub fn add_frame(&mut self, polylines: &[Polyline3D]) {
        self.frames += 1;
        self.annotated_frames += 1;
        self.polylines += polylines.len();
        let n = polylines.len();
        if self.lane_counts.len() <= n {
            self.lane_counts.resize(n + 1, 0);
        }
        self.lane_counts[n] += 1;
        for p in polylines {
            if let Ok(r) = pearson_straightness(p) {
                self.straightness.add(r);
            }
        }
    }

    pub fn finish(self) -> StatsReport {
        StatsReport {
            traces: self.attrs.len(),
            frames: self.frames,
            annotated_frames: self.annotated_frames,
            polylines: self.polylines,
            straightness: self.straightness,
            lane_counts: self.lane_counts,
            attributes: AttributeTable::from_attributes(&self.attrs),
        }
    }
}

/// Loads every frame's polylines and summarizes the traces.
pub fn dataset_stats(traces: &[Trace]) -> Result<StatsReport> {
    let mut b = StatsBuilder::default();
    for t in traces {
        b.add_trace(t.manifest.attributes);
        for i in 0..t.frames().len() {
            match t.load_polylines(i)? {
                Some(p) => b.add_frame(&p),
                None => b.add_unannotated_frame(),
            }
        }
    }
    Ok(b.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RareAttribute {
    Rain,
    MidTraffic,
    Roadwork,
    City,
}

impl RareAttribute {
    pub const ALL: [RareAttribute; 4] = [Self::Rain, Self::MidTraffic, Self::Roadwork, Self::City];

    pub fn present(self, a: &TraceAttributes) -> bool {
        match self {
            Self::Rain => a.weather == Weather::Rainy,
            Self::MidTraffic => a.traffic == Traffic::Mid,
            Self::Roadwork => a.roadwork,
            Self::City => a.road_type == RoadType::City,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Rain => "rain",
            Self::MidTraffic => "mid-traffic",
            Self::Roadwork => "roadwork",
            Self::City => "city",
        }
    }
}

pub fn is_challenging(a: &TraceAttributes) -> bool {
    RareAttribute::ALL.iter().any(|r| r.present(a))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitFlag {
    EmptySplit { split: Split },
    MissingRareAttribute { split: Split, attribute: RareAttribute },
    /// Evaluation traces are expected to carry at least one rare attribute.
    UnchallengingTrace { split: Split, trace_id: String },
}

impl fmt::Display for SplitFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptySplit { split } => write!(f, "{} split has no traces", split.as_str()),
            Self::MissingRareAttribute { split, attribute } => write!(
                f,
                "{} split has no trace with {}",
                split.as_str(),
                attribute.name()
            ),
            Self::UnchallengingTrace { split, trace_id } => write!(
                f,
                "{} trace {trace_id} has no challenging condition",
                split.as_str()
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitReport {
    pub counts: BTreeMap<Split, usize>,
    pub flags: Vec<SplitFlag>,
}

impl SplitReport {
    pub fn passed(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn count(&self, split: Split) -> usize {
        self.counts.get(&split).copied().unwrap_or(0)
    }
}

/// Per-split trace counts plus stratification warnings. Empty splits are
/// flagged once and skip the attribute checks.
pub fn validate_split<'a>(manifests: impl IntoIterator<Item = &'a TraceManifest>) -> SplitReport {
    let manifests: Vec<&TraceManifest> = manifests.into_iter().collect();
    let mut counts = BTreeMap::new();
    let mut flags = Vec::new();
    for split in Split::ALL {
        let members: Vec<&&TraceManifest> = manifests.iter().filter(|m| m.split == split).collect();
        counts.insert(split, members.len());
        if members.is_empty() {
            flags.push(SplitFlag::EmptySplit { split });
            continue;
        }
        for attribute in RareAttribute::ALL {
            if !members.iter().any(|m| attribute.present(&m.attributes)) {
                flags.push(SplitFlag::MissingRareAttribute { split, attribute });
            }
        }
        if split != Split::Train {
            for m in members.iter().filter(|m| !is_challenging(&m.attributes)) {
                flags.push(SplitFlag::UnchallengingTrace {
                    split,
                    trace_id: m.trace_id.clone(),
                });
            }
        }
    }
    SplitReport { counts, flags }
}
