//! Run configuration: TOML file merged with command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use lanekit_core::bev::BevConfig;
use lanekit_core::extract::ExtractParams;
use lanekit_core::metrics::{AggregationMode, MatchConfig};
use lanekit_core::segment::HeuristicSegmenterParams;
use lanekit_core::synth::TraceSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum SegmenterChoice {
    #[default]
    Heuristic,
    /// Masks at `<dir>/<trace_id>/<frame_id>.lkm`.
    External(PathBuf),
}

impl std::str::FromStr for SegmenterChoice {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        if s == "heuristic" {
            Ok(Self::Heuristic)
        } else if let Some(dir) = s.strip_prefix("external:") {
            if dir.is_empty() {
                bail!("external segmenter needs a directory: external:<dir>");
            }
            Ok(Self::External(dir.into()))
        } else {
            bail!("unknown segmenter {s:?}, expected heuristic or external:<dir>")
        }
    }
}

impl std::fmt::Display for SegmenterChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Heuristic => f.write_str("heuristic"),
            Self::External(d) => write!(f, "external:{}", d.display()),
        }
    }
}

impl Serialize for SegmenterChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SegmenterChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Stroke width in cells for the rasterized polyline metric.
    pub raster_width: usize,
    /// Upper x bound for scoring, on top of the BEV range.
    pub max_x: Option<f64>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            raster_width: 1,
            max_x: None,
        }
    }
}

/// Everything a subcommand may need. Every field has a default; a config
/// file only lists what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub bev: BevConfig,
    pub extract: ExtractParams,
    pub matching: MatchConfig,
    pub heuristic: HeuristicSegmenterParams,
    pub segmenter: SegmenterChoice,
    pub out: Option<PathBuf>,
    /// Worker threads; all cores when unset.
    pub jobs: Option<usize>,
    pub agg: AggregationMode,
    pub evaluate: EvalSettings,
    pub synth: TraceSpec,
}

/// Flag values that override the file. `None` leaves the file value alone.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub tau: Option<f64>,
    pub agg: Option<AggregationMode>,
    pub segmenter: Option<SegmenterChoice>,
    pub max_x: Option<f64>,
    pub raster_width: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// File (if any) then flags, later sources winning.
    pub fn resolve(path: Option<&Path>, flags: &Overrides) -> anyhow::Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply(flags);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.out {
            self.out = Some(v.clone());
        }
        if let Some(v) = o.seed {
            self.extract.rng_seed = v;
            self.synth.scene.seed = v;
        }
        if let Some(v) = o.jobs {
            self.jobs = Some(v);
        }
        if let Some(v) = o.tau {
            self.matching.tau = v;
        }
        if let Some(v) = o.agg {
            self.agg = v;
        }
        if let Some(v) = &o.segmenter {
            self.segmenter = v.clone();
        }
        if let Some(v) = o.max_x {
            self.evaluate.max_x = Some(v);
        }
        if let Some(v) = o.raster_width {
            self.evaluate.raster_width = v;
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.bev.validate()?;
        self.extract.validate()?;
        self.matching.validate()?;
        self.heuristic.validate()?;
        if self.jobs == Some(0) {
            bail!("jobs must be >= 1");
        }
        if self.evaluate.raster_width == 0 {
            bail!("raster_width must be >= 1");
        }
        if let Some(x) = self.evaluate.max_x {
            if !x.is_finite() {
                bail!("max_x must be finite");
            }
        }
        Ok(())
    }

    pub fn out_dir(&self) -> anyhow::Result<&Path> {
        self.out.as_deref().context("an output directory is required (--out)")
    }

    /// Scoring range along x.
    pub fn eval_x_range(&self) -> (f64, f64) {
        let hi = self.evaluate.max_x.map_or(self.bev.x_max, |m| m.min(self.bev.x_max));
        (self.bev.x_min, hi)
    }
}
