//! Library side of the `lanekit` command-line tool.
//!
//! Each subcommand is a plain function taking a resolved [`RunConfig`], so
//! the workflows can also be driven from tests or other programs.

pub mod commands;
pub mod config;
pub mod svg;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use lanekit_core::dataio::Split;
use lanekit_core::metrics::AggregationMode;

pub use commands::{
    cmd_evaluate, cmd_extract, cmd_rasterize, cmd_stats, cmd_synth, mask_path, prediction_path, CliError,
    ExtractSummary, FrameFailure, StatsOutput,
};
pub use config::{Overrides, RunConfig, SegmenterChoice};

#[derive(Debug, Parser)]
#[command(name = "lanekit", version, about = "LiDAR lane-line extraction and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reconstruct lane polylines for every frame.
    Extract {
        #[command(flatten)]
        common: CommonArgs,
        /// Trace manifest; repeat for several traces.
        #[arg(long = "manifest", required = true)]
        manifests: Vec<PathBuf>,
        /// `heuristic` or `external:<dir>`.
        #[arg(long)]
        segmenter: Option<SegmenterChoice>,
    },
    /// Score predictions against annotations.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long = "manifest", required = true)]
        manifests: Vec<PathBuf>,
        /// Directory written by `extract`.
        #[arg(long)]
        pred: PathBuf,
        /// Lateral match threshold in metres.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        agg: Option<AggregationMode>,
        /// Only score x <= max_x.
        #[arg(long)]
        max_x: Option<f64>,
        /// Stroke width in cells for the rasterized polyline metric.
        #[arg(long)]
        raster_width: Option<usize>,
    },
    /// Generate a synthetic trace.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        frames: Option<usize>,
        /// Forward motion per frame in metres.
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        trace_id: Option<String>,
        #[arg(long)]
        split: Option<Split>,
    },
    /// Dataset statistics, split checks and histogram plots.
    Stats {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long = "manifest", required = true)]
        manifests: Vec<PathBuf>,
    },
    /// Export BEV channels as PGM images.
    Rasterize {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        manifest: PathBuf,
        /// Frame id; all frames when omitted.
        #[arg(long)]
        frame: Option<String>,
        /// Number of preceding frames to fuse in.
        #[arg(long, default_value_t = 0)]
        fuse: usize,
    },
}

fn overrides(common: &CommonArgs) -> Overrides {
    Overrides {
        out: common.out.clone(),
        seed: common.seed,
        jobs: common.jobs,
        ..Overrides::default()
    }
}

fn resolve(common: &CommonArgs, o: Overrides) -> Result<RunConfig, CliError> {
    RunConfig::resolve(common.config.as_deref(), &o).map_err(CliError::Setup)
}

/// Runs a parsed command line. Normal output goes to stdout, diagnostics to stderr.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Extract {
            common,
            manifests,
            segmenter,
        } => {
            let cfg = resolve(&common, Overrides {
                segmenter,
                ..overrides(&common)
            })?;
            let s = cmd_extract(&cfg, &manifests)?;
            if s.files.is_empty() {
                eprintln!("warning: no frames extracted");
            }
            println!("wrote {} prediction file(s)", s.files.len());
        }
        Command::Evaluate {
            common,
            manifests,
            pred,
            tau,
            agg,
            max_x,
            raster_width,
        } => {
            let cfg = resolve(&common, Overrides {
                tau,
                agg,
                max_x,
                raster_width,
                ..overrides(&common)
            })?;
            let report = cmd_evaluate(&cfg, &manifests, &pred)?;
            print!("{}", report.to_text());
        }
        Command::Synth {
            common,
            frames,
            step,
            trace_id,
            split,
        } => {
            let mut cfg = resolve(&common, overrides(&common))?;
            if let Some(n) = frames {
                cfg.synth.frames = n;
            }
            if let Some(s) = step {
                cfg.synth.step = s;
            }
            if let Some(id) = trace_id {
                cfg.synth.trace_id = id;
            }
            if let Some(s) = split {
                cfg.synth.split = s;
            }
            let t = cmd_synth(&cfg)?;
            println!("wrote trace {} with {} frame(s) to {}", t.id(), t.frames().len(), t.dir.display());
        }
        Command::Stats { common, manifests } => {
            let cfg = resolve(&common, overrides(&common))?;
            let s = cmd_stats(&cfg, &manifests)?;
            print!("{}", commands::stats_text(&s));
        }
        Command::Rasterize {
            common,
            manifest,
            frame,
            fuse,
        } => {
            let cfg = resolve(&common, overrides(&common))?;
            let files = cmd_rasterize(&cfg, &manifest, frame.as_deref(), fuse)?;
            println!("wrote {} image(s)", files.len());
        }
    }
    Ok(())
}
