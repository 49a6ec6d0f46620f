//! The five workflows behind the `lanekit` subcommands.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::Context;
use lanekit_core::bev::{rasterize_cloud, rasterize_labels, BevLabelGrid, Channel};
use lanekit_core::dataio::{
    dataset_stats, fuse_frames, load_trace, read_polylines, validate_split, write_polylines, SplitReport,
    StatsReport, Trace,
};
use lanekit_core::extract::extract_lanes;
use lanekit_core::metrics::{
    aggregate, clip_polyline_x, evaluate_frame, raster_polyline_f1, segmentation_f1, FrameRecord, Report,
    TraceRecord,
};
use lanekit_core::segment::{load_external_mask, run_segmenter, write_external_mask};
use lanekit_core::synth::generate_trace;
use lanekit_core::{canonicalize_polyline, Polyline2D, Polyline3D};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, SegmenterChoice};
use crate::svg::bar_chart;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameFailure {
    pub trace: String,
    pub frame: String,
    pub error: String,
}

#[derive(Debug)]
pub enum CliError {
    /// Unusable manifest, config or arguments.
    Setup(anyhow::Error),
    /// Prediction files absent for annotated frames.
    MissingPredictions(Vec<PathBuf>),
    /// Some frames failed; the rest were processed.
    Frames(Vec<FrameFailure>),
    /// Anything else that stops the run after setup succeeded.
    Failed(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Setup(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Setup(e) | CliError::Failed(e) => write!(f, "{e:#}"),
            CliError::MissingPredictions(paths) => {
                write!(f, "missing predictions for {} frame(s):", paths.len())?;
                for p in paths {
                    write!(f, "\n  {}", p.display())?;
                }
                Ok(())
            }
            CliError::Frames(fails) => {
                write!(f, "{} frame(s) failed:", fails.len())?;
                for x in fails {
                    write!(f, "\n  {}/{}: {}", x.trace, x.frame, x.error)?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for CliError {}

pub type CmdResult<T> = Result<T, CliError>;

fn setup<T>(r: anyhow::Result<T>) -> CmdResult<T> {
    r.map_err(CliError::Setup)
}

fn failed<T, E: Into<anyhow::Error>>(r: Result<T, E>) -> CmdResult<T> {
    r.map_err(|e| CliError::Failed(e.into()))
}

pub fn load_traces(manifests: &[PathBuf]) -> CmdResult<Vec<Trace>> {
    manifests
        .iter()
        .map(|m| setup(load_trace(m).with_context(|| format!("loading manifest {}", m.display()))))
        .collect()
}

fn pool(jobs: Option<usize>) -> CmdResult<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n);
    }
    setup(b.build().context("starting worker threads"))
}

pub fn prediction_path(out: &Path, trace_id: &str, frame_id: &str) -> PathBuf {
    out.join(trace_id).join(format!("{frame_id}.polylines.json"))
}

pub fn mask_path(out: &Path, trace_id: &str, frame_id: &str) -> PathBuf {
    out.join(trace_id).join(format!("{frame_id}.lkm"))
}

/// Runs `f` over every frame of a trace on the pool. Results come back in
/// manifest order.
fn per_frame<T: Send>(
    pool: &rayon::ThreadPool,
    trace: &Trace,
    f: impl Fn(usize) -> anyhow::Result<T> + Sync,
) -> Vec<Result<T, FrameFailure>> {
    pool.install(|| {
        (0..trace.frames().len())
            .into_par_iter()
            .map(|i| {
                f(i).map_err(|e| FrameFailure {
                    trace: trace.id().to_string(),
                    frame: trace.frames()[i].frame_id.clone(),
                    error: format!("{e:#}"),
                })
            })
            .collect()
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceTiming {
    pub trace: String,
    pub frames: usize,
    pub total: Duration,
}

#[derive(Debug, Clone)]
pub struct ExtractSummary {
    pub files: Vec<PathBuf>,
    pub timing: Vec<TraceTiming>,
}

fn predict_mask(cfg: &RunConfig, trace: &Trace, idx: usize) -> anyhow::Result<BevLabelGrid> {
    let frame = &trace.frames()[idx];
    match &cfg.segmenter {
        SegmenterChoice::Heuristic => {
            let grid = rasterize_cloud(&cfg.bev, &trace.load_cloud(idx)?);
            Ok(run_segmenter(&cfg.heuristic, &grid)?)
        }
        SegmenterChoice::External(dir) => {
            let path = mask_path(dir, trace.id(), &frame.frame_id);
            Ok(load_external_mask(&path, &cfg.bev)?)
        }
    }
}

/// Segments and extracts every frame, writing
/// `<out>/<trace_id>/<frame_id>.polylines.json` plus the mask used.
pub fn cmd_extract(cfg: &RunConfig, manifests: &[PathBuf]) -> CmdResult<ExtractSummary> {
    let traces = load_traces(manifests)?;
    let out = setup(cfg.out_dir().map(Path::to_path_buf))?;
    let pool = pool(cfg.jobs)?;
    let mut files = Vec::new();
    let mut timing = Vec::new();
    let mut failures = Vec::new();
    for trace in &traces {
        if trace.frames().is_empty() {
            eprintln!("warning: trace {} has no frames", trace.id());
            continue;
        }
        let start = Instant::now();
        let results = per_frame(&pool, trace, |i| {
            let frame_id = &trace.frames()[i].frame_id;
            let mask = predict_mask(cfg, trace, i)?;
            let lanes = extract_lanes(&cfg.extract, &mask)?;
            let pred = prediction_path(&out, trace.id(), frame_id);
            write_polylines(&pred, &lanes)?;
            if cfg.segmenter == SegmenterChoice::Heuristic {
                write_external_mask(&mask_path(&out, trace.id(), frame_id), &mask)?;
            }
            Ok(pred)
        });
        let total = start.elapsed();
        for r in results {
            match r {
                Ok(p) => files.push(p),
                Err(f) => failures.push(f),
            }
        }
        let n = trace.frames().len();
        eprintln!(
            "{}: {n} frames in {:.3} s ({:.1} ms/frame)",
            trace.id(),
            total.as_secs_f64(),
            1e3 * total.as_secs_f64() / n as f64
        );
        timing.push(TraceTiming {
            trace: trace.id().to_string(),
            frames: n,
            total,
        });
    }
    if !failures.is_empty() {
        return Err(CliError::Frames(failures));
    }
    Ok(ExtractSummary { files, timing })
}

fn to_eval(p: &Polyline3D, lo: f64, hi: f64) -> anyhow::Result<Option<Polyline2D>> {
    let c = canonicalize_polyline(&p.to_2d())?;
    Ok(clip_polyline_x(&c, lo, hi))
}

fn frame_record(cfg: &RunConfig, trace: &Trace, idx: usize, pred_dir: &Path) -> anyhow::Result<Option<FrameRecord>> {
    let frame = &trace.frames()[idx];
    let Some(gt) = trace.load_polylines(idx)? else {
        return Ok(None);
    };
    let pred = read_polylines(&prediction_path(pred_dir, trace.id(), &frame.frame_id))?;
    let (lo, hi) = cfg.eval_x_range();
    let clip = |ps: &[Polyline3D]| -> anyhow::Result<Vec<Polyline2D>> {
        Ok(ps.iter().map(|p| to_eval(p, lo, hi)).collect::<anyhow::Result<Vec<_>>>()?.into_iter().flatten().collect())
    };
    let (gt, pred) = (clip(&gt)?, clip(&pred)?);
    let iam = evaluate_frame(&cfg.matching, &gt, &pred)?;
    let raster = raster_polyline_f1(&cfg.bev, &gt, &pred, cfg.evaluate.raster_width);

    let mask_file = mask_path(pred_dir, trace.id(), &frame.frame_id);
    let seg = match (&frame.labels_path, mask_file.is_file()) {
        (Some(_), true) => {
            let cloud = trace.load_cloud(idx)?;
            let labels = trace.load_labels(idx)?.unwrap_or_default();
            let oracle = rasterize_labels(&cfg.bev, &cloud, &labels)?;
            let mask = load_external_mask(&mask_file, &cfg.bev)?;
            Some(segmentation_f1(&oracle, &mask)?.lane)
        }
        _ => None,
    };
    Ok(Some(FrameRecord {
        frame_id: frame.frame_id.clone(),
        iam: iam.counts,
        raster,
        seg,
        vacuous: iam.vacuous,
    }))
}

/// Scores predictions under `pred_dir` against the manifests' annotations
/// and writes `report.txt` and `report.json` to the output directory.
pub fn cmd_evaluate(cfg: &RunConfig, manifests: &[PathBuf], pred_dir: &Path) -> CmdResult<Report> {
    let traces = load_traces(manifests)?;
    let out = setup(cfg.out_dir().map(Path::to_path_buf))?;
    let missing: Vec<PathBuf> = traces
        .iter()
        .flat_map(|t| {
            t.frames()
                .iter()
                .filter(|f| f.polylines_path.is_some())
                .map(|f| prediction_path(pred_dir, t.id(), &f.frame_id))
        })
        .filter(|p| !p.is_file())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::MissingPredictions(missing));
    }
    let pool = pool(cfg.jobs)?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for trace in &traces {
        let mut frames = Vec::new();
        for r in per_frame(&pool, trace, |i| frame_record(cfg, trace, i, pred_dir)) {
            match r {
                Ok(Some(f)) => frames.push(f),
                Ok(None) => {}
                Err(f) => failures.push(f),
            }
        }
        records.push(TraceRecord {
            name: trace.id().to_string(),
            frames,
        });
    }
    if !failures.is_empty() {
        return Err(CliError::Frames(failures));
    }
    let report = failed(aggregate(&records, cfg.agg))?;
    write_report(&report, &out)?;
    Ok(report)
}

pub fn write_report(report: &Report, out: &Path) -> CmdResult<()> {
    let mut json = failed(serde_json::to_string_pretty(report))?;
    json.push('\n');
    write_file(&out.join("report.json"), json.as_bytes())?;
    write_file(&out.join("report.txt"), report.to_text().as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> CmdResult<()> {
    if let Some(parent) = path.parent() {
        failed(std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display())))?;
    }
    failed(std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display())))
}

/// Generates a synthetic trace from `cfg.synth` into the output directory.
pub fn cmd_synth(cfg: &RunConfig) -> CmdResult<Trace> {
    let out = setup(cfg.out_dir().map(Path::to_path_buf))?;
    setup(cfg.synth.scene.validate().map_err(Into::into))?;
    failed(generate_trace(&cfg.synth, &out))
}

#[derive(Debug, Clone, Serialize)]
pub struct StatsOutput {
    pub stats: StatsReport,
    pub split: SplitReport,
}

/// Dataset statistics, split checks and histogram plots.
pub fn cmd_stats(cfg: &RunConfig, manifests: &[PathBuf]) -> CmdResult<StatsOutput> {
    let traces = load_traces(manifests)?;
    let out = setup(cfg.out_dir().map(Path::to_path_buf))?;
    let stats = failed(dataset_stats(&traces))?;
    let split = validate_split(traces.iter().map(|t| &t.manifest));

    let h = &stats.straightness;
    let labels: Vec<String> = (0..h.counts.len()).map(|i| format!("{:.2}", h.bin_range(i).0)).collect();
    write_file(
        &out.join("straightness.svg"),
        bar_chart("Polyline straightness |r|", "Pearson |r|", &labels, &h.counts).as_bytes(),
    )?;
    let labels: Vec<String> = (0..stats.lane_counts.len()).map(|i| i.to_string()).collect();
    write_file(
        &out.join("lane_counts.svg"),
        bar_chart("Lane lines per frame", "lane lines", &labels, &stats.lane_counts).as_bytes(),
    )?;

    let result = StatsOutput { stats, split };
    let mut json = failed(serde_json::to_string_pretty(&result))?;
    json.push('\n');
    write_file(&out.join("stats.json"), json.as_bytes())?;
    write_file(&out.join("stats.txt"), stats_text(&result).as_bytes())?;
    Ok(result)
}

pub fn stats_text(s: &StatsOutput) -> String {
    let st = &s.stats;
    let mut t = format!(
        "traces {}  frames {}  annotated {}  polylines {}\n\n{}",
        st.traces,
        st.frames,
        st.annotated_frames,
        st.polylines,
        st.attributes.to_text()
    );
    t.push_str("\nlane lines per frame\n");
    for (n, c) in st.lane_counts.iter().enumerate() {
        t.push_str(&format!("  {n:>3} {c}\n"));
    }
    t.push_str("\nsplits\n");
    for (split, n) in &s.split.counts {
        t.push_str(&format!("  {:<5} {n}\n", split.as_str()));
    }
    for f in &s.split.flags {
        t.push_str(&format!("  warning: {f}\n"));
    }
    t
}

/// Writes one PGM per BEV channel for the selected frames (all when `frame`
/// is `None`), optionally fusing `fuse` preceding frames first.
pub fn cmd_rasterize(
    cfg: &RunConfig,
    manifest: &Path,
    frame: Option<&str>,
    fuse: usize,
) -> CmdResult<Vec<PathBuf>> {
    let trace = load_traces(&[manifest.to_path_buf()])?.remove(0);
    let out = setup(cfg.out_dir().map(Path::to_path_buf))?;
    let indices: Vec<usize> = match frame {
        Some(id) => vec![setup(trace.frame_index(id).map_err(Into::into))?],
        None => (0..trace.frames().len()).collect(),
    };
    let mut files = Vec::new();
    for i in indices {
        let id = &trace.frames()[i].frame_id;
        let cloud = failed(fuse_frames(&trace, id, fuse))?;
        let grid = rasterize_cloud(&cfg.bev, &cloud);
        for ch in Channel::ALL {
            let path = out.join(trace.id()).join(format!("{id}.{}.pgm", ch.name()));
            failed(std::fs::create_dir_all(path.parent().unwrap()))?;
            failed(grid.write_pgm(ch, &path))?;
            files.push(path);
        }
    }
    Ok(files)
}
