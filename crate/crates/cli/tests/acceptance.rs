//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use lanekit_cli::{cmd_evaluate, cmd_extract, cmd_stats, prediction_path, RunConfig};
use lanekit_core::dataio::{
    encode_cloud, fuse_frames, load_trace, validate_split, write_polylines, Split, Trace, TraceAttributes,
    TraceManifest,
};
use lanekit_core::dataio::{RoadType, Traffic, Weather};
use lanekit_core::extract::{core_points, dbscan, ransac_poly_fit, RansacParams};
use lanekit_core::metrics::{iam_match_pair, raster_polyline_f1, MatchConfig, MatchCounts};
use lanekit_core::synth::{generate_trace, generate_trace_frames, random_lanes, SceneSpec, TraceSpec};
use lanekit_core::{LaneClass, Polyline2D, Polyline3D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn poly(v: &[(f64, f64)]) -> Polyline2D {
    Polyline2D::new(v.iter().map(|&(x, y)| [x, y]).collect(), LaneClass::White)
}

fn tau(t: f64) -> MatchConfig {
    MatchConfig { tau: t }
}

fn pair(cfg: &MatchConfig, g: &Polyline2D, p: &Polyline2D) -> MatchCounts {
    iam_match_pair(cfg, g, p).unwrap().counts
}

/// Strictly increasing x on a 1/64 m lattice, lateral values on a 1/1024 m lattice.
fn random_polyline(rng: &mut impl Rng) -> Polyline2D {
    let n = rng.random_range(2..=30);
    let mut x = rng.random_range(0..640) as f64 / 64.0;
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        v.push([x, rng.random_range(-10_240..10_240) as f64 / 1024.0]);
        x += rng.random_range(1..200) as f64 / 64.0;
    }
    Polyline2D::new(v, LaneClass::White)
}

fn c1_iam_exact() -> Outcome {
    let cfg = tau(0.2);
    let gt = poly(&[(0.0, 0.0), (10.0, 0.0), (20.0, 0.0)]);
    let id = pair(&cfg, &gt, &gt);
    ensure!(id.f1() == 1.0, "identity F1 {}", id.f1());

    let lane = poly(&[(0.0, 1.0), (5.0, 1.2), (12.0, 1.1), (20.0, 0.9)]);
    let shifted = lane.translated(0.0, 0.3);
    let s = pair(&cfg, &lane, &shifted);
    ensure!(s == MatchCounts::new(0, 4, 4) && s.f1() == 0.0, "0.3 m shift gave {s:?}");

    let pred = poly(&[(5.0, 0.1), (15.0, 0.1)]);
    let c = pair(&cfg, &gt, &pred);
    ensure!(c == MatchCounts::new(1, 2, 0) && c.f1() == 0.5, "partial case gave {c:?}");
    Ok("identity 1.0, 0.3 m shift 0.0, TP=1/FN=2/FP=0 case 0.5".into())
}

fn c2_threshold_step() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0;
    for i in 0..1000 {
        let gt = random_polyline(&mut rng);
        // every third case sits exactly on a dyadic threshold, so the shift is
        // represented without rounding
        let (t, s) = match i % 3 {
            0 => (0.2, rng.random_range(0.0..0.2)),
            1 => (0.2, rng.random_range(0.2..0.6)),
            _ => {
                let t = [0.125, 0.25, 0.5][rng.random_range(0..3)];
                (t, t)
            }
        };
        let s = if rng.random_bool(0.5) { s } else { -s };
        let pred = gt.translated(0.0, s);
        let f1 = pair(&tau(t), &gt, &pred).f1();
        let want = if s.abs() < t { 1.0 } else { 0.0 };
        if f1 != want {
            violations += 1;
        }
    }
    ensure!(violations == 0, "{violations} violations");
    Ok("1000 polylines, 0 violations".into())
}

fn c3_monotone_and_invariant() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut mono, mut trans) = (0, 0);
    for _ in 0..1000 {
        let gt = random_polyline(&mut rng);
        let pred = if rng.random_bool(0.5) {
            let dy = rng.random_range(-400..400) as f64 / 1024.0;
            let dx = rng.random_range(-200..200) as f64 / 64.0;
            gt.translated(dx, dy)
        } else {
            random_polyline(&mut rng)
        };
        let t1 = rng.random_range(0.01..1.0);
        let t2 = t1 + rng.random_range(0.0..1.0);
        let (a, b) = (pair(&tau(t1), &gt, &pred), pair(&tau(t2), &gt, &pred));
        if !(a.tp <= b.tp && a.fn_ >= b.fn_ && a.fp >= b.fp) {
            mono += 1;
        }
        let (dx, dy) = (rng.random_range(-50..50) as f64, rng.random_range(-20..20) as f64);
        let moved = pair(&tau(t1), &gt.translated(dx, dy), &pred.translated(dx, dy));
        if moved != a {
            trans += 1;
        }
    }
    ensure!(mono == 0 && trans == 0, "{mono} monotonicity and {trans} translation violations");
    Ok("1000 pairs, 0 violations".into())
}

/// Components of the core-core neighbour graph numbered by smallest member;
/// a border point takes the smallest component among its core neighbours.
fn dbscan_reference(eps: f64, min_pts: usize, pts: &[[f64; 2]]) -> (Vec<bool>, Vec<Option<usize>>) {
    let n = pts.len();
    let near = |i: usize, j: usize| {
        let (dx, dy) = (pts[i][0] - pts[j][0], pts[i][1] - pts[j][1]);
        dx * dx + dy * dy <= eps * eps
    };
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if !core[s] || comp[s] != usize::MAX {
            continue;
        }
        comp[s] = next;
        let mut stack = vec![s];
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if core[j] && comp[j] == usize::MAX && near(i, j) {
                    comp[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    let labels = (0..n)
        .map(|i| {
            if core[i] {
                Some(comp[i])
            } else {
                (0..n).filter(|&j| core[j] && near(i, j)).map(|j| comp[j]).min()
            }
        })
        .collect();
    (core, labels)
}

fn c4_dbscan_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    for _ in 0..200 {
        let n = rng.random_range(0..=60);
        let eps = rng.random_range(0.2..1.5);
        let min_pts = rng.random_range(1..8);
        let pts: Vec<[f64; 2]> = if rng.random_bool(0.5) {
            (0..n).map(|_| [rng.random_range(0.0..8.0), rng.random_range(0.0..8.0)]).collect()
        } else {
            // lattice points put many pairs exactly at distance eps
            (0..n)
                .map(|_| [rng.random_range(0..32) as f64 * 0.25, rng.random_range(0..32) as f64 * 0.25])
                .collect()
        };
        let (core, labels) = dbscan_reference(eps, min_pts, &pts);
        if core_points(eps, min_pts, &pts) != core || dbscan(eps, min_pts, &pts).unwrap() != labels {
            mismatches += 1;
        }
    }
    ensure!(mismatches == 0, "{mismatches} of 200 instances differ");
    Ok("200 instances, partitions identical".into())
}

fn c5_ransac_recovery() -> Outcome {
    let planted = [0.5, 0.0, 0.01];
    let f = |x: f64| planted[0] + planted[1] * x + planted[2] * x * x;
    let mut good = 0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let noise = Normal::new(0.0, 0.02).unwrap();
        let mut pts: Vec<[f64; 2]> = (0..70)
            .map(|_| {
                let x = rng.random_range(0.0..20.0);
                [x, f(x) + noise.sample(&mut rng)]
            })
            .collect();
        pts.extend((0..30).map(|_| {
            let x = rng.random_range(0.0..20.0);
            [x, f(x) + rng.random_range(-3.0..3.0)]
        }));
        let params = RansacParams {
            degree: 2,
            seed,
            ..RansacParams::default()
        };
        let fit = ransac_poly_fit(&params, &pts).map_err(|e| e.to_string())?;
        if fit.coeffs.iter().zip(planted).all(|(c, p)| (c - p).abs() <= 0.05) {
            good += 1;
        }
    }
    ensure!(good >= 48, "only {good}/50 seeds recovered the model");
    Ok(format!("{good}/50 seeds within 0.05"))
}

fn synth_traces(root: &Path, n_traces: usize, frames: usize, tweak: impl Fn(&mut SceneSpec)) -> Vec<PathBuf> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    (0..n_traces)
        .map(|t| {
            let n_lanes = rng.random_range(2..=4);
            let mut scene = SceneSpec {
                lanes: random_lanes(&mut rng, n_lanes),
                lateral_sigma: 0.05,
                dropout: 0.2,
                clutter: 300,
                seed: rng.random(),
                ..SceneSpec::default()
            };
            tweak(&mut scene);
            let spec = TraceSpec {
                trace_id: format!("trace{t:02}"),
                scene,
                frames,
                step: 2.0,
                ..TraceSpec::default()
            };
            let dir = root.join(&spec.trace_id);
            generate_trace(&spec, &dir).unwrap();
            dir.join("manifest.json")
        })
        .collect()
}

fn run_pipeline(root: &Path, manifests: &[PathBuf], max_x: Option<f64>) -> Result<f64, String> {
    let mut cfg = RunConfig {
        out: Some(root.join("pred")),
        ..RunConfig::default()
    };
    cfg.evaluate.max_x = max_x;
    cmd_extract(&cfg, manifests).map_err(|e| e.to_string())?;
    cfg.out = Some(root.join("eval"));
    let report = cmd_evaluate(&cfg, manifests, &root.join("pred")).map_err(|e| e.to_string())?;
    report.average.iam_f1.ok_or_else(|| "no IAM-F1".to_string())
}

fn c6_end_to_end() -> Outcome {
    let clean_dir = tempfile::tempdir().unwrap();
    let clean = synth_traces(clean_dir.path(), 10, 5, |_| {});
    let start = Instant::now();
    let f1 = run_pipeline(clean_dir.path(), &clean, None)?;
    let clean_time = start.elapsed();
    ensure!(f1 >= 0.95, "clean IAM-F1 {f1:.4} < 0.95");
    ensure!(clean_time < Duration::from_secs(120), "clean run took {clean_time:?}");

    let rain_dir = tempfile::tempdir().unwrap();
    let rain = synth_traces(rain_dir.path(), 10, 5, |s| {
        s.dropout = 0.6;
        s.density *= 0.5;
    });
    let rain_f1 = run_pipeline(rain_dir.path(), &rain, Some(25.0))?;
    ensure!(rain_f1 >= 0.85, "degraded IAM-F1 {rain_f1:.4} < 0.85");
    Ok(format!(
        "50 frames IAM-F1 {f1:.4} in {:.1} s; degraded (x <= 25 m) {rain_f1:.4}",
        clean_time.as_secs_f64()
    ))
}

fn c7_quantization_contrast() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let spec = TraceSpec {
        trace_id: "shift".into(),
        frames: 3,
        ..TraceSpec::default()
    };
    let manifest = dir.path().join("trace");
    let trace = generate_trace(&spec, &manifest).unwrap();
    let pred_dir = dir.path().join("pred");
    for (i, f) in trace.frames().iter().enumerate() {
        let shifted: Vec<Polyline3D> = trace
            .load_polylines(i)
            .unwrap()
            .unwrap()
            .iter()
            .map(|p| Polyline3D::new(p.vertices.iter().map(|v| [v[0], v[1] + 0.05, v[2]]).collect(), p.class))
            .collect();
        write_polylines(&prediction_path(&pred_dir, trace.id(), &f.frame_id), &shifted).unwrap();
    }
    let cfg = RunConfig {
        out: Some(dir.path().join("eval")),
        ..RunConfig::default()
    };
    let r = cmd_evaluate(&cfg, &[manifest], &pred_dir).map_err(|e| e.to_string())?;
    let (iam, raster) = (r.average.iam_f1.unwrap(), r.average.raster_f1.unwrap());
    ensure!(iam == 1.0 && raster == 0.0, "IAM-F1 {iam}, raster F1 {raster}");

    let gt = poly(&[(0.0, 1.775), (40.0, 1.775)]);
    let direct = raster_polyline_f1(&cfg.bev, &[gt.clone()], &[gt.translated(0.0, 0.05)], 1);
    ensure!(direct.f1() == 0.0, "direct raster F1 {}", direct.f1());
    Ok("0.05 m shift: raster F1 0.0000 at width 1, IAM-F1 1.0000".into())
}

fn c8_round_trip() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let spec = TraceSpec {
        scene: SceneSpec {
            lateral_sigma: 0.05,
            dropout: 0.2,
            clutter: 100,
            seed: 8,
            ..SceneSpec::highway()
        },
        frames: 10,
        step: 1.0,
        ..TraceSpec::default()
    };
    let frames = generate_trace_frames(&spec).unwrap();
    generate_trace(&spec, dir.path()).unwrap();
    let trace = load_trace(dir.path()).unwrap();
    for (i, f) in frames.iter().enumerate() {
        let cloud = trace.load_cloud(i).unwrap();
        ensure!(cloud == f.cloud, "frame {i} cloud differs");
        let on_disk = std::fs::read(dir.path().join(&trace.frames()[i].cloud_path)).unwrap();
        ensure!(encode_cloud(&cloud) == on_disk, "frame {i} bytes differ");
        ensure!(trace.load_labels(i).unwrap().as_ref() == Some(&f.truth.labels), "frame {i} labels differ");
        ensure!(
            trace.load_polylines(i).unwrap().as_ref() == Some(&f.truth.polylines),
            "frame {i} polylines differ"
        );
    }

    let center = 9;
    let fused = fuse_frames(&trace, &trace.frames()[center].frame_id, center).unwrap();
    let mut k = 0;
    let mut worst: f64 = 0.0;
    for (i, f) in frames.iter().enumerate() {
        let dx = -(spec.step * (center - i) as f64);
        for p in &f.cloud.points {
            let q = &fused.points[k];
            worst = worst.max((q.x - (p.x + dx)).abs()).max((q.y - p.y).abs()).max((q.z - p.z).abs());
            k += 1;
        }
    }
    ensure!(k == fused.len(), "fused cloud has {} points, expected {k}", fused.len());
    ensure!(worst <= 1e-9, "fusion error {worst:e}");
    Ok(format!("10 frames bit-exact; fusion max error {worst:.1e} m"))
}

/// Trace attributes matching the dataset's published distribution, with a
/// 17/6/6 split in which every val/test trace has a challenging condition.
fn table2_manifests() -> Vec<TraceManifest> {
    let plain = TraceAttributes::default();
    let city = TraceAttributes {
        road_type: RoadType::City,
        ..plain
    };
    let expressway = TraceAttributes {
        road_type: RoadType::Expressway,
        ..plain
    };
    let rain = TraceAttributes {
        weather: Weather::Rainy,
        ..plain
    };
    let cloudy = TraceAttributes {
        weather: Weather::Cloudy,
        ..plain
    };
    let mid = TraceAttributes {
        traffic: Traffic::Mid,
        ..plain
    };
    let roadwork = TraceAttributes {
        roadwork: true,
        ..plain
    };
    let mut train = vec![city, roadwork, rain, mid, mid, mid, expressway, expressway, cloudy, cloudy];
    train.extend([plain; 7]);
    let val = vec![city, roadwork, rain, rain, mid, mid];
    let test = val.clone();
    [(Split::Train, train), (Split::Val, val), (Split::Test, test)]
        .into_iter()
        .flat_map(|(split, attrs)| attrs.into_iter().map(move |a| (split, a)))
        .enumerate()
        .map(|(i, (split, attributes))| TraceManifest {
            trace_id: format!("t{i:02}"),
            split,
            attributes,
            frames: vec![],
        })
        .collect()
}

fn c9_attribute_table() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let manifests: Vec<PathBuf> = table2_manifests()
        .into_iter()
        .map(|m| {
            let d = dir.path().join(&m.trace_id);
            Trace::new(m, &d).write_manifest().unwrap()
        })
        .collect();
    let cfg = RunConfig {
        out: Some(dir.path().join("stats")),
        ..RunConfig::default()
    };
    let out = cmd_stats(&cfg, &manifests).map_err(|e| e.to_string())?;
    let table = &out.stats.attributes;
    ensure!(table.total == 29, "{} traces", table.total);
    let expected = [
        ("City", "3 (10.3%)"),
        ("Expressway", "2 (6.9%)"),
        ("Highway", "24 (82.8%)"),
        ("Sunny", "22 (75.9%)"),
        ("Cloudy", "2 (6.9%)"),
        ("Rainy", "5 (17.2%)"),
        ("Mid-traffic", "7 (24.1%)"),
        ("Low-traffic", "22 (75.9%)"),
        ("No const.", "26 (89.7%)"),
        ("Const. zone", "3 (10.3%)"),
    ];
    for (label, want) in expected {
        let got = table.cell(label).map(|c| c.format(table.total)).unwrap_or_default();
        ensure!(got == want, "{label}: {got} != {want}");
    }
    let split = validate_split(&table2_manifests());
    ensure!(
        (split.count(Split::Train), split.count(Split::Val), split.count(Split::Test)) == (17, 6, 6),
        "split counts {:?}",
        split.counts
    );
    ensure!(split.passed(), "split flags {:?}", split.flags);
    Ok("29 traces: highway 82.8%, sunny 75.9%, low-traffic 75.9%, no const. 89.7%; 17/6/6 split clean".into())
}

fn c10_report_shape() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let manifests = synth_traces(dir.path(), 6, 2, |s| s.density = 40.0);
    let mut cfg = RunConfig {
        out: Some(dir.path().join("pred")),
        ..RunConfig::default()
    };
    cmd_extract(&cfg, &manifests).map_err(|e| e.to_string())?;
    cfg.out = Some(dir.path().join("eval"));
    let report = cmd_evaluate(&cfg, &manifests, &dir.path().join("pred")).map_err(|e| e.to_string())?;
    ensure!(report.rows.len() == 6, "{} rows", report.rows.len());
    let text = std::fs::read_to_string(dir.path().join("eval/report.txt")).unwrap();
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('-')).collect();
    ensure!(lines.len() == 8, "table has {} non-rule lines", lines.len());
    ensure!(
        lines[0].contains("Segmentation") && lines[0].contains("Polyline (meshgrid)") && lines[0].contains("Polyline (ours)"),
        "header {:?}",
        lines[0]
    );
    ensure!(lines[7].starts_with("Average"), "last row {:?}", lines[7]);
    for l in &lines[1..] {
        let cells: Vec<&str> = l.split('|').map(str::trim).collect();
        ensure!(cells.len() == 4, "row {l:?}");
        for c in &cells[1..] {
            let ok = c.len() == 6 && c.as_bytes()[1] == b'.' && c.parse::<f64>().is_ok();
            ensure!(ok, "cell {c:?} is not rounded to 4 decimals");
        }
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("eval/report.json")).unwrap()).unwrap();
    ensure!(json["rows"].as_array().map(Vec::len) == Some(6), "json rows");
    for k in ["trace", "seg_f1", "raster_f1", "iam_f1", "tp", "fn", "fp"] {
        ensure!(json["average"].get(k).is_some(), "average lacks {k}");
    }
    Ok("6 rows + Average, 3 metric columns, 4 decimals".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("1 IAM-F1 exactness", c1_iam_exact, Duration::from_secs(1)),
        ("2 threshold step", c2_threshold_step, Duration::from_secs(10)),
        ("3 tau monotonicity / translation invariance", c3_monotone_and_invariant, Duration::MAX),
        ("4 DBSCAN oracle equivalence", c4_dbscan_oracle, Duration::from_secs(30)),
        ("5 RANSAC recovery", c5_ransac_recovery, Duration::from_secs(30)),
        ("6 end-to-end synthetic pipeline", c6_end_to_end, Duration::MAX),
        ("7 quantization contrast", c7_quantization_contrast, Duration::MAX),
        ("8 dataset round-trip", c8_round_trip, Duration::MAX),
        ("9 attribute table percentages", c9_attribute_table, Duration::MAX),
        ("10 report structure", c10_report_shape, Duration::MAX),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f, limit) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(m) if took >= limit => Err(format!("{m}; took {took:?}, limit {limit:?}")),
            o => o,
        };
        match outcome {
            Ok(m) => println!("PASS  criterion {name}: {m} ({:.2} s)", took.as_secs_f64()),
            Err(m) => {
                failed += 1;
                println!("FAIL  criterion {name}: {m} ({:.2} s)", took.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
