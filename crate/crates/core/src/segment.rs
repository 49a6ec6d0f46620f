//! Per-cell lane segmentation of a BEV grid.
//!
//! Any model can be plugged in through [`Segmenter`]. Two implementations
//! ship here: an intensity/height threshold heuristic and a loader for masks
//! computed elsewhere (the `LKM1` file format).

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bev::{BevConfig, BevGrid, BevLabelGrid};
use crate::error::{Error, Result};
use crate::geometry::LaneClass;

pub const MASK_MAGIC: &[u8; 4] = b"LKM1";

pub trait Segmenter {
    /// Raw prediction. Callers should go through [`run_segmenter`], which
    /// checks the output contract.
    fn predict(&self, grid: &BevGrid) -> Result<BevLabelGrid>;
}

/// Runs a segmenter and checks that its output matches the input grid.
pub fn run_segmenter<S: Segmenter + ?Sized>(seg: &S, grid: &BevGrid) -> Result<BevLabelGrid> {
    let out = seg.predict(grid)?;
    let (rows, cols) = (grid.config.rows(), grid.config.cols());
    if out.config != grid.config || out.labels.len() != rows * cols {
        return Err(Error::DimsMismatch {
            rows,
            cols,
            got_rows: out.config.rows(),
            got_cols: out.config.cols(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicSegmenterParams {
    pub intensity_threshold: f32,
    /// Cells whose highest point rises more than this above `ego_ground` are
    /// not road surface.
    pub ground_band: f32,
    pub min_cell_count: u32,
    pub ego_ground: f32,
}

impl Default for HeuristicSegmenterParams {
    fn default() -> Self {
        Self {
            intensity_threshold: 0.45,
            ground_band: 0.30,
            min_cell_count: 1,
            ego_ground: 0.0,
        }
    }
}

impl HeuristicSegmenterParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.intensity_threshold) {
            return Err(Error::InvalidParams("intensity_threshold must lie in [0, 1]".into()));
        }
        if !(self.ground_band > 0.0) || !self.ego_ground.is_finite() {
            return Err(Error::InvalidParams("ground_band must be > 0".into()));
        }
        Ok(())
    }
}

impl Segmenter for HeuristicSegmenterParams {
    fn predict(&self, grid: &BevGrid) -> Result<BevLabelGrid> {
        self.validate()?;
        Ok(segment_heuristic(self, grid))
    }
}

/// Marks bright, populated, road-level cells as White. Never emits Yellow.
pub fn segment_heuristic(params: &HeuristicSegmenterParams, grid: &BevGrid) -> BevLabelGrid {
    let labels = (0..grid.point_count.len())
        .map(|i| {
            let lane = grid.point_count[i] >= params.min_cell_count.max(1)
                && grid.max_intensity[i] >= params.intensity_threshold
                && grid.max_height[i] - params.ego_ground <= params.ground_band;
            if lane {
                LaneClass::White
            } else {
                LaneClass::Background
            }
        })
        .collect();
    BevLabelGrid {
        config: grid.config,
        labels,
    }
}

/// Reads an `LKM1` mask: magic, u32 LE rows, u32 LE cols, then one label
/// byte per cell, row-major.
pub fn load_external_mask(path: &Path, cfg: &BevConfig) -> Result<BevLabelGrid> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_mask(&bytes, cfg).map_err(|e| match e {
        Error::Parse { msg, .. } => Error::parse(path, msg),
        other => other,
    })
}

pub fn decode_mask(bytes: &[u8], cfg: &BevConfig) -> Result<BevLabelGrid> {
    if bytes.len() < 12 || &bytes[..4] != MASK_MAGIC {
        return Err(Error::parse("<mask>", "missing LKM1 header"));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if rows != cfg.rows() || cols != cfg.cols() {
        return Err(Error::DimsMismatch {
            rows: cfg.rows(),
            cols: cfg.cols(),
            got_rows: rows,
            got_cols: cols,
        });
    }
    let body = &bytes[12..];
    if body.len() != rows * cols {
        return Err(Error::parse(
            "<mask>",
            format!("expected {} label bytes, found {}", rows * cols, body.len()),
        ));
    }
    let labels = body.iter().map(|&b| LaneClass::try_from(b)).collect::<Result<Vec<_>>>()?;
    Ok(BevLabelGrid { config: *cfg, labels })
}

pub fn encode_mask(grid: &BevLabelGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + grid.labels.len());
    out.extend_from_slice(MASK_MAGIC);
    out.extend_from_slice(&(grid.config.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.config.cols() as u32).to_le_bytes());
    out.extend(grid.labels.iter().map(|c| c.code()));
    out
}

pub fn write_external_mask(path: &Path, grid: &BevLabelGrid) -> Result<()> {
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&encode_mask(grid)))
        .map_err(|e| Error::io(path, e))
}

/// Segmenter backed by precomputed masks, one `<frame_id>.lkm` per frame.
#[derive(Debug, Clone)]
pub struct ExternalMasks {
    pub dir: std::path::PathBuf,
}

impl ExternalMasks {
    pub fn mask_path(&self, frame_id: &str) -> std::path::PathBuf {
        self.dir.join(format!("{frame_id}.lkm"))
    }

    pub fn load(&self, frame_id: &str, cfg: &BevConfig) -> Result<BevLabelGrid> {
        load_external_mask(&self.mask_path(frame_id), cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bev::rasterize_cloud;
    use crate::geometry::{Point3, PointCloud};
    use proptest::prelude::*;

    #[test]
    fn empty_grid_is_background() {
        let g = BevGrid::empty(BevConfig::default());
        let out = run_segmenter(&HeuristicSegmenterParams::default(), &g).unwrap();
        assert_eq!(out.lane_cells(), 0);
    }

    #[test]
    fn bright_ground_cell_is_white() {
        let cfg = BevConfig::default();
        let pc = PointCloud::new(vec![
            Point3::new(10.0, 2.5, 0.0, 0.9),
            Point3::new(12.0, 2.5, 1.5, 0.9), // above the ground band
            Point3::new(14.0, 2.5, 0.0, 0.2), // dull asphalt
        ]);
        let out = segment_heuristic(&HeuristicSegmenterParams::default(), &rasterize_cloud(&cfg, &pc));
        assert_eq!(out.get(200, 350), LaneClass::White);
        assert_eq!(out.lane_cells(), 1);
    }

    #[test]
    fn mask_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = BevConfig::default();
        let zeros = dir.path().join("zeros.lkm");
        write_external_mask(&zeros, &BevLabelGrid::background(cfg)).unwrap();
        assert_eq!(load_external_mask(&zeros, &cfg).unwrap().lane_cells(), 0);

        let mut g = BevLabelGrid::background(cfg);
        g.set(10, 20, LaneClass::White);
        let one = dir.path().join("one.lkm");
        write_external_mask(&one, &g).unwrap();
        let back = load_external_mask(&one, &cfg).unwrap();
        assert_eq!(back.get(10, 20), LaneClass::White);
        assert_eq!(back, g);

        let mut small = Vec::from(*MASK_MAGIC);
        small.extend_from_slice(&400u32.to_le_bytes());
        small.extend_from_slice(&300u32.to_le_bytes());
        small.extend(std::iter::repeat_n(0u8, 400 * 300));
        let p = dir.path().join("small.lkm");
        std::fs::write(&p, &small).unwrap();
        assert!(matches!(load_external_mask(&p, &cfg), Err(Error::DimsMismatch { .. })));

        let mut bad = encode_mask(&BevLabelGrid::background(cfg));
        bad[12 + 5] = 7;
        std::fs::write(&p, &bad).unwrap();
        assert!(matches!(load_external_mask(&p, &cfg), Err(Error::InvalidLabelValue(7))));

        assert!(matches!(
            load_external_mask(&dir.path().join("nope.lkm"), &cfg),
            Err(Error::MissingFile(_))
        ));
    }

    struct Shrinking;
    impl Segmenter for Shrinking {
        fn predict(&self, _grid: &BevGrid) -> Result<BevLabelGrid> {
            Ok(BevLabelGrid::background(BevConfig {
                x_max: 20.0,
                ..Default::default()
            }))
        }
    }

    #[test]
    fn contract_violation_is_reported() {
        let g = BevGrid::empty(BevConfig::default());
        assert!(matches!(run_segmenter(&Shrinking, &g), Err(Error::DimsMismatch { .. })));
    }

    proptest! {
        #[test]
        fn threshold_monotone(pts in prop::collection::vec((0.0f64..2.0, -1.0f64..1.0, -0.2f64..0.5, 0.0f64..1.0), 0..300), lo in 0.0f32..1.0, bump in 0.0f32..0.5) {
            let cfg = BevConfig::default();
            let pc = PointCloud::new(pts.iter().map(|&(x, y, z, i)| Point3::new(x, y, z, i)).collect());
            let grid = rasterize_cloud(&cfg, &pc);
            let p_lo = HeuristicSegmenterParams { intensity_threshold: lo, ..Default::default() };
            let p_hi = HeuristicSegmenterParams { intensity_threshold: (lo + bump).min(1.0), ..Default::default() };
            let a = segment_heuristic(&p_lo, &grid);
            let b = segment_heuristic(&p_hi, &grid);
            for (x, y) in a.labels.iter().zip(&b.labels) {
                prop_assert!(!(y.is_lane() && !x.is_lane()));
            }
        }
    }
}
