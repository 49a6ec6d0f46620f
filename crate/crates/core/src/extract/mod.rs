//! Lane polylines from a predicted label grid.
//!
//! Lane cells become points at their cell centers. Points are clustered with
//! DBSCAN in an anisotropically scaled space where longitudinal distances
//! shrink, so dashes of one marking merge while neighbouring markings stay
//! apart. Each cluster is then fit with a RANSAC polynomial `y = f(x)` in
//! metric space and sampled into a polyline.

pub mod dbscan;
pub mod ransac;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bev::BevLabelGrid;
use crate::error::{Error, Result};
use crate::geometry::{LaneClass, Polyline3D};

pub use dbscan::{core_points, dbscan, ClusterLabels};
pub use ransac::{eval_poly, least_squares_fit, ransac_poly_fit, PolyFit, RansacParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractParams {
    /// `(α_x, α_y)` applied before clustering.
    pub scale: (f64, f64),
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
    pub ransac_iters: usize,
    pub ransac_inlier_tol: f64,
    pub poly_degree: usize,
    pub min_cluster_cells: usize,
    pub sample_step: f64,
    pub rng_seed: u64,
}

impl Default for ExtractParams {
    fn default() -> Self {
        Self {
            scale: (0.1, 1.0),
            dbscan_eps: 0.8,
            dbscan_min_pts: 5,
            ransac_iters: 200,
            ransac_inlier_tol: 0.10,
            poly_degree: 3,
            min_cluster_cells: 20,
            sample_step: 1.0,
            rng_seed: 0,
        }
    }
}

impl ExtractParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale.0 > 0.0 && self.scale.1 > 0.0) {
            return Err(Error::NonPositiveScale(self.scale.0, self.scale.1));
        }
        let positive = [self.dbscan_eps, self.ransac_inlier_tol, self.sample_step];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParams(
                "eps, inlier tolerance and sample step must be > 0".into(),
            ));
        }
        if self.dbscan_min_pts < 1 || self.poly_degree < 1 || self.ransac_iters < 1 {
            return Err(Error::InvalidParams(
                "min_pts, degree and iterations must be >= 1".into(),
            ));
        }
        Ok(())
    }

    fn ransac(&self, seed: u64) -> RansacParams {
        RansacParams {
            iterations: self.ransac_iters,
            inlier_tol: self.ransac_inlier_tol,
            degree: self.poly_degree,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Unscaled BEV coordinates.
    pub points: Vec<[f64; 2]>,
    pub class: LaneClass,
}

/// One fitted lane with the data behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedLane {
    pub polyline: Polyline3D,
    pub coeffs: Vec<f64>,
    pub cluster_size: usize,
    pub inliers: usize,
}

/// Cell centers of every lane cell, grouped by class. Cells are visited in
/// row-major order.
pub fn cells_to_points(grid: &BevLabelGrid) -> BTreeMap<LaneClass, Vec<[f64; 2]>> {
    let cfg = &grid.config;
    let cols = cfg.cols();
    let mut out: BTreeMap<LaneClass, Vec<[f64; 2]>> = BTreeMap::new();
    for (i, &class) in grid.labels.iter().enumerate() {
        if class.is_lane() {
            let (x, y) = cfg.cell_center(i / cols, i % cols);
            out.entry(class).or_default().push([x, y]);
        }
    }
    out
}

pub fn anisotropic_scale(scale: (f64, f64), pts: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
    if !(scale.0 > 0.0 && scale.1 > 0.0) {
        return Err(Error::NonPositiveScale(scale.0, scale.1));
    }
    Ok(pts.iter().map(|p| [p[0] * scale.0, p[1] * scale.1]).collect())
}

/// Groups points by DBSCAN cluster id, dropping noise. Clusters come out in
/// id order with members in input order.
pub fn clusters_from_labels(pts: &[[f64; 2]], labels: &ClusterLabels, class: LaneClass) -> Vec<Cluster> {
    let n = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut clusters = vec![
        Cluster {
            points: Vec::new(),
            class
        };
        n
    ];
    for (p, l) in pts.iter().zip(labels) {
        if let Some(id) = l {
            clusters[*id].points.push(*p);
        }
    }
    clusters
}

/// Per-cluster seed so that a cluster's fit does not depend on the others.
fn cluster_seed(base: u64, class: LaneClass, index: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = base
        .wrapping_add((class.code() as u64) << 32)
        .wrapping_add(index as u64)
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Samples `f` every `step` meters over `[x0, x1]`, always including `x1`.
fn sample_polyline(coeffs: &[f64], x0: f64, x1: f64, step: f64) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let x = x0 + k as f64 * step;
        if x > x1 - 1e-9 {
            break;
        }
        out.push([x, eval_poly(coeffs, x), 0.0]);
        k += 1;
    }
    out.push([x1, eval_poly(coeffs, x1), 0.0]);
    out
}

/// Full extraction with per-lane fit details.
pub fn extract_lanes_detailed(params: &ExtractParams, grid: &BevLabelGrid) -> Result<Vec<ExtractedLane>> {
    params.validate()?;
    let mut lanes = Vec::new();
    for (class, pts) in cells_to_points(grid) {
        let scaled = anisotropic_scale(params.scale, &pts)?;
        let labels = dbscan(params.dbscan_eps, params.dbscan_min_pts, &scaled)?;
        let clusters = clusters_from_labels(&pts, &labels, class);
        for (ci, cluster) in clusters.into_iter().enumerate() {
            if cluster.points.len() < params.min_cluster_cells {
                continue;
            }
            let metric = cluster.points;
            let fit = match ransac_poly_fit(&params.ransac(cluster_seed(params.rng_seed, class, ci)), &metric) {
                Ok(f) => f,
                // a cluster without enough distinct x cannot be a y = f(x) lane
                Err(Error::TooFewPoints { .. }) => continue,
                Err(e) => return Err(e),
            };
            let (x0, x1) = fit
                .inliers
                .iter()
                .map(|&i| metric[i][0])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
            if !(x1 > x0) {
                continue;
            }
            lanes.push(ExtractedLane {
                polyline: Polyline3D::new(sample_polyline(&fit.coeffs, x0, x1, params.sample_step), class),
                coeffs: fit.coeffs,
                cluster_size: metric.len(),
                inliers: fit.inliers.len(),
            });
        }
    }
    let key = |l: &ExtractedLane| {
        let v = &l.polyline.vertices;
        let mid = 0.5 * (v[0][0] + v[v.len() - 1][0]);
        eval_poly(&l.coeffs, mid)
    };
    lanes.sort_by(|a, b| {
        key(a)
            .total_cmp(&key(b))
            .then(a.polyline.class.cmp(&b.polyline.class))
            .then(a.polyline.vertices[0][0].total_cmp(&b.polyline.vertices[0][0]))
    });
    Ok(lanes)
}

/// Lane polylines (z = 0) sorted by lateral position at their midpoint.
pub fn extract_lanes(params: &ExtractParams, grid: &BevLabelGrid) -> Result<Vec<Polyline3D>> {
    Ok(extract_lanes_detailed(params, grid)?
        .into_iter()
        .map(|l| l.polyline)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bev::BevConfig;
    use proptest::prelude::*;

    fn paint(grid: &mut BevLabelGrid, f: impl Fn(f64) -> f64, on: impl Fn(f64) -> bool) {
        let cfg = grid.config;
        for row in 0..cfg.rows() {
            let (x, _) = cfg.cell_center(row, 0);
            if !on(x) {
                continue;
            }
            let y = f(x);
            for dy in [-0.05, 0.0, 0.05] {
                if let Some((r, c)) = cfg.cell_index(x, y + dy) {
                    grid.set(r, c, LaneClass::White);
                }
            }
        }
    }

    #[test]
    fn cell_centers() {
        let cfg = BevConfig::default();
        let mut g = BevLabelGrid::background(cfg);
        assert!(cells_to_points(&g).is_empty());
        g.set(0, 0, LaneClass::White);
        g.set(200, 350, LaneClass::White);
        g.set(1, 1, LaneClass::Yellow);
        let pts = cells_to_points(&g);
        let white = &pts[&LaneClass::White];
        assert!((white[0][0] - 0.025).abs() < 1e-12 && (white[0][1] + 14.975).abs() < 1e-12);
        assert!((white[1][0] - 10.025).abs() < 1e-12 && (white[1][1] - 2.525).abs() < 1e-12);
        assert_eq!(pts[&LaneClass::Yellow].len(), 1);
    }

    #[test]
    fn scaling() {
        assert_eq!(anisotropic_scale((1.0, 1.0), &[[3.0, -2.0]]).unwrap(), vec![[3.0, -2.0]]);
        let s = anisotropic_scale((0.1, 1.0), &[[10.0, 3.0]]).unwrap();
        assert!((s[0][0] - 1.0).abs() < 1e-15 && s[0][1] == 3.0);
        assert!(matches!(anisotropic_scale((0.0, 1.0), &[]), Err(Error::NonPositiveScale(..))));

        // 9 m dash gap vs 3.5 m lane spacing under the default factors
        let d = ExtractParams::default();
        let gap = anisotropic_scale(d.scale, &[[0.0, 0.0], [9.0, 0.0], [0.0, 3.5]]).unwrap();
        assert!((gap[1][0] - 0.9).abs() < 1e-12);
        assert!(gap[1][0] <= 1.0 && gap[2][1] > 1.0);
    }

    #[test]
    fn empty_grid_gives_no_lanes() {
        let g = BevLabelGrid::background(BevConfig::default());
        assert!(extract_lanes(&ExtractParams::default(), &g).unwrap().is_empty());
    }

    #[test]
    fn two_straight_lanes() {
        let mut g = BevLabelGrid::background(BevConfig::default());
        paint(&mut g, |_| 1.75, |_| true);
        paint(&mut g, |_| -1.75, |_| true);
        let lanes = extract_lanes(&ExtractParams::default(), &g).unwrap();
        assert_eq!(lanes.len(), 2);
        for (lane, y) in lanes.iter().zip([-1.75, 1.75]) {
            let err: f64 = lane.vertices.iter().map(|v| (v[1] - y).abs()).sum::<f64>() / lane.vertices.len() as f64;
            assert!(err <= 0.05, "mean lateral error {err}");
            assert!(lane.vertices.iter().all(|v| v[2] == 0.0));
        }
    }

    #[test]
    fn dashed_lane_is_one_polyline() {
        let mut g = BevLabelGrid::background(BevConfig::default());
        paint(&mut g, |x| 0.5 + 0.002 * x * x, |x| x.rem_euclid(3.0) < 1.0);
        let lanes = extract_lanes(&ExtractParams::default(), &g).unwrap();
        assert_eq!(lanes.len(), 1);
        let v = &lanes[0].vertices;
        assert!(v[0][0] < 0.1 && v[v.len() - 1][0] > 36.9, "{} .. {}", v[0][0], v[v.len() - 1][0]);
    }

    #[test]
    fn vertices_lie_on_fit_and_are_deterministic() {
        let mut g = BevLabelGrid::background(BevConfig::default());
        paint(&mut g, |x| -3.0 + 0.05 * x, |x| x > 5.0 && x < 30.0);
        paint(&mut g, |x| 2.0 - 0.001 * x * x, |_| true);
        let p = ExtractParams::default();
        let a = extract_lanes_detailed(&p, &g).unwrap();
        assert_eq!(a, extract_lanes_detailed(&p, &g).unwrap());
        for lane in &a {
            for v in &lane.polyline.vertices {
                assert_eq!(v[1], eval_poly(&lane.coeffs, v[0]));
            }
            let xs: Vec<f64> = lane.polyline.vertices.iter().map(|v| v[0]).collect();
            assert!(xs.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let g = BevLabelGrid::background(BevConfig::default());
        let p = ExtractParams { dbscan_eps: 0.0, ..Default::default() };
        assert!(extract_lanes(&p, &g).is_err());
        let p = ExtractParams { scale: (-1.0, 1.0), ..Default::default() };
        assert!(matches!(extract_lanes(&p, &g), Err(Error::NonPositiveScale(..))));
    }

    proptest! {
        #[test]
        fn scale_round_trip(pts in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 0..50), ax in 0.01f64..10.0, ay in 0.01f64..10.0) {
            let pts: Vec<[f64; 2]> = pts.into_iter().map(|(x, y)| [x, y]).collect();
            let back = anisotropic_scale((1.0 / ax, 1.0 / ay), &anisotropic_scale((ax, ay), &pts).unwrap()).unwrap();
            for (a, b) in pts.iter().zip(&back) {
                prop_assert!((a[0] - b[0]).abs() <= 1e-12 * (1.0 + a[0].abs()) && (a[1] - b[1]).abs() <= 1e-12 * (1.0 + a[1].abs()));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn cluster_filter_monotone(offsets in prop::collection::vec((-12.0f64..12.0, 1.0f64..35.0), 1..4), lo in 1usize..60, bump in 0usize..200) {
            let mut g = BevLabelGrid::background(BevConfig::default());
            for (y0, len) in &offsets {
                paint(&mut g, |_| *y0, |x| x < *len);
            }
            let a = ExtractParams { min_cluster_cells: lo, ..Default::default() };
            let b = ExtractParams { min_cluster_cells: lo + bump, ..Default::default() };
            prop_assert!(extract_lanes(&b, &g).unwrap().len() <= extract_lanes(&a, &g).unwrap().len());
        }
    }
}
