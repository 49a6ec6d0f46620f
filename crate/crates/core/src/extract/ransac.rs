//! Robust polynomial fitting `y = Σ c_i x^i` by random sample consensus.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub iterations: usize,
    /// Max |y − f(x)| for a point to count as an inlier, meters.
    pub inlier_tol: f64,
    pub degree: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 200,
            inlier_tol: 0.10,
            degree: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyFit {
    /// `c_0..=c_degree`.
    pub coeffs: Vec<f64>,
    /// Indices of the consensus set, ascending.
    pub inliers: Vec<usize>,
}

impl PolyFit {
    pub fn eval(&self, x: f64) -> f64 {
        eval_poly(&self.coeffs, x)
    }
}

pub fn eval_poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Exact interpolating polynomial through `degree + 1` points with distinct x.
fn exact_fit(pts: &[[f64; 2]]) -> Option<Vec<f64>> {
    let n = pts.len();
    for i in 0..n {
        for j in i + 1..n {
            if (pts[i][0] - pts[j][0]).abs() < 1e-9 {
                return None;
            }
        }
    }
    let a = DMatrix::from_fn(n, n, |r, c| pts[r][0].powi(c as i32));
    let b = DVector::from_iterator(n, pts.iter().map(|p| p[1]));
    let sol = a.lu().solve(&b)?;
    sol.iter().all(|c| c.is_finite()).then(|| sol.iter().copied().collect())
}

/// Least-squares polynomial fit. Columns are normalized by their largest
/// magnitude before the SVD solve and the scaling is undone afterwards.
pub fn least_squares_fit(pts: &[[f64; 2]], degree: usize) -> Option<Vec<f64>> {
    let n = pts.len();
    let m = degree + 1;
    if n < m {
        return None;
    }
    let max_x = pts.iter().map(|p| p[0].abs()).fold(0.0, f64::max);
    let base = if max_x > 0.0 { max_x } else { 1.0 };
    let scales: Vec<f64> = (0..m).map(|i| base.powi(i as i32)).collect();
    let a = DMatrix::from_fn(n, m, |r, c| pts[r][0].powi(c as i32) / scales[c]);
    let b = DVector::from_iterator(n, pts.iter().map(|p| p[1]));
    let sol = a.svd(true, true).solve(&b, 1e-12).ok()?;
    let coeffs: Vec<f64> = sol.iter().zip(&scales).map(|(c, s)| c / s).collect();
    coeffs.iter().all(|c| c.is_finite()).then_some(coeffs)
}

struct Candidate {
    inliers: usize,
    mean_residual: f64,
    coeffs: Vec<f64>,
}

/// Fits a polynomial robustly.
///
/// Each iteration draws `degree + 1` points, fits the exact polynomial through
/// them and counts inliers. Degenerate draws (repeated x) are skipped but use
/// up their iteration. The model with most inliers wins; ties go to the lower
/// mean absolute inlier residual, then to the earlier iteration. The result
/// is a least-squares refit on the winner's inliers.
pub fn ransac_poly_fit(params: &RansacParams, pts: &[[f64; 2]]) -> Result<PolyFit> {
    if params.degree < 1 || !(params.inlier_tol > 0.0) || params.iterations == 0 {
        return Err(Error::InvalidParams(format!("bad RANSAC parameters {params:?}")));
    }
    let m = params.degree + 1;
    if pts.len() < m {
        return Err(Error::TooFewPoints {
            needed: m,
            got: pts.len(),
        });
    }
    let mut xs: Vec<f64> = pts.iter().map(|p| p[0]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < m {
        return Err(Error::TooFewPoints {
            needed: m,
            got: xs.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<Candidate> = None;
    let mut sample_pts = Vec::with_capacity(m);
    for _ in 0..params.iterations {
        sample_pts.clear();
        sample_pts.extend(sample(&mut rng, pts.len(), m).iter().map(|i| pts[i]));
        let Some(coeffs) = exact_fit(&sample_pts) else {
            continue;
        };
        let (count, sum) = pts
            .iter()
            .map(|p| (p[1] - eval_poly(&coeffs, p[0])).abs())
            .filter(|r| *r <= params.inlier_tol)
            .fold((0usize, 0.0), |(n, s), r| (n + 1, s + r));
        let cand = Candidate {
            inliers: count,
            mean_residual: if count > 0 { sum / count as f64 } else { f64::INFINITY },
            coeffs,
        };
        let better = match &best {
            None => true,
            Some(b) => {
                cand.inliers > b.inliers
                    || (cand.inliers == b.inliers && cand.mean_residual < b.mean_residual)
            }
        };
        if better {
            best = Some(cand);
        }
    }

    let consensus = |coeffs: &[f64]| -> Vec<usize> {
        pts.iter()
            .enumerate()
            .filter(|(_, p)| (p[1] - eval_poly(coeffs, p[0])).abs() <= params.inlier_tol)
            .map(|(i, _)| i)
            .collect()
    };

    let inliers = match &best {
        Some(b) => consensus(&b.coeffs),
        None => (0..pts.len()).collect(),
    };
    let inlier_pts: Vec<[f64; 2]> = inliers.iter().map(|&i| pts[i]).collect();
    let coeffs = least_squares_fit(&inlier_pts, params.degree)
        .or_else(|| best.as_ref().map(|b| b.coeffs.clone()))
        .ok_or_else(|| Error::InvalidParams("polynomial fit is singular".into()))?;
    Ok(PolyFit { coeffs, inliers })
}
