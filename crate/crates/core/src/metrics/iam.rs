//! Interpolation-aware matching F1 (IAM-F1).
//!
//! Every ground-truth vertex is compared with the prediction's lateral
//! position interpolated at the same x. It is a true positive when the
//! prediction covers that x and the lateral gap is below `tau`, otherwise a
//! false negative. The reverse pass over predicted vertices yields false
//! positives. Only the BEV (x, y) plane is used.

use serde::{Deserialize, Serialize};

use super::hungarian::min_cost_assignment;
use super::MatchCounts;
use crate::error::{Error, Result};
use crate::geometry::{canonicalize_polyline, interp_lateral, Polyline2D};

/// Pairs whose mean lateral gap exceeds this multiple of `tau` are never assigned.
pub const ASSIGNMENT_GATE_FACTOR: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    /// Lateral match threshold in meters; a gap must be strictly below it.
    pub tau: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { tau: 0.2 }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidParams(format!("tau must be > 0, got {}", self.tau)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    TP,
    FN,
    FP,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMatchRecord {
    pub point: [f64; 2],
    /// Lateral position of the other polyline at `point[0]`, if covered.
    pub counterpart: Option<f64>,
    pub delta: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairMatch {
    pub counts: MatchCounts,
    pub gt_records: Vec<PointMatchRecord>,
    pub pred_records: Vec<PointMatchRecord>,
}

/// Scores one ground-truth polyline against one prediction. Both must be canonical.
pub fn iam_match_pair(cfg: &MatchConfig, gt: &Polyline2D, pred: &Polyline2D) -> Result<PairMatch> {
    if gt.is_empty() || pred.is_empty() {
        return Err(Error::EmptyPolyline);
    }
    debug_assert!(gt.is_canonical() && pred.is_canonical());
    let mut counts = MatchCounts::default();

    let gt_records = gt
        .vertices
        .iter()
        .map(|&g| {
            let counterpart = interp_lateral(pred, g[0]);
            let delta = counterpart.map(|y| (y - g[1]).abs());
            let verdict = match delta {
                Some(d) if d < cfg.tau => {
                    counts.tp += 1;
                    Verdict::TP
                }
                _ => {
                    counts.fn_ += 1;
                    Verdict::FN
                }
            };
            PointMatchRecord {
                point: g,
                counterpart,
                delta,
                verdict,
            }
        })
        .collect();

    let pred_records = pred
        .vertices
        .iter()
        .map(|&p| {
            let counterpart = interp_lateral(gt, p[0]);
            let delta = counterpart.map(|y| (p[1] - y).abs());
            let verdict = match delta {
                Some(d) if d < cfg.tau => Verdict::TP,
                _ => {
                    counts.fp += 1;
                    Verdict::FP
                }
            };
            PointMatchRecord {
                point: p,
                counterpart,
                delta,
                verdict,
            }
        })
        .collect();

    Ok(PairMatch {
        counts,
        gt_records,
        pred_records,
    })
}

/// Mean |δ| over every vertex of either polyline that falls inside the
/// other's domain. `None` when the domains do not overlap.
pub fn pair_cost(gt: &Polyline2D, pred: &Polyline2D) -> Option<f64> {
    let deltas = |a: &Polyline2D, b: &Polyline2D| -> Vec<f64> {
        a.vertices
            .iter()
            .filter_map(|v| interp_lateral(b, v[0]).map(|y| (y - v[1]).abs()))
            .collect()
    };
    let mut all = deltas(gt, pred);
    all.extend(deltas(pred, gt));
    if all.is_empty() {
        return None;
    }
    Some(all.iter().sum::<f64>() / all.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Assignment {
    /// `(gt index, pred index)`, ascending by gt index.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
}

/// One-to-one lane assignment followed by per-pair IAM scoring.
///
/// The assignment maximizes the number of matched pairs, then minimizes the
/// summed [`pair_cost`]. Pairs without x-overlap or with a cost above
/// `5·tau` cannot be matched. Vertices of unmatched ground truth count as
/// FN, vertices of unmatched predictions as FP.
pub fn match_polyline_sets(
    cfg: &MatchConfig,
    gts: &[Polyline2D],
    preds: &[Polyline2D],
) -> Result<(Assignment, MatchCounts)> {
    cfg.validate()?;
    if gts.iter().chain(preds).any(|p| p.is_empty()) {
        return Err(Error::EmptyPolyline);
    }
    let gate = ASSIGNMENT_GATE_FACTOR * cfg.tau;
    let allowed: Vec<Vec<Option<f64>>> = gts
        .iter()
        .map(|g| {
            preds
                .iter()
                .map(|p| pair_cost(g, p).filter(|c| *c <= gate))
                .collect()
        })
        .collect();

    let mut pairs = Vec::new();
    if !gts.is_empty() && !preds.is_empty() {
        let forbidden = 1.0 + allowed.iter().flatten().flatten().sum::<f64>();
        let transpose = gts.len() > preds.len();
        let (rows, cols) = if transpose {
            (preds.len(), gts.len())
        } else {
            (gts.len(), preds.len())
        };
        let cost: Vec<Vec<f64>> = (0..rows)
            .map(|r| {
                (0..cols)
                    .map(|c| {
                        let (g, p) = if transpose { (c, r) } else { (r, c) };
                        allowed[g][p].unwrap_or(forbidden)
                    })
                    .collect()
            })
            .collect();
        for (r, c) in min_cost_assignment(&cost).into_iter().enumerate() {
            let (g, p) = if transpose { (c, r) } else { (r, c) };
            if allowed[g][p].is_some() {
                pairs.push((g, p));
            }
        }
        pairs.sort_unstable();
    }

    let mut counts = MatchCounts::default();
    for &(g, p) in &pairs {
        counts += iam_match_pair(cfg, &gts[g], &preds[p])?.counts;
    }
    let unmatched_gt: Vec<usize> = (0..gts.len()).filter(|g| !pairs.iter().any(|(x, _)| x == g)).collect();
    let unmatched_pred: Vec<usize> = (0..preds.len()).filter(|p| !pairs.iter().any(|(_, y)| y == p)).collect();
    counts.fn_ += unmatched_gt.iter().map(|&g| gts[g].len() as u64).sum::<u64>();
    counts.fp += unmatched_pred.iter().map(|&p| preds[p].len() as u64).sum::<u64>();

    Ok((
        Assignment {
            pairs,
            unmatched_gt,
            unmatched_pred,
        },
        counts,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEvaluation {
    pub counts: MatchCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// No ground truth and no prediction: contributes nothing and is left
    /// out of per-frame averages.
    pub vacuous: bool,
    pub assignment: Assignment,
}

/// IAM evaluation of one frame. Inputs are canonicalized here.
pub fn evaluate_frame(cfg: &MatchConfig, gts: &[Polyline2D], preds: &[Polyline2D]) -> Result<FrameEvaluation> {
    let gts = gts.iter().map(canonicalize_polyline).collect::<Result<Vec<_>>>()?;
    let preds = preds.iter().map(canonicalize_polyline).collect::<Result<Vec<_>>>()?;
    let (assignment, counts) = match_polyline_sets(cfg, &gts, &preds)?;
    Ok(FrameEvaluation {
        counts,
        precision: counts.precision(),
        recall: counts.recall(),
        f1: counts.f1(),
        vacuous: gts.is_empty() && preds.is_empty(),
        assignment,
    })
}

/// Restricts a canonical polyline to `lo <= x <= hi`, inserting interpolated
/// vertices where it crosses the bounds. `None` if nothing remains.
pub fn clip_polyline_x(p: &Polyline2D, lo: f64, hi: f64) -> Option<Polyline2D> {
    let (x0, x1) = p.domain()?;
    if x1 < lo || x0 > hi {
        return None;
    }
    let mut out = Vec::with_capacity(p.len() + 2);
    if x0 < lo {
        out.push([lo, interp_lateral(p, lo)?]);
    }
    out.extend(p.vertices.iter().copied().filter(|v| v[0] >= lo && v[0] <= hi));
    if x1 > hi {
        let y = interp_lateral(p, hi)?;
        if out.last().is_none_or(|v| v[0] < hi) {
            out.push([hi, y]);
        }
    }
    out.dedup_by(|a, b| a[0] == b[0]);
    Some(Polyline2D::new(out, p.class))
}
