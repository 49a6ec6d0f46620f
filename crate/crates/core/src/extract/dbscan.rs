//! Density-based clustering on 2D points.
//!
//! A point is a core point when at least `min_pts` points (itself included)
//! lie within `eps` of it, inclusive. Clusters grow from core points in index
//! order, so a border point reachable from several clusters joins the one
//! discovered first. Neighbour queries go through a uniform hash grid with
//! `eps`-sized buckets.

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};

/// Cluster id per input point; `None` is noise.
pub type ClusterLabels = Vec<Option<usize>>;

#[inline]
pub(crate) fn within(a: [f64; 2], b: [f64; 2], eps: f64) -> bool {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy <= eps * eps
}

struct GridIndex<'a> {
    pts: &'a [[f64; 2]],
    eps: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl<'a> GridIndex<'a> {
    fn new(pts: &'a [[f64; 2]], eps: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in pts.iter().enumerate() {
            buckets.entry(Self::key(*p, eps)).or_default().push(i);
        }
        Self { pts, eps, buckets }
    }

    fn key(p: [f64; 2], eps: f64) -> (i64, i64) {
        ((p[0] / eps).floor() as i64, (p[1] / eps).floor() as i64)
    }

    fn neighbors(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        let p = self.pts[i];
        let (kx, ky) = Self::key(p, self.eps);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(b) = self.buckets.get(&(kx + dx, ky + dy)) {
                    out.extend(b.iter().copied().filter(|&j| within(p, self.pts[j], self.eps)));
                }
            }
        }
        out.sort_unstable();
    }
}

pub fn dbscan(eps: f64, min_pts: usize, pts: &[[f64; 2]]) -> Result<ClusterLabels> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParams(format!("dbscan eps must be > 0, got {eps}")));
    }
    if min_pts == 0 {
        return Err(Error::InvalidParams("dbscan min_pts must be >= 1".into()));
    }
    if pts.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::InvalidParams("non-finite point".into()));
    }
    let index = GridIndex::new(pts, eps);
    let n = pts.len();
    let mut labels: ClusterLabels = vec![None; n];
    // None = not yet examined
    let mut core: Vec<Option<bool>> = vec![None; n];
    let mut nb = Vec::new();
    let mut next_id = 0;
    let mut queue = VecDeque::new();

    for seed in 0..n {
        if labels[seed].is_some() || core[seed].is_some() {
            continue;
        }
        index.neighbors(seed, &mut nb);
        let is_core = nb.len() >= min_pts;
        core[seed] = Some(is_core);
        if !is_core {
            continue;
        }
        let id = next_id;
        next_id += 1;
        labels[seed] = Some(id);
        queue.extend(nb.iter().copied());
        while let Some(j) = queue.pop_front() {
            if labels[j].is_some() {
                continue;
            }
            labels[j] = Some(id);
            if core[j].is_none() {
                index.neighbors(j, &mut nb);
                let is_core = nb.len() >= min_pts;
                core[j] = Some(is_core);
                if is_core {
                    queue.extend(nb.iter().copied());
                }
            }
        }
    }
    Ok(labels)
}

/// Core flags computed directly from neighbourhood counts.
pub fn core_points(eps: f64, min_pts: usize, pts: &[[f64; 2]]) -> Vec<bool> {
    let index = GridIndex::new(pts, eps);
    let mut nb = Vec::new();
    (0..pts.len())
        .map(|i| {
            index.neighbors(i, &mut nb);
            nb.len() >= min_pts
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_separated_groups() {
        let mut pts = Vec::new();
        for i in 0..10 {
            pts.push([0.01 * i as f64, 0.0]);
            pts.push([5.0 + 0.01 * i as f64, 0.0]);
        }
        let labels = dbscan(0.5, 3, &pts).unwrap();
        assert!(labels.iter().all(|l| l.is_some()));
        let ids: std::collections::BTreeSet<_> = labels.iter().flatten().collect();
        assert_eq!(ids.len(), 2);
        assert_eq!(labels[0], labels[2]);
        assert_ne!(labels[0], labels[1]);
    }

    #[test]
    fn isolated_point_is_noise() {
        assert_eq!(dbscan(0.5, 2, &[[0.0, 0.0]]).unwrap(), vec![None]);
        // min_pts counts the point itself
        assert_eq!(dbscan(0.5, 1, &[[0.0, 0.0]]).unwrap(), vec![Some(0)]);
    }

    #[test]
    fn inclusive_radius() {
        let labels = dbscan(1.0, 2, &[[0.0, 0.0], [1.0, 0.0]]).unwrap();
        assert_eq!(labels, vec![Some(0), Some(0)]);
    }

    #[test]
    fn border_goes_to_first_cluster() {
        // the point at 1.75 is a border point of both groups but not a core point
        let a = [[0.0, 0.0], [0.25, 0.0], [0.5, 0.0], [0.75, 0.0]];
        let b = [[2.75, 0.0], [3.0, 0.0], [3.25, 0.0], [3.5, 0.0]];
        let border = [1.75, 0.0];

        let pts: Vec<_> = a.iter().chain([&border]).chain(b.iter()).copied().collect();
        let labels = dbscan(1.0, 4, &pts).unwrap();
        assert_eq!(labels[4], Some(0));
        assert_eq!(labels[5], Some(1));
        assert!(!core_points(1.0, 4, &pts)[4]);

        let pts: Vec<_> = b.iter().chain([&border]).chain(a.iter()).copied().collect();
        let labels = dbscan(1.0, 4, &pts).unwrap();
        assert_eq!(labels[4], Some(0));
        assert_eq!(labels[0], Some(0));
        assert_eq!(labels[5], Some(1));
    }

    #[test]
    fn bad_params() {
        assert!(dbscan(0.0, 2, &[]).is_err());
        assert!(dbscan(1.0, 0, &[]).is_err());
        assert_eq!(dbscan(1.0, 3, &[]).unwrap(), Vec::<Option<usize>>::new());
    }
}
