use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::par;
use crate::spatial::KdTree;

/// Cluster assignment produced by [`dbscan`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DbscanLabels {
    /// Cluster id per point, `None` for noise.
    pub labels: Vec<Option<usize>>,
    pub is_core: Vec<bool>,
    pub n_clusters: usize,
}

impl DbscanLabels {
    /// Point indices of every cluster, each list ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (i, l) in self.labels.iter().enumerate() {
            if let Some(c) = l {
                out[*c].push(i);
            }
        }
        out
    }
}

/// Density-based clustering.
///
/// A point is core when at least `min_pts` points, itself included, lie
/// within `eps`. Clusters are grown from unvisited core points in index
/// order, so cluster ids follow the smallest core index of each cluster and a
/// border point reachable from several clusters joins the lowest id.
pub fn dbscan<const D: usize>(points: &[[f64; D]], eps: f64, min_pts: usize) -> DbscanLabels {
    let n = points.len();
    let tree = KdTree::new(points);
    let is_core: Vec<bool> = par::map_range(n, |i| tree.count_within(&points[i], eps) >= min_pts);

    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut n_clusters = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if !is_core[start] || labels[start].is_some() {
            continue;
        }
        let id = n_clusters;
        n_clusters += 1;
        labels[start] = Some(id);
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            tree.for_each_within(&points[p], eps, |q, _| {
                if labels[q].is_none() {
                    labels[q] = Some(id);
                    if is_core[q] {
                        queue.push_back(q);
                    }
                }
            });
        }
    }
    DbscanLabels {
        labels,
        is_core,
        n_clusters,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_blobs() {
        let mut pts = Vec::new();
        for i in 0..100 {
            let t = i as f64 * 0.001;
            pts.push([t, 0.0]);
            pts.push([1.0 + t, 0.0]);
        }
        let l = dbscan(&pts, 0.1, 5);
        assert_eq!(l.n_clusters, 2);
        assert!(l.labels.iter().all(|x| x.is_some()));
        assert_eq!(l.labels[0], Some(0));
        assert_eq!(l.labels[1], Some(1));
    }

    #[test]
    fn isolated_point_is_noise() {
        let l = dbscan(&[[0.0, 0.0, 0.0]], 0.1, 2);
        assert_eq!(l.labels, vec![None]);
        assert_eq!(l.n_clusters, 0);
        // with min_pts = 1 every point is its own core
        assert_eq!(dbscan(&[[0.0, 0.0, 0.0]], 0.1, 1).labels, vec![Some(0)]);
    }

    #[test]
    fn border_goes_to_lowest_cluster() {
        let pts = [[0.0], [0.05], [0.1], [0.2], [1.0], [1.8], [1.9], [1.95], [2.0]];
        let l = dbscan(&pts, 0.82, 4);
        assert!(!l.is_core[4]);
        assert_eq!(l.n_clusters, 2);
        assert_eq!(l.labels[4], Some(0));
        assert_eq!(l.labels[5], Some(1));
    }
}
