//! Floater removal, oriented box fitting, and per-task object selection.

use std::cmp::Ordering;

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::types::{Mat3, ObjectCluster, OrientedBox, Vec3};

/// Smallest half extent given to a degenerate box dimension, in metres.
pub const MIN_HALF_EXTENT: f64 = 1e-4;

/// Statistical outlier removal on k-nearest-neighbour distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnParams {
    pub k: usize,
    pub alpha: f64,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 8, alpha: 2.0 }
    }
}

/// Indices of the points to keep, ascending.
///
/// A point is dropped when the mean distance to its `k` nearest neighbours
/// exceeds `mean + alpha * std` of that statistic over all points. Sets of at
/// most `k + 1` points are returned whole.
pub fn knn_filter(points: &[Vec3], k: usize, alpha: f64) -> Vec<usize> {
    let n = points.len();
    if k == 0 || n <= k + 1 {
        return (0..n).collect();
    }
    let mut scratch = Vec::with_capacity(n - 1);
    let mean_dists: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            scratch.clear();
            scratch.extend(
                points
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, q)| (p - q).norm_squared()),
            );
            scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
            scratch[..k].iter().map(|d| d.sqrt()).sum::<f64>() / k as f64
        })
        .collect();
    let mean = mean_dists.iter().sum::<f64>() / n as f64;
    let var = mean_dists.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n as f64;
    let threshold = mean + alpha * var.sqrt();
    (0..n).filter(|&i| mean_dists[i] <= threshold).collect()
}

/// Principal-axis box around a point set.
///
/// Axes are covariance eigenvectors ordered by decreasing variance, each with
/// its largest-magnitude component made positive; the third axis is flipped
/// if needed to keep the frame right-handed.
pub fn fit_obb(points: &[Vec3]) -> Result<OrientedBox> {
    if points.is_empty() {
        return Err(Error::EmptyInput("point set"));
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / n;
    let cov = points.iter().fold(Mat3::zeros(), |acc, p| {
        let d = p - mean;
        acc + d * d.transpose()
    }) / n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut rotation = Mat3::zeros();
    for (col, &src) in order.iter().enumerate() {
        let mut axis: Vec3 = eig.eigenvectors.column(src).normalize();
        let dominant = (0..3)
            .max_by(|&a, &b| axis[a].abs().partial_cmp(&axis[b].abs()).unwrap_or(Ordering::Equal).then(b.cmp(&a)))
            .unwrap_or(0);
        if axis[dominant] < 0.0 {
            axis = -axis;
        }
        rotation.set_column(col, &axis);
    }
    if rotation.determinant() < 0.0 {
        let flipped = -rotation.column(2);
        rotation.set_column(2, &flipped);
    }
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        let local = rotation.transpose() * (p - mean);
        lo = lo.inf(&local);
        hi = hi.sup(&local);
    }
    let mid = (lo + hi) / 2.0;
    let half_extents = ((hi - lo) / 2.0).map(|h| h.max(MIN_HALF_EXTENT));
    Ok(OrientedBox {
        center: mean + rotation * mid,
        rotation,
        half_extents,
    })
}

fn check_task(cluster: &ObjectCluster, task_index: usize) -> Result<()> {
    let count = cluster.task_dist.len().saturating_sub(1);
    if task_index >= count {
        return Err(Error::TaskIndex {
            index: task_index,
            count,
        });
    }
    Ok(())
}

fn ranked(clusters: &[ObjectCluster], task_index: usize) -> Result<Vec<&ObjectCluster>> {
    for c in clusters {
        check_task(c, task_index)?;
    }
    let mut order: Vec<&ObjectCluster> = clusters.iter().collect();
    order.sort_by(|a, b| {
        b.task_dist[task_index]
            .total_cmp(&a.task_dist[task_index])
            .then(a.id.cmp(&b.id))
    });
    Ok(order)
}

/// The `k` most relevant clusters for a task, most relevant first; ties go to
/// the lower cluster id. Returns everything when `k` exceeds the cluster count.
pub fn select_top_k(clusters: &[ObjectCluster], task_index: usize, k: usize) -> Result<Vec<&ObjectCluster>> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let mut order = ranked(clusters, task_index)?;
    order.truncate(k);
    Ok(order)
}

/// Every cluster whose task probability is at least `fraction` of the best
/// one, most relevant first.
pub fn select_fraction(
    clusters: &[ObjectCluster],
    task_index: usize,
    fraction: f64,
) -> Result<Vec<&ObjectCluster>> {
    if clusters.is_empty() {
        return Err(Error::EmptyInput("cluster list"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParameter("fraction must lie in (0, 1]".into()));
    }
    let order = ranked(clusters, task_index)?;
    let best = order[0].task_dist[task_index];
    Ok(order
        .into_iter()
        .filter(|c| c.task_dist[task_index] >= fraction * best)
        .collect())
}
