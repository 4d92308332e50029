use nalgebra::{Matrix3, SymmetricEigen};

use super::{PointCloud, Vec3};
use crate::error::{Error, Result};
use crate::par;

pub const DEFAULT_NORMAL_NEIGHBORS: usize = 10;

/// Second-smallest eigenvalue below this fraction of the largest means the
/// neighbourhood spans at most a line.
const RANK_GAP: f64 = 1e-9;

/// Components smaller than this are treated as zero by the sign rule.
const SIGN_EPS: f64 = 1e-12;

/// Indices of the `k` nearest points to `query` (excluding it), ties by index.
pub(crate) fn k_nearest(cloud: &PointCloud, query: usize, k: usize) -> Vec<usize> {
    let q = cloud.points[query];
    let mut cand: Vec<(f64, usize)> = cloud
        .points
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != query)
        .map(|(i, p)| ((p - q).norm_squared(), i))
        .collect();
    let k = k.min(cand.len());
    if k < cand.len() {
        cand.select_nth_unstable_by(k, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cand.truncate(k);
    }
    cand.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cand.into_iter().map(|(_, i)| i).collect()
}

/// Normal at `query` from the covariance of its `k_neighbors` nearest
/// neighbours about the query point itself: the eigenvector of the smallest
/// eigenvalue, flipped so that its first non-zero component is positive.
pub fn estimate_normal(cloud: &PointCloud, query: usize, k_neighbors: usize) -> Result<Vec3> {
    cloud.check_index(query)?;
    if k_neighbors == 0 {
        return Err(Error::invalid("k_neighbors must be >= 1"));
    }
    if cloud.len() < k_neighbors + 1 {
        return Err(Error::invalid(format!(
            "normal estimation needs {} points, cloud has {}",
            k_neighbors + 1,
            cloud.len()
        )));
    }
    let q = cloud.points[query];
    let nbrs = k_nearest(cloud, query, k_neighbors);

    let mut cov = Matrix3::<f64>::zeros();
    for &j in &nbrs {
        let d = cloud.points[j] - q;
        cov += d * d.transpose();
    }
    cov /= nbrs.len() as f64;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (l1, l2) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    if l2 <= 0.0 || l1 <= RANK_GAP * l2 {
        return Err(Error::DegenerateNeighborhood { point: query });
    }

    let mut n: Vec3 = eig.eigenvectors.column(order[0]).into_owned();
    n.normalize_mut();
    if let Some(first) = n.iter().find(|c| c.abs() > SIGN_EPS) {
        if *first < 0.0 {
            n = -n;
        }
    }
    Ok(n)
}

/// Normals for every point of the cloud.
pub fn estimate_normals(cloud: &PointCloud, k_neighbors: usize) -> Result<Vec<Vec3>> {
    par::map_range(cloud.len(), |i| estimate_normal(cloud, i, k_neighbors))
        .into_iter()
        .collect()
}
