use std::collections::HashSet;

use super::{order_around, Orientation, PointCloud, RingSpec, Vec3};
use crate::error::{Error, Result};

/// Result of a ring-constrained neighbour search.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RingQuery {
    /// Exactly `k` point indices. Padded by repeating the closest member, or
    /// by the centroid itself when the ring is empty.
    pub indices: Vec<usize>,
    /// Qualifying neighbours before padding, by ascending distance.
    pub members: Vec<usize>,
}

impl RingQuery {
    /// True when no point fell inside the ring and `indices` holds only the
    /// centroid.
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn found(&self) -> usize {
        self.members.len()
    }
}

/// Distance-sorted members of `ring` given precomputed centroid distances.
pub fn ring_from_distances(distances: &[f64], centroid: usize, ring: &RingSpec) -> RingQuery {
    let mut cand: Vec<(f64, usize)> = distances
        .iter()
        .enumerate()
        .filter(|&(i, &d)| i != centroid && ring.contains(d))
        .map(|(i, &d)| (d, i))
        .collect();
    let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if cand.len() > ring.k {
        cand.select_nth_unstable_by(ring.k, by_distance);
        cand.truncate(ring.k);
    }
    cand.sort_unstable_by(by_distance);
    let members: Vec<usize> = cand.into_iter().map(|(_, i)| i).collect();

    let mut indices = members.clone();
    let pad = members.first().copied().unwrap_or(centroid);
    indices.resize(ring.k, pad);
    RingQuery { indices, members }
}

pub(crate) fn distances_from(cloud: &PointCloud, centroid: usize) -> Vec<f64> {
    let q = cloud.points[centroid];
    cloud.points.iter().map(|p| (p - q).norm()).collect()
}

/// Points whose distance `d` to the centroid satisfies `r_inner < d <= r_outer`,
/// closest first, truncated or padded to exactly `ring.k` entries.
pub fn ring_knn(cloud: &PointCloud, centroid: usize, ring: &RingSpec) -> Result<RingQuery> {
    cloud.check_index(centroid)?;
    ring.validate()?;
    Ok(ring_from_distances(&distances_from(cloud, centroid), centroid, ring))
}

/// A centroid with one ordered neighbour list per ring.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighborhood {
    pub centroid: usize,
    pub normal: Vec3,
    /// `rings[r].indices` is in traversal order starting from the closest member.
    pub rings: Vec<RingQuery>,
}

/// Ring search plus tangent-plane ordering for every ring of one centroid,
/// using the cloud's normal at the centroid.
pub fn build_neighborhood(
    cloud: &PointCloud,
    centroid: usize,
    rings: &[RingSpec],
    orientation: Orientation,
) -> Result<Neighborhood> {
    cloud.check_index(centroid)?;
    let normals = cloud.normals.as_ref().ok_or(Error::NormalsRequired)?;
    let normal = normals[centroid];
    let q = cloud.points[centroid];
    let dist = distances_from(cloud, centroid);
    let mut out = Vec::with_capacity(rings.len());
    for ring in rings {
        ring.validate()?;
        let mut query = ring_from_distances(&dist, centroid, ring);
        query.indices = order_around(&query.indices, cloud, &q, &normal, 0, orientation)?;
        out.push(query);
    }
    Ok(Neighborhood {
        centroid,
        normal,
        rings: out,
    })
}

/// Fraction of pre-padding neighbour entries that repeat a point already
/// gathered by another ring of the same centroid. Zero for disjoint rings.
pub fn redundancy_rate(neighborhoods: &[Neighborhood]) -> f64 {
    let mut total = 0usize;
    let mut repeated = 0usize;
    for nb in neighborhoods {
        let mut seen = HashSet::new();
        for ring in &nb.rings {
            for &i in &ring.members {
                total += 1;
                if !seen.insert(i) {
                    repeated += 1;
                }
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        repeated as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud() -> PointCloud {
        PointCloud::from_coords(&[
            [0.0, 0.0, 0.0],
            [0.25, 0.0, 0.0],
            [0.0, 0.05, 0.0],
            [0.0, 0.0, 0.15],
        ])
        .unwrap()
    }

    #[test]
    fn single_qualifier() {
        let r = ring_knn(&cloud(), 0, &RingSpec::new(0.1, 0.2, 1).unwrap()).unwrap();
        assert_eq!(r.indices, vec![3]);
    }

    #[test]
    fn pads_with_closest() {
        let r = ring_knn(&cloud(), 0, &RingSpec::new(0.1, 0.2, 3).unwrap()).unwrap();
        assert_eq!(r.indices, vec![3, 3, 3]);
        assert_eq!(r.members, vec![3]);
    }

    #[test]
    fn excludes_centroid() {
        let r = ring_knn(&cloud(), 0, &RingSpec::new(0.0, 0.1, 1).unwrap()).unwrap();
        assert_eq!(r.indices, vec![2]);
        let r = ring_knn(&cloud(), 0, &RingSpec::new(0.0, 1.0, 4).unwrap()).unwrap();
        assert_eq!(r.indices, vec![2, 3, 1, 2]);
    }

    #[test]
    fn empty_ring_pads_with_centroid() {
        let r = ring_knn(&cloud(), 1, &RingSpec::new(2.0, 3.0, 2).unwrap()).unwrap();
        assert!(r.is_empty());
        assert_eq!(r.indices, vec![1, 1]);
    }

    #[test]
    fn outer_boundary_is_closed_inner_open() {
        let c = PointCloud::from_coords(&[[0.0; 3], [0.5, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        let r = ring_knn(&c, 0, &RingSpec::new(0.5, 1.0, 2).unwrap()).unwrap();
        assert_eq!(r.members, vec![2]);
        let r = ring_knn(&c, 0, &RingSpec::new(0.0, 0.5, 2).unwrap()).unwrap();
        assert_eq!(r.members, vec![1]);
    }

    #[test]
    fn distance_ties_by_index() {
        let c = PointCloud::from_coords(&[[0.0; 3], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
            .unwrap();
        let r = ring_knn(&c, 0, &RingSpec::new(0.0, 2.0, 2).unwrap()).unwrap();
        assert_eq!(r.indices, vec![1, 2]);
    }

    #[test]
    fn redundancy_counts_shared_members() {
        let nb = |a: Vec<usize>, b: Vec<usize>| Neighborhood {
            centroid: 0,
            normal: Vec3::z(),
            rings: vec![
                RingQuery { indices: a.clone(), members: a },
                RingQuery { indices: b.clone(), members: b },
            ],
        };
        assert_eq!(redundancy_rate(&[nb(vec![1, 2], vec![3, 4])]), 0.0);
        assert_eq!(redundancy_rate(&[nb(vec![1, 2], vec![1, 2, 3, 4])]), 2.0 / 6.0);
        assert_eq!(redundancy_rate(&[]), 0.0);
    }
}
