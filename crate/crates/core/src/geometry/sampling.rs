use super::PointCloud;
use crate::error::{Error, Result};

/// Greedy max-min subsampling. The first element is `seed_index`; each later
/// pick maximises its squared distance to the nearest already-selected point,
/// ties going to the smaller index.
pub fn farthest_point_sampling(cloud: &PointCloud, m: usize, seed_index: usize) -> Result<Vec<usize>> {
    let n = cloud.len();
    if m == 0 || m > n {
        return Err(Error::invalid(format!("cannot sample {m} of {n} points")));
    }
    cloud.check_index(seed_index)?;

    let pts = &cloud.points;
    let mut selected = Vec::with_capacity(m);
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut taken = vec![false; n];
    let mut current = seed_index;
    selected.push(current);
    taken[current] = true;

    while selected.len() < m {
        let c = pts[current];
        let mut best = usize::MAX;
        let mut best_d2 = f64::NEG_INFINITY;
        for (i, p) in pts.iter().enumerate() {
            let d2 = (p - c).norm_squared();
            if d2 < min_d2[i] {
                min_d2[i] = d2;
            }
            if !taken[i] && min_d2[i] > best_d2 {
                best_d2 = min_d2[i];
                best = i;
            }
        }
        current = best;
        taken[current] = true;
        selected.push(current);
    }
    Ok(selected)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> PointCloud {
        PointCloud::from_coords(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0]]).unwrap()
    }

    #[test]
    fn three_points_on_a_line() {
        assert_eq!(farthest_point_sampling(&line(), 3, 0).unwrap(), vec![0, 2, 1]);
    }

    #[test]
    fn single_pick_is_seed() {
        for s in 0..3 {
            assert_eq!(farthest_point_sampling(&line(), 1, s).unwrap(), vec![s]);
        }
    }

    #[test]
    fn exhaustive_pick_is_permutation() {
        let mut got = farthest_point_sampling(&line(), 3, 1).unwrap();
        got.sort_unstable();
        assert_eq!(got, vec![0, 1, 2]);
    }

    #[test]
    fn duplicate_points_still_distinct_indices() {
        let c = PointCloud::from_coords(&[[0.0; 3], [0.0; 3], [0.0; 3]]).unwrap();
        let mut got = farthest_point_sampling(&c, 3, 2).unwrap();
        assert_eq!(got[0], 2);
        got.sort_unstable();
        assert_eq!(got, vec![0, 1, 2]);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(farthest_point_sampling(&line(), 4, 0).is_err());
        assert!(farthest_point_sampling(&line(), 0, 0).is_err());
        assert!(farthest_point_sampling(&line(), 2, 3).is_err());
    }
}
