use std::cmp::Ordering;

use super::{check_unit, PointCloud, Vec3};
use crate::error::{Error, Result};

/// Projections closer than this to the query point carry no direction.
const DEGENERATE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Orientation {
    #[default]
    CounterClockwise,
    Clockwise,
}

/// Orthogonal projection onto the plane through `q` with unit normal `n`:
/// `p = x − ((x − q)·n) n`.
pub fn project_to_tangent(points: &[Vec3], q: &Vec3, n: &Vec3) -> Result<Vec<Vec3>> {
    check_unit(n)?;
    Ok(points.iter().map(|x| project_one(x, q, n)).collect())
}

#[inline]
fn project_one(x: &Vec3, q: &Vec3, n: &Vec3) -> Vec3 {
    x - n * (x - q).dot(n)
}

/// Sort key in (−3, 1] for each point: the cosine to the reference direction
/// on the upper half-turn, `−cos − 2` on the lower half-turn. The start
/// element is pinned to 1; a point projecting onto `q` also gets 1.
///
/// If the start point itself projects onto `q`, the first non-degenerate
/// point after it (cyclically) provides the reference direction.
pub fn angle_keys(points: &[Vec3], q: &Vec3, n: &Vec3, start: usize) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::invalid("cannot order an empty neighbour list"));
    }
    if start >= points.len() {
        return Err(Error::invalid(format!(
            "start position {start} out of range for {} neighbours",
            points.len()
        )));
    }
    let rel: Vec<Vec3> = project_to_tangent(points, q, n)?
        .into_iter()
        .map(|p| p - q)
        .collect();

    let len = rel.len();
    let reference = (0..len)
        .map(|s| rel[(start + s) % len])
        .find(|v| v.norm() >= DEGENERATE);
    let Some(c) = reference else {
        return Ok(vec![1.0; len]);
    };
    let c_norm = c.norm();

    Ok(rel
        .iter()
        .enumerate()
        .map(|(j, d)| {
            let d_norm = d.norm();
            if j == start || d_norm < DEGENERATE {
                return 1.0;
            }
            let cos = (c.dot(d) / (c_norm * d_norm)).clamp(-1.0, 1.0);
            let sign = c.cross(d).dot(n);
            if sign < 0.0 {
                -cos - 2.0
            } else {
                cos
            }
        })
        .collect())
}

/// Reorder `neighbors` around `q` in the tangent plane of `n`, beginning with
/// the element at position `start`. Counterclockwise sorts the remaining
/// elements by descending angle key, clockwise by ascending; equal keys keep
/// ascending point index.
pub fn order_around(
    neighbors: &[usize],
    cloud: &PointCloud,
    q: &Vec3,
    n: &Vec3,
    start: usize,
    orientation: Orientation,
) -> Result<Vec<usize>> {
    for &i in neighbors {
        cloud.check_index(i)?;
    }
    let pts: Vec<Vec3> = neighbors.iter().map(|&i| cloud.points[i]).collect();
    let mut keys = angle_keys(&pts, q, n, start)?;
    // duplicates of the start point share its key exactly
    let start_index = neighbors[start];
    for (k, &i) in keys.iter_mut().zip(neighbors) {
        if i == start_index {
            *k = 1.0;
        }
    }

    let mut rest: Vec<usize> = (0..neighbors.len()).filter(|&j| j != start).collect();
    rest.sort_by(|&a, &b| {
        let by_key = match orientation {
            Orientation::CounterClockwise => keys[b].total_cmp(&keys[a]),
            Orientation::Clockwise => keys[a].total_cmp(&keys[b]),
        };
        match by_key {
            Ordering::Equal => neighbors[a].cmp(&neighbors[b]),
            o => o,
        }
    });

    let mut out = Vec::with_capacity(neighbors.len());
    out.push(start_index);
    out.extend(rest.into_iter().map(|j| neighbors[j]));
    Ok(out)
}

/// Counterclockwise ordering about `n`, starting from `neighbors[start]`.
pub fn order_counterclockwise(
    neighbors: &[usize],
    cloud: &PointCloud,
    q: &Vec3,
    n: &Vec3,
    start: usize,
) -> Result<Vec<usize>> {
    order_around(neighbors, cloud, q, n, start, Orientation::CounterClockwise)
}
