//! Spatial primitives. Everything here runs in double precision.

mod normals;
mod ordering;
mod rings;
mod sampling;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub use normals::{estimate_normal, estimate_normals, DEFAULT_NORMAL_NEIGHBORS};
pub use ordering::{angle_keys, order_around, order_counterclockwise, project_to_tangent, Orientation};
pub use rings::{build_neighborhood, redundancy_rate, ring_from_distances, ring_knn, Neighborhood, RingQuery};
pub use sampling::farthest_point_sampling;

pub type Vec3 = Vector3<f64>;

/// Tolerance on `‖n‖ − 1` for anything treated as a unit normal.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// N points in 3-space with optional unit normals and per-point labels.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
    pub labels: Option<Vec<u32>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        let cloud = PointCloud {
            points,
            normals: None,
            labels: None,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn with_normals(mut self, normals: Vec<Vec3>) -> Result<Self> {
        self.normals = Some(normals);
        self.validate()?;
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        self.labels = Some(labels);
        self.validate()?;
        Ok(self)
    }

    pub fn from_coords(coords: &[[f64; 3]]) -> Result<Self> {
        Self::new(coords.iter().map(|c| Vec3::from(*c)).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if n == 0 {
            return Err(Error::invalid("point cloud is empty"));
        }
        if let Some(i) = self.points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid(format!("point {i} has a non-finite coordinate")));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != n {
                return Err(Error::invalid(format!(
                    "{} normals for {n} points",
                    normals.len()
                )));
            }
            if let Some(i) = normals
                .iter()
                .position(|v| (v.norm() - 1.0).abs() > UNIT_TOLERANCE)
            {
                return Err(Error::invalid(format!("normal {i} is not unit length")));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(Error::invalid(format!("{} labels for {n} points", labels.len())));
            }
        }
        Ok(())
    }

    pub(crate) fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.points.len() {
            return Err(Error::invalid(format!(
                "point index {i} out of range for {} points",
                self.points.len()
            )));
        }
        Ok(())
    }

    /// Subset of the cloud in the given index order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| indices.iter().map(|&i| n[i]).collect()),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }
}

/// Annulus `(r_inner, r_outer]` with a neighbour budget `k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RingSpec {
    pub r_inner: f64,
    pub r_outer: f64,
    pub k: usize,
}

impl RingSpec {
    pub fn new(r_inner: f64, r_outer: f64, k: usize) -> Result<Self> {
        let ring = RingSpec { r_inner, r_outer, k };
        ring.validate()?;
        Ok(ring)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_inner.is_finite() && self.r_outer.is_finite()) {
            return Err(Error::invalid("ring radii must be finite"));
        }
        if !(0.0 <= self.r_inner && self.r_inner < self.r_outer) {
            return Err(Error::invalid(format!(
                "ring radii must satisfy 0 <= inner < outer, got ({}, {}]",
                self.r_inner, self.r_outer
            )));
        }
        if self.k == 0 {
            return Err(Error::invalid("ring neighbour budget k must be >= 1"));
        }
        Ok(())
    }

    #[inline]
    pub fn contains(&self, distance: f64) -> bool {
        distance > self.r_inner && distance <= self.r_outer
    }

    /// The overlapping search region used by the ball-query ablation.
    pub fn as_ball(&self) -> RingSpec {
        RingSpec {
            r_inner: 0.0,
            ..*self
        }
    }
}

pub(crate) fn check_unit(n: &Vec3) -> Result<()> {
    if !n.iter().all(|c| c.is_finite()) || (n.norm() - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::invalid(format!(
            "normal ({}, {}, {}) is not unit length",
            n.x, n.y, n.z
        )));
    }
    Ok(())
}
