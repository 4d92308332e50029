use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{PointCloud, Vec3};

/// Ranges for [`augment`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    pub scale_min: f64,
    pub scale_max: f64,
    pub shift: f64,
    pub jitter_sigma: f64,
    pub jitter_clip: f64,
    pub shuffle: bool,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            scale_min: 0.8,
            scale_max: 1.25,
            shift: 0.1,
            jitter_sigma: 0.01,
            jitter_clip: 0.05,
            shuffle: true,
        }
    }
}

impl AugmentParams {
    /// No scaling, shifting or jitter; only the shuffle remains.
    pub fn identity() -> Self {
        AugmentParams {
            scale_min: 1.0,
            scale_max: 1.0,
            shift: 0.0,
            jitter_sigma: 0.0,
            jitter_clip: 0.0,
            shuffle: true,
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Random scale, per-axis shift, clipped Gaussian jitter, then a point
/// shuffle. Normals and labels follow their points but are not altered.
pub fn augment<R: Rng + ?Sized>(cloud: &PointCloud, params: &AugmentParams, rng: &mut R) -> PointCloud {
    let s = uniform(rng, params.scale_min, params.scale_max);
    let t = Vec3::new(
        uniform(rng, -params.shift, params.shift),
        uniform(rng, -params.shift, params.shift),
        uniform(rng, -params.shift, params.shift),
    );
    let jitter = (params.jitter_sigma > 0.0).then(|| Normal::new(0.0, params.jitter_sigma).unwrap());
    let mut points: Vec<Vec3> = cloud
        .points
        .iter()
        .map(|p| {
            let mut q = p * s + t;
            if let Some(d) = &jitter {
                for k in 0..3 {
                    q[k] += d.sample(rng).clamp(-params.jitter_clip, params.jitter_clip);
                }
            }
            q
        })
        .collect();
    let mut perm: Vec<usize> = (0..cloud.len()).collect();
    if params.shuffle {
        perm.shuffle(rng);
    }
    points = perm.iter().map(|&i| points[i]).collect();
    PointCloud {
        points,
        normals: cloud.normals.as_ref().map(|n| perm.iter().map(|&i| n[i]).collect()),
        labels: cloud.labels.as_ref().map(|l| perm.iter().map(|&i| l[i]).collect()),
    }
}
