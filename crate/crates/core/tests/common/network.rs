//! Network-level fixtures and checks shared by the integration tests and the
//! acceptance harness.

use acnn::data::{generate_shape, ShapeKind};
use acnn::geometry::{estimate_normals, PointCloud, Vec3};
use acnn::network::{
    interpolate_features, AblationVariant, InterpTable, Labeled, Model, ModelOptions, NetworkConfig, PlanOptions,
    StartRule,
};
use acnn::numeric::{Mode, Tensor};
use rand::Rng;

use super::rng;

/// A random primitive with analytic normals.
pub fn shape_cloud(rng: &mut impl Rng, points: usize) -> (PointCloud, usize) {
    let label = rng.random_range(0..ShapeKind::ALL.len());
    let spec = ShapeKind::ALL[label].random_spec(points, rng);
    (generate_shape(&spec, rng).unwrap(), label)
}

/// Three-layer encoder sized for 64-point clouds.
pub fn small_config(head: &str) -> NetworkConfig {
    let text = format!(
        "layer centroids=32 rings=0:0.3:6,0.3:0.6:8 features=8,8|8,16\n\
         layer centroids=8 rings=0:0.6:4,0.6:1.2:6 features=16,16|16,32\n\
         layer centroids=1 rings=0:10:8 features=32,64 kernel=1\n\
         {head}\n"
    );
    NetworkConfig::parse(&text, std::path::Path::new("small.cfg")).unwrap()
}

/// Largest absolute logit difference between the closest-member start and a
/// random start, over `clouds` fresh clouds and weights.
pub fn start_invariance(seed: u64, clouds: usize) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..clouds {
        let (cloud, _) = shape_cloud(&mut r, 256);
        let model = Model::<f32>::new(NetworkConfig::desk_3l(5), AblationVariant::Full, ModelOptions::default(), &mut r)
            .unwrap();
        let fps_seed = r.random_range(0..cloud.len());
        let closest = PlanOptions { fps_seed, start: StartRule::Closest };
        let random = PlanOptions { fps_seed, start: StartRule::Random };
        let a = model.plan(&cloud, closest, &mut r).unwrap();
        let b = model.plan(&cloud, random, &mut r).unwrap();
        let (la, _) = model.forward(&[a], Mode::Eval, &mut r).unwrap();
        let (lb, _) = model.forward(&[b], Mode::Eval, &mut r).unwrap();
        for (x, y) in la.data().iter().zip(lb.data()) {
            worst = worst.max((x - y).abs() as f64);
        }
    }
    worst
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Worst error of each inverse-square-distance interpolation case.
pub fn interpolation_cases(seed: u64) -> Vec<(&'static str, f64)> {
    let far = Vec3::new(9.0, 9.0, 9.0);
    let feats = Tensor::matrix(4, 2, vec![1.0, -3.0, 2.0, 5.0, 4.0, 0.5, 100.0, 100.0]).unwrap();
    let row = |i: usize| feats.row(i).to_vec();
    let mut out = Vec::new();

    let known = vec![Vec3::new(0.3, -0.2, 0.5), Vec3::new(-0.7, 0.1, 0.2), Vec3::new(0.4, 0.9, -0.6), far];
    let got = interpolate_features(&known, &feats, &[known[1]]).unwrap();
    out.push(("coincident point", max_abs_diff(got.data(), &row(1))));

    let known = vec![Vec3::x(), Vec3::y(), Vec3::z(), far];
    let got = interpolate_features(&known, &feats, &[Vec3::zeros()]).unwrap();
    let mean: Vec<f64> = (0..2).map(|c| (row(0)[c] + row(1)[c] + row(2)[c]) / 3.0).collect();
    out.push(("equidistant mean", max_abs_diff(got.data(), &mean)));

    let known = vec![Vec3::x(), Vec3::new(0.0, 2.0, 0.0), Vec3::new(0.0, -2.0, 0.0), far];
    let got = interpolate_features(&known, &feats, &[Vec3::zeros()]).unwrap();
    let want: Vec<f64> = (0..2).map(|c| (row(0)[c] + 0.25 * row(1)[c] + 0.25 * row(2)[c]) / 1.5).collect();
    out.push(("distances 1,2,2", max_abs_diff(got.data(), &want)));

    // weights sum to one and outputs stay inside the per-channel hull
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = r.random_range(3..40);
        let pts: Vec<Vec3> = (0..n).map(|_| super::random_unit(&mut r) * r.random_range(0.0..1.0)).collect();
        let queries: Vec<Vec3> = (0..20).map(|_| super::random_unit(&mut r) * r.random_range(0.0..1.2)).collect();
        let f: Vec<f64> = (0..n * 3).map(|_| r.random_range(-5.0..5.0)).collect();
        let table = InterpTable::build(&pts, &queries).unwrap();
        let vals = table.apply(&f, 3);
        for (q, w) in table.weight.iter().enumerate() {
            worst = worst.max((w.iter().sum::<f64>() - 1.0).abs());
            for c in 0..3 {
                let src: Vec<f64> = table.index[q].iter().map(|&j| f[j * 3 + c]).collect();
                let lo = src.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = src.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let v = vals[q * 3 + c];
                worst = worst.max(lo - v).max(v - hi);
            }
        }
    }
    out.push(("weight normalisation", worst));
    out
}

/// A ball-shaped cluster centred at `+z` (class 0) or `-z` (class 1). The
/// classes are separable by the mean height alone.
pub fn toy_sample(rng: &mut impl Rng, label: usize, points: usize) -> Labeled {
    let centre = Vec3::new(0.0, 0.0, if label == 0 { 0.5 } else { -0.5 });
    let pts: Vec<Vec3> = (0..points)
        .map(|_| centre + super::random_unit(rng) * 0.4 * rng.random_range(0.0f64..1.0).cbrt())
        .collect();
    let cloud = PointCloud::new(pts).unwrap();
    let normals = estimate_normals(&cloud, 10).unwrap();
    Labeled {
        cloud: cloud.with_normals(normals).unwrap(),
        label,
    }
}

pub fn toy_dataset(seed: u64, per_class: usize, points: usize) -> Vec<Labeled> {
    let mut r = rng(seed);
    (0..2 * per_class).map(|i| toy_sample(&mut r, i % 2, points)).collect()
}
