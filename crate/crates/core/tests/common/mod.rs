//! Independent reference implementations and property checks shared by the
//! integration tests and the acceptance harness.
#![allow(dead_code)]

use std::f64::consts::TAU;

use acnn::geometry::{
    build_neighborhood, farthest_point_sampling, order_around, project_to_tangent, ring_knn,
    Orientation, PointCloud, RingSpec, Vec3,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub mod formats;
pub mod network;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Uniform points in the unit cube, or on a coarse lattice when `lattice` is
/// set so that equal distances (and therefore tie-breaks) are common.
pub fn random_cloud(rng: &mut impl Rng, n: usize, lattice: bool) -> PointCloud {
    let pts = (0..n)
        .map(|_| {
            if lattice {
                let mut c = || rng.random_range(-4i32..=4) as f64 * 0.125;
                Vec3::new(c(), c(), c())
            } else {
                Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            }
        })
        .collect();
    PointCloud::new(pts).unwrap()
}

/// Filter by the half-open shell, sort by (distance, index), truncate, pad.
pub fn ring_oracle(cloud: &PointCloud, centroid: usize, ring: &RingSpec) -> Vec<usize> {
    let q = cloud.points[centroid];
    let mut hits = Vec::new();
    for (i, p) in cloud.points.iter().enumerate() {
        if i == centroid {
            continue;
        }
        let d = (p - q).norm();
        if d > ring.r_inner && d <= ring.r_outer {
            hits.push((d, i));
        }
    }
    hits.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut out: Vec<usize> = hits.iter().take(ring.k).map(|h| h.1).collect();
    let pad = out.first().copied().unwrap_or(centroid);
    while out.len() < ring.k {
        out.push(pad);
    }
    out
}

/// Greedy max-min selection, recomputing every candidate's distance to the
/// whole selected set at each step.
pub fn fps_oracle(cloud: &PointCloud, m: usize, seed: usize) -> Vec<usize> {
    let pts = &cloud.points;
    let mut sel = vec![seed];
    while sel.len() < m {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..pts.len() {
            if sel.contains(&i) {
                continue;
            }
            let d = sel
                .iter()
                .map(|&s| (pts[i] - pts[s]).norm_squared())
                .fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(bd, _)| d > bd) {
                best = Some((d, i));
            }
        }
        sel.push(best.unwrap().1);
    }
    sel
}

/// Positions of `points` sorted counterclockwise about `n` by their atan2
/// angle in an arbitrary tangent frame.
pub fn atan2_order(points: &[Vec3], q: &Vec3, n: &Vec3) -> Vec<usize> {
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = n.cross(&helper).normalize();
    let v = n.cross(&u);
    let mut ang: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let d = p - q;
            (d.dot(&v).atan2(d.dot(&u)).rem_euclid(TAU), j)
        })
        .collect();
    ang.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    ang.into_iter().map(|a| a.1).collect()
}

pub fn is_cyclic_shift<T: PartialEq>(a: &[T], b: &[T]) -> bool {
    a.len() == b.len() && (a.is_empty() || (0..a.len()).any(|s| (0..a.len()).all(|i| a[(i + s) % a.len()] == b[i])))
}

/// Random ring specs; adjacent rings share a boundary radius when `touching`.
pub fn random_rings(rng: &mut impl Rng, count: usize, touching: bool) -> Vec<RingSpec> {
    let mut r = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.3) };
    (0..count)
        .map(|_| {
            let outer = r + rng.random_range(0.05..0.6);
            let spec = RingSpec::new(r, outer, rng.random_range(1..=24)).unwrap();
            r = if touching { outer } else { outer + rng.random_range(0.0..0.2) };
            spec
        })
        .collect()
}

#[derive(Debug, Default)]
pub struct OracleSummary {
    pub ring_clouds: usize,
    pub ring_queries: usize,
    pub fps_runs: usize,
    pub orderings: usize,
    pub failures: Vec<String>,
}

impl OracleSummary {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn ring_oracle_suite(seed: u64, clouds: usize, summary: &mut OracleSummary) {
    let mut rng = rng(seed);
    for c in 0..clouds {
        let n = rng.random_range(2..=512);
        let cloud = random_cloud(&mut rng, n, c % 4 == 0);
        for _ in 0..4 {
            let centroid = rng.random_range(0..n);
            for ring in random_rings(&mut rng, 3, true) {
                let got = ring_knn(&cloud, centroid, &ring).unwrap().indices;
                let want = ring_oracle(&cloud, centroid, &ring);
                summary.ring_queries += 1;
                if got != want {
                    summary.failures.push(format!("ring_knn cloud {c} centroid {centroid} {ring:?}"));
                }
            }
        }
        summary.ring_clouds += 1;
    }
}

pub fn fps_oracle_suite(seed: u64, clouds: usize, summary: &mut OracleSummary) {
    let mut rng = rng(seed);
    for c in 0..clouds {
        let lattice = c % 3 == 0;
        if c % 4 == 0 {
            // small clouds: every seed index, full exhaustion
            let n = rng.random_range(1..=24);
            let cloud = random_cloud(&mut rng, n, lattice);
            for s in 0..n {
                check_fps(&cloud, n, s, summary);
            }
        } else {
            let n = rng.random_range(2..=256);
            let cloud = random_cloud(&mut rng, n, lattice);
            let m = rng.random_range(1..=n.min(48));
            check_fps(&cloud, m, rng.random_range(0..n), summary);
        }
    }
}

fn check_fps(cloud: &PointCloud, m: usize, s: usize, summary: &mut OracleSummary) {
    summary.fps_runs += 1;
    let got = farthest_point_sampling(cloud, m, s).unwrap();
    if got != fps_oracle(cloud, m, s) {
        summary.failures.push(format!("fps n={} m={m} seed={s}", cloud.len()));
    }
}

/// Random neighbour sets around a random point, ordered both ways and compared
/// with the atan2 oracle.
pub fn ordering_oracle_suite(seed: u64, cases: usize, summary: &mut OracleSummary) {
    let mut rng = rng(seed);
    for c in 0..cases {
        let k = rng.random_range(1..=40);
        let q = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = random_unit(&mut rng);
        let mut pts = vec![q];
        pts.extend((0..k).map(|_| q + random_unit(&mut rng) * rng.random_range(0.05..1.0)));
        let cloud = PointCloud::new(pts).unwrap();
        let neighbors: Vec<usize> = (1..=k).collect();
        let start = rng.random_range(0..k);

        let ccw = order_around(&neighbors, &cloud, &q, &n, start, Orientation::CounterClockwise).unwrap();
        let cw = order_around(&neighbors, &cloud, &q, &n, start, Orientation::Clockwise).unwrap();
        let oracle: Vec<usize> = atan2_order(&cloud.points[1..], &q, &n).into_iter().map(|j| j + 1).collect();
        let mut reversed = oracle.clone();
        reversed.reverse();

        summary.orderings += 1;
        if ccw[0] != neighbors[start] || cw[0] != neighbors[start] {
            summary.failures.push(format!("ordering case {c}: start not first"));
        }
        if !is_cyclic_shift(&ccw, &oracle) {
            summary.failures.push(format!("ordering case {c}: counterclockwise differs from oracle"));
        }
        if !is_cyclic_shift(&cw, &reversed) {
            summary.failures.push(format!("ordering case {c}: clockwise differs from oracle"));
        }
    }
}

/// The full oracle battery at acceptance size.
pub fn oracle_suite(seed: u64) -> OracleSummary {
    let mut s = OracleSummary::default();
    ring_oracle_suite(seed, 600, &mut s);
    fps_oracle_suite(seed + 1, 400, &mut s);
    ordering_oracle_suite(seed + 2, 1500, &mut s);
    s
}

// ---------------------------------------------------------------------------
// Property checks. Each runs `cases` proptest cases and reports the first
// minimised counterexample.

fn coords() -> impl Strategy<Value = [f64; 3]> {
    [-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64]
}

fn cloud_strategy(max: usize) -> impl Strategy<Value = PointCloud> {
    prop::collection::vec(coords(), 2..max).prop_map(|c| PointCloud::from_coords(&c).unwrap())
}

fn rings_strategy() -> impl Strategy<Value = Vec<RingSpec>> {
    (0.0..0.4f64, prop::collection::vec((0.02..0.5f64, 0.0..0.2f64, 1usize..16), 1..4)).prop_map(|(start, parts)| {
        let mut r = start;
        parts
            .into_iter()
            .map(|(width, gap, k)| {
                let spec = RingSpec::new(r, r + width, k).unwrap();
                r += width + if gap < 0.1 { 0.0 } else { gap };
                spec
            })
            .collect()
    })
}

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

/// Pre-padding members of non-overlapping rings never share a point and never
/// contain the centroid.
pub fn prop_ring_disjointness(cases: u32) -> Result<(), String> {
    run(cases, (cloud_strategy(128), any::<prop::sample::Index>(), rings_strategy()), |(cloud, c, rings)| {
        let c = c.index(cloud.len());
        let normals = vec![Vec3::z(); cloud.len()];
        let cloud = cloud.with_normals(normals).unwrap();
        let nb = build_neighborhood(&cloud, c, &rings, Orientation::CounterClockwise).unwrap();
        let mut seen = std::collections::HashSet::new();
        for (ring, spec) in nb.rings.iter().zip(&rings) {
            prop_assert_eq!(ring.indices.len(), spec.k);
            for &i in &ring.members {
                prop_assert!(i != c, "centroid returned as neighbour");
                prop_assert!(seen.insert(i), "point {} in two rings", i);
            }
        }
        Ok(())
    })
}

/// Points at exactly the inner radius are excluded and points at exactly the
/// outer radius are included.
pub fn prop_half_open_boundary(cases: u32) -> Result<(), String> {
    let strat = (0.01..1.0f64, 0.01..1.0f64, 0usize..3, 0usize..3, prop::bool::ANY);
    run(cases, strat, |(r_in, width, ax_in, ax_out, negate)| {
        let r_out = r_in + width;
        let axis = |a: usize, r: f64| {
            let mut v = [0.0; 3];
            v[a] = if negate { -r } else { r };
            v
        };
        let cloud = PointCloud::from_coords(&[[0.0; 3], axis(ax_in, r_in), axis(ax_out, r_out)]).unwrap();
        let q = ring_knn(&cloud, 0, &RingSpec::new(r_in, r_out, 2).unwrap()).unwrap();
        prop_assert_eq!(&q.members, &vec![2]);
        let inner = ring_knn(&cloud, 0, &RingSpec::new(0.0, r_in, 2).unwrap()).unwrap();
        prop_assert_eq!(&inner.members, &vec![1]);
        Ok(())
    })
}

/// The centroid never appears among the members, even with duplicate points
/// sitting on top of it.
pub fn prop_centroid_exclusion(cases: u32) -> Result<(), String> {
    run(cases, (cloud_strategy(64), any::<prop::sample::Index>(), 0usize..4, 0.01..2.0f64, 1usize..32), |(cloud, c, dups, r, k)| {
        let c = c.index(cloud.len());
        let mut pts = cloud.points.clone();
        for _ in 0..dups {
            pts.push(pts[c]);
        }
        let cloud = PointCloud::new(pts).unwrap();
        let q = ring_knn(&cloud, c, &RingSpec::new(0.0, r, k).unwrap()).unwrap();
        prop_assert!(!q.members.contains(&c));
        for &i in &q.members {
            prop_assert!((cloud.points[i] - cloud.points[c]).norm() > 0.0);
        }
        if q.members.is_empty() {
            prop_assert!(q.indices.iter().all(|&i| i == c));
        }
        Ok(())
    })
}

fn unit_strategy() -> impl Strategy<Value = Vec3> {
    coords()
        .prop_filter("degenerate direction", |c| Vec3::from(*c).norm() > 1e-3)
        .prop_map(|c| Vec3::from(c).normalize())
}

/// Projected points lie in the tangent plane to within 1e-12.
pub fn prop_projection_residual(cases: u32) -> Result<(), String> {
    run(cases, (prop::collection::vec(coords(), 1..16), coords(), unit_strategy()), |(xs, q, n)| {
        let q = Vec3::from(q);
        let xs: Vec<Vec3> = xs.into_iter().map(Vec3::from).collect();
        for p in project_to_tangent(&xs, &q, &n).unwrap() {
            let r = (p - q).dot(&n).abs();
            prop_assert!(r < 1e-12, "residual {}", r);
        }
        Ok(())
    })
}

/// Projecting twice equals projecting once.
pub fn prop_projection_idempotence(cases: u32) -> Result<(), String> {
    run(cases, (prop::collection::vec(coords(), 1..16), coords(), unit_strategy()), |(xs, q, n)| {
        let q = Vec3::from(q);
        let xs: Vec<Vec3> = xs.into_iter().map(Vec3::from).collect();
        let once = project_to_tangent(&xs, &q, &n).unwrap();
        let twice = project_to_tangent(&once, &q, &n).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).norm() < 1e-12);
        }
        Ok(())
    })
}

pub const PROPERTY_CASES: u32 = 10_000;

pub fn geometry_properties(cases: u32) -> Vec<(&'static str, Result<(), String>)> {
    vec![
        ("ring disjointness", prop_ring_disjointness(cases)),
        ("half-open boundary", prop_half_open_boundary(cases)),
        ("centroid exclusion", prop_centroid_exclusion(cases)),
        ("projection residual", prop_projection_residual(cases)),
        ("projection idempotence", prop_projection_idempotence(cases)),
    ]
}
