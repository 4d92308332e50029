use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vec3};

pub const MIN_SHAPE_POINTS: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ShapeKind {
    Sphere,
    Cube,
    Cylinder,
    Cone,
    Torus,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 5] = [
        ShapeKind::Sphere,
        ShapeKind::Cube,
        ShapeKind::Cylinder,
        ShapeKind::Cone,
        ShapeKind::Torus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Sphere => "sphere",
            ShapeKind::Cube => "cube",
            ShapeKind::Cylinder => "cylinder",
            ShapeKind::Cone => "cone",
            ShapeKind::Torus => "torus",
        }
    }

    /// A spec with size parameters drawn from a fixed range per kind.
    pub fn random_spec<R: Rng + ?Sized>(self, points: usize, rng: &mut R) -> ShapeSpec {
        match self {
            ShapeKind::Sphere => ShapeSpec::Sphere { radius: 1.0, points },
            ShapeKind::Cube => ShapeSpec::Cube { side: 1.0, points },
            ShapeKind::Cylinder => ShapeSpec::Cylinder {
                radius: rng.random_range(0.3..0.6),
                height: rng.random_range(0.8..1.6),
                points,
            },
            ShapeKind::Cone => ShapeSpec::Cone {
                radius: rng.random_range(0.3..0.6),
                height: rng.random_range(0.8..1.6),
                points,
            },
            ShapeKind::Torus => ShapeSpec::Torus {
                major: 1.0,
                minor: rng.random_range(0.2..0.45),
                points,
            },
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ShapeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown shape {s}")))
    }
}

/// A primitive surface with its size parameters and point count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ShapeSpec {
    Sphere { radius: f64, points: usize },
    Cube { side: f64, points: usize },
    /// Closed cylinder along z.
    Cylinder { radius: f64, height: f64, points: usize },
    /// Cone along z with its base disk, apex up.
    Cone { radius: f64, height: f64, points: usize },
    Torus { major: f64, minor: f64, points: usize },
}

impl ShapeSpec {
    pub fn kind(&self) -> ShapeKind {
        match self {
            ShapeSpec::Sphere { .. } => ShapeKind::Sphere,
            ShapeSpec::Cube { .. } => ShapeKind::Cube,
            ShapeSpec::Cylinder { .. } => ShapeKind::Cylinder,
            ShapeSpec::Cone { .. } => ShapeKind::Cone,
            ShapeSpec::Torus { .. } => ShapeKind::Torus,
        }
    }

    pub fn points(&self) -> usize {
        match *self {
            ShapeSpec::Sphere { points, .. }
            | ShapeSpec::Cube { points, .. }
            | ShapeSpec::Cylinder { points, .. }
            | ShapeSpec::Cone { points, .. }
            | ShapeSpec::Torus { points, .. } => points,
        }
    }

    fn sizes(&self) -> Vec<f64> {
        match *self {
            ShapeSpec::Sphere { radius, .. } => vec![radius],
            ShapeSpec::Cube { side, .. } => vec![side],
            ShapeSpec::Cylinder { radius, height, .. } | ShapeSpec::Cone { radius, height, .. } => {
                vec![radius, height]
            }
            ShapeSpec::Torus { major, minor, .. } => vec![major, minor],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points() < MIN_SHAPE_POINTS {
            return Err(Error::invalid(format!(
                "{} points requested, at least {MIN_SHAPE_POINTS} needed",
                self.points()
            )));
        }
        if self.sizes().iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid(format!("{} sizes must be positive", self.kind())));
        }
        if let ShapeSpec::Torus { major, minor, .. } = *self {
            if minor >= major {
                return Err(Error::invalid("torus minor radius must be below the major radius"));
            }
        }
        Ok(())
    }

    /// Radius of the smallest origin-centred ball holding the surface.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            ShapeSpec::Sphere { radius, .. } => radius,
            ShapeSpec::Cube { side, .. } => side * 3f64.sqrt() / 2.0,
            ShapeSpec::Cylinder { radius, height, .. } => radius.hypot(height / 2.0),
            ShapeSpec::Cone { radius, height, .. } => radius.hypot(height / 2.0),
            ShapeSpec::Torus { major, minor, .. } => major + minor,
        }
    }
}

fn unit_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

fn disk<R: Rng + ?Sized>(radius: f64, rng: &mut R) -> (f64, f64) {
    let rho = radius * rng.random::<f64>().sqrt();
    let t = rng.random_range(0.0..TAU);
    (rho * t.cos(), rho * t.sin())
}

/// One surface sample and its outward normal, before rotation and scaling.
/// The second value is the segmentation part (0 side, 1 cap) where defined.
fn sample_surface<R: Rng + ?Sized>(spec: &ShapeSpec, rng: &mut R) -> (Vec3, Vec3, u32) {
    match *spec {
        ShapeSpec::Sphere { radius, .. } => {
            let u = unit_gaussian(rng);
            (u * radius, u, 0)
        }
        ShapeSpec::Cube { side, .. } => {
            let face = rng.random_range(0..6usize);
            let axis = face / 2;
            let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
            let h = side / 2.0;
            let mut p = Vec3::new(rng.random_range(-h..h), rng.random_range(-h..h), rng.random_range(-h..h));
            p[axis] = sign * h;
            let mut n = Vec3::zeros();
            n[axis] = sign;
            (p, n, 0)
        }
        ShapeSpec::Cylinder { radius, height, .. } => {
            let side = TAU * radius * height;
            let caps = 2.0 * PI * radius * radius;
            if rng.random::<f64>() * (side + caps) < side {
                let t = rng.random_range(0.0..TAU);
                let z = rng.random_range(-height / 2.0..height / 2.0);
                let n = Vec3::new(t.cos(), t.sin(), 0.0);
                (Vec3::new(radius * n.x, radius * n.y, z), n, 0)
            } else {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let (x, y) = disk(radius, rng);
                (Vec3::new(x, y, sign * height / 2.0), Vec3::new(0.0, 0.0, sign), 1)
            }
        }
        ShapeSpec::Cone { radius, height, .. } => {
            let slant = radius.hypot(height);
            let lateral = PI * radius * slant;
            let base = PI * radius * radius;
            if rng.random::<f64>() * (lateral + base) < lateral {
                // fraction of the way from apex to base; area grows linearly with it
                let f = rng.random::<f64>().sqrt();
                let t = rng.random_range(0.0..TAU);
                let rho = f * radius;
                let p = Vec3::new(rho * t.cos(), rho * t.sin(), height / 2.0 - f * height);
                let n = Vec3::new(height * t.cos(), height * t.sin(), radius) / slant;
                (p, n, 0)
            } else {
                let (x, y) = disk(radius, rng);
                (Vec3::new(x, y, -height / 2.0), Vec3::new(0.0, 0.0, -1.0), 1)
            }
        }
        ShapeSpec::Torus { major, minor, .. } => {
            // area element is proportional to major + minor·cos(phi)
            let phi = loop {
                let phi = rng.random_range(0.0..TAU);
                if rng.random::<f64>() * (major + minor) <= major + minor * phi.cos() {
                    break phi;
                }
            };
            let t = rng.random_range(0.0..TAU);
            let n = Vec3::new(phi.cos() * t.cos(), phi.cos() * t.sin(), phi.sin());
            let ring = major + minor * phi.cos();
            (Vec3::new(ring * t.cos(), ring * t.sin(), minor * phi.sin()), n, 0)
        }
    }
}

fn sample<R: Rng + ?Sized>(spec: &ShapeSpec, rng: &mut R, with_labels: bool) -> Result<PointCloud> {
    spec.validate()?;
    let n = spec.points();
    let scale = 1.0 / spec.bounding_radius();
    let angle = rng.random_range(0.0..TAU);
    let (s, c) = angle.sin_cos();
    let rot = |v: Vec3| Vec3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z);
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let (p, nrm, label) = sample_surface(spec, rng);
        points.push(rot(p) * scale);
        normals.push(rot(nrm).normalize());
        labels.push(label);
    }
    let cloud = PointCloud::new(points)?.with_normals(normals)?;
    if with_labels {
        cloud.with_labels(labels)
    } else {
        Ok(cloud)
    }
}

/// Uniform surface samples with analytic unit normals, randomly rotated
/// about z and scaled by the analytic bounding radius into the unit ball.
pub fn generate_shape<R: Rng + ?Sized>(spec: &ShapeSpec, rng: &mut R) -> Result<PointCloud> {
    sample(spec, rng, false)
}

/// Closed cylinder with part labels 0 (side) and 1 (caps). Heights in the
/// output are scaled like [`generate_shape`], so caps sit at
/// `|z| = height / 2 / bounding_radius`.
pub fn generate_segmented_cylinder<R: Rng + ?Sized>(
    radius: f64,
    height: f64,
    points: usize,
    rng: &mut R,
) -> Result<PointCloud> {
    sample(&ShapeSpec::Cylinder { radius, height, points }, rng, true)
}
