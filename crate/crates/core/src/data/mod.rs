//! Synthetic datasets: analytic primitive shapes, the `acnn-pts` text
//! format and dataset manifests.

mod manifest;
mod pts;
mod shapes;

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use manifest::{Manifest, ManifestEntry, Split, CLASSES_FILE, MANIFEST_FILE, MANIFEST_HEADER, SEG_LABEL};
pub use pts::{format_pts, parse_pts, read_pts, write_pts, PtsLayout, PTS_MAGIC, PTS_VERSION};
pub use shapes::{generate_segmented_cylinder, generate_shape, ShapeKind, ShapeSpec, MIN_SHAPE_POINTS};

use crate::error::{Error, Result};
use crate::geometry::{estimate_normals, PointCloud, DEFAULT_NORMAL_NEIGHBORS};
use crate::network::Labeled;
use crate::par;

/// Part names of the segmented-cylinder dataset.
pub const CYLINDER_PARTS: [&str; 2] = ["side", "caps"];

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    /// Ignored for segmented datasets.
    pub classes: Vec<ShapeKind>,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub points: usize,
    pub seed: u64,
    /// Part-labelled cylinders instead of shape classes.
    pub segmented: bool,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            classes: ShapeKind::ALL.to_vec(),
            train_per_class: 100,
            test_per_class: 30,
            points: 256,
            seed: 0,
            segmented: false,
        }
    }
}

struct Job {
    path: PathBuf,
    label: Option<usize>,
    split: Split,
    kind: Option<ShapeKind>,
}

/// One generated sample; each has its own RNG stream so output does not
/// depend on scheduling.
pub fn generate_sample(spec: &DatasetSpec, kind: Option<ShapeKind>, stream: u64) -> Result<PointCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    match kind {
        Some(kind) => generate_shape(&kind.random_spec(spec.points, &mut rng), &mut rng),
        None => {
            use rand::Rng;
            let radius = rng.random_range(0.3..0.6);
            let height = rng.random_range(0.8..1.6);
            generate_segmented_cylinder(radius, height, spec.points, &mut rng)
        }
    }
}

/// Write a dataset to `dir`: `train/` and `test/` pts files, `classes.txt`
/// and `manifest.tsv`. Same spec, same bytes.
pub fn generate_dataset(dir: &Path, spec: &DatasetSpec) -> Result<Manifest> {
    if spec.points < MIN_SHAPE_POINTS {
        return Err(Error::invalid(format!("at least {MIN_SHAPE_POINTS} points per cloud")));
    }
    if !spec.segmented && spec.classes.is_empty() {
        return Err(Error::invalid("no classes requested"));
    }
    let mut jobs = Vec::new();
    for (split, count) in [(Split::Train, spec.train_per_class), (Split::Test, spec.test_per_class)] {
        if spec.segmented {
            for i in 0..count {
                jobs.push(Job {
                    path: PathBuf::from(split.name()).join(format!("cylinder_{i:04}.pts")),
                    label: None,
                    split,
                    kind: None,
                });
            }
        } else {
            for (label, kind) in spec.classes.iter().enumerate() {
                for i in 0..count {
                    jobs.push(Job {
                        path: PathBuf::from(split.name()).join(format!("{kind}_{i:04}.pts")),
                        label: Some(label),
                        split,
                        kind: Some(*kind),
                    });
                }
            }
        }
    }
    for split in [Split::Train, Split::Test] {
        fs::create_dir_all(dir.join(split.name()))?;
    }
    let results = par::map_range(jobs.len(), |i| {
        let cloud = generate_sample(spec, jobs[i].kind, i as u64)?;
        write_pts(&dir.join(&jobs[i].path), &cloud)
    });
    results.into_iter().collect::<Result<Vec<_>>>()?;

    let classes = if spec.segmented {
        CYLINDER_PARTS.iter().map(|s| s.to_string()).collect()
    } else {
        spec.classes.iter().map(|k| k.name().to_string()).collect()
    };
    let manifest = Manifest {
        classes,
        entries: jobs
            .into_iter()
            .map(|j| ManifestEntry {
                path: j.path,
                label: j.label,
                split: j.split,
            })
            .collect(),
    };
    manifest.write(dir)?;
    Ok(manifest)
}

/// Read one split. Clouds without normals, or all clouds when
/// `estimate` is set, get normals from local covariance.
pub fn load_split(dir: &Path, manifest: &Manifest, split: Split, estimate: bool) -> Result<Vec<Labeled>> {
    let entries: Vec<&ManifestEntry> = manifest.split(split).collect();
    par::map_range(entries.len(), |i| {
        let e = entries[i];
        let mut cloud = read_pts(&dir.join(&e.path))?;
        if estimate || cloud.normals.is_none() {
            cloud.normals = Some(estimate_normals(&cloud, DEFAULT_NORMAL_NEIGHBORS)?);
        }
        if e.label.is_none() && cloud.labels.is_none() {
            return Err(Error::invalid(format!("{} has no part labels", e.path.display())));
        }
        Ok(Labeled {
            cloud,
            label: e.label.unwrap_or(0),
        })
    })
    .into_iter()
    .collect()
}
