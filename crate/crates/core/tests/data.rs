mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use acnn::data::{
    generate_dataset, load_split, parse_pts, read_pts, DatasetSpec, Manifest, ShapeKind, Split, CLASSES_FILE,
    MANIFEST_FILE,
};
use acnn::Error;
use common::formats::{checkpoint_round_trips, pts_round_trips};

/// Relative path to file bytes for everything under `dir`.
fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn small(seed: u64) -> DatasetSpec {
    DatasetSpec { train_per_class: 4, test_per_class: 2, points: 64, seed, ..DatasetSpec::default() }
}

#[test]
fn default_dataset_has_five_by_130_files() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate_dataset(dir.path(), &DatasetSpec::default()).unwrap();
    assert_eq!(m.classes, ["sphere", "cube", "cylinder", "cone", "torus"]);
    assert_eq!(m.split(Split::Train).count(), 500);
    assert_eq!(m.split(Split::Test).count(), 150);
    let files = tree(dir.path());
    assert_eq!(files.len(), 650 + 2);
    assert!(files.contains_key(MANIFEST_FILE) && files.contains_key(CLASSES_FILE));
    let first = read_pts(&dir.path().join(&m.entries[0].path)).unwrap();
    assert_eq!(first.len(), 256);
    assert!(first.normals.is_some());
}

#[test]
fn generation_is_seed_deterministic() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_dataset(a.path(), &small(5)).unwrap();
    generate_dataset(b.path(), &small(5)).unwrap();
    generate_dataset(c.path(), &small(6)).unwrap();
    let (ta, tb, tc) = (tree(a.path()), tree(b.path()), tree(c.path()));
    assert_eq!(ta, tb);
    assert_eq!(ta.keys().collect::<Vec<_>>(), tc.keys().collect::<Vec<_>>());
    assert_ne!(ta, tc);
}

#[test]
fn generated_dataset_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let written = generate_dataset(dir.path(), &small(2)).unwrap();
    let m = Manifest::read(dir.path()).unwrap();
    assert_eq!(m, written);
    let train = load_split(dir.path(), &m, Split::Train, false).unwrap();
    assert_eq!(train.len(), 20);
    for (i, s) in train.iter().enumerate() {
        assert_eq!(s.label, i / 4);
        s.cloud.validate().unwrap();
        assert!(s.cloud.points.iter().all(|p| p.norm() <= 1.0 + 1e-9));
    }
    // estimated normals replace the analytic ones but stay unit length
    let est = load_split(dir.path(), &m, Split::Test, true).unwrap();
    assert!(est.iter().all(|s| s.cloud.validate().is_ok()));
}

#[test]
fn segmented_dataset_uses_part_labels() {
    let dir = tempfile::tempdir().unwrap();
    let spec = DatasetSpec { segmented: true, ..small(3) };
    let m = generate_dataset(dir.path(), &spec).unwrap();
    assert!(m.is_segmentation());
    assert_eq!(m.classes, ["side", "caps"]);
    assert_eq!(m.entries.len(), 6);
    let data = load_split(dir.path(), &m, Split::Train, false).unwrap();
    for s in &data {
        let labels = s.cloud.labels.as_ref().unwrap();
        assert!(labels.iter().all(|&l| l < 2));
        assert!(labels.contains(&0) && labels.contains(&1));
    }
}

#[test]
fn class_subsets_keep_their_order() {
    let dir = tempfile::tempdir().unwrap();
    let spec = DatasetSpec { classes: vec![ShapeKind::Torus, ShapeKind::Sphere], ..small(1) };
    let m = generate_dataset(dir.path(), &spec).unwrap();
    assert_eq!(m.classes, ["torus", "sphere"]);
    assert!(m.entries[0].path.to_string_lossy().contains("torus"));
}

#[test]
fn bad_specs_and_missing_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(generate_dataset(dir.path(), &DatasetSpec { points: 16, ..small(0) }).is_err());
    assert!(generate_dataset(dir.path(), &DatasetSpec { classes: vec![], ..small(0) }).is_err());

    let m = generate_dataset(dir.path(), &small(0)).unwrap();
    fs::remove_file(dir.path().join(&m.entries[3].path)).unwrap();
    assert!(Manifest::read(dir.path()).is_err());
}

#[test]
fn pts_parse_errors_carry_line_numbers() {
    let p = Path::new("x.pts");
    let line = |text: &str| match parse_pts(text, p) {
        Err(Error::Parse { line, .. }) => line,
        other => panic!("expected a parse error, got {other:?}"),
    };
    assert_eq!(line(""), 1);
    assert_eq!(line("acnn-pts 1 2 xyzn\n0 0 0 0 0 1\n1 1 1 0 1\n"), 3);
    // a short file is reported at its last line
    assert_eq!(line("acnn-pts 1 2 xyz\n0 0 0\n"), 2);
    assert_eq!(line("acnn-pts 2 1 xyz\n0 0 0\n"), 1);
    assert_eq!(line("acnn-pts 1 1 rgb\n0 0 0\n"), 1);
}

#[test]
fn pts_files_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pts_round_trips(40, dir.path(), 150), Ok(150));
}

#[test]
fn checkpoints_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(checkpoint_round_trips(41, dir.path()), Ok(8));
}
