use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use acnn::data::read_pts;
use acnn::geometry::{order_counterclockwise, ring_knn, RingSpec};

const TINY_CONFIG: &str = "\
layer centroids=16 rings=0:0.25:4,0.25:0.5:6 features=8|8,16
layer centroids=1 rings=0:10:8 features=16,32 kernel=1
head class c=3 fc=16 dropout=0.5
";

fn acnn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acnn"))
        .current_dir(dir)
        .env_remove("ACNN_THREADS")
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Three-class, 64-point dataset plus a matching config in `dir`.
fn tiny_dataset(dir: &Path) {
    ok(&acnn(
        dir,
        &["gen-data", "--out", "data", "--classes", "sphere,cube,torus", "--per-class", "6", "--test-per-class", "2",
          "--points", "64", "--seed", "3"],
    ));
    fs::write(dir.join("tiny.cfg"), TINY_CONFIG).unwrap();
}

fn record(path: &Path) -> BTreeMap<String, String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let (k, v) = l.split_once('\t').unwrap();
            (k.to_string(), v.to_string())
        })
        .collect()
}

#[test]
fn gen_data_default_layout() {
    let dir = tempfile::tempdir().unwrap();
    ok(&acnn(dir.path(), &["gen-data", "--out", "d"]));
    let files = tree(&dir.path().join("d"));
    let pts = files.keys().filter(|k| k.ends_with(".pts")).count();
    assert_eq!(pts, 5 * (100 + 30));
    assert!(files.contains_key("manifest.tsv") && files.contains_key("classes.txt"));
    let rec = record(&dir.path().join("d/run.tsv"));
    assert_eq!(rec["seed"], "0");
    assert!(rec["config_digest"].starts_with("sha256:"));
    assert_eq!(rec["status"], "ok");
    assert!(rec.contains_key("version") && rec.contains_key("seconds.total"));
}

#[test]
fn gen_data_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        ok(&acnn(dir.path(), &["gen-data", "--out", out, "--per-class", "3", "--test-per-class", "1", "--seed", "9"]));
    }
    let strip = |mut t: BTreeMap<String, Vec<u8>>| {
        t.remove("run.tsv");
        t
    };
    assert_eq!(strip(tree(&dir.path().join("a"))), strip(tree(&dir.path().join("b"))));
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| acnn(dir.path(), args).status.code();
    assert_eq!(code(&["gen-data", "--out", "d", "--classes", "sphere,pyramid"]), Some(2));
    assert_eq!(code(&["gen-data"]), Some(2));
    assert_eq!(code(&["train", "--data", "d", "--out", "m", "--variant", "no_rings"]), Some(2));
    assert_eq!(code(&["inspect", "--file", "x", "--point", "0", "--rings", "0.5:0.2:4"]), Some(2));
    assert_eq!(code(&["frobnicate"]), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_acnn"))
        .current_dir(dir.path())
        .env("ACNN_THREADS", "many")
        .args(["gradcheck"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_1_and_still_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = acnn(dir.path(), &["eval", "--data", "missing", "--ckpt", "nothing.ckpt"]);
    assert_eq!(out.status.code(), Some(1));
    let rec = record(&dir.path().join("nothing.ckpt.eval.run.tsv"));
    assert!(rec["status"].starts_with("error:"));
}

#[test]
fn train_eval_and_saliency() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_dataset(d);
    let train = ["train", "--data", "data", "--config", "tiny.cfg", "--epochs", "2", "--seed", "4", "--batch-size", "6"];
    ok(&acnn(d, &[&train[..], &["--out", "m1.ckpt"]].concat()));
    ok(&acnn(d, &[&train[..], &["--out", "m2.ckpt"]].concat()));
    assert_eq!(fs::read(d.join("m1.ckpt")).unwrap(), fs::read(d.join("m2.ckpt")).unwrap());
    let metrics = fs::read_to_string(d.join("m1.ckpt.metrics.tsv")).unwrap();
    assert_eq!(metrics, fs::read_to_string(d.join("m2.ckpt.metrics.tsv")).unwrap());
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], "epoch\tsplit\tloss\toa\taac\tmiou");
    assert_eq!(lines.len(), 1 + 2 * 2);
    let rec = record(&d.join("m1.ckpt.run.tsv"));
    assert_eq!(rec["seed"], "4");
    assert_eq!(rec["config_digest"], record(&d.join("m2.ckpt.run.tsv"))["config_digest"]);

    let eval = ok(&acnn(d, &["eval", "--data", "data", "--ckpt", "m1.ckpt"]));
    let rows: Vec<&str> = eval.lines().collect();
    assert_eq!(rows[0], "split\tsamples\tloss\toa\taac\tmiou");
    let cols: Vec<&str> = rows[1].split('\t').collect();
    assert_eq!(cols[..2], ["test", "6"]);
    let oa: f64 = cols[3].parse().unwrap();
    assert!((0.0..=1.0).contains(&oa));

    ok(&acnn(d, &["saliency", "--data", "data", "--ckpt", "m1.ckpt", "--out", "sal.tsv", "--limit", "2"]));
    let sal = fs::read_to_string(d.join("sal.tsv")).unwrap();
    assert_eq!(sal.lines().count(), 1 + 2 * 64);
    for line in sal.lines().skip(1) {
        let g: f64 = line.rsplit('\t').next().unwrap().parse().unwrap();
        assert!(g.is_finite() && g >= 0.0);
    }
}

#[test]
fn zero_epochs_writes_initial_weights() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_dataset(d);
    ok(&acnn(d, &["train", "--data", "data", "--config", "tiny.cfg", "--epochs", "0", "--out", "m.ckpt"]));
    assert!(d.join("m.ckpt").is_file());
    assert_eq!(fs::read_to_string(d.join("m.ckpt.metrics.tsv")).unwrap(), "epoch\tsplit\tloss\toa\taac\tmiou\n");
}

#[test]
fn divergence_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_dataset(d);
    let out = acnn(
        d,
        &["train", "--data", "data", "--config", "tiny.cfg", "--epochs", "5", "--lr", "1e300", "--out", "m.ckpt"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("training diverged"));
    assert!(!d.join("m.ckpt").exists());
}

#[test]
fn config_and_dataset_must_agree() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_dataset(d);
    fs::write(d.join("five.cfg"), TINY_CONFIG.replace("c=3", "c=5")).unwrap();
    let out = acnn(d, &["train", "--data", "data", "--config", "five.cfg", "--out", "m.ckpt"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ablate_emits_one_row_per_variant_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_dataset(d);
    let out = ok(&acnn(
        d,
        &["ablate", "--data", "data", "--config", "tiny.cfg", "--epochs", "1", "--seeds", "0,1", "--out", "abl.tsv"],
    ));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "variant\tseed\toa\taac\tseconds");
    assert_eq!(lines.len(), 1 + 4 * 2);
    let variants: Vec<&str> = lines[1..5].iter().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(variants, ["full", "ball_query", "no_ordering", "no_annular"]);
    assert_eq!(fs::read_to_string(d.join("abl.tsv")).unwrap().lines().count(), 9);
    assert!(d.join("abl.tsv.run.tsv").is_file());
}

#[test]
fn gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&acnn(dir.path(), &["gradcheck", "--seed", "2", "--points", "20"]));
    assert!(out.lines().count() > 10);
    assert!(out.lines().skip(1).all(|l| l.ends_with("\tok")));
    assert!(dir.path().join("gradcheck.run.tsv").is_file());
}

#[test]
fn inspect_matches_library_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_dataset(d);
    let file = d.join("data/train/torus_0001.pts");
    let out = ok(&acnn(
        d,
        &["inspect", "--file", file.to_str().unwrap(), "--point", "5", "--rings", "0:0.3:6,0.3:0.6:8"],
    ));
    let cloud = read_pts(&file).unwrap();
    let q = cloud.points[5];
    let n = cloud.normals.as_ref().unwrap()[5];
    let rows: Vec<Vec<&str>> = out.lines().skip(1).map(|l| l.split('\t').collect()).collect();
    let rings = [RingSpec::new(0.0, 0.3, 6).unwrap(), RingSpec::new(0.3, 0.6, 8).unwrap()];
    for (r, spec) in rings.iter().enumerate() {
        let ring: Vec<&Vec<&str>> = rows.iter().filter(|c| c[0] == r.to_string()).collect();
        let query = ring_knn(&cloud, 5, spec).unwrap();
        let want = order_counterclockwise(&query.indices, &cloud, &q, &n, 0).unwrap();
        let got: Vec<usize> = ring.iter().map(|c| c[2].parse().unwrap()).collect();
        assert_eq!(got, want);
        // keys of distinct members fall strictly after the start
        let keys: Vec<f64> = ring.iter().filter(|c| c[6] == "0").map(|c| c[4].parse().unwrap()).collect();
        assert!(keys.windows(2).all(|w| w[0] > w[1]), "{keys:?}");
        for c in &ring {
            let dist: f64 = c[3].parse().unwrap();
            assert!(dist > spec.r_inner && dist <= spec.r_outer + 1e-9);
        }
    }
    // members of different rings never coincide
    let inner: Vec<&str> = rows.iter().filter(|c| c[0] == "0").map(|c| c[2]).collect();
    assert!(rows.iter().filter(|c| c[0] == "1").all(|c| !inner.contains(&c[2])));
}
