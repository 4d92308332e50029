use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use acnn::data::{generate_dataset, load_split, read_pts, DatasetSpec, Manifest, Split};
use acnn::geometry::{angle_keys, estimate_normal, order_counterclockwise, ring_knn, PointCloud, Vec3};
use acnn::gradcheck::{run_suite, REL_TOLERANCE};
use acnn::network::{
    ablation_row_tsv, evaluate, run_ablation, saliency, train_with_eval, write_metrics_tsv, Labeled, Model,
    ModelOptions, NetworkConfig, TrainParams, ABLATION_HEADER,
};
use acnn::numeric::Checkpoint;
use anyhow::{bail, Context, Result};

use crate::record::{digest, RunRecord};
use crate::{Ablate, Command, Eval, GenData, Gradcheck, Inspect, Saliency, Train, TrainOpts};

/// `path` with `suffix` appended to its file name.
fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn record_path(cmd: &Command) -> PathBuf {
    match cmd {
        Command::GenData(a) => a.out.join("run.tsv"),
        Command::Train(a) => suffixed(&a.out, ".run.tsv"),
        Command::Eval(a) => suffixed(&a.ckpt, ".eval.run.tsv"),
        Command::Ablate(a) => match &a.out {
            Some(out) => suffixed(out, ".run.tsv"),
            None => a.data.join("ablate.run.tsv"),
        },
        Command::Gradcheck(_) => PathBuf::from("gradcheck.run.tsv"),
        Command::Inspect(a) => suffixed(&a.file, ".inspect.run.tsv"),
        Command::Saliency(a) => suffixed(&a.out, ".run.tsv"),
    }
}

pub fn run(cmd: Command, record: &mut RunRecord) -> Result<()> {
    match cmd {
        Command::GenData(a) => gen_data(a, record),
        Command::Train(a) => train(a, record),
        Command::Eval(a) => eval(a, record),
        Command::Ablate(a) => ablate(a, record),
        Command::Gradcheck(a) => gradcheck(a, record),
        Command::Inspect(a) => inspect(a, record),
        Command::Saliency(a) => saliency_cmd(a, record),
    }
}

fn gen_data(a: GenData, record: &mut RunRecord) -> Result<()> {
    let spec = DatasetSpec {
        classes: a.classes,
        train_per_class: a.per_class,
        test_per_class: a.test_per_class,
        points: a.points,
        seed: a.seed,
        segmented: a.segmented,
    };
    record.seed = Some(a.seed);
    record.config_digest = Some(digest(&format!("{spec:?}")));
    let m = generate_dataset(&a.out, &spec).with_context(|| format!("generating into {}", a.out.display()))?;
    record.mark("generate");
    println!("{} files, {} classes in {}", m.entries.len(), m.classes.len(), a.out.display());
    Ok(())
}

struct Dataset {
    manifest: Manifest,
    train: Vec<Labeled>,
    test: Vec<Labeled>,
}

fn load(dir: &Path, estimate: bool) -> Result<Dataset> {
    let manifest = Manifest::read(dir).with_context(|| format!("reading dataset {}", dir.display()))?;
    let train = load_split(dir, &manifest, Split::Train, estimate)?;
    let test = load_split(dir, &manifest, Split::Test, estimate)?;
    Ok(Dataset { manifest, train, test })
}

fn network_config(path: Option<&Path>, manifest: &Manifest) -> Result<NetworkConfig> {
    let classes = manifest.classes.len();
    let config = match path {
        Some(p) => NetworkConfig::read(p)?,
        None if manifest.is_segmentation() => NetworkConfig::desk_seg(classes),
        None => NetworkConfig::desk_3l(classes),
    };
    if config.head.outputs() != classes || config.head.is_segmentation() != manifest.is_segmentation() {
        bail!(
            "the network predicts {} {} but the dataset has {classes} {}",
            config.head.outputs(),
            if config.head.is_segmentation() { "parts" } else { "classes" },
            if manifest.is_segmentation() { "parts" } else { "classes" }
        );
    }
    Ok(config)
}

fn train_params(o: &TrainOpts, seed: u64) -> TrainParams {
    TrainParams {
        epochs: o.epochs,
        batch_size: o.batch_size,
        lr: o.lr,
        decay_every: o.lr_decay_every,
        seed,
        ..TrainParams::default()
    }
}

fn train(a: Train, record: &mut RunRecord) -> Result<()> {
    record.seed = Some(a.seed);
    let data = load(&a.data, a.opts.estimate_normals)?;
    let config = network_config(a.opts.config.as_deref(), &data.manifest)?;
    record.config_digest = Some(digest(&config.to_text()));
    record.mark("load");

    let model = Model::<f32>::seeded(config, a.variant, ModelOptions::default(), a.seed)?;
    let out = train_with_eval(model, &data.train, Some(&data.test), &train_params(&a.opts, a.seed))?;
    record.mark("train");

    out.model.to_checkpoint(Some(&out.adam)).write(&a.out)?;
    let metrics = a.metrics.unwrap_or_else(|| suffixed(&a.out, ".metrics.tsv"));
    write_metrics_tsv(&metrics, &out.history)?;
    record.mark("write");
    if let Some(last) = out.history.last() {
        println!("epoch {} {} oa {:.4} aac {:.4}", last.epoch, last.split, last.metrics.oa, last.metrics.aac);
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<Model<f32>> {
    let ck = Checkpoint::read(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    Ok(Model::from_checkpoint(&ck)?.0)
}

fn split_of(name: &str) -> Split {
    if name == "train" {
        Split::Train
    } else {
        Split::Test
    }
}

fn eval(a: Eval, record: &mut RunRecord) -> Result<()> {
    let model = load_model(&a.ckpt)?;
    record.config_digest = Some(digest(&model.config.to_text()));
    let manifest = Manifest::read(&a.data)?;
    let data = load_split(&a.data, &manifest, split_of(&a.split), a.estimate_normals)?;
    record.mark("load");
    let (m, loss, _) = evaluate(&model, &data)?;
    record.mark("evaluate");
    println!("split\tsamples\tloss\toa\taac\tmiou");
    let miou = m.miou.map(|v| format!("{v:.6}")).unwrap_or_default();
    println!("{}\t{}\t{loss:.6}\t{:.6}\t{:.6}\t{miou}", a.split, data.len(), m.oa, m.aac);
    Ok(())
}

fn ablate(a: Ablate, record: &mut RunRecord) -> Result<()> {
    if a.seeds.is_empty() {
        bail!("no seeds given");
    }
    record.seed = a.seeds.first().copied();
    let data = load(&a.data, a.opts.estimate_normals)?;
    let config = network_config(a.opts.config.as_deref(), &data.manifest)?;
    record.config_digest = Some(digest(&config.to_text()));
    record.mark("load");

    println!("{ABLATION_HEADER}");
    let params = train_params(&a.opts, 0);
    let rows = run_ablation(&config, &data.train, &data.test, &a.seeds, &params, |row| {
        println!("{}", ablation_row_tsv(row));
    })?;
    record.mark("train");
    if let Some(out) = &a.out {
        fs::write(out, acnn::network::ablation_tsv(&rows))?;
    }
    Ok(())
}

fn gradcheck(a: Gradcheck, record: &mut RunRecord) -> Result<()> {
    record.seed = Some(a.seed);
    let reports = run_suite(a.seed, a.points)?;
    record.mark("check");
    println!("check\tpoints\trejected\tmax_rel_error\tstatus");
    for r in &reports {
        let status = if r.passed() { "ok" } else { "FAIL" };
        println!("{}\t{}\t{}\t{:.3e}\t{status}", r.name, r.points, r.rejected, r.max_rel_error);
    }
    let failed = reports.iter().filter(|r| !r.passed()).count();
    if failed > 0 {
        bail!("{failed} of {} checks exceed relative error {REL_TOLERANCE}", reports.len());
    }
    Ok(())
}

fn normal_at(cloud: &PointCloud, i: usize, k: usize) -> Result<Vec3> {
    match &cloud.normals {
        Some(n) => Ok(n[i]),
        None => Ok(estimate_normal(cloud, i, k)?),
    }
}

/// Counterclockwise angle in degrees of `d` from `c` about `n`.
fn ccw_degrees(c: &Vec3, d: &Vec3, n: &Vec3) -> f64 {
    let a = c.cross(d).dot(n).atan2(c.dot(d)).to_degrees();
    if a < 0.0 {
        a + 360.0
    } else {
        a
    }
}

fn inspect(a: Inspect, record: &mut RunRecord) -> Result<()> {
    let cloud = read_pts(&a.file)?;
    if a.point >= cloud.len() {
        bail!("point {} out of range for {} points", a.point, cloud.len());
    }
    let q = cloud.points[a.point];
    let n = normal_at(&cloud, a.point, a.normal_neighbors)?;
    record.mark("load");

    let mut out = String::from("ring\trank\tindex\tdistance\tkey\tangle_deg\tpadded\n");
    for (r, spec) in a.rings.0.iter().enumerate() {
        let query = ring_knn(&cloud, a.point, spec)?;
        if query.is_empty() {
            continue;
        }
        let order = order_counterclockwise(&query.indices, &cloud, &q, &n, 0)?;
        let pts: Vec<Vec3> = order.iter().map(|&i| cloud.points[i]).collect();
        let keys = angle_keys(&pts, &q, &n, 0)?;
        let project = |p: &Vec3| p - n * (p - q).dot(&n) - q;
        let reference = project(&pts[0]);
        let mut seen = std::collections::HashSet::new();
        for (rank, (&i, key)) in order.iter().zip(&keys).enumerate() {
            let key = if i == order[0] { 1.0 } else { *key };
            let angle = ccw_degrees(&reference, &project(&cloud.points[i]), &n);
            let padded = u8::from(!seen.insert(i));
            let _ = writeln!(
                out,
                "{r}\t{rank}\t{i}\t{:.9}\t{key:.9}\t{angle:.6}\t{padded}",
                (cloud.points[i] - q).norm()
            );
        }
    }
    record.mark("inspect");
    print!("{out}");
    Ok(())
}

fn saliency_cmd(a: Saliency, record: &mut RunRecord) -> Result<()> {
    let model = load_model(&a.ckpt)?.cast::<f64>();
    record.config_digest = Some(digest(&model.config.to_text()));
    let manifest = Manifest::read(&a.data)?;
    let split = split_of(&a.split);
    let entries: Vec<_> = manifest.split(split).take(a.limit.unwrap_or(usize::MAX)).collect();
    let data = load_split(&a.data, &manifest, split, false)?;
    record.mark("load");

    let mut out = String::from("file\tpoint\tx\ty\tz\tsaliency\n");
    for (e, s) in entries.iter().zip(&data) {
        let label = if model.is_segmentation() { None } else { Some(s.label) };
        let mags = saliency(&model, &s.cloud, label)?;
        for (i, (p, g)) in s.cloud.points.iter().zip(&mags).enumerate() {
            let _ = writeln!(out, "{}\t{i}\t{:.6}\t{:.6}\t{:.6}\t{g:.6e}", e.path.display(), p.x, p.y, p.z);
        }
    }
    record.mark("saliency");
    fs::write(&a.out, out).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}
