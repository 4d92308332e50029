//! Write-then-read checks for the point-file and checkpoint formats.

use std::path::Path;

use acnn::data::{read_pts, write_pts};
use acnn::geometry::{PointCloud, Vec3};
use acnn::network::{AblationVariant, Model, ModelOptions, NetworkConfig, TrainParams};
use acnn::numeric::{Checkpoint, EntryValue};
use rand::Rng;

use super::network::toy_dataset;
use super::{random_unit, rng};

/// Coordinates over many magnitudes, with exact zeros and negative zero.
fn awkward(r: &mut impl Rng) -> f64 {
    match r.random_range(0..6) {
        0 => 0.0,
        1 => -0.0,
        2 => r.random_range(-1.0..1.0),
        3 => r.random_range(-1.0..1.0) * 10f64.powi(r.random_range(-300..300)),
        4 => f64::from_bits(r.random::<u64>() & !(0x7ff << 52) | (r.random_range(1u64..0x7fe) << 52)),
        _ => (r.random_range(-1000..1000) as f64) / 7.0,
    }
}

fn same_bits(a: &[Vec3], b: &[Vec3]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (0..3).all(|k| x[k].to_bits() == y[k].to_bits()))
}

/// Random clouds in each layout written to `dir` and read back. Returns the
/// number of files checked.
pub fn pts_round_trips(seed: u64, dir: &Path, files: usize) -> Result<usize, String> {
    let mut r = rng(seed);
    for f in 0..files {
        let n = r.random_range(1..300);
        let points: Vec<Vec3> = (0..n).map(|_| Vec3::new(awkward(&mut r), awkward(&mut r), awkward(&mut r))).collect();
        let mut cloud = PointCloud::new(points).map_err(|e| e.to_string())?;
        if f % 3 > 0 {
            cloud.normals = Some((0..n).map(|_| random_unit(&mut r)).collect());
        }
        if f % 3 == 2 {
            cloud.labels = Some((0..n).map(|_| r.random()).collect());
        }
        let path = dir.join(format!("{f}.pts"));
        write_pts(&path, &cloud).map_err(|e| e.to_string())?;
        let back = read_pts(&path).map_err(|e| e.to_string())?;
        let normals_ok = match (&cloud.normals, &back.normals) {
            (Some(a), Some(b)) => same_bits(a, b),
            (None, None) => true,
            _ => false,
        };
        if !same_bits(&cloud.points, &back.points) || !normals_ok || cloud.labels != back.labels {
            return Err(format!("file {f} ({n} points) changed on read-back"));
        }
    }
    Ok(files)
}

fn entry_bits(ck: &Checkpoint) -> Vec<(String, Vec<u32>, Vec<u32>)> {
    ck.entries
        .iter()
        .map(|e| match &e.value {
            EntryValue::F32 { dims, data } => (e.name.clone(), dims.clone(), data.iter().map(|v| v.to_bits()).collect()),
            EntryValue::Bytes(b) => (e.name.clone(), vec![], b.iter().map(|&v| v as u32).collect()),
        })
        .collect()
}

/// Checkpoints of trained models (every variant, with optimizer state)
/// written to `dir`, read back and re-encoded. Returns the number of files.
pub fn checkpoint_round_trips(seed: u64, dir: &Path) -> Result<usize, String> {
    let data = toy_dataset(seed, 4, 64);
    let config = NetworkConfig::parse(
        "layer centroids=16 rings=0:0.2:4,0.2:0.4:6 features=8|8,16\n\
         layer centroids=1 rings=0:10:8 features=16,32 kernel=1\n\
         head class c=2 fc=16 dropout=0.5\n",
        Path::new("ckpt.cfg"),
    )
    .map_err(|e| e.to_string())?;
    let mut count = 0;
    for (i, variant) in AblationVariant::ALL.into_iter().enumerate() {
        let options = ModelOptions { encoder_batch_norm: i % 2 == 0 };
        let model = Model::<f32>::seeded(config.clone(), variant, options, seed + i as u64).map_err(|e| e.to_string())?;
        let params = TrainParams { epochs: 1, batch_size: 4, seed, ..TrainParams::default() };
        let out = acnn::network::train(model, &data, &params).map_err(|e| e.to_string())?;
        for adam in [None, Some(&out.adam)] {
            let written = out.model.to_checkpoint(adam);
            let path = dir.join(format!("{variant}_{}.ckpt", adam.is_some()));
            written.write(&path).map_err(|e| e.to_string())?;
            let read = Checkpoint::read(&path).map_err(|e| e.to_string())?;
            if entry_bits(&read) != entry_bits(&written) {
                return Err(format!("{} entries changed on read-back", path.display()));
            }
            let (model, back_adam) = Model::<f32>::from_checkpoint(&read).map_err(|e| e.to_string())?;
            let again = model.to_checkpoint(back_adam.as_ref());
            let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
            if again.to_bytes().map_err(|e| e.to_string())? != bytes {
                return Err(format!("{} re-encodes differently", path.display()));
            }
            count += 1;
        }
    }
    Ok(count)
}
