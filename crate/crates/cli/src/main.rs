//! `acnn` command-line tool. Every command writes a run record; exit codes
//! are 0 on success, 1 on runtime failure and 2 on usage errors.

mod commands;
mod record;

use std::path::PathBuf;
use std::process::ExitCode;

use acnn::data::ShapeKind;
use acnn::geometry::RingSpec;
use acnn::network::{parse_rings, AblationVariant};
use clap::{Args, Parser, Subcommand};

use record::RunRecord;

#[derive(Parser)]
#[command(name = "acnn", version = record::VERSION, about = "Annular convolution networks on point clouds")]
struct Cli {
    /// Where to write the run record. Defaults to a file next to the
    /// command's main output.
    #[arg(long, global = true)]
    record: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    GenData(GenData),
    /// Train a model and write a checkpoint plus per-epoch metrics.
    Train(Train),
    /// Evaluate a checkpoint on one split.
    Eval(Eval),
    /// Train every ablation variant for each seed and print a comparison.
    Ablate(Ablate),
    /// Finite-difference gradient checks of every layer.
    Gradcheck(Gradcheck),
    /// Dump ring membership and ordering around one point.
    Inspect(Inspect),
    /// Per-point input-gradient magnitudes.
    Saliency(Saliency),
}

#[derive(Args)]
pub struct GenData {
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated shape names.
    #[arg(long, value_delimiter = ',', value_parser = parse_shape,
          default_value = "sphere,cube,cylinder,cone,torus")]
    pub classes: Vec<ShapeKind>,
    /// Training clouds per class (per dataset when segmented).
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, default_value_t = 30)]
    pub test_per_class: usize,
    #[arg(long, default_value_t = 256)]
    pub points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Part-labelled cylinders instead of shape classes.
    #[arg(long)]
    pub segmented: bool,
}

#[derive(Args)]
pub struct TrainOpts {
    /// Network description; defaults to the desk-scale model for the dataset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 20)]
    pub lr_decay_every: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Replace stored normals with covariance estimates.
    #[arg(long)]
    pub estimate_normals: bool,
}

#[derive(Args)]
pub struct Train {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub opts: TrainOpts,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_variant, default_value = "full")]
    pub variant: AblationVariant,
    /// Metrics TSV; defaults to `<out>.metrics.tsv`.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Args)]
pub struct Eval {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, value_parser = ["train", "test"], default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub estimate_normals: bool,
}

#[derive(Args)]
pub struct Ablate {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub opts: TrainOpts,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub seeds: Vec<u64>,
    /// Also write the table here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct Gradcheck {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random points per check.
    #[arg(long, default_value_t = acnn::gradcheck::DEFAULT_POINTS)]
    pub points: usize,
}

#[derive(Args)]
pub struct Inspect {
    #[arg(long)]
    pub file: PathBuf,
    #[arg(long)]
    pub point: usize,
    /// Rings as `inner:outer:k`, comma-separated.
    #[arg(long, value_parser = parse_ring_list)]
    pub rings: RingList,
    /// Neighbours for the normal estimate when the file has no normals.
    #[arg(long, default_value_t = acnn::geometry::DEFAULT_NORMAL_NEIGHBORS)]
    pub normal_neighbors: usize,
}

#[derive(Args)]
pub struct Saliency {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = ["train", "test"], default_value = "test")]
    pub split: String,
    /// Only the first N clouds of the split.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Clone)]
pub struct RingList(pub Vec<RingSpec>);

fn parse_shape(s: &str) -> Result<ShapeKind, String> {
    s.parse().map_err(|e: acnn::Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<AblationVariant, String> {
    s.parse().map_err(|e: acnn::Error| e.to_string())
}

fn parse_ring_list(s: &str) -> Result<RingList, String> {
    parse_rings(s).map(RingList).map_err(|e| e.to_string())
}

/// Thread cap from `ACNN_THREADS`; unset means all logical cores.
fn configure_threads() -> Result<usize, String> {
    let cap = match std::env::var("ACNN_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Some(n),
            _ => return Err(format!("ACNN_THREADS must be a positive integer, got {v:?}")),
        },
        Err(_) => None,
    };
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = cap {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
        }
        Ok(rayon::current_num_threads())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = cap;
        Ok(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match configure_threads() {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let mut record = RunRecord::start(threads);
    let default_record = commands::record_path(&cli.command);
    let result = commands::run(cli.command, &mut record);
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("error: {e:#}"),
    };
    let path = cli.record.unwrap_or(default_record);
    if let Err(e) = record.write(&path, &status) {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
