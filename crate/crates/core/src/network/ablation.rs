use std::fmt::Write as _;
use std::time::Instant;

use super::{train_with_eval, AblationVariant, EpochMetrics, Labeled, Model, ModelOptions, NetworkConfig, TrainParams};
use crate::error::Result;

pub const ABLATION_HEADER: &str = "variant\tseed\toa\taac\tseconds";

/// Final test metrics of one variant trained from one seed.
#[derive(Clone, Debug)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub seed: u64,
    pub oa: f64,
    pub aac: f64,
    pub seconds: f64,
    pub history: Vec<EpochMetrics>,
}

/// Train every variant from every seed on the same data. Within a seed all
/// variants see the same shuffling, augmentation and planning streams; only
/// the architecture differs. `report` is called as each run finishes.
pub fn run_ablation(
    config: &NetworkConfig,
    train: &[Labeled],
    test: &[Labeled],
    seeds: &[u64],
    params: &TrainParams,
    mut report: impl FnMut(&AblationRow),
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(seeds.len() * AblationVariant::ALL.len());
    for &seed in seeds {
        for variant in AblationVariant::ALL {
            let start = Instant::now();
            let model = Model::<f32>::seeded(config.clone(), variant, ModelOptions::default(), seed)?;
            let params = TrainParams { seed, ..params.clone() };
            let out = train_with_eval(model, train, Some(test), &params)?;
            let last = out.history.iter().rev().find(|h| h.split == "test");
            let row = AblationRow {
                variant,
                seed,
                oa: last.map_or(f64::NAN, |h| h.metrics.oa),
                aac: last.map_or(f64::NAN, |h| h.metrics.aac),
                seconds: start.elapsed().as_secs_f64(),
                history: out.history,
            };
            report(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn ablation_row_tsv(row: &AblationRow) -> String {
    format!("{}\t{}\t{:.6}\t{:.6}\t{:.1}", row.variant, row.seed, row.oa, row.aac, row.seconds)
}

pub fn ablation_tsv(rows: &[AblationRow]) -> String {
    let mut s = String::from(ABLATION_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", ablation_row_tsv(r));
    }
    s
}

/// Mean final test OA per variant, in [`AblationVariant::ALL`] order.
pub fn mean_oa(rows: &[AblationRow]) -> Vec<(AblationVariant, f64)> {
    AblationVariant::ALL
        .into_iter()
        .map(|v| {
            let oa: Vec<f64> = rows.iter().filter(|r| r.variant == v).map(|r| r.oa).collect();
            (v, oa.iter().sum::<f64>() / oa.len().max(1) as f64)
        })
        .collect()
}
