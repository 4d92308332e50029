use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{augment, AugmentParams, ConfusionMatrix, EvalMetrics, Model, PlanOptions, SamplePlan};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::numeric::{decayed_learning_rate, Adam, AdamConfig, Mode, Real, Tensor};

pub const METRICS_HEADER: &str = "epoch\tsplit\tloss\toa\taac\tmiou";

/// A cloud with its class. Segmentation samples carry per-point labels in
/// the cloud and ignore `label`.
#[derive(Clone, Debug)]
pub struct Labeled {
    pub cloud: PointCloud,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Learning-rate multiplier applied every `decay_every` epochs.
    pub decay: f64,
    pub decay_every: usize,
    pub augment: Option<AugmentParams>,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            epochs: 30,
            batch_size: 16,
            lr: 1e-3,
            decay: 0.7,
            decay_every: 20,
            augment: Some(AugmentParams::default()),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// `train` or `test`.
    pub split: &'static str,
    pub loss: f64,
    pub metrics: EvalMetrics,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub model: Model<T>,
    pub adam: Adam<T>,
    pub history: Vec<EpochMetrics>,
}

// Independent RNG streams derived from one seed.
const STREAM_SHUFFLE: u64 = 1;
const STREAM_AUGMENT: u64 = 2;
const STREAM_PLAN: u64 = 3;
const STREAM_DROPOUT: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn targets<T: Real>(model: &Model<T>, samples: &[&Labeled]) -> Result<Vec<usize>> {
    let outputs = model.outputs();
    let mut out = Vec::new();
    for s in samples {
        if model.is_segmentation() {
            let labels = s
                .cloud
                .labels
                .as_ref()
                .ok_or_else(|| Error::invalid("segmentation sample without point labels"))?;
            out.extend(labels.iter().map(|&l| l as usize));
        } else {
            out.push(s.label);
        }
    }
    if let Some(&bad) = out.iter().find(|&&l| l >= outputs) {
        return Err(Error::ConfigMismatch(format!(
            "label {bad} but the model has {outputs} outputs"
        )));
    }
    Ok(out)
}

fn argmax_rows<T: Real>(logits: &Tensor<T>) -> Vec<usize> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Batch boundaries; a trailing single-sample batch is folded into the one
/// before it so batch statistics are never taken over one cloud.
fn batches(n: usize, size: usize) -> Vec<std::ops::Range<usize>> {
    let size = size.max(1);
    let mut out: Vec<std::ops::Range<usize>> = (0..n).step_by(size).map(|s| s..(s + size).min(n)).collect();
    if out.len() > 1 && out.last().unwrap().len() == 1 {
        let last = out.pop().unwrap();
        out.last_mut().unwrap().end = last.end;
    }
    out
}

pub fn train<T: Real>(model: Model<T>, data: &[Labeled], params: &TrainParams) -> Result<TrainOutcome<T>> {
    train_with_eval(model, data, None, params)
}

/// Minibatch Adam on softmax cross-entropy. After every epoch the running
/// training loss and accuracy are recorded, followed by a full evaluation
/// on `test` when given.
pub fn train_with_eval<T: Real>(
    mut model: Model<T>,
    data: &[Labeled],
    test: Option<&[Labeled]>,
    params: &TrainParams,
) -> Result<TrainOutcome<T>> {
    if data.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    targets(&model, &data.iter().collect::<Vec<_>>())?;
    let mut adam = Adam::new(
        AdamConfig {
            lr: params.lr,
            ..AdamConfig::default()
        },
        &model.params,
    );
    let mut shuffle_rng = stream(params.seed, STREAM_SHUFFLE);
    let mut augment_rng = stream(params.seed, STREAM_AUGMENT);
    let mut plan_rng = stream(params.seed, STREAM_PLAN);
    let mut dropout_rng = stream(params.seed, STREAM_DROPOUT);
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..params.epochs {
        let lr = decayed_learning_rate(params.lr, params.decay, params.decay_every, epoch);
        order.shuffle(&mut shuffle_rng);
        let mut conf = ConfusionMatrix::new(model.outputs());
        let mut loss_sum = 0.0;
        let mut loss_rows = 0usize;
        for (b, range) in batches(order.len(), params.batch_size).into_iter().enumerate() {
            let samples: Vec<Labeled> = order[range]
                .iter()
                .map(|&i| match &params.augment {
                    Some(a) => Labeled {
                        cloud: augment(&data[i].cloud, a, &mut augment_rng),
                        label: data[i].label,
                    },
                    None => data[i].clone(),
                })
                .collect();
            let refs: Vec<&Labeled> = samples.iter().collect();
            let clouds: Vec<&PointCloud> = samples.iter().map(|s| &s.cloud).collect();
            let labels = targets(&model, &refs)?;
            let plans = model.plan_batch(&clouds, PlanOptions::default(), &mut plan_rng)?;
            let (logits, tape) = model.forward(&plans, Mode::Train, &mut dropout_rng)?;
            let (loss, grad) = model.loss(&logits, &labels)?;
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch, batch: b, loss });
            }
            let grads = model.backward(&plans, &tape, &grad, false)?;
            adam.step(&mut model.params, &grads.params, lr)?;
            model.apply_batch_stats(&tape);
            for (t, p) in labels.iter().zip(argmax_rows(&logits)) {
                conf.add(*t, p)?;
            }
            loss_sum += loss * labels.len() as f64;
            loss_rows += labels.len();
        }
        history.push(EpochMetrics {
            epoch,
            split: "train",
            loss: loss_sum / loss_rows as f64,
            metrics: conf.metrics(model.is_segmentation()),
        });
        if let Some(test) = test {
            let (metrics, loss, _) = evaluate(&model, test)?;
            history.push(EpochMetrics {
                epoch,
                split: "test",
                loss,
                metrics,
            });
        }
    }
    Ok(TrainOutcome { model, adam, history })
}

const EVAL_BATCH: usize = 32;

fn eval_plans<T: Real>(model: &Model<T>, chunk: &[Labeled], rng: &mut ChaCha8Rng) -> Result<Vec<SamplePlan>> {
    let clouds: Vec<&PointCloud> = chunk.iter().map(|s| &s.cloud).collect();
    model.plan_batch(&clouds, PlanOptions::default(), rng)
}

/// Evaluation-mode metrics, mean loss and the confusion matrix.
pub fn evaluate<T: Real>(model: &Model<T>, data: &[Labeled]) -> Result<(EvalMetrics, f64, ConfusionMatrix)> {
    if data.is_empty() {
        return Err(Error::invalid("empty evaluation set"));
    }
    let mut conf = ConfusionMatrix::new(model.outputs());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut loss_sum = 0.0;
    let mut rows = 0usize;
    for chunk in data.chunks(EVAL_BATCH) {
        let labels = targets(model, &chunk.iter().collect::<Vec<_>>())?;
        let plans = eval_plans(model, chunk, &mut rng)?;
        let (logits, _) = model.forward(&plans, Mode::Eval, &mut rng)?;
        let (loss, _) = model.loss(&logits, &labels)?;
        loss_sum += loss.as_f64() * labels.len() as f64;
        rows += labels.len();
        for (t, p) in labels.iter().zip(argmax_rows(&logits)) {
            conf.add(*t, p)?;
        }
    }
    Ok((conf.metrics(model.is_segmentation()), loss_sum / rows as f64, conf))
}

/// Predicted class per sample (classification) or per point (segmentation).
pub fn predict<T: Real>(model: &Model<T>, clouds: &[PointCloud]) -> Result<Vec<Vec<usize>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut out = Vec::with_capacity(clouds.len());
    for chunk in clouds.chunks(EVAL_BATCH) {
        let refs: Vec<&PointCloud> = chunk.iter().collect();
        let plans = model.plan_batch(&refs, PlanOptions::default(), &mut rng)?;
        let (logits, _) = model.forward(&plans, Mode::Eval, &mut rng)?;
        let pred = argmax_rows(&logits);
        if model.is_segmentation() {
            let mut start = 0;
            for p in &plans {
                out.push(pred[start..start + p.points()].to_vec());
                start += p.points();
            }
        } else {
            out.extend(pred.into_iter().map(|p| vec![p]));
        }
    }
    Ok(out)
}

pub fn metrics_tsv(history: &[EpochMetrics]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for h in history {
        let miou = h.metrics.miou.map(|v| format!("{v:.6}")).unwrap_or_default();
        let _ = writeln!(
            s,
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}",
            h.epoch, h.split, h.loss, h.metrics.oa, h.metrics.aac, miou
        );
    }
    s
}

pub fn write_metrics_tsv(path: &Path, history: &[EpochMetrics]) -> Result<()> {
    std::fs::write(path, metrics_tsv(history))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_ranges() {
        assert_eq!(batches(5, 2), vec![0..2, 2..5]);
        assert_eq!(batches(4, 2), vec![0..2, 2..4]);
        assert_eq!(batches(1, 16), vec![0..1]);
        assert_eq!(batches(7, 3), vec![0..3, 3..7]);
    }

    #[test]
    fn tsv_leaves_miou_blank_for_classification() {
        let h = [EpochMetrics {
            epoch: 0,
            split: "train",
            loss: 1.5,
            metrics: EvalMetrics {
                oa: 0.5,
                aac: 0.25,
                miou: None,
            },
        }];
        let s = metrics_tsv(&h);
        assert_eq!(s, format!("{METRICS_HEADER}\n0\ttrain\t1.500000\t0.500000\t0.250000\t\n"));
    }
}
