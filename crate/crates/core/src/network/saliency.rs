use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Model, PlanOptions};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::numeric::{Mode, Real};

/// Per-point Euclidean norm of the loss gradient with respect to the input
/// coordinates, in evaluation mode. Classification models need `label`;
/// segmentation models read per-point labels from the cloud.
///
/// Neighbourhoods are held fixed, so the gradient only flows through the
/// relative coordinates fed to the convolutions.
pub fn saliency<T: Real>(model: &Model<T>, cloud: &PointCloud, label: Option<usize>) -> Result<Vec<f64>> {
    let labels: Vec<usize> = if model.is_segmentation() {
        let l = cloud
            .labels
            .as_ref()
            .ok_or_else(|| Error::invalid("segmentation saliency needs per-point labels"))?;
        l.iter().map(|&v| v as usize).collect()
    } else {
        vec![label.ok_or_else(|| Error::invalid("classification saliency needs a label"))?]
    };
    let outputs = model.outputs();
    if let Some(&bad) = labels.iter().find(|&&l| l >= outputs) {
        return Err(Error::ConfigMismatch(format!(
            "label {bad} but the model has {outputs} outputs"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let plan = model.plan(cloud, PlanOptions::default(), &mut rng)?;
    let plans = [plan];
    let (logits, tape) = model.forward(&plans, Mode::Eval, &mut rng)?;
    let (_, grad) = model.loss(&logits, &labels)?;
    let grads = model.backward(&plans, &tape, &grad, true)?;
    let positions = grads.positions.expect("position gradients requested");
    Ok(positions[0]
        .iter()
        .map(|g| g.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt())
        .collect())
}
