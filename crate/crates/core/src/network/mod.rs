//! The annular-convolution network: encoder layers, classification and
//! segmentation heads, training, evaluation, saliency and ablation variants.

mod ablation;
mod augment;
mod config;
pub(crate) mod encoder;
mod interpolate;
mod metrics;
mod model;
mod saliency;
mod train;

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

pub use ablation::{ablation_row_tsv, ablation_tsv, mean_oa, run_ablation, AblationRow, ABLATION_HEADER};
pub use augment::{augment, AugmentParams};
pub use config::{parse_rings, HeadConfig, LayerConfig, NetworkConfig, DEFAULT_DROPOUT, DEFAULT_KERNEL};
pub use encoder::{encoder_layer, group_layer, EncoderLayer};
pub use interpolate::{interpolate_features, InterpTable};
pub use metrics::{ConfusionMatrix, EvalMetrics};
pub use model::{Grads, Model, ModelOptions, SamplePlan, Tape};
pub use saliency::saliency;
pub use train::{
    evaluate, metrics_tsv, predict, train, train_with_eval, write_metrics_tsv, EpochMetrics, Labeled, TrainOutcome,
    TrainParams, METRICS_HEADER,
};

/// Which structural components are active.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum AblationVariant {
    /// Disjoint rings, ordering and 1×k annular kernels.
    #[default]
    Full,
    /// Every ring's search region becomes the ball `(0, r_outer]`, so rings overlap.
    BallQuery,
    /// Neighbours in a uniformly random order instead of counterclockwise.
    NoOrdering,
    /// All kernels 1×1.
    NoAnnular,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [
        AblationVariant::Full,
        AblationVariant::BallQuery,
        AblationVariant::NoOrdering,
        AblationVariant::NoAnnular,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::BallQuery => "ball_query",
            AblationVariant::NoOrdering => "no_ordering",
            AblationVariant::NoAnnular => "no_annular",
        }
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AblationVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant {s}")))
    }
}

/// Where the ordering of each ring starts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StartRule {
    /// The closest ring member.
    #[default]
    Closest,
    /// A uniformly random position, drawn from the planning RNG.
    Random,
}

/// Geometry-side options for building sample plans.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PlanOptions {
    /// First farthest-point-sampling pick in the input cloud.
    pub fps_seed: usize,
    pub start: StartRule,
}
