//! Annular convolutions on point clouds.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: farthest point sampling, normal estimation, ring-constrained
//!   neighbour search, tangent-plane projection and counterclockwise ordering.
//! * [`annular`]: circular extension, 1-D convolution over ordered ring
//!   neighbours and ring max pooling, with exact backward passes.
//! * [`numeric`]: tensors, dense / batch-norm / ReLU / dropout layers,
//!   softmax cross-entropy, Adam and the binary checkpoint format.
//! * [`network`]: the encoder, classification and segmentation heads,
//!   training, evaluation, saliency and ablation variants.
//! * [`data`]: synthetic shape generation, the `acnn-pts` text format and
//!   dataset manifests.
//!
//! With the default `parallel` feature the batch kernels fan out over rayon;
//! without it every kernel runs the same code sequentially. Reductions use a
//! fixed chunking, so results are bitwise identical either way.

pub mod annular;
pub mod data;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod network;
pub mod numeric;
pub mod par;

pub use error::{Error, Result};
