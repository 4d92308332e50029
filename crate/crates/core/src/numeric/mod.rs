//! Dense tensors, standard layers with hand-written adjoints, the Adam
//! optimiser and the checkpoint format.
//!
//! Layers are free functions over row-major `rows × channels` matrices. Each
//! forward returns whatever its backward needs; there is no tape object here.

mod adam;
mod checkpoint;
mod gemm;
pub(crate) mod layers;
mod params;
mod tensor;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

pub use adam::{decayed_learning_rate, Adam, AdamConfig};
pub use checkpoint::{Checkpoint, Entry, EntryValue, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layers::{
    batch_norm_backward, batch_norm_forward, dense_backward, dense_forward, dropout_backward,
    dropout_forward, relu_backward, relu_forward, softmax, softmax_cross_entropy,
    softmax_cross_entropy_batch, update_running_stats, BatchNormCache, DenseGrads, BN_EPSILON,
    BN_MOMENTUM,
};
pub(crate) use gemm::gemm;
pub(crate) use layers::fold_partials;
pub use params::ParamSet;
pub use tensor::Tensor;

/// Floating point scalar used by the network code: `f32` for training,
/// `f64` for gradient checks.
pub trait Real:
    Float
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self;

    fn as_f64(self) -> f64;

    /// Strided matrix product `c = beta·c + a·b` (`m × k` by `k × n`).
    /// Callers go through the bounds-checked wrapper inside the crate.
    #[doc(hidden)]
    #[allow(clippy::too_many_arguments)]
    fn gemm_strided(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );
}

impl Real for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }

    fn gemm_strided(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    ) {
        let span = |rows: usize, cols: usize, rs: isize, cs: isize| {
            (rows.saturating_sub(1) as isize * rs + cols.saturating_sub(1) as isize * cs) as usize + 1
        };
        assert!(
            span(m, k, rsa, csa) <= a.len() && span(k, n, rsb, csb) <= b.len() && span(m, n, rsc, csc) <= c.len(),
            "gemm strides exceed operand"
        );
        // SAFETY: the assertion keeps every strided access inside the slices.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                rsc,
                csc,
            )
        }
    }
}

impl Real for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

    fn gemm_strided(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    ) {
        let span = |rows: usize, cols: usize, rs: isize, cs: isize| {
            (rows.saturating_sub(1) as isize * rs + cols.saturating_sub(1) as isize * cs) as usize + 1
        };
        assert!(
            span(m, k, rsa, csa) <= a.len() && span(k, n, rsb, csb) <= b.len() && span(m, n, rsc, csc) <= c.len(),
            "gemm strides exceed operand"
        );
        // SAFETY: the assertion keeps every strided access inside the slices.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                rsc,
                csc,
            )
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
