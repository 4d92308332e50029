//! Annular convolution over ordered ring neighbours.
//!
//! A ring is a `K × F` block of rows (neighbours in traversal order). The
//! convolution treats the rows as a closed loop: row `i` of the output sees
//! rows `i, i+1, …, i+k_size−1` of the sequence extended by its own first
//! `k_size − 1` rows. Batched entry points take many rings stacked row-wise
//! and process them independently (in parallel with the `parallel` feature).

use crate::error::{Error, Result};
use crate::numeric::{gemm, Real, Tensor};
use crate::par;

const RING_CHUNK: usize = 32;

/// Convolution weights `k_size × f_in × f_out` (row-major) and bias `f_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel<T> {
    pub k_size: usize,
    pub f_in: usize,
    pub f_out: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvKernel<T> {
    pub fn new(k_size: usize, f_in: usize, f_out: usize, weights: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if k_size == 0 || k_size.is_multiple_of(2) {
            return Err(Error::invalid(format!("kernel size must be odd, got {k_size}")));
        }
        if weights.len() != k_size * f_in * f_out || bias.len() != f_out {
            return Err(Error::shape(format!(
                "kernel {k_size}x{f_in}x{f_out}: got {} weights, {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(ConvKernel {
            k_size,
            f_in,
            f_out,
            weights,
            bias,
        })
    }
}

/// Gradients of an annular convolution.
#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: Vec<T>,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

fn check_ring(ring_len: usize, k_size: usize) -> Result<()> {
    if ring_len == 0 {
        return Err(Error::invalid("ring has no rows"));
    }
    if k_size == 0 || k_size - 1 > ring_len {
        return Err(Error::invalid(format!(
            "kernel size {k_size} needs at least {} rows, ring has {ring_len}",
            k_size.saturating_sub(1)
        )));
    }
    Ok(())
}

/// `[x1 … xK]` → `[x1 … xK, x1 … x(k_size−1)]`.
pub fn circular_extend<T: Real>(features: &Tensor<T>, k_size: usize) -> Result<Tensor<T>> {
    let (k, f) = features.expect_matrix("ring features")?;
    check_ring(k, k_size)?;
    let mut data = features.data().to_vec();
    data.extend_from_slice(&features.data()[..(k_size - 1) * f]);
    Tensor::matrix(k + k_size - 1, f, data)
}

/// Rows of `rings` stacked rings, each row followed by its `k_size − 1`
/// circular successors: `(rings · ring_len) × (k_size · f)`.
fn im2col<T: Real>(x: &[T], ring_len: usize, f: usize, k_size: usize) -> Vec<T> {
    let rings = x.len() / (ring_len * f);
    let mut col = Vec::with_capacity(rings * ring_len * k_size * f);
    for ring in x.chunks(ring_len * f) {
        for i in 0..ring_len {
            for t in 0..k_size {
                let src = (i + t) % ring_len;
                col.extend_from_slice(&ring[src * f..(src + 1) * f]);
            }
        }
    }
    col
}

/// Adjoint of [`im2col`], accumulated into `gx`.
fn col2im<T: Real>(gcol: &[T], ring_len: usize, f: usize, k_size: usize, gx: &mut [T]) {
    let width = k_size * f;
    for (r, block) in gcol.chunks(ring_len * width).enumerate() {
        let ring = &mut gx[r * ring_len * f..(r + 1) * ring_len * f];
        for (i, row) in block.chunks(width).enumerate() {
            for t in 0..k_size {
                let dst = (i + t) % ring_len;
                for (d, &v) in ring[dst * f..(dst + 1) * f].iter_mut().zip(&row[t * f..(t + 1) * f]) {
                    *d += v;
                }
            }
        }
    }
}

/// Annular convolution of `rings` stacked rings of `ring_len` rows each.
/// `x` is `(rings · ring_len) × f_in`, the result `(rings · ring_len) × f_out`.
///
/// Output row `i` of a ring is `bias + Σ_t x[(i + t) mod ring_len] · w[t]`.
pub fn annular_conv_forward_rings<T: Real>(
    x: &[T],
    ring_len: usize,
    kernel: &ConvKernel<T>,
) -> Result<Vec<T>> {
    check_ring(ring_len, kernel.k_size)?;
    let (k_size, f_in, f_out) = (kernel.k_size, kernel.f_in, kernel.f_out);
    let rows_in = ring_len * f_in;
    if !x.len().is_multiple_of(rows_in) {
        return Err(Error::shape(format!(
            "input of {} values is not a whole number of {ring_len}x{} rings",
            x.len(),
            f_in
        )));
    }
    let rings = x.len() / rows_in;
    let ring_out = ring_len * f_out;
    let mut out = Vec::with_capacity(rings * ring_out);
    for _ in 0..rings * ring_len {
        out.extend_from_slice(&kernel.bias);
    }
    par::for_each_chunk_mut(&mut out, RING_CHUNK * ring_out, |chunk, block| {
        let r0 = chunk * RING_CHUNK;
        let rows = block.len() / f_out;
        let xs = &x[r0 * rows_in..r0 * rows_in + rows * f_in];
        if k_size == 1 {
            gemm(rows, f_in, f_out, xs, false, &kernel.weights, false, T::one(), block);
        } else {
            let col = im2col(xs, ring_len, f_in, k_size);
            gemm(rows, k_size * f_in, f_out, &col, false, &kernel.weights, false, T::one(), block);
        }
    });
    Ok(out)
}

/// Adjoint of [`annular_conv_forward_rings`] for upstream gradient `gy`.
pub fn annular_conv_backward_rings<T: Real>(
    x: &[T],
    ring_len: usize,
    kernel: &ConvKernel<T>,
    gy: &[T],
    need_input: bool,
) -> Result<ConvGrads<T>> {
    check_ring(ring_len, kernel.k_size)?;
    let (f_in, f_out, k_size) = (kernel.f_in, kernel.f_out, kernel.k_size);
    let rows_in = ring_len * f_in;
    let ring_out = ring_len * f_out;
    if !x.len().is_multiple_of(rows_in) || gy.len() != x.len() / rows_in * ring_out {
        return Err(Error::shape("annular conv backward: input/upstream size mismatch"));
    }
    let rings = x.len() / rows_in;
    let width = k_size * f_in;

    let mut gx = if need_input { vec![T::zero(); x.len()] } else { Vec::new() };
    if need_input {
        par::for_each_chunk_mut(&mut gx, RING_CHUNK * rows_in, |chunk, block| {
            let r0 = chunk * RING_CHUNK;
            let rows = block.len() / f_in;
            let g = &gy[r0 * ring_out..r0 * ring_out + rows * f_out];
            if k_size == 1 {
                gemm(rows, f_out, f_in, g, false, &kernel.weights, true, T::zero(), block);
            } else {
                let mut gcol = vec![T::zero(); rows * width];
                gemm(rows, f_out, width, g, false, &kernel.weights, true, T::zero(), &mut gcol);
                col2im(&gcol, ring_len, f_in, k_size, block);
            }
        });
    }

    let n_w = width * f_out;
    let partials = par::block_partials(rings, |range| {
        let rows = range.len() * ring_len;
        let xs = &x[range.start * rows_in..range.end * rows_in];
        let g = &gy[range.start * ring_out..range.end * ring_out];
        let mut acc = vec![T::zero(); n_w + f_out];
        let (gw, gb) = acc.split_at_mut(n_w);
        if k_size == 1 {
            gemm(width, rows, f_out, xs, true, g, false, T::zero(), gw);
        } else {
            let col = im2col(xs, ring_len, f_in, k_size);
            gemm(width, rows, f_out, &col, true, g, false, T::zero(), gw);
        }
        for row in g.chunks(f_out) {
            for (b, &v) in gb.iter_mut().zip(row) {
                *b += v;
            }
        }
        acc
    });
    let mut gw = crate::numeric::fold_partials(partials, n_w + f_out);
    let gb = gw.split_off(n_w);
    Ok(ConvGrads {
        input: gx,
        weights: gw,
        bias: gb,
    })
}

/// Single-ring forward: `features` is `K × f_in`, output `K × f_out`.
pub fn annular_conv_forward<T: Real>(features: &Tensor<T>, kernel: &ConvKernel<T>) -> Result<Tensor<T>> {
    let (k, f) = features.expect_matrix("ring features")?;
    if f != kernel.f_in {
        return Err(Error::shape(format!(
            "ring has {f} channels, kernel expects {}",
            kernel.f_in
        )));
    }
    let out = annular_conv_forward_rings(features.data(), k, kernel)?;
    Tensor::matrix(k, kernel.f_out, out)
}

/// Single-ring backward; gradient for `features` has the input's shape.
pub fn annular_conv_backward<T: Real>(
    features: &Tensor<T>,
    kernel: &ConvKernel<T>,
    upstream: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let (k, f) = features.expect_matrix("ring features")?;
    if f != kernel.f_in || upstream.shape() != [k, kernel.f_out] {
        return Err(Error::shape(format!(
            "features {:?}, kernel {}x{}x{}, upstream {:?}",
            features.shape(),
            kernel.k_size,
            kernel.f_in,
            kernel.f_out,
            upstream.shape()
        )));
    }
    annular_conv_backward_rings(features.data(), k, kernel, upstream.data(), true)
}

/// Per-channel maximum over the rows of each stacked ring. Returns the pooled
/// `rings × f` values and, for each, the winning row within its ring (first
/// row on ties).
pub fn ring_max_pool_rings<T: Real>(x: &[T], ring_len: usize, f: usize) -> Result<(Vec<T>, Vec<u32>)> {
    if ring_len == 0 || f == 0 || !x.len().is_multiple_of(ring_len * f) {
        return Err(Error::shape("max pool: input is not a whole number of rings"));
    }
    let rings = x.len() / (ring_len * f);
    let mut vals = vec![T::zero(); rings * f];
    let mut arg = vec![0u32; rings * f];
    par::for_each_chunk_pair_mut(&mut vals, RING_CHUNK * f, &mut arg, RING_CHUNK * f, |chunk, vb, ab| {
        for (j, (v, a)) in vb.chunks_mut(f).zip(ab.chunks_mut(f)).enumerate() {
            let r = chunk * RING_CHUNK + j;
            let ring = &x[r * ring_len * f..(r + 1) * ring_len * f];
            v.copy_from_slice(&ring[..f]);
            a.fill(0);
            for row in 1..ring_len {
                for c in 0..f {
                    let val = ring[row * f + c];
                    if val > v[c] {
                        v[c] = val;
                        a[c] = row as u32;
                    }
                }
            }
        }
    });
    Ok((vals, arg))
}

/// Scatter pooled gradients back to the winning rows.
pub fn ring_max_pool_backward_rings<T: Real>(argmax: &[u32], ring_len: usize, f: usize, gy: &[T]) -> Vec<T> {
    let rings = argmax.len() / f;
    let mut gx = vec![T::zero(); rings * ring_len * f];
    for r in 0..rings {
        for c in 0..f {
            let row = argmax[r * f + c] as usize;
            gx[(r * ring_len + row) * f + c] = gy[r * f + c];
        }
    }
    gx
}

/// Max pool over one `K × F` ring.
pub fn ring_max_pool<T: Real>(features: &Tensor<T>) -> Result<(Vec<T>, Vec<usize>)> {
    let (k, f) = features.expect_matrix("ring features")?;
    let (v, a) = ring_max_pool_rings(features.data(), k, f)?;
    Ok((v, a.into_iter().map(|i| i as usize).collect()))
}
