use rand::Rng;

use super::{gemm, Mode, Real, Tensor};
use crate::error::{Error, Result};
use crate::par;

pub const BN_EPSILON: f64 = 1e-5;
/// Weight of the old running statistic in each update.
pub const BN_MOMENTUM: f64 = 0.9;

const ROW_CHUNK: usize = 256;

/// Apply `f(row, out)` to every `c`-wide row of `x`, in parallel blocks.
fn par_rows<T: Real>(x: &[T], c: usize, f: impl Fn(&[T], &mut [T]) + Sync + Send) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    par::for_each_chunk_mut(&mut out, ROW_CHUNK * c, |chunk, block| {
        let base = chunk * ROW_CHUNK * c;
        for (o, row) in block.chunks_mut(c).zip(x[base..].chunks(c)) {
            f(row, o);
        }
    });
    out
}

/// Like [`par_rows`] over two aligned inputs.
fn par_rows2<T: Real>(x: &[T], y: &[T], c: usize, f: impl Fn(&[T], &[T], &mut [T]) + Sync + Send) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    par::for_each_chunk_mut(&mut out, ROW_CHUNK * c, |chunk, block| {
        let base = chunk * ROW_CHUNK * c;
        for ((o, a), b) in block.chunks_mut(c).zip(x[base..].chunks(c)).zip(y[base..].chunks(c)) {
            f(a, b, o);
        }
    });
    out
}

/// Sum per-block partial vectors in block order.
pub(crate) fn fold_partials<T: Real>(partials: Vec<Vec<T>>, len: usize) -> Vec<T> {
    let mut out = vec![T::zero(); len];
    for p in partials {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    out
}

/// `x · W + b` for `x: n × in`, `W: in × out`, `b: out`.
pub fn dense_forward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, f_in) = x.expect_matrix("dense input")?;
    let (w_in, f_out) = w.expect_matrix("dense weights")?;
    if w_in != f_in || b.len() != f_out {
        return Err(Error::shape(format!(
            "dense: input {:?}, weights {:?}, bias {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let (xd, wd) = (x.data(), w.data());
    let mut out = vec![T::zero(); n * f_out];
    par::for_each_chunk_mut(&mut out, ROW_CHUNK * f_out, |chunk, rows| {
        let r0 = chunk * ROW_CHUNK;
        let m = rows.len() / f_out;
        for orow in rows.chunks_mut(f_out) {
            orow.copy_from_slice(b.data());
        }
        gemm(m, f_in, f_out, &xd[r0 * f_in..(r0 + m) * f_in], false, wd, false, T::one(), rows);
    });
    Tensor::matrix(n, f_out, out)
}

#[derive(Clone, Debug)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn dense_backward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, gy: &Tensor<T>) -> Result<DenseGrads<T>> {
    let (n, f_in) = x.expect_matrix("dense input")?;
    let (_, f_out) = w.expect_matrix("dense weights")?;
    if gy.shape() != [n, f_out] || w.shape() != [f_in, f_out] {
        return Err(Error::shape(format!(
            "dense backward: input {:?}, weights {:?}, upstream {:?}",
            x.shape(),
            w.shape(),
            gy.shape()
        )));
    }
    let (xd, wd, gd) = (x.data(), w.data(), gy.data());

    let mut gx = vec![T::zero(); n * f_in];
    par::for_each_chunk_mut(&mut gx, ROW_CHUNK * f_in, |chunk, rows| {
        let r0 = chunk * ROW_CHUNK;
        let m = rows.len() / f_in;
        gemm(m, f_out, f_in, &gd[r0 * f_out..(r0 + m) * f_out], false, wd, true, T::zero(), rows);
    });

    let partials = par::block_partials(n, |range| {
        let mut acc = vec![T::zero(); f_in * f_out + f_out];
        let (gw, gb) = acc.split_at_mut(f_in * f_out);
        let xs = &xd[range.start * f_in..range.end * f_in];
        let g = &gd[range.start * f_out..range.end * f_out];
        gemm(f_in, range.len(), f_out, xs, true, g, false, T::zero(), gw);
        for row in g.chunks(f_out) {
            for (b, &v) in gb.iter_mut().zip(row) {
                *b += v;
            }
        }
        acc
    });
    let mut gw = fold_partials(partials, f_in * f_out + f_out);
    let gb = gw.split_off(f_in * f_out);

    Ok(DenseGrads {
        input: Tensor::matrix(n, f_in, gx)?,
        weights: Tensor::matrix(f_in, f_out, gw)?,
        bias: Tensor::vector(gb)?,
    })
}

/// Saved state of one batch-norm application.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    pub mode: Mode,
    pub rows: usize,
    pub channels: usize,
    /// Normalised input, `rows × channels`.
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    /// Batch statistics (train mode only; empty in eval mode).
    pub batch_mean: Vec<T>,
    pub batch_var: Vec<T>,
}

/// Per-channel mean and biased variance over rows, reduced in fixed blocks.
fn channel_moments<T: Real>(x: &[T], rows: usize, c: usize) -> (Vec<T>, Vec<T>) {
    let sums = fold_partials(
        par::block_partials(rows, |range| {
            let mut acc = vec![T::zero(); c];
            for r in range {
                for (a, &v) in acc.iter_mut().zip(&x[r * c..(r + 1) * c]) {
                    *a += v;
                }
            }
            acc
        }),
        c,
    );
    let inv_n = T::one() / T::of(rows as f64);
    let mean: Vec<T> = sums.into_iter().map(|s| s * inv_n).collect();
    let sq = fold_partials(
        par::block_partials(rows, |range| {
            let mut acc = vec![T::zero(); c];
            for r in range {
                for ((a, &v), &m) in acc.iter_mut().zip(&x[r * c..(r + 1) * c]).zip(&mean) {
                    let d = v - m;
                    *a += d * d;
                }
            }
            acc
        }),
        c,
    );
    let var = sq.into_iter().map(|s| s * inv_n).collect();
    (mean, var)
}

/// Batch normalisation over the rows of `x: n × c`. Train mode normalises with
/// batch statistics; eval mode with the running ones.
pub fn batch_norm_forward<T: Real>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    running_mean: &[T],
    running_var: &[T],
    mode: Mode,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    let (n, c) = x.expect_matrix("batch-norm input")?;
    if [gamma.len(), beta.len(), running_mean.len(), running_var.len()] != [c; 4] {
        return Err(Error::shape(format!("batch-norm over {c} channels: parameter length mismatch")));
    }
    let eps = T::of(BN_EPSILON);
    let (mean, var, batch_mean, batch_var) = match mode {
        Mode::Train => {
            let (m, v) = channel_moments(x.data(), n, c);
            (m.clone(), v.clone(), m, v)
        }
        Mode::Eval => (running_mean.to_vec(), running_var.to_vec(), vec![], vec![]),
    };
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();

    let shift: Vec<T> = mean.iter().zip(&inv_std).map(|(&m, &s)| -m * s).collect();
    let xhat: Vec<T> = par_rows(x.data(), c, |row, out| {
        for (((&v, &s), &t), o) in row.iter().zip(&inv_std).zip(&shift).zip(out) {
            *o = v * s + t;
        }
    });
    let y: Vec<T> = par_rows(&xhat, c, |row, out| {
        for (((&h, &g), &b), o) in row.iter().zip(gamma).zip(beta).zip(out) {
            *o = g * h + b;
        }
    });
    Ok((
        Tensor::matrix(n, c, y)?,
        BatchNormCache {
            mode,
            rows: n,
            channels: c,
            xhat,
            inv_std,
            batch_mean,
            batch_var,
        },
    ))
}

/// Returns `(d input, d gamma, d beta)`.
pub fn batch_norm_backward<T: Real>(
    cache: &BatchNormCache<T>,
    gamma: &[T],
    gy: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    let (n, c) = (cache.rows, cache.channels);
    if gy.shape() != [n, c] {
        return Err(Error::shape(format!(
            "batch-norm backward: expected [{n}, {c}], got {:?}",
            gy.shape()
        )));
    }
    let gd = gy.data();
    let xhat = &cache.xhat;
    let sums = fold_partials(
        par::block_partials(n, |range| {
            let mut acc = vec![T::zero(); 2 * c];
            let (sb, sg) = acc.split_at_mut(c);
            for r in range {
                let g = &gd[r * c..(r + 1) * c];
                let h = &xhat[r * c..(r + 1) * c];
                for ch in 0..c {
                    sb[ch] += g[ch];
                    sg[ch] += g[ch] * h[ch];
                }
            }
            acc
        }),
        2 * c,
    );
    let gbeta = sums[..c].to_vec();
    let ggamma = sums[c..].to_vec();

    // gx = a·g + b·xhat + k per channel
    let inv_n = T::one() / T::of(n as f64);
    let scale: Vec<T> = gamma.iter().zip(&cache.inv_std).map(|(&g, &s)| g * s).collect();
    let (coef_h, coef_k): (Vec<T>, Vec<T>) = match cache.mode {
        Mode::Train => (
            scale.iter().zip(&ggamma).map(|(&a, &gg)| -a * inv_n * gg).collect(),
            scale.iter().zip(&gbeta).map(|(&a, &gb)| -a * inv_n * gb).collect(),
        ),
        Mode::Eval => (vec![T::zero(); c], vec![T::zero(); c]),
    };
    let gx: Vec<T> = par_rows2(gd, xhat, c, |g, h, out| {
        let coefs = scale.iter().zip(&coef_h).zip(&coef_k);
        for (((&gv, &hv), ((&a, &b), &k)), o) in g.iter().zip(h).zip(coefs).zip(out) {
            *o = a * gv + b * hv + k;
        }
    });
    Ok((Tensor::matrix(n, c, gx)?, ggamma, gbeta))
}

/// Exponential moving average of the batch statistics.
pub fn update_running_stats<T: Real>(
    running_mean: &mut [T],
    running_var: &mut [T],
    cache: &BatchNormCache<T>,
) {
    if cache.mode != Mode::Train {
        return;
    }
    let keep = T::of(BN_MOMENTUM);
    let take = T::one() - keep;
    for (r, &b) in running_mean.iter_mut().zip(&cache.batch_mean) {
        *r = keep * *r + take * b;
    }
    for (r, &b) in running_var.iter_mut().zip(&cache.batch_var) {
        *r = keep * *r + take * b;
    }
}

pub fn relu_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient through ReLU given its input; the subgradient at 0 is 0.
pub fn relu_backward<T: Real>(x: &Tensor<T>, gy: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape() != gy.shape() {
        return Err(Error::shape("relu backward: shape mismatch"));
    }
    let data = x
        .data()
        .iter()
        .zip(gy.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Inverted dropout. Returns the output and the per-element scale
/// (`0` or `1 / (1 − rate)`), which is also the backward multiplier.
pub fn dropout_forward<T: Real, R: Rng + ?Sized>(
    x: &Tensor<T>,
    rate: f64,
    rng: &mut R,
    mode: Mode,
) -> Result<(Tensor<T>, Vec<T>)> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1]")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.clone(), vec![T::one(); x.len()]));
    }
    let mask: Vec<T> = if rate >= 1.0 {
        vec![T::zero(); x.len()]
    } else {
        let scale = T::of(1.0 / (1.0 - rate));
        (0..x.len())
            .map(|_| if rng.random::<f64>() < rate { T::zero() } else { scale })
            .collect()
    };
    let y = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((Tensor::new(x.shape().to_vec(), y)?, mask))
}

pub fn dropout_backward<T: Real>(mask: &[T], gy: &Tensor<T>) -> Result<Tensor<T>> {
    if mask.len() != gy.len() {
        return Err(Error::shape("dropout backward: mask length mismatch"));
    }
    let data = gy.data().iter().zip(mask).map(|(&g, &m)| g * m).collect();
    Tensor::new(gy.shape().to_vec(), data)
}

pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `−log softmax(logits)[label]` and its gradient `softmax − onehot`.
pub fn softmax_cross_entropy<T: Real>(logits: &[T], label: usize) -> Result<(T, Vec<T>)> {
    if label >= logits.len() {
        return Err(Error::invalid(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let sum: T = logits.iter().map(|&l| (l - max).exp()).sum();
    let log_z = max + sum.ln();
    let loss = log_z - logits[label];
    let mut grad: Vec<T> = logits.iter().map(|&l| (l - log_z).exp()).collect();
    grad[label] -= T::one();
    Ok((loss, grad))
}

/// Mean cross-entropy over the rows of `logits: n × c`, with the gradient of
/// the mean.
pub fn softmax_cross_entropy_batch<T: Real>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(T, Tensor<T>)> {
    let (n, c) = logits.expect_matrix("logits")?;
    if labels.len() != n {
        return Err(Error::shape(format!("{} labels for {n} rows", labels.len())));
    }
    let inv_n = T::one() / T::of(n as f64);
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(n * c);
    for (r, &label) in labels.iter().enumerate() {
        let (l, g) = softmax_cross_entropy(logits.row(r), label)?;
        total += l;
        grad.extend(g.into_iter().map(|v| v * inv_n));
    }
    Ok((total * inv_n, Tensor::matrix(n, c, grad)?))
}
