use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::numeric::{Real, Tensor};
use crate::par;

/// Below this distance a query takes the known point's features verbatim.
const COINCIDENT: f64 = 1e-10;

/// Precomputed inverse-squared-distance weights from up to three nearest
/// known points to each query point.
#[derive(Clone, Debug, PartialEq)]
pub struct InterpTable {
    pub known: usize,
    pub index: Vec<[usize; 3]>,
    /// Normalised weights; unused slots are zero.
    pub weight: Vec<[f64; 3]>,
}

impl InterpTable {
    /// Uses `min(3, known.len())` neighbours, so a single known point is
    /// broadcast to every query.
    pub fn build(known: &[Vec3], queries: &[Vec3]) -> Result<Self> {
        if known.is_empty() {
            return Err(Error::invalid("no known points to interpolate from"));
        }
        let k = known.len().min(3);
        let rows = par::map_slice(queries, |q| {
            let mut best = [(f64::INFINITY, usize::MAX); 3];
            for (i, p) in known.iter().enumerate() {
                let d2 = (p - q).norm_squared();
                let cand = (d2, i);
                // insertion into a sorted top-k, ties by index
                let mut pos = k;
                while pos > 0 && cand.0 < best[pos - 1].0 {
                    pos -= 1;
                }
                if pos < k {
                    for j in (pos + 1..k).rev() {
                        best[j] = best[j - 1];
                    }
                    best[pos] = cand;
                }
            }
            let mut idx = [0usize; 3];
            let mut w = [0.0f64; 3];
            if best[0].0.sqrt() < COINCIDENT {
                idx[0] = best[0].1;
                w[0] = 1.0;
                return (idx, w);
            }
            let mut total = 0.0;
            for j in 0..k {
                idx[j] = best[j].1;
                w[j] = 1.0 / best[j].0;
                total += w[j];
            }
            for v in w.iter_mut().take(k) {
                *v /= total;
            }
            (idx, w)
        });
        let (index, weight) = rows.into_iter().unzip();
        Ok(InterpTable {
            known: known.len(),
            index,
            weight,
        })
    }

    pub fn queries(&self) -> usize {
        self.index.len()
    }

    /// `features` is `known × f`; returns `queries × f`.
    pub fn apply<T: Real>(&self, features: &[T], f: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.queries() * f];
        for (q, o) in out.chunks_mut(f).enumerate() {
            for j in 0..3 {
                let w = self.weight[q][j];
                if w == 0.0 {
                    continue;
                }
                let w = T::of(w);
                let src = &features[self.index[q][j] * f..(self.index[q][j] + 1) * f];
                for (a, &v) in o.iter_mut().zip(src) {
                    *a += w * v;
                }
            }
        }
        out
    }

    /// Adjoint of [`apply`](Self::apply) with respect to the known features.
    pub fn apply_backward<T: Real>(&self, g: &[T], f: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.known * f];
        for (q, gq) in g.chunks(f).enumerate() {
            for j in 0..3 {
                let w = self.weight[q][j];
                if w == 0.0 {
                    continue;
                }
                let w = T::of(w);
                let dst = &mut out[self.index[q][j] * f..(self.index[q][j] + 1) * f];
                for (a, &v) in dst.iter_mut().zip(gq) {
                    *a += w * v;
                }
            }
        }
        out
    }
}

/// Features at `query_points` as the inverse-squared-distance weighted
/// average of the three nearest known points.
pub fn interpolate_features<T: Real>(
    known_points: &[Vec3],
    known_features: &Tensor<T>,
    query_points: &[Vec3],
) -> Result<Tensor<T>> {
    if known_points.len() < 3 {
        return Err(Error::invalid(format!(
            "interpolation needs at least 3 known points, got {}",
            known_points.len()
        )));
    }
    let (n, f) = known_features.expect_matrix("known features")?;
    if n != known_points.len() {
        return Err(Error::shape(format!("{n} feature rows for {} known points", known_points.len())));
    }
    let table = InterpTable::build(known_points, query_points)?;
    Tensor::matrix(query_points.len(), f, table.apply(known_features.data(), f))
}
