use rand::seq::SliceRandom;
use rand::Rng;

use super::{AblationVariant, LayerConfig, StartRule};
use crate::annular::{
    annular_conv_backward_rings, annular_conv_forward_rings, ring_max_pool_backward_rings,
    ring_max_pool_rings, ConvKernel,
};
use crate::error::{Error, Result};
use crate::geometry::{farthest_point_sampling, order_around, Neighborhood, Orientation, PointCloud, Vec3};
use crate::numeric::{
    batch_norm_backward, batch_norm_forward, relu_backward, BatchNormCache, Mode, ParamSet, Real, Tensor,
};
use crate::par;

/// Centroids and ordered ring neighbourhoods of one encoder layer.
///
/// Ring membership and order are piecewise-constant functions of the
/// coordinates and are never differentiated.
pub fn group_layer<R: Rng + ?Sized>(
    level: &PointCloud,
    layer: &LayerConfig,
    variant: AblationVariant,
    fps_seed: usize,
    start: StartRule,
    rng: &mut R,
) -> Result<Vec<Neighborhood>> {
    let normals = level.normals.as_ref().ok_or(Error::NormalsRequired)?;
    if level.len() < layer.centroids {
        return Err(Error::invalid(format!(
            "layer wants {} centroids from {} points",
            layer.centroids,
            level.len()
        )));
    }
    let centroids = farthest_point_sampling(level, layer.centroids, fps_seed)?;
    if layer.is_global() {
        return Ok(vec![global_neighborhood(level, layer, centroids[0], normals[centroids[0]])]);
    }
    let kernel = effective_kernel(layer, variant);
    let mut out = Vec::with_capacity(centroids.len());
    for c in centroids {
        let q = level.points[c];
        let n = normals[c];
        let dist: Vec<f64> = level.points.iter().map(|p| (p - q).norm()).collect();
        let mut rings = Vec::with_capacity(layer.rings.len());
        for spec in &layer.rings {
            let spec = match variant {
                AblationVariant::BallQuery => spec.as_ball(),
                _ => *spec,
            };
            let mut query = crate::geometry::ring_from_distances(&dist, c, &spec);
            if kernel > 1 {
                match variant {
                    AblationVariant::NoOrdering => query.indices.shuffle(rng),
                    _ => {
                        let s = match start {
                            StartRule::Closest => 0,
                            StartRule::Random => rng.random_range(0..query.indices.len()),
                        };
                        query.indices =
                            order_around(&query.indices, level, &q, &n, s, Orientation::CounterClockwise)?;
                    }
                }
            }
            rings.push(query);
        }
        out.push(Neighborhood {
            centroid: c,
            normal: n,
            rings,
        });
    }
    Ok(out)
}

/// Rings of a single-centroid layer are shells about the origin of the
/// level's frame, and no point is excluded. An empty shell is padded with the
/// point nearest the origin. `centroid` only names the level's one survivor.
fn global_neighborhood(level: &PointCloud, layer: &LayerConfig, centroid: usize, normal: Vec3) -> Neighborhood {
    let dist: Vec<f64> = level.points.iter().map(|p| p.norm()).collect();
    let nearest = (0..dist.len())
        .min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
        .unwrap_or(0);
    let rings = layer
        .rings
        .iter()
        .map(|spec| {
            let mut q = crate::geometry::ring_from_distances(&dist, usize::MAX, spec);
            if q.members.is_empty() {
                q.indices = vec![nearest; spec.k];
            }
            q
        })
        .collect();
    Neighborhood {
        centroid,
        normal,
        rings,
    }
}

pub(crate) fn effective_kernel(layer: &LayerConfig, variant: AblationVariant) -> usize {
    match variant {
        AblationVariant::NoAnnular => 1,
        _ => layer.kernel,
    }
}

#[derive(Clone, Debug)]
pub(crate) struct BnSlots {
    pub gamma: usize,
    pub beta: usize,
    pub mean: usize,
    pub var: usize,
}

impl BnSlots {
    pub(crate) fn register<T: Real>(params: &mut ParamSet<T>, prefix: &str, c: usize) -> Self {
        BnSlots {
            gamma: params.insert(format!("{prefix}.gamma"), Tensor::filled(&[c], T::one()), true),
            beta: params.insert(format!("{prefix}.beta"), Tensor::zeros(&[c]), true),
            mean: params.insert(format!("{prefix}.running_mean"), Tensor::zeros(&[c]), false),
            var: params.insert(format!("{prefix}.running_var"), Tensor::filled(&[c], T::one()), false),
        }
    }

    pub(crate) fn forward<T: Real>(
        &self,
        params: &ParamSet<T>,
        x: &Tensor<T>,
        mode: Mode,
    ) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        batch_norm_forward(
            x,
            params.get(self.gamma).data(),
            params.get(self.beta).data(),
            params.get(self.mean).data(),
            params.get(self.var).data(),
            mode,
        )
    }

    pub(crate) fn backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        cache: &BatchNormCache<T>,
        gy: &Tensor<T>,
        grads: &mut [Tensor<T>],
    ) -> Result<Tensor<T>> {
        let (gx, gg, gb) = batch_norm_backward(cache, params.get(self.gamma).data(), gy)?;
        accumulate(&mut grads[self.gamma], &gg);
        accumulate(&mut grads[self.beta], &gb);
        Ok(gx)
    }
}

pub(crate) fn hash_signs<T: Real, H: std::hash::Hasher>(v: &[T], h: &mut H) {
    for chunk in v.chunks(64) {
        let mut bits = 0u64;
        for (i, &x) in chunk.iter().enumerate() {
            if x > T::zero() {
                bits |= 1 << i;
            }
        }
        h.write_u64(bits);
    }
}

pub(crate) fn accumulate<T: Real>(t: &mut Tensor<T>, g: &[T]) {
    for (a, &b) in t.data_mut().iter_mut().zip(g) {
        *a += b;
    }
}

/// Uniform in ±1/√fan_in.
pub(crate) fn init_uniform<T: Real, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::of(rng.random_range(-bound..bound))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

#[derive(Clone, Debug)]
pub(crate) struct ConvSlots {
    pub weight: usize,
    pub bias: usize,
    pub bn: Option<BnSlots>,
    pub k_size: usize,
    pub f_in: usize,
    pub f_out: usize,
}

impl ConvSlots {
    fn kernel<T: Real>(&self, params: &ParamSet<T>) -> ConvKernel<T> {
        ConvKernel {
            k_size: self.k_size,
            f_in: self.f_in,
            f_out: self.f_out,
            weights: params.get(self.weight).data().to_vec(),
            bias: params.get(self.bias).data().to_vec(),
        }
    }
}

/// Parameter layout of one encoder layer inside a [`ParamSet`].
#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub config: LayerConfig,
    pub variant: AblationVariant,
    /// Feature channels arriving from the previous level (excluding the three
    /// relative coordinates every neighbour row carries).
    pub in_features: usize,
    pub(crate) rings: Vec<Vec<ConvSlots>>,
}

#[derive(Clone, Debug)]
pub(crate) struct ConvTape<T> {
    /// Post-normalisation, pre-ReLU activations.
    pre: Tensor<T>,
    bn: Option<BatchNormCache<T>>,
}

#[derive(Clone, Debug)]
pub(crate) struct RingTape<T> {
    /// `inputs[0]` is the gathered neighbour block, `inputs[i]` the input of conv `i`.
    inputs: Vec<Vec<T>>,
    convs: Vec<ConvTape<T>>,
    argmax: Vec<u32>,
}

#[derive(Clone, Debug)]
pub struct LayerTape<T> {
    pub(crate) rings: Vec<RingTape<T>>,
}

impl<T: Real> LayerTape<T> {
    /// Feeds the ReLU sign pattern and pooling winners into `h`.
    pub(crate) fn pattern<H: std::hash::Hasher>(&self, h: &mut H) {
        for rt in &self.rings {
            for c in &rt.convs {
                hash_signs(c.pre.data(), h);
            }
            for &a in &rt.argmax {
                h.write_u32(a);
            }
        }
    }

    pub(crate) fn bn_caches(&self) -> impl Iterator<Item = (usize, usize, &BatchNormCache<T>)> {
        self.rings.iter().enumerate().flat_map(|(r, rt)| {
            rt.convs
                .iter()
                .enumerate()
                .filter_map(move |(i, c)| c.bn.as_ref().map(|b| (r, i, b)))
        })
    }
}

/// Inputs of one layer for a batch of samples.
pub(crate) struct LayerInput<'a, T> {
    pub groups: Vec<&'a [Neighborhood]>,
    pub positions: Vec<&'a [Vec3]>,
    /// Previous-level features, `(Σ points) × in_features`, samples stacked in order.
    pub features: Option<&'a [T]>,
    pub offsets: Vec<usize>,
}

impl EncoderLayer {
    pub(crate) fn register<T: Real, R: Rng + ?Sized>(
        params: &mut ParamSet<T>,
        index: usize,
        config: &LayerConfig,
        variant: AblationVariant,
        in_features: usize,
        batch_norm: bool,
        rng: &mut R,
    ) -> Self {
        let k_size = effective_kernel(config, variant);
        let rings = config
            .features
            .iter()
            .enumerate()
            .map(|(r, widths)| {
                let mut f_in = 3 + in_features;
                widths
                    .iter()
                    .enumerate()
                    .map(|(i, &f_out)| {
                        let prefix = format!("enc{index}.ring{r}.conv{i}");
                        let weight = params.insert(
                            format!("{prefix}.weight"),
                            init_uniform(&[k_size, f_in, f_out], k_size * f_in, rng),
                            true,
                        );
                        let bias = params.insert(format!("{prefix}.bias"), Tensor::zeros(&[f_out]), true);
                        let bn = batch_norm.then(|| BnSlots::register(params, &format!("{prefix}.bn"), f_out));
                        let slot = ConvSlots {
                            weight,
                            bias,
                            bn,
                            k_size,
                            f_in,
                            f_out,
                        };
                        f_in = f_out;
                        slot
                    })
                    .collect()
            })
            .collect();
        EncoderLayer {
            config: config.clone(),
            variant,
            in_features,
            rings,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.config.out_channels()
    }

    fn gather<T: Real>(&self, input: &LayerInput<'_, T>, ring: usize) -> Vec<T> {
        let k = self.config.rings[ring].k;
        let c = self.config.centroids;
        let f = self.in_features;
        let cols = 3 + f;
        let global = self.config.is_global();
        let mut x = vec![T::zero(); input.groups.len() * c * k * cols];
        par::for_each_chunk_mut(&mut x, c * k * cols, |b, block| {
            let pos = input.positions[b];
            for (ci, nb) in input.groups[b].iter().enumerate() {
                let center = if global { Vec3::zeros() } else { pos[nb.centroid] };
                for (s, &idx) in nb.rings[ring].indices.iter().enumerate() {
                    let row = &mut block[(ci * k + s) * cols..(ci * k + s + 1) * cols];
                    let rel = pos[idx] - center;
                    row[0] = T::of(rel.x);
                    row[1] = T::of(rel.y);
                    row[2] = T::of(rel.z);
                    if let Some(feat) = input.features {
                        let src = (input.offsets[b] + idx) * f;
                        row[3..].copy_from_slice(&feat[src..src + f]);
                    }
                }
            }
        });
        x
    }

    /// Batched forward. Returns `(samples · centroids) × out_channels`.
    pub(crate) fn forward<T: Real>(
        &self,
        params: &ParamSet<T>,
        input: &LayerInput<'_, T>,
        mode: Mode,
    ) -> Result<(Tensor<T>, LayerTape<T>)> {
        let batch = input.groups.len();
        let c = self.config.centroids;
        for g in &input.groups {
            if g.len() != c {
                return Err(Error::shape(format!("expected {c} neighbourhoods, got {}", g.len())));
            }
        }
        let mut pooled = Vec::with_capacity(self.rings.len());
        let mut tapes = Vec::with_capacity(self.rings.len());
        for (r, convs) in self.rings.iter().enumerate() {
            let k = self.config.rings[r].k;
            let rows = batch * c * k;
            let mut inputs = vec![self.gather(input, r)];
            let mut conv_tapes = Vec::with_capacity(convs.len());
            for slot in convs {
                let y = annular_conv_forward_rings(inputs.last().unwrap(), k, &slot.kernel(params))?;
                let y = Tensor::matrix(rows, slot.f_out, y)?;
                let (pre, bn) = match &slot.bn {
                    Some(bn) => {
                        let (z, cache) = bn.forward(params, &y, mode)?;
                        (z, Some(cache))
                    }
                    None => (y, None),
                };
                let act: Vec<T> = pre
                    .data()
                    .iter()
                    .map(|&v| if v > T::zero() { v } else { T::zero() })
                    .collect();
                inputs.push(act);
                conv_tapes.push(ConvTape { pre, bn });
            }
            let last = inputs.pop().unwrap();
            let f_last = convs.last().unwrap().f_out;
            let (vals, argmax) = ring_max_pool_rings(&last, k, f_last)?;
            pooled.push((vals, f_last));
            tapes.push(RingTape {
                inputs,
                convs: conv_tapes,
                argmax,
            });
        }

        let out_c = self.out_channels();
        let mut out = vec![T::zero(); batch * c * out_c];
        for (row, o) in out.chunks_mut(out_c).enumerate() {
            let mut col = 0;
            for (vals, f) in &pooled {
                o[col..col + f].copy_from_slice(&vals[row * f..(row + 1) * f]);
                col += f;
            }
        }
        Ok((Tensor::matrix(batch * c, out_c, out)?, LayerTape { rings: tapes }))
    }

    /// Batched backward. Accumulates parameter gradients into `grads` and
    /// returns the gradient for the previous-level features (if they exist)
    /// and, when requested, per-sample gradients for the level positions.
    #[allow(clippy::type_complexity)]
    pub(crate) fn backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        input: &LayerInput<'_, T>,
        tape: &LayerTape<T>,
        g_out: &Tensor<T>,
        grads: &mut [Tensor<T>],
        want_positions: bool,
    ) -> Result<(Option<Vec<T>>, Option<Vec<Vec<[T; 3]>>>)> {
        let batch = input.groups.len();
        let c = self.config.centroids;
        let out_c = self.out_channels();
        if g_out.shape() != [batch * c, out_c] {
            return Err(Error::shape("encoder backward: upstream shape mismatch"));
        }
        let f = self.in_features;
        let cols = 3 + f;
        let need_input = f > 0 || want_positions;
        let global = self.config.is_global();

        let mut g_feat = input.features.map(|feat| vec![T::zero(); feat.len()]);
        let mut g_pos: Option<Vec<Vec<[T; 3]>>> = want_positions
            .then(|| input.positions.iter().map(|p| vec![[T::zero(); 3]; p.len()]).collect());

        let mut col = 0;
        for (r, convs) in self.rings.iter().enumerate() {
            let k = self.config.rings[r].k;
            let rt = &tape.rings[r];
            let f_last = convs.last().unwrap().f_out;
            let mut g_pool = vec![T::zero(); batch * c * f_last];
            for row in 0..batch * c {
                g_pool[row * f_last..(row + 1) * f_last]
                    .copy_from_slice(&g_out.row(row)[col..col + f_last]);
            }
            col += f_last;

            let mut g = ring_max_pool_backward_rings(&rt.argmax, k, f_last, &g_pool);
            for (i, slot) in convs.iter().enumerate().rev() {
                let ct = &rt.convs[i];
                let g_act = Tensor::matrix(ct.pre.rows(), slot.f_out, g)?;
                let g_pre = relu_backward(&ct.pre, &g_act)?;
                let g_y = match (&slot.bn, &ct.bn) {
                    (Some(bn), Some(cache)) => bn.backward(params, cache, &g_pre, grads)?,
                    _ => g_pre,
                };
                let need = i > 0 || need_input;
                let cg = annular_conv_backward_rings(&rt.inputs[i], k, &slot.kernel(params), g_y.data(), need)?;
                accumulate(&mut grads[slot.weight], &cg.weights);
                accumulate(&mut grads[slot.bias], &cg.bias);
                g = cg.input;
            }
            if !need_input {
                continue;
            }

            // scatter the neighbour-block gradient back to points, one sample at a time
            let per_sample: Vec<(Vec<T>, Vec<[T; 3]>)> = par::map_range(batch, |b| {
                let n_b = input.positions[b].len();
                let mut gf = vec![T::zero(); if f > 0 { n_b * f } else { 0 }];
                let mut gp = vec![[T::zero(); 3]; if want_positions { n_b } else { 0 }];
                for (ci, nb) in input.groups[b].iter().enumerate() {
                    for (s, &idx) in nb.rings[r].indices.iter().enumerate() {
                        let row = &g[((b * c + ci) * k + s) * cols..((b * c + ci) * k + s + 1) * cols];
                        if f > 0 {
                            for (a, &v) in gf[idx * f..(idx + 1) * f].iter_mut().zip(&row[3..]) {
                                *a += v;
                            }
                        }
                        if want_positions {
                            for d in 0..3 {
                                gp[idx][d] += row[d];
                                if !global {
                                    gp[nb.centroid][d] -= row[d];
                                }
                            }
                        }
                    }
                }
                (gf, gp)
            });
            for (b, (gf, gp)) in per_sample.into_iter().enumerate() {
                if let Some(all) = g_feat.as_mut() {
                    let start = input.offsets[b] * f;
                    for (a, v) in all[start..start + gf.len()].iter_mut().zip(gf) {
                        *a += v;
                    }
                }
                if let Some(all) = g_pos.as_mut() {
                    for (a, v) in all[b].iter_mut().zip(gp) {
                        for d in 0..3 {
                            a[d] += v[d];
                        }
                    }
                }
            }
        }
        Ok((g_feat, g_pos))
    }
}

/// One encoder layer applied to a single cloud with explicit parameters:
/// farthest point sampling, ring search, ordering, annular convolutions and
/// ring pooling. `features` is `N × layer.in_features` (ignored when that is 0).
/// Returns the sampled centroid indices and their `C × out_channels` features.
pub fn encoder_layer<T: Real, R: Rng + ?Sized>(
    cloud: &PointCloud,
    features: Option<&Tensor<T>>,
    layer: &EncoderLayer,
    params: &ParamSet<T>,
    mode: Mode,
    rng: &mut R,
) -> Result<(Vec<usize>, Tensor<T>)> {
    if layer.in_features > 0 {
        let feat = features.ok_or_else(|| Error::shape("layer expects input features"))?;
        if feat.shape() != [cloud.len(), layer.in_features] {
            return Err(Error::shape(format!(
                "features {:?}, expected [{}, {}]",
                feat.shape(),
                cloud.len(),
                layer.in_features
            )));
        }
    }
    let groups = group_layer(cloud, &layer.config, layer.variant, 0, StartRule::Closest, rng)?;
    let input = LayerInput {
        groups: vec![&groups],
        positions: vec![&cloud.points],
        features: if layer.in_features > 0 { features.map(|f| f.data()) } else { None },
        offsets: vec![0],
    };
    let (out, _) = layer.forward(params, &input, mode)?;
    Ok((groups.iter().map(|g| g.centroid).collect(), out))
}
