use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::encoder::{accumulate, hash_signs, init_uniform, BnSlots, EncoderLayer, LayerInput, LayerTape};
use super::{group_layer, AblationVariant, HeadConfig, InterpTable, NetworkConfig, PlanOptions};
use crate::annular::{ring_max_pool_backward_rings, ring_max_pool_rings};
use crate::error::{Error, Result};
use crate::geometry::{Neighborhood, PointCloud};
use crate::numeric::{
    dense_backward, dense_forward, dropout_backward, dropout_forward, relu_backward, relu_forward,
    softmax_cross_entropy_batch, update_running_stats, Adam, AdamConfig, BatchNormCache, Checkpoint, Mode,
    ParamSet, Real, Tensor,
};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelOptions {
    /// Batch norm after every encoder convolution.
    pub encoder_batch_norm: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            encoder_batch_norm: true,
        }
    }
}

/// Everything about one input cloud that does not depend on the weights.
#[derive(Clone, Debug)]
pub struct SamplePlan {
    /// `levels[0]` is the input cloud, `levels[l + 1]` the centroids of layer `l`.
    pub levels: Vec<PointCloud>,
    pub groups: Vec<Vec<Neighborhood>>,
    /// Segmentation only: interpolation from each encoder output level to the
    /// input points.
    pub interp: Vec<InterpTable>,
}

impl SamplePlan {
    pub fn points(&self) -> usize {
        self.levels[0].len()
    }
}

#[derive(Clone, Debug)]
struct DenseSlots {
    weight: usize,
    bias: usize,
    bn: Option<BnSlots>,
}

impl DenseSlots {
    fn register<T: Real, R: Rng + ?Sized>(
        params: &mut ParamSet<T>,
        prefix: &str,
        f_in: usize,
        f_out: usize,
        batch_norm: bool,
        rng: &mut R,
    ) -> Self {
        DenseSlots {
            weight: params.insert(format!("{prefix}.weight"), init_uniform(&[f_in, f_out], f_in, rng), true),
            bias: params.insert(format!("{prefix}.bias"), Tensor::zeros(&[f_out]), true),
            bn: batch_norm.then(|| BnSlots::register(params, &format!("{prefix}.bn"), f_out)),
        }
    }
}

#[derive(Clone, Debug)]
enum HeadSlots {
    Classification { hidden: Vec<DenseSlots>, out: DenseSlots, dropout: f64 },
    Segmentation { hidden: DenseSlots, out: DenseSlots },
}

#[derive(Clone, Debug)]
struct DenseTape<T> {
    input: Tensor<T>,
    pre: Tensor<T>,
    bn: Option<BatchNormCache<T>>,
    mask: Vec<T>,
}

#[derive(Clone, Debug)]
enum HeadTape<T> {
    Classification {
        pool_argmax: Option<Vec<u32>>,
        hidden: Vec<DenseTape<T>>,
        out_input: Tensor<T>,
    },
    Segmentation {
        hidden: DenseTape<T>,
        out_input: Tensor<T>,
    },
}

/// Activations saved by [`Model::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct Tape<T> {
    pub mode: Mode,
    layers: Vec<LayerTape<T>>,
    level_feats: Vec<Tensor<T>>,
    head: HeadTape<T>,
}

impl<T: Real> Tape<T> {
    /// Output features of encoder layer `l`, `(samples · centroids) × channels`.
    pub fn level_features(&self, l: usize) -> &Tensor<T> {
        &self.level_feats[l]
    }

    /// Hash of every discrete choice made in the forward pass (ReLU signs,
    /// pooling winners). Equal hashes mean the same linear region.
    pub(crate) fn pattern(&self) -> u64 {
        use std::hash::Hasher;
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for lt in &self.layers {
            lt.pattern(&mut h);
        }
        match &self.head {
            HeadTape::Classification { pool_argmax, hidden, .. } => {
                for &a in pool_argmax.iter().flatten() {
                    h.write_u32(a);
                }
                for t in hidden {
                    hash_signs(t.pre.data(), &mut h);
                }
            }
            HeadTape::Segmentation { hidden, .. } => hash_signs(hidden.pre.data(), &mut h),
        }
        h.finish()
    }
}

/// Gradients from [`Model::backward`].
#[derive(Clone, Debug)]
pub struct Grads<T> {
    /// One tensor per parameter slot.
    pub params: Vec<Tensor<T>>,
    /// Per-sample gradient with respect to the input coordinates.
    pub positions: Option<Vec<Vec<[T; 3]>>>,
}

#[derive(Clone, Debug)]
pub struct Model<T> {
    pub config: NetworkConfig,
    pub variant: AblationVariant,
    pub options: ModelOptions,
    pub params: ParamSet<T>,
    layers: Vec<EncoderLayer>,
    head: HeadSlots,
}

fn dense_block<T: Real, R: Rng + ?Sized>(
    params: &ParamSet<T>,
    slots: &DenseSlots,
    x: Tensor<T>,
    dropout: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor<T>, DenseTape<T>)> {
    let y = dense_forward(&x, params.get(slots.weight), params.get(slots.bias))?;
    let (pre, bn) = match &slots.bn {
        Some(bn) => {
            let (z, c) = bn.forward(params, &y, mode)?;
            (z, Some(c))
        }
        None => (y, None),
    };
    let a = relu_forward(&pre);
    let (d, mask) = dropout_forward(&a, dropout, rng, mode)?;
    Ok((d, DenseTape { input: x, pre, bn, mask }))
}

fn dense_block_backward<T: Real>(
    params: &ParamSet<T>,
    slots: &DenseSlots,
    tape: &DenseTape<T>,
    g: &Tensor<T>,
    grads: &mut [Tensor<T>],
) -> Result<Tensor<T>> {
    let g = dropout_backward(&tape.mask, g)?;
    let g = relu_backward(&tape.pre, &g)?;
    let g = match (&slots.bn, &tape.bn) {
        (Some(bn), Some(c)) => bn.backward(params, c, &g, grads)?,
        _ => g,
    };
    let dg = dense_backward(&tape.input, params.get(slots.weight), &g)?;
    accumulate(&mut grads[slots.weight], dg.weights.data());
    accumulate(&mut grads[slots.bias], dg.bias.data());
    Ok(dg.input)
}

fn linear_backward<T: Real>(
    params: &ParamSet<T>,
    slots: &DenseSlots,
    input: &Tensor<T>,
    g: &Tensor<T>,
    grads: &mut [Tensor<T>],
) -> Result<Tensor<T>> {
    let dg = dense_backward(input, params.get(slots.weight), g)?;
    accumulate(&mut grads[slots.weight], dg.weights.data());
    accumulate(&mut grads[slots.bias], dg.bias.data());
    Ok(dg.input)
}

fn update_bn<T: Real>(params: &mut ParamSet<T>, bn: &BnSlots, cache: &BatchNormCache<T>) {
    let mut mean = params.get(bn.mean).data().to_vec();
    let mut var = params.get(bn.var).data().to_vec();
    update_running_stats(&mut mean, &mut var, cache);
    params.get_mut(bn.mean).data_mut().copy_from_slice(&mean);
    params.get_mut(bn.var).data_mut().copy_from_slice(&var);
}

impl<T: Real> Model<T> {
    /// Fresh weights drawn from `seed`. Training uses other streams of the
    /// same seed, so initialisation and shuffling never share draws.
    pub fn seeded(config: NetworkConfig, variant: AblationVariant, options: ModelOptions, seed: u64) -> Result<Self> {
        Self::new(config, variant, options, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn new<R: Rng + ?Sized>(
        config: NetworkConfig,
        variant: AblationVariant,
        options: ModelOptions,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let mut layers = Vec::with_capacity(config.layers.len());
        let mut in_features = 0;
        for (l, lc) in config.layers.iter().enumerate() {
            let layer =
                EncoderLayer::register(&mut params, l, lc, variant, in_features, options.encoder_batch_norm, rng);
            in_features = layer.out_channels();
            layers.push(layer);
        }
        let head = match &config.head {
            HeadConfig::Classification {
                classes,
                fc,
                dropout,
                batch_norm,
            } => {
                let mut f_in = in_features;
                let hidden = fc
                    .iter()
                    .enumerate()
                    .map(|(i, &w)| {
                        let s = DenseSlots::register(&mut params, &format!("fc{i}"), f_in, w, *batch_norm, rng);
                        f_in = w;
                        s
                    })
                    .collect();
                let out = DenseSlots::register(&mut params, "logits", f_in, *classes, false, rng);
                HeadSlots::Classification {
                    hidden,
                    out,
                    dropout: *dropout,
                }
            }
            HeadConfig::Segmentation { parts, width } => {
                let concat: usize = layers.iter().map(|l| l.out_channels()).sum();
                let hidden = DenseSlots::register(&mut params, "seg.hidden", concat, *width, true, rng);
                let out = DenseSlots::register(&mut params, "seg.logits", *width, *parts, false, rng);
                HeadSlots::Segmentation { hidden, out }
            }
        };
        Ok(Model {
            config,
            variant,
            options,
            params,
            layers,
            head,
        })
    }

    pub fn layers(&self) -> &[EncoderLayer] {
        &self.layers
    }

    pub fn outputs(&self) -> usize {
        self.config.head.outputs()
    }

    pub fn is_segmentation(&self) -> bool {
        self.config.head.is_segmentation()
    }

    /// Same model with parameters converted to another scalar type.
    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            variant: self.variant,
            options: self.options,
            params: self.params.cast(),
            layers: self.layers.clone(),
            head: self.head.clone(),
        }
    }

    /// Sampling, ring search and ordering for one cloud.
    pub fn plan<R: Rng + ?Sized>(&self, cloud: &PointCloud, opts: PlanOptions, rng: &mut R) -> Result<SamplePlan> {
        if cloud.normals.is_none() {
            return Err(Error::NormalsRequired);
        }
        let mut levels = vec![cloud.clone()];
        let mut groups = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let seed = if l == 0 { opts.fps_seed } else { 0 };
            let level = &levels[l];
            let g = group_layer(level, &layer.config, self.variant, seed, opts.start, rng)?;
            let centroids: Vec<usize> = g.iter().map(|n| n.centroid).collect();
            let next = level.select(&centroids);
            groups.push(g);
            levels.push(next);
        }
        let interp = if self.is_segmentation() {
            levels[1..]
                .iter()
                .map(|lv| InterpTable::build(&lv.points, &cloud.points))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        Ok(SamplePlan { levels, groups, interp })
    }

    /// Plans for a batch. Each sample gets its own RNG seeded from `rng`, so
    /// the result does not depend on how the work is scheduled.
    pub fn plan_batch<R: Rng + ?Sized>(
        &self,
        clouds: &[&PointCloud],
        opts: PlanOptions,
        rng: &mut R,
    ) -> Result<Vec<SamplePlan>> {
        let seeds: Vec<u64> = clouds.iter().map(|_| rng.next_u64()).collect();
        par::map_range(clouds.len(), |i| {
            let mut r = ChaCha8Rng::seed_from_u64(seeds[i]);
            self.plan(clouds[i], opts, &mut r)
        })
        .into_iter()
        .collect()
    }

    fn layer_input<'a>(&self, plans: &'a [SamplePlan], l: usize, feats: Option<&'a Tensor<T>>) -> LayerInput<'a, T> {
        let mut offsets = Vec::with_capacity(plans.len());
        let mut acc = 0;
        for p in plans {
            offsets.push(acc);
            acc += p.levels[l].len();
        }
        LayerInput {
            groups: plans.iter().map(|p| p.groups[l].as_slice()).collect(),
            positions: plans.iter().map(|p| p.levels[l].points.as_slice()).collect(),
            features: feats.map(|t| t.data()),
            offsets,
        }
    }

    /// Logits for a batch: `samples × classes` for classification,
    /// `(Σ points) × parts` for segmentation. `rng` drives dropout.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        plans: &[SamplePlan],
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Tensor<T>, Tape<T>)> {
        if plans.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let mut layer_tapes = Vec::with_capacity(self.layers.len());
        let mut level_feats: Vec<Tensor<T>> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let input = self.layer_input(plans, l, level_feats.last());
            let (out, tape) = layer.forward(&self.params, &input, mode)?;
            layer_tapes.push(tape);
            level_feats.push(out);
        }

        let batch = plans.len();
        let (logits, head) = match &self.head {
            HeadSlots::Classification { hidden, out, dropout } => {
                let last = level_feats.last().unwrap();
                let c_last = self.config.layers.last().unwrap().centroids;
                let f = last.cols();
                let (mut x, pool_argmax) = if c_last > 1 {
                    let (v, a) = ring_max_pool_rings(last.data(), c_last, f)?;
                    (Tensor::matrix(batch, f, v)?, Some(a))
                } else {
                    (last.clone(), None)
                };
                let mut tapes = Vec::with_capacity(hidden.len());
                for slots in hidden {
                    let (y, t) = dense_block(&self.params, slots, x, *dropout, mode, rng)?;
                    tapes.push(t);
                    x = y;
                }
                let logits = dense_forward(&x, self.params.get(out.weight), self.params.get(out.bias))?;
                (
                    logits,
                    HeadTape::Classification {
                        pool_argmax,
                        hidden: tapes,
                        out_input: x,
                    },
                )
            }
            HeadSlots::Segmentation { hidden, out } => {
                let x = self.propagate(plans, &level_feats)?;
                let (h, t) = dense_block(&self.params, hidden, x, 0.0, mode, rng)?;
                let logits = dense_forward(&h, self.params.get(out.weight), self.params.get(out.bias))?;
                (
                    logits,
                    HeadTape::Segmentation {
                        hidden: t,
                        out_input: h,
                    },
                )
            }
        };
        Ok((
            logits,
            Tape {
                mode,
                layers: layer_tapes,
                level_feats,
                head,
            },
        ))
    }

    /// Interpolate every level's features to the input points and concatenate.
    fn propagate(&self, plans: &[SamplePlan], level_feats: &[Tensor<T>]) -> Result<Tensor<T>> {
        let widths: Vec<usize> = level_feats.iter().map(|t| t.cols()).collect();
        let total: usize = widths.iter().sum();
        let blocks: Vec<Vec<T>> = par::map_range(plans.len(), |b| {
            let plan = &plans[b];
            let n = plan.points();
            let mut block = vec![T::zero(); n * total];
            let mut col = 0;
            for (l, feats) in level_feats.iter().enumerate() {
                let c = self.config.layers[l].centroids;
                let f = widths[l];
                let src = &feats.data()[b * c * f..(b + 1) * c * f];
                let up = plan.interp[l].apply(src, f);
                for (row, vals) in up.chunks(f).enumerate() {
                    block[row * total + col..row * total + col + f].copy_from_slice(vals);
                }
                col += f;
            }
            block
        });
        let rows: usize = plans.iter().map(|p| p.points()).sum();
        Tensor::matrix(rows, total, blocks.concat())
    }

    pub fn loss(&self, logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
        softmax_cross_entropy_batch(logits, labels)
    }

    pub fn backward(
        &self,
        plans: &[SamplePlan],
        tape: &Tape<T>,
        d_logits: &Tensor<T>,
        want_positions: bool,
    ) -> Result<Grads<T>> {
        let mut grads = self.params.zeros_like();
        let batch = plans.len();
        let n_layers = self.layers.len();
        let mut g_levels: Vec<Option<Tensor<T>>> = vec![None; n_layers];

        match (&self.head, &tape.head) {
            (
                HeadSlots::Classification { hidden, out, .. },
                HeadTape::Classification {
                    pool_argmax,
                    hidden: tapes,
                    out_input,
                },
            ) => {
                let mut g = linear_backward(&self.params, out, out_input, d_logits, &mut grads)?;
                for (slots, t) in hidden.iter().zip(tapes).rev() {
                    g = dense_block_backward(&self.params, slots, t, &g, &mut grads)?;
                }
                let g_last = match pool_argmax {
                    Some(a) => {
                        let c_last = self.config.layers.last().unwrap().centroids;
                        let f = g.cols();
                        Tensor::matrix(batch * c_last, f, ring_max_pool_backward_rings(a, c_last, f, g.data()))?
                    }
                    None => g,
                };
                g_levels[n_layers - 1] = Some(g_last);
            }
            (HeadSlots::Segmentation { hidden, out }, HeadTape::Segmentation { hidden: t, out_input }) => {
                let g = linear_backward(&self.params, out, out_input, d_logits, &mut grads)?;
                let g = dense_block_backward(&self.params, hidden, t, &g, &mut grads)?;
                let total = g.cols();
                let mut row0 = 0;
                let mut col = 0;
                let starts: Vec<usize> = plans
                    .iter()
                    .map(|p| {
                        let s = row0;
                        row0 += p.points();
                        s
                    })
                    .collect();
                for l in 0..n_layers {
                    let c = self.config.layers[l].centroids;
                    let f = tape.level_feats[l].cols();
                    let per_sample: Vec<Vec<T>> = par::map_range(batch, |b| {
                        let n = plans[b].points();
                        let mut gq = vec![T::zero(); n * f];
                        for r in 0..n {
                            let src = &g.data()[(starts[b] + r) * total + col..(starts[b] + r) * total + col + f];
                            gq[r * f..(r + 1) * f].copy_from_slice(src);
                        }
                        plans[b].interp[l].apply_backward(&gq, f)
                    });
                    g_levels[l] = Some(Tensor::matrix(batch * c, f, per_sample.concat())?);
                    col += f;
                }
            }
            _ => return Err(Error::invalid("tape does not match the model head")),
        }

        let mut carried: Option<Vec<Vec<[T; 3]>>> = None;
        for l in (0..n_layers).rev() {
            let g_out = g_levels[l]
                .take()
                .ok_or_else(|| Error::invalid("missing gradient for encoder output"))?;
            let feats = (l > 0).then(|| &tape.level_feats[l - 1]);
            let input = self.layer_input(plans, l, feats);
            let (g_feat, g_pos) =
                self.layers[l].backward(&self.params, &input, &tape.layers[l], &g_out, &mut grads, want_positions)?;
            if l > 0 {
                let g_feat = g_feat.expect("features present above the first layer");
                let shape = tape.level_feats[l - 1].shape().to_vec();
                let g_feat = Tensor::new(shape, g_feat)?;
                g_levels[l - 1] = Some(match g_levels[l - 1].take() {
                    Some(mut prev) => {
                        prev.add_assign(&g_feat);
                        prev
                    }
                    None => g_feat,
                });
            }
            if let Some(mut gp) = g_pos {
                if let Some(next) = carried.take() {
                    for (b, next_b) in next.into_iter().enumerate() {
                        for (ci, g) in next_b.into_iter().enumerate() {
                            let idx = plans[b].groups[l][ci].centroid;
                            for d in 0..3 {
                                gp[b][idx][d] += g[d];
                            }
                        }
                    }
                }
                carried = Some(gp);
            }
        }

        Ok(Grads {
            params: grads,
            positions: carried,
        })
    }

    /// Fold the batch statistics recorded in a training-mode tape into the
    /// running batch-norm statistics.
    pub fn apply_batch_stats(&mut self, tape: &Tape<T>) {
        if tape.mode != Mode::Train {
            return;
        }
        for (layer, lt) in self.layers.iter().zip(&tape.layers) {
            for (r, i, cache) in lt.bn_caches() {
                if let Some(bn) = &layer.rings[r][i].bn {
                    update_bn(&mut self.params, bn, cache);
                }
            }
        }
        match (&self.head, &tape.head) {
            (HeadSlots::Classification { hidden, .. }, HeadTape::Classification { hidden: tapes, .. }) => {
                for (s, t) in hidden.iter().zip(tapes) {
                    if let (Some(bn), Some(c)) = (&s.bn, &t.bn) {
                        update_bn(&mut self.params, bn, c);
                    }
                }
            }
            (HeadSlots::Segmentation { hidden, .. }, HeadTape::Segmentation { hidden: t, .. }) => {
                if let (Some(bn), Some(c)) = (&hidden.bn, &t.bn) {
                    update_bn(&mut self.params, bn, c);
                }
            }
            _ => {}
        }
    }

    fn meta_text(&self) -> String {
        format!(
            "variant={}\nencoder_bn={}\n",
            self.variant,
            u8::from(self.options.encoder_batch_norm)
        )
    }

    pub fn to_checkpoint(&self, adam: Option<&Adam<T>>) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.push_bytes("meta.config", self.config.to_text());
        ck.push_bytes("meta.model", self.meta_text());
        ck.push_params("param.", &self.params);
        if let Some(adam) = adam {
            ck.push_tensor("adam.step", &Tensor::<f32>::vector(vec![adam.step as f32]).unwrap());
            for (i, name) in self.params.names().iter().enumerate() {
                ck.push_tensor(format!("adam.m.{name}"), &adam.m[i]);
                ck.push_tensor(format!("adam.v.{name}"), &adam.v[i]);
            }
        }
        ck
    }

    /// Rebuild a model (and optimiser state, if stored) from a checkpoint.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, Option<Adam<T>>)> {
        let config = NetworkConfig::parse(&ck.text("meta.config")?, std::path::Path::new("<checkpoint>"))?;
        let mut variant = AblationVariant::Full;
        let mut options = ModelOptions::default();
        for line in ck.text("meta.model")?.lines() {
            match line.split_once('=') {
                Some(("variant", v)) => variant = v.parse()?,
                Some(("encoder_bn", v)) => options.encoder_batch_norm = v == "1",
                _ if line.trim().is_empty() => {}
                _ => return Err(Error::Corrupt(format!("unknown model metadata line {line}"))),
            }
        }
        let mut model = Model::new(config, variant, options, &mut ChaCha8Rng::seed_from_u64(0))?;
        ck.load_params("param.", &mut model.params)?;
        let adam = match ck.get("adam.step") {
            Some(_) => {
                let step = ck.tensor::<f64>("adam.step")?.data()[0] as u64;
                let mut adam = Adam::new(AdamConfig::default(), &model.params);
                adam.step = step;
                for (i, name) in model.params.names().iter().enumerate() {
                    adam.m[i] = ck.tensor(&format!("adam.m.{name}"))?;
                    adam.v[i] = ck.tensor(&format!("adam.v.{name}"))?;
                }
                Some(adam)
            }
            None => None,
        };
        Ok((model, adam))
    }
}
