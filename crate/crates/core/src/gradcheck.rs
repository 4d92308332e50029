//! Central finite-difference checks of every backward pass, in `f64`.
//!
//! Each check draws random inputs and parameters, reduces the output to a
//! scalar with random weights (or the cross-entropy loss for whole
//! networks), and compares the analytic gradient with
//! `(L(x + h) − L(x − h)) / 2h` coordinate by coordinate. Points where a
//! perturbation flips a ReLU or changes a pooling winner are not generic and
//! are redrawn.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;
use std::ops::Range;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::annular::{
    annular_conv_backward_rings, annular_conv_forward_rings, ring_max_pool_backward_rings, ring_max_pool_rings,
    ConvKernel,
};
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vec3};
use crate::network::encoder::{hash_signs, EncoderLayer, LayerInput};
use crate::network::{group_layer, AblationVariant, InterpTable, Model, ModelOptions, NetworkConfig, PlanOptions, SamplePlan, StartRule};
use crate::numeric::{
    batch_norm_backward, batch_norm_forward, dense_backward, dense_forward, dropout_backward, dropout_forward,
    relu_backward, relu_forward, softmax_cross_entropy_batch, Mode, ParamSet, Tensor,
};
use crate::par;

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_POINTS: usize = 20;
/// Denominator floor for blocks whose true gradient vanishes (a bias feeding
/// batch norm, say), where the ratio would only measure rounding noise.
pub const NORM_FLOOR: f64 = 1e-6;
/// Coordinates probed per parameter block in the whole-network checks.
const NETWORK_COORDS: usize = 12;
const MAX_REDRAWS: usize = 50;

/// Worst relative error of one gradient block over all accepted points.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub points: usize,
    /// Non-generic draws that were replaced.
    pub rejected: usize,
    pub coords: usize,
    pub max_rel_error: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < REL_TOLERANCE
    }
}

/// `‖a − n‖ / max(‖a‖ + ‖n‖, NORM_FLOOR)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n) * (a - n)).sum::<f64>().sqrt();
    diff / (norm(analytic) + norm(numeric)).max(NORM_FLOOR)
}

type Eval = Box<dyn Fn(&[f64]) -> Result<(f64, u64)> + Send + Sync>;

struct Instance {
    x0: Vec<f64>,
    blocks: Vec<(String, Range<usize>)>,
    analytic: Vec<f64>,
    /// Coordinates to probe, per block; `None` probes all of them.
    coords: Option<Vec<Vec<usize>>>,
    eval: Eval,
}

fn run_check<F>(prefix: &str, points: usize, rng: &mut ChaCha8Rng, mut make: F) -> Result<Vec<CheckReport>>
where
    F: FnMut(&mut ChaCha8Rng) -> Result<Instance>,
{
    let mut reports: Vec<CheckReport> = Vec::new();
    let mut accepted = 0;
    let mut rejected = 0;
    while accepted < points {
        if rejected > MAX_REDRAWS * points {
            return Err(Error::invalid(format!("{prefix}: could not find generic points")));
        }
        let inst = make(rng)?;
        let probes: Vec<Vec<usize>> = match &inst.coords {
            Some(c) => c.clone(),
            None => inst.blocks.iter().map(|(_, r)| r.clone().collect()).collect(),
        };
        let (_, base) = (inst.eval)(&inst.x0)?;
        let flat: Vec<usize> = probes.iter().flatten().copied().collect();
        let diffs: Vec<Result<Option<f64>>> = par::map_slice(&flat, |&i| {
            let mut x = inst.x0.clone();
            x[i] = inst.x0[i] + FD_STEP;
            let (lp, sp) = (inst.eval)(&x)?;
            x[i] = inst.x0[i] - FD_STEP;
            let (lm, sm) = (inst.eval)(&x)?;
            Ok((sp == base && sm == base).then(|| (lp - lm) / (2.0 * FD_STEP)))
        });
        let mut numeric = Vec::with_capacity(flat.len());
        let mut generic = true;
        for d in diffs {
            match d? {
                Some(v) => numeric.push(v),
                None => generic = false,
            }
        }
        if !generic {
            rejected += 1;
            continue;
        }
        accepted += 1;
        let mut offset = 0;
        for ((name, _), idx) in inst.blocks.iter().zip(&probes) {
            let a: Vec<f64> = idx.iter().map(|&i| inst.analytic[i]).collect();
            let n = &numeric[offset..offset + idx.len()];
            offset += idx.len();
            let err = relative_error(&a, n);
            let full = format!("{prefix}.{name}");
            match reports.iter_mut().find(|r| r.name == full) {
                Some(r) => {
                    r.max_rel_error = r.max_rel_error.max(err);
                    r.coords += idx.len();
                }
                None => reports.push(CheckReport {
                    name: full,
                    points: 0,
                    rejected: 0,
                    coords: idx.len(),
                    max_rel_error: err,
                }),
            }
        }
    }
    for r in &mut reports {
        r.points = accepted;
        r.rejected = rejected;
    }
    Ok(reports)
}

fn uniform(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Consecutive named blocks of the given lengths.
fn blocks(spec: &[(&str, usize)]) -> Vec<(String, Range<usize>)> {
    let mut start = 0;
    spec.iter()
        .map(|&(n, len)| {
            let r = start..start + len;
            start += len;
            (n.to_string(), r)
        })
        .collect()
}

fn dense(rng: &mut ChaCha8Rng) -> Result<Instance> {
    let (n, i, o) = (4, 5, 3);
    let x0 = uniform(n * i + i * o + o, -1.0, 1.0, rng);
    let r = Tensor::matrix(n, o, uniform(n * o, -1.0, 1.0, rng))?;
    let split = move |v: &[f64]| -> Result<(Tensor<f64>, Tensor<f64>, Tensor<f64>)> {
        Ok((
            Tensor::matrix(n, i, v[..n * i].to_vec())?,
            Tensor::matrix(i, o, v[n * i..n * i + i * o].to_vec())?,
            Tensor::vector(v[n * i + i * o..].to_vec())?,
        ))
    };
    let (x, w, _) = split(&x0)?;
    let g = dense_backward(&x, &w, &r)?;
    let analytic = [g.input.data(), g.weights.data(), g.bias.data()].concat();
    Ok(Instance {
        x0,
        blocks: blocks(&[("input", n * i), ("weights", i * o), ("bias", o)]),
        analytic,
        coords: None,
        eval: Box::new(move |v| {
            let (x, w, b) = split(v)?;
            Ok((dot(dense_forward(&x, &w, &b)?.data(), r.data()), 0))
        }),
    })
}

fn batch_norm(mode: Mode) -> impl FnMut(&mut ChaCha8Rng) -> Result<Instance> {
    move |rng| {
        let (n, c) = (8, 3);
        let mut x0 = uniform(n * c, -1.0, 1.0, rng);
        x0.extend(uniform(c, 0.5, 1.5, rng));
        x0.extend(uniform(c, -0.5, 0.5, rng));
        let rm = uniform(c, -0.3, 0.3, rng);
        let rv = uniform(c, 0.5, 2.0, rng);
        let r = Tensor::matrix(n, c, uniform(n * c, -1.0, 1.0, rng))?;
        let fwd = move |v: &[f64]| {
            let x = Tensor::matrix(n, c, v[..n * c].to_vec())?;
            batch_norm_forward(&x, &v[n * c..n * c + c], &v[n * c + c..], &rm, &rv, mode)
        };
        let (_, cache) = fwd(&x0)?;
        let (gx, gg, gb) = batch_norm_backward(&cache, &x0[n * c..n * c + c], &r)?;
        let analytic = [gx.data(), &gg[..], &gb[..]].concat();
        Ok(Instance {
            x0,
            blocks: blocks(&[("input", n * c), ("gamma", c), ("beta", c)]),
            analytic,
            coords: None,
            eval: Box::new(move |v| Ok((dot(fwd(v)?.0.data(), r.data()), 0))),
        })
    }
}

fn relu(rng: &mut ChaCha8Rng) -> Result<Instance> {
    let (n, c) = (6, 4);
    let x0 = uniform(n * c, -1.0, 1.0, rng);
    let r = Tensor::matrix(n, c, uniform(n * c, -1.0, 1.0, rng))?;
    let g = relu_backward(&Tensor::matrix(n, c, x0.clone())?, &r)?;
    Ok(Instance {
        analytic: g.into_data(),
        x0,
        blocks: blocks(&[("input", n * c)]),
        coords: None,
        eval: Box::new(move |v| {
            let x = Tensor::matrix(n, c, v.to_vec())?;
            let mut h = DefaultHasher::new();
            hash_signs(x.data(), &mut h);
            Ok((dot(relu_forward(&x).data(), r.data()), h.finish()))
        }),
    })
}

fn dropout(rng: &mut ChaCha8Rng) -> Result<Instance> {
    let (n, c) = (6, 4);
    let x0 = uniform(n * c, -1.0, 1.0, rng);
    let r = Tensor::matrix(n, c, uniform(n * c, -1.0, 1.0, rng))?;
    let seed = rng.random::<u64>();
    let fwd = move |v: &[f64]| {
        let x = Tensor::matrix(n, c, v.to_vec())?;
        dropout_forward(&x, 0.4, &mut ChaCha8Rng::seed_from_u64(seed), Mode::Train)
    };
    let (_, mask) = fwd(&x0)?;
    Ok(Instance {
        analytic: dropout_backward(&mask, &r)?.into_data(),
        x0,
        blocks: blocks(&[("input", n * c)]),
        coords: None,
        eval: Box::new(move |v| Ok((dot(fwd(v)?.0.data(), r.data()), 0))),
    })
}

fn cross_entropy(rng: &mut ChaCha8Rng) -> Result<Instance> {
    let (n, c) = (4, 5);
    let x0 = uniform(n * c, -2.0, 2.0, rng);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    let (_, g) = softmax_cross_entropy_batch(&Tensor::matrix(n, c, x0.clone())?, &labels)?;
    Ok(Instance {
        analytic: g.into_data(),
        x0,
        blocks: blocks(&[("logits", n * c)]),
        coords: None,
        eval: Box::new(move |v| {
            let (l, _) = softmax_cross_entropy_batch(&Tensor::matrix(n, c, v.to_vec())?, &labels)?;
            Ok((l, 0))
        }),
    })
}

fn annular_conv(k_size: usize) -> impl FnMut(&mut ChaCha8Rng) -> Result<Instance> {
    move |rng| {
        let (rings, len, f_in, f_out) = (3, 5, 3, 4);
        let nx = rings * len * f_in;
        let nw = k_size * f_in * f_out;
        let x0 = uniform(nx + nw + f_out, -1.0, 1.0, rng);
        let r = uniform(rings * len * f_out, -1.0, 1.0, rng);
        let kernel = move |v: &[f64]| {
            ConvKernel::new(k_size, f_in, f_out, v[nx..nx + nw].to_vec(), v[nx + nw..].to_vec())
        };
        let g = annular_conv_backward_rings(&x0[..nx], len, &kernel(&x0)?, &r, true)?;
        Ok(Instance {
            analytic: [g.input, g.weights, g.bias].concat(),
            blocks: blocks(&[("input", nx), ("weights", nw), ("bias", f_out)]),
            coords: None,
            eval: Box::new(move |v| {
                let y = annular_conv_forward_rings(&v[..nx], len, &kernel(v)?)?;
                Ok((dot(&y, &r), 0))
            }),
            x0,
        })
    }
}

fn ring_pool(rng: &mut ChaCha8Rng) -> Result<Instance> {
    let (rings, len, f) = (3, 6, 4);
    let x0 = uniform(rings * len * f, -1.0, 1.0, rng);
    let r = uniform(rings * f, -1.0, 1.0, rng);
    let (_, argmax) = ring_max_pool_rings(&x0, len, f)?;
    Ok(Instance {
        analytic: ring_max_pool_backward_rings(&argmax, len, f, &r),
        blocks: blocks(&[("input", x0.len())]),
        x0,
        coords: None,
        eval: Box::new(move |v| {
            let (y, a) = ring_max_pool_rings(v, len, f)?;
            let mut h = DefaultHasher::new();
            a.iter().for_each(|&i| h.write_u32(i));
            Ok((dot(&y, &r), h.finish()))
        }),
    })
}

fn random_points(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    (0..n)
        .map(|_| Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)))
        .collect()
}

fn random_cloud(n: usize, rng: &mut ChaCha8Rng) -> Result<PointCloud> {
    let pts = random_points(n, rng);
    let normals = random_points(n, rng).into_iter().map(|v| v.normalize()).collect();
    PointCloud::new(pts)?.with_normals(normals)
}

fn interpolation(rng: &mut ChaCha8Rng) -> Result<Instance> {
    let (known, queries, f) = (8, 10, 3);
    let kp = random_points(known, rng);
    let mut qp = random_points(queries, rng);
    qp[0] = kp[3];
    let table = InterpTable::build(&kp, &qp)?;
    let x0 = uniform(known * f, -1.0, 1.0, rng);
    let r = uniform(queries * f, -1.0, 1.0, rng);
    Ok(Instance {
        analytic: table.apply_backward(&r, f),
        blocks: blocks(&[("features", known * f)]),
        x0,
        coords: None,
        eval: Box::new(move |v| Ok((dot(&table.apply(v, f), &r), 0))),
    })
}

/// Trainable parameters laid out back to back, grouped by layer name.
struct ParamLayout {
    slots: Vec<(usize, Range<usize>)>,
    groups: Vec<(String, Range<usize>)>,
}

fn layer_name(param: &str) -> String {
    let base = param.split(".bn.").next().unwrap();
    base.trim_end_matches(".weight").trim_end_matches(".bias").to_string()
}

impl ParamLayout {
    fn new(params: &ParamSet<f64>) -> Self {
        let mut slots = Vec::new();
        let mut groups: Vec<(String, Range<usize>)> = Vec::new();
        let mut at = 0;
        for id in 0..params.len() {
            if !params.is_trainable(id) {
                continue;
            }
            let len = params.get(id).len();
            slots.push((id, at..at + len));
            let name = layer_name(params.name(id));
            match groups.last_mut() {
                Some((g, r)) if *g == name => r.end = at + len,
                _ => groups.push((name, at..at + len)),
            }
            at += len;
        }
        ParamLayout { slots, groups }
    }

    fn len(&self) -> usize {
        self.slots.last().map_or(0, |(_, r)| r.end)
    }

    fn gather(&self, tensors: &[Tensor<f64>]) -> Vec<f64> {
        self.slots.iter().flat_map(|(id, _)| tensors[*id].data().to_vec()).collect()
    }

    fn scatter(&self, v: &[f64], params: &mut ParamSet<f64>) {
        for (id, r) in &self.slots {
            params.get_mut(*id).data_mut().copy_from_slice(&v[r.clone()]);
        }
    }
}

/// Random batch-norm scales and shifts so normalised activations are not
/// all centred on the ReLU kink.
fn randomize_bn(params: &mut ParamSet<f64>, rng: &mut ChaCha8Rng) {
    for id in 0..params.len() {
        let name = params.name(id).to_string();
        let (lo, hi) = if name.ends_with(".gamma") {
            (0.5, 1.5)
        } else if name.ends_with(".beta") {
            (-0.5, 0.5)
        } else {
            continue;
        };
        for v in params.get_mut(id).data_mut() {
            *v = rng.random_range(lo..hi);
        }
    }
}

fn probe_subset(groups: &[(String, Range<usize>)], per_block: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    groups
        .iter()
        .map(|(_, r)| {
            let n = r.len().min(per_block);
            let mut idx: Vec<usize> = sample(rng, r.len(), n).into_iter().map(|i| r.start + i).collect();
            idx.sort_unstable();
            idx
        })
        .collect()
}

fn encoder(rng: &mut ChaCha8Rng) -> Result<Instance> {
    let cfg = NetworkConfig::parse(
        "layer centroids=8 rings=0:0.3:4,0.3:0.6:5 features=4,5|3\nhead class c=2 fc=4\n",
        Path::new("<gradcheck>"),
    )?
    .layers
    .remove(0);
    let n = 40;
    let f = 2;
    let cloud = random_cloud(n, rng)?;
    let mut params = ParamSet::new();
    let layer = EncoderLayer::register(&mut params, 0, &cfg, AblationVariant::Full, f, true, rng);
    randomize_bn(&mut params, rng);
    let groups = group_layer(&cloud, &cfg, AblationVariant::Full, 0, StartRule::Closest, rng)?;
    let layout = ParamLayout::new(&params);
    let np = layout.len();
    let feats = uniform(n * f, -1.0, 1.0, rng);
    let r = Tensor::matrix(cfg.centroids, layer.out_channels(), uniform(cfg.centroids * layer.out_channels(), -1.0, 1.0, rng))?;

    let mut x0 = layout.gather(params.tensors());
    x0.extend(&feats);
    x0.extend(cloud.points.iter().flat_map(|p| [p.x, p.y, p.z]));
    let mut all_blocks = layout.groups.clone();
    all_blocks.push(("features".into(), np..np + n * f));
    all_blocks.push(("positions".into(), np + n * f..np + n * f + 3 * n));

    let unpack = {
        let params = params.clone();
        move |v: &[f64]| {
            let mut p = params.clone();
            layout.scatter(v, &mut p);
            let pos: Vec<Vec3> = v[np + n * f..].chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
            (p, v[np..np + n * f].to_vec(), pos)
        }
    };
    let (p0, f0, pos0) = unpack(&x0);
    let input = LayerInput {
        groups: vec![&groups[..]],
        positions: vec![&pos0[..]],
        features: Some(&f0[..]),
        offsets: vec![0],
    };
    let (_, tape) = layer.forward(&p0, &input, Mode::Train)?;
    let mut grads = p0.zeros_like();
    let (gf, gp) = layer.backward(&p0, &input, &tape, &r, &mut grads, true)?;
    let relayout = ParamLayout::new(&p0);
    let mut analytic = relayout.gather(&grads);
    analytic.extend(gf.expect("features"));
    analytic.extend(gp.expect("positions")[0].iter().flatten());

    let coords = probe_subset(&all_blocks, NETWORK_COORDS * 2, rng);
    Ok(Instance {
        x0,
        blocks: all_blocks,
        analytic,
        coords: Some(coords),
        eval: Box::new(move |v| {
            let (p, fv, pos) = unpack(v);
            let input = LayerInput {
                groups: vec![&groups[..]],
                positions: vec![&pos[..]],
                features: Some(&fv[..]),
                offsets: vec![0],
            };
            let (out, tape) = layer.forward(&p, &input, Mode::Train)?;
            let mut h = DefaultHasher::new();
            tape.pattern(&mut h);
            Ok((dot(out.data(), r.data()), h.finish()))
        }),
    })
}

/// Copy moved input coordinates into the centroid levels they feed.
fn refresh_levels(plan: &mut SamplePlan) {
    for l in 0..plan.groups.len() {
        let pts: Vec<Vec3> = plan.groups[l].iter().map(|g| plan.levels[l].points[g.centroid]).collect();
        plan.levels[l + 1].points = pts;
    }
}

const NETWORK_ENCODER: &str = "\
layer centroids=10 rings=0:0.35:4,0.35:0.7:4 features=4,6|5
layer centroids=1 rings=0:10:8 features=8,6 kernel=1
";

fn network(segmentation: bool) -> impl FnMut(&mut ChaCha8Rng) -> Result<Instance> {
    move |rng| {
        let head = if segmentation {
            "head segment m=3 width=6\n"
        } else {
            "head class c=3 fc=7 dropout=0.3\n"
        };
        let cfg = NetworkConfig::parse(&format!("{NETWORK_ENCODER}{head}"), Path::new("<gradcheck>"))?;
        let mut model = Model::<f64>::new(cfg, AblationVariant::Full, ModelOptions::default(), rng)?;
        randomize_bn(&mut model.params, rng);
        let (batch, n) = (3, 32);
        let clouds: Vec<PointCloud> = (0..batch).map(|_| random_cloud(n, rng)).collect::<Result<_>>()?;
        let refs: Vec<&PointCloud> = clouds.iter().collect();
        let plans = model.plan_batch(&refs, PlanOptions::default(), rng)?;
        let labels: Vec<usize> = if segmentation {
            (0..batch * n).map(|_| rng.random_range(0..3)).collect()
        } else {
            (0..batch).map(|_| rng.random_range(0..3)).collect()
        };
        let dropout_seed = rng.random::<u64>();

        let layout = ParamLayout::new(&model.params);
        let np = layout.len();
        let mut x0 = layout.gather(model.params.tensors());
        for p in &plans {
            x0.extend(p.levels[0].points.iter().flat_map(|q| [q.x, q.y, q.z]));
        }
        let mut all_blocks = layout.groups.clone();
        all_blocks.push(("positions".into(), np..x0.len()));

        let unpack = {
            let model = model.clone();
            let plans = plans.clone();
            move |v: &[f64]| {
                let mut m = model.clone();
                layout.scatter(v, &mut m.params);
                let mut ps = plans.clone();
                for (b, p) in ps.iter_mut().enumerate() {
                    let off = np + b * n * 3;
                    p.levels[0].points = v[off..off + n * 3].chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
                    refresh_levels(p);
                }
                (m, ps)
            }
        };
        let run = move |m: &Model<f64>, ps: &[SamplePlan]| {
            let (logits, tape) = m.forward(ps, Mode::Train, &mut ChaCha8Rng::seed_from_u64(dropout_seed))?;
            let (loss, grad) = m.loss(&logits, &labels)?;
            Ok::<_, Error>((loss, grad, tape))
        };

        let (m0, ps0) = unpack(&x0);
        let (_, grad, tape) = run(&m0, &ps0)?;
        let g = m0.backward(&ps0, &tape, &grad, true)?;
        let mut analytic = ParamLayout::new(&m0.params).gather(&g.params);
        for gp in g.positions.expect("positions") {
            analytic.extend(gp.iter().flatten());
        }
        let coords = probe_subset(&all_blocks, NETWORK_COORDS, rng);
        Ok(Instance {
            x0,
            blocks: all_blocks,
            analytic,
            coords: Some(coords),
            eval: Box::new(move |v| {
                let (m, ps) = unpack(v);
                let (loss, _, tape) = run(&m, &ps)?;
                Ok((loss, tape.pattern()))
            }),
        })
    }
}

/// Every check at `points` generic points each, seeded from `seed`.
pub fn run_suite(seed: u64, points: usize) -> Result<Vec<CheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    out.extend(run_check("dense", points, &mut rng, dense)?);
    out.extend(run_check("batch_norm_train", points, &mut rng, batch_norm(Mode::Train))?);
    out.extend(run_check("batch_norm_eval", points, &mut rng, batch_norm(Mode::Eval))?);
    out.extend(run_check("relu", points, &mut rng, relu)?);
    out.extend(run_check("dropout", points, &mut rng, dropout)?);
    out.extend(run_check("softmax_cross_entropy", points, &mut rng, cross_entropy)?);
    out.extend(run_check("annular_conv_k3", points, &mut rng, annular_conv(3))?);
    out.extend(run_check("annular_conv_k5", points, &mut rng, annular_conv(5))?);
    out.extend(run_check("ring_max_pool", points, &mut rng, ring_pool)?);
    out.extend(run_check("interpolation", points, &mut rng, interpolation)?);
    out.extend(run_check("encoder_layer", points, &mut rng, encoder)?);
    out.extend(run_check("classifier", points, &mut rng, network(false))?);
    out.extend(run_check("segmenter", points, &mut rng, network(true))?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_basics() {
        assert_eq!(relative_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((relative_error(&[1.0], &[-1.0]) - 1.0).abs() < 1e-15);
        assert_eq!(relative_error(&[0.0], &[0.0]), 0.0);
    }

    #[test]
    fn ops_pass_at_a_few_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for r in run_check("dense", 3, &mut rng, dense).unwrap() {
            assert!(r.passed(), "{r:?}");
        }
        for r in run_check("conv", 3, &mut rng, annular_conv(3)).unwrap() {
            assert!(r.passed(), "{r:?}");
        }
    }
}
