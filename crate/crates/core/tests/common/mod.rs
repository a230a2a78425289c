//! Oracles shared by the integration tests: central finite differences,
//! brute-force retrieval, and small synthetic fixtures.
#![allow(dead_code)]

use caevpr::data::FeatureMapSet;
use caevpr::model::{ArchSpec, Backbone, BlockGeometry};
use caevpr::ops::{self, BatchNormState, Kernel, LayerNormConfig, Stride};
use caevpr::{Dims4, MapDims, Param, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f32 = 1e-3;
pub const GRADIENT_SEEDS: u64 = 20;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, len: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..len).map(|_| rng.gen_range(lo..hi)).collect()
}

pub fn tensor(rng: &mut impl Rng, dims: Dims4) -> Tensor4 {
    Tensor4::from_vec(dims, uniform(rng, dims.len(), -1.0, 1.0)).unwrap()
}

pub fn param(rng: &mut impl Rng, name: &str, shape: Vec<usize>) -> Param {
    let len = shape.iter().product();
    Param::new(name, shape, uniform(rng, len, -1.0, 1.0)).unwrap()
}

/// Random projection weights for the scalar objective `Σ r_j · out_j`.
pub fn projection(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn project(out: &[f32], r: &[f64]) -> f64 {
    out.iter().zip(r).map(|(&o, &w)| o as f64 * w).sum()
}

pub fn as_grad(r: &[f64], dims: Dims4) -> Tensor4 {
    Tensor4::from_vec(dims, r.iter().map(|&v| v as f32).collect()).unwrap()
}

/// Worst absolute deviation and largest numeric magnitude seen while
/// probing; several tensors of one check pool into a single ratio so a
/// near-zero gradient (e.g. a bias feeding batch norm) does not turn f32
/// rounding noise into a huge relative error.
#[derive(Clone, Copy, Debug, Default)]
pub struct FdStats {
    pub max_diff: f64,
    pub max_numeric: f64,
}

impl FdStats {
    pub fn merge(self, o: FdStats) -> FdStats {
        FdStats {
            max_diff: self.max_diff.max(o.max_diff),
            max_numeric: self.max_numeric.max(o.max_numeric),
        }
    }

    pub fn relative(&self) -> f64 {
        self.max_diff / self.max_numeric.max(1e-12)
    }
}

/// Central differences against `analytic`. The divisor is the step actually
/// representable in `f32`, not the nominal one.
pub fn fd_stats(x: &[f32], analytic: &[f32], f: impl Fn(&[f32]) -> f64) -> FdStats {
    assert_eq!(x.len(), analytic.len());
    let mut st = FdStats::default();
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let plus = x[i] + FD_STEP;
        let minus = x[i] - FD_STEP;
        probe[i] = plus;
        let fp = f(&probe);
        probe[i] = minus;
        let fm = f(&probe);
        probe[i] = x[i];
        let numeric = (fp - fm) / (plus as f64 - minus as f64);
        st.max_diff = st.max_diff.max((analytic[i] as f64 - numeric).abs());
        st.max_numeric = st.max_numeric.max(numeric.abs());
    }
    st
}

pub fn fd_relative_error(x: &[f32], analytic: &[f32], f: impl Fn(&[f32]) -> f64) -> f64 {
    fd_stats(x, analytic, f).relative()
}

fn with_value(p: &Param, v: &[f32]) -> Param {
    let mut q = p.clone();
    q.value.copy_from_slice(v);
    q
}

/// Random conv/deconv geometry small enough for exhaustive probing.
pub struct ConvCase {
    pub n: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: Kernel,
    pub stride: Stride,
    pub h: usize,
    pub w: usize,
}

impl ConvCase {
    pub fn random(rng: &mut impl Rng) -> Self {
        let kernel = Kernel::new(rng.gen_range(1..=3), rng.gen_range(1..=3));
        Self {
            n: rng.gen_range(1..=2),
            c_in: rng.gen_range(1..=3),
            c_out: rng.gen_range(1..=3),
            stride: Stride::new(rng.gen_range(1..=2), rng.gen_range(1..=2)),
            h: kernel.h + rng.gen_range(0..=3),
            w: kernel.w + rng.gen_range(0..=3),
            kernel,
        }
    }
}

pub fn conv_check(case: &ConvCase, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let k = case.kernel;
    let x = tensor(&mut rng, Dims4::new(case.n, case.c_in, case.h, case.w));
    let wt = param(&mut rng, "w", vec![case.c_out, case.c_in, k.h, k.w]);
    let b = param(&mut rng, "b", vec![case.c_out]);
    let y = ops::conv2d_forward(&x, &wt, &b, case.stride).unwrap();
    let r = projection(&mut rng, y.len());
    let g = ops::conv2d_backward(&x, &wt, case.stride, &as_grad(&r, y.dims())).unwrap();
    let fwd = |x: &Tensor4, wt: &Param, b: &Param| {
        project(ops::conv2d_forward(x, wt, b, case.stride).unwrap().data(), &r)
    };
    let ex = fd_stats(x.data(), g.input.data(), |v| {
        fwd(&Tensor4::from_vec(x.dims(), v.to_vec()).unwrap(), &wt, &b)
    });
    let ew = fd_stats(&wt.value, &g.weight, |v| fwd(&x, &with_value(&wt, v), &b));
    let eb = fd_stats(&b.value, &g.bias, |v| fwd(&x, &wt, &with_value(&b, v)));
    ex.merge(ew).merge(eb).relative()
}

pub fn deconv_check(case: &ConvCase, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let k = case.kernel;
    let x = tensor(&mut rng, Dims4::new(case.n, case.c_in, case.h, case.w));
    let wt = param(&mut rng, "w", vec![case.c_in, case.c_out, k.h, k.w]);
    let b = param(&mut rng, "b", vec![case.c_out]);
    let y = ops::deconv2d_forward(&x, &wt, &b, case.stride).unwrap();
    let r = projection(&mut rng, y.len());
    let g = ops::deconv2d_backward(&x, &wt, case.stride, &as_grad(&r, y.dims())).unwrap();
    let fwd = |x: &Tensor4, wt: &Param, b: &Param| {
        project(ops::deconv2d_forward(x, wt, b, case.stride).unwrap().data(), &r)
    };
    let ex = fd_stats(x.data(), g.input.data(), |v| {
        fwd(&Tensor4::from_vec(x.dims(), v.to_vec()).unwrap(), &wt, &b)
    });
    let ew = fd_stats(&wt.value, &g.weight, |v| fwd(&x, &with_value(&wt, v), &b));
    let eb = fd_stats(&b.value, &g.bias, |v| fwd(&x, &wt, &with_value(&b, v)));
    ex.merge(ew).merge(eb).relative()
}

pub fn batchnorm_check(dims: Dims4, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let x = tensor(&mut rng, dims);
    let gamma = param(&mut rng, "gamma", vec![dims.c]);
    let beta = param(&mut rng, "beta", vec![dims.c]);
    let state = BatchNormState::new(dims.c);
    let fwd = |x: &Tensor4, gamma: &Param, beta: &Param, r: &[f64]| {
        let mut s = state.clone();
        project(ops::batchnorm_forward(x, gamma, beta, &mut s, true).unwrap().data(), r)
    };
    let r = projection(&mut rng, dims.len());
    let g = ops::batchnorm_backward(&x, &gamma, state.eps, &as_grad(&r, dims)).unwrap();
    let ex = fd_stats(x.data(), g.input.data(), |v| {
        fwd(&Tensor4::from_vec(dims, v.to_vec()).unwrap(), &gamma, &beta, &r)
    });
    let eg = fd_stats(&gamma.value, &g.gamma, |v| {
        fwd(&x, &with_value(&gamma, v), &beta, &r)
    });
    let eb = fd_stats(&beta.value, &g.beta, |v| fwd(&x, &gamma, &with_value(&beta, v), &r));
    ex.merge(eg).merge(eb).relative()
}

pub fn random_bn_dims(rng: &mut impl Rng) -> Dims4 {
    Dims4::new(
        rng.gen_range(1..=3),
        rng.gen_range(1..=3),
        rng.gen_range(2..=4),
        rng.gen_range(2..=4),
    )
}

/// PReLU is probed away from the kink: every input has magnitude ≥ 0.05.
pub fn prelu_check(dims: Dims4, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let data = (0..dims.len())
        .map(|_| {
            let m: f32 = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    let x = Tensor4::from_vec(dims, data).unwrap();
    let alpha = Param::new("alpha", vec![dims.c], uniform(&mut rng, dims.c, 0.0, 0.5)).unwrap();
    let r = projection(&mut rng, dims.len());
    let g = ops::prelu_backward(&x, &alpha, &as_grad(&r, dims)).unwrap();
    let fwd = |x: &Tensor4, a: &Param| project(ops::prelu_forward(x, a).unwrap().data(), &r);
    let ex = fd_stats(x.data(), g.input.data(), |v| {
        fwd(&Tensor4::from_vec(dims, v.to_vec()).unwrap(), &alpha)
    });
    let ea = fd_stats(&alpha.value, &g.alpha, |v| fwd(&x, &with_value(&alpha, v)));
    ex.merge(ea).relative()
}

pub fn layernorm_check(dims: Dims4, cfg: &LayerNormConfig, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let x = tensor(&mut rng, dims);
    let r = projection(&mut rng, dims.len());
    let g = ops::layernorm_backward(&x, cfg, &as_grad(&r, dims)).unwrap();
    fd_relative_error(x.data(), g.data(), |v| {
        let t = Tensor4::from_vec(dims, v.to_vec()).unwrap();
        project(ops::layernorm(&t, cfg).unwrap().data(), &r)
    })
}

pub fn mse_check(dims: Dims4, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let pred = tensor(&mut rng, dims);
    let target = tensor(&mut rng, dims);
    let (_, g) = ops::mse_loss(&pred, &target).unwrap();
    fd_relative_error(pred.data(), g.data(), |v| {
        let p = Tensor4::from_vec(dims, v.to_vec()).unwrap();
        ops::mse_loss(&p, &target).unwrap().0
    })
}

pub struct LayerResult {
    pub layer: &'static str,
    pub worst: f64,
    pub tolerance: f64,
    pub instances: u64,
}

impl LayerResult {
    pub fn passed(&self) -> bool {
        self.worst < self.tolerance
    }
}

/// Runs every layer's finite-difference check over `seeds` random instances.
pub fn gradient_suite(seeds: u64) -> Vec<LayerResult> {
    let mut conv = 0.0f64;
    let mut deconv = 0.0f64;
    let mut bn = 0.0f64;
    let mut prelu = 0.0f64;
    let mut ln = 0.0f64;
    let mut ln_frozen = 0.0f64;
    let mut mse = 0.0f64;
    for seed in 0..seeds {
        let mut shapes = rng(1000 + seed);
        conv = conv.max(conv_check(&ConvCase::random(&mut shapes), seed));
        deconv = deconv.max(deconv_check(&ConvCase::random(&mut shapes), seed));
        let d = random_bn_dims(&mut shapes);
        bn = bn.max(batchnorm_check(if d.n * d.h * d.w < 2 { d.with_batch(2) } else { d }, seed));
        prelu = prelu.max(prelu_check(random_bn_dims(&mut shapes), seed));
        ln = ln.max(layernorm_check(random_bn_dims(&mut shapes), &LayerNormConfig::default(), seed));
        let frozen = LayerNormConfig::frozen(shapes.gen_range(-0.5..0.5), shapes.gen_range(0.2..2.0));
        ln_frozen = ln_frozen.max(layernorm_check(random_bn_dims(&mut shapes), &frozen, seed));
        mse = mse.max(mse_check(random_bn_dims(&mut shapes), seed));
    }
    let row = |layer, worst, tolerance| LayerResult {
        layer,
        worst,
        tolerance,
        instances: seeds,
    };
    vec![
        row("conv2d", conv, 1e-3),
        row("deconv2d", deconv, 1e-3),
        row("batchnorm", bn, 1e-3),
        row("prelu", prelu, 1e-3),
        row("layernorm", ln, 1e-3),
        row("layernorm (frozen)", ln_frozen, 1e-3),
        row("mse", mse, 1e-4),
    ]
}

/// Reduced architecture used by the training tests: 32×14×20 input,
/// 14×20 → 12×18 → 5×8 → 2×4.
pub fn small_spec(d: usize, d3: usize) -> ArchSpec {
    ArchSpec::custom(
        MapDims::new(32, 14, 20),
        d,
        d,
        d3,
        ["3x3/1", "4x4/2", "3x2/2"].map(|b| b.parse::<BlockGeometry>().unwrap()),
    )
}

/// Feature-map-like synthetic data: per-channel oriented sinusoids with a
/// little noise, so samples have spatial structure rather than being white.
pub fn synthetic_maps(dims: MapDims, count: usize, seed: u64) -> FeatureMapSet {
    let mut rng = rng(seed);
    let mut set = FeatureMapSet::new(Backbone::Custom, dims);
    for i in 0..count {
        let mut v = vec![0.0f32; dims.len()];
        for plane in v.chunks_mut(dims.h * dims.w) {
            let amp: f32 = rng.gen_range(0.5..2.0);
            let fx: f32 = rng.gen_range(0.1..0.6);
            let fy: f32 = rng.gen_range(0.1..0.6);
            let phase: f32 = rng.gen_range(0.0..std::f32::consts::TAU);
            for y in 0..dims.h {
                for x in 0..dims.w {
                    let s = amp * (fx * x as f32 + fy * y as f32 + phase).sin();
                    plane[y * dims.w + x] = s + rng.gen_range(-0.2..0.2) - 0.3;
                }
            }
        }
        set.push(format!("syn{i:03}"), v).unwrap();
    }
    set
}

/// Random unit vectors.
pub fn unit_vectors(rng: &mut impl Rng, count: usize, dim: usize) -> Vec<Vec<f32>> {
    (0..count)
        .map(|_| {
            let v = uniform(rng, dim, -1.0, 1.0);
            ops::l2_normalize(&v).unwrap()
        })
        .collect()
}

/// Brute-force ranking: every reference scored in `f64`, full stable sort by
/// similarity descending, ties by reference index.
pub fn brute_force_ranking(query: &[f32], refs: &[Vec<f32>]) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> = refs
        .iter()
        .enumerate()
        .map(|(j, r)| {
            let s: f64 = query.iter().zip(r).map(|(&a, &b)| a as f64 * b as f64).sum();
            (j, s)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored
}

/// Ten queries with hand-enumerated outcomes. Query `qi` has the single
/// valid reference `ti` (q8 has none); its ranked list holds ten entries
/// with similarities stepping down by 0.01 from the top-1 value.
///
/// | query | top-1 sim | rank of `ti` |
/// |-------|-----------|--------------|
/// | q0    | 0.95      | 1            |
/// | q1    | 0.90      | 1            |
/// | q2    | 0.85      | 2            |
/// | q3    | 0.80      | 1            |
/// | q4    | 0.75      | 5            |
/// | q5    | 0.70      | 7            |
/// | q6    | 0.65      | —            |
/// | q7    | 0.60      | 1            |
/// | q8    | 0.55      | (no truth)   |
/// | q9    | 0.50      | 3            |
pub fn hand_fixture() -> (Vec<caevpr::eval::MatchResult>, caevpr::data::GroundTruth) {
    use caevpr::data::{GroundTruth, Protocol};
    use caevpr::eval::{Match, MatchResult};
    let table: [(f32, Option<usize>); 10] = [
        (0.95, Some(1)),
        (0.90, Some(1)),
        (0.85, Some(2)),
        (0.80, Some(1)),
        (0.75, Some(5)),
        (0.70, Some(7)),
        (0.65, None),
        (0.60, Some(1)),
        (0.55, None),
        (0.50, Some(3)),
    ];
    let mut gt = GroundTruth::new(Protocol::PairList);
    let mut matches = Vec::new();
    for (i, &(top, rank)) in table.iter().enumerate() {
        let q = format!("q{i}");
        if i == 8 {
            gt.declare(q.clone());
        } else {
            gt.insert(q.clone(), format!("t{i}"));
        }
        let ranked = (0..10)
            .map(|p| Match {
                reference_id: if rank == Some(p + 1) {
                    format!("t{i}")
                } else {
                    format!("f{i}_{p}")
                },
                similarity: top - 0.01 * p as f32,
            })
            .collect();
        matches.push(MatchResult { query_id: q, ranked });
    }
    (matches, gt)
}

/// Expected `(threshold, tp, fp, fn)` on [`hand_fixture`]. 0.72 and 0.88
/// sit between top-1 values so f32 rounding cannot flip a decision.
pub const HAND_PR: [(f64, usize, usize, usize); 3] = [(0.0, 4, 6, 0), (0.72, 3, 2, 4), (0.88, 2, 0, 7)];
pub const HAND_RECALL: [(usize, f64); 3] = [(1, 4.0 / 9.0), (5, 7.0 / 9.0), (10, 8.0 / 9.0)];

/// Builds a descriptor set from raw vectors with ids `{prefix}{i}`.
pub fn descriptor_set(prefix: &str, vectors: &[Vec<f32>]) -> caevpr::data::DescriptorSet {
    let mut s = caevpr::data::DescriptorSet::new(vectors[0].len(), [0; 8]).unwrap();
    for (i, v) in vectors.iter().enumerate() {
        s.push(format!("{prefix}{i}"), v.clone()).unwrap();
    }
    s
}

pub struct OverfitRun {
    pub initial: f64,
    pub last: f64,
    pub steps: usize,
    pub elapsed: std::time::Duration,
}

/// 8 synthetic 32×14×20 maps, one full batch per epoch, `steps` Adam
/// updates at lr 0.001. `initial` is the loss seen by the first update;
/// `last` is the training-mode loss on the same 8 maps after the final
/// update (measured on a copy, so running statistics are untouched).
pub fn overfit_run(d: usize, d3: usize, steps: usize) -> OverfitRun {
    use caevpr::model::{build_model, train, TrainConfig};
    let spec = small_spec(d, d3);
    let data = synthetic_maps(spec.input, 8, 7);
    let mut m = build_model(spec, 1).unwrap();
    let cfg = TrainConfig {
        lr: 1e-3,
        epochs: steps,
        batch_size: 8,
        seed: 0,
        ..TrainConfig::default()
    };
    let start = std::time::Instant::now();
    let empty = FeatureMapSet::new(Backbone::Custom, spec.input);
    let log = train(&mut m, &data, &empty, &cfg).unwrap();
    let idx: Vec<usize> = (0..data.len()).collect();
    let (_, last, _) = m.clone().reconstruct_train(&data.batch(&idx).unwrap()).unwrap();
    OverfitRun {
        initial: log.step_losses[0],
        last,
        steps: log.step_losses.len(),
        elapsed: start.elapsed(),
    }
}
