mod common;

use caevpr::model::build_model;
use caevpr::ops::{self, Kernel, LayerNormConfig, Stride};
use caevpr::{Dims4, Param, Tensor4};
use common::*;

fn over_seeds(check: impl Fn(u64) -> f64, tol: f64) {
    for seed in 0..GRADIENT_SEEDS {
        let err = check(seed);
        assert!(err < tol, "seed {seed}: relative error {err:e} ≥ {tol:e}");
    }
}

#[test]
fn conv_random_geometries() {
    over_seeds(|s| conv_check(&ConvCase::random(&mut rng(500 + s)), s), 1e-3);
}

#[test]
fn conv_three_channel_stride_two() {
    let case = ConvCase {
        n: 1,
        c_in: 3,
        c_out: 4,
        kernel: Kernel::new(3, 3),
        stride: Stride::new(2, 2),
        h: 8,
        w: 8,
    };
    over_seeds(|s| conv_check(&case, s), 1e-3);
}

#[test]
fn deconv_random_geometries() {
    over_seeds(|s| deconv_check(&ConvCase::random(&mut rng(600 + s)), s), 1e-3);
}

#[test]
fn deconv_two_to_three_channels_stride_two() {
    let case = ConvCase {
        n: 1,
        c_in: 2,
        c_out: 3,
        kernel: Kernel::new(3, 3),
        stride: Stride::new(2, 2),
        h: 3,
        w: 3,
    };
    over_seeds(|s| deconv_check(&case, s), 1e-3);
}

#[test]
fn batchnorm_fixed_and_random() {
    over_seeds(|s| batchnorm_check(Dims4::new(4, 2, 3, 3), s), 1e-3);
    over_seeds(
        |s| {
            let d = random_bn_dims(&mut rng(700 + s));
            batchnorm_check(d.with_batch(d.n.max(2)), s)
        },
        1e-3,
    );
}

#[test]
fn prelu_away_from_kink() {
    over_seeds(|s| prelu_check(random_bn_dims(&mut rng(800 + s)), s), 1e-3);
}

#[test]
fn layernorm_both_modes() {
    over_seeds(
        |s| layernorm_check(random_bn_dims(&mut rng(900 + s)), &LayerNormConfig::default(), s),
        1e-3,
    );
    over_seeds(
        |s| layernorm_check(random_bn_dims(&mut rng(950 + s)), &LayerNormConfig::frozen(0.1, 0.7), s),
        1e-3,
    );
}

#[test]
fn mse_matches_differences() {
    over_seeds(|s| mse_check(random_bn_dims(&mut rng(1100 + s)), s), 1e-4);
}

fn inner(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

#[test]
fn deconv_is_adjoint_of_conv() {
    for seed in 0..GRADIENT_SEEDS {
        let mut r = rng(seed);
        let mut case = ConvCase::random(&mut r);
        // Extents the stride tiles exactly, so no trailing row is dropped.
        case.h = case.kernel.h + case.stride.h * (case.h - case.kernel.h);
        case.w = case.kernel.w + case.stride.w * (case.w - case.kernel.w);
        let k = case.kernel;
        let x = tensor(&mut r, Dims4::new(case.n, case.c_in, case.h, case.w));
        let w = param(&mut r, "w", vec![case.c_out, case.c_in, k.h, k.w]);
        let zero_out = Param::filled("b", vec![case.c_out], 0.0).unwrap();
        let zero_in = Param::filled("b", vec![case.c_in], 0.0).unwrap();
        let cx = ops::conv2d_forward(&x, &w, &zero_out, case.stride).unwrap();
        let y = tensor(&mut r, cx.dims());
        let dy = ops::deconv2d_forward(&y, &w, &zero_in, case.stride).unwrap();
        assert_eq!(dy.dims(), x.dims(), "seed {seed}");
        let lhs = inner(cx.data(), y.data());
        let rhs = inner(x.data(), dy.data());
        let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-12);
        assert!(rel < 1e-5, "seed {seed}: {lhs} vs {rhs}");
    }
}

#[test]
fn deconv_input_gradient_is_conv_forward() {
    for seed in 0..GRADIENT_SEEDS {
        let mut r = rng(200 + seed);
        let case = ConvCase::random(&mut r);
        let k = case.kernel;
        let x = tensor(&mut r, Dims4::new(case.n, case.c_in, case.h, case.w));
        let w = param(&mut r, "w", vec![case.c_in, case.c_out, k.h, k.w]);
        let b = param(&mut r, "b", vec![case.c_out]);
        let y = ops::deconv2d_forward(&x, &w, &b, case.stride).unwrap();
        let gy = tensor(&mut r, y.dims());
        let g = ops::deconv2d_backward(&x, &w, case.stride, &gy).unwrap();
        let zero = Param::filled("z", vec![case.c_in], 0.0).unwrap();
        let expect = ops::conv2d_forward(&gy, &w, &zero, case.stride).unwrap();
        assert_eq!(g.input, expect, "seed {seed}");
    }
}

/// The full network: analytic gradients from `CaeModel::backward` against
/// differences of the training-mode loss for every parameter. PReLU slopes
/// are set to 1 so no probe straddles a kink; the kink itself is covered by
/// the layer checks.
#[test]
fn whole_model_backward() {
    let spec = caevpr::model::ArchSpec::custom(
        caevpr::MapDims::new(3, 9, 11),
        3,
        3,
        2,
        ["3x3/1", "3x3/2", "2x2/1"].map(|b| b.parse().unwrap()),
    );
    let mut base = build_model(spec, 5).unwrap();
    for p in base.params_mut() {
        if p.name.ends_with(".alpha") {
            p.value.fill(1.0);
        }
    }
    let mut r = rng(42);
    let x = tensor(&mut r, Dims4::new(3, 3, 9, 11));
    let mut m = base.clone();
    let (_, _, grad) = m.reconstruct_train(&x).unwrap();
    m.backward(&grad).unwrap();
    let analytic: Vec<Param> = m.params().into_iter().cloned().collect();
    let loss_with = |pi: usize, v: &[f32]| {
        let mut probe = base.clone();
        probe.params_mut()[pi].value.copy_from_slice(v);
        probe.reconstruct_train(&x).unwrap().1
    };
    let mut pooled = FdStats::default();
    for (pi, p) in analytic.iter().enumerate() {
        let st = fd_stats(&base.params()[pi].value, &p.grad, |v| loss_with(pi, v));
        assert!(st.max_diff < 1e-3, "{}: {st:?}", p.name);
        pooled = pooled.merge(st);
    }
    assert!(pooled.relative() < 1e-3, "{pooled:?}");
}

#[test]
fn kink_branch_matches_forward() {
    // x = 0 takes the negative branch in both directions.
    let x = Tensor4::from_vec(Dims4::new(1, 1, 1, 2), vec![0.0, 1.0]).unwrap();
    let a = Param::filled("a", vec![1], 0.25).unwrap();
    let g = Tensor4::from_vec(Dims4::new(1, 1, 1, 2), vec![1.0, 1.0]).unwrap();
    let out = ops::prelu_backward(&x, &a, &g).unwrap();
    assert_eq!(out.input.data(), &[0.25, 1.0]);
}
