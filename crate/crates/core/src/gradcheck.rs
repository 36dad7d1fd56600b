//! Central finite-difference verification of every backward pass, the loss
//! gradients, and the whole assembled network.
//!
//! Each check builds a scalar objective `J = sum(output ⊙ G)` for a fixed
//! random tensor `G` (or uses a loss function directly), computes the
//! analytic gradient via the backward pass under test, and compares against
//! `(J(x + h) - J(x - h)) / 2h` per entry. Errors are normalized by the
//! largest gradient magnitude in the compared vector, so near-zero entries
//! (for example conv biases that are exactly cancelled by a following batch
//! norm) do not divide noise by noise.
//!
//! ReLU and max-pool inputs are sampled away from their kinks: magnitudes
//! at least [`KINK_MARGIN`] from zero, and pooling windows whose top two
//! values differ by at least [`KINK_MARGIN`] — a finite step could
//! otherwise cross the non-differentiable point and produce a false alarm.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::layers::{
    batchnorm_backward, batchnorm_train_forward, conv_backward, conv_forward, maxpool_backward,
    maxpool_forward, relu_backward, relu_forward, softmax_backward, softmax_channel,
    unpool_backward, unpool_forward, BatchNormParams, ConvParams,
};
use crate::loss::{combined_loss, loss_gradient, one_hot, weight_map, LossConfig, WeightConfig};
use crate::model::{backward, forward_train, init_params, ModelConfig, ModelParams, SkipMode};
use crate::tensor::{concat_channels, split_channels, LabelMap, Shape, Tensor};

/// Exclusion radius around non-differentiable points, in input units.
pub const KINK_MARGIN: f32 = 0.05;

/// Finite-difference step for layer checks.
const FD_STEP: f32 = 1e-2;

/// Smaller step for loss checks, whose curvature near small probabilities
/// is much higher.
const FD_STEP_LOSS: f32 = 1e-3;

/// Step for whole-network perturbations. Must be small: pooling switches
/// make the assembled network only piecewise smooth, and a probe that flips
/// a switch measures a jump, not a slope. Probes whose two evaluations land
/// on different activation patterns are excluded instead of compared.
const FD_STEP_NET: f32 = 1e-4;

pub const LAYER_THRESHOLD: f64 = 1e-3;
pub const NETWORK_THRESHOLD: f64 = 1e-2;

/// Outcome of one component check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub component: &'static str,
    pub max_rel_err: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Probes skipped because the ±h evaluations crossed a kink or a
    /// pooling-switch jump (whole-network checks only).
    pub excluded: usize,
}

impl CheckResult {
    fn new(component: &'static str, max_rel_err: f64, threshold: f64) -> CheckResult {
        CheckResult {
            component,
            max_rel_err,
            threshold,
            pass: max_rel_err <= threshold,
            excluded: 0,
        }
    }

    fn with_excluded(mut self, excluded: usize) -> CheckResult {
        self.excluded = excluded;
        self
    }
}

/// Test hook: corrupts one analytic gradient entry so the suite must
/// report a failure (negative control for the harness itself).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultInjection {
    ConvKernelGradient,
}

/// Largest |analytic - numeric| over the vector, divided by the largest
/// gradient magnitude present (floored to dodge 0/0).
fn max_norm_rel_err(analytic: &[f32], numeric: &[f64]) -> f64 {
    debug_assert_eq!(analytic.len(), numeric.len());
    let scale = analytic
        .iter()
        .map(|&v| v.abs() as f64)
        .chain(numeric.iter().map(|&v| v.abs()))
        .fold(0.0f64, f64::max)
        .max(1e-6);
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a as f64 - n).abs())
        .fold(0.0f64, f64::max)
        / scale
}

fn dot(out: &Tensor, g: &Tensor) -> f64 {
    out.data()
        .iter()
        .zip(g.data())
        .map(|(&o, &w)| o as f64 * w as f64)
        .sum()
}

/// Central differences of `eval` with respect to every entry of `x`.
fn fd_grad(x: &Tensor, h: f32, mut eval: impl FnMut(&Tensor) -> f64) -> Vec<f64> {
    (0..x.data().len())
        .map(|i| {
            let mut plus = x.clone();
            plus.data_mut()[i] += h;
            let mut minus = x.clone();
            minus.data_mut()[i] -= h;
            (eval(&plus) - eval(&minus)) / (2.0 * h as f64)
        })
        .collect()
}

fn fd_grad_slice(x: &[f32], h: f32, mut eval: impl FnMut(&[f32]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut plus = x.to_vec();
            plus[i] += h;
            let mut minus = x.to_vec();
            minus[i] -= h;
            (eval(&plus) - eval(&minus)) / (2.0 * h as f64)
        })
        .collect()
}

fn rng_for(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn random_tensor(shape: Shape, rng: &mut ChaCha8Rng, lo: f32, hi: f32) -> Tensor {
    Tensor::from_fn(shape, |_, _, _, _| rng.random_range(lo..hi))
}

/// Random values whose magnitudes stay at least `KINK_MARGIN` from zero.
fn kink_safe_tensor(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_, _, _, _| {
        let mag = rng.random_range(2.0 * KINK_MARGIN..1.0);
        if rng.random_bool(0.5) {
            mag
        } else {
            -mag
        }
    })
}

/// Random tensor where every 2x2 pooling window has a clear winner: the
/// maximum exceeds the runner-up by at least `KINK_MARGIN`.
fn pool_safe_tensor(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = random_tensor(shape, rng, -1.0, 1.0);
    let s = t.shape();
    for b in 0..s.b {
        for c in 0..s.c {
            for wy in 0..s.h / 2 {
                for wx in 0..s.w / 2 {
                    let idx = [
                        (2 * wy, 2 * wx),
                        (2 * wy, 2 * wx + 1),
                        (2 * wy + 1, 2 * wx),
                        (2 * wy + 1, 2 * wx + 1),
                    ];
                    let mut best = 0;
                    for k in 1..4 {
                        if t.at(b, c, idx[k].0, idx[k].1) > t.at(b, c, idx[best].0, idx[best].1) {
                            best = k;
                        }
                    }
                    let runner_up = (0..4)
                        .filter(|&k| k != best)
                        .map(|k| t.at(b, c, idx[k].0, idx[k].1))
                        .fold(f32::NEG_INFINITY, f32::max);
                    let gap = t.at(b, c, idx[best].0, idx[best].1) - runner_up;
                    if gap < KINK_MARGIN {
                        *t.at_mut(b, c, idx[best].0, idx[best].1) += KINK_MARGIN - gap + 0.01;
                    }
                }
            }
        }
    }
    t
}

fn random_labels(h: usize, w: usize, classes: u8, rng: &mut ChaCha8Rng) -> LabelMap {
    LabelMap::new(h, w, (0..h * w).map(|_| rng.random_range(0..classes)).collect())
}

fn check_conv_input(seed: u64) -> CheckResult {
    let mut rng = rng_for(seed, 1);
    let x = random_tensor(Shape::new(2, 3, 6, 5), &mut rng, -1.0, 1.0);
    let p = ConvParams {
        kernels: random_tensor(Shape::new(4, 3, 7, 3), &mut rng, -0.3, 0.3),
        bias: (0..4).map(|_| rng.random_range(-0.2f32..0.2)).collect(),
    };
    let g = random_tensor(Shape::new(2, 4, 6, 5), &mut rng, -1.0, 1.0);
    let analytic = conv_backward(&x, &p, &g).unwrap().input;
    let numeric = fd_grad(&x, FD_STEP, |xp| dot(&conv_forward(xp, &p).unwrap(), &g));
    CheckResult::new(
        "conv input",
        max_norm_rel_err(analytic.data(), &numeric),
        LAYER_THRESHOLD,
    )
}

fn check_conv_kernels(seed: u64, fault: Option<FaultInjection>) -> CheckResult {
    let mut rng = rng_for(seed, 2);
    let x = random_tensor(Shape::new(2, 3, 6, 5), &mut rng, -1.0, 1.0);
    let p = ConvParams {
        kernels: random_tensor(Shape::new(4, 3, 3, 3), &mut rng, -0.3, 0.3),
        bias: vec![0.0; 4],
    };
    let g = random_tensor(Shape::new(2, 4, 6, 5), &mut rng, -1.0, 1.0);
    let mut analytic = conv_backward(&x, &p, &g).unwrap().kernels;
    if fault == Some(FaultInjection::ConvKernelGradient) {
        let v = &mut analytic.data_mut()[0];
        *v = *v * 1.5 + 1.0;
    }
    let numeric = fd_grad(&p.kernels, FD_STEP, |k| {
        let pk = ConvParams {
            kernels: k.clone(),
            bias: p.bias.clone(),
        };
        dot(&conv_forward(&x, &pk).unwrap(), &g)
    });
    CheckResult::new(
        "conv kernels",
        max_norm_rel_err(analytic.data(), &numeric),
        LAYER_THRESHOLD,
    )
}

fn check_conv_bias(seed: u64) -> CheckResult {
    let mut rng = rng_for(seed, 3);
    let x = random_tensor(Shape::new(2, 2, 4, 4), &mut rng, -1.0, 1.0);
    let p = ConvParams {
        kernels: random_tensor(Shape::new(3, 2, 3, 3), &mut rng, -0.3, 0.3),
        bias: (0..3).map(|_| rng.random_range(-0.2f32..0.2)).collect(),
    };
    let g = random_tensor(Shape::new(2, 3, 4, 4), &mut rng, -1.0, 1.0);
    let analytic = conv_backward(&x, &p, &g).unwrap().bias;
    let numeric = fd_grad_slice(&p.bias, FD_STEP, |b| {
        let pb = ConvParams {
            kernels: p.kernels.clone(),
            bias: b.to_vec(),
        };
        dot(&conv_forward(&x, &pb).unwrap(), &g)
    });
    CheckResult::new(
        "conv bias",
        max_norm_rel_err(&analytic, &numeric),
        LAYER_THRESHOLD,
    )
}

/// One batch-norm check per gradient target (input / gamma / beta).
fn check_batchnorm(seed: u64, target: &'static str) -> CheckResult {
    let mut rng = rng_for(seed, 4);
    let shape = Shape::new(2, 4, 6, 5);
    let x = random_tensor(shape, &mut rng, -2.0, 2.0);
    let mut p = BatchNormParams::identity(4);
    for v in p.gamma.iter_mut() {
        *v = rng.random_range(0.5f32..1.5);
    }
    for v in p.beta.iter_mut() {
        *v = rng.random_range(-0.5f32..0.5);
    }
    let g = random_tensor(shape, &mut rng, -1.0, 1.0);

    let (_, cache) = batchnorm_train_forward(&x, &mut p.clone()).unwrap();
    let (dx, dgamma, dbeta) = batchnorm_backward(&g, &cache, &p).unwrap();

    // the objective always recomputes the full forward (batch statistics
    // depend on every input entry)
    let eval = |xv: &Tensor, pv: &BatchNormParams| {
        let (out, _) = batchnorm_train_forward(xv, &mut pv.clone()).unwrap();
        dot(&out, &g)
    };

    let (component, err) = match target {
        "input" => {
            let numeric = fd_grad(&x, FD_STEP, |xp| eval(xp, &p));
            ("batchnorm input", max_norm_rel_err(dx.data(), &numeric))
        }
        "gamma" => {
            let numeric = fd_grad_slice(&p.gamma, FD_STEP, |gm| {
                let mut pv = p.clone();
                pv.gamma = gm.to_vec();
                eval(&x, &pv)
            });
            ("batchnorm gamma", max_norm_rel_err(&dgamma, &numeric))
        }
        _ => {
            let numeric = fd_grad_slice(&p.beta, FD_STEP, |bt| {
                let mut pv = p.clone();
                pv.beta = bt.to_vec();
                eval(&x, &pv)
            });
            ("batchnorm beta", max_norm_rel_err(&dbeta, &numeric))
        }
    };
    CheckResult::new(component, err, LAYER_THRESHOLD)
}

fn check_relu(seed: u64) -> CheckResult {
    let mut rng = rng_for(seed, 5);
    let shape = Shape::new(2, 4, 6, 5);
    let x = kink_safe_tensor(shape, &mut rng);
    let g = random_tensor(shape, &mut rng, -1.0, 1.0);
    let analytic = relu_backward(&g, &x).unwrap();
    let numeric = fd_grad(&x, FD_STEP, |xp| dot(&relu_forward(xp), &g));
    CheckResult::new(
        "relu",
        max_norm_rel_err(analytic.data(), &numeric),
        LAYER_THRESHOLD,
    )
}

fn check_maxpool(seed: u64) -> CheckResult {
    let mut rng = rng_for(seed, 6);
    let x = pool_safe_tensor(Shape::new(2, 4, 8, 6), &mut rng);
    let g = random_tensor(Shape::new(2, 4, 4, 3), &mut rng, -1.0, 1.0);
    let (_, switches) = maxpool_forward(&x).unwrap();
    let analytic = maxpool_backward(&g, &switches).unwrap();
    let numeric = fd_grad(&x, FD_STEP, |xp| {
        let (out, _) = maxpool_forward(xp).unwrap();
        dot(&out, &g)
    });
    CheckResult::new(
        "maxpool",
        max_norm_rel_err(analytic.data(), &numeric),
        LAYER_THRESHOLD,
    )
}

fn check_unpool(seed: u64) -> CheckResult {
    let mut rng = rng_for(seed, 7);
    // switches come from pooling an unrelated well-separated tensor and
    // then stay fixed: unpooling itself is linear in x
    let source = pool_safe_tensor(Shape::new(2, 4, 8, 6), &mut rng);
    let (_, switches) = maxpool_forward(&source).unwrap();
    let x = random_tensor(Shape::new(2, 4, 4, 3), &mut rng, -1.0, 1.0);
    let g = random_tensor(Shape::new(2, 4, 8, 6), &mut rng, -1.0, 1.0);
    let analytic = unpool_backward(&g, &switches).unwrap();
    let numeric = fd_grad(&x, FD_STEP, |xp| {
        dot(&unpool_forward(xp, &switches).unwrap(), &g)
    });
    CheckResult::new(
        "unpool",
        max_norm_rel_err(analytic.data(), &numeric),
        LAYER_THRESHOLD,
    )
}

fn check_concat_split(seed: u64) -> CheckResult {
    let mut rng = rng_for(seed, 8);
    let a = random_tensor(Shape::new(2, 3, 4, 4), &mut rng, -1.0, 1.0);
    let b = random_tensor(Shape::new(2, 2, 4, 4), &mut rng, -1.0, 1.0);
    let g = random_tensor(Shape::new(2, 5, 4, 4), &mut rng, -1.0, 1.0);
    // backward of concat is split of the upstream gradient
    let (ga, gb) = split_channels(&g, 3).unwrap();
    let numeric_a = fd_grad(&a, FD_STEP, |ap| {
        dot(&concat_channels(ap, &b).unwrap(), &g)
    });
    let numeric_b = fd_grad(&b, FD_STEP, |bp| {
        dot(&concat_channels(&a, bp).unwrap(), &g)
    });
    let err = max_norm_rel_err(ga.data(), &numeric_a).max(max_norm_rel_err(gb.data(), &numeric_b));
    CheckResult::new("concat/split", err, LAYER_THRESHOLD)
}

fn check_softmax(seed: u64) -> CheckResult {
    let mut rng = rng_for(seed, 9);
    let shape = Shape::new(2, 4, 4, 4);
    let x = random_tensor(shape, &mut rng, -2.0, 2.0);
    let g = random_tensor(shape, &mut rng, -1.0, 1.0);
    let probs = softmax_channel(&x);
    let analytic = softmax_backward(&g, &probs).unwrap();
    let numeric = fd_grad(&x, FD_STEP, |xp| dot(&softmax_channel(xp), &g));
    CheckResult::new(
        "softmax",
        max_norm_rel_err(analytic.data(), &numeric),
        LAYER_THRESHOLD,
    )
}

/// Loss-gradient check on a random problem with `classes` classes and the
/// given weighting. Probabilities are sampled in [0.1, 0.9] so the
/// logistic term's curvature stays moderate.
fn check_loss(
    seed: u64,
    salt: u64,
    component: &'static str,
    classes: u8,
    lc: LossConfig,
    wc: &WeightConfig,
) -> CheckResult {
    let mut rng = rng_for(seed, salt);
    let labels = random_labels(4, 4, classes, &mut rng);
    let onehot = one_hot(&labels, classes as usize);
    let weights = weight_map(&labels, wc);
    let probs = random_tensor(Shape::new(1, classes as usize, 4, 4), &mut rng, 0.1, 0.9);

    let analytic = loss_gradient(&probs, &onehot, &weights, &lc).unwrap();
    let numeric = fd_grad(&probs, FD_STEP_LOSS, |p| {
        combined_loss(p, &onehot, &weights, &[], &lc).unwrap()
    });
    CheckResult::new(
        component,
        max_norm_rel_err(analytic.data(), &numeric),
        LAYER_THRESHOLD,
    )
}

fn logistic_only() -> LossConfig {
    LossConfig {
        lambda1: 1.0,
        lambda2: 0.0,
        lambda3: 0.0,
        use_logistic: true,
        use_dice: false,
        use_weighting: true,
    }
}

fn dice_only() -> LossConfig {
    LossConfig {
        lambda1: 0.0,
        lambda2: 1.0,
        lambda3: 0.0,
        use_logistic: false,
        use_dice: true,
        use_weighting: false,
    }
}

fn combined_cfg() -> LossConfig {
    LossConfig {
        lambda3: 0.0,
        ..LossConfig::default()
    }
}

/// Flattens a full parameter gradient into one vector; order matches
/// [`net_param_slices`].
fn flatten_param_grads(grads: &crate::model::ParamGrads) -> Vec<f32> {
    let mut out = Vec::new();
    let mut push_block = |g: &crate::model::ConvBlockGrads| {
        out.extend_from_slice(g.kernels.data());
        out.extend_from_slice(&g.bias);
        out.extend_from_slice(&g.gamma);
        out.extend_from_slice(&g.beta);
    };
    for g in &grads.encoders {
        push_block(g);
    }
    push_block(&grads.bottleneck);
    for g in &grads.decoders {
        push_block(g);
    }
    out.extend_from_slice(grads.classifier_kernels.data());
    out.extend_from_slice(&grads.classifier_bias);
    out
}

/// Mutable views of every learnable parameter entry, in the same order as
/// [`flatten_param_grads`].
fn for_each_param<Ret>(
    params: &mut ModelParams,
    mut f: impl FnMut(&mut f32) -> Option<Ret>,
) -> Option<Ret> {
    let depth = params.config.depth;
    for i in 0..depth {
        let b = &mut params.encoders[i];
        for v in b.conv.kernels.data_mut().iter_mut()
            .chain(b.conv.bias.iter_mut())
            .chain(b.bn.gamma.iter_mut())
            .chain(b.bn.beta.iter_mut())
        {
            if let Some(r) = f(v) {
                return Some(r);
            }
        }
    }
    let b = &mut params.bottleneck;
    for v in b.conv.kernels.data_mut().iter_mut()
        .chain(b.conv.bias.iter_mut())
        .chain(b.bn.gamma.iter_mut())
        .chain(b.bn.beta.iter_mut())
    {
        if let Some(r) = f(v) {
            return Some(r);
        }
    }
    for i in 0..depth {
        let b = &mut params.decoders[i];
        for v in b.conv.kernels.data_mut().iter_mut()
            .chain(b.conv.bias.iter_mut())
            .chain(b.bn.gamma.iter_mut())
            .chain(b.bn.beta.iter_mut())
        {
            if let Some(r) = f(v) {
                return Some(r);
            }
        }
    }
    for v in params.classifier.kernels.data_mut().iter_mut()
        .chain(params.classifier.bias.iter_mut())
    {
        if let Some(r) = f(v) {
            return Some(r);
        }
    }
    None
}

fn count_params(params: &ModelParams) -> usize {
    let mut n = 0;
    let mut p = params.clone();
    for_each_param::<()>(&mut p, |_| {
        n += 1;
        None
    });
    n
}

/// Perturbs the `target`-th parameter entry by `delta` (single visit).
fn perturb_param(params: &mut ModelParams, target: usize, delta: f32) {
    let mut i = 0usize;
    for_each_param(params, |v| {
        if i == target {
            *v += delta;
            i += 1;
            Some(())
        } else {
            i += 1;
            None
        }
    });
}

fn tiny_net_config() -> ModelConfig {
    ModelConfig {
        depth: 2,
        channels: 4,
        kernel_h: 7,
        kernel_w: 3,
        num_classes: 3,
        skip_mode: SkipMode::Full,
    }
}

/// `J = sum(probs ⊙ G)` plus the pass's activation signature, evaluated on
/// a scratch copy (training mode mutates running statistics, which does
/// not affect this pass's output).
fn net_objective(params: &ModelParams, x: &Tensor, g: &Tensor) -> (f64, u64) {
    let mut scratch = params.clone();
    let cache = forward_train(&mut scratch, x).unwrap();
    (dot(&cache.probs, &g), cache.activation_signature())
}

/// Central difference of one probe, or `None` when the two evaluations
/// land on different sides of a kink or pooling-switch jump.
fn guarded_fd(plus: (f64, u64), minus: (f64, u64), h: f32) -> Option<f64> {
    if plus.1 != minus.1 {
        return None;
    }
    Some((plus.0 - minus.0) / (2.0 * h as f64))
}

/// Max-norm comparison skipping excluded probes.
fn compare_guarded(analytic: &[f32], numeric: &[Option<f64>]) -> (f64, usize) {
    let excluded = numeric.iter().filter(|n| n.is_none()).count();
    let scale = analytic
        .iter()
        .zip(numeric)
        .filter_map(|(&a, n)| n.map(|n| (a.abs() as f64).max(n.abs())))
        .fold(0.0f64, f64::max)
        .max(1e-6);
    let err = analytic
        .iter()
        .zip(numeric)
        .filter_map(|(&a, n)| n.map(|n| (a as f64 - n).abs()))
        .fold(0.0f64, f64::max)
        / scale;
    (err, excluded)
}

/// Whole-network gradient check on a tiny config: every learnable
/// parameter, compared in one flattened vector against central differences
/// of `J = sum(probs ⊙ G)`.
fn check_whole_network(seed: u64) -> CheckResult {
    let mut rng = rng_for(seed, 20);
    let params = init_params(tiny_net_config(), rng.random()).unwrap();
    let x = random_tensor(Shape::new(1, 1, 16, 8), &mut rng, 0.0, 1.0);
    let g = random_tensor(Shape::new(1, 3, 16, 8), &mut rng, -1.0, 1.0);

    let mut train_params = params.clone();
    let cache = forward_train(&mut train_params, &x).unwrap();
    let grads = backward(&params, &cache, &g).unwrap();
    let analytic = flatten_param_grads(&grads);

    let n = count_params(&params);
    debug_assert_eq!(n, analytic.len());
    let mut numeric = Vec::with_capacity(n);
    for i in 0..n {
        let mut plus = params.clone();
        perturb_param(&mut plus, i, FD_STEP_NET);
        let mut minus = params.clone();
        perturb_param(&mut minus, i, -FD_STEP_NET);
        numeric.push(guarded_fd(
            net_objective(&plus, &x, &g),
            net_objective(&minus, &x, &g),
            FD_STEP_NET,
        ));
    }

    let (err, excluded) = compare_guarded(&analytic, &numeric);
    CheckResult::new("whole network (parameters)", err, NETWORK_THRESHOLD).with_excluded(excluded)
}

/// Gradient with respect to the network input, same tiny config.
fn check_whole_network_input(seed: u64) -> CheckResult {
    let mut rng = rng_for(seed, 21);
    let params = init_params(tiny_net_config(), rng.random()).unwrap();
    let x = random_tensor(Shape::new(1, 1, 16, 8), &mut rng, 0.0, 1.0);
    let g = random_tensor(Shape::new(1, 3, 16, 8), &mut rng, -1.0, 1.0);

    let mut train_params = params.clone();
    let cache = forward_train(&mut train_params, &x).unwrap();
    let grads_input = crate::model::backward_input(&params, &cache, &g).unwrap();

    let mut numeric = Vec::with_capacity(x.data().len());
    for i in 0..x.data().len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += FD_STEP_NET;
        let mut minus = x.clone();
        minus.data_mut()[i] -= FD_STEP_NET;
        numeric.push(guarded_fd(
            net_objective(&params, &plus, &g),
            net_objective(&params, &minus, &g),
            FD_STEP_NET,
        ));
    }

    let (err, excluded) = compare_guarded(grads_input.data(), &numeric);
    CheckResult::new("whole network (input)", err, NETWORK_THRESHOLD).with_excluded(excluded)
}

/// Runs every component check; `fault` corrupts the conv-kernel gradient
/// to prove the harness detects broken backwards.
pub fn run_suite(seed: u64, fault: Option<FaultInjection>) -> Vec<CheckResult> {
    vec![
        check_conv_input(seed),
        check_conv_kernels(seed, fault),
        check_conv_bias(seed),
        check_batchnorm(seed, "input"),
        check_batchnorm(seed, "gamma"),
        check_batchnorm(seed, "beta"),
        check_relu(seed),
        check_maxpool(seed),
        check_unpool(seed),
        check_concat_split(seed),
        check_softmax(seed),
        check_loss(seed, 10, "logistic loss (2-class, weighted)", 2, logistic_only(), &WeightConfig::default()),
        check_loss(seed, 11, "logistic loss (10-class, weighted)", 10, logistic_only(), &WeightConfig::default()),
        check_loss(seed, 12, "dice loss (2-class)", 2, dice_only(), &WeightConfig::unweighted()),
        check_loss(seed, 13, "dice loss (10-class)", 10, dice_only(), &WeightConfig::unweighted()),
        check_loss(seed, 14, "combined loss (weighted)", 10, combined_cfg(), &WeightConfig::default()),
        check_whole_network(seed),
        check_whole_network_input(seed),
    ]
}
