//! The full segmentation network: a contracting path of conv+BN+ReLU+pool
//! encoder blocks, one bottleneck block, an expansive path of
//! unpool+concat+conv+BN+ReLU decoder blocks wired to the matching encoders
//! by pooling switches and skip connections, and a 1x1 classifier with
//! channel softmax.
//!
//! Decoder blocks are indexed from the deepest (first after the bottleneck)
//! to the shallowest; decoder `i` consumes the switches and skip tensor of
//! encoder `depth - 1 - i`.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{
    batchnorm_backward, batchnorm_infer_forward, batchnorm_train_forward, conv_backward,
    conv_forward, maxpool_backward, maxpool_forward, relu_backward, relu_forward,
    softmax_backward, softmax_channel, unpool_backward, unpool_forward, BatchNormCache,
    BatchNormParams, ConvParams, PoolSwitches,
};
use crate::tensor::{add_assign, argmax_channel, concat_channels, crop, split_channels, LabelMap, Shape, Tensor};

/// Which decoders receive their encoder's pre-pool activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipMode {
    Full,
    None,
    /// Only the deepest half of the decoders (rounded up) keep their skips.
    LowResOnly,
    /// Only the shallowest decoders keep their skips.
    HighResOnly,
}

impl SkipMode {
    pub fn name(&self) -> &'static str {
        match self {
            SkipMode::Full => "full",
            SkipMode::None => "none",
            SkipMode::LowResOnly => "low-res-only",
            SkipMode::HighResOnly => "high-res-only",
        }
    }
}

impl std::str::FromStr for SkipMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<SkipMode> {
        match s {
            "full" => Ok(SkipMode::Full),
            "none" => Ok(SkipMode::None),
            "low-res-only" => Ok(SkipMode::LowResOnly),
            "high-res-only" => Ok(SkipMode::HighResOnly),
            other => Err(Error::Config(format!(
                "unknown skip mode {other:?} (expected full, none, low-res-only, high-res-only)"
            ))),
        }
    }
}

/// Architecture hyperparameters; `depth` is the `x` of the x-1-x notation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub depth: usize,
    pub channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub num_classes: usize,
    pub skip_mode: SkipMode,
}

impl Default for ModelConfig {
    fn default() -> ModelConfig {
        ModelConfig {
            depth: 3,
            channels: 64,
            kernel_h: 7,
            kernel_w: 3,
            num_classes: 10,
            skip_mode: SkipMode::Full,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=4).contains(&self.depth) {
            return Err(Error::Config(format!(
                "depth must be 2, 3, or 4, got {}",
                self.depth
            )));
        }
        if self.channels < 1 {
            return Err(Error::Config("channels must be at least 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be at least 2".into()));
        }
        if self.kernel_h % 2 == 0 || self.kernel_w % 2 == 0 {
            return Err(Error::Config(format!(
                "kernel dims must be odd for same-size output, got {}x{}",
                self.kernel_h, self.kernel_w
            )));
        }
        Ok(())
    }

    /// Spatial dims must be divisible by this before entering the network.
    pub fn divisor(&self) -> usize {
        1 << self.depth
    }

    /// Whether decoder `i` (0 = deepest) concatenates its skip tensor.
    pub fn skip_active(&self, decoder_idx: usize) -> bool {
        let deep_half = self.depth.div_ceil(2);
        match self.skip_mode {
            SkipMode::Full => true,
            SkipMode::None => false,
            SkipMode::LowResOnly => decoder_idx < deep_half,
            SkipMode::HighResOnly => decoder_idx >= deep_half,
        }
    }

    /// Input channel count of decoder `i`'s convolution.
    pub fn decoder_in_channels(&self, decoder_idx: usize) -> usize {
        if self.skip_active(decoder_idx) {
            2 * self.channels
        } else {
            self.channels
        }
    }
}

/// One conv + batch-norm unit (the ReLU holds no state).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlockParams {
    pub conv: ConvParams,
    pub bn: BatchNormParams,
}

/// Every learnable tensor in the network, grouped by block.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub encoders: Vec<ConvBlockParams>,
    pub bottleneck: ConvBlockParams,
    pub decoders: Vec<ConvBlockParams>,
    pub classifier: ConvParams,
}

impl ModelParams {
    /// All convolution kernel tensors, in block order — the set regularized
    /// by weight decay.
    pub fn kernel_tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::with_capacity(2 * self.config.depth + 2);
        for e in &self.encoders {
            out.push(&e.conv.kernels);
        }
        out.push(&self.bottleneck.conv.kernels);
        for d in &self.decoders {
            out.push(&d.conv.kernels);
        }
        out.push(&self.classifier.kernels);
        out
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let s = x.shape();
        if s.c != 1 {
            return Err(Error::shape("forward", s, "single-channel input"));
        }
        let m = self.config.divisor();
        if s.h % m != 0 || s.w % m != 0 {
            return Err(Error::shape(
                "forward",
                s,
                format!("spatial dims divisible by {m}"),
            ));
        }
        Ok(())
    }
}

/// Gradients for one conv block, same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct ConvBlockGrads {
    pub kernels: Tensor,
    pub bias: Vec<f32>,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
}

impl ConvBlockGrads {
    fn zeros_like(p: &ConvBlockParams) -> ConvBlockGrads {
        ConvBlockGrads {
            kernels: Tensor::zeros(p.conv.kernels.shape()),
            bias: vec![0.0; p.conv.bias.len()],
            gamma: vec![0.0; p.bn.gamma.len()],
            beta: vec![0.0; p.bn.beta.len()],
        }
    }
}

/// Gradient for every learnable tensor, mirroring [`ModelParams`].
/// (Running BN statistics are not learnable and have no gradient.)
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub encoders: Vec<ConvBlockGrads>,
    pub bottleneck: ConvBlockGrads,
    pub decoders: Vec<ConvBlockGrads>,
    pub classifier_kernels: Tensor,
    pub classifier_bias: Vec<f32>,
}

impl ParamGrads {
    pub fn zeros_like(params: &ModelParams) -> ParamGrads {
        ParamGrads {
            encoders: params.encoders.iter().map(ConvBlockGrads::zeros_like).collect(),
            bottleneck: ConvBlockGrads::zeros_like(&params.bottleneck),
            decoders: params.decoders.iter().map(ConvBlockGrads::zeros_like).collect(),
            classifier_kernels: Tensor::zeros(params.classifier.kernels.shape()),
            classifier_bias: vec![0.0; params.classifier.bias.len()],
        }
    }
}

/// Everything one training forward pass must remember for the backward pass.
#[derive(Debug, Clone)]
pub struct BlockCache {
    conv_input: Tensor,
    bn: BatchNormCache,
    bn_out: Tensor,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    enc: Vec<BlockCache>,
    switches: Vec<PoolSwitches>,
    bottleneck: BlockCache,
    dec: Vec<BlockCache>,
    classifier_input: Tensor,
    /// Softmax output of the pass, kept for the softmax backward.
    pub probs: Tensor,
}

impl ForwardCache {
    /// Hash of every discrete decision made during the pass: pooling switch
    /// positions and ReLU activation signs. Two passes with equal
    /// signatures lie on the same smooth piece of the network function —
    /// finite-difference probes compare signatures to detect when a
    /// perturbation has crossed a kink or a pooling-switch jump.
    pub fn activation_signature(&self) -> u64 {
        const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        let mut mix = |x: u64| {
            h ^= x;
            h = h.wrapping_mul(FNV_PRIME);
        };
        let blocks = self
            .enc
            .iter()
            .chain(std::iter::once(&self.bottleneck))
            .chain(self.dec.iter());
        for block in blocks {
            for (i, &v) in block.bn_out.data().iter().enumerate() {
                if v > 0.0 {
                    mix(i as u64 + 1);
                }
            }
            mix(u64::MAX);
        }
        for sw in &self.switches {
            for &ix in sw.indices() {
                mix(ix as u64 + 0x9e37_79b9);
            }
        }
        h
    }
}

fn uniform_kernels(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor {
    // fan-based bound s = sqrt(6 / (fan_in + fan_out)) with
    // fan = channels * k_h * k_w on each side
    let fan_in = shape.c * shape.h * shape.w;
    let fan_out = shape.b * shape.h * shape.w;
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
    Tensor::from_fn(shape, |_, _, _, _| rng.random_range(-s..s))
}

fn init_block(c_in: usize, c_out: usize, k_h: usize, k_w: usize, rng: &mut ChaCha8Rng) -> ConvBlockParams {
    ConvBlockParams {
        conv: ConvParams {
            kernels: uniform_kernels(Shape::new(c_out, c_in, k_h, k_w), rng),
            bias: vec![0.0; c_out],
        },
        bn: BatchNormParams::identity(c_out),
    }
}

/// Fresh parameters: kernels uniform in `(-s, s)` with the fan-based bound,
/// biases zero, BN at identity. Deterministic in `seed`; draw order is
/// encoders, bottleneck, decoders, classifier.
pub fn init_params(config: ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ch = config.channels;
    let (kh, kw) = (config.kernel_h, config.kernel_w);

    let encoders = (0..config.depth)
        .map(|i| init_block(if i == 0 { 1 } else { ch }, ch, kh, kw, &mut rng))
        .collect();
    let bottleneck = init_block(ch, ch, kh, kw, &mut rng);
    let decoders = (0..config.depth)
        .map(|i| init_block(config.decoder_in_channels(i), ch, kh, kw, &mut rng))
        .collect();
    let classifier = ConvParams {
        kernels: uniform_kernels(Shape::new(config.num_classes, ch, 1, 1), &mut rng),
        bias: vec![0.0; config.num_classes],
    };

    Ok(ModelParams {
        config,
        encoders,
        bottleneck,
        decoders,
        classifier,
    })
}

fn block_forward_train(x: Tensor, p: &mut ConvBlockParams) -> Result<(Tensor, BlockCache)> {
    let conv_out = conv_forward(&x, &p.conv)?;
    let (bn_out, bn_cache) = batchnorm_train_forward(&conv_out, &mut p.bn)?;
    let out = relu_forward(&bn_out);
    Ok((
        out,
        BlockCache {
            conv_input: x,
            bn: bn_cache,
            bn_out,
        },
    ))
}

fn block_forward_infer(x: &Tensor, p: &ConvBlockParams) -> Result<Tensor> {
    let conv_out = conv_forward(x, &p.conv)?;
    let bn_out = batchnorm_infer_forward(&conv_out, &p.bn)?;
    Ok(relu_forward(&bn_out))
}

fn block_backward(
    grad_out: &Tensor,
    p: &ConvBlockParams,
    cache: &BlockCache,
) -> Result<(Tensor, ConvBlockGrads)> {
    let grad_bn_out = relu_backward(grad_out, &cache.bn_out)?;
    let (grad_conv_out, grad_gamma, grad_beta) = batchnorm_backward(&grad_bn_out, &cache.bn, &p.bn)?;
    let conv = conv_backward(&cache.conv_input, &p.conv, &grad_conv_out)?;
    Ok((
        conv.input,
        ConvBlockGrads {
            kernels: conv.kernels,
            bias: conv.bias,
            gamma: grad_gamma,
            beta: grad_beta,
        },
    ))
}

/// Training-mode forward pass: batch statistics drive normalization (and
/// update the running estimates, hence `&mut`), and every intermediate the
/// backward pass needs is cached.
pub fn forward_train(params: &mut ModelParams, x: &Tensor) -> Result<ForwardCache> {
    params.check_input(x)?;
    let depth = params.config.depth;
    let ch = params.config.channels;

    let mut enc = Vec::with_capacity(depth);
    let mut switches: Vec<PoolSwitches> = Vec::with_capacity(depth);
    let mut skips: Vec<Option<Tensor>> = Vec::with_capacity(depth);
    let mut cur = x.clone();
    for i in 0..depth {
        let (pre_pool, cache) = block_forward_train(cur, &mut params.encoders[i])?;
        let (pooled, sw) = maxpool_forward(&pre_pool)?;
        enc.push(cache);
        switches.push(sw);
        skips.push(Some(pre_pool));
        cur = pooled;
    }

    let (mut cur, bottleneck) = block_forward_train(cur, &mut params.bottleneck)?;

    let mut dec = Vec::with_capacity(depth);
    for i in 0..depth {
        let enc_idx = depth - 1 - i;
        let up = unpool_forward(&cur, &switches[enc_idx])?;
        let d_in = if params.config.skip_active(i) {
            let skip = skips[enc_idx]
                .take()
                .expect("each skip tensor is consumed exactly once");
            debug_assert_eq!(up.shape(), skip.shape());
            concat_channels(&up, &skip)?
        } else {
            up
        };
        if d_in.shape().c != params.decoders[i].conv.in_channels() {
            return Err(Error::shape(
                "decoder input",
                d_in.shape(),
                format!("decoder {i} expects {} channels", params.decoders[i].conv.in_channels()),
            ));
        }
        let (out, cache) = block_forward_train(d_in, &mut params.decoders[i])?;
        dec.push(cache);
        cur = out;
    }
    debug_assert_eq!(cur.shape().c, ch);

    let scores = conv_forward(&cur, &params.classifier)?;
    let probs = softmax_channel(&scores);
    Ok(ForwardCache {
        enc,
        switches,
        bottleneck,
        dec,
        classifier_input: cur,
        probs,
    })
}

/// Inference-mode forward pass: running statistics only, no state mutation,
/// no cache. Safe to call concurrently on shared parameters.
pub fn forward_infer(params: &ModelParams, x: &Tensor) -> Result<Tensor> {
    params.check_input(x)?;
    let depth = params.config.depth;

    let mut switches = Vec::with_capacity(depth);
    let mut skips: Vec<Option<Tensor>> = Vec::with_capacity(depth);
    let mut cur = x.clone();
    for i in 0..depth {
        let pre_pool = block_forward_infer(&cur, &params.encoders[i])?;
        let (pooled, sw) = maxpool_forward(&pre_pool)?;
        switches.push(sw);
        skips.push(Some(pre_pool));
        cur = pooled;
    }
    cur = block_forward_infer(&cur, &params.bottleneck)?;
    for i in 0..depth {
        let enc_idx = depth - 1 - i;
        let up = unpool_forward(&cur, &switches[enc_idx])?;
        let d_in = if params.config.skip_active(i) {
            let skip = skips[enc_idx].take().expect("skip consumed once");
            concat_channels(&up, &skip)?
        } else {
            up
        };
        cur = block_forward_infer(&d_in, &params.decoders[i])?;
    }
    let scores = conv_forward(&cur, &params.classifier)?;
    Ok(softmax_channel(&scores))
}

/// Whole-network backward pass. `grad_probs` is the loss gradient with
/// respect to the softmax output; skip-connection gradients are summed with
/// the pooling-path gradients at each encoder output.
pub fn backward(
    params: &ModelParams,
    cache: &ForwardCache,
    grad_probs: &Tensor,
) -> Result<ParamGrads> {
    backward_full(params, cache, grad_probs).map(|(g, _)| g)
}

/// Gradient of the objective with respect to the network input — the final
/// link of the backward chain, used by the whole-network gradient check.
pub fn backward_input(
    params: &ModelParams,
    cache: &ForwardCache,
    grad_probs: &Tensor,
) -> Result<Tensor> {
    backward_full(params, cache, grad_probs).map(|(_, gi)| gi)
}

fn backward_full(
    params: &ModelParams,
    cache: &ForwardCache,
    grad_probs: &Tensor,
) -> Result<(ParamGrads, Tensor)> {
    let depth = params.config.depth;
    if cache.enc.len() != depth || cache.dec.len() != depth {
        return Err(Error::shape(
            "backward",
            format!("cache with {} blocks", cache.enc.len() + cache.dec.len()),
            format!("depth {depth}"),
        ));
    }
    let ch = params.config.channels;

    let grad_scores = softmax_backward(grad_probs, &cache.probs)?;
    let cls = conv_backward(&cache.classifier_input, &params.classifier, &grad_scores)?;

    let mut dec_grads: Vec<Option<ConvBlockGrads>> = (0..depth).map(|_| None).collect();
    let mut skip_grads: Vec<Option<Tensor>> = (0..depth).map(|_| None).collect();
    let mut grad = cls.input;
    for i in (0..depth).rev() {
        let enc_idx = depth - 1 - i;
        let (grad_d_in, bg) = block_backward(&grad, &params.decoders[i], &cache.dec[i])?;
        dec_grads[i] = Some(bg);
        let grad_up = if params.config.skip_active(i) {
            let (gu, gs) = split_channels(&grad_d_in, ch)?;
            skip_grads[enc_idx] = Some(gs);
            gu
        } else {
            grad_d_in
        };
        grad = unpool_backward(&grad_up, &cache.switches[enc_idx])?;
    }

    let (mut grad, bottleneck_grads) = block_backward(&grad, &params.bottleneck, &cache.bottleneck)?;

    let mut enc_grads: Vec<Option<ConvBlockGrads>> = (0..depth).map(|_| None).collect();
    for i in (0..depth).rev() {
        let mut grad_pre_pool = maxpool_backward(&grad, &cache.switches[i])?;
        if let Some(gs) = skip_grads[i].take() {
            add_assign(&mut grad_pre_pool, &gs)?;
        }
        let (gi, bg) = block_backward(&grad_pre_pool, &params.encoders[i], &cache.enc[i])?;
        enc_grads[i] = Some(bg);
        grad = gi;
    }

    Ok((
        ParamGrads {
            encoders: enc_grads.into_iter().map(Option::unwrap).collect(),
            bottleneck: bottleneck_grads,
            decoders: dec_grads.into_iter().map(Option::unwrap).collect(),
            classifier_kernels: cls.kernels,
            classifier_bias: cls.bias,
        },
        grad,
    ))
}

/// Zero-pads only the right and bottom edges up to multiples of `m`.
fn pad_to_multiple(x: &Tensor, m: usize) -> Tensor {
    let s = x.shape();
    let target_h = s.h.div_ceil(m) * m;
    let target_w = s.w.div_ceil(m) * m;
    if target_h == s.h && target_w == s.w {
        return x.clone();
    }
    let mut out = Tensor::zeros(Shape::new(s.b, s.c, target_h, target_w));
    for b in 0..s.b {
        for c in 0..s.c {
            for y in 0..s.h {
                let src = &x.plane(b, c)[y * s.w..(y + 1) * s.w];
                out.plane_mut(b, c)[y * target_w..y * target_w + s.w].copy_from_slice(src);
            }
        }
    }
    out
}

/// Segments whole B-scans of arbitrary size: pads right/bottom to the next
/// multiple of `2^depth`, runs one inference pass, crops back, and takes the
/// per-pixel argmax. Returns one label map per batch item plus the cropped
/// probability tensor.
pub fn predict(params: &ModelParams, bscan: &Tensor) -> Result<(Vec<LabelMap>, Tensor)> {
    let s = bscan.shape();
    let padded = pad_to_multiple(bscan, params.config.divisor());
    let probs_padded = forward_infer(params, &padded)?;
    let probs = crop(&probs_padded, 0, 0, s.h, s.w)?;
    Ok((argmax_channel(&probs), probs))
}
