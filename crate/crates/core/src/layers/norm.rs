//! Per-channel batch normalization over `(B, H, W)`.
//!
//! Training mode normalizes with the current mini-batch's mean and biased
//! variance and folds those statistics into the running estimates; inference
//! mode normalizes with the running estimates alone, so single scans
//! evaluate independently of batch composition.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BN_EPS: f32 = 1e-5;

/// Blend factor for the running statistics:
/// `running = (1 - momentum) * running + momentum * batch`.
pub const BN_MOMENTUM: f32 = 0.1;

/// Learnable scale/shift plus the running statistics, all per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
}

impl BatchNormParams {
    /// Identity transform: gamma 1, beta 0, running stats (0, 1).
    pub fn identity(channels: usize) -> BatchNormParams {
        BatchNormParams {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// Values saved by the training forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    /// Normalized input before scale/shift.
    pub xhat: Tensor,
    /// `1 / sqrt(var + eps)` per channel.
    pub inv_std: Vec<f32>,
}

fn check_channels(x: &Tensor, params: &BatchNormParams, context: &'static str) -> Result<()> {
    if x.shape().c != params.channels() {
        return Err(Error::shape(
            context,
            x.shape(),
            format!("{} normalization channels", params.channels()),
        ));
    }
    Ok(())
}

/// Normalizes with mini-batch statistics, updates the running estimates in
/// place, and returns the output plus the cache the backward pass needs.
pub fn batchnorm_train_forward(
    x: &Tensor,
    params: &mut BatchNormParams,
) -> Result<(Tensor, BatchNormCache)> {
    check_channels(x, params, "batchnorm_train_forward")?;
    let s = x.shape();
    let n = (s.b * s.h * s.w) as f64;
    if n < 2.0 {
        return Err(Error::Numeric(
            "batch normalization needs at least 2 values per channel".into(),
        ));
    }

    let mut out = Tensor::zeros(s);
    let mut xhat = Tensor::zeros(s);
    let mut inv_std = vec![0.0f32; s.c];
    for c in 0..s.c {
        let mut sum = 0.0f64;
        let mut sum_sq = 0.0f64;
        for b in 0..s.b {
            for &v in x.plane(b, c) {
                sum += v as f64;
                sum_sq += (v as f64) * (v as f64);
            }
        }
        let mean = sum / n;
        let var = (sum_sq / n - mean * mean).max(0.0); // biased
        let istd = 1.0 / (var + BN_EPS as f64).sqrt();
        inv_std[c] = istd as f32;

        params.running_mean[c] =
            (1.0 - BN_MOMENTUM) * params.running_mean[c] + BN_MOMENTUM * mean as f32;
        params.running_var[c] =
            (1.0 - BN_MOMENTUM) * params.running_var[c] + BN_MOMENTUM * var as f32;

        let (gamma, beta) = (params.gamma[c], params.beta[c]);
        let (mean, istd) = (mean as f32, istd as f32);
        for b in 0..s.b {
            let xin = x.plane(b, c);
            let xh = xhat.plane_mut(b, c);
            for (h, &v) in xh.iter_mut().zip(xin) {
                *h = (v - mean) * istd;
            }
            let y = out.plane_mut(b, c);
            for (o, &h) in y.iter_mut().zip(xhat.plane(b, c)) {
                *o = gamma * h + beta;
            }
        }
    }
    Ok((out, BatchNormCache { xhat, inv_std }))
}

/// Normalizes with the running statistics; no state is touched.
pub fn batchnorm_infer_forward(x: &Tensor, params: &BatchNormParams) -> Result<Tensor> {
    check_channels(x, params, "batchnorm_infer_forward")?;
    let s = x.shape();
    let mut out = Tensor::zeros(s);
    for c in 0..s.c {
        let istd = 1.0 / (params.running_var[c] + BN_EPS).sqrt();
        let (mean, gamma, beta) = (params.running_mean[c], params.gamma[c], params.beta[c]);
        for b in 0..s.b {
            let xin = x.plane(b, c);
            let y = out.plane_mut(b, c);
            for (o, &v) in y.iter_mut().zip(xin) {
                *o = gamma * (v - mean) * istd + beta;
            }
        }
    }
    Ok(out)
}

/// Gradients through the batch-statistics normalization:
/// `dx = inv_std / N * (N * dxhat - sum(dxhat) - xhat * sum(dxhat * xhat))`
/// with `dxhat = gamma * dy`, plus `dgamma = sum(dy * xhat)` and
/// `dbeta = sum(dy)`.
pub fn batchnorm_backward(
    grad_out: &Tensor,
    cache: &BatchNormCache,
    params: &BatchNormParams,
) -> Result<(Tensor, Vec<f32>, Vec<f32>)> {
    let s = cache.xhat.shape();
    if grad_out.shape() != s {
        return Err(Error::shape("batchnorm_backward", grad_out.shape(), s));
    }
    let n = (s.b * s.h * s.w) as f64;
    let mut grad_input = Tensor::zeros(s);
    let mut grad_gamma = vec![0.0f32; s.c];
    let mut grad_beta = vec![0.0f32; s.c];

    for c in 0..s.c {
        let gamma = params.gamma[c] as f64;
        let istd = cache.inv_std[c] as f64;
        let mut sum_dy = 0.0f64;
        let mut sum_dy_xhat = 0.0f64;
        for b in 0..s.b {
            for (&dy, &xh) in grad_out.plane(b, c).iter().zip(cache.xhat.plane(b, c)) {
                sum_dy += dy as f64;
                sum_dy_xhat += dy as f64 * xh as f64;
            }
        }
        grad_beta[c] = sum_dy as f32;
        grad_gamma[c] = sum_dy_xhat as f32;

        let scale = gamma * istd / n;
        for b in 0..s.b {
            let dys = grad_out.plane(b, c);
            let xhs = cache.xhat.plane(b, c);
            let dxs = grad_input.plane_mut(b, c);
            for ((dx, &dy), &xh) in dxs.iter_mut().zip(dys).zip(xhs) {
                *dx = (scale * (n * dy as f64 - sum_dy - xh as f64 * sum_dy_xhat)) as f32;
            }
        }
    }
    Ok((grad_input, grad_gamma, grad_beta))
}
