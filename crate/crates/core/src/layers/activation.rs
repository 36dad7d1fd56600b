//! Pointwise ReLU and the per-pixel channel softmax that turns classifier
//! scores into class probabilities.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `max(0, x)` elementwise.
pub fn relu_forward(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Passes gradient where the forward input was strictly positive and blocks
/// it elsewhere (the subgradient at exactly zero is taken as zero).
pub fn relu_backward(grad_out: &Tensor, x: &Tensor) -> Result<Tensor> {
    if grad_out.shape() != x.shape() {
        return Err(Error::shape("relu_backward", grad_out.shape(), x.shape()));
    }
    let mut grad_input = grad_out.clone();
    for (g, &v) in grad_input.data_mut().iter_mut().zip(x.data()) {
        if v <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(grad_input)
}

/// Softmax over the channel axis, independently per `(batch, y, x)` pixel.
/// The running max is subtracted before exponentiation so arbitrarily large
/// scores stay finite.
pub fn softmax_channel(x: &Tensor) -> Tensor {
    let s = x.shape();
    let hw = s.h * s.w;
    let mut out = Tensor::zeros(s);
    let mut maxes = vec![f32::NEG_INFINITY; hw];
    let mut sums = vec![0.0f32; hw];
    for b in 0..s.b {
        maxes.fill(f32::NEG_INFINITY);
        sums.fill(0.0);
        for c in 0..s.c {
            for (m, &v) in maxes.iter_mut().zip(x.plane(b, c)) {
                if v > *m {
                    *m = v;
                }
            }
        }
        for c in 0..s.c {
            let xin = x.plane(b, c);
            let y = out.plane_mut(b, c);
            for i in 0..hw {
                let e = (xin[i] - maxes[i]).exp();
                y[i] = e;
                sums[i] += e;
            }
        }
        for c in 0..s.c {
            for (v, &sum) in out.plane_mut(b, c).iter_mut().zip(&sums) {
                *v /= sum;
            }
        }
    }
    out
}

/// Jacobian-vector product of [`softmax_channel`]: given probabilities `p`
/// and an upstream gradient `dp`, returns
/// `dz = p * (dp - sum over channels of dp * p)` per pixel.
pub fn softmax_backward(grad_out: &Tensor, probs: &Tensor) -> Result<Tensor> {
    let s = probs.shape();
    if grad_out.shape() != s {
        return Err(Error::shape("softmax_backward", grad_out.shape(), s));
    }
    let hw = s.h * s.w;
    let mut grad_input = Tensor::zeros(s);
    let mut dots = vec![0.0f32; hw];
    for b in 0..s.b {
        dots.fill(0.0);
        for c in 0..s.c {
            let dp = grad_out.plane(b, c);
            let p = probs.plane(b, c);
            for i in 0..hw {
                dots[i] += dp[i] * p[i];
            }
        }
        for c in 0..s.c {
            let dp = grad_out.plane(b, c);
            let p = probs.plane(b, c);
            let dz = grad_input.plane_mut(b, c);
            for i in 0..hw {
                dz[i] = p[i] * (dp[i] - dots[i]);
            }
        }
    }
    Ok(grad_input)
}
