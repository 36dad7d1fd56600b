//! Stochastic mini-batch gradient descent with momentum, weight decay on
//! convolution kernels, and a stepwise learning-rate decay schedule.
//!
//! Update rule per parameter tensor:
//!
//! ```text
//! g' = g + 2 * lambda3 * W   (kernels only; biases/BN are not decayed)
//! v  = momentum * v - lr * g'
//! W  = W + v
//! ```

use crate::error::{Error, Result};
use crate::model::{ConvBlockGrads, ModelParams, ParamGrads};
use crate::tensor::Tensor;

/// Momentum buffers plus the schedule hyperparameters.
///
/// `base_lr` and `decay_factor` are kept in double precision so the
/// schedule `base_lr * decay_factor^k` evaluates exactly to the decimal
/// values users expect before the final rounding to `f32`.
#[derive(Debug, Clone)]
pub struct OptimState {
    pub momentum: f32,
    pub base_lr: f64,
    pub decay_every: usize,
    pub decay_factor: f64,
    pub lambda3: f32,
    pub velocities: ParamGrads,
}

impl OptimState {
    /// Reference-schedule optimizer: lr 0.1 decaying by 10x every 30
    /// epochs, momentum 0.9, weight decay from the loss configuration.
    pub fn new(params: &ModelParams, lambda3: f32) -> OptimState {
        OptimState {
            momentum: 0.9,
            base_lr: 0.1,
            decay_every: 30,
            decay_factor: 0.1,
            lambda3,
            velocities: ParamGrads::zeros_like(params),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.base_lr <= 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.base_lr
            )));
        }
        if self.decay_every == 0 {
            return Err(Error::Config("decay_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Learning rate for `epoch`:
    /// `base_lr * decay_factor^(epoch / decay_every)` (integer division).
    pub fn lr_at(&self, epoch: usize) -> f32 {
        let k = (epoch / self.decay_every) as i32;
        (self.base_lr * self.decay_factor.powi(k)) as f32
    }
}

/// One momentum-SGD update on a flat slice; `g_eff` already includes any
/// decay term.
fn sgd_update(w: &mut [f32], v: &mut [f32], g_eff: impl Iterator<Item = f32>, momentum: f32, lr: f32) {
    for ((w, v), g) in w.iter_mut().zip(v.iter_mut()).zip(g_eff) {
        *v = momentum * *v - lr * g;
        *w += *v;
    }
}

fn update_plain(w: &mut [f32], v: &mut [f32], g: &[f32], momentum: f32, lr: f32) {
    sgd_update(w, v, g.iter().copied(), momentum, lr);
}

fn update_kernels(w: &mut Tensor, v: &mut Tensor, g: &Tensor, momentum: f32, lr: f32, lambda3: f32) {
    // borrow w's data once: decay term reads the pre-update weights, which
    // is sound because each element is read before it is written
    let decay = 2.0 * lambda3;
    let (wd, vd, gd) = (w.data_mut(), v.data_mut(), g.data());
    for i in 0..wd.len() {
        let g_eff = gd[i] + decay * wd[i];
        vd[i] = momentum * vd[i] - lr * g_eff;
        wd[i] += vd[i];
    }
}

fn block_has_nonfinite(g: &ConvBlockGrads) -> bool {
    g.kernels.data().iter().any(|v| !v.is_finite())
        || g.bias.iter().any(|v| !v.is_finite())
        || g.gamma.iter().any(|v| !v.is_finite())
        || g.beta.iter().any(|v| !v.is_finite())
}

fn check_finite(grads: &ParamGrads) -> Result<()> {
    let bad = grads.encoders.iter().any(block_has_nonfinite)
        || block_has_nonfinite(&grads.bottleneck)
        || grads.decoders.iter().any(block_has_nonfinite)
        || grads.classifier_kernels.data().iter().any(|v| !v.is_finite())
        || grads.classifier_bias.iter().any(|v| !v.is_finite());
    if bad {
        return Err(Error::Numeric(
            "non-finite gradient; step aborted before any parameter update".into(),
        ));
    }
    Ok(())
}

fn update_block(
    p: &mut crate::model::ConvBlockParams,
    v: &mut ConvBlockGrads,
    g: &ConvBlockGrads,
    momentum: f32,
    lr: f32,
    lambda3: f32,
) {
    update_kernels(&mut p.conv.kernels, &mut v.kernels, &g.kernels, momentum, lr, lambda3);
    update_plain(&mut p.conv.bias, &mut v.bias, &g.bias, momentum, lr);
    update_plain(&mut p.bn.gamma, &mut v.gamma, &g.gamma, momentum, lr);
    update_plain(&mut p.bn.beta, &mut v.beta, &g.beta, momentum, lr);
}

/// Applies one optimizer step in place. If any gradient entry is NaN or
/// infinite the step errors out before touching parameters or velocities.
pub fn step(
    params: &mut ModelParams,
    grads: &ParamGrads,
    st: &mut OptimState,
    lr: f32,
) -> Result<()> {
    check_finite(grads)?;
    let (m, l3) = (st.momentum, st.lambda3);
    for (i, g) in grads.encoders.iter().enumerate() {
        update_block(&mut params.encoders[i], &mut st.velocities.encoders[i], g, m, lr, l3);
    }
    update_block(&mut params.bottleneck, &mut st.velocities.bottleneck, &grads.bottleneck, m, lr, l3);
    for (i, g) in grads.decoders.iter().enumerate() {
        update_block(&mut params.decoders[i], &mut st.velocities.decoders[i], g, m, lr, l3);
    }
    update_kernels(
        &mut params.classifier.kernels,
        &mut st.velocities.classifier_kernels,
        &grads.classifier_kernels,
        m,
        lr,
        l3,
    );
    update_plain(
        &mut params.classifier.bias,
        &mut st.velocities.classifier_bias,
        &grads.classifier_bias,
        m,
        lr,
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelConfig, SkipMode};

    fn tiny_params() -> ModelParams {
        init_params(
            ModelConfig {
                depth: 2,
                channels: 2,
                kernel_h: 3,
                kernel_w: 3,
                num_classes: 2,
                skip_mode: SkipMode::Full,
            },
            8,
        )
        .unwrap()
    }

    fn tiny_state(params: &ModelParams, momentum: f32, lambda3: f32) -> OptimState {
        OptimState {
            momentum,
            lambda3,
            ..OptimState::new(params, lambda3)
        }
    }

    #[test]
    fn schedule_hits_decimal_rates_exactly() {
        let params = tiny_params();
        let st = OptimState::new(&params, 1e-4);
        assert_eq!(st.lr_at(0).to_bits(), 0.1f32.to_bits());
        assert_eq!(st.lr_at(29).to_bits(), 0.1f32.to_bits());
        assert_eq!(st.lr_at(30).to_bits(), 0.01f32.to_bits());
        assert_eq!(st.lr_at(59).to_bits(), 0.01f32.to_bits());
        assert_eq!(st.lr_at(60).to_bits(), 0.001f32.to_bits());
        assert_eq!(st.lr_at(90).to_bits(), 0.0001f32.to_bits());
    }

    #[test]
    fn unit_decay_factor_keeps_lr_constant() {
        let params = tiny_params();
        let st = OptimState {
            decay_factor: 1.0,
            ..OptimState::new(&params, 0.0)
        };
        for epoch in [0, 30, 61, 300] {
            assert_eq!(st.lr_at(epoch), 0.1);
        }
    }

    #[test]
    fn zero_momentum_zero_decay_is_vanilla_sgd() {
        let mut params = tiny_params();
        let before = params.clone();
        let mut grads = ParamGrads::zeros_like(&params);
        for v in grads.encoders[0].kernels.data_mut() {
            *v = 2.0;
        }
        let mut st = tiny_state(&params, 0.0, 0.0);
        step(&mut params, &grads, &mut st, 0.05).unwrap();
        for (i, (&w, &w0)) in params.encoders[0]
            .conv
            .kernels
            .data()
            .iter()
            .zip(before.encoders[0].conv.kernels.data())
            .enumerate()
        {
            assert!((w - (w0 - 0.05 * 2.0)).abs() < 1e-7, "kernel entry {i}");
        }
        // untouched tensors stay put
        assert_eq!(params.bottleneck, before.bottleneck);
        assert_eq!(params.classifier, before.classifier);
    }

    #[test]
    fn zero_gradient_zero_decay_is_a_noop() {
        let mut params = tiny_params();
        let before = params.clone();
        let grads = ParamGrads::zeros_like(&params);
        let mut st = tiny_state(&params, 0.9, 0.0);
        step(&mut params, &grads, &mut st, 0.1).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn momentum_unrolls_over_two_steps() {
        // constant gradient, momentum 0.9: after step 1 the displacement is
        // -lr*g, after step 2 it is -lr*g*(1 + 1.9)
        let mut params = tiny_params();
        let w0 = params.classifier.bias.clone();
        let mut grads = ParamGrads::zeros_like(&params);
        for v in grads.classifier_bias.iter_mut() {
            *v = 3.0;
        }
        let mut st = tiny_state(&params, 0.9, 0.0);
        let lr = 0.01f32;

        step(&mut params, &grads, &mut st, lr).unwrap();
        for (&w, &w0) in params.classifier.bias.iter().zip(&w0) {
            assert!((w - (w0 - lr * 3.0)).abs() < 1e-7);
        }
        step(&mut params, &grads, &mut st, lr).unwrap();
        for (&w, &w0) in params.classifier.bias.iter().zip(&w0) {
            assert!((w - (w0 - lr * 3.0 * (1.0 + 1.9))).abs() < 1e-6);
        }
    }

    #[test]
    fn weight_decay_shrinks_kernels_without_loss_gradient() {
        let mut params = tiny_params();
        let before = params.encoders[0].conv.kernels.clone();
        let grads = ParamGrads::zeros_like(&params);
        let lambda3 = 0.01f32;
        let mut st = tiny_state(&params, 0.0, lambda3);
        let lr = 0.1f32;
        step(&mut params, &grads, &mut st, lr).unwrap();
        for (&w, &w0) in params.encoders[0]
            .conv
            .kernels
            .data()
            .iter()
            .zip(before.data())
        {
            // W - lr * 2 * lambda3 * W = W * (1 - 0.002)
            assert!((w - w0 * (1.0 - lr * 2.0 * lambda3)).abs() < 1e-7);
        }
        // biases are not decayed
        assert!(params.encoders[0].conv.bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn quadratic_iterates_contract() {
        // f(w) = w^2 / 2, grad = w: plain gradient descent contracts
        // monotonically for lr < 2
        for lr in [0.1f32, 0.5, 1.0, 1.9] {
            let mut w = [5.0f32];
            let mut v = [0.0f32];
            let mut prev = w[0].abs();
            for _ in 0..50 {
                let g = [w[0]];
                update_plain(&mut w, &mut v, &g, 0.0, lr);
                assert!(w[0].abs() <= prev + 1e-6, "lr {lr} diverged: {} > {prev}", w[0]);
                prev = w[0].abs();
            }
            assert!(prev < 5.0);
        }
    }

    #[test]
    fn nan_gradient_aborts_without_mutation() {
        let mut params = tiny_params();
        let before = params.clone();
        let mut grads = ParamGrads::zeros_like(&params);
        // poison a late tensor so earlier blocks would already have been
        // touched if the check were interleaved with updates
        grads.classifier_bias[0] = f32::NAN;
        for v in grads.encoders[0].kernels.data_mut() {
            *v = 1.0;
        }
        let mut st = tiny_state(&params, 0.9, 1e-4);
        let vel_before = st.velocities.encoders[0].kernels.clone();
        let err = step(&mut params, &grads, &mut st, 0.1).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert_eq!(params, before);
        assert_eq!(st.velocities.encoders[0].kernels, vel_before);
    }

    #[test]
    fn steps_are_deterministic() {
        let run = || {
            let mut params = tiny_params();
            let mut grads = ParamGrads::zeros_like(&params);
            for (i, v) in grads.bottleneck.kernels.data_mut().iter_mut().enumerate() {
                *v = (i as f32 * 0.37).sin();
            }
            let mut st = tiny_state(&params, 0.9, 1e-4);
            for _ in 0..5 {
                step(&mut params, &grads, &mut st, 0.1).unwrap();
            }
            params
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn first_step_is_minus_lr_times_gradient() {
        let mut params = tiny_params();
        let before = params.decoders[0].conv.kernels.clone();
        let mut grads = ParamGrads::zeros_like(&params);
        for (i, v) in grads.decoders[0].kernels.data_mut().iter_mut().enumerate() {
            *v = 0.1 * (i % 7) as f32;
        }
        // velocities start at zero, so momentum contributes nothing yet
        let mut st = tiny_state(&params, 0.9, 0.0);
        step(&mut params, &grads, &mut st, 0.2).unwrap();
        for i in 0..before.data().len() {
            let expected = before.data()[i] - 0.2 * grads.decoders[0].kernels.data()[i];
            assert!((params.decoders[0].conv.kernels.data()[i] - expected).abs() < 1e-7);
        }
    }

    #[test]
    fn state_validation() {
        let params = tiny_params();
        let st = OptimState::new(&params, 1e-4);
        assert!(st.validate().is_ok());
        assert!(OptimState { momentum: 1.0, ..st.clone() }.validate().is_err());
        assert!(OptimState { base_lr: 0.0, ..st.clone() }.validate().is_err());
        assert!(OptimState { decay_every: 0, ..st }.validate().is_err());
    }
}
