//! The training loop: seeded mini-batch assembly, forward pass, composite
//! loss, analytic backward pass, and momentum-SGD updates under the step
//! learning-rate schedule. Entirely deterministic given the run seed.

use crate::config::RunConfig;
use crate::data::{AugmentConfig, BScan, BatchStream};
use crate::error::{Error, Result};
use crate::loss::{combined_loss, loss_gradient};
use crate::model::{backward, forward_train, ModelParams};
use crate::optim;

/// Record of one completed (possibly step-capped) epoch.
#[derive(Debug, Clone)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f32,
    /// Loss of every optimizer step taken this epoch, in step order.
    pub step_losses: Vec<f64>,
}

impl EpochLog {
    pub fn mean_loss(&self) -> f64 {
        if self.step_losses.is_empty() {
            return f64::NAN;
        }
        self.step_losses.iter().sum::<f64>() / self.step_losses.len() as f64
    }
}

/// Full training history.
#[derive(Debug, Clone)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    /// Total optimizer steps taken.
    pub fn steps(&self) -> usize {
        self.epochs.iter().map(|e| e.step_losses.len()).sum()
    }

    /// All step losses across epochs, in step order.
    pub fn step_losses(&self) -> impl Iterator<Item = f64> + '_ {
        self.epochs.iter().flat_map(|e| e.step_losses.iter().copied())
    }
}

/// Trains `params` in place on `scans` under `cfg`. `on_epoch` runs after
/// each completed epoch with the epoch record and the updated parameters —
/// the place to print progress and write periodic checkpoints; an error from
/// it stops training.
///
/// A non-finite loss or gradient aborts with a numeric error; `params` keeps
/// the weights of the last completed step, so the caller can still save
/// them.
pub fn train(
    cfg: &RunConfig,
    scans: &[BScan],
    params: &mut ModelParams,
    mut on_epoch: impl FnMut(&EpochLog, &ModelParams) -> Result<()>,
) -> Result<TrainLog> {
    cfg.validate()?;
    if params.config != cfg.model {
        return Err(Error::Config(format!(
            "parameter set was built for {:?} but the run asks for {:?}",
            params.config, cfg.model
        )));
    }

    let stream = BatchStream::new(
        scans,
        cfg.slice_width,
        cfg.batch_size,
        cfg.model.num_classes,
        cfg.weights.clone(),
        cfg.augment.then(AugmentConfig::default),
        cfg.seed,
    )?;
    let mut opt = cfg.optimizer(params);
    let mut log = TrainLog { epochs: Vec::new() };
    let mut steps = 0usize;

    'epochs: for epoch in 0..cfg.epochs {
        let lr = opt.lr_at(epoch);
        let mut entry = EpochLog {
            epoch,
            lr,
            step_losses: Vec::with_capacity(stream.num_batches()),
        };
        for batch in stream.epoch(epoch) {
            let cache = forward_train(params, &batch.images)?;
            let loss = combined_loss(
                &cache.probs,
                &batch.onehots,
                &batch.weights,
                &params.kernel_tensors(),
                &cfg.loss,
            )?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss became {loss} at step {} (epoch {epoch}); parameters kept from the last finite step",
                    steps + 1
                )));
            }
            let grad_probs = loss_gradient(&cache.probs, &batch.onehots, &batch.weights, &cfg.loss)?;
            let grads = backward(params, &cache, &grad_probs)?;
            optim::step(params, &grads, &mut opt, lr)?;
            steps += 1;
            entry.step_losses.push(loss);
            if Some(steps) == cfg.max_steps {
                on_epoch(&entry, params)?;
                log.epochs.push(entry);
                break 'epochs;
            }
        }
        on_epoch(&entry, params)?;
        log.epochs.push(entry);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_phantom, PhantomSpec};
    use crate::model::{init_params, ModelConfig, SkipMode};
    use crate::tensor::Tensor;

    fn tiny_run(seed: u64) -> (RunConfig, Vec<BScan>) {
        let mut cfg = RunConfig::default();
        cfg.model = ModelConfig {
            depth: 2,
            channels: 4,
            kernel_h: 3,
            kernel_w: 3,
            num_classes: 10,
            skip_mode: SkipMode::Full,
        };
        cfg.slice_width = 32;
        cfg.batch_size = 3;
        cfg.epochs = 1;
        cfg.seed = seed;
        let scans: Vec<BScan> = (0..2)
            .map(|i| {
                generate_phantom(&PhantomSpec {
                    height: 96,
                    width: 64,
                    boundary_amplitude: 1.0,
                    seed: 100 + i,
                    ..PhantomSpec::default()
                })
                .unwrap()
            })
            .collect();
        (cfg, scans)
    }

    #[test]
    fn loss_log_has_one_entry_per_batch() {
        let (cfg, scans) = tiny_run(5);
        // 2 scans x (64/32) slices = 4 slices; batches of 3 -> ceil(4/3) = 2
        let mut params = init_params(cfg.model.clone(), 5).unwrap();
        let mut epochs_seen = 0;
        let log = train(&cfg, &scans, &mut params, |e, _| {
            epochs_seen += 1;
            assert_eq!(e.epoch, 0);
            assert_eq!(e.lr, 0.1);
            Ok(())
        })
        .unwrap();
        assert_eq!(epochs_seen, 1);
        assert_eq!(log.epochs.len(), 1);
        assert_eq!(log.epochs[0].step_losses.len(), 2);
        assert_eq!(log.steps(), 2);
        assert!(log.epochs[0].mean_loss().is_finite());
    }

    #[test]
    fn identical_seeds_give_bit_identical_parameters() {
        let run = || {
            let (mut cfg, scans) = tiny_run(9);
            cfg.max_steps = Some(3);
            cfg.epochs = 4;
            let mut params = init_params(cfg.model.clone(), 9).unwrap();
            train(&cfg, &scans, &mut params, |_, _| Ok(())).unwrap();
            params
        };
        let (a, b) = (run(), run());
        for (ta, tb) in a.kernel_tensors().iter().zip(b.kernel_tensors().iter()) {
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(ta), bits(tb));
        }
    }

    #[test]
    fn max_steps_caps_the_run() {
        let (mut cfg, scans) = tiny_run(11);
        cfg.epochs = 10;
        cfg.max_steps = Some(3);
        let mut params = init_params(cfg.model.clone(), 11).unwrap();
        let log = train(&cfg, &scans, &mut params, |_, _| Ok(())).unwrap();
        assert_eq!(log.steps(), 3);
        // step 3 lands mid-epoch 1: epoch 0 contributed 2 steps, epoch 1 one
        assert_eq!(log.epochs.len(), 2);
        assert_eq!(log.epochs[1].step_losses.len(), 1);
    }

    #[test]
    fn poisoned_parameters_abort_with_numeric_error() {
        let (cfg, scans) = tiny_run(13);
        let mut params = init_params(cfg.model.clone(), 13).unwrap();
        params.encoders[0].conv.kernels.data_mut()[0] = f32::NAN;
        let err = train(&cfg, &scans, &mut params, |_, _| Ok(())).unwrap_err();
        assert_eq!(err.exit_code(), 4, "numeric failure: {err}");
    }

    #[test]
    fn wrong_parameter_shape_is_a_config_error() {
        let (cfg, scans) = tiny_run(17);
        let mut other = cfg.model.clone();
        other.channels = 8;
        let mut params = init_params(other, 17).unwrap();
        let err = train(&cfg, &scans, &mut params, |_, _| Ok(())).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }
}
