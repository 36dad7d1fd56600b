//! The composite training objective: weighted multinomial logistic loss plus
//! a differentiable Dice loss, with an analytic gradient with respect to the
//! softmax probabilities. Weight decay on convolution kernels enters the
//! reported loss value here; its gradient is applied by the optimizer.
//!
//! Conventions used by every routine:
//! * losses are summed over pixels and averaged over batch items,
//! * the Dice term is additionally averaged over classes,
//! * probabilities are clamped below at `P_FLOOR` wherever they are
//!   divided by or passed to `ln`.

use crate::error::{Error, Result};
use crate::tensor::{LabelMap, Shape, Tensor};

/// Smallest probability used in logarithms and denominators.
pub const P_FLOOR: f32 = 1e-7;

/// Guard for near-empty Dice denominators.
const DICE_FLOOR: f64 = 1e-7;

/// Pixel-weighting scheme: every pixel starts at 1, gains `omega1` when any
/// 4-connected neighbor carries a different label, and gains `omega2` when
/// its own label is in `boosted_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightConfig {
    pub omega1: f32,
    pub omega2: f32,
    pub boosted_classes: Vec<u8>,
}

impl Default for WeightConfig {
    /// Boundary boost 10, class boost 5, boosting the seven retinal layers
    /// plus fluid (the under-represented classes; background stays at 1).
    fn default() -> WeightConfig {
        WeightConfig {
            omega1: 10.0,
            omega2: 5.0,
            boosted_classes: vec![1, 2, 3, 4, 5, 6, 7, 9],
        }
    }
}

impl WeightConfig {
    /// All weights 1 regardless of content.
    pub fn unweighted() -> WeightConfig {
        WeightConfig {
            omega1: 0.0,
            omega2: 0.0,
            boosted_classes: Vec::new(),
        }
    }

    fn boosted_lookup(&self) -> [bool; 256] {
        let mut table = [false; 256];
        for &c in &self.boosted_classes {
            table[c as usize] = true;
        }
        table
    }
}

/// Term weights and toggles for the combined objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda1: f32,
    pub lambda2: f32,
    pub lambda3: f32,
    pub use_logistic: bool,
    pub use_dice: bool,
    pub use_weighting: bool,
}

impl Default for LossConfig {
    fn default() -> LossConfig {
        LossConfig {
            lambda1: 1.0,
            lambda2: 0.5,
            lambda3: 1e-4,
            use_logistic: true,
            use_dice: true,
            use_weighting: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.use_logistic && !self.use_dice {
            return Err(Error::Config(
                "at least one loss term must be enabled".into(),
            ));
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 || self.lambda3 < 0.0 {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }

    fn effective_lambda1(&self) -> f64 {
        if self.use_logistic {
            self.lambda1 as f64
        } else {
            0.0
        }
    }

    fn effective_lambda2(&self) -> f64 {
        if self.use_dice {
            self.lambda2 as f64
        } else {
            0.0
        }
    }
}

/// Builds the `(1, 1, H, W)` pixel weight map for one label map. Every
/// value lands in `{1, 1+omega1, 1+omega2, 1+omega1+omega2}`.
pub fn weight_map(labels: &LabelMap, wc: &WeightConfig) -> Tensor {
    let (h, w) = (labels.h, labels.w);
    let boosted = wc.boosted_lookup();
    let mut out = Tensor::zeros(Shape::new(1, 1, h, w));
    let data = out.data_mut();
    for y in 0..h {
        for x in 0..w {
            let l = labels.at(y, x);
            let mut v = 1.0f32;
            let on_boundary = (y > 0 && labels.at(y - 1, x) != l)
                || (y + 1 < h && labels.at(y + 1, x) != l)
                || (x > 0 && labels.at(y, x - 1) != l)
                || (x + 1 < w && labels.at(y, x + 1) != l);
            if on_boundary {
                v += wc.omega1;
            }
            if boosted[l as usize] {
                v += wc.omega2;
            }
            data[y * w + x] = v;
        }
    }
    out
}

/// Expands a label map to its `(1, K, H, W)` indicator tensor: exactly one
/// 1 per pixel, at the channel of the true class.
pub fn one_hot(labels: &LabelMap, num_classes: usize) -> Tensor {
    let (h, w) = (labels.h, labels.w);
    let mut out = Tensor::zeros(Shape::new(1, num_classes, h, w));
    for y in 0..h {
        for x in 0..w {
            *out.at_mut(0, labels.at(y, x) as usize, y, x) = 1.0;
        }
    }
    out
}

fn check_loss_shapes(probs: &Tensor, onehot: &Tensor, weights: Option<&Tensor>) -> Result<()> {
    if probs.shape() != onehot.shape() {
        return Err(Error::shape("loss", probs.shape(), onehot.shape()));
    }
    if let Some(w) = weights {
        let (ps, ws) = (probs.shape(), w.shape());
        if ws.b != ps.b || ws.c != 1 || ws.h != ps.h || ws.w != ps.w {
            return Err(Error::shape("loss weights", ws, ps));
        }
    }
    Ok(())
}

/// Weighted logistic loss: `-sum over pixels of w(x) * ln p_true(x)`,
/// averaged over batch items. Zero exactly when the true-class probability
/// is 1 everywhere.
pub fn logistic_loss(probs: &Tensor, onehot: &Tensor, weights: &Tensor) -> Result<f64> {
    check_loss_shapes(probs, onehot, Some(weights))?;
    let s = probs.shape();
    let hw = s.h * s.w;
    let mut total = 0.0f64;
    for b in 0..s.b {
        let w_plane = weights.plane(b, 0);
        for c in 0..s.c {
            let p = probs.plane(b, c);
            let g = onehot.plane(b, c);
            for i in 0..hw {
                if g[i] != 0.0 {
                    total -= w_plane[i] as f64 * (p[i].max(P_FLOOR) as f64).ln();
                }
            }
        }
    }
    Ok(total / s.b as f64)
}

/// Per-class soft Dice statistics for one batch item:
/// numerator `N = sum(p * g)` and denominator `D = sum(p^2) + sum(g^2)`.
fn dice_terms(probs: &Tensor, onehot: &Tensor, b: usize, c: usize) -> (f64, f64) {
    let mut n = 0.0f64;
    let mut d = 0.0f64;
    for (&p, &g) in probs.plane(b, c).iter().zip(onehot.plane(b, c)) {
        n += p as f64 * g as f64;
        d += p as f64 * p as f64 + g as f64 * g as f64;
    }
    (n, d)
}

/// Soft Dice loss: per class `1 - 2N/D`, averaged over classes and batch
/// items. Classes with no prediction mass and no ground truth contribute 0.
pub fn dice_loss(probs: &Tensor, onehot: &Tensor) -> Result<f64> {
    check_loss_shapes(probs, onehot, None)?;
    let s = probs.shape();
    let mut total = 0.0f64;
    for b in 0..s.b {
        for c in 0..s.c {
            let (n, d) = dice_terms(probs, onehot, b, c);
            if d > DICE_FLOOR {
                total += 1.0 - 2.0 * n / d;
            }
        }
    }
    Ok(total / (s.b * s.c) as f64)
}

/// Analytic gradient of the weighted composite loss with respect to the
/// probabilities, matching the normalization of [`logistic_loss`] and
/// [`dice_loss`]:
///
/// * logistic term per pixel: `-w(x) * g_l(x) / p_l(x)`,
/// * Dice term per pixel: `-2 * (g_l(x) * D - 2 p_l(x) * N) / D^2`.
///
/// The weight-decay term does not depend on probabilities; the optimizer
/// applies its gradient directly to the kernels.
pub fn loss_gradient(
    probs: &Tensor,
    onehot: &Tensor,
    weights: &Tensor,
    lc: &LossConfig,
) -> Result<Tensor> {
    check_loss_shapes(probs, onehot, Some(weights))?;
    lc.validate()?;
    let s = probs.shape();
    let hw = s.h * s.w;
    let l1 = lc.effective_lambda1() / s.b as f64;
    let l2 = lc.effective_lambda2() / (s.b * s.c) as f64;
    let mut grad = Tensor::zeros(s);
    for b in 0..s.b {
        let w_plane = weights.plane(b, 0);
        for c in 0..s.c {
            let p = probs.plane(b, c);
            let g = onehot.plane(b, c);
            let (n, d) = if l2 != 0.0 {
                dice_terms(probs, onehot, b, c)
            } else {
                (0.0, 0.0)
            };
            let dice_active = l2 != 0.0 && d > DICE_FLOOR;
            let out = grad.plane_mut(b, c);
            for i in 0..hw {
                let mut dv = 0.0f64;
                if l1 != 0.0 && g[i] != 0.0 {
                    dv -= l1 * w_plane[i] as f64 / p[i].max(P_FLOOR) as f64;
                }
                if dice_active {
                    dv -= l2 * 2.0 * (g[i] as f64 * d - 2.0 * p[i] as f64 * n) / (d * d);
                }
                out[i] = dv as f32;
            }
        }
    }
    Ok(grad)
}

/// Scalar objective `lambda1 * J_logistic + lambda2 * J_dice + lambda3 *
/// sum of squared kernel entries`. `kernels` carries every convolution
/// kernel tensor in the model; biases and normalization parameters are not
/// regularized.
pub fn combined_loss(
    probs: &Tensor,
    onehot: &Tensor,
    weights: &Tensor,
    kernels: &[&Tensor],
    lc: &LossConfig,
) -> Result<f64> {
    lc.validate()?;
    let mut total = 0.0f64;
    let l1 = lc.effective_lambda1();
    if l1 != 0.0 {
        total += l1 * logistic_loss(probs, onehot, weights)?;
    }
    let l2 = lc.effective_lambda2();
    if l2 != 0.0 {
        total += l2 * dice_loss(probs, onehot)?;
    }
    if lc.lambda3 != 0.0 {
        let sq_norm: f64 = kernels
            .iter()
            .flat_map(|k| k.data())
            .map(|&v| v as f64 * v as f64)
            .sum();
        total += lc.lambda3 as f64 * sq_norm;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    fn labels_from_rows(rows: &[&[u8]]) -> LabelMap {
        let h = rows.len();
        let w = rows[0].len();
        LabelMap::new(h, w, rows.concat())
    }

    #[test]
    fn uniform_non_boosted_map_is_all_ones() {
        let labels = LabelMap::filled(4, 4, 0); // background is not boosted
        let wm = weight_map(&labels, &WeightConfig::default());
        assert!(wm.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn horizontal_boundary_between_boosted_classes() {
        // classes 3 and 4 are both boosted; rows adjacent to the interface
        // get 1 + 10 + 5 = 16, other rows 1 + 5 = 6
        let labels = labels_from_rows(&[
            &[3, 3, 3, 3],
            &[3, 3, 3, 3],
            &[4, 4, 4, 4],
            &[4, 4, 4, 4],
        ]);
        let wm = weight_map(&labels, &WeightConfig::default());
        for x in 0..4 {
            assert_eq!(wm.at(0, 0, 0, x), 6.0);
            assert_eq!(wm.at(0, 0, 1, x), 16.0);
            assert_eq!(wm.at(0, 0, 2, x), 16.0);
            assert_eq!(wm.at(0, 0, 3, x), 6.0);
        }
    }

    #[test]
    fn weight_map_matches_brute_force_scan() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let wc = WeightConfig::default();
        let labels = LabelMap::new(8, 8, (0..64).map(|_| rng.random_range(0..10u8)).collect());
        let wm = weight_map(&labels, &wc);
        // independent oracle: enumerate all in-bounds neighbors per pixel
        for y in 0..8usize {
            for x in 0..8usize {
                let l = labels.at(y, x);
                let mut expected = 1.0f32;
                let mut boundary = false;
                for (dy, dx) in [(-1i32, 0i32), (1, 0), (0, -1), (0, 1)] {
                    let (ny, nx) = (y as i32 + dy, x as i32 + dx);
                    if ny >= 0 && ny < 8 && nx >= 0 && nx < 8 {
                        boundary |= labels.at(ny as usize, nx as usize) != l;
                    }
                }
                if boundary {
                    expected += wc.omega1;
                }
                if wc.boosted_classes.contains(&l) {
                    expected += wc.omega2;
                }
                assert_eq!(wm.at(0, 0, y, x), expected, "pixel ({y},{x})");
            }
        }
    }

    #[test]
    fn weight_values_come_from_four_value_set() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(22);
        let wc = WeightConfig::default();
        let allowed = [
            1.0,
            1.0 + wc.omega1,
            1.0 + wc.omega2,
            1.0 + wc.omega1 + wc.omega2,
        ];
        for _ in 0..20 {
            let labels =
                LabelMap::new(6, 6, (0..36).map(|_| rng.random_range(0..10u8)).collect());
            let wm = weight_map(&labels, &wc);
            for &v in wm.data() {
                assert!(allowed.contains(&v), "unexpected weight {v}");
            }
        }
    }

    #[test]
    fn unweighted_config_matches_zeroed_boosts() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let labels = LabelMap::new(6, 6, (0..36).map(|_| rng.random_range(0..10u8)).collect());
        let a = weight_map(&labels, &WeightConfig::unweighted());
        let zeroed = WeightConfig {
            omega1: 0.0,
            omega2: 0.0,
            ..WeightConfig::default()
        };
        let b = weight_map(&labels, &zeroed);
        assert_eq!(a, b);
        assert!(a.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn one_hot_single_indicator_per_pixel() {
        let labels = labels_from_rows(&[&[0, 9], &[5, 1]]);
        let oh = one_hot(&labels, 10);
        assert_eq!(oh.shape(), Shape::new(1, 10, 2, 2));
        for y in 0..2 {
            for x in 0..2 {
                let sum: f32 = (0..10).map(|c| oh.at(0, c, y, x)).sum();
                assert_eq!(sum, 1.0);
                assert_eq!(oh.at(0, labels.at(y, x) as usize, y, x), 1.0);
            }
        }
    }

    #[test]
    fn logistic_loss_zero_iff_perfect() {
        let labels = labels_from_rows(&[&[0, 1], &[1, 0]]);
        let oh = one_hot(&labels, 2);
        let w = Tensor::filled(Shape::new(1, 1, 2, 2), 1.0);
        assert_eq!(logistic_loss(&oh, &oh, &w).unwrap(), 0.0);
    }

    #[test]
    fn logistic_loss_half_probability_is_ln2() {
        let labels = LabelMap::filled(1, 1, 0);
        let oh = one_hot(&labels, 2);
        let probs = Tensor::from_vec(Shape::new(1, 2, 1, 1), vec![0.5, 0.5]);
        let w = Tensor::filled(Shape::new(1, 1, 1, 1), 1.0);
        let loss = logistic_loss(&probs, &oh, &w).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-7);
    }

    #[test]
    fn logistic_loss_scales_with_weights_and_batch() {
        let labels = LabelMap::filled(1, 2, 0);
        let oh = one_hot(&labels, 2);
        let probs = Tensor::from_vec(Shape::new(1, 2, 1, 2), vec![0.5, 0.5, 0.5, 0.5]);
        let w = Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![1.0, 16.0]);
        let loss = logistic_loss(&probs, &oh, &w).unwrap();
        assert!((loss - 17.0 * std::f64::consts::LN_2).abs() < 1e-6);
    }

    #[test]
    fn dice_loss_zero_for_exact_binary_match() {
        let labels = labels_from_rows(&[&[0, 1, 2, 1]]);
        let oh = one_hot(&labels, 3);
        assert_eq!(dice_loss(&oh, &oh).unwrap(), 0.0);
    }

    #[test]
    fn dice_loss_uniform_half_two_classes() {
        // Two classes, each the truth on half the pixels, prediction 0.5
        // everywhere: per class N = 0.25 * total, D = 0.75 * total, so the
        // per-class loss is 1 - 2/3 = 1/3, and so is the average.
        let labels = labels_from_rows(&[&[0, 0, 1, 1]]);
        let oh = one_hot(&labels, 2);
        let probs = Tensor::filled(Shape::new(1, 2, 1, 4), 0.5);
        let loss = dice_loss(&probs, &oh).unwrap();
        assert!((loss - 1.0 / 3.0).abs() < 1e-7);
    }

    #[test]
    fn dice_loss_skips_classes_absent_everywhere() {
        // class 2 never appears in truth or prediction; with the guard it
        // contributes 0 rather than 1
        let labels = labels_from_rows(&[&[0, 1]]);
        let oh = one_hot(&labels, 3);
        let loss = dice_loss(&oh, &oh).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn dice_loss_bounded_per_class() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(25);
        for seed in 0..10 {
            let labels =
                LabelMap::new(4, 4, (0..16).map(|_| rng.random_range(0..3u8)).collect());
            let oh = one_hot(&labels, 3);
            let mut raw = Tensor::from_fn(Shape::new(1, 3, 4, 4), |_, _, _, _| {
                rng.random_range(-2.0f32..2.0)
            });
            let probs = crate::layers::softmax_channel(&mut raw);
            let loss = dice_loss(&probs, &oh).unwrap();
            assert!((0.0..=1.0).contains(&loss), "seed {seed}: {loss}");
        }
    }

    #[test]
    fn gradient_perfect_prediction_logistic_only() {
        let labels = LabelMap::filled(1, 1, 0);
        let oh = one_hot(&labels, 2);
        let w = Tensor::filled(Shape::new(1, 1, 1, 1), 1.0);
        let lc = LossConfig {
            lambda1: 1.0,
            lambda2: 0.0,
            use_dice: false,
            ..Default::default()
        };
        let g = loss_gradient(&oh, &oh, &w, &lc).unwrap();
        assert_eq!(g.at(0, 0, 0, 0), -1.0);
        assert_eq!(g.at(0, 1, 0, 0), 0.0);
    }

    #[test]
    fn gradient_dice_vanishes_at_binary_optimum() {
        let labels = labels_from_rows(&[&[0, 1], &[1, 0]]);
        let oh = one_hot(&labels, 2);
        let w = Tensor::filled(Shape::new(1, 1, 2, 2), 1.0);
        let lc = LossConfig {
            lambda1: 0.0,
            lambda2: 0.5,
            use_logistic: false,
            ..Default::default()
        };
        let g = loss_gradient(&oh, &oh, &w, &lc).unwrap();
        // at true-class pixels of fully covered classes: g*D - 2p*N =
        // 2N - 2N = 0; at zero pixels: -2*(0 - 0)/D^2 = 0
        for &v in g.data() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // central differences of the combined loss (lambda3 = 0) over raw
        // probabilities on random 2-class problems
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(26);
        let lc = LossConfig {
            lambda1: 1.0,
            lambda2: 0.5,
            lambda3: 0.0,
            ..Default::default()
        };
        for trial in 0..5 {
            let labels =
                LabelMap::new(4, 4, (0..16).map(|_| rng.random_range(0..2u8)).collect());
            let oh = one_hot(&labels, 2);
            let wm = weight_map(&labels, &WeightConfig::default());
            let probs = Tensor::from_fn(Shape::new(1, 2, 4, 4), |_, _, _, _| {
                rng.random_range(0.1f32..0.9)
            });
            let analytic = loss_gradient(&probs, &oh, &wm, &lc).unwrap();

            let h = 1e-3f32;
            let mut max_rel = 0.0f64;
            for i in 0..probs.data().len() {
                let mut plus = probs.clone();
                plus.data_mut()[i] += h;
                let mut minus = probs.clone();
                minus.data_mut()[i] -= h;
                let fp = combined_loss(&plus, &oh, &wm, &[], &lc).unwrap();
                let fm = combined_loss(&minus, &oh, &wm, &[], &lc).unwrap();
                let numeric = (fp - fm) / (2.0 * h as f64);
                let a = analytic.data()[i] as f64;
                let rel = (a - numeric).abs() / numeric.abs().max(1.0);
                max_rel = max_rel.max(rel);
            }
            assert!(max_rel <= 1e-3, "trial {trial}: max rel err {max_rel}");
        }
    }

    #[test]
    fn combined_loss_pure_weight_decay() {
        let labels = LabelMap::filled(1, 1, 0);
        let oh = one_hot(&labels, 2);
        let w = Tensor::filled(Shape::new(1, 1, 1, 1), 1.0);
        let k1 = Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![2.0, -1.0]);
        let k2 = Tensor::from_vec(Shape::new(1, 1, 1, 1), vec![3.0]);
        let lc = LossConfig {
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 0.5,
            use_logistic: true, // enabled but weightless terms still validate
            use_dice: true,
            use_weighting: true,
        };
        let loss = combined_loss(&oh, &oh, &w, &[&k1, &k2], &lc).unwrap();
        assert!((loss - 0.5 * 14.0).abs() < 1e-9);
    }

    #[test]
    fn combined_loss_zero_at_perfect_prediction_without_decay() {
        let labels = labels_from_rows(&[&[0, 1]]);
        let oh = one_hot(&labels, 2);
        let w = Tensor::filled(Shape::new(1, 1, 1, 2), 1.0);
        let lc = LossConfig {
            lambda3: 0.0,
            ..Default::default()
        };
        assert_eq!(combined_loss(&oh, &oh, &w, &[], &lc).unwrap(), 0.0);
    }

    #[test]
    fn config_requires_a_loss_term() {
        let lc = LossConfig {
            use_logistic: false,
            use_dice: false,
            ..Default::default()
        };
        assert!(lc.validate().is_err());
    }
}
