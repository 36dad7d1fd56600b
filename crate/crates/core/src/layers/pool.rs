//! 2x2 stride-2 max pooling with argmax switches, and the unpooling stage
//! that reuses those switches to place values back at the positions the
//! maxima came from.

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Argmax positions recorded by [`maxpool_forward`]: for every pooled cell,
/// the flat index of the winning pixel within its `(H, W)` input plane.
/// Ties go to the first pixel in row-major window order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolSwitches {
    pooled: Shape,
    input_h: usize,
    input_w: usize,
    idx: Vec<u32>,
}

impl PoolSwitches {
    pub fn pooled_shape(&self) -> Shape {
        self.pooled
    }

    pub fn input_shape(&self) -> Shape {
        Shape::new(self.pooled.b, self.pooled.c, self.input_h, self.input_w)
    }

    /// The recorded argmax positions, one per pooled cell in tensor order.
    pub fn indices(&self) -> &[u32] {
        &self.idx
    }
}

/// `(B, C, H, W)` to `(B, C, H/2, W/2)`; spatial dims must be even.
pub fn maxpool_forward(x: &Tensor) -> Result<(Tensor, PoolSwitches)> {
    let s = x.shape();
    if s.h % 2 != 0 || s.w % 2 != 0 {
        return Err(Error::shape("maxpool_forward", s, "even spatial dims"));
    }
    let (oh, ow) = (s.h / 2, s.w / 2);
    let pooled_shape = Shape::new(s.b, s.c, oh, ow);
    let mut out = Tensor::zeros(pooled_shape);
    let mut idx = vec![0u32; pooled_shape.len()];
    let mut cell = 0usize;
    for b in 0..s.b {
        for c in 0..s.c {
            let plane = x.plane(b, c);
            let out_plane = out.plane_mut(b, c);
            for y in 0..oh {
                for xp in 0..ow {
                    let base = 2 * y * s.w + 2 * xp;
                    // row-major window order; strict > keeps the first tie
                    let mut best_i = base;
                    let mut best_v = plane[base];
                    for &cand in &[base + 1, base + s.w, base + s.w + 1] {
                        if plane[cand] > best_v {
                            best_v = plane[cand];
                            best_i = cand;
                        }
                    }
                    out_plane[y * ow + xp] = best_v;
                    idx[cell] = best_i as u32;
                    cell += 1;
                }
            }
        }
    }
    Ok((
        out,
        PoolSwitches {
            pooled: pooled_shape,
            input_h: s.h,
            input_w: s.w,
            idx,
        },
    ))
}

/// Routes each pooled-cell gradient to the input pixel that won the max;
/// all other pixels receive zero.
pub fn maxpool_backward(grad_out: &Tensor, switches: &PoolSwitches) -> Result<Tensor> {
    if grad_out.shape() != switches.pooled {
        return Err(Error::shape(
            "maxpool_backward",
            grad_out.shape(),
            switches.pooled,
        ));
    }
    let mut grad_input = Tensor::zeros(switches.input_shape());
    scatter(grad_out, switches, &mut grad_input);
    Ok(grad_input)
}

/// Places each value of `x` (pooled resolution) at its switch position in a
/// zero tensor of the pre-pool resolution.
pub fn unpool_forward(x: &Tensor, switches: &PoolSwitches) -> Result<Tensor> {
    if x.shape() != switches.pooled {
        return Err(Error::shape("unpool_forward", x.shape(), switches.pooled));
    }
    let mut out = Tensor::zeros(switches.input_shape());
    scatter(x, switches, &mut out);
    Ok(out)
}

/// Adjoint of [`unpool_forward`]: gathers the gradient at each switch
/// position back down to pooled resolution.
pub fn unpool_backward(grad_out: &Tensor, switches: &PoolSwitches) -> Result<Tensor> {
    if grad_out.shape() != switches.input_shape() {
        return Err(Error::shape(
            "unpool_backward",
            grad_out.shape(),
            switches.input_shape(),
        ));
    }
    let s = switches.pooled;
    let mut out = Tensor::zeros(s);
    let mut cell = 0usize;
    for b in 0..s.b {
        for c in 0..s.c {
            let src = grad_out.plane(b, c);
            for v in out.plane_mut(b, c) {
                *v = src[switches.idx[cell] as usize];
                cell += 1;
            }
        }
    }
    Ok(out)
}

fn scatter(src: &Tensor, switches: &PoolSwitches, dst: &mut Tensor) {
    let s = switches.pooled;
    let mut cell = 0usize;
    for b in 0..s.b {
        for c in 0..s.c {
            let dst_plane = dst.plane_mut(b, c);
            for &v in src.plane(b, c) {
                dst_plane[switches.idx[cell] as usize] = v;
                cell += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    #[test]
    fn single_window_max_and_switch() {
        let x = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]);
        let (out, sw) = maxpool_forward(&x).unwrap();
        assert_eq!(out.shape(), Shape::new(1, 1, 1, 1));
        assert_eq!(out.at(0, 0, 0, 0), 4.0);
        assert_eq!(sw.idx, vec![3]); // row 1, col 1
    }

    #[test]
    fn ties_pick_first_in_row_major_order() {
        let x = Tensor::filled(Shape::new(1, 1, 2, 2), 7.0);
        let (_, sw) = maxpool_forward(&x).unwrap();
        assert_eq!(sw.idx, vec![0]);

        let x = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![1.0, 5.0, 5.0, 1.0]);
        let (_, sw) = maxpool_forward(&x).unwrap();
        assert_eq!(sw.idx, vec![1]); // (0,1) beats (1,0)
    }

    #[test]
    fn rejects_odd_dims() {
        assert!(maxpool_forward(&Tensor::zeros(Shape::new(1, 1, 3, 4))).is_err());
        assert!(maxpool_forward(&Tensor::zeros(Shape::new(1, 1, 4, 3))).is_err());
    }

    #[test]
    fn pool_matches_window_scan() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let x = Tensor::from_fn(Shape::new(2, 3, 6, 8), |_, _, _, _| {
            rng.random_range(-5.0f32..5.0)
        });
        let (out, _) = maxpool_forward(&x).unwrap();
        for b in 0..2 {
            for c in 0..3 {
                for y in 0..3 {
                    for xp in 0..4 {
                        let m = x
                            .at(b, c, 2 * y, 2 * xp)
                            .max(x.at(b, c, 2 * y, 2 * xp + 1))
                            .max(x.at(b, c, 2 * y + 1, 2 * xp))
                            .max(x.at(b, c, 2 * y + 1, 2 * xp + 1));
                        assert_eq!(out.at(b, c, y, xp), m);
                    }
                }
            }
        }
    }

    #[test]
    fn backward_routes_to_argmax_only() {
        let x = Tensor::from_vec(
            Shape::new(1, 1, 2, 4),
            vec![1.0, 9.0, 2.0, 1.0, 3.0, 0.0, 8.0, 1.0],
        );
        let (_, sw) = maxpool_forward(&x).unwrap();
        let g = Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![10.0, 20.0]);
        let dx = maxpool_backward(&g, &sw).unwrap();
        let expected = vec![0.0, 10.0, 0.0, 0.0, 0.0, 0.0, 20.0, 0.0];
        assert_eq!(dx.data(), expected.as_slice());
        // total gradient mass is preserved
        let total: f32 = dx.data().iter().sum();
        assert_eq!(total, 30.0);
    }

    #[test]
    fn unpool_places_values_at_recorded_maxima() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let x = Tensor::from_fn(Shape::new(1, 2, 4, 4), |_, _, _, _| {
            rng.random_range(0.0f32..1.0)
        });
        let (pooled, sw) = maxpool_forward(&x).unwrap();
        let up = unpool_forward(&pooled, &sw).unwrap();
        assert_eq!(up.shape(), x.shape());
        // every nonzero pixel of the unpooled map equals the input there
        let mut nonzero = 0;
        for i in 0..up.data().len() {
            if up.data()[i] != 0.0 {
                assert_eq!(up.data()[i], x.data()[i]);
                nonzero += 1;
            }
        }
        assert_eq!(nonzero, pooled.shape().len());
    }

    #[test]
    fn unpool_backward_is_exact_adjoint_gather() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::from_fn(Shape::new(2, 2, 4, 6), |_, _, _, _| {
            rng.random_range(-1.0f32..1.0)
        });
        let (pooled, sw) = maxpool_forward(&x).unwrap();
        // gather(scatter(v)) is the identity on pooled values
        let up = unpool_forward(&pooled, &sw).unwrap();
        let back = unpool_backward(&up, &sw).unwrap();
        assert_eq!(back, pooled);
    }

    #[test]
    fn shape_validation() {
        let x = Tensor::zeros(Shape::new(1, 1, 4, 4));
        let (_, sw) = maxpool_forward(&x).unwrap();
        let wrong = Tensor::zeros(Shape::new(1, 1, 4, 4));
        assert!(maxpool_backward(&wrong, &sw).is_err());
        assert!(unpool_forward(&wrong, &sw).is_err());
        let wrong_small = Tensor::zeros(Shape::new(1, 1, 2, 2));
        assert!(unpool_backward(&wrong_small, &sw).is_err());
    }
}
