//! 2-D convolution (cross-correlation, stride 1, zero "same" padding).
//!
//! The forward pass lowers each batch item to an im2col matrix and runs a
//! single GEMM; the backward pass reuses the same lowering for the kernel
//! gradient and scatters a GEMM result back for the input gradient. Kernels
//! are never flipped: `out[o][y][x] = bias[o] + sum over (c, ky, kx) of
//! k[o][c][ky][kx] * x[c][y + ky - pad_h][x + kx - pad_w]`, with
//! out-of-range taps reading zero.

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Learnable state of one convolution: `kernels` is `(C_out, C_in, K_h,
/// K_w)` and `bias` has one entry per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub kernels: Tensor,
    pub bias: Vec<f32>,
}

impl ConvParams {
    pub fn zeroed(c_out: usize, c_in: usize, k_h: usize, k_w: usize) -> ConvParams {
        ConvParams {
            kernels: Tensor::zeros(Shape::new(c_out, c_in, k_h, k_w)),
            bias: vec![0.0; c_out],
        }
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.shape().b
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape().c
    }

    pub fn kernel_h(&self) -> usize {
        self.kernels.shape().h
    }

    pub fn kernel_w(&self) -> usize {
        self.kernels.shape().w
    }

    /// Zero padding that keeps spatial size unchanged (kernel dims must be
    /// odd, which `(k - 1) / 2` assumes).
    pub fn same_padding(&self) -> (usize, usize) {
        ((self.kernel_h() - 1) / 2, (self.kernel_w() - 1) / 2)
    }
}

/// Gradients produced by [`conv_backward`].
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Vec<f32>,
}

/// `C := alpha * op_a(A) * op_b(B) + beta * C` over row-major slices.
/// `a_transposed`/`b_transposed` select whether the stored matrix is used
/// as-is or transposed; dimensions are those of the *product* operands
/// (`op_a(A)` is `m x k`, `op_b(B)` is `k x n`).
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f32,
    a: &[f32],
    a_transposed: bool,
    b: &[f32],
    b_transposed: bool,
    beta: f32,
    c: &mut [f32],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_transposed { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_transposed { (1, k as isize) } else { (n as isize, 1) };
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Lowers one padded `(C, H_p, W_p)` plane stack into the im2col matrix:
/// `(C * K_h * K_w)` rows by `(H * W)` columns, row `r = (c * K_h + ky) *
/// K_w + kx`, so rows align with the row-major kernel flattening.
fn im2col(
    padded: &Tensor,
    b: usize,
    out_h: usize,
    out_w: usize,
    k_h: usize,
    k_w: usize,
    col: &mut [f32],
) {
    let s = padded.shape();
    let mut r = 0usize;
    for c in 0..s.c {
        let plane = padded.plane(b, c);
        for ky in 0..k_h {
            for kx in 0..k_w {
                let row = &mut col[r * out_h * out_w..(r + 1) * out_h * out_w];
                for y in 0..out_h {
                    let src = (y + ky) * s.w + kx;
                    row[y * out_w..(y + 1) * out_w].copy_from_slice(&plane[src..src + out_w]);
                }
                r += 1;
            }
        }
    }
}

/// Inverse scatter of [`im2col`]: accumulates column gradients back into the
/// padded input gradient.
fn col2im_add(
    col: &[f32],
    padded_grad: &mut Tensor,
    b: usize,
    out_h: usize,
    out_w: usize,
    k_h: usize,
    k_w: usize,
) {
    let s = padded_grad.shape();
    let mut r = 0usize;
    for c in 0..s.c {
        let plane = padded_grad.plane_mut(b, c);
        for ky in 0..k_h {
            for kx in 0..k_w {
                let row = &col[r * out_h * out_w..(r + 1) * out_h * out_w];
                for y in 0..out_h {
                    let dst = (y + ky) * s.w + kx;
                    for x in 0..out_w {
                        plane[dst + x] += row[y * out_w + x];
                    }
                }
                r += 1;
            }
        }
    }
}

fn check_channels(x: &Tensor, p: &ConvParams, context: &'static str) -> Result<()> {
    if x.shape().c != p.in_channels() {
        return Err(Error::shape(
            context,
            x.shape(),
            format!("kernels expect {} input channels", p.in_channels()),
        ));
    }
    Ok(())
}

/// Same-size convolution forward pass: `(B, C_in, H, W)` to
/// `(B, C_out, H, W)`.
pub fn conv_forward(x: &Tensor, p: &ConvParams) -> Result<Tensor> {
    check_channels(x, p, "conv_forward")?;
    let s = x.shape();
    let (k_h, k_w) = (p.kernel_h(), p.kernel_w());
    let (pad_h, pad_w) = p.same_padding();
    let c_out = p.out_channels();
    let ckk = p.in_channels() * k_h * k_w;
    let hw = s.h * s.w;

    let padded = crate::tensor::pad_zero(x, pad_h, pad_w);
    let mut out = Tensor::zeros(Shape::new(s.b, c_out, s.h, s.w));
    let mut col = vec![0.0f32; ckk * hw];
    for b in 0..s.b {
        im2col(&padded, b, s.h, s.w, k_h, k_w, &mut col);
        let out_base = b * c_out * hw;
        gemm(
            c_out,
            ckk,
            hw,
            1.0,
            p.kernels.data(),
            false,
            &col,
            false,
            0.0,
            &mut out.data_mut()[out_base..out_base + c_out * hw],
        );
        for o in 0..c_out {
            let bias = p.bias[o];
            for v in out.plane_mut(b, o) {
                *v += bias;
            }
        }
    }
    Ok(out)
}

/// Backward pass. `x` must be the tensor that was fed to [`conv_forward`];
/// its im2col lowering is recomputed here rather than cached, trading some
/// time for a much smaller activation footprint.
pub fn conv_backward(x: &Tensor, p: &ConvParams, grad_out: &Tensor) -> Result<ConvGrads> {
    check_channels(x, p, "conv_backward")?;
    let s = x.shape();
    let go = grad_out.shape();
    if go.b != s.b || go.c != p.out_channels() || go.h != s.h || go.w != s.w {
        return Err(Error::shape("conv_backward", go, s));
    }
    let (k_h, k_w) = (p.kernel_h(), p.kernel_w());
    let (pad_h, pad_w) = p.same_padding();
    let c_out = p.out_channels();
    let ckk = p.in_channels() * k_h * k_w;
    let hw = s.h * s.w;

    let padded = crate::tensor::pad_zero(x, pad_h, pad_w);
    let mut grad_kernels = Tensor::zeros(p.kernels.shape());
    let mut grad_bias = vec![0.0f32; c_out];
    let mut padded_grad = Tensor::zeros(padded.shape());
    let mut col = vec![0.0f32; ckk * hw];
    let mut col_grad = vec![0.0f32; ckk * hw];

    for b in 0..s.b {
        let go_mat = &grad_out.data()[b * c_out * hw..(b + 1) * c_out * hw];

        for o in 0..c_out {
            grad_bias[o] += go_mat[o * hw..(o + 1) * hw].iter().sum::<f32>();
        }

        // dJ/dK += dJ/dout x col^T   (C_out x HW) x (HW x CKK)
        im2col(&padded, b, s.h, s.w, k_h, k_w, &mut col);
        gemm(
            c_out,
            hw,
            ckk,
            1.0,
            go_mat,
            false,
            &col,
            true,
            1.0,
            grad_kernels.data_mut(),
        );

        // dJ/dcol = K^T x dJ/dout   (CKK x C_out) x (C_out x HW)
        gemm(
            ckk,
            c_out,
            hw,
            1.0,
            p.kernels.data(),
            true,
            go_mat,
            false,
            0.0,
            &mut col_grad,
        );
        col2im_add(&col_grad, &mut padded_grad, b, s.h, s.w, k_h, k_w);
    }

    let grad_input = crate::tensor::crop(&padded_grad, pad_h, pad_w, s.h, s.w)?;
    Ok(ConvGrads {
        input: grad_input,
        kernels: grad_kernels,
        bias: grad_bias,
    })
}
