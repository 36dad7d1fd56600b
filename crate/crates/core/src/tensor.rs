//! Dense rank-4 `(batch, channel, height, width)` tensors.
//!
//! Data is stored row-major with the width axis fastest, single precision
//! throughout, so serialized tensors are portable byte-for-byte. All
//! operations here are pure: inputs are never mutated.

use crate::error::{Error, Result};

/// Dimensions of a rank-4 tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub b: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(b: usize, c: usize, h: usize, w: usize) -> Shape {
        Shape { b, c, h, w }
    }

    pub fn len(&self) -> usize {
        self.b * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{},{})", self.b, self.c, self.h, self.w)
    }
}

/// Dense `(B, C, H, W)` array of `f32`, row-major with W fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Tensor {
        Tensor {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn filled(shape: Shape, value: f32) -> Tensor {
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    /// Wraps an existing buffer. `data.len()` must equal `shape.len()`.
    pub fn from_vec(shape: Shape, data: Vec<f32>) -> Tensor {
        assert_eq!(
            data.len(),
            shape.len(),
            "buffer length {} does not match shape {}",
            data.len(),
            shape
        );
        Tensor { shape, data }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Tensor {
        let mut data = Vec::with_capacity(shape.len());
        for b in 0..shape.b {
            for c in 0..shape.c {
                for y in 0..shape.h {
                    for x in 0..shape.w {
                        data.push(f(b, c, y, x));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        ((b * self.shape.c + c) * self.shape.h + y) * self.shape.w + x
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(b, c, y, x)]
    }

    #[inline]
    pub fn at_mut(&mut self, b: usize, c: usize, y: usize, x: usize) -> &mut f32 {
        let i = self.index(b, c, y, x);
        &mut self.data[i]
    }

    /// Contiguous `(H, W)` plane for one `(batch, channel)` pair.
    pub fn plane(&self, b: usize, c: usize) -> &[f32] {
        let hw = self.shape.h * self.shape.w;
        let start = (b * self.shape.c + c) * hw;
        &self.data[start..start + hw]
    }

    pub fn plane_mut(&mut self, b: usize, c: usize) -> &mut [f32] {
        let hw = self.shape.h * self.shape.w;
        let start = (b * self.shape.c + c) * hw;
        &mut self.data[start..start + hw]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f32> {
        self.data.iter()
    }

    /// Errors if any element is NaN or infinite.
    pub fn check_finite(&self, context: &str) -> Result<()> {
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite value {} at flat index {pos} in {context}",
                self.data[pos]
            )));
        }
        Ok(())
    }
}

/// Per-pixel class identifiers for one B-scan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub h: usize,
    pub w: usize,
    pub data: Vec<u8>,
}

impl LabelMap {
    pub fn new(h: usize, w: usize, data: Vec<u8>) -> LabelMap {
        assert_eq!(data.len(), h * w, "label buffer length mismatch");
        LabelMap { h, w, data }
    }

    pub fn filled(h: usize, w: usize, value: u8) -> LabelMap {
        LabelMap {
            h,
            w,
            data: vec![value; h * w],
        }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, value: u8) {
        self.data[y * self.w + x] = value;
    }

    /// Pixel count per class id, indexed 0..=max_class.
    pub fn histogram(&self, max_class: u8) -> Vec<usize> {
        let mut counts = vec![0usize; max_class as usize + 1];
        for &v in &self.data {
            if (v as usize) < counts.len() {
                counts[v as usize] += 1;
            }
        }
        counts
    }
}

/// Zero-pads the spatial borders: output is `(B, C, H + 2*pad_h, W + 2*pad_w)`
/// with the input in the center and exact zeros around it.
pub fn pad_zero(t: &Tensor, pad_h: usize, pad_w: usize) -> Tensor {
    let s = t.shape();
    if pad_h == 0 && pad_w == 0 {
        return t.clone();
    }
    let out_shape = Shape::new(s.b, s.c, s.h + 2 * pad_h, s.w + 2 * pad_w);
    let mut out = Tensor::zeros(out_shape);
    for b in 0..s.b {
        for c in 0..s.c {
            for y in 0..s.h {
                let src = &t.plane(b, c)[y * s.w..(y + 1) * s.w];
                let dst_row = (y + pad_h) * out_shape.w + pad_w;
                out.plane_mut(b, c)[dst_row..dst_row + s.w].copy_from_slice(src);
            }
        }
    }
    out
}

/// Extracts the centered `(B, C, h, w)` window starting at `(top, left)`.
/// Inverse of [`pad_zero`] when called with the pad offsets.
pub fn crop(t: &Tensor, top: usize, left: usize, h: usize, w: usize) -> Result<Tensor> {
    let s = t.shape();
    if top + h > s.h || left + w > s.w {
        return Err(Error::shape(
            "crop",
            format!("window {h}x{w}+{top}+{left}"),
            s,
        ));
    }
    let out_shape = Shape::new(s.b, s.c, h, w);
    let mut out = Tensor::zeros(out_shape);
    for b in 0..s.b {
        for c in 0..s.c {
            for y in 0..h {
                let src_row = (y + top) * s.w + left;
                let src = &t.plane(b, c)[src_row..src_row + w];
                out.plane_mut(b, c)[y * w..(y + 1) * w].copy_from_slice(src);
            }
        }
    }
    Ok(out)
}

/// Stacks `a` and `b` along the channel axis: channels `[0, C_a)` come from
/// `a` and `[C_a, C_a + C_b)` from `b`.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.b != sb.b || sa.h != sb.h || sa.w != sb.w {
        return Err(Error::shape("concat_channels", sa, sb));
    }
    let out_shape = Shape::new(sa.b, sa.c + sb.c, sa.h, sa.w);
    let hw = sa.h * sa.w;
    let mut data = Vec::with_capacity(out_shape.len());
    for bi in 0..sa.b {
        data.extend_from_slice(&a.data()[bi * sa.c * hw..(bi + 1) * sa.c * hw]);
        data.extend_from_slice(&b.data()[bi * sb.c * hw..(bi + 1) * sb.c * hw]);
    }
    Ok(Tensor::from_vec(out_shape, data))
}

/// Splits along the channel axis at `c_split`; exact inverse of
/// [`concat_channels`].
pub fn split_channels(t: &Tensor, c_split: usize) -> Result<(Tensor, Tensor)> {
    let s = t.shape();
    if c_split == 0 || c_split >= s.c {
        return Err(Error::shape(
            "split_channels",
            format!("split index {c_split}"),
            s,
        ));
    }
    let hw = s.h * s.w;
    let (ca, cb) = (c_split, s.c - c_split);
    let mut da = Vec::with_capacity(s.b * ca * hw);
    let mut db = Vec::with_capacity(s.b * cb * hw);
    for bi in 0..s.b {
        let base = bi * s.c * hw;
        da.extend_from_slice(&t.data()[base..base + ca * hw]);
        db.extend_from_slice(&t.data()[base + ca * hw..base + s.c * hw]);
    }
    Ok((
        Tensor::from_vec(Shape::new(s.b, ca, s.h, s.w), da),
        Tensor::from_vec(Shape::new(s.b, cb, s.h, s.w), db),
    ))
}

/// Elementwise `dst += src`; shapes must match.
pub fn add_assign(dst: &mut Tensor, src: &Tensor) -> Result<()> {
    if dst.shape() != src.shape() {
        return Err(Error::shape("add_assign", dst.shape(), src.shape()));
    }
    for (d, &s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += s;
    }
    Ok(())
}

/// Per-pixel argmax over channels, one [`LabelMap`] per batch item.
/// Ties break to the lowest channel index.
pub fn argmax_channel(t: &Tensor) -> Vec<LabelMap> {
    let s = t.shape();
    let mut maps = Vec::with_capacity(s.b);
    for b in 0..s.b {
        let mut labels = vec![0u8; s.h * s.w];
        let mut best = t.plane(b, 0).to_vec();
        for c in 1..s.c {
            let plane = t.plane(b, c);
            for (i, (&v, m)) in plane.iter().zip(best.iter_mut()).enumerate() {
                if v > *m {
                    *m = v;
                    labels[i] = c as u8;
                }
            }
        }
        maps.push(LabelMap::new(s.h, s.w, labels));
    }
    maps
}
