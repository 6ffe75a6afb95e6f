//! Dense rank-4 tensors in NCHW layout and the pointwise / reduction /
//! channel-rearrangement kernels the attention module is built from.
//!
//! Storage is `f32`; every reduction accumulates in `f64` and rounds once at
//! the end, so results do not depend on how an implementation might tile the
//! loops. All operations are pure functions over immutable inputs.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Tensor dimensions in NCHW order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    fn checked_numel(&self) -> Option<usize> {
        self.n
            .checked_mul(self.c)?
            .checked_mul(self.h)?
            .checked_mul(self.w)
    }

    fn validate(&self) -> Result<usize> {
        for (name, v) in [
            ("n", self.n),
            ("c", self.c),
            ("h", self.h),
            ("w", self.w),
        ] {
            if v == 0 {
                return Err(Error::ZeroDimension { name });
            }
        }
        self.checked_numel().ok_or(Error::DimensionOverflow {
            n: self.n,
            c: self.c,
            h: self.h,
            w: self.w,
        })
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

/// Dense rank-4 tensor of `f32` values, row-major NCHW.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor4 {
    pub fn new(shape: Shape, data: Vec<f32>) -> Result<Self> {
        let numel = shape.validate()?;
        if data.len() != numel {
            return Err(Error::DataLength {
                expected: numel,
                got: data.len(),
            });
        }
        Ok(Tensor4 { shape, data })
    }

    pub fn from_dims(n: usize, c: usize, h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        Tensor4::new(Shape::new(n, c, h, w), data)
    }

    pub fn zeros(shape: Shape) -> Result<Self> {
        let numel = shape.validate()?;
        Ok(Tensor4 {
            shape,
            data: vec![0.0; numel],
        })
    }

    pub fn filled(shape: Shape, value: f32) -> Result<Self> {
        let numel = shape.validate()?;
        Ok(Tensor4 {
            shape,
            data: vec![value; numel],
        })
    }

    /// Seeded uniform fill over `[lo, hi)`.
    pub fn uniform(shape: Shape, lo: f32, hi: f32, rng: &mut Rng) -> Result<Self> {
        let numel = shape.validate()?;
        let data = (0..numel).map(|_| rng.uniform(lo, hi)).collect();
        Ok(Tensor4 { shape, data })
    }

    /// Seeded gaussian fill.
    pub fn normal(shape: Shape, mean: f32, std: f32, rng: &mut Rng) -> Result<Self> {
        let numel = shape.validate()?;
        let data = (0..numel).map(|_| rng.normal_scaled(mean, std)).collect();
        Ok(Tensor4 { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// `(n, c, h, w)` for destructuring.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.shape.n, self.shape.c, self.shape.h, self.shape.w)
    }

    pub fn numel(&self) -> usize {
        self.data.len()
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
    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + h) * self.shape.w + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f32 {
        self.data[self.index(n, c, h, w)]
    }

    /// Channel slice `[c]` of sample `n` as a contiguous `h*w` run.
    #[inline]
    pub fn channel(&self, n: usize, c: usize) -> &[f32] {
        let hw = self.shape.h * self.shape.w;
        let start = (n * self.shape.c + c) * hw;
        &self.data[start..start + hw]
    }

    fn require_shape(&self, expected: Shape) -> Result<()> {
        if self.shape != expected {
            return Err(Error::ShapeMismatch {
                expected,
                got: self.shape,
            });
        }
        Ok(())
    }
}

/// Pointwise binary operation selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElemOp {
    Add,
    Mul,
}

/// Pointwise combination of two tensors of identical shape.
pub fn elementwise(a: &Tensor4, b: &Tensor4, op: ElemOp) -> Result<Tensor4> {
    b.require_shape(a.shape())?;
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| match op {
            ElemOp::Add => x + y,
            ElemOp::Mul => x * y,
        })
        .collect();
    Tensor4::new(a.shape(), data)
}

pub fn add(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
    elementwise(a, b, ElemOp::Add)
}

pub fn mul(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
    elementwise(a, b, ElemOp::Mul)
}

/// Multiplies every `(n, c)` slice of `x` by the matching scalar in `gate`,
/// which must have shape `(n, c, 1, 1)`.
pub fn mul_broadcast_channels(x: &Tensor4, gate: &Tensor4) -> Result<Tensor4> {
    let (n, c, h, w) = x.dims();
    gate.require_shape(Shape::new(n, c, 1, 1))?;
    let mut out = x.clone();
    let hw = h * w;
    for ni in 0..n {
        for ci in 0..c {
            let gv = gate.at(ni, ci, 0, 0);
            let start = (ni * c + ci) * hw;
            for v in &mut out.data_mut()[start..start + hw] {
                *v *= gv;
            }
        }
    }
    Ok(out)
}

/// `w[c] * x + b[c]`, broadcast over the batch and spatial axes.
pub fn scale_shift(x: &Tensor4, w: &[f32], b: &[f32]) -> Result<Tensor4> {
    let (n, c, h, wd) = x.dims();
    if w.len() != c {
        return Err(Error::LengthMismatch {
            name: "w",
            expected: c,
            got: w.len(),
        });
    }
    if b.len() != c {
        return Err(Error::LengthMismatch {
            name: "b",
            expected: c,
            got: b.len(),
        });
    }
    let mut out = x.clone();
    let hw = h * wd;
    for ni in 0..n {
        for ci in 0..c {
            let start = (ni * c + ci) * hw;
            let (wc, bc) = (w[ci], b[ci]);
            for v in &mut out.data_mut()[start..start + hw] {
                *v = wc * *v + bc;
            }
        }
    }
    Ok(out)
}

/// Logistic function evaluated in 64-bit arithmetic and rounded to `f32`.
#[inline]
pub fn sigmoid_scalar(x: f32) -> f32 {
    (1.0 / (1.0 + libm::exp(-(x as f64)))) as f32
}

/// Pointwise logistic function.
pub fn sigmoid(x: &Tensor4) -> Tensor4 {
    let data = x.data().iter().map(|&v| sigmoid_scalar(v)).collect();
    Tensor4::new(x.shape(), data).expect("shape preserved")
}

/// Pointwise rectifier.
pub fn relu(x: &Tensor4) -> Tensor4 {
    let data = x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    Tensor4::new(x.shape(), data).expect("shape preserved")
}

/// Mean over the spatial extent of every `(n, c)` slice, as an `(n, c, 1, 1)`
/// tensor. Accumulates in `f64`.
pub fn mean_spatial(x: &Tensor4) -> Tensor4 {
    let (n, c, h, w) = x.dims();
    let m = (h * w) as f64;
    let mut data = Vec::with_capacity(n * c);
    for ni in 0..n {
        for ci in 0..c {
            let mut acc = 0.0f64;
            for &v in x.channel(ni, ci) {
                acc += v as f64;
            }
            data.push((acc / m) as f32);
        }
    }
    Tensor4::from_dims(n, c, 1, 1, data).expect("valid stat shape")
}

/// Biased spatial variance of every `(n, c)` slice given its mean, as an
/// `(n, c, 1, 1)` tensor. Accumulates in `f64`.
pub fn var_spatial(x: &Tensor4, mean: &Tensor4) -> Result<Tensor4> {
    let (n, c, h, w) = x.dims();
    mean.require_shape(Shape::new(n, c, 1, 1))?;
    let m = (h * w) as f64;
    let mut data = Vec::with_capacity(n * c);
    for ni in 0..n {
        for ci in 0..c {
            let mu = mean.at(ni, ci, 0, 0) as f64;
            let mut acc = 0.0f64;
            for &v in x.channel(ni, ci) {
                let d = v as f64 - mu;
                acc += d * d;
            }
            data.push((acc / m) as f32);
        }
    }
    Ok(Tensor4::from_dims(n, c, 1, 1, data).expect("valid stat shape"))
}

/// Result of [`normalize_per_channel`]: the normalized tensor plus the
/// per-`(n, c)` statistics needed to invert or differentiate it.
pub struct ChannelNorm {
    pub normalized: Tensor4,
    /// Row-major `(n, c)` means.
    pub mean: Vec<f32>,
    /// Row-major `(n, c)` values of `1 / sqrt(var + eps)`.
    pub inv_std: Vec<f32>,
}

/// Normalizes each `(n, c)` slice over its spatial extent to zero mean and
/// unit variance, using the biased variance and `eps` to guard degenerate
/// slices. No affine term; compose with [`scale_shift`] for that.
pub fn normalize_per_channel(x: &Tensor4, eps: f32) -> ChannelNorm {
    let (n, c, h, w) = x.dims();
    let m = (h * w) as f64;
    let mut out = x.clone();
    let mut mean = Vec::with_capacity(n * c);
    let mut inv_std = Vec::with_capacity(n * c);
    let hw = h * w;
    for ni in 0..n {
        for ci in 0..c {
            let mut acc = 0.0f64;
            for &v in x.channel(ni, ci) {
                acc += v as f64;
            }
            let mu = (acc / m) as f32;
            let mut var = 0.0f64;
            for &v in x.channel(ni, ci) {
                let d = v as f64 - mu as f64;
                var += d * d;
            }
            let r = (1.0 / libm::sqrt(var / m + eps as f64)) as f32;
            let start = (ni * c + ci) * hw;
            for v in &mut out.data_mut()[start..start + hw] {
                *v = (*v - mu) * r;
            }
            mean.push(mu);
            inv_std.push(r);
        }
    }
    ChannelNorm {
        normalized: out,
        mean,
        inv_std,
    }
}

/// Copy of channels `[start, start + len)`.
pub fn narrow_channels(x: &Tensor4, start: usize, len: usize) -> Result<Tensor4> {
    let (n, c, h, w) = x.dims();
    if len == 0 || start + len > c {
        return Err(Error::NotDivisible {
            channels: c,
            parts: start + len,
        });
    }
    let hw = h * w;
    let mut data = Vec::with_capacity(n * len * hw);
    for ni in 0..n {
        let base = (ni * c + start) * hw;
        data.extend_from_slice(&x.data()[base..base + len * hw]);
    }
    Tensor4::from_dims(n, len, h, w, data)
}

/// Splits the channel axis into `parts` equal contiguous slices.
pub fn split_channels(x: &Tensor4, parts: usize) -> Result<Vec<Tensor4>> {
    let c = x.shape().c;
    if parts == 0 || c % parts != 0 {
        return Err(Error::NotDivisible { channels: c, parts });
    }
    let width = c / parts;
    (0..parts)
        .map(|i| narrow_channels(x, i * width, width))
        .collect()
}

/// Concatenates tensors along the channel axis. Inverse of
/// [`split_channels`] for equal parts.
pub fn concat_channels(parts: &[Tensor4]) -> Result<Tensor4> {
    let first = parts.first().ok_or(Error::EmptyInput("part list"))?;
    let (n, _, h, w) = first.dims();
    let mut c_total = 0;
    for p in parts {
        let (pn, pc, ph, pw) = p.dims();
        if pn != n || ph != h || pw != w {
            return Err(Error::ShapeMismatch {
                expected: first.shape(),
                got: p.shape(),
            });
        }
        c_total += pc;
    }
    let hw = h * w;
    let mut data = Vec::with_capacity(n * c_total * hw);
    for ni in 0..n {
        for p in parts {
            let pc = p.shape().c;
            let base = ni * pc * hw;
            data.extend_from_slice(&p.data()[base..base + pc * hw]);
        }
    }
    Tensor4::from_dims(n, c_total, h, w, data)
}

/// Channel shuffle: view the channel axis as a `(g, c/g)` grid, transpose it
/// to `(c/g, g)`, and flatten. Output channel `b*g + a` holds input channel
/// `a*(c/g) + b`. A pure permutation of channel slices; values untouched.
pub fn channel_shuffle(x: &Tensor4, g: usize) -> Result<Tensor4> {
    let (n, c, h, w) = x.dims();
    if g == 0 || c % g != 0 {
        return Err(Error::NotDivisible {
            channels: c,
            parts: g,
        });
    }
    let cpg = c / g;
    let hw = h * w;
    let mut out = Tensor4::zeros(x.shape()).expect("shape preserved");
    for ni in 0..n {
        for a in 0..g {
            for b in 0..cpg {
                let src = (ni * c + a * cpg + b) * hw;
                let dst = (ni * c + b * g + a) * hw;
                out.data_mut()[dst..dst + hw].copy_from_slice(&x.data()[src..src + hw]);
            }
        }
    }
    Ok(out)
}

/// The inverse permutation of [`channel_shuffle`] with the same `g`.
pub fn channel_shuffle_inverse(x: &Tensor4, g: usize) -> Result<Tensor4> {
    let c = x.shape().c;
    if g == 0 || c % g != 0 {
        return Err(Error::NotDivisible {
            channels: c,
            parts: g,
        });
    }
    channel_shuffle(x, c / g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(n: usize, c: usize, h: usize, w: usize, data: &[f32]) -> Tensor4 {
        Tensor4::from_dims(n, c, h, w, data.to_vec()).unwrap()
    }

    #[test]
    fn constructors_reject_zero_dims_and_bad_lengths() {
        assert!(matches!(
            Tensor4::from_dims(1, 0, 2, 2, vec![]),
            Err(Error::ZeroDimension { name: "c" })
        ));
        assert!(matches!(
            Tensor4::from_dims(1, 1, 2, 2, vec![0.0; 3]),
            Err(Error::DataLength {
                expected: 4,
                got: 3
            })
        ));
    }

    #[test]
    fn split_by_definition() {
        let x = t(1, 4, 1, 1, &[1.0, 2.0, 3.0, 4.0]);
        let parts = split_channels(&x, 2).unwrap();
        assert_eq!(parts[0].data(), &[1.0, 2.0]);
        assert_eq!(parts[1].data(), &[3.0, 4.0]);
    }

    #[test]
    fn split_single_part_is_identity() {
        let mut rng = Rng::new(3);
        let x = Tensor4::uniform(Shape::new(2, 3, 2, 2), -1.0, 1.0, &mut rng).unwrap();
        let parts = split_channels(&x, 1).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0], x);
    }

    #[test]
    fn split_rejects_non_divisible() {
        let x = t(1, 4, 1, 1, &[0.0; 4]);
        assert_eq!(
            split_channels(&x, 3),
            Err(Error::NotDivisible {
                channels: 4,
                parts: 3
            })
        );
    }

    #[test]
    fn split_concat_round_trip_is_bit_exact() {
        let mut rng = Rng::new(17);
        let x = Tensor4::uniform(Shape::new(2, 64, 7, 7), -2.0, 2.0, &mut rng).unwrap();
        let parts = split_channels(&x, 32).unwrap();
        assert_eq!(parts.len(), 32);
        for p in &parts {
            assert_eq!(p.dims(), (2, 2, 7, 7));
        }
        // Element-wise copy oracle: part i channel j == input channel i*2+j.
        for (i, p) in parts.iter().enumerate() {
            for ni in 0..2 {
                for cj in 0..2 {
                    assert_eq!(p.channel(ni, cj), x.channel(ni, i * 2 + cj));
                }
            }
        }
        let back = concat_channels(&parts).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn concat_by_definition() {
        let a = t(1, 2, 1, 1, &[1.0, 2.0]);
        let b = t(1, 2, 1, 1, &[3.0, 4.0]);
        let x = concat_channels(&[a.clone(), b]).unwrap();
        assert_eq!(x.dims(), (1, 4, 1, 1));
        assert_eq!(x.data(), &[1.0, 2.0, 3.0, 4.0]);
        let single = concat_channels(&[a.clone()]).unwrap();
        assert_eq!(single, a);
    }

    #[test]
    fn concat_rejects_mismatched_spatial() {
        let a = t(1, 1, 1, 1, &[1.0]);
        let b = t(1, 1, 1, 2, &[2.0, 3.0]);
        assert!(matches!(
            concat_channels(&[a, b]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn shuffle_matches_transpose_order() {
        // Channels labeled by value; c=6, g=2 -> [0, 3, 1, 4, 2, 5].
        let x = t(1, 6, 1, 1, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let y = channel_shuffle(&x, 2).unwrap();
        assert_eq!(y.data(), &[0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
    }

    #[test]
    fn shuffle_degenerate_groups_are_identity() {
        let mut rng = Rng::new(5);
        let x = Tensor4::uniform(Shape::new(1, 6, 2, 2), -1.0, 1.0, &mut rng).unwrap();
        assert_eq!(channel_shuffle(&x, 1).unwrap(), x);
        assert_eq!(channel_shuffle(&x, 6).unwrap(), x);
    }

    #[test]
    fn shuffle_inverse_round_trips() {
        let mut rng = Rng::new(9);
        let x = Tensor4::uniform(Shape::new(2, 12, 3, 3), -1.0, 1.0, &mut rng).unwrap();
        for g in [2, 3, 4, 6] {
            let y = channel_shuffle(&x, g).unwrap();
            assert_eq!(channel_shuffle_inverse(&y, g).unwrap(), x);
        }
    }

    #[test]
    fn sigmoid_closed_forms() {
        let x = t(1, 1, 1, 2, &[0.0, 1.0]);
        let y = sigmoid(&x);
        assert_eq!(y.data()[0], 0.5);
        assert!((y.data()[1] - 0.7310586).abs() < 1e-6);
    }

    #[test]
    fn scale_shift_paper_init_yields_ones() {
        let mut rng = Rng::new(2);
        let x = Tensor4::uniform(Shape::new(2, 3, 4, 4), -5.0, 5.0, &mut rng).unwrap();
        let y = scale_shift(&x, &[0.0; 3], &[1.0; 3]).unwrap();
        assert!(y.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn scale_shift_rejects_bad_lengths() {
        let x = t(1, 2, 1, 1, &[1.0, 2.0]);
        assert!(matches!(
            scale_shift(&x, &[1.0], &[0.0, 0.0]),
            Err(Error::LengthMismatch { name: "w", .. })
        ));
    }

    #[test]
    fn mean_by_arithmetic() {
        let x = t(1, 1, 2, 2, &[1.0, 3.0, 5.0, 7.0]);
        let m = mean_spatial(&x);
        assert_eq!(m.dims(), (1, 1, 1, 1));
        assert_eq!(m.data()[0], 4.0);
    }

    #[test]
    fn constant_channel_has_zero_variance() {
        let x = Tensor4::filled(Shape::new(1, 2, 3, 3), 2.5).unwrap();
        let m = mean_spatial(&x);
        assert!(m.data().iter().all(|&v| v == 2.5));
        let v = var_spatial(&x, &m).unwrap();
        assert!(v.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stats_match_scalar_loop_oracle() {
        let mut rng = Rng::new(21);
        let x = Tensor4::uniform(Shape::new(2, 3, 4, 4), -3.0, 3.0, &mut rng).unwrap();
        let m = mean_spatial(&x);
        let v = var_spatial(&x, &m).unwrap();
        for ni in 0..2 {
            for ci in 0..3 {
                let mut acc = 0.0f64;
                for hi in 0..4 {
                    for wi in 0..4 {
                        acc += x.at(ni, ci, hi, wi) as f64;
                    }
                }
                let mu = acc / 16.0;
                let mut var = 0.0f64;
                for hi in 0..4 {
                    for wi in 0..4 {
                        let d = x.at(ni, ci, hi, wi) as f64 - mu;
                        var += d * d;
                    }
                }
                var /= 16.0;
                assert!((m.at(ni, ci, 0, 0) as f64 - mu).abs() < 1e-6);
                assert!((v.at(ni, ci, 0, 0) as f64 - var).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn normalize_guards_zero_variance() {
        let x = Tensor4::filled(Shape::new(1, 1, 2, 2), 3.0).unwrap();
        let norm = normalize_per_channel(&x, 1e-5);
        assert!(norm.normalized.data().iter().all(|&v| v == 0.0));
        assert!(norm.inv_std[0].is_finite());
    }

    #[test]
    fn elementwise_rejects_shape_mismatch() {
        let a = t(1, 1, 1, 2, &[1.0, 2.0]);
        let b = t(1, 2, 1, 1, &[1.0, 2.0]);
        assert!(matches!(
            elementwise(&a, &b, ElemOp::Add),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
