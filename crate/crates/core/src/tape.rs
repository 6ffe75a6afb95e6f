//! Reverse-mode differentiation over a recorded operation tape.
//!
//! A [`Tape`] owns every value produced during a forward trace. Each
//! operation appends one node holding its output plus whatever it needs for
//! the backward pass, and [`Tape::backward`] walks the nodes in exact reverse
//! execution order, accumulating gradients into per-value buffers. Inputs and
//! parameters enter as leaves via [`Tape::leaf`]; only leaf gradients are
//! retained in the returned [`Gradients`] store.
//!
//! Gradient reductions accumulate in `f64` and round once, matching the
//! forward kernels, so backward results are schedule-independent too.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{self, Shape, Tensor4};

/// Handle to a value recorded on a tape. Ids are only meaningful on the tape
/// that produced them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(pub(crate) usize);

#[derive(Debug)]
enum Op {
    Leaf,
    NarrowCh {
        src: ValueId,
        start: usize,
    },
    ConcatCh {
        parts: Vec<ValueId>,
    },
    ShuffleCh {
        src: ValueId,
        groups: usize,
    },
    MeanSpatial {
        src: ValueId,
    },
    Sigmoid {
        src: ValueId,
    },
    Relu {
        src: ValueId,
    },
    Add {
        a: ValueId,
        b: ValueId,
    },
    Mul {
        a: ValueId,
        b: ValueId,
    },
    MulBroadcastCh {
        x: ValueId,
        gate: ValueId,
    },
    ScaleShiftCh {
        x: ValueId,
        w: ValueId,
        b: ValueId,
    },
    PerChannelNorm {
        x: ValueId,
        mean: Vec<f32>,
        inv_std: Vec<f32>,
    },
    Conv2d {
        x: ValueId,
        w: ValueId,
        b: Option<ValueId>,
        stride: usize,
        pad: usize,
    },
    SoftmaxCrossEntropy {
        logits: ValueId,
        targets: Vec<usize>,
        probs: Vec<f32>,
    },
    Scale {
        x: ValueId,
        k: f32,
    },
    SumAll {
        x: ValueId,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor4,
}

/// Ordered record of executed operations with their outputs.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-leaf gradient store produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor4>>,
}

impl Gradients {
    pub fn get(&self, id: ValueId) -> Option<&Tensor4> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: ValueId) -> Option<Tensor4> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Current value of a recorded node.
    pub fn value(&self, id: ValueId) -> &Tensor4 {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor4) -> ValueId {
        self.nodes.push(Node { op, value });
        ValueId(self.nodes.len() - 1)
    }

    /// Registers an input or parameter tensor.
    pub fn leaf(&mut self, value: Tensor4) -> ValueId {
        self.push(Op::Leaf, value)
    }

    pub fn narrow_ch(&mut self, src: ValueId, start: usize, len: usize) -> Result<ValueId> {
        let out = tensor::narrow_channels(self.value(src), start, len)?;
        Ok(self.push(Op::NarrowCh { src, start }, out))
    }

    pub fn concat_ch(&mut self, parts: &[ValueId]) -> Result<ValueId> {
        let tensors: Vec<Tensor4> = parts.iter().map(|&p| self.value(p).clone()).collect();
        let out = tensor::concat_channels(&tensors)?;
        Ok(self.push(
            Op::ConcatCh {
                parts: parts.to_vec(),
            },
            out,
        ))
    }

    pub fn shuffle_ch(&mut self, src: ValueId, groups: usize) -> Result<ValueId> {
        let out = tensor::channel_shuffle(self.value(src), groups)?;
        Ok(self.push(Op::ShuffleCh { src, groups }, out))
    }

    pub fn mean_spatial(&mut self, src: ValueId) -> ValueId {
        let out = tensor::mean_spatial(self.value(src));
        self.push(Op::MeanSpatial { src }, out)
    }

    pub fn sigmoid(&mut self, src: ValueId) -> ValueId {
        let out = tensor::sigmoid(self.value(src));
        self.push(Op::Sigmoid { src }, out)
    }

    pub fn relu(&mut self, src: ValueId) -> ValueId {
        let out = tensor::relu(self.value(src));
        self.push(Op::Relu { src }, out)
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let out = tensor::add(self.value(a), self.value(b))?;
        Ok(self.push(Op::Add { a, b }, out))
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let out = tensor::mul(self.value(a), self.value(b))?;
        Ok(self.push(Op::Mul { a, b }, out))
    }

    /// Multiplies `x` by a `(n, c, 1, 1)` gate, broadcast over space.
    pub fn mul_broadcast_ch(&mut self, x: ValueId, gate: ValueId) -> Result<ValueId> {
        let out = tensor::mul_broadcast_channels(self.value(x), self.value(gate))?;
        Ok(self.push(Op::MulBroadcastCh { x, gate }, out))
    }

    /// Per-channel affine `w[c] * x + b[c]`; `w` and `b` are `(1, c, 1, 1)`
    /// leaves.
    pub fn scale_shift_ch(&mut self, x: ValueId, w: ValueId, b: ValueId) -> Result<ValueId> {
        let c = self.value(x).shape().c;
        for (name, id) in [("w", w), ("b", b)] {
            let s = self.value(id).shape();
            if s != Shape::new(1, c, 1, 1) {
                return Err(Error::LengthMismatch {
                    name,
                    expected: c,
                    got: s.numel(),
                });
            }
        }
        let out = {
            let wt = self.value(w).data().to_vec();
            let bt = self.value(b).data().to_vec();
            tensor::scale_shift(self.value(x), &wt, &bt)?
        };
        Ok(self.push(Op::ScaleShiftCh { x, w, b }, out))
    }

    /// Normalizes each `(n, c)` slice over its spatial extent (biased
    /// variance, `eps` guard). The affine term is a separate
    /// [`Tape::scale_shift_ch`].
    pub fn per_channel_norm(&mut self, x: ValueId, eps: f32) -> ValueId {
        let norm = tensor::normalize_per_channel(self.value(x), eps);
        self.push(
            Op::PerChannelNorm {
                x,
                mean: norm.mean,
                inv_std: norm.inv_std,
            },
            norm.normalized,
        )
    }

    /// Cross-correlation with kernel `w` of shape `(c_out, c_in, kh, kw)`,
    /// optional bias `(1, c_out, 1, 1)`, symmetric zero padding.
    pub fn conv2d(
        &mut self,
        x: ValueId,
        w: ValueId,
        b: Option<ValueId>,
        stride: usize,
        pad: usize,
    ) -> Result<ValueId> {
        let out = conv2d_fwd(
            self.value(x),
            self.value(w),
            b.map(|id| self.value(id)),
            stride,
            pad,
        )?;
        Ok(self.push(Op::Conv2d { x, w, b, stride, pad }, out))
    }

    /// Mean cross-entropy between `(n, k, 1, 1)` logits and class indices.
    /// Output is a `(1, 1, 1, 1)` scalar.
    pub fn softmax_cross_entropy(&mut self, logits: ValueId, targets: &[usize]) -> Result<ValueId> {
        let (loss, probs) = softmax_xent_fwd(self.value(logits), targets)?;
        Ok(self.push(
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            loss,
        ))
    }

    pub fn scale(&mut self, x: ValueId, k: f32) -> ValueId {
        let data = self.value(x).data().iter().map(|&v| k * v).collect();
        let out = Tensor4::new(self.value(x).shape(), data).expect("shape preserved");
        self.push(Op::Scale { x, k }, out)
    }

    /// Sum of all elements as a `(1, 1, 1, 1)` scalar, accumulated in `f64`.
    pub fn sum_all(&mut self, x: ValueId) -> ValueId {
        let mut acc = 0.0f64;
        for &v in self.value(x).data() {
            acc += v as f64;
        }
        let out = Tensor4::from_dims(1, 1, 1, 1, vec![acc as f32]).expect("scalar");
        self.push(Op::SumAll { x }, out)
    }

    /// Reverse pass: gradients of `sum(seed * value(output))` with respect to
    /// every leaf that `output` depends on.
    pub fn backward(&self, output: ValueId, seed: &Tensor4) -> Result<Gradients> {
        let out_idx = output.0;
        if out_idx >= self.nodes.len() {
            return Err(Error::UnknownValue {
                id: out_idx,
                tape_len: self.nodes.len(),
            });
        }
        let out_shape = self.nodes[out_idx].value.shape();
        if seed.shape() != out_shape {
            return Err(Error::ShapeMismatch {
                expected: out_shape,
                got: seed.shape(),
            });
        }
        let mut grads: Vec<Option<Tensor4>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out_idx] = Some(seed.clone());
        for i in (0..=out_idx).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            // Inputs always precede their consumers, so grads[i] is final here.
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, idx: usize, g: &Tensor4, grads: &mut [Option<Tensor4>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::NarrowCh { src, start } => {
                let src_shape = self.value(*src).shape();
                let (n, len, h, w) = g.dims();
                let hw = h * w;
                let c = src_shape.c;
                let dst = grad_buf(grads, *src, src_shape);
                for ni in 0..n {
                    for l in 0..len {
                        let gb = (ni * len + l) * hw;
                        let db = (ni * c + start + l) * hw;
                        for j in 0..hw {
                            dst[db + j] += g.data()[gb + j];
                        }
                    }
                }
            }
            Op::ConcatCh { parts } => {
                let (n, c_total, h, w) = g.dims();
                let hw = h * w;
                let mut offset = 0;
                for &p in parts {
                    let pshape = self.value(p).shape();
                    let pc = pshape.c;
                    let dst = grad_buf(grads, p, pshape);
                    for ni in 0..n {
                        let gb = (ni * c_total + offset) * hw;
                        let db = ni * pc * hw;
                        for j in 0..pc * hw {
                            dst[db + j] += g.data()[gb + j];
                        }
                    }
                    offset += pc;
                }
            }
            Op::ShuffleCh { src, groups } => {
                let un = tensor::channel_shuffle_inverse(g, *groups)
                    .expect("forward validated divisibility");
                let dst = grad_buf(grads, *src, self.value(*src).shape());
                for (d, s) in dst.iter_mut().zip(un.data()) {
                    *d += *s;
                }
            }
            Op::MeanSpatial { src } => {
                let src_shape = self.value(*src).shape();
                let (n, c, h, w) = (src_shape.n, src_shape.c, src_shape.h, src_shape.w);
                let hw = h * w;
                let m = hw as f64;
                let dst = grad_buf(grads, *src, src_shape);
                for ni in 0..n {
                    for ci in 0..c {
                        let share = (g.at(ni, ci, 0, 0) as f64 / m) as f32;
                        let base = (ni * c + ci) * hw;
                        for v in &mut dst[base..base + hw] {
                            *v += share;
                        }
                    }
                }
            }
            Op::Sigmoid { src } => {
                let y = &node.value;
                let dst = grad_buf(grads, *src, y.shape());
                for ((d, &gv), &yv) in dst.iter_mut().zip(g.data()).zip(y.data()) {
                    *d += gv * yv * (1.0 - yv);
                }
            }
            Op::Relu { src } => {
                let x = self.value(*src);
                let shape = x.shape();
                let dst = grad_buf(grads, *src, shape);
                for ((d, &gv), &xv) in dst.iter_mut().zip(g.data()).zip(x.data()) {
                    if xv > 0.0 {
                        *d += gv;
                    }
                }
            }
            Op::Add { a, b } => {
                for &id in [a, b] {
                    let dst = grad_buf(grads, id, g.shape());
                    for (d, &gv) in dst.iter_mut().zip(g.data()) {
                        *d += gv;
                    }
                }
            }
            Op::Mul { a, b } => {
                let bv = self.value(*b).clone();
                let av = self.value(*a).clone();
                {
                    let da = grad_buf(grads, *a, av.shape());
                    for ((d, &gv), &other) in da.iter_mut().zip(g.data()).zip(bv.data()) {
                        *d += gv * other;
                    }
                }
                {
                    let db = grad_buf(grads, *b, bv.shape());
                    for ((d, &gv), &other) in db.iter_mut().zip(g.data()).zip(av.data()) {
                        *d += gv * other;
                    }
                }
            }
            Op::MulBroadcastCh { x, gate } => {
                let xv = self.value(*x);
                let gv = self.value(*gate);
                let (n, c, h, w) = xv.dims();
                let hw = h * w;
                {
                    let dx = grad_buf(grads, *x, xv.shape());
                    for ni in 0..n {
                        for ci in 0..c {
                            let gate_v = gv.at(ni, ci, 0, 0);
                            let base = (ni * c + ci) * hw;
                            for j in 0..hw {
                                dx[base + j] += g.data()[base + j] * gate_v;
                            }
                        }
                    }
                }
                {
                    let xd = xv.clone();
                    let dg = grad_buf(grads, *gate, gv.shape());
                    for ni in 0..n {
                        for ci in 0..c {
                            let base = (ni * c + ci) * hw;
                            let mut acc = 0.0f64;
                            for j in 0..hw {
                                acc += g.data()[base + j] as f64 * xd.data()[base + j] as f64;
                            }
                            dg[ni * c + ci] += acc as f32;
                        }
                    }
                }
            }
            Op::ScaleShiftCh { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (n, c, h, wd) = xv.dims();
                let hw = h * wd;
                {
                    let dx = grad_buf(grads, *x, xv.shape());
                    for ni in 0..n {
                        for ci in 0..c {
                            let wc = wv.data()[ci];
                            let base = (ni * c + ci) * hw;
                            for j in 0..hw {
                                dx[base + j] += g.data()[base + j] * wc;
                            }
                        }
                    }
                }
                {
                    let xd = xv.clone();
                    let dw = grad_buf(grads, *w, Shape::new(1, c, 1, 1));
                    for ci in 0..c {
                        let mut acc = 0.0f64;
                        for ni in 0..n {
                            let base = (ni * c + ci) * hw;
                            for j in 0..hw {
                                acc += g.data()[base + j] as f64 * xd.data()[base + j] as f64;
                            }
                        }
                        dw[ci] += acc as f32;
                    }
                }
                {
                    let db = grad_buf(grads, *b, Shape::new(1, c, 1, 1));
                    for ci in 0..c {
                        let mut acc = 0.0f64;
                        for ni in 0..n {
                            let base = (ni * c + ci) * hw;
                            for j in 0..hw {
                                acc += g.data()[base + j] as f64;
                            }
                        }
                        db[ci] += acc as f32;
                    }
                }
            }
            Op::PerChannelNorm { x, mean, inv_std } => {
                let xv = self.value(*x);
                let (n, c, h, w) = xv.dims();
                let hw = h * w;
                let m = hw as f64;
                let dst = grad_buf(grads, *x, xv.shape());
                for ni in 0..n {
                    for ci in 0..c {
                        let mu = mean[ni * c + ci] as f64;
                        let r = inv_std[ni * c + ci] as f64;
                        let base = (ni * c + ci) * hw;
                        let mut sum_g = 0.0f64;
                        let mut sum_gx = 0.0f64;
                        for j in 0..hw {
                            let xh = (xv.data()[base + j] as f64 - mu) * r;
                            let gj = g.data()[base + j] as f64;
                            sum_g += gj;
                            sum_gx += gj * xh;
                        }
                        let mg = sum_g / m;
                        let mgx = sum_gx / m;
                        for j in 0..hw {
                            let xh = (xv.data()[base + j] as f64 - mu) * r;
                            let gj = g.data()[base + j] as f64;
                            dst[base + j] += (r * (gj - mg - xh * mgx)) as f32;
                        }
                    }
                }
            }
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                pad,
            } => {
                conv2d_bwd(self, *x, *w, *b, *stride, *pad, g, grads);
            }
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let lshape = self.value(*logits).shape();
                let (n, k) = (lshape.n, lshape.c);
                let s = g.data()[0] as f64 / n as f64;
                let dst = grad_buf(grads, *logits, lshape);
                for ni in 0..n {
                    for ki in 0..k {
                        let ind = if targets[ni] == ki { 1.0 } else { 0.0 };
                        dst[ni * k + ki] += (s * (probs[ni * k + ki] as f64 - ind)) as f32;
                    }
                }
            }
            Op::Scale { x, k } => {
                let dst = grad_buf(grads, *x, g.shape());
                for (d, &gv) in dst.iter_mut().zip(g.data()) {
                    *d += k * gv;
                }
            }
            Op::SumAll { x } => {
                let xshape = self.value(*x).shape();
                let s = g.data()[0];
                let dst = grad_buf(grads, *x, xshape);
                for d in dst.iter_mut() {
                    *d += s;
                }
            }
        }
    }
}

fn grad_buf(grads: &mut [Option<Tensor4>], id: ValueId, shape: Shape) -> &mut [f32] {
    let slot = &mut grads[id.0];
    if slot.is_none() {
        *slot = Some(Tensor4::zeros(shape).expect("gradient shape"));
    }
    slot.as_mut().expect("just initialized").data_mut()
}

/// Output rows `oy` for which `oy*stride + k - pad` lands in `[0, extent)`.
fn valid_range(extent: usize, k: usize, stride: usize, pad: usize, out_extent: usize) -> (usize, usize) {
    let lo = if k >= pad {
        0
    } else {
        (pad - k).div_ceil(stride)
    };
    let max_in = extent as isize - 1 + pad as isize - k as isize;
    if max_in < 0 {
        return (0, 0);
    }
    let hi = (max_in as usize / stride + 1).min(out_extent);
    (lo.min(hi), hi)
}

fn conv2d_fwd(
    x: &Tensor4,
    w: &Tensor4,
    b: Option<&Tensor4>,
    stride: usize,
    pad: usize,
) -> Result<Tensor4> {
    let (n, ci, h, wd) = x.dims();
    let (co, wci, kh, kw) = w.dims();
    if wci != ci {
        return Err(Error::ShapeMismatch {
            expected: Shape::new(co, ci, kh, kw),
            got: w.shape(),
        });
    }
    if stride == 0 {
        return Err(Error::InvalidConfig {
            field: "stride",
            message: alloc::string::String::from("must be positive"),
        });
    }
    if h + 2 * pad < kh || wd + 2 * pad < kw {
        return Err(Error::ShapeMismatch {
            expected: w.shape(),
            got: x.shape(),
        });
    }
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    if let Some(bt) = b {
        if bt.shape() != Shape::new(1, co, 1, 1) {
            return Err(Error::LengthMismatch {
                name: "bias",
                expected: co,
                got: bt.numel(),
            });
        }
    }
    let mut out = Tensor4::zeros(Shape::new(n, co, oh, ow))?;
    // Accumulation order per output element is fixed: bias, then
    // (ci, ky, kx) ascending. Output elements are independent, so the inner
    // row loop vectorizes.
    for ni in 0..n {
        for coi in 0..co {
            let bias = b.map(|bt| bt.data()[coi]).unwrap_or(0.0);
            let base = (ni * co + coi) * oh * ow;
            let plane = &mut out.data_mut()[base..base + oh * ow];
            plane.fill(bias);
            for cii in 0..ci {
                let xch = x.channel(ni, cii);
                // Fused three-tap row pass for the common 3x3/stride-1/pad-1
                // case; per-element accumulation order stays (ky, kx)-ascending.
                if kh == 3 && kw == 3 && stride == 1 && pad == 1 && wd >= 2 {
                    for ky in 0..3 {
                        let (oy_lo, oy_hi) = valid_range(h, ky, 1, 1, oh);
                        let w0 = w.at(coi, cii, ky, 0);
                        let w1 = w.at(coi, cii, ky, 1);
                        let w2 = w.at(coi, cii, ky, 2);
                        for oy in oy_lo..oy_hi {
                            let iy = oy + ky - 1;
                            let xrow = &xch[iy * wd..(iy + 1) * wd];
                            let orow = &mut plane[oy * ow..(oy + 1) * ow];
                            let last = ow - 1;
                            orow[0] += w1 * xrow[0] + w2 * xrow[1];
                            for ox in 1..last {
                                orow[ox] +=
                                    w0 * xrow[ox - 1] + w1 * xrow[ox] + w2 * xrow[ox + 1];
                            }
                            orow[last] += w0 * xrow[last - 1] + w1 * xrow[last];
                        }
                    }
                    continue;
                }
                for ky in 0..kh {
                    let (oy_lo, oy_hi) = valid_range(h, ky, stride, pad, oh);
                    for kx in 0..kw {
                        let wv = w.at(coi, cii, ky, kx);
                        let (ox_lo, ox_hi) = valid_range(wd, kx, stride, pad, ow);
                        if ox_hi <= ox_lo {
                            continue;
                        }
                        let len = ox_hi - ox_lo;
                        for oy in oy_lo..oy_hi {
                            let iy = oy * stride + ky - pad;
                            let ix0 = ox_lo * stride + kx - pad;
                            let orow = &mut plane[oy * ow + ox_lo..oy * ow + ox_hi];
                            if stride == 1 {
                                let xrow = &xch[iy * wd + ix0..iy * wd + ix0 + len];
                                for (o, &xv) in orow.iter_mut().zip(xrow) {
                                    *o += wv * xv;
                                }
                            } else {
                                let xrow = &xch[iy * wd..(iy + 1) * wd];
                                for (i, o) in orow.iter_mut().enumerate() {
                                    *o += wv * xrow[ix0 + i * stride];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Dot product with eight fixed-position partial sums, combined pairwise at
/// the end. The lane layout is part of the accumulation-order contract.
#[inline]
fn dot_lanes(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [0.0f32; 8];
    let mut chunks_a = a.chunks_exact(8);
    let mut chunks_b = b.chunks_exact(8);
    for (ca, cb) in (&mut chunks_a).zip(&mut chunks_b) {
        for l in 0..8 {
            lanes[l] += ca[l] * cb[l];
        }
    }
    let mut tail = 0.0f32;
    for (&av, &bv) in chunks_a.remainder().iter().zip(chunks_b.remainder()) {
        tail += av * bv;
    }
    let p0 = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    let p1 = (lanes[4] + lanes[5]) + (lanes[6] + lanes[7]);
    (p0 + p1) + tail
}

#[allow(clippy::too_many_arguments)]
fn conv2d_bwd(
    tape: &Tape,
    x: ValueId,
    w: ValueId,
    b: Option<ValueId>,
    stride: usize,
    pad: usize,
    g: &Tensor4,
    grads: &mut [Option<Tensor4>],
) {
    let xv = tape.value(x).clone();
    let wv = tape.value(w).clone();
    let (n, ci, h, wd) = xv.dims();
    let (co, _, kh, kw) = wv.dims();
    let (_, _, oh, ow) = g.dims();

    if let Some(bid) = b {
        let db = grad_buf(grads, bid, Shape::new(1, co, 1, 1));
        for coi in 0..co {
            let mut acc = 0.0f64;
            for ni in 0..n {
                for &gv in g.channel(ni, coi) {
                    acc += gv as f64;
                }
            }
            db[coi] += acc as f32;
        }
    }

    {
        let dw = grad_buf(grads, w, wv.shape());
        for coi in 0..co {
            for cii in 0..ci {
                for ky in 0..kh {
                    let (oy_lo, oy_hi) = valid_range(h, ky, stride, pad, oh);
                    for kx in 0..kw {
                        let (ox_lo, ox_hi) = valid_range(wd, kx, stride, pad, ow);
                        if ox_hi <= ox_lo {
                            continue;
                        }
                        let len = ox_hi - ox_lo;
                        let mut acc = 0.0f32;
                        for ni in 0..n {
                            let gch = g.channel(ni, coi);
                            let xch = xv.channel(ni, cii);
                            for oy in oy_lo..oy_hi {
                                let iy = oy * stride + ky - pad;
                                let grow = &gch[oy * ow + ox_lo..oy * ow + ox_hi];
                                if stride == 1 {
                                    let ix0 = ox_lo + kx - pad;
                                    acc += dot_lanes(grow, &xch[iy * wd + ix0..iy * wd + ix0 + len]);
                                } else {
                                    let xrow = &xch[iy * wd..(iy + 1) * wd];
                                    for (i, &gv) in grow.iter().enumerate() {
                                        let ix = (ox_lo + i) * stride + kx - pad;
                                        acc += gv * xrow[ix];
                                    }
                                }
                            }
                        }
                        dw[((coi * ci + cii) * kh + ky) * kw + kx] += acc;
                    }
                }
            }
        }
    }

    {
        let dx = grad_buf(grads, x, xv.shape());
        for ni in 0..n {
            for cii in 0..ci {
                let base = (ni * ci + cii) * h * wd;
                let plane = &mut dx[base..base + h * wd];
                for coi in 0..co {
                    let gch = g.channel(ni, coi);
                    // Transposed three-tap row pass, mirroring the forward
                    // fast path.
                    if kh == 3 && kw == 3 && stride == 1 && pad == 1 && wd >= 2 {
                        for ky in 0..3 {
                            let (oy_lo, oy_hi) = valid_range(h, ky, 1, 1, oh);
                            let w0 = wv.at(coi, cii, ky, 0);
                            let w1 = wv.at(coi, cii, ky, 1);
                            let w2 = wv.at(coi, cii, ky, 2);
                            for oy in oy_lo..oy_hi {
                                let iy = oy + ky - 1;
                                let grow = &gch[oy * ow..(oy + 1) * ow];
                                let drow = &mut plane[iy * wd..(iy + 1) * wd];
                                let last = wd - 1;
                                drow[0] += w1 * grow[0] + w0 * grow[1];
                                for ix in 1..last {
                                    drow[ix] += w2 * grow[ix - 1]
                                        + w1 * grow[ix]
                                        + w0 * grow[ix + 1];
                                }
                                drow[last] += w2 * grow[last - 1] + w1 * grow[last];
                            }
                        }
                        continue;
                    }
                    for ky in 0..kh {
                        let (oy_lo, oy_hi) = valid_range(h, ky, stride, pad, oh);
                        for kx in 0..kw {
                            let wvv = wv.at(coi, cii, ky, kx);
                            let (ox_lo, ox_hi) = valid_range(wd, kx, stride, pad, ow);
                            if ox_hi <= ox_lo {
                                continue;
                            }
                            let len = ox_hi - ox_lo;
                            for oy in oy_lo..oy_hi {
                                let iy = oy * stride + ky - pad;
                                let grow = &gch[oy * ow + ox_lo..oy * ow + ox_hi];
                                if stride == 1 {
                                    let ix0 = ox_lo + kx - pad;
                                    let drow = &mut plane[iy * wd + ix0..iy * wd + ix0 + len];
                                    for (d, &gv) in drow.iter_mut().zip(grow) {
                                        *d += wvv * gv;
                                    }
                                } else {
                                    let drow = &mut plane[iy * wd..(iy + 1) * wd];
                                    for (i, &gv) in grow.iter().enumerate() {
                                        let ix = (ox_lo + i) * stride + kx - pad;
                                        drow[ix] += wvv * gv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn softmax_xent_fwd(logits: &Tensor4, targets: &[usize]) -> Result<(Tensor4, Vec<f32>)> {
    let (n, k, h, w) = logits.dims();
    if h != 1 || w != 1 {
        return Err(Error::ShapeMismatch {
            expected: Shape::new(n, k, 1, 1),
            got: logits.shape(),
        });
    }
    if targets.len() != n {
        return Err(Error::LengthMismatch {
            name: "targets",
            expected: n,
            got: targets.len(),
        });
    }
    let mut probs = vec![0.0f32; n * k];
    let mut total = 0.0f64;
    for ni in 0..n {
        let t = targets[ni];
        if t >= k {
            return Err(Error::InvalidConfig {
                field: "targets",
                message: alloc::format!("class index {t} out of range for {k} classes"),
            });
        }
        let row = &logits.data()[ni * k..(ni + 1) * k];
        let mut maxv = f64::NEG_INFINITY;
        for &v in row {
            maxv = maxv.max(v as f64);
        }
        let mut z = 0.0f64;
        for &v in row {
            z += libm::exp(v as f64 - maxv);
        }
        for (ki, &v) in row.iter().enumerate() {
            probs[ni * k + ki] = (libm::exp(v as f64 - maxv) / z) as f32;
        }
        total += libm::log(z) - (row[t] as f64 - maxv);
    }
    let loss = Tensor4::from_dims(1, 1, 1, 1, vec![(total / n as f64) as f32])?;
    Ok((loss, probs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn scalar_seed() -> Tensor4 {
        Tensor4::from_dims(1, 1, 1, 1, vec![1.0]).unwrap()
    }

    #[test]
    fn shuffle_backward_is_inverse_permutation() {
        let mut rng = Rng::new(4);
        let x = Tensor4::uniform(Shape::new(1, 6, 2, 2), -1.0, 1.0, &mut rng).unwrap();
        let g_out = Tensor4::uniform(Shape::new(1, 6, 2, 2), -1.0, 1.0, &mut rng).unwrap();
        let mut tape = Tape::new();
        let xid = tape.leaf(x);
        let y = tape.shuffle_ch(xid, 2).unwrap();
        let grads = tape.backward(y, &g_out).unwrap();
        let dx = grads.get(xid).unwrap();
        // Adjoint of a permutation is its inverse: applying the forward
        // shuffle to dx must reproduce g_out bit-exactly.
        let roundtrip = tensor::channel_shuffle(dx, 2).unwrap();
        assert_eq!(roundtrip, g_out);
    }

    #[test]
    fn sigmoid_backward_at_zero_is_quarter() {
        let x = Tensor4::from_dims(1, 1, 1, 1, vec![0.0]).unwrap();
        let mut tape = Tape::new();
        let xid = tape.leaf(x);
        let y = tape.sigmoid(xid);
        let grads = tape.backward(y, &scalar_seed()).unwrap();
        assert_eq!(grads.get(xid).unwrap().data()[0], 0.25);
    }

    #[test]
    fn zero_upstream_gradient_gives_exact_zeros() {
        let mut rng = Rng::new(8);
        let x = Tensor4::uniform(Shape::new(2, 4, 3, 3), -1.0, 1.0, &mut rng).unwrap();
        let w = Tensor4::uniform(Shape::new(1, 4, 1, 1), -1.0, 1.0, &mut rng).unwrap();
        let b = Tensor4::uniform(Shape::new(1, 4, 1, 1), -1.0, 1.0, &mut rng).unwrap();
        let mut tape = Tape::new();
        let xid = tape.leaf(x);
        let wid = tape.leaf(w);
        let bid = tape.leaf(b);
        let nrm = tape.per_channel_norm(xid, 1e-5);
        let aff = tape.scale_shift_ch(nrm, wid, bid).unwrap();
        let gate = tape.sigmoid(aff);
        let out = tape.mul(xid, gate).unwrap();
        let zero = Tensor4::zeros(tape.value(out).shape()).unwrap();
        let grads = tape.backward(out, &zero).unwrap();
        for id in [xid, wid, bid] {
            assert!(grads.get(id).unwrap().data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn conv2d_hand_computed_case() {
        // 1x1 kernel value 2: y = 2x, dw = sum(x), dx = 2 everywhere.
        let x = Tensor4::from_dims(1, 1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor4::from_dims(1, 1, 1, 1, vec![2.0]).unwrap();
        let mut tape = Tape::new();
        let xid = tape.leaf(x);
        let wid = tape.leaf(w);
        let y = tape.conv2d(xid, wid, None, 1, 0).unwrap();
        assert_eq!(tape.value(y).data(), &[2.0, 4.0, 6.0, 8.0]);
        let ones = Tensor4::filled(Shape::new(1, 1, 2, 2), 1.0).unwrap();
        let grads = tape.backward(y, &ones).unwrap();
        assert_eq!(grads.get(wid).unwrap().data(), &[10.0]);
        assert!(grads.get(xid).unwrap().data().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn conv2d_padding_matches_manual_sum() {
        // 3x3 ones kernel, pad 1: output at (0,0) sums the 2x2 corner.
        let x = Tensor4::from_dims(1, 1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor4::filled(Shape::new(1, 1, 3, 3), 1.0).unwrap();
        let mut tape = Tape::new();
        let xid = tape.leaf(x);
        let wid = tape.leaf(w);
        let y = tape.conv2d(xid, wid, None, 1, 1).unwrap();
        assert_eq!(tape.value(y).dims(), (1, 1, 2, 2));
        assert_eq!(tape.value(y).data(), &[10.0, 10.0, 10.0, 10.0]);
    }

    #[test]
    fn conv2d_stride_two_shapes() {
        let x = Tensor4::filled(Shape::new(1, 1, 5, 5), 1.0).unwrap();
        let w = Tensor4::filled(Shape::new(2, 1, 3, 3), 0.5).unwrap();
        let mut tape = Tape::new();
        let xid = tape.leaf(x);
        let wid = tape.leaf(w);
        let y = tape.conv2d(xid, wid, None, 2, 1).unwrap();
        assert_eq!(tape.value(y).dims(), (1, 2, 3, 3));
        // Center output sees all nine taps.
        assert_eq!(tape.value(y).at(0, 0, 1, 1), 4.5);
    }

    #[test]
    fn softmax_cross_entropy_uniform_logits() {
        let logits = Tensor4::zeros(Shape::new(2, 4, 1, 1)).unwrap();
        let mut tape = Tape::new();
        let lid = tape.leaf(logits);
        let loss = tape.softmax_cross_entropy(lid, &[0, 3]).unwrap();
        let expect = (4.0f64).ln() as f32;
        assert!((tape.value(loss).data()[0] - expect).abs() < 1e-6);
        let grads = tape.backward(loss, &scalar_seed()).unwrap();
        let dl = grads.get(lid).unwrap();
        // (p - 1) / n on the target class, p / n elsewhere.
        assert!((dl.at(0, 0, 0, 0) - (0.25 - 1.0) / 2.0).abs() < 1e-6);
        assert!((dl.at(0, 1, 0, 0) - 0.25 / 2.0).abs() < 1e-6);
    }

    #[test]
    fn backward_rejects_bad_seed_shape() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor4::zeros(Shape::new(1, 2, 2, 2)).unwrap());
        let y = tape.relu(x);
        let bad = Tensor4::zeros(Shape::new(1, 2, 1, 1)).unwrap();
        assert!(matches!(
            tape.backward(y, &bad),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn backward_rejects_unknown_id() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor4::zeros(Shape::new(1, 1, 1, 1)).unwrap());
        let _ = x;
        let bogus = ValueId(17);
        assert!(matches!(
            tape.backward(bogus, &scalar_seed()),
            Err(Error::UnknownValue { .. })
        ));
    }

    #[test]
    fn split_concat_tape_round_trip_gradient_is_identity() {
        let mut rng = Rng::new(12);
        let x = Tensor4::uniform(Shape::new(2, 6, 2, 2), -1.0, 1.0, &mut rng).unwrap();
        let g = Tensor4::uniform(Shape::new(2, 6, 2, 2), -1.0, 1.0, &mut rng).unwrap();
        let mut tape = Tape::new();
        let xid = tape.leaf(x);
        let a = tape.narrow_ch(xid, 0, 3).unwrap();
        let b = tape.narrow_ch(xid, 3, 3).unwrap();
        let y = tape.concat_ch(&[a, b]).unwrap();
        let grads = tape.backward(y, &g).unwrap();
        assert_eq!(grads.get(xid).unwrap(), &g);
    }
}
