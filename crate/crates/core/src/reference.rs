//! Independent scalar-loop reference implementations in 64-bit arithmetic.
//!
//! Everything here is written as plain nested loops over a dedicated `f64`
//! buffer type and never calls into the `f32` kernels. Gradient checks,
//! oracle-equivalence tests, and golden files all treat this module as the
//! ground truth the optimized paths are compared against, so keep it boring:
//! no shared helpers with `tensor`/`tape`, no clever indexing.

use alloc::vec;
use alloc::vec::Vec;

use crate::attention::{FcVariant, SaConfig, SaParams, SeParams};
use crate::cost::FlopCount;
use crate::tensor::Tensor4;

/// Dense rank-4 array of `f64` values, row-major NCHW.
#[derive(Debug, Clone, PartialEq)]
pub struct Ref4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Ref4 {
    pub fn new(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * c * h * w);
        Ref4 { n, c, h, w, data }
    }

    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Ref4::new(n, c, h, w, vec![0.0; n * c * h * w])
    }

    pub fn from_tensor(t: &Tensor4) -> Self {
        let (n, c, h, w) = t.dims();
        Ref4::new(n, c, h, w, t.data().iter().map(|&v| v as f64).collect())
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn idx(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.idx(n, c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, v: f64) {
        let i = self.idx(n, c, h, w);
        self.data[i] = v;
    }

    pub fn mean_spatial(&self) -> Ref4 {
        let m = (self.h * self.w) as f64;
        let mut out = Ref4::zeros(self.n, self.c, 1, 1);
        for ni in 0..self.n {
            for ci in 0..self.c {
                let mut acc = 0.0;
                for hi in 0..self.h {
                    for wi in 0..self.w {
                        acc += self.at(ni, ci, hi, wi);
                    }
                }
                out.data[ni * self.c + ci] = acc / m;
            }
        }
        out
    }

    pub fn sigmoid(&self) -> Ref4 {
        let data = self
            .data
            .iter()
            .map(|&v| 1.0 / (1.0 + libm::exp(-v)))
            .collect();
        Ref4::new(self.n, self.c, self.h, self.w, data)
    }

    pub fn relu(&self) -> Ref4 {
        let data = self
            .data
            .iter()
            .map(|&v| if v > 0.0 { v } else { 0.0 })
            .collect();
        Ref4::new(self.n, self.c, self.h, self.w, data)
    }

    pub fn add(&self, other: &Ref4) -> Ref4 {
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Ref4::new(self.n, self.c, self.h, self.w, data)
    }

    pub fn mul(&self, other: &Ref4) -> Ref4 {
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .collect();
        Ref4::new(self.n, self.c, self.h, self.w, data)
    }

    pub fn scale(&self, k: f64) -> Ref4 {
        let data = self.data.iter().map(|&v| k * v).collect();
        Ref4::new(self.n, self.c, self.h, self.w, data)
    }

    /// Multiply every `(n, c)` slice by the matching scalar of an
    /// `(n, c, 1, 1)` gate.
    pub fn mul_broadcast_ch(&self, gate: &Ref4) -> Ref4 {
        let mut out = self.clone();
        for ni in 0..self.n {
            for ci in 0..self.c {
                let gv = gate.at(ni, ci, 0, 0);
                for hi in 0..self.h {
                    for wi in 0..self.w {
                        let i = self.idx(ni, ci, hi, wi);
                        out.data[i] = self.data[i] * gv;
                    }
                }
            }
        }
        out
    }

    pub fn scale_shift(&self, w: &[f64], b: &[f64]) -> Ref4 {
        let mut out = self.clone();
        for ni in 0..self.n {
            for ci in 0..self.c {
                for hi in 0..self.h {
                    for wi in 0..self.w {
                        let i = self.idx(ni, ci, hi, wi);
                        out.data[i] = w[ci] * self.data[i] + b[ci];
                    }
                }
            }
        }
        out
    }

    /// Per-channel spatial normalization with biased variance.
    pub fn per_channel_norm(&self, eps: f64) -> Ref4 {
        let m = (self.h * self.w) as f64;
        let mut out = self.clone();
        for ni in 0..self.n {
            for ci in 0..self.c {
                let mut mean = 0.0;
                for hi in 0..self.h {
                    for wi in 0..self.w {
                        mean += self.at(ni, ci, hi, wi);
                    }
                }
                mean /= m;
                let mut var = 0.0;
                for hi in 0..self.h {
                    for wi in 0..self.w {
                        let d = self.at(ni, ci, hi, wi) - mean;
                        var += d * d;
                    }
                }
                var /= m;
                let r = 1.0 / libm::sqrt(var + eps);
                for hi in 0..self.h {
                    for wi in 0..self.w {
                        let i = self.idx(ni, ci, hi, wi);
                        out.data[i] = (self.data[i] - mean) * r;
                    }
                }
            }
        }
        out
    }

    pub fn narrow(&self, start: usize, len: usize) -> Ref4 {
        let mut out = Ref4::zeros(self.n, len, self.h, self.w);
        for ni in 0..self.n {
            for ci in 0..len {
                for hi in 0..self.h {
                    for wi in 0..self.w {
                        out.set(ni, ci, hi, wi, self.at(ni, start + ci, hi, wi));
                    }
                }
            }
        }
        out
    }

    pub fn concat(parts: &[Ref4]) -> Ref4 {
        let first = &parts[0];
        let c_total: usize = parts.iter().map(|p| p.c).sum();
        let mut out = Ref4::zeros(first.n, c_total, first.h, first.w);
        let mut offset = 0;
        for p in parts {
            for ni in 0..p.n {
                for ci in 0..p.c {
                    for hi in 0..p.h {
                        for wi in 0..p.w {
                            out.set(ni, offset + ci, hi, wi, p.at(ni, ci, hi, wi));
                        }
                    }
                }
            }
            offset += p.c;
        }
        out
    }

    /// Channel shuffle: output channel `b*g + a` holds input channel
    /// `a*(c/g) + b`.
    pub fn shuffle(&self, g: usize) -> Ref4 {
        let cpg = self.c / g;
        let mut out = self.clone();
        for ni in 0..self.n {
            for a in 0..g {
                for b in 0..cpg {
                    for hi in 0..self.h {
                        for wi in 0..self.w {
                            out.set(ni, b * g + a, hi, wi, self.at(ni, a * cpg + b, hi, wi));
                        }
                    }
                }
            }
        }
        out
    }

    /// Channel-mixing transform: `y[n,d] += m[d,e] * x[n,e]` per position,
    /// where `m` is a row-major `l_out x c` matrix.
    pub fn channel_mix(&self, m: &[f64], l_out: usize, bias: &[f64]) -> Ref4 {
        let mut out = Ref4::zeros(self.n, l_out, self.h, self.w);
        for ni in 0..self.n {
            for d in 0..l_out {
                for hi in 0..self.h {
                    for wi in 0..self.w {
                        let mut acc = bias[d];
                        for e in 0..self.c {
                            acc += m[d * self.c + e] * self.at(ni, e, hi, wi);
                        }
                        out.set(ni, d, hi, wi, acc);
                    }
                }
            }
        }
        out
    }

    /// Cross-correlation with kernel `(co, ci, kh, kw)` and symmetric zero
    /// padding, matching the layout of the `f32` path.
    pub fn conv2d(&self, w: &Ref4, bias: Option<&[f64]>, stride: usize, pad: usize) -> Ref4 {
        let (co, kh, kw) = (w.n, w.h, w.w);
        let oh = (self.h + 2 * pad - kh) / stride + 1;
        let ow = (self.w + 2 * pad - kw) / stride + 1;
        let mut out = Ref4::zeros(self.n, co, oh, ow);
        for ni in 0..self.n {
            for coi in 0..co {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias.map(|b| b[coi]).unwrap_or(0.0);
                        for cii in 0..self.c {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if iy >= 0
                                        && ix >= 0
                                        && (iy as usize) < self.h
                                        && (ix as usize) < self.w
                                    {
                                        acc += w.at(coi, cii, ky, kx)
                                            * self.at(ni, cii, iy as usize, ix as usize);
                                    }
                                }
                            }
                        }
                        out.set(ni, coi, oy, ox, acc);
                    }
                }
            }
        }
        out
    }

    /// Mean cross-entropy of `(n, k, 1, 1)` logits against class indices.
    pub fn softmax_xent(&self, targets: &[usize]) -> f64 {
        let k = self.c;
        let mut total = 0.0;
        for ni in 0..self.n {
            let row = &self.data[ni * k..(ni + 1) * k];
            let mut maxv = f64::NEG_INFINITY;
            for &v in row {
                maxv = maxv.max(v);
            }
            let mut z = 0.0;
            for &v in row {
                z += libm::exp(v - maxv);
            }
            total += libm::log(z) - (row[targets[ni]] - maxv);
        }
        total / self.n as f64
    }

    pub fn sum(&self) -> f64 {
        let mut acc = 0.0;
        for &v in &self.data {
            acc += v;
        }
        acc
    }
}

/// 64-bit copies of one module's parameters.
#[derive(Debug, Clone)]
pub struct RefSaParams {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub gn_gamma: Vec<f64>,
    pub gn_beta: Vec<f64>,
    pub mix1: Option<Vec<f64>>,
    pub mix2: Option<Vec<f64>>,
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

impl From<&SaParams> for RefSaParams {
    fn from(p: &SaParams) -> Self {
        RefSaParams {
            w1: widen(&p.w1),
            b1: widen(&p.b1),
            w2: widen(&p.w2),
            b2: widen(&p.b2),
            gn_gamma: widen(&p.gn_gamma),
            gn_beta: widen(&p.gn_beta),
            mix1: p.mix1.as_deref().map(widen),
            mix2: p.mix2.as_deref().map(widen),
        }
    }
}

/// Reference forward pass of the whole module, composed from the `Ref4`
/// loops above.
pub fn sa_forward_ref(x: &Ref4, p: &RefSaParams, cfg: &SaConfig) -> Ref4 {
    let l = x.c / (2 * cfg.groups);
    let mut groups = Vec::with_capacity(cfg.groups);
    for k in 0..cfg.groups {
        let xk1 = x.narrow(k * 2 * l, l);
        let xk2 = x.narrow(k * 2 * l + l, l);

        let stats = xk1.mean_spatial();
        let t1 = if cfg.enable_fc {
            match cfg.fc_variant {
                FcVariant::PerChannelAffine => stats.scale_shift(&p.w1, &p.b1),
                FcVariant::OneByOneConv => {
                    stats.channel_mix(p.mix1.as_ref().expect("mix1"), l, &p.b1)
                }
            }
        } else {
            stats
        };
        let out1 = xk1.mul_broadcast_ch(&t1.sigmoid());

        let base = if cfg.enable_gn {
            xk2.per_channel_norm(cfg.gn_epsilon as f64)
                .scale_shift(&p.gn_gamma, &p.gn_beta)
        } else {
            xk2.clone()
        };
        let t2 = if cfg.enable_fc {
            match cfg.fc_variant {
                FcVariant::PerChannelAffine => base.scale_shift(&p.w2, &p.b2),
                FcVariant::OneByOneConv => {
                    base.channel_mix(p.mix2.as_ref().expect("mix2"), l, &p.b2)
                }
            }
        } else {
            base
        };
        let out2 = xk2.mul(&t2.sigmoid());

        groups.push(Ref4::concat(&[out1, out2]));
    }
    let merged = Ref4::concat(&groups);
    if cfg.enable_shuffle {
        merged.shuffle(cfg.shuffle_groups)
    } else {
        merged
    }
}

/// Instrumented forward pass for the default (per-channel affine) pipeline:
/// identical math to [`sa_forward_ref`], written as one flat loop nest that
/// bumps a counter at every arithmetic operation it actually performs.
/// Subtractions count as adds; `exp` and `sqrt` count as one each.
pub fn sa_forward_counted(
    x: &Ref4,
    p: &RefSaParams,
    cfg: &SaConfig,
    count: &mut FlopCount,
) -> Ref4 {
    assert_eq!(
        cfg.fc_variant,
        FcVariant::PerChannelAffine,
        "instrumented path covers the default gate"
    );
    let l = x.c / (2 * cfg.groups);
    let m = x.h * x.w;
    let mut out = Ref4::zeros(x.n, x.c, x.h, x.w);

    for ni in 0..x.n {
        for k in 0..cfg.groups {
            let c1 = k * 2 * l;
            let c2 = c1 + l;
            for li in 0..l {
                // Channel branch on channel c1 + li.
                let ci = c1 + li;
                let mut acc = 0.0;
                for hi in 0..x.h {
                    for wi in 0..x.w {
                        acc += x.at(ni, ci, hi, wi);
                        count.adds += 1;
                    }
                }
                let s = acc / m as f64;
                count.divs += 1;
                let t = if cfg.enable_fc {
                    count.muls += 1;
                    count.adds += 1;
                    p.w1[li] * s + p.b1[li]
                } else {
                    s
                };
                let gate = 1.0 / (1.0 + libm::exp(-t));
                count.exps += 1;
                count.adds += 1;
                count.divs += 1;
                for hi in 0..x.h {
                    for wi in 0..x.w {
                        out.set(ni, ci, hi, wi, gate * x.at(ni, ci, hi, wi));
                        count.muls += 1;
                    }
                }

                // Spatial branch on channel c2 + li.
                let ci = c2 + li;
                let (mut mean, mut r) = (0.0, 1.0);
                if cfg.enable_gn {
                    for hi in 0..x.h {
                        for wi in 0..x.w {
                            mean += x.at(ni, ci, hi, wi);
                            count.adds += 1;
                        }
                    }
                    mean /= m as f64;
                    count.divs += 1;
                    let mut var = 0.0;
                    for hi in 0..x.h {
                        for wi in 0..x.w {
                            let d = x.at(ni, ci, hi, wi) - mean;
                            var += d * d;
                            count.adds += 2;
                            count.muls += 1;
                        }
                    }
                    var /= m as f64;
                    count.divs += 1;
                    r = 1.0 / libm::sqrt(var + cfg.gn_epsilon as f64);
                    count.adds += 1;
                    count.sqrts += 1;
                    count.divs += 1;
                }
                for hi in 0..x.h {
                    for wi in 0..x.w {
                        let xv = x.at(ni, ci, hi, wi);
                        let base = if cfg.enable_gn {
                            let xhat = (xv - mean) * r;
                            count.adds += 1;
                            count.muls += 1;
                            let b = p.gn_gamma[li] * xhat + p.gn_beta[li];
                            count.muls += 1;
                            count.adds += 1;
                            b
                        } else {
                            xv
                        };
                        let t = if cfg.enable_fc {
                            count.muls += 1;
                            count.adds += 1;
                            p.w2[li] * base + p.b2[li]
                        } else {
                            base
                        };
                        let gate = 1.0 / (1.0 + libm::exp(-t));
                        count.exps += 1;
                        count.adds += 1;
                        count.divs += 1;
                        out.set(ni, ci, hi, wi, gate * xv);
                        count.muls += 1;
                    }
                }
            }
        }
    }

    if cfg.enable_shuffle {
        out.shuffle(cfg.shuffle_groups)
    } else {
        out
    }
}

/// 64-bit copies of a squeeze-excitation block's parameters.
#[derive(Debug, Clone)]
pub struct RefSeParams {
    pub reduce_w: Vec<f64>,
    pub reduce_b: Vec<f64>,
    pub expand_w: Vec<f64>,
    pub expand_b: Vec<f64>,
    pub channels: usize,
    pub reduced: usize,
}

impl From<&SeParams> for RefSeParams {
    fn from(p: &SeParams) -> Self {
        RefSeParams {
            reduce_w: widen(p.reduce_w.data()),
            reduce_b: widen(p.reduce_b.data()),
            expand_w: widen(p.expand_w.data()),
            expand_b: widen(p.expand_b.data()),
            channels: p.expand_w.shape().n,
            reduced: p.reduce_w.shape().n,
        }
    }
}

/// Reference squeeze-excitation forward pass.
pub fn se_forward_ref(x: &Ref4, p: &RefSeParams) -> Ref4 {
    let pooled = x.mean_spatial();
    let squeezed = pooled
        .channel_mix(&p.reduce_w, p.reduced, &p.reduce_b)
        .relu();
    let excited = squeezed.channel_mix(&p.expand_w, p.channels, &p.expand_b);
    x.mul_broadcast_ch(&excited.sigmoid())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::Shape;

    #[test]
    fn composed_and_counted_pipelines_agree() {
        let mut rng = Rng::new(51);
        let x = Tensor4::uniform(Shape::new(2, 8, 3, 3), -1.0, 1.0, &mut rng).unwrap();
        let params = SaParams::random(8, 2, false, &mut rng).unwrap();
        let cfg = SaConfig::with_groups(2);
        let xr = Ref4::from_tensor(&x);
        let pr = RefSaParams::from(&params);
        let a = sa_forward_ref(&xr, &pr, &cfg);
        let mut count = FlopCount::default();
        let b = sa_forward_counted(&xr, &pr, &cfg, &mut count);
        for (av, bv) in a.data.iter().zip(&b.data) {
            assert!((av - bv).abs() < 1e-12);
        }
        assert!(count.total() > 0);
    }

    #[test]
    fn shuffle_reference_matches_transpose_order() {
        let x = Ref4::new(1, 6, 1, 1, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let y = x.shuffle(2);
        assert_eq!(y.data, vec![0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
    }
}
