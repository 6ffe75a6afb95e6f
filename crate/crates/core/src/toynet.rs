//! A small residual classifier used to exercise the attention modules end to
//! end: stem conv, stages of two-conv residual blocks with per-channel
//! spatial normalization (the same primitive the attention module uses, so
//! nothing is batch-coupled), optional attention on each block's residual
//! branch before the add, pooled linear head.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::attention::{trace_sa, trace_se, SaConfig, SaParamIds, SaParams, SeParamIds, SeParams};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tape::{Tape, ValueId};
use crate::tensor::{Shape, Tensor4};

/// Variance guard shared by block normalization and the attention module.
pub const NORM_EPS: f32 = 1e-5;

/// Attention module attached to every residual block.
#[derive(Debug, Clone, PartialEq)]
pub enum ToyAttention {
    None,
    Sa(SaConfig),
    Se { reduction: usize },
}

impl ToyAttention {
    /// Shuffle attention with the toy-scale default of 8 groups.
    pub fn sa_default() -> Self {
        ToyAttention::Sa(SaConfig::with_groups(8))
    }

    /// Squeeze-excitation with the toy-scale default reduction of 8.
    pub fn se_default() -> Self {
        ToyAttention::Se { reduction: 8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyNetConfig {
    pub stage_channels: Vec<usize>,
    pub blocks_per_stage: usize,
    pub classes: usize,
    pub input_channels: usize,
    pub input_size: usize,
    pub attention: ToyAttention,
}

impl Default for ToyNetConfig {
    fn default() -> Self {
        ToyNetConfig {
            stage_channels: alloc::vec![16, 32, 64],
            blocks_per_stage: 2,
            classes: 4,
            input_channels: 1,
            input_size: 32,
            attention: ToyAttention::None,
        }
    }
}

impl ToyNetConfig {
    pub fn with_attention(attention: ToyAttention) -> Self {
        ToyNetConfig {
            attention,
            ..ToyNetConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_channels.is_empty() {
            return Err(Error::EmptyInput("stage channel list"));
        }
        if self.blocks_per_stage == 0 || self.classes < 2 || self.input_channels == 0 {
            return Err(Error::InvalidConfig {
                field: "net",
                message: String::from(
                    "blocks_per_stage and input_channels must be positive, classes at least 2",
                ),
            });
        }
        // Spatial size halves at each stage transition and must stay positive.
        let min_size = 1 << (self.stage_channels.len() - 1);
        if self.input_size < min_size.max(4) {
            return Err(Error::InvalidConfig {
                field: "input_size",
                message: format!("must be at least {}", min_size.max(4)),
            });
        }
        for &c in &self.stage_channels {
            match &self.attention {
                ToyAttention::None => {}
                ToyAttention::Sa(cfg) => {
                    cfg.validate(c)?;
                }
                ToyAttention::Se { reduction } => {
                    if *reduction == 0 || c % reduction != 0 {
                        return Err(Error::NotDivisible {
                            channels: c,
                            parts: *reduction,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum AttnSlots {
    None,
    Sa {
        w1: usize,
        b1: usize,
        w2: usize,
        b2: usize,
        gn_gamma: usize,
        gn_beta: usize,
        mix: Option<(usize, usize)>,
    },
    Se {
        reduce_w: usize,
        reduce_b: usize,
        expand_w: usize,
        expand_b: usize,
    },
}

#[derive(Debug, Clone)]
struct BlockPlan {
    stride: usize,
    conv1: usize,
    norm1: (usize, usize),
    conv2: usize,
    norm2: (usize, usize),
    proj: Option<(usize, usize, usize)>,
    attn: AttnSlots,
}

/// The model: a flat parameter store plus the plan for tracing it.
#[derive(Debug, Clone)]
pub struct ToyNet {
    pub cfg: ToyNetConfig,
    names: Vec<String>,
    params: Vec<Tensor4>,
    stem: (usize, usize, usize),
    blocks: Vec<BlockPlan>,
    head: (usize, usize),
}

struct Builder<'a> {
    names: Vec<String>,
    params: Vec<Tensor4>,
    rng: &'a mut Rng,
}

impl<'a> Builder<'a> {
    fn push(&mut self, name: String, t: Tensor4) -> usize {
        self.names.push(name);
        self.params.push(t);
        self.params.len() - 1
    }

    fn conv(&mut self, name: String, co: usize, ci: usize, k: usize) -> Result<usize> {
        let std = libm::sqrtf(2.0 / (ci * k * k) as f32);
        let t = Tensor4::normal(Shape::new(co, ci, k, k), 0.0, std, self.rng)?;
        Ok(self.push(name, t))
    }

    fn norm(&mut self, prefix: &str, c: usize) -> Result<(usize, usize)> {
        let g = self.push(
            format!("{prefix}.gamma"),
            Tensor4::filled(Shape::new(1, c, 1, 1), 1.0)?,
        );
        let b = self.push(
            format!("{prefix}.beta"),
            Tensor4::zeros(Shape::new(1, c, 1, 1))?,
        );
        Ok((g, b))
    }

    fn vector(&mut self, name: String, values: &[f32]) -> Result<usize> {
        let t = Tensor4::from_dims(1, values.len(), 1, 1, values.to_vec())?;
        Ok(self.push(name, t))
    }
}

impl ToyNet {
    /// Builds and initializes the model. Convolutions draw from `rng` in a
    /// fixed order; attention parameters use their transparent
    /// initialization, so equal seeds give bit-identical models.
    pub fn build(cfg: ToyNetConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let mut b = Builder {
            names: Vec::new(),
            params: Vec::new(),
            rng,
        };

        let c0 = cfg.stage_channels[0];
        let stem_conv = b.conv(String::from("stem.conv"), c0, cfg.input_channels, 3)?;
        let stem_norm = b.norm("stem.norm", c0)?;

        let mut blocks = Vec::new();
        let mut in_ch = c0;
        for (si, &out_ch) in cfg.stage_channels.iter().enumerate() {
            for bi in 0..cfg.blocks_per_stage {
                let p = format!("s{si}.b{bi}");
                let stride = if bi == 0 && si > 0 { 2 } else { 1 };
                let conv1 = b.conv(format!("{p}.conv1"), out_ch, in_ch, 3)?;
                let norm1 = b.norm(&format!("{p}.norm1"), out_ch)?;
                let conv2 = b.conv(format!("{p}.conv2"), out_ch, out_ch, 3)?;
                let norm2 = b.norm(&format!("{p}.norm2"), out_ch)?;
                let proj = if stride != 1 || in_ch != out_ch {
                    let pc = b.conv(format!("{p}.proj.conv"), out_ch, in_ch, 1)?;
                    let (pg, pb) = b.norm(&format!("{p}.proj.norm"), out_ch)?;
                    Some((pc, pg, pb))
                } else {
                    None
                };
                let attn = match &cfg.attention {
                    ToyAttention::None => AttnSlots::None,
                    ToyAttention::Sa(sa_cfg) => {
                        let conv_gate = sa_cfg.enable_fc
                            && sa_cfg.fc_variant == crate::attention::FcVariant::OneByOneConv;
                        let init = if conv_gate {
                            SaParams::init_conv_gate(out_ch, sa_cfg.groups)?
                        } else {
                            SaParams::init(out_ch, sa_cfg.groups)?
                        };
                        let l = init.sub_width();
                        let w1 = b.vector(format!("{p}.sa.w1"), &init.w1)?;
                        let b1 = b.vector(format!("{p}.sa.b1"), &init.b1)?;
                        let w2 = b.vector(format!("{p}.sa.w2"), &init.w2)?;
                        let b2 = b.vector(format!("{p}.sa.b2"), &init.b2)?;
                        let gn_gamma = b.vector(format!("{p}.sa.gn_gamma"), &init.gn_gamma)?;
                        let gn_beta = b.vector(format!("{p}.sa.gn_beta"), &init.gn_beta)?;
                        let mix = match (init.mix1, init.mix2) {
                            (Some(m1), Some(m2)) => {
                                let i1 = b.push(
                                    format!("{p}.sa.mix1"),
                                    Tensor4::from_dims(l, l, 1, 1, m1)?,
                                );
                                let i2 = b.push(
                                    format!("{p}.sa.mix2"),
                                    Tensor4::from_dims(l, l, 1, 1, m2)?,
                                );
                                Some((i1, i2))
                            }
                            _ => None,
                        };
                        AttnSlots::Sa {
                            w1,
                            b1,
                            w2,
                            b2,
                            gn_gamma,
                            gn_beta,
                            mix,
                        }
                    }
                    ToyAttention::Se { reduction } => {
                        let se = SeParams::random(out_ch, *reduction, b.rng)?;
                        AttnSlots::Se {
                            reduce_w: b.push(format!("{p}.se.reduce_w"), se.reduce_w),
                            reduce_b: b.push(format!("{p}.se.reduce_b"), se.reduce_b),
                            expand_w: b.push(format!("{p}.se.expand_w"), se.expand_w),
                            expand_b: b.push(format!("{p}.se.expand_b"), se.expand_b),
                        }
                    }
                };
                blocks.push(BlockPlan {
                    stride,
                    conv1,
                    norm1,
                    conv2,
                    norm2,
                    proj,
                    attn,
                });
                in_ch = out_ch;
            }
        }

        let last = *cfg.stage_channels.last().expect("non-empty stages");
        let head_std = libm::sqrtf(1.0 / last as f32);
        let head_kernel = Tensor4::normal(Shape::new(cfg.classes, last, 1, 1), 0.0, head_std, b.rng)?;
        let head_w = b.push(String::from("head.w"), head_kernel);
        let head_b = b.push(
            String::from("head.b"),
            Tensor4::zeros(Shape::new(1, cfg.classes, 1, 1))?,
        );

        Ok(ToyNet {
            cfg,
            names: b.names,
            params: b.params,
            stem: (stem_conv, stem_norm.0, stem_norm.1),
            blocks,
            head: (head_w, head_b),
        })
    }

    pub fn params(&self) -> &[Tensor4] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor4] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn find_param(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Total learnable scalar count.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor4::numel).sum()
    }

    /// Records the full forward pass on `tape`, pushing every parameter as a
    /// leaf. Returns the leaf ids (aligned with `params()`) and the logits id.
    pub fn trace(&self, tape: &mut Tape, x: ValueId) -> Result<(Vec<ValueId>, ValueId)> {
        let pids: Vec<ValueId> = self.params.iter().map(|p| tape.leaf(p.clone())).collect();

        let mut h = tape.conv2d(x, pids[self.stem.0], None, 1, 1)?;
        h = self.normed(tape, h, &pids, (self.stem.1, self.stem.2))?;
        h = tape.relu(h);

        for block in &self.blocks {
            h = self.trace_block(tape, h, block, &pids)?;
        }

        let pooled = tape.mean_spatial(h);
        let logits = tape.conv2d(pooled, pids[self.head.0], Some(pids[self.head.1]), 1, 0)?;
        Ok((pids, logits))
    }

    fn normed(
        &self,
        tape: &mut Tape,
        x: ValueId,
        pids: &[ValueId],
        affine: (usize, usize),
    ) -> Result<ValueId> {
        let n = tape.per_channel_norm(x, NORM_EPS);
        tape.scale_shift_ch(n, pids[affine.0], pids[affine.1])
    }

    fn trace_block(
        &self,
        tape: &mut Tape,
        x: ValueId,
        block: &BlockPlan,
        pids: &[ValueId],
    ) -> Result<ValueId> {
        let skip = match block.proj {
            None => x,
            Some((pc, pg, pb)) => {
                let s = tape.conv2d(x, pids[pc], None, block.stride, 0)?;
                self.normed(tape, s, pids, (pg, pb))?
            }
        };
        let mut h = tape.conv2d(x, pids[block.conv1], None, block.stride, 1)?;
        h = self.normed(tape, h, pids, block.norm1)?;
        h = tape.relu(h);
        h = tape.conv2d(h, pids[block.conv2], None, 1, 1)?;
        h = self.normed(tape, h, pids, block.norm2)?;

        h = match &block.attn {
            AttnSlots::None => h,
            AttnSlots::Sa {
                w1,
                b1,
                w2,
                b2,
                gn_gamma,
                gn_beta,
                mix,
            } => {
                let sa_cfg = match &self.cfg.attention {
                    ToyAttention::Sa(c) => c,
                    _ => unreachable!("sa slots imply sa config"),
                };
                let ids = SaParamIds {
                    w1: pids[*w1],
                    b1: pids[*b1],
                    w2: pids[*w2],
                    b2: pids[*b2],
                    gn_gamma: pids[*gn_gamma],
                    gn_beta: pids[*gn_beta],
                    mix1: mix.map(|(a, _)| pids[a]),
                    mix2: mix.map(|(_, b)| pids[b]),
                };
                trace_sa(tape, h, &ids, sa_cfg)?
            }
            AttnSlots::Se {
                reduce_w,
                reduce_b,
                expand_w,
                expand_b,
            } => {
                let ids = SeParamIds {
                    reduce_w: pids[*reduce_w],
                    reduce_b: pids[*reduce_b],
                    expand_w: pids[*expand_w],
                    expand_b: pids[*expand_b],
                };
                trace_se(tape, h, &ids)?
            }
        };

        let merged = tape.add(h, skip)?;
        Ok(tape.relu(merged))
    }

    /// Plain forward pass to `(n, classes, 1, 1)` logits.
    pub fn forward_logits(&self, x: &Tensor4) -> Result<Tensor4> {
        let mut tape = Tape::new();
        let xid = tape.leaf(x.clone());
        let (_, logits) = self.trace(&mut tape, xid)?;
        Ok(tape.value(logits).clone())
    }
}

/// Index of the largest logit per sample; ties go to the lower index.
pub fn argmax_classes(logits: &Tensor4) -> Vec<usize> {
    let (n, k, _, _) = logits.dims();
    (0..n)
        .map(|ni| {
            let row = &logits.data()[ni * k..(ni + 1) * k];
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{self, sigmoid_scalar};

    fn tiny_cfg(attention: ToyAttention) -> ToyNetConfig {
        ToyNetConfig {
            stage_channels: alloc::vec![16],
            blocks_per_stage: 1,
            classes: 4,
            input_channels: 1,
            input_size: 8,
            attention,
        }
    }

    #[test]
    fn equal_seeds_build_identical_models() {
        let a = ToyNet::build(
            ToyNetConfig::with_attention(ToyAttention::sa_default()),
            &mut Rng::new(3),
        )
        .unwrap();
        let b = ToyNet::build(
            ToyNetConfig::with_attention(ToyAttention::sa_default()),
            &mut Rng::new(3),
        )
        .unwrap();
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn sa_param_overhead_matches_formula() {
        let base = ToyNet::build(ToyNetConfig::default(), &mut Rng::new(5)).unwrap();
        let sa = ToyNet::build(
            ToyNetConfig::with_attention(ToyAttention::sa_default()),
            &mut Rng::new(5),
        )
        .unwrap();
        // Two blocks per stage, 3C/G each with G = 8.
        let expected: usize = [16usize, 32, 64].iter().map(|c| 2 * 3 * c / 8).sum();
        assert_eq!(sa.param_count() - base.param_count(), expected);
        assert_eq!(expected, 84);
    }

    #[test]
    fn rejects_incompatible_attention_width() {
        let cfg = ToyNetConfig {
            stage_channels: alloc::vec![12],
            attention: ToyAttention::sa_default(),
            ..ToyNetConfig::default()
        };
        assert!(matches!(
            ToyNet::build(cfg, &mut Rng::new(1)),
            Err(Error::InvalidGrouping { channels: 12, groups: 8 })
        ));
    }

    #[test]
    fn block_with_init_sa_is_scaled_shuffle_of_plain_branch() {
        // One stem + one identity-skip block. The SA net shares conv weights
        // with the plain net (attention init draws nothing from the rng), so
        // its block output must be relu(skip + sigmoid(1) * shuffle(branch)).
        let plain = ToyNet::build(tiny_cfg(ToyAttention::None), &mut Rng::new(11)).unwrap();
        let sa = ToyNet::build(
            tiny_cfg(ToyAttention::Sa(SaConfig::with_groups(4))),
            &mut Rng::new(11),
        )
        .unwrap();
        for name in ["stem.conv", "s0.b0.conv1", "s0.b0.conv2", "head.w"] {
            let i = plain.find_param(name).unwrap();
            let j = sa.find_param(name).unwrap();
            assert_eq!(plain.params()[i], sa.params()[j], "{name}");
        }

        let mut rng = Rng::new(12);
        let x = Tensor4::uniform(Shape::new(2, 1, 8, 8), -1.0, 1.0, &mut rng).unwrap();

        // Replicate the plain block up to the attention point.
        let mut tape = Tape::new();
        let xid = tape.leaf(x.clone());
        let (pids, _) = plain.trace(&mut tape, xid).unwrap();
        let _ = pids;
        // Rebuild the branch manually from the plain parameters.
        let p = |name: &str| plain.params()[plain.find_param(name).unwrap()].clone();
        let stem = {
            let mut t = Tape::new();
            let xi = t.leaf(x.clone());
            let c = t.leaf(p("stem.conv"));
            let g = t.leaf(p("stem.norm.gamma"));
            let bta = t.leaf(p("stem.norm.beta"));
            let h = t.conv2d(xi, c, None, 1, 1).unwrap();
            let h = t.per_channel_norm(h, NORM_EPS);
            let h = t.scale_shift_ch(h, g, bta).unwrap();
            let h = t.relu(h);
            t.value(h).clone()
        };
        let branch = {
            let mut t = Tape::new();
            let hi = t.leaf(stem.clone());
            let c1 = t.leaf(p("s0.b0.conv1"));
            let g1 = t.leaf(p("s0.b0.norm1.gamma"));
            let b1 = t.leaf(p("s0.b0.norm1.beta"));
            let c2 = t.leaf(p("s0.b0.conv2"));
            let g2 = t.leaf(p("s0.b0.norm2.gamma"));
            let b2 = t.leaf(p("s0.b0.norm2.beta"));
            let h = t.conv2d(hi, c1, None, 1, 1).unwrap();
            let h = t.per_channel_norm(h, NORM_EPS);
            let h = t.scale_shift_ch(h, g1, b1).unwrap();
            let h = t.relu(h);
            let h = t.conv2d(h, c2, None, 1, 1).unwrap();
            let h = t.per_channel_norm(h, NORM_EPS);
            let h = t.scale_shift_ch(h, g2, b2).unwrap();
            t.value(h).clone()
        };
        let gate = sigmoid_scalar(1.0);
        let gated = tensor::channel_shuffle(&branch, 2)
            .unwrap()
            .data()
            .iter()
            .map(|&v| gate * v)
            .collect::<alloc::vec::Vec<f32>>();
        let gated = Tensor4::new(branch.shape(), gated).unwrap();
        let expected_block = tensor::relu(&tensor::add(&gated, &stem).unwrap());

        // Head over the expected block output must equal the SA net logits.
        let expected_logits = {
            let mut t = Tape::new();
            let hi = t.leaf(expected_block);
            let hw = t.leaf(p("head.w"));
            let hb = t.leaf(p("head.b"));
            let pooled = t.mean_spatial(hi);
            let l = t.conv2d(pooled, hw, Some(hb), 1, 0).unwrap();
            t.value(l).clone()
        };
        let got = sa.forward_logits(&x).unwrap();
        for (a, b) in got.data().iter().zip(expected_logits.data()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn forward_shapes_and_determinism() {
        let net = ToyNet::build(ToyNetConfig::default(), &mut Rng::new(2)).unwrap();
        let mut rng = Rng::new(3);
        let x = Tensor4::uniform(Shape::new(3, 1, 32, 32), -1.0, 1.0, &mut rng).unwrap();
        let a = net.forward_logits(&x).unwrap();
        let b = net.forward_logits(&x).unwrap();
        assert_eq!(a.dims(), (3, 4, 1, 1));
        assert_eq!(a, b);
    }
}
