//! The shuffle-attention block: grouped two-branch gating followed by a
//! channel shuffle, plus a squeeze-excitation block kept as a comparison
//! baseline.
//!
//! The input is split into `groups` equal sub-features along the channel
//! axis. Each sub-feature is halved again: the first half goes through a
//! channel gate computed from its spatial mean, the second half through a
//! spatial gate computed from its normalized activations. The halves are
//! re-concatenated, the groups re-assembled, and a channel shuffle mixes
//! information across groups. Gate parameters are shared across groups, so
//! one module adds exactly `3 * C / groups` learnable values.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tape::{Tape, ValueId};
use crate::tensor::{self, Shape, Tensor4};

/// Gate transform applied to the branch statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcVariant {
    /// Per-channel affine `w[c] * s + b[c]` (the default).
    PerChannelAffine,
    /// Full channel-mixing matrix over the sub-feature, the "1x1 conv"
    /// ablation.
    OneByOneConv,
}

/// Configuration of one shuffle-attention module.
///
/// The defaults reproduce the main configuration; the flags reproduce the
/// ablation variants (no normalization, no shuffle, no gate transform,
/// channel-mixing gate).
#[derive(Debug, Clone, PartialEq)]
pub struct SaConfig {
    /// Number of sub-feature groups `G`.
    pub groups: usize,
    /// Group count of the final channel shuffle.
    pub shuffle_groups: usize,
    /// Variance guard of the spatial normalization.
    pub gn_epsilon: f32,
    pub enable_gn: bool,
    pub enable_shuffle: bool,
    pub enable_fc: bool,
    pub fc_variant: FcVariant,
}

impl Default for SaConfig {
    fn default() -> Self {
        SaConfig {
            groups: 64,
            shuffle_groups: 2,
            gn_epsilon: 1e-5,
            enable_gn: true,
            enable_shuffle: true,
            enable_fc: true,
            fc_variant: FcVariant::PerChannelAffine,
        }
    }
}

impl SaConfig {
    pub fn with_groups(groups: usize) -> Self {
        SaConfig {
            groups,
            ..SaConfig::default()
        }
    }

    pub fn without_gn(mut self) -> Self {
        self.enable_gn = false;
        self
    }

    pub fn without_shuffle(mut self) -> Self {
        self.enable_shuffle = false;
        self
    }

    pub fn without_fc(mut self) -> Self {
        self.enable_fc = false;
        self
    }

    pub fn with_conv_gate(mut self) -> Self {
        self.fc_variant = FcVariant::OneByOneConv;
        self
    }

    /// Validates the configuration against a channel width and returns the
    /// per-branch sub-feature width `C / (2 * groups)`.
    pub fn validate(&self, channels: usize) -> Result<usize> {
        if self.groups == 0 {
            return Err(Error::InvalidConfig {
                field: "groups",
                message: String::from("must be positive"),
            });
        }
        if self.shuffle_groups == 0 {
            return Err(Error::InvalidConfig {
                field: "shuffle_groups",
                message: String::from("must be positive"),
            });
        }
        if !(self.gn_epsilon > 0.0) {
            return Err(Error::InvalidConfig {
                field: "gn_epsilon",
                message: String::from("must be positive"),
            });
        }
        if channels % (2 * self.groups) != 0 {
            return Err(Error::InvalidGrouping {
                channels,
                groups: self.groups,
            });
        }
        if channels % self.shuffle_groups != 0 {
            return Err(Error::NotDivisible {
                channels,
                parts: self.shuffle_groups,
            });
        }
        Ok(channels / (2 * self.groups))
    }
}

/// Learnable state of one shuffle-attention module for channel width `C` and
/// group count `G`. All vectors have length `C / (2G)` and are shared across
/// the `G` groups; the optional mixing matrices (length `(C/2G)^2`, row-major)
/// only exist for the channel-mixing gate ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct SaParams {
    pub w1: Vec<f32>,
    pub b1: Vec<f32>,
    pub w2: Vec<f32>,
    pub b2: Vec<f32>,
    pub gn_gamma: Vec<f32>,
    pub gn_beta: Vec<f32>,
    pub mix1: Option<Vec<f32>>,
    pub mix2: Option<Vec<f32>>,
}

impl SaParams {
    fn sub_width_for(channels: usize, groups: usize) -> Result<usize> {
        if groups == 0 || channels % (2 * groups) != 0 {
            return Err(Error::InvalidGrouping { channels, groups });
        }
        Ok(channels / (2 * groups))
    }

    /// Fresh initialization: zero gate weights, unit gate biases, identity
    /// normalization affine. Every gate starts at the constant sigmoid(1).
    pub fn init(channels: usize, groups: usize) -> Result<Self> {
        let l = Self::sub_width_for(channels, groups)?;
        Ok(SaParams {
            w1: vec![0.0; l],
            b1: vec![1.0; l],
            w2: vec![0.0; l],
            b2: vec![1.0; l],
            gn_gamma: vec![1.0; l],
            gn_beta: vec![0.0; l],
            mix1: None,
            mix2: None,
        })
    }

    /// Fresh initialization for the channel-mixing gate ablation: zero
    /// matrices, unit biases.
    pub fn init_conv_gate(channels: usize, groups: usize) -> Result<Self> {
        let l = Self::sub_width_for(channels, groups)?;
        let mut p = Self::init(channels, groups)?;
        p.mix1 = Some(vec![0.0; l * l]);
        p.mix2 = Some(vec![0.0; l * l]);
        Ok(p)
    }

    /// Seeded random parameters for fixtures and gradient checks.
    pub fn random(channels: usize, groups: usize, conv_gate: bool, rng: &mut Rng) -> Result<Self> {
        let l = Self::sub_width_for(channels, groups)?;
        let mut vec_of = |lo: f32, hi: f32, len: usize| -> Vec<f32> {
            (0..len).map(|_| rng.uniform(lo, hi)).collect()
        };
        Ok(SaParams {
            w1: vec_of(-1.0, 1.0, l),
            b1: vec_of(-1.0, 1.0, l),
            w2: vec_of(-1.0, 1.0, l),
            b2: vec_of(-1.0, 1.0, l),
            gn_gamma: vec_of(0.5, 1.5, l),
            gn_beta: vec_of(-1.0, 1.0, l),
            mix1: conv_gate.then(|| vec_of(-1.0, 1.0, l * l)),
            mix2: conv_gate.then(|| vec_of(-1.0, 1.0, l * l)),
        })
    }

    /// Per-branch sub-feature width `C / (2G)`.
    pub fn sub_width(&self) -> usize {
        self.w1.len()
    }

    /// Total number of learnable scalars. For the default gate this is
    /// exactly `3 * C / G`.
    pub fn param_count(&self) -> usize {
        self.w1.len()
            + self.b1.len()
            + self.w2.len()
            + self.b2.len()
            + self.gn_gamma.len()
            + self.gn_beta.len()
            + self.mix1.as_ref().map_or(0, Vec::len)
            + self.mix2.as_ref().map_or(0, Vec::len)
    }

    /// Checks every vector length against the `(channels, cfg)` pair and
    /// returns the sub-feature width.
    pub fn validate_for(&self, channels: usize, cfg: &SaConfig) -> Result<usize> {
        let l = cfg.validate(channels)?;
        for (name, len) in [
            ("w1", self.w1.len()),
            ("b1", self.b1.len()),
            ("w2", self.w2.len()),
            ("b2", self.b2.len()),
            ("gn_gamma", self.gn_gamma.len()),
            ("gn_beta", self.gn_beta.len()),
        ] {
            if len != l {
                return Err(Error::LengthMismatch {
                    name,
                    expected: l,
                    got: len,
                });
            }
        }
        if cfg.enable_fc && cfg.fc_variant == FcVariant::OneByOneConv {
            for (name, mix) in [("mix1", &self.mix1), ("mix2", &self.mix2)] {
                match mix {
                    Some(m) if m.len() == l * l => {}
                    Some(m) => {
                        return Err(Error::LengthMismatch {
                            name,
                            expected: l * l,
                            got: m.len(),
                        })
                    }
                    None => {
                        return Err(Error::InvalidConfig {
                            field: "fc_variant",
                            message: String::from(
                                "channel-mixing gate requires mix1/mix2 matrices",
                            ),
                        })
                    }
                }
            }
        }
        Ok(l)
    }
}

/// Channel-attention branch: gates each channel of `xk1` by the sigmoid of an
/// affine transform of its spatial mean.
pub fn channel_branch(xk1: &Tensor4, w1: &[f32], b1: &[f32]) -> Result<Tensor4> {
    let stats = tensor::mean_spatial(xk1);
    let t = tensor::scale_shift(&stats, w1, b1)?;
    let gate = tensor::sigmoid(&t);
    tensor::mul_broadcast_channels(xk1, &gate)
}

/// Spatial-attention branch: gates each position of `xk2` by the sigmoid of
/// an affine transform of its normalized activation. With `with_gn` false the
/// normalization (including its affine) is replaced by the identity.
pub fn spatial_branch(
    xk2: &Tensor4,
    w2: &[f32],
    b2: &[f32],
    gn_gamma: &[f32],
    gn_beta: &[f32],
    eps: f32,
    with_gn: bool,
) -> Result<Tensor4> {
    let base = if with_gn {
        let norm = tensor::normalize_per_channel(xk2, eps);
        tensor::scale_shift(&norm.normalized, gn_gamma, gn_beta)?
    } else {
        xk2.clone()
    };
    let t = tensor::scale_shift(&base, w2, b2)?;
    let gate = tensor::sigmoid(&t);
    tensor::mul(xk2, &gate)
}

/// Tape handles for one module's parameter leaves.
#[derive(Debug, Clone, Copy)]
pub struct SaParamIds {
    pub w1: ValueId,
    pub b1: ValueId,
    pub w2: ValueId,
    pub b2: ValueId,
    pub gn_gamma: ValueId,
    pub gn_beta: ValueId,
    pub mix1: Option<ValueId>,
    pub mix2: Option<ValueId>,
}

impl SaParamIds {
    /// Pushes every parameter as a tape leaf. Vectors become `(1, L, 1, 1)`
    /// tensors; mixing matrices become `(L, L, 1, 1)` kernels.
    pub fn push(
        tape: &mut Tape,
        params: &SaParams,
        cfg: &SaConfig,
        channels: usize,
    ) -> Result<Self> {
        let l = params.validate_for(channels, cfg)?;
        let vec_leaf = |tape: &mut Tape, v: &[f32]| -> Result<ValueId> {
            Ok(tape.leaf(Tensor4::from_dims(1, l, 1, 1, v.to_vec())?))
        };
        let mix_leaf = |tape: &mut Tape, m: &Option<Vec<f32>>| -> Result<Option<ValueId>> {
            match m {
                Some(m) => Ok(Some(tape.leaf(Tensor4::from_dims(l, l, 1, 1, m.clone())?))),
                None => Ok(None),
            }
        };
        Ok(SaParamIds {
            w1: vec_leaf(tape, &params.w1)?,
            b1: vec_leaf(tape, &params.b1)?,
            w2: vec_leaf(tape, &params.w2)?,
            b2: vec_leaf(tape, &params.b2)?,
            gn_gamma: vec_leaf(tape, &params.gn_gamma)?,
            gn_beta: vec_leaf(tape, &params.gn_beta)?,
            mix1: mix_leaf(tape, &params.mix1)?,
            mix2: mix_leaf(tape, &params.mix2)?,
        })
    }
}

fn require_mix(id: Option<ValueId>, name: &'static str) -> Result<ValueId> {
    id.ok_or(Error::InvalidConfig {
        field: name,
        message: String::from("channel-mixing gate requires a mixing matrix"),
    })
}

/// Records the full module pipeline on `tape` and returns the output id.
///
/// Groups are processed in ascending order; the contract requires outputs
/// identical to sequential processing, so any parallel split must preserve
/// per-element accumulation order.
pub fn trace_sa(tape: &mut Tape, x: ValueId, ids: &SaParamIds, cfg: &SaConfig) -> Result<ValueId> {
    let c = tape.value(x).shape().c;
    let l = cfg.validate(c)?;
    let mut group_outs = Vec::with_capacity(cfg.groups);
    for k in 0..cfg.groups {
        let xk1 = tape.narrow_ch(x, k * 2 * l, l)?;
        let xk2 = tape.narrow_ch(x, k * 2 * l + l, l)?;

        let stats = tape.mean_spatial(xk1);
        let t1 = if cfg.enable_fc {
            match cfg.fc_variant {
                FcVariant::PerChannelAffine => tape.scale_shift_ch(stats, ids.w1, ids.b1)?,
                FcVariant::OneByOneConv => {
                    let m = require_mix(ids.mix1, "mix1")?;
                    tape.conv2d(stats, m, Some(ids.b1), 1, 0)?
                }
            }
        } else {
            stats
        };
        let gate1 = tape.sigmoid(t1);
        let out1 = tape.mul_broadcast_ch(xk1, gate1)?;

        let base = if cfg.enable_gn {
            let norm = tape.per_channel_norm(xk2, cfg.gn_epsilon);
            tape.scale_shift_ch(norm, ids.gn_gamma, ids.gn_beta)?
        } else {
            xk2
        };
        let t2 = if cfg.enable_fc {
            match cfg.fc_variant {
                FcVariant::PerChannelAffine => tape.scale_shift_ch(base, ids.w2, ids.b2)?,
                FcVariant::OneByOneConv => {
                    let m = require_mix(ids.mix2, "mix2")?;
                    tape.conv2d(base, m, Some(ids.b2), 1, 0)?
                }
            }
        } else {
            base
        };
        let gate2 = tape.sigmoid(t2);
        let out2 = tape.mul(xk2, gate2)?;

        group_outs.push(tape.concat_ch(&[out1, out2])?);
    }
    let merged = tape.concat_ch(&group_outs)?;
    if cfg.enable_shuffle {
        tape.shuffle_ch(merged, cfg.shuffle_groups)
    } else {
        Ok(merged)
    }
}

/// Runs the module on `x`. Output shape equals input shape.
pub fn sa_forward(x: &Tensor4, params: &SaParams, cfg: &SaConfig) -> Result<Tensor4> {
    let mut tape = Tape::new();
    let xid = tape.leaf(x.clone());
    let ids = SaParamIds::push(&mut tape, params, cfg, x.shape().c)?;
    let out = trace_sa(&mut tape, xid, &ids, cfg)?;
    Ok(tape.value(out).clone())
}

/// Squeeze-excitation parameters: two channel-mixing layers around a
/// bottleneck of width `C / r`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeParams {
    /// `(C/r, C, 1, 1)` squeeze kernel.
    pub reduce_w: Tensor4,
    /// `(1, C/r, 1, 1)` squeeze bias.
    pub reduce_b: Tensor4,
    /// `(C, C/r, 1, 1)` excite kernel.
    pub expand_w: Tensor4,
    /// `(1, C, 1, 1)` excite bias.
    pub expand_b: Tensor4,
}

impl SeParams {
    fn widths(channels: usize, reduction: usize) -> Result<usize> {
        if reduction == 0 || channels % reduction != 0 {
            return Err(Error::NotDivisible {
                channels,
                parts: reduction,
            });
        }
        Ok(channels / reduction)
    }

    pub fn zeros(channels: usize, reduction: usize) -> Result<Self> {
        let r = Self::widths(channels, reduction)?;
        Ok(SeParams {
            reduce_w: Tensor4::zeros(Shape::new(r, channels, 1, 1))?,
            reduce_b: Tensor4::zeros(Shape::new(1, r, 1, 1))?,
            expand_w: Tensor4::zeros(Shape::new(channels, r, 1, 1))?,
            expand_b: Tensor4::zeros(Shape::new(1, channels, 1, 1))?,
        })
    }

    pub fn random(channels: usize, reduction: usize, rng: &mut Rng) -> Result<Self> {
        let r = Self::widths(channels, reduction)?;
        let s1 = libm::sqrtf(2.0 / channels as f32);
        let s2 = libm::sqrtf(2.0 / r as f32);
        Ok(SeParams {
            reduce_w: Tensor4::normal(Shape::new(r, channels, 1, 1), 0.0, s1, rng)?,
            reduce_b: Tensor4::zeros(Shape::new(1, r, 1, 1))?,
            expand_w: Tensor4::normal(Shape::new(channels, r, 1, 1), 0.0, s2, rng)?,
            expand_b: Tensor4::zeros(Shape::new(1, channels, 1, 1))?,
        })
    }

    pub fn channels(&self) -> usize {
        self.expand_w.shape().n
    }

    pub fn param_count(&self) -> usize {
        self.reduce_w.numel() + self.reduce_b.numel() + self.expand_w.numel() + self.expand_b.numel()
    }
}

/// Tape handles for one squeeze-excitation block.
#[derive(Debug, Clone, Copy)]
pub struct SeParamIds {
    pub reduce_w: ValueId,
    pub reduce_b: ValueId,
    pub expand_w: ValueId,
    pub expand_b: ValueId,
}

impl SeParamIds {
    pub fn push(tape: &mut Tape, params: &SeParams) -> Self {
        SeParamIds {
            reduce_w: tape.leaf(params.reduce_w.clone()),
            reduce_b: tape.leaf(params.reduce_b.clone()),
            expand_w: tape.leaf(params.expand_w.clone()),
            expand_b: tape.leaf(params.expand_b.clone()),
        }
    }
}

/// Records the squeeze-excitation pipeline: pooled stats, squeeze, rectify,
/// excite, sigmoid, per-channel scale.
pub fn trace_se(tape: &mut Tape, x: ValueId, ids: &SeParamIds) -> Result<ValueId> {
    let pooled = tape.mean_spatial(x);
    let squeezed = tape.conv2d(pooled, ids.reduce_w, Some(ids.reduce_b), 1, 0)?;
    let hidden = tape.relu(squeezed);
    let excited = tape.conv2d(hidden, ids.expand_w, Some(ids.expand_b), 1, 0)?;
    let gate = tape.sigmoid(excited);
    tape.mul_broadcast_ch(x, gate)
}

/// Runs the squeeze-excitation block on `x`.
pub fn se_forward(x: &Tensor4, params: &SeParams) -> Result<Tensor4> {
    let mut tape = Tape::new();
    let xid = tape.leaf(x.clone());
    let ids = SeParamIds::push(&mut tape, params);
    let out = trace_se(&mut tape, xid, &ids)?;
    Ok(tape.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::sigmoid_scalar;

    const SIGMA_ONE: f32 = 0.731_058_6;

    #[test]
    fn param_count_is_three_c_over_g() {
        for (c, g) in [(256usize, 64usize), (512, 64), (1024, 64), (2048, 64), (16, 8), (4, 2)] {
            let p = SaParams::init(c, g).unwrap();
            assert_eq!(p.param_count(), 3 * c / g, "C={c} G={g}");
        }
        assert_eq!(SaParams::init(2048, 64).unwrap().param_count(), 96);
        // Minimal legal width C = 2G.
        assert_eq!(SaParams::init(4, 2).unwrap().param_count(), 6);
    }

    #[test]
    fn init_rejects_bad_grouping() {
        assert!(matches!(
            SaParams::init(10, 4),
            Err(Error::InvalidGrouping {
                channels: 10,
                groups: 4
            })
        ));
    }

    #[test]
    fn channel_branch_paper_init_is_constant_gate() {
        let mut rng = Rng::new(31);
        let x = Tensor4::uniform(Shape::new(2, 3, 4, 4), -2.0, 2.0, &mut rng).unwrap();
        let y = channel_branch(&x, &[0.0; 3], &[1.0; 3]).unwrap();
        let gate = sigmoid_scalar(1.0);
        for (yv, xv) in y.data().iter().zip(x.data()) {
            assert_eq!(*yv, gate * xv);
        }
        assert!((gate - SIGMA_ONE).abs() < 1e-6);
    }

    #[test]
    fn channel_branch_constant_input_gates_by_sigmoid_of_value() {
        // GAP of a constant channel is the constant, so w=1, b=0 gives
        // gate = sigmoid(v).
        let v = 0.8f32;
        let x = Tensor4::filled(Shape::new(1, 2, 3, 3), v).unwrap();
        let y = channel_branch(&x, &[1.0, 1.0], &[0.0, 0.0]).unwrap();
        let gate = sigmoid_scalar(v);
        for yv in y.data() {
            assert!((yv - gate * v).abs() < 1e-6);
        }
    }

    #[test]
    fn spatial_branch_constant_input_gates_by_sigmoid_of_bias() {
        // Constant channel: normalized value is 0 everywhere, so the gate is
        // sigmoid(b2) regardless of w2.
        let v = 3.0f32;
        let x = Tensor4::filled(Shape::new(1, 2, 4, 4), v).unwrap();
        let y = spatial_branch(&x, &[2.0; 2], &[0.4; 2], &[1.0; 2], &[0.0; 2], 1e-5, true).unwrap();
        let gate = sigmoid_scalar(0.4);
        for yv in y.data() {
            assert!((yv - gate * v).abs() < 1e-6);
        }
    }

    #[test]
    fn spatial_branch_paper_init_is_constant_gate() {
        let mut rng = Rng::new(32);
        let x = Tensor4::uniform(Shape::new(1, 2, 4, 4), -2.0, 2.0, &mut rng).unwrap();
        let y = spatial_branch(&x, &[0.0; 2], &[1.0; 2], &[1.0; 2], &[0.0; 2], 1e-5, true).unwrap();
        let gate = sigmoid_scalar(1.0);
        for (yv, xv) in y.data().iter().zip(x.data()) {
            assert_eq!(*yv, gate * xv);
        }
    }

    #[test]
    fn sa_forward_init_equals_scaled_shuffle() {
        let mut rng = Rng::new(33);
        let x = Tensor4::uniform(Shape::new(2, 16, 3, 3), -2.0, 2.0, &mut rng).unwrap();
        let cfg = SaConfig::with_groups(4);
        let params = SaParams::init(16, 4).unwrap();
        let y = sa_forward(&x, &params, &cfg).unwrap();
        let gate = sigmoid_scalar(1.0);
        let shuffled = tensor::channel_shuffle(&x, 2).unwrap();
        for (yv, sv) in y.data().iter().zip(shuffled.data()) {
            assert_eq!(*yv, gate * sv);
        }
    }

    #[test]
    fn sa_forward_init_without_shuffle_is_pure_scale() {
        let mut rng = Rng::new(34);
        let x = Tensor4::uniform(Shape::new(1, 8, 2, 5), -2.0, 2.0, &mut rng).unwrap();
        let cfg = SaConfig::with_groups(2).without_shuffle();
        let params = SaParams::init(8, 2).unwrap();
        let y = sa_forward(&x, &params, &cfg).unwrap();
        let gate = sigmoid_scalar(1.0);
        for (yv, xv) in y.data().iter().zip(x.data()) {
            assert_eq!(*yv, gate * xv);
        }
    }

    #[test]
    fn sa_forward_matches_branch_composition() {
        let mut rng = Rng::new(35);
        let x = Tensor4::uniform(Shape::new(2, 12, 3, 3), -1.5, 1.5, &mut rng).unwrap();
        let cfg = SaConfig::with_groups(3);
        let params = SaParams::random(12, 3, false, &mut rng).unwrap();
        let fast = sa_forward(&x, &params, &cfg).unwrap();

        let groups = tensor::split_channels(&x, 3).unwrap();
        let mut outs = Vec::new();
        for gx in &groups {
            let halves = tensor::split_channels(gx, 2).unwrap();
            let o1 = channel_branch(&halves[0], &params.w1, &params.b1).unwrap();
            let o2 = spatial_branch(
                &halves[1],
                &params.w2,
                &params.b2,
                &params.gn_gamma,
                &params.gn_beta,
                cfg.gn_epsilon,
                true,
            )
            .unwrap();
            outs.push(tensor::concat_channels(&[o1, o2]).unwrap());
        }
        let merged = tensor::concat_channels(&outs).unwrap();
        let composed = tensor::channel_shuffle(&merged, 2).unwrap();
        assert_eq!(fast, composed);
    }

    #[test]
    fn sa_forward_rejects_bad_grouping() {
        let x = Tensor4::zeros(Shape::new(1, 6, 2, 2)).unwrap();
        let params = SaParams::init(8, 2).unwrap();
        let cfg = SaConfig::with_groups(2);
        assert!(matches!(
            sa_forward(&x, &params, &cfg),
            Err(Error::InvalidGrouping {
                channels: 6,
                groups: 2
            })
        ));
    }

    #[test]
    fn gate_values_bound_outputs() {
        let mut rng = Rng::new(36);
        let x = Tensor4::uniform(Shape::new(1, 16, 4, 4), -3.0, 3.0, &mut rng).unwrap();
        let params = SaParams::random(16, 4, false, &mut rng).unwrap();
        let cfg = SaConfig::with_groups(4);
        let y = sa_forward(&x, &params, &cfg).unwrap();
        let shuffled = tensor::channel_shuffle(&x, 2).unwrap();
        for (yv, xv) in y.data().iter().zip(shuffled.data()) {
            assert!(yv.abs() <= xv.abs() + 1e-7, "gate must attenuate: {yv} vs {xv}");
        }
    }

    #[test]
    fn se_forward_zero_weights_halves_input() {
        let mut rng = Rng::new(37);
        let x = Tensor4::uniform(Shape::new(1, 8, 2, 2), -2.0, 2.0, &mut rng).unwrap();
        let params = SeParams::zeros(8, 2).unwrap();
        let y = se_forward(&x, &params).unwrap();
        for (yv, xv) in y.data().iter().zip(x.data()) {
            assert_eq!(*yv, 0.5 * xv);
        }
    }

    #[test]
    fn se_forward_scalar_chain() {
        // C = 1, r = 1, unit weights, zero bias, constant input v:
        // gate = sigmoid(relu(v)).
        let v = 0.6f32;
        let x = Tensor4::filled(Shape::new(1, 1, 2, 2), v).unwrap();
        let mut params = SeParams::zeros(1, 1).unwrap();
        params.reduce_w.data_mut()[0] = 1.0;
        params.expand_w.data_mut()[0] = 1.0;
        let y = se_forward(&x, &params).unwrap();
        let gate = sigmoid_scalar(v.max(0.0));
        for yv in y.data() {
            assert!((yv - gate * v).abs() < 1e-6);
        }
    }
}
