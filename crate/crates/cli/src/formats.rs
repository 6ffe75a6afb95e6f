//! JSON and CSV schemas: module parameters (bit-exact hex floats), backbone
//! descriptors, training run configuration, history, checkpoints, and the
//! gradient-check report.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use satk_core::attention::{FcVariant, SaConfig, SaParams};
use satk_core::cost::{AttentionKind, CostReport, ModelDescriptor, StageSpec};
use satk_core::dataset::DatasetConfig;
use satk_core::gradcheck::GradCheckReport;
use satk_core::toynet::{ToyAttention, ToyNet, ToyNetConfig};
use satk_core::train::{History, TrainConfig};
use satk_core::{Shape, Tensor4};

use crate::error::CliError;

// Float payloads round-trip exactly through 8-digit hex of the IEEE-754 bits.

fn f32_to_hex(v: f32) -> String {
    format!("{:08x}", v.to_bits())
}

fn hex_to_f32(s: &str) -> Result<f32, CliError> {
    if s.len() != 8 {
        return Err(CliError::Format(format!(
            "float payload `{s}` is not 8 hex digits"
        )));
    }
    u32::from_str_radix(s, 16)
        .map(f32::from_bits)
        .map_err(|_| CliError::Format(format!("float payload `{s}` is not hex")))
}

fn encode_vec(v: &[f32]) -> Vec<String> {
    v.iter().map(|&x| f32_to_hex(x)).collect()
}

fn decode_vec(v: &[String]) -> Result<Vec<f32>, CliError> {
    v.iter().map(|s| hex_to_f32(s)).collect()
}

/// On-disk form of one module's parameters.
#[derive(Debug, Serialize, Deserialize)]
pub struct SaParamsJson {
    #[serde(rename = "C")]
    pub c: usize,
    #[serde(rename = "G")]
    pub g: usize,
    pub w1: Vec<String>,
    pub b1: Vec<String>,
    pub w2: Vec<String>,
    pub b2: Vec<String>,
    pub gn_gamma: Vec<String>,
    pub gn_beta: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mix1: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mix2: Option<Vec<String>>,
}

impl SaParamsJson {
    pub fn from_params(params: &SaParams, c: usize, g: usize) -> Self {
        SaParamsJson {
            c,
            g,
            w1: encode_vec(&params.w1),
            b1: encode_vec(&params.b1),
            w2: encode_vec(&params.w2),
            b2: encode_vec(&params.b2),
            gn_gamma: encode_vec(&params.gn_gamma),
            gn_beta: encode_vec(&params.gn_beta),
            mix1: params.mix1.as_deref().map(encode_vec),
            mix2: params.mix2.as_deref().map(encode_vec),
        }
    }

    /// Decodes and validates every array length against `C/2G`.
    pub fn into_params(self) -> Result<(SaParams, usize, usize), CliError> {
        if self.g == 0 || self.c % (2 * self.g) != 0 {
            return Err(CliError::Config(format!(
                "C={} is not divisible by 2*G (G={})",
                self.c, self.g
            )));
        }
        let l = self.c / (2 * self.g);
        for (name, len) in [
            ("w1", self.w1.len()),
            ("b1", self.b1.len()),
            ("w2", self.w2.len()),
            ("b2", self.b2.len()),
            ("gn_gamma", self.gn_gamma.len()),
            ("gn_beta", self.gn_beta.len()),
        ] {
            if len != l {
                return Err(CliError::Format(format!(
                    "array `{name}` has {len} entries, expected C/2G = {l}"
                )));
            }
        }
        for (name, mix) in [("mix1", &self.mix1), ("mix2", &self.mix2)] {
            if let Some(m) = mix {
                if m.len() != l * l {
                    return Err(CliError::Format(format!(
                        "array `{name}` has {} entries, expected (C/2G)^2 = {}",
                        m.len(),
                        l * l
                    )));
                }
            }
        }
        let params = SaParams {
            w1: decode_vec(&self.w1)?,
            b1: decode_vec(&self.b1)?,
            w2: decode_vec(&self.w2)?,
            b2: decode_vec(&self.b2)?,
            gn_gamma: decode_vec(&self.gn_gamma)?,
            gn_beta: decode_vec(&self.gn_beta)?,
            mix1: self.mix1.as_deref().map(decode_vec).transpose()?,
            mix2: self.mix2.as_deref().map(decode_vec).transpose()?,
        };
        Ok((params, self.c, self.g))
    }
}

pub fn read_sa_params(path: &Path) -> Result<(SaParams, usize, usize), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let json: SaParamsJson = serde_json::from_str(&text)?;
    json.into_params()
}

pub fn write_sa_params(path: &Path, params: &SaParams, c: usize, g: usize) -> Result<(), CliError> {
    let json = SaParamsJson::from_params(params, c, g);
    fs::write(path, serde_json::to_string_pretty(&json)?)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// On-disk backbone descriptor.
#[derive(Debug, Serialize, Deserialize)]
pub struct DescriptorJson {
    #[serde(default = "default_descriptor_name")]
    pub name: String,
    #[serde(default = "default_input_spatial")]
    pub input_spatial: usize,
    #[serde(default = "default_classes")]
    pub classes: usize,
    pub stages: Vec<StageJson>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StageJson {
    pub blocks: usize,
    pub channels: usize,
    pub spatial: usize,
}

fn default_descriptor_name() -> String {
    String::from("custom")
}
fn default_input_spatial() -> usize {
    224
}
fn default_classes() -> usize {
    1000
}

pub fn read_descriptor(path: &Path) -> Result<ModelDescriptor, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let json: DescriptorJson = serde_json::from_str(&text)?;
    let d = ModelDescriptor {
        name: json.name,
        input_spatial: json.input_spatial,
        classes: json.classes,
        stages: json
            .stages
            .into_iter()
            .map(|s| StageSpec {
                blocks: s.blocks,
                channels: s.channels,
                spatial: s.spatial,
            })
            .collect(),
    };
    d.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(d)
}

/// Serializable view of a cost report.
#[derive(Debug, Serialize)]
pub struct CostReportJson {
    pub model: String,
    pub attention: String,
    pub params_base: u64,
    pub params_added: u64,
    pub flops_base_g: f64,
    pub flops_added_g: f64,
    pub convention: String,
    pub stages: Vec<StageCostJson>,
    pub notes: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct StageCostJson {
    pub blocks: usize,
    pub channels: usize,
    pub spatial: usize,
    pub params_added: u64,
    pub macs_added: u64,
}

impl From<&CostReport> for CostReportJson {
    fn from(r: &CostReport) -> Self {
        CostReportJson {
            model: r.model.clone(),
            attention: r.attention.clone(),
            params_base: r.params_base,
            params_added: r.params_added,
            flops_base_g: r.flops_base_g,
            flops_added_g: r.flops_added_g,
            convention: r.convention.clone(),
            stages: r
                .stages
                .iter()
                .map(|s| StageCostJson {
                    blocks: s.blocks,
                    channels: s.channels,
                    spatial: s.spatial,
                    params_added: s.params_added,
                    macs_added: s.macs_added,
                })
                .collect(),
            notes: r.notes.clone(),
        }
    }
}

/// Serializable view of a gradient-check report.
#[derive(Debug, Serialize)]
pub struct GradCheckJson {
    pub tolerance: f64,
    pub step: f64,
    pub pass: bool,
    pub entries: Vec<GradCheckEntryJson>,
}

#[derive(Debug, Serialize)]
pub struct GradCheckEntryJson {
    pub name: String,
    pub max_abs_diff: f64,
    pub max_rel_diff: f64,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl From<&GradCheckReport> for GradCheckJson {
    fn from(r: &GradCheckReport) -> Self {
        GradCheckJson {
            tolerance: r.tolerance,
            step: r.step,
            pass: r.pass,
            entries: r
                .entries
                .iter()
                .map(|e| GradCheckEntryJson {
                    name: e.name.clone(),
                    max_abs_diff: e.max_abs_diff,
                    max_rel_diff: e.max_rel_diff,
                    analytic: e.analytic.clone(),
                    numeric: e.numeric.clone(),
                })
                .collect(),
        }
    }
}

// Training run configuration.

#[derive(Debug, Serialize, Deserialize, Default)]
pub struct TrainRunConfig {
    #[serde(default)]
    pub net: NetJson,
    #[serde(default)]
    pub train: TrainJson,
    #[serde(default)]
    pub data: DataJson,
    #[serde(default)]
    pub outputs: OutputsJson,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NetJson {
    #[serde(default = "default_stage_channels")]
    pub stage_channels: Vec<usize>,
    #[serde(default = "default_blocks")]
    pub blocks_per_stage: usize,
    #[serde(default = "default_net_classes")]
    pub classes: usize,
    #[serde(default = "default_input_channels")]
    pub input_channels: usize,
    #[serde(default = "default_input_size")]
    pub input_size: usize,
    #[serde(default)]
    pub attention: AttentionJson,
}

fn default_stage_channels() -> Vec<usize> {
    vec![16, 32, 64]
}
fn default_blocks() -> usize {
    2
}
fn default_net_classes() -> usize {
    4
}
fn default_input_channels() -> usize {
    1
}
fn default_input_size() -> usize {
    32
}

impl Default for NetJson {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AttentionJson {
    None,
    Sa {
        #[serde(default = "default_sa_groups")]
        groups: usize,
        #[serde(default = "default_true")]
        enable_gn: bool,
        #[serde(default = "default_true")]
        enable_shuffle: bool,
        #[serde(default = "default_true")]
        enable_fc: bool,
        #[serde(default)]
        fc_variant: FcVariantJson,
        #[serde(default = "default_shuffle_groups")]
        shuffle_groups: usize,
    },
    Se {
        #[serde(default = "default_se_reduction")]
        reduction: usize,
    },
}

fn default_sa_groups() -> usize {
    8
}
fn default_se_reduction() -> usize {
    8
}
fn default_shuffle_groups() -> usize {
    2
}
fn default_true() -> bool {
    true
}

impl Default for AttentionJson {
    fn default() -> Self {
        AttentionJson::None
    }
}

#[derive(Debug, Serialize, Deserialize, Default, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum FcVariantJson {
    #[default]
    Affine,
    Conv1x1,
}

impl AttentionJson {
    pub fn to_core(&self) -> ToyAttention {
        match self {
            AttentionJson::None => ToyAttention::None,
            AttentionJson::Sa {
                groups,
                enable_gn,
                enable_shuffle,
                enable_fc,
                fc_variant,
                shuffle_groups,
            } => ToyAttention::Sa(SaConfig {
                groups: *groups,
                shuffle_groups: *shuffle_groups,
                enable_gn: *enable_gn,
                enable_shuffle: *enable_shuffle,
                enable_fc: *enable_fc,
                fc_variant: match fc_variant {
                    FcVariantJson::Affine => FcVariant::PerChannelAffine,
                    FcVariantJson::Conv1x1 => FcVariant::OneByOneConv,
                },
                ..SaConfig::default()
            }),
            AttentionJson::Se { reduction } => ToyAttention::Se {
                reduction: *reduction,
            },
        }
    }
}

impl NetJson {
    pub fn to_core(&self) -> ToyNetConfig {
        ToyNetConfig {
            stage_channels: self.stage_channels.clone(),
            blocks_per_stage: self.blocks_per_stage,
            classes: self.classes,
            input_channels: self.input_channels,
            input_size: self.input_size,
            attention: self.attention.to_core(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainJson {
    #[serde(default = "default_lr")]
    pub lr: f32,
    #[serde(default = "default_momentum")]
    pub momentum: f32,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f32,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_train_seed")]
    pub seed: u64,
    #[serde(default)]
    pub warmup_epochs: usize,
}

fn default_lr() -> f32 {
    0.1
}
fn default_momentum() -> f32 {
    0.9
}
fn default_weight_decay() -> f32 {
    1e-4
}
fn default_epochs() -> usize {
    10
}
fn default_batch() -> usize {
    16
}
fn default_train_seed() -> u64 {
    1
}

impl Default for TrainJson {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

impl TrainJson {
    pub fn to_core(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            warmup_epochs: self.warmup_epochs,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DataJson {
    #[serde(default = "default_data_seed")]
    pub seed: u64,
    #[serde(default = "default_train_size")]
    pub train_size: usize,
    #[serde(default = "default_val_size")]
    pub val_size: usize,
    #[serde(default = "default_net_classes")]
    pub classes: usize,
    #[serde(default = "default_input_size")]
    pub image_size: usize,
    #[serde(default = "default_noise")]
    pub noise_sigma: f32,
}

fn default_data_seed() -> u64 {
    7
}
fn default_train_size() -> usize {
    64
}
fn default_val_size() -> usize {
    32
}
fn default_noise() -> f32 {
    0.15
}

impl Default for DataJson {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

impl DataJson {
    pub fn to_core(&self) -> DatasetConfig {
        DatasetConfig {
            seed: self.seed,
            train_size: self.train_size,
            val_size: self.val_size,
            classes: self.classes,
            image_size: self.image_size,
            noise_sigma: self.noise_sigma,
        }
    }
}

#[derive(Debug, Serialize, Deserialize, Default)]
pub struct OutputsJson {
    #[serde(default)]
    pub history_csv: Option<PathBuf>,
    #[serde(default)]
    pub history_json: Option<PathBuf>,
    /// Base path; a checkpoint writes `<base>.manifest.json` and `<base>.bin`.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
}

pub fn read_train_config(path: &Path) -> Result<TrainRunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

// History.

#[derive(Debug, Serialize, Deserialize)]
pub struct HistoryJson {
    pub epochs: Vec<EpochJson>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EpochJson {
    pub epoch: usize,
    pub loss: f32,
    pub train_acc: f64,
    pub val_acc: f64,
}

impl From<&History> for HistoryJson {
    fn from(h: &History) -> Self {
        HistoryJson {
            epochs: h
                .epochs
                .iter()
                .map(|e| EpochJson {
                    epoch: e.epoch,
                    loss: e.loss,
                    train_acc: e.train_acc,
                    val_acc: e.val_acc,
                })
                .collect(),
        }
    }
}

pub fn history_csv(h: &History) -> String {
    let mut out = String::from("epoch,loss,train_acc,val_acc\n");
    for e in &h.epochs {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.epoch, e.loss, e.train_acc, e.val_acc
        ));
    }
    out
}

// Checkpoints: a manifest of names/shapes plus one flat little-endian f32
// blob, with shuffle-attention modules duplicated in their JSON schema.

#[derive(Debug, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub blob: String,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub sa_modules: Vec<SaModuleEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 4],
    /// Element offset into the blob.
    pub offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SaModuleEntry {
    pub block: String,
    pub params: SaParamsJson,
}

fn sa_modules_of(net: &ToyNet) -> Vec<SaModuleEntry> {
    let sa_cfg = match &net.cfg.attention {
        ToyAttention::Sa(cfg) => cfg,
        _ => return Vec::new(),
    };
    let mut blocks: Vec<String> = net
        .param_names()
        .iter()
        .filter_map(|n| n.strip_suffix(".sa.w1").map(String::from))
        .collect();
    blocks.sort();
    let vec_of = |name: &str| -> Vec<f32> {
        net.find_param(name)
            .map(|i| net.params()[i].data().to_vec())
            .unwrap_or_default()
    };
    blocks
        .iter()
        .map(|b| {
            let params = SaParams {
                w1: vec_of(&format!("{b}.sa.w1")),
                b1: vec_of(&format!("{b}.sa.b1")),
                w2: vec_of(&format!("{b}.sa.w2")),
                b2: vec_of(&format!("{b}.sa.b2")),
                gn_gamma: vec_of(&format!("{b}.sa.gn_gamma")),
                gn_beta: vec_of(&format!("{b}.sa.gn_beta")),
                mix1: net
                    .find_param(&format!("{b}.sa.mix1"))
                    .map(|i| net.params()[i].data().to_vec()),
                mix2: net
                    .find_param(&format!("{b}.sa.mix2"))
                    .map(|i| net.params()[i].data().to_vec()),
            };
            let c = params.sub_width() * 2 * sa_cfg.groups;
            SaModuleEntry {
                block: b.clone(),
                params: SaParamsJson::from_params(&params, c, sa_cfg.groups),
            }
        })
        .collect()
}

pub fn write_checkpoint(base: &Path, net: &ToyNet) -> Result<(PathBuf, PathBuf), CliError> {
    let manifest_path = base.with_extension("manifest.json");
    let blob_path = base.with_extension("bin");
    let mut blob = Vec::new();
    let mut tensors = Vec::new();
    let mut offset = 0usize;
    for (name, t) in net.param_names().iter().zip(net.params()) {
        let (n, c, h, w) = t.dims();
        tensors.push(TensorEntry {
            name: name.clone(),
            shape: [n, c, h, w],
            offset,
        });
        offset += t.numel();
        for &v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = CheckpointManifest {
        blob: blob_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        tensors,
        sa_modules: sa_modules_of(net),
    };
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)
        .map_err(|e| CliError::Io(format!("{}: {e}", manifest_path.display())))?;
    fs::write(&blob_path, blob).map_err(|e| CliError::Io(format!("{}: {e}", blob_path.display())))?;
    Ok((manifest_path, blob_path))
}

/// Loads checkpoint tensors back as `(name, tensor)` pairs.
pub fn read_checkpoint(manifest_path: &Path) -> Result<Vec<(String, Tensor4)>, CliError> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| CliError::Io(format!("{}: {e}", manifest_path.display())))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)?;
    let blob_path = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.blob);
    let blob = fs::read(&blob_path).map_err(|e| CliError::Io(format!("{}: {e}", blob_path.display())))?;
    if blob.len() % 4 != 0 {
        return Err(CliError::Format(String::from("blob length not a multiple of 4")));
    }
    let floats: Vec<f32> = blob
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    let mut out = Vec::with_capacity(manifest.tensors.len());
    for entry in &manifest.tensors {
        let numel: usize = entry.shape.iter().product();
        let end = entry.offset + numel;
        if end > floats.len() {
            return Err(CliError::Format(format!(
                "tensor `{}` overruns the blob ({} > {})",
                entry.name,
                end,
                floats.len()
            )));
        }
        let [n, c, h, w] = entry.shape;
        let t = Tensor4::new(Shape::new(n, c, h, w), floats[entry.offset..end].to_vec())
            .map_err(|e| CliError::Format(e.to_string()))?;
        out.push((entry.name.clone(), t));
    }
    Ok(out)
}

/// Parses an `n,c,h,w` shape string.
pub fn parse_shape(s: &str) -> Result<Shape, CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 4 {
        return Err(CliError::Config(format!(
            "shape `{s}` must be four comma-separated dims n,c,h,w"
        )));
    }
    let mut dims = [0usize; 4];
    for (d, p) in dims.iter_mut().zip(&parts) {
        *d = p
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("bad dimension `{p}` in shape `{s}`")))?;
    }
    Ok(Shape::new(dims[0], dims[1], dims[2], dims[3]))
}

/// Parses an attention spec: `none`, `sa:G`, or `se:r`.
pub fn parse_attention(s: &str) -> Result<AttentionKind, CliError> {
    if s == "none" {
        return Ok(AttentionKind::None);
    }
    if let Some(g) = s.strip_prefix("sa:") {
        let groups = g
            .parse()
            .map_err(|_| CliError::Config(format!("bad group count in `{s}`")))?;
        return Ok(AttentionKind::Sa { groups });
    }
    if let Some(r) = s.strip_prefix("se:") {
        let reduction = r
            .parse()
            .map_err(|_| CliError::Config(format!("bad reduction in `{s}`")))?;
        return Ok(AttentionKind::Se { reduction });
    }
    Err(CliError::Config(format!(
        "attention `{s}` must be none, sa:G, or se:r"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use satk_core::Rng;

    #[test]
    fn params_json_round_trip_is_bit_exact() {
        let mut rng = Rng::new(9);
        let params = SaParams::random(16, 4, true, &mut rng).unwrap();
        let json = SaParamsJson::from_params(&params, 16, 4);
        let text = serde_json::to_string(&json).unwrap();
        let back: SaParamsJson = serde_json::from_str(&text).unwrap();
        let (decoded, c, g) = back.into_params().unwrap();
        assert_eq!(decoded, params);
        assert_eq!((c, g), (16, 4));
    }

    #[test]
    fn params_json_rejects_wrong_lengths() {
        let params = SaParams::init(16, 4).unwrap();
        let mut json = SaParamsJson::from_params(&params, 16, 4);
        json.w1.pop();
        assert!(json.into_params().is_err());
    }

    #[test]
    fn hex_floats_cover_special_values() {
        for v in [0.0f32, -0.0, 1.0, f32::MIN_POSITIVE, f32::MAX, -123.456] {
            let h = f32_to_hex(v);
            assert_eq!(hex_to_f32(&h).unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn train_config_defaults_parse_from_empty_object() {
        let cfg: TrainRunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg.net.stage_channels, vec![16, 32, 64]);
        assert_eq!(cfg.train.epochs, 10);
        assert_eq!(cfg.data.train_size, 64);
    }

    #[test]
    fn attention_spec_parser() {
        assert_eq!(parse_attention("none").unwrap(), AttentionKind::None);
        assert_eq!(
            parse_attention("sa:64").unwrap(),
            AttentionKind::Sa { groups: 64 }
        );
        assert_eq!(
            parse_attention("se:16").unwrap(),
            AttentionKind::Se { reduction: 16 }
        );
        assert!(parse_attention("cbam").is_err());
    }

    #[test]
    fn shape_parser() {
        let s = parse_shape("1,8,3,3").unwrap();
        assert_eq!((s.n, s.c, s.h, s.w), (1, 8, 3, 3));
        assert!(parse_shape("1,8,3").is_err());
        assert!(parse_shape("1,8,x,3").is_err());
    }
}
