//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;

use sdt_core::distill::DistillConfig;
use sdt_core::model::{HeadKind, ModelConfig};
use sdt_core::neuron::LifParams;
use sdt_core::numerics::MergeRule;
use sdt_core::train::{Ablation, TrainConfig};
use sdt_core::{Error, Result};

pub(crate) const MODEL_KEYS: &[&str] = &[
    "timesteps",
    "in_channels",
    "height",
    "width",
    "dim",
    "blocks",
    "attn_scale",
    "mlp_ratio",
    "embed_channels",
    "lif.tau",
    "lif.v_threshold",
    "lif.v_reset",
    "lif.surrogate_alpha",
    "merge",
    "head",
    "head_kernel",
    "rate",
];
const TRAIN_KEYS: &[&str] = &[
    "seed",
    "epochs",
    "batch_size",
    "lr",
    "adam.beta1",
    "adam.beta2",
    "adam.eps",
    "grad_clip",
    "kd",
    "checkpoint_every",
];
const DISTILL_KEYS: &[&str] = &["lambda_p", "lambda_2", "matched_blocks", "teacher_dim", "anchor", "log_domain"];
const PATH_KEYS: &[&str] = &["data", "out"];

/// Parsed `key = value` pairs; `#` starts a comment.
pub fn parse_pairs(text: &str, allowed: &[&[&str]]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !allowed.iter().any(|set| set.contains(&k)) {
            return Err(Error::Config(format!("line {}: unknown key '{k}'", n + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key '{k}'", n + 1)));
        }
    }
    Ok(out)
}

pub(crate) fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

pub(crate) fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected on/off, got '{v}'"))),
    }
}

fn head_name(h: HeadKind) -> &'static str {
    match h {
        HeadKind::Fusion => "fusion",
        HeadKind::LinearFcn => "linear_fcn",
    }
}

fn parse_head(v: &str) -> Result<HeadKind> {
    match v {
        "fusion" => Ok(HeadKind::Fusion),
        "linear_fcn" => Ok(HeadKind::LinearFcn),
        _ => Err(Error::Config(format!("head: expected fusion or linear_fcn, got '{v}'"))),
    }
}

/// Apply model keys from `kv` on top of `m`.
pub(crate) fn apply_model(m: &mut ModelConfig, kv: &BTreeMap<String, String>) -> Result<()> {
    let mut embed_set = false;
    for (k, v) in kv {
        match k.as_str() {
            "timesteps" => m.timesteps = parse(k, v)?,
            "in_channels" => m.in_channels = parse(k, v)?,
            "height" => m.height = parse(k, v)?,
            "width" => m.width = parse(k, v)?,
            "dim" => m.dim = parse(k, v)?,
            "blocks" => m.blocks = parse(k, v)?,
            "attn_scale" => m.attn_scale = parse(k, v)?,
            "mlp_ratio" => m.mlp_ratio = parse(k, v)?,
            "embed_channels" => {
                let l = parse_list(k, v)?;
                m.embed_channels = l.try_into().map_err(|_| Error::Config("embed_channels: expected three values".into()))?;
                embed_set = true;
            }
            "lif.tau" => m.lif.tau = parse(k, v)?,
            "lif.v_threshold" => m.lif.v_threshold = parse(k, v)?,
            "lif.v_reset" => m.lif.v_reset = parse(k, v)?,
            "lif.surrogate_alpha" => m.lif.surrogate_alpha = parse(k, v)?,
            "merge" => {
                m.merge = match v.as_str() {
                    "clamp_or" => MergeRule::ClampOr,
                    "add" => MergeRule::Add,
                    _ => return Err(Error::Config(format!("merge: expected clamp_or or add, got '{v}'"))),
                }
            }
            "head" => m.head = parse_head(v)?,
            "head_kernel" => m.head_kernel = parse(k, v)?,
            "rate" => {
                m.rate_sum = match v.as_str() {
                    "mean" => false,
                    "sum" => true,
                    _ => return Err(Error::Config(format!("rate: expected mean or sum, got '{v}'"))),
                }
            }
            _ => {}
        }
    }
    if !embed_set {
        m.embed_channels = [m.dim / 4, m.dim / 2, m.dim];
    }
    Ok(())
}

/// Model configuration from model keys only (defaults fill the rest).
pub fn model_from_text(text: &str) -> Result<ModelConfig> {
    let kv = parse_pairs(text, &[MODEL_KEYS])?;
    let mut m = ModelConfig::default();
    apply_model(&mut m, &kv)?;
    m.validate()?;
    Ok(m)
}

/// Every model key in a fixed order; `model_from_text` inverts it exactly.
pub fn model_to_text(m: &ModelConfig) -> String {
    let LifParams { tau, v_threshold, v_reset, surrogate_alpha } = m.lif;
    let e = m.embed_channels;
    let merge = match m.merge {
        MergeRule::ClampOr => "clamp_or",
        MergeRule::Add => "add",
    };
    let lines = [
        format!("timesteps = {}", m.timesteps),
        format!("in_channels = {}", m.in_channels),
        format!("height = {}", m.height),
        format!("width = {}", m.width),
        format!("dim = {}", m.dim),
        format!("blocks = {}", m.blocks),
        format!("attn_scale = {:?}", m.attn_scale),
        format!("mlp_ratio = {}", m.mlp_ratio),
        format!("embed_channels = {},{},{}", e[0], e[1], e[2]),
        format!("lif.tau = {tau:?}"),
        format!("lif.v_threshold = {v_threshold:?}"),
        format!("lif.v_reset = {v_reset:?}"),
        format!("lif.surrogate_alpha = {surrogate_alpha:?}"),
        format!("merge = {merge}"),
        format!("head = {}", head_name(m.head)),
        format!("head_kernel = {}", m.head_kernel),
        format!("rate = {}", if m.rate_sum { "sum" } else { "mean" }),
    ];
    let mut s = lines.join("\n");
    s.push('\n');
    s
}

/// Everything a run needs: architecture, optimizer, losses and paths.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub distill: DistillConfig,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut model = ModelConfig::desk(4, 64, 64, 64);
        model.head = HeadKind::Fusion;
        RunConfig { model, train: TrainConfig::default(), distill: DistillConfig::default(), data: None, out: None }
    }
}

impl RunConfig {
    /// Parse a config file body; unknown or duplicate keys are rejected.
    /// The `head` key sets both the architecture and the ablation switch.
    pub fn parse(text: &str) -> Result<Self> {
        let kv = parse_pairs(text, &[MODEL_KEYS, TRAIN_KEYS, DISTILL_KEYS, PATH_KEYS])?;
        let mut c = RunConfig::default();
        apply_model(&mut c.model, &kv)?;
        let (t, d) = (&mut c.train, &mut c.distill);
        t.ablation = Ablation { head: c.model.head, kd: true };
        for (k, v) in &kv {
            match k.as_str() {
                "seed" => t.seed = parse(k, v)?,
                "epochs" => t.epochs = parse(k, v)?,
                "batch_size" => t.batch_size = parse(k, v)?,
                "lr" => t.lr = parse(k, v)?,
                "adam.beta1" => t.beta1 = parse(k, v)?,
                "adam.beta2" => t.beta2 = parse(k, v)?,
                "adam.eps" => t.adam_eps = parse(k, v)?,
                "grad_clip" => t.grad_clip = parse(k, v)?,
                "kd" => t.ablation.kd = parse_bool(k, v)?,
                "checkpoint_every" => t.checkpoint_every = parse(k, v)?,
                "lambda_p" => d.lambda_p = parse(k, v)?,
                "lambda_2" => d.lambda_2 = parse(k, v)?,
                "matched_blocks" => d.matched_blocks = parse_list(k, v)?,
                "teacher_dim" => d.teacher_dim = parse(k, v)?,
                "anchor" => d.anchor = parse(k, v)?,
                "log_domain" => d.log_domain = parse_bool(k, v)?,
                "data" => c.data = Some(PathBuf::from(v)),
                "out" => c.out = Some(PathBuf::from(v)),
                _ => {}
            }
        }
        if !kv.contains_key("matched_blocks") {
            d.matched_blocks = vec![c.model.blocks];
        }
        c.model.validate()?;
        c.train.validate()?;
        c.distill.validate(c.model.blocks)?;
        Ok(c)
    }

    /// Fail unless every named path key is present.
    pub fn require(&self, keys: &[&str]) -> Result<()> {
        for &k in keys {
            let present = match k {
                "data" => self.data.is_some(),
                "out" => self.out.is_some(),
                _ => true,
            };
            if !present {
                return Err(Error::Config(format!("missing required key '{k}'")));
            }
        }
        Ok(())
    }
}
