//! SDTW checkpoints: model configuration plus named float32 tensors.

use std::path::Path;

use sdt_core::model::{ModelConfig, Network};
use sdt_core::numerics::Tensor;
use sdt_core::{Error, Result};

use crate::config::{apply_model, model_to_text, parse, parse_list, parse_pairs, MODEL_KEYS};
use crate::format::{put_u32, read_bytes, write_bytes, Reader};

pub const CKPT_MAGIC: &[u8; 4] = b"SDTW";
pub const CKPT_VERSION: u32 = 1;
const EXTRA_KEYS: &[&str] = &["adapters", "teacher_dim"];

/// Layout: magic, version u32, config text (u32 length + UTF-8), tensor
/// count u32, then per tensor: name (u32 length + UTF-8), rank u32, dims
/// u32 each, float32 values. All integers little-endian.
pub fn encode_checkpoint(net: &Network<f32>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CKPT_MAGIC);
    put_u32(&mut out, CKPT_VERSION as usize)?;
    let adapters: Vec<String> = net.adapter_blocks().iter().map(|b| b.to_string()).collect();
    let cfg = format!("{}adapters = {}\nteacher_dim = {}\n", model_to_text(net.config()), adapters.join(","), net.teacher_dim());
    put_u32(&mut out, cfg.len())?;
    out.extend_from_slice(cfg.as_bytes());
    let entries: Vec<_> = net.params().entries().collect();
    put_u32(&mut out, entries.len())?;
    for (name, t) in entries {
        put_u32(&mut out, name.len())?;
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.shape().len())?;
        for &d in t.shape() {
            put_u32(&mut out, d)?;
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn utf8(bytes: &[u8], what: &str) -> Result<String> {
    String::from_utf8(bytes.to_vec()).map_err(|_| Error::Format(format!("SDTW: {what} is not UTF-8")))
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<Network<f32>> {
    let mut r = Reader::new(buf, "SDTW");
    r.magic(CKPT_MAGIC)?;
    let v = r.u32()?;
    if v != CKPT_VERSION {
        return Err(Error::Format(format!("SDTW: unsupported version {v}")));
    }
    let n = r.u32()? as usize;
    let text = utf8(r.take(n)?, "config")?;
    let kv = parse_pairs(&text, &[MODEL_KEYS, EXTRA_KEYS])?;
    let mut cfg = ModelConfig::default();
    apply_model(&mut cfg, &kv)?;
    let adapters = parse_list("adapters", kv.get("adapters").map(String::as_str).unwrap_or(""))?;
    let teacher_dim: usize = parse("teacher_dim", kv.get("teacher_dim").map(String::as_str).unwrap_or("0"))?;
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = utf8(r.take(len)?, "tensor name")?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| Error::Length("SDTW: size overflow".into()))?;
        let vals = r.f32s(n)?;
        entries.push((name, Tensor::new(&shape, vals)?));
    }
    r.finish()?;
    let mut net = Network::with_adapters(&cfg, 0, &adapters, teacher_dim)?;
    net.params_mut().load(&entries)?;
    Ok(net)
}

pub fn save_checkpoint(path: &Path, net: &Network<f32>) -> Result<()> {
    write_bytes(path, &encode_checkpoint(net)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Network<f32>> {
    decode_checkpoint(&read_bytes(path)?)
}
