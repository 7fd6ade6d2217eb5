//! Binary codecs: SPKT spike streams, DPTH depth maps, FEAT teacher
//! features and 16-bit PGM export.

use std::fs;
use std::path::Path;

use sdt_core::data::{DepthMap, SpikeTensor};
use sdt_core::numerics::Tensor;
use sdt_core::{Error, Result};

pub const SPK_MAGIC: &[u8; 4] = b"SPKT";
pub const SPK_VERSION: u32 = 1;
pub const DEPTH_MAGIC: &[u8; 4] = b"DPTH";
pub const FEAT_MAGIC: &[u8; 4] = b"FEAT";

/// Little-endian cursor over a byte buffer.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8], what: &'static str) -> Self {
        Reader { buf, pos: 0, what }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Length(format!("{}: truncated at byte {}, need {n} more", self.what, self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn magic(&mut self, m: &[u8; 4]) -> Result<()> {
        let got = self.take(4).map_err(|_| Error::Format(format!("{}: missing magic", self.what)))?;
        if got != m {
            return Err(Error::Format(format!("{}: bad magic {:?}", self.what, String::from_utf8_lossy(got))));
        }
        Ok(())
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn dim(&mut self) -> Result<usize> {
        let d = self.u32()? as usize;
        if d == 0 {
            return Err(Error::Format(format!("{}: zero dimension", self.what)));
        }
        Ok(d)
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = n.checked_mul(4).ok_or_else(|| Error::Length(format!("{}: size overflow", self.what)))?;
        Ok(self.take(bytes)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Length(format!("{}: {} trailing bytes", self.what, self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("value {v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f32s(out: &mut Vec<u8>, vals: &[f32]) {
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_spk(s: &SpikeTensor) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(24 + s.packed().len());
    out.extend_from_slice(SPK_MAGIC);
    put_u32(&mut out, SPK_VERSION as usize)?;
    for d in s.dims() {
        put_u32(&mut out, d)?;
    }
    out.extend_from_slice(s.packed());
    Ok(out)
}

pub fn decode_spk(buf: &[u8]) -> Result<SpikeTensor> {
    let mut r = Reader::new(buf, "SPKT");
    r.magic(SPK_MAGIC)?;
    let v = r.u32()?;
    if v != SPK_VERSION {
        return Err(Error::Format(format!("SPKT: unsupported version {v}")));
    }
    let dims = [r.dim()?, r.dim()?, r.dim()?, r.dim()?];
    let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| Error::Length("SPKT: size overflow".into()))?;
    let bits = r.take(n.div_ceil(8))?.to_vec();
    r.finish()?;
    SpikeTensor::from_packed(dims, bits)
}

pub fn encode_depth(d: &DepthMap) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + 4 * d.values().len());
    out.extend_from_slice(DEPTH_MAGIC);
    put_u32(&mut out, d.h())?;
    put_u32(&mut out, d.w())?;
    let vals: Vec<f32> = d.values().iter().zip(d.mask()).map(|(&v, &m)| if m { v } else { f32::NAN }).collect();
    put_f32s(&mut out, &vals);
    Ok(out)
}

pub fn decode_depth(buf: &[u8]) -> Result<DepthMap> {
    let mut r = Reader::new(buf, "DPTH");
    r.magic(DEPTH_MAGIC)?;
    let (h, w) = (r.dim()?, r.dim()?);
    let vals = r.f32s(h * w)?;
    r.finish()?;
    DepthMap::new(h, w, vals)
}

pub fn encode_feat(t: &Tensor<f32>) -> Result<Vec<u8>> {
    if t.shape().len() != 3 {
        return Err(Error::Dimension(format!("FEAT needs [D, H, W], got {:?}", t.shape())));
    }
    let mut out = Vec::with_capacity(16 + 4 * t.len());
    out.extend_from_slice(FEAT_MAGIC);
    for &d in t.shape() {
        put_u32(&mut out, d)?;
    }
    put_f32s(&mut out, t.data());
    Ok(out)
}

pub fn decode_feat(buf: &[u8]) -> Result<Tensor<f32>> {
    let mut r = Reader::new(buf, "FEAT");
    r.magic(FEAT_MAGIC)?;
    let dims = [r.dim()?, r.dim()?, r.dim()?];
    let vals = r.f32s(dims.iter().product())?;
    r.finish()?;
    let t = Tensor::new(&dims, vals)?;
    t.check_finite("FEAT payload")?;
    Ok(t)
}

/// Binary 16-bit PGM: `depth * 65535` rounded, big-endian samples; invalid
/// pixels are written as 0.
pub fn encode_pgm(d: &DepthMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", d.w(), d.h()).into_bytes();
    for (&v, &m) in d.values().iter().zip(d.mask()) {
        let q = if m { (v.clamp(0.0, 1.0) as f64 * 65535.0).round() as u16 } else { 0 };
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

pub(crate) fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| io_err(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn write_spk(path: &Path, s: &SpikeTensor) -> Result<()> {
    write_bytes(path, &encode_spk(s)?)
}

pub fn read_spk(path: &Path) -> Result<SpikeTensor> {
    decode_spk(&read_bytes(path)?)
}

pub fn write_depth(path: &Path, d: &DepthMap) -> Result<()> {
    write_bytes(path, &encode_depth(d)?)
}

pub fn read_depth(path: &Path) -> Result<DepthMap> {
    decode_depth(&read_bytes(path)?)
}

pub fn write_feat(path: &Path, t: &Tensor<f32>) -> Result<()> {
    write_bytes(path, &encode_feat(t)?)
}

pub fn read_feat(path: &Path) -> Result<Tensor<f32>> {
    decode_feat(&read_bytes(path)?)
}

pub fn write_pgm(path: &Path, d: &DepthMap) -> Result<()> {
    write_bytes(path, &encode_pgm(d))
}
