//! On-disk datasets: SPKT/DPTH/FEAT triples listed in a manifest.

use std::fs;
use std::path::{Path, PathBuf};

use sdt_core::data::{gen_synthetic, SampleTuple, SynthConfig};
use sdt_core::{Error, Result};

use crate::format::{io_err, read_depth, read_feat, read_spk, write_depth, write_feat, write_spk};

pub const MANIFEST: &str = "manifest.txt";
const HEADER: &str = "# sdt dataset v1: spikes depth features (paths relative to this file)";

/// Relative file names of one sample; `feat` is absent when the manifest
/// lists `-`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub spk: PathBuf,
    pub depth: PathBuf,
    pub feat: Option<PathBuf>,
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        let [spk, depth, feat] = cols[..] else {
            return Err(Error::Data(format!("{}:{}: expected three columns", path.display(), n + 1)));
        };
        out.push(ManifestEntry {
            spk: spk.into(),
            depth: depth.into(),
            feat: (feat != "-").then(|| feat.into()),
        });
    }
    Ok(out)
}

/// Load every sample listed in `dir/manifest.txt`, in manifest order.
pub fn load_dataset(dir: &Path) -> Result<Vec<SampleTuple>> {
    read_manifest(dir)?
        .into_iter()
        .map(|e| {
            let feat = e.feat.map(|f| read_feat(&dir.join(f))).transpose()?;
            SampleTuple::new(read_spk(&dir.join(&e.spk))?, read_depth(&dir.join(&e.depth))?, feat)
        })
        .collect()
}

/// Write samples as `sample_NNNN.{spk,dpth,feat}` plus the manifest.
pub fn write_dataset(dir: &Path, samples: &[SampleTuple]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut lines = vec![HEADER.to_string()];
    let mut written = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let stem = format!("sample_{i:04}");
        let (spk, depth) = (format!("{stem}.spk"), format!("{stem}.dpth"));
        write_spk(&dir.join(&spk), &s.spikes)?;
        write_depth(&dir.join(&depth), &s.depth)?;
        written.push(dir.join(&spk));
        written.push(dir.join(&depth));
        let feat = match &s.teacher {
            Some(t) => {
                let f = format!("{stem}.feat");
                write_feat(&dir.join(&f), t)?;
                written.push(dir.join(&f));
                f
            }
            None => "-".to_string(),
        };
        lines.push(format!("{spk} {depth} {feat}"));
    }
    let manifest = dir.join(MANIFEST);
    fs::write(&manifest, lines.join("\n") + "\n").map_err(|e| io_err(&manifest, e))?;
    written.push(manifest);
    Ok(written)
}

/// Generate a synthetic dataset and write it to `dir`.
pub fn generate(dir: &Path, cfg: &SynthConfig) -> Result<Vec<PathBuf>> {
    let samples = gen_synthetic(cfg)?;
    write_dataset(dir, &samples)
}
