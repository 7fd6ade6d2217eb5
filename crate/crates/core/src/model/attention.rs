use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, Error, Result};
use crate::numerics::{Real, Tensor};

/// Integer result of the softmax-free attention product on spike tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionProduct<F> {
    /// `Q K^T` per timestep, `[T, N, N]`; entries count shared active channels.
    pub scores: Vec<u32>,
    /// `(Q K^T) V` per timestep, `[T, N, D]`, exact integers.
    pub counts: Vec<u64>,
    /// `s * (Q K^T) V` as floats, `[T, N, D]`.
    pub output: Tensor<F>,
}

fn token_dims<F: Real>(q: &Tensor<F>, k: &Tensor<F>, v: &Tensor<F>) -> Result<(usize, usize, usize)> {
    let s = q.shape();
    if s.len() != 3 || k.shape() != s || v.shape() != s {
        return Err(dim_err!("attention expects three [T, N, D] tensors of one shape"));
    }
    for (name, x) in [("Q", q), ("K", k), ("V", v)] {
        if !x.is_binary() {
            return Err(Error::Contract(alloc::format!("{name} must contain only 0/1 spikes")));
        }
    }
    Ok((s[0], s[1], s[2]))
}

fn pack_rows<F: Real>(x: &[F], rows: usize, d: usize) -> Vec<u64> {
    let words = d.div_ceil(64);
    let mut out = vec![0u64; rows * words];
    for r in 0..rows {
        for c in 0..d {
            if x[r * d + c] == F::one() {
                out[r * words + c / 64] |= 1 << (c % 64);
            }
        }
    }
    out
}

/// `s * (Q K^T) V` per timestep on binary token matrices `[T, N, D]`.
///
/// `Q K^T` is an AND/popcount between spike rows, so its entries are
/// non-negative integers bounded by `D`, and the whole product is computed
/// with integer accumulation only.
pub fn spike_attention_product<F: Real>(q: &Tensor<F>, k: &Tensor<F>, v: &Tensor<F>, s: f64) -> Result<AttentionProduct<F>> {
    let (t, n, d) = token_dims(q, k, v)?;
    let words = d.div_ceil(64);
    let mut scores = vec![0u32; t * n * n];
    let mut counts = vec![0u64; t * n * d];
    for ti in 0..t {
        let off = ti * n * d;
        let qb = pack_rows(&q.data()[off..off + n * d], n, d);
        let kb = pack_rows(&k.data()[off..off + n * d], n, d);
        let vd = &v.data()[off..off + n * d];
        for i in 0..n {
            for j in 0..n {
                let a: u32 = (0..words).map(|w| (qb[i * words + w] & kb[j * words + w]).count_ones()).sum();
                scores[(ti * n + i) * n + j] = a;
                if a == 0 {
                    continue;
                }
                // accumulate a into every channel where V_j fires
                for c in 0..d {
                    if vd[j * d + c] == F::one() {
                        counts[off + i * d + c] += a as u64;
                    }
                }
            }
        }
    }
    let output = Tensor::new(&[t, n, d], counts.iter().map(|&c| F::of(c as f64 * s)).collect())?;
    Ok(AttentionProduct { scores, counts, output })
}

/// `Q (K^T V)` per timestep in exact integers, the other association.
pub fn right_associated_counts<F: Real>(q: &Tensor<F>, k: &Tensor<F>, v: &Tensor<F>) -> Result<Vec<u64>> {
    let (t, n, d) = token_dims(q, k, v)?;
    let mut out = vec![0u64; t * n * d];
    let mut kv = vec![0u64; d * d];
    for ti in 0..t {
        let off = ti * n * d;
        let (qd, kd, vd) = (&q.data()[off..], &k.data()[off..], &v.data()[off..]);
        kv.fill(0);
        for j in 0..n {
            for a in 0..d {
                if kd[j * d + a] != F::one() {
                    continue;
                }
                for b in 0..d {
                    if vd[j * d + b] == F::one() {
                        kv[a * d + b] += 1;
                    }
                }
            }
        }
        for i in 0..n {
            for a in 0..d {
                if qd[i * d + a] != F::one() {
                    continue;
                }
                for b in 0..d {
                    out[off + i * d + b] += kv[a * d + b];
                }
            }
        }
    }
    Ok(out)
}
