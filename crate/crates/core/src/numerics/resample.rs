use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::graph::{Node, Saved};
use super::{Graph, OpKind, Real, Tensor, Var};
use crate::error::{dim_err, Result};

/// Source taps for one output coordinate: `(lo, hi, weight_of_hi)`.
fn bilinear_taps(len: usize, factor: usize) -> Vec<(usize, usize, f64)> {
    (0..len * factor)
        .map(|o| {
            // align_corners = false
            let src = ((o as f64 + 0.5) / factor as f64 - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(len - 1);
            let hi = if lo + 1 < len { lo + 1 } else { lo };
            (lo, hi, src - lo as f64)
        })
        .collect()
}

/// Bilinear upsampling of a `[.., h, w]` buffer without recording anything.
pub fn upsample_bilinear_plain<F: Real>(x: &[F], planes: usize, h: usize, w: usize, factor: usize) -> Vec<F> {
    let ty = bilinear_taps(h, factor);
    let tx = bilinear_taps(w, factor);
    let (oh, ow) = (h * factor, w * factor);
    let mut out = vec![F::zero(); planes * oh * ow];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
            let (ly, hy) = (F::of(ly), F::of(1.0 - ly));
            for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                let (lx, hx) = (F::of(lx), F::of(1.0 - lx));
                dst[oy * ow + ox] = hy * (hx * src[y0 * w + x0] + lx * src[y0 * w + x1])
                    + ly * (hx * src[y1 * w + x0] + lx * src[y1 * w + x1]);
            }
        }
    }
    out
}

fn spatial(shape: &[usize], what: &str) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(dim_err!("{what} needs at least [h, w], got {:?}", shape));
    }
    let r = shape.len();
    Ok((shape[..r - 2].iter().product(), shape[r - 2], shape[r - 1]))
}

impl<F: Real> Graph<F> {
    /// Non-overlapping max pooling with window = stride = `k`.
    pub fn max_pool2d(&mut self, x: Var, k: usize) -> Result<Var> {
        let (planes, h, w) = spatial(self.shape(x), "maxpool2d")?;
        if k == 0 || h % k != 0 || w % k != 0 {
            return Err(dim_err!("maxpool2d: {h}x{w} not divisible by stride {k}"));
        }
        let (oh, ow) = (h / k, w / k);
        let xd = self.value(x).data();
        let mut out = vec![F::zero(); planes * oh * ow];
        let mut argmax = vec![0u32; out.len()];
        for p in 0..planes {
            let base = p * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * k * w + ox * k;
                    for dy in 0..k {
                        for dx in 0..k {
                            let i = base + (oy * k + dy) * w + ox * k + dx;
                            // strict comparison keeps the first index on ties
                            if xd[i] > xd[best] {
                                best = i;
                            }
                        }
                    }
                    let o = (p * oh + oy) * ow + ox;
                    out[o] = xd[best];
                    argmax[o] = best as u32;
                }
            }
        }
        let mut shape = self.shape(x).to_vec();
        let r = shape.len();
        shape[r - 2] = oh;
        shape[r - 1] = ow;
        self.push(Tensor::new(&shape, out)?, OpKind::MaxPool, vec![x], Saved::Pool { argmax })
    }

    pub(super) fn max_pool_backward(&self, node: &Node<F>, gout: &[F], grads: &mut [Option<Vec<F>>]) -> Result<()> {
        let Saved::Pool { ref argmax } = node.saved else { unreachable!() };
        let x = node.inputs[0];
        let mut dx = vec![F::zero(); self.value(x).len()];
        for (&i, &g) in argmax.iter().zip(gout) {
            dx[i as usize] += g;
        }
        self.accumulate(grads, x, dx);
        Ok(())
    }

    /// Bilinear upsampling by an integer factor (align_corners = false).
    pub fn upsample_bilinear(&mut self, x: Var, factor: usize) -> Result<Var> {
        let (planes, h, w) = spatial(self.shape(x), "upsample")?;
        if factor == 0 || h == 0 || w == 0 {
            return Err(dim_err!("upsample: factor {factor} on {h}x{w}"));
        }
        let out = upsample_bilinear_plain(self.value(x).data(), planes, h, w, factor);
        let mut shape = self.shape(x).to_vec();
        let r = shape.len();
        shape[r - 2] = h * factor;
        shape[r - 1] = w * factor;
        self.push(Tensor::new(&shape, out)?, OpKind::Upsample, vec![x], Saved::Upsample { factor })
    }

    pub(super) fn upsample_backward(&self, node: &Node<F>, gout: &[F], grads: &mut [Option<Vec<F>>]) -> Result<()> {
        let Saved::Upsample { factor } = node.saved else { unreachable!() };
        let x = node.inputs[0];
        let (planes, h, w) = spatial(self.shape(x), "upsample")?;
        let ty = bilinear_taps(h, factor);
        let tx = bilinear_taps(w, factor);
        let (oh, ow) = (h * factor, w * factor);
        let mut dx = vec![F::zero(); planes * h * w];
        for p in 0..planes {
            let g = &gout[p * oh * ow..(p + 1) * oh * ow];
            let d = &mut dx[p * h * w..(p + 1) * h * w];
            for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
                let (ly, hy) = (F::of(ly), F::of(1.0 - ly));
                for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                    let (lx, hx) = (F::of(lx), F::of(1.0 - lx));
                    let go = g[oy * ow + ox];
                    d[y0 * w + x0] += go * hy * hx;
                    d[y0 * w + x1] += go * hy * lx;
                    d[y1 * w + x0] += go * ly * hx;
                    d[y1 * w + x1] += go * ly * lx;
                }
            }
        }
        self.accumulate(grads, x, dx);
        Ok(())
    }
}
