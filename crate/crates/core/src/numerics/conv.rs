use alloc::vec;
use alloc::vec::Vec;

use super::graph::{Node, Saved};
use super::{gemm, Graph, Mat, OpKind, Real, Tensor, Var};
use crate::error::{dim_err, Result};

struct Geom {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geom {
    fn rows(&self) -> usize {
        self.cin * self.k * self.k
    }
    fn plane(&self) -> usize {
        self.oh * self.ow
    }
    fn pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

fn geometry(x: &[usize], w: &[usize], stride: usize, pad: usize) -> Result<Geom> {
    let [n, cin, h, wd] = match *x {
        [a, b, c, d] => [a, b, c, d],
        _ => return Err(dim_err!("conv2d input must be 4-d, got {:?}", x)),
    };
    let [cout, wcin, kh, kw] = match *w {
        [a, b, c, d] => [a, b, c, d],
        _ => return Err(dim_err!("conv2d weight must be 4-d, got {:?}", w)),
    };
    if kh != kw {
        return Err(dim_err!("conv2d kernel must be square, got {kh}x{kw}"));
    }
    if wcin != cin {
        return Err(dim_err!("conv2d weight expects {wcin} input channels, input has {cin}"));
    }
    if stride == 0 || h + 2 * pad < kh || wd + 2 * pad < kw {
        return Err(dim_err!("conv2d kernel {kh} does not fit input {h}x{wd} with pad {pad}"));
    }
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    Ok(Geom { n, cin, h, w: wd, cout, k: kh, stride, pad, oh, ow })
}

fn im2col<F: Real>(g: &Geom, x: &[F], cols: &mut [F]) {
    let plane = g.plane();
    for c in 0..g.cin {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(F::zero());
                        continue;
                    }
                    let src = &x[(c * g.h + iy as usize) * g.w..][..g.w];
                    for (ox, out) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *out = if ix < 0 || ix >= g.w as isize { F::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

fn col2im<F: Real>(g: &Geom, cols: &[F], dx: &mut [F]) {
    let plane = g.plane();
    for c in 0..g.cin {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut dx[(c * g.h + iy as usize) * g.w..][..g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

impl<F: Real> Graph<F> {
    /// 2-d cross-correlation of `x[N,Cin,H,W]` with `w[Cout,Cin,k,k]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let g = geometry(self.shape(x), self.shape(w), stride, pad)?;
        if let Some(b) = b {
            if self.shape(b) != [g.cout] {
                return Err(dim_err!("conv2d bias must be [{}], got {:?}", g.cout, self.shape(b)));
            }
        }
        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let in_len = g.cin * g.h * g.w;
        let out_len = g.cout * g.plane();
        let mut out = vec![F::zero(); g.n * out_len];
        let keep_cols = self.grad_enabled() && self.needs(w) && !g.pointwise();
        let mut saved_cols = if keep_cols { vec![F::zero(); g.n * g.rows() * g.plane()] } else { Vec::new() };
        let mut scratch = if g.pointwise() { Vec::new() } else { vec![F::zero(); g.rows() * g.plane()] };
        for n in 0..g.n {
            let xn = &xd[n * in_len..(n + 1) * in_len];
            let cols: &[F] = if g.pointwise() {
                xn
            } else {
                im2col(&g, xn, &mut scratch);
                if keep_cols {
                    saved_cols[n * scratch.len()..(n + 1) * scratch.len()].copy_from_slice(&scratch);
                }
                &scratch
            };
            let on = &mut out[n * out_len..(n + 1) * out_len];
            if let Some(b) = b {
                let bd = self.value(b).data();
                for (co, row) in on.chunks_mut(g.plane()).enumerate() {
                    row.fill(bd[co]);
                }
            }
            let beta = if b.is_some() { F::one() } else { F::zero() };
            gemm(F::one(), Mat::new(wd, g.cout, g.rows()), Mat::new(cols, g.rows(), g.plane()), beta, on);
        }
        let mut inputs = vec![x, w];
        inputs.extend(b);
        let value = Tensor::new(&[g.n, g.cout, g.oh, g.ow], out)?;
        self.push(value, OpKind::Conv2d, inputs, Saved::Conv { stride, pad, cols: saved_cols })
    }

    pub(super) fn conv2d_backward(&self, node: &Node<F>, gout: &[F], grads: &mut [Option<Vec<F>>]) -> Result<()> {
        let Saved::Conv { stride, pad, ref cols, .. } = node.saved else { unreachable!() };
        let (x, w) = (node.inputs[0], node.inputs[1]);
        let g = geometry(self.shape(x), self.shape(w), stride, pad)?;
        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let in_len = g.cin * g.h * g.w;
        let out_len = g.cout * g.plane();
        let col_len = g.rows() * g.plane();

        if let Some(&b) = node.inputs.get(2) {
            if self.needs(b) {
                let mut db = vec![F::zero(); g.cout];
                for n in 0..g.n {
                    for (co, row) in gout[n * out_len..(n + 1) * out_len].chunks(g.plane()).enumerate() {
                        db[co] += row.iter().copied().sum::<F>();
                    }
                }
                self.accumulate(grads, b, db);
            }
        }
        if self.needs(w) {
            let mut dw = vec![F::zero(); g.cout * g.rows()];
            for n in 0..g.n {
                let cols_n: &[F] = if g.pointwise() { &xd[n * in_len..(n + 1) * in_len] } else { &cols[n * col_len..(n + 1) * col_len] };
                gemm(
                    F::one(),
                    Mat::new(&gout[n * out_len..(n + 1) * out_len], g.cout, g.plane()),
                    Mat::t(cols_n, g.rows(), g.plane()),
                    F::one(),
                    &mut dw,
                );
            }
            self.accumulate(grads, w, dw);
        }
        if self.needs(x) {
            let mut dx = vec![F::zero(); g.n * in_len];
            let mut dcols = vec![F::zero(); col_len];
            for n in 0..g.n {
                let go = &gout[n * out_len..(n + 1) * out_len];
                let dxn = &mut dx[n * in_len..(n + 1) * in_len];
                if g.pointwise() {
                    gemm(F::one(), Mat::t(wd, g.cout, g.rows()), Mat::new(go, g.cout, g.plane()), F::zero(), dxn);
                } else {
                    gemm(F::one(), Mat::t(wd, g.cout, g.rows()), Mat::new(go, g.cout, g.plane()), F::zero(), &mut dcols);
                    col2im(&g, &dcols, dxn);
                }
            }
            self.accumulate(grads, x, dx);
        }
        Ok(())
    }
}
