use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, Error, Result};
use crate::numerics::{Real, Tensor};

/// Bit-packed binary tensor over `(T, C, H, W)`.
///
/// Element `(t, c, y, x)` lives at flat index `((t*C + c)*H + y)*W + x`,
/// most significant bit first within each byte.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpikeTensor {
    dims: [usize; 4],
    bits: Vec<u8>,
}

impl SpikeTensor {
    pub fn zeros(t: usize, c: usize, h: usize, w: usize) -> Self {
        let n = t * c * h * w;
        SpikeTensor { dims: [t, c, h, w], bits: vec![0; n.div_ceil(8)] }
    }

    /// Wrap a packed payload; its length must be `ceil(T*C*H*W / 8)` and
    /// padding bits in the last byte must be zero.
    pub fn from_packed(dims: [usize; 4], bits: Vec<u8>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if bits.len() != n.div_ceil(8) {
            return Err(Error::Length(alloc::format!("spike payload has {} bytes, {:?} needs {}", bits.len(), dims, n.div_ceil(8))));
        }
        if !n.is_multiple_of(8) {
            let pad = 8 - n % 8;
            if bits[bits.len() - 1] & ((1u8 << pad) - 1) != 0 {
                return Err(Error::Format("non-zero padding bits in spike payload".into()));
            }
        }
        Ok(SpikeTensor { dims, bits })
    }

    pub fn from_fn(t: usize, c: usize, h: usize, w: usize, mut f: impl FnMut(usize, usize, usize, usize) -> bool) -> Self {
        let mut s = Self::zeros(t, c, h, w);
        for ti in 0..t {
            for ci in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        if f(ti, ci, y, x) {
                            s.set(ti, ci, y, x, true);
                        }
                    }
                }
            }
        }
        s
    }

    /// Pack a `[T, C, H, W]` tensor whose entries are exactly 0 or 1.
    pub fn from_dense<F: Real>(x: &Tensor<F>) -> Result<Self> {
        let [t, c, h, w] = x.dims4()?;
        if !x.is_binary() {
            return Err(Error::Contract("spike tensor values must be 0 or 1".into()));
        }
        let mut s = Self::zeros(t, c, h, w);
        for (i, &v) in x.data().iter().enumerate() {
            if v == F::one() {
                s.set_flat(i, true);
            }
        }
        Ok(s)
    }

    pub fn to_dense<F: Real>(&self) -> Tensor<F> {
        let data = (0..self.len()).map(|i| if self.get_flat(i) { F::one() } else { F::zero() }).collect();
        Tensor::new(&self.dims, data).expect("dims match payload")
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }
    pub fn t(&self) -> usize {
        self.dims[0]
    }
    pub fn c(&self) -> usize {
        self.dims[1]
    }
    pub fn h(&self) -> usize {
        self.dims[2]
    }
    pub fn w(&self) -> usize {
        self.dims[3]
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn packed(&self) -> &[u8] {
        &self.bits
    }

    fn flat(&self, t: usize, c: usize, y: usize, x: usize) -> usize {
        let [_, cc, hh, ww] = self.dims;
        ((t * cc + c) * hh + y) * ww + x
    }

    pub fn get_flat(&self, i: usize) -> bool {
        self.bits[i / 8] & (0x80 >> (i % 8)) != 0
    }

    pub fn set_flat(&mut self, i: usize, on: bool) {
        let mask = 0x80u8 >> (i % 8);
        if on {
            self.bits[i / 8] |= mask;
        } else {
            self.bits[i / 8] &= !mask;
        }
    }

    pub fn get(&self, t: usize, c: usize, y: usize, x: usize) -> bool {
        self.get_flat(self.flat(t, c, y, x))
    }

    pub fn set(&mut self, t: usize, c: usize, y: usize, x: usize, on: bool) {
        let i = self.flat(t, c, y, x);
        self.set_flat(i, on);
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn firing_rate(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.count_ones() as f64 / self.len() as f64
        }
    }

    /// Stack samples time-major into `[T*B, C, H, W]` (timestep outermost).
    pub fn stack<F: Real>(samples: &[&SpikeTensor]) -> Result<Tensor<F>> {
        let first = samples.first().ok_or_else(|| dim_err!("cannot stack zero spike tensors"))?;
        let [t, c, h, w] = first.dims;
        if samples.iter().any(|s| s.dims != first.dims) {
            return Err(dim_err!("stacked spike tensors must share dims {:?}", first.dims));
        }
        let b = samples.len();
        let plane = c * h * w;
        let mut data = vec![F::zero(); t * b * plane];
        for (bi, s) in samples.iter().enumerate() {
            for ti in 0..t {
                let dst = &mut data[(ti * b + bi) * plane..][..plane];
                for (j, d) in dst.iter_mut().enumerate() {
                    if s.get_flat(ti * plane + j) {
                        *d = F::one();
                    }
                }
            }
        }
        Tensor::new(&[t * b, c, h, w], data)
    }
}
