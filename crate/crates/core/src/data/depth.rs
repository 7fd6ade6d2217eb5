use alloc::vec::Vec;

use crate::error::{dim_err, Error, Result};

/// Normalized depth map with a validity mask.
///
/// Valid pixels hold values in `[0, 1]`; invalid pixels are stored as NaN and
/// are excluded from every loss and metric.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    h: usize,
    w: usize,
    values: Vec<f32>,
    mask: Vec<bool>,
}

impl DepthMap {
    /// Build from raw values; NaN marks an invalid pixel.
    pub fn new(h: usize, w: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != h * w {
            return Err(dim_err!("depth map {h}x{w} needs {} values, got {}", h * w, values.len()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_nan() && !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(alloc::format!("depth value {v} outside [0, 1]")));
        }
        let mask = values.iter().map(|v| !v.is_nan()).collect();
        Ok(DepthMap { h, w, values, mask })
    }

    /// Build from values and an explicit mask; masked-out values become NaN.
    pub fn with_mask(h: usize, w: usize, mut values: Vec<f32>, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != values.len() {
            return Err(dim_err!("mask length {} vs {} values", mask.len(), values.len()));
        }
        for (v, &m) in values.iter_mut().zip(&mask) {
            if !m {
                *v = f32::NAN;
            }
        }
        Self::new(h, w, values)
    }

    pub fn h(&self) -> usize {
        self.h
    }
    pub fn w(&self) -> usize {
        self.w
    }
    pub fn values(&self) -> &[f32] {
        &self.values
    }
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nan_is_invalid() {
        let d = DepthMap::new(2, 2, alloc::vec![0.0, 0.5, 1.0, f32::NAN]).unwrap();
        assert_eq!(d.mask(), &[true, true, true, false]);
        assert!(DepthMap::new(1, 1, alloc::vec![1.5]).is_err());
        assert!(DepthMap::new(1, 2, alloc::vec![0.5]).is_err());
    }
}
