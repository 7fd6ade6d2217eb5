//! Depth evaluation metrics on normalized depth maps.

#[allow(unused_imports)]
use num_traits::Float;

use crate::data::DepthMap;
use crate::error::{dim_err, Error, Result};

/// Default floor for denominators and log arguments.
pub const METRIC_EPS: f64 = 1e-6;

/// Aggregated depth metrics over valid pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub mae: f64,
    pub rmse_log: f64,
    pub si_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub n_valid: usize,
}

impl MetricsReport {
    /// `(key, value)` pairs in reporting order.
    pub fn fields(&self) -> [(&'static str, f64); 8] {
        [
            ("abs_rel", self.abs_rel),
            ("sq_rel", self.sq_rel),
            ("mae", self.mae),
            ("rmse_log", self.rmse_log),
            ("si_log", self.si_log),
            ("delta1", self.delta1),
            ("delta2", self.delta2),
            ("delta3", self.delta3),
        ]
    }

    /// Unweighted mean of per-sample reports, accumulated in slice order.
    pub fn average(reports: &[MetricsReport]) -> Result<MetricsReport> {
        if reports.is_empty() {
            return Err(Error::EmptyMask);
        }
        let n = reports.len() as f64;
        let mut out = MetricsReport::default();
        for r in reports {
            out.abs_rel += r.abs_rel;
            out.sq_rel += r.sq_rel;
            out.mae += r.mae;
            out.rmse_log += r.rmse_log;
            out.si_log += r.si_log;
            out.delta1 += r.delta1;
            out.delta2 += r.delta2;
            out.delta3 += r.delta3;
            out.n_valid += r.n_valid;
        }
        out.abs_rel /= n;
        out.sq_rel /= n;
        out.mae /= n;
        out.rmse_log /= n;
        out.si_log /= n;
        out.delta1 /= n;
        out.delta2 /= n;
        out.delta3 /= n;
        Ok(out)
    }
}

/// Compare `pred` against `gt` over pixels valid in both maps.
pub fn evaluate(pred: &DepthMap, gt: &DepthMap, eps: f64) -> Result<MetricsReport> {
    if pred.h() != gt.h() || pred.w() != gt.w() {
        return Err(dim_err!("depth maps {}x{} vs {}x{}", pred.h(), pred.w(), gt.h(), gt.w()));
    }
    let mut n = 0usize;
    let (mut abs_rel, mut sq_rel, mut mae, mut sq_log) = (0.0, 0.0, 0.0, 0.0);
    let (mut log_sum, mut d1, mut d2, mut d3) = (0.0, 0usize, 0usize, 0usize);
    let thr = [1.25, 1.25f64.powi(2), 1.25f64.powi(3)];
    for i in 0..gt.values().len() {
        if !(pred.mask()[i] && gt.mask()[i]) {
            continue;
        }
        let (d, p) = (gt.values()[i] as f64, pred.values()[i] as f64);
        let err = (d - p).abs();
        let den = d.max(eps);
        abs_rel += err / den;
        sq_rel += err * err / den;
        mae += err;
        let lr = d.max(eps).ln() - p.max(eps).ln();
        sq_log += lr * lr;
        log_sum += lr;
        let ratio = (p.max(eps) / d.max(eps)).max(d.max(eps) / p.max(eps));
        d1 += (ratio < thr[0]) as usize;
        d2 += (ratio < thr[1]) as usize;
        d3 += (ratio < thr[2]) as usize;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let nf = n as f64;
    let mean_log = log_sum / nf;
    Ok(MetricsReport {
        abs_rel: abs_rel / nf,
        sq_rel: sq_rel / nf,
        mae: mae / nf,
        rmse_log: (sq_log / nf).sqrt(),
        si_log: (sq_log / nf - mean_log * mean_log).max(0.0),
        delta1: d1 as f64 / nf,
        delta2: d2 as f64 / nf,
        delta3: d3 as f64 / nf,
        n_valid: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn hand_fixture() {
        let gt = DepthMap::new(1, 3, vec![0.25, 0.5, 1.0]).unwrap();
        let pred = DepthMap::new(1, 3, vec![0.5; 3]).unwrap();
        let m = evaluate(&pred, &gt, METRIC_EPS).unwrap();
        assert!((m.abs_rel - 0.5).abs() < 1e-9);
        // (0.0625 / 0.25 + 0 + 0.25 / 1.0) / 3
        assert!((m.sq_rel - 0.5 / 3.0).abs() < 1e-9);
        assert!((m.mae - 0.25).abs() < 1e-9);
        for d in [m.delta1, m.delta2, m.delta3] {
            assert!((d - 1.0 / 3.0).abs() < 1e-9);
        }
        let masked = DepthMap::with_mask(1, 3, vec![0.25, 0.5, 1.0], vec![false, true, true]).unwrap();
        let m = evaluate(&pred, &masked, METRIC_EPS).unwrap();
        assert!((m.abs_rel - 0.25).abs() < 1e-9);
        assert_eq!(m.n_valid, 2);
    }

    #[test]
    fn identity() {
        let gt = DepthMap::new(2, 2, vec![0.1, 0.4, 0.7, 1.0]).unwrap();
        let m = evaluate(&gt, &gt, METRIC_EPS).unwrap();
        assert_eq!((m.abs_rel, m.sq_rel, m.mae, m.rmse_log, m.si_log), (0.0, 0.0, 0.0, 0.0, 0.0));
        assert_eq!((m.delta1, m.delta2, m.delta3), (1.0, 1.0, 1.0));
    }

    #[test]
    fn empty() {
        let gt = DepthMap::new(1, 1, vec![f32::NAN]).unwrap();
        assert!(matches!(evaluate(&gt, &gt, METRIC_EPS), Err(Error::EmptyMask)));
        assert!(matches!(MetricsReport::average(&[]), Err(Error::EmptyMask)));
    }
}
