//! Depth metrics with distance caps: MAE, RMSE, AbsRel, log10, RMSElog
//! (base 10) and the δ thresholds.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Predictions are clamped to at least this before taking logarithms.
pub const MIN_PREDICTION: f64 = 1e-3;

/// Metrics over one pixel set. All values are NaN when `n_pixels == 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_pixels: u64,
    pub mae: f64,
    pub rmse: f64,
    pub absrel: f64,
    pub log10: f64,
    pub rmselog: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl MetricsReport {
    pub fn is_defined(&self) -> bool {
        self.n_pixels > 0
    }
}

/// Running sums, so metrics can be pixel-weighted across samples.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricsAccumulator {
    n: u64,
    abs: f64,
    sq: f64,
    rel: f64,
    log_abs: f64,
    log_sq: f64,
    delta: [u64; 3],
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds pixels with `0 < gt ≤ cap`.
    pub fn add(&mut self, pred: &[f32], gt: &[f32], cap: f64) -> Result<()> {
        if pred.len() != gt.len() {
            return Err(Error::dim(format!("{} predictions vs {} ground-truth pixels", pred.len(), gt.len())));
        }
        if !(cap > 0.0) {
            return Err(Error::contract(format!("cap must be positive, got {cap}")));
        }
        for (&p, &d) in pred.iter().zip(gt) {
            let (p, d) = (p as f64, d as f64);
            if !(d > 0.0 && d <= cap) {
                continue;
            }
            let e = p - d;
            self.n += 1;
            self.abs += e.abs();
            self.sq += e * e;
            self.rel += e.abs() / d;
            let l = p.max(MIN_PREDICTION).log10() - d.log10();
            self.log_abs += l.abs();
            self.log_sq += l * l;
            let ratio = (p.max(MIN_PREDICTION) / d).max(d / p.max(MIN_PREDICTION));
            for (k, t) in [1.25f64, 1.25 * 1.25, 1.25 * 1.25 * 1.25].iter().enumerate() {
                if ratio < *t {
                    self.delta[k] += 1;
                }
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &MetricsAccumulator) {
        self.n += other.n;
        self.abs += other.abs;
        self.sq += other.sq;
        self.rel += other.rel;
        self.log_abs += other.log_abs;
        self.log_sq += other.log_sq;
        for k in 0..3 {
            self.delta[k] += other.delta[k];
        }
    }

    pub fn report(&self) -> MetricsReport {
        let n = self.n as f64;
        let mean = |s: f64| if self.n == 0 { f64::NAN } else { s / n };
        MetricsReport {
            n_pixels: self.n,
            mae: mean(self.abs),
            rmse: mean(self.sq).sqrt(),
            absrel: mean(self.rel),
            log10: mean(self.log_abs),
            rmselog: mean(self.log_sq).sqrt(),
            d1: mean(self.delta[0] as f64),
            d2: mean(self.delta[1] as f64),
            d3: mean(self.delta[2] as f64),
        }
    }
}

pub fn compute_metrics(pred: &[f32], gt: &[f32], cap: f64) -> Result<MetricsReport> {
    let mut acc = MetricsAccumulator::new();
    acc.add(pred, gt, cap)?;
    Ok(acc.report())
}

pub const CSV_HEADER: &str = "subset,cap_m,n_pixels,mae,rmse,absrel,log10,rmselog,d1,d2,d3";

/// One CSV row (no trailing newline).
pub fn csv_row(subset: &str, cap: f64, r: &MetricsReport) -> String {
    let mut s = format!("{subset},{cap},{}", r.n_pixels);
    for v in [r.mae, r.rmse, r.absrel, r.log10, r.rmselog, r.d1, r.d2, r.d3] {
        if v.is_nan() {
            s.push_str(",NA");
        } else {
            write!(s, ",{v:.6}").expect("write to string");
        }
    }
    s
}
