//! Full-reference quality metrics.
//!
//! Images are normalized intensities; `data_range` is the value a unit
//! intensity is reported as (255 for 8-bit style tables, 1 for raw values).
//! SNR is scale free and therefore takes no range.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageGray;
use crate::losses::{edge_loss, estimated_noise};

const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub data_range: f64,
    pub ssim_window: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            data_range: 255.0,
            ssim_window: 8,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.data_range > 0.0 && self.data_range.is_finite()) {
            return Err(Error::Domain("data_range must be positive".into()));
        }
        if self.ssim_window == 0 {
            return Err(Error::Domain("ssim_window must be positive".into()));
        }
        Ok(())
    }
}

pub fn mse_metric(xhat: &ImageGray, x: &ImageGray, data_range: f64) -> Result<f64> {
    xhat.ensure_same_dims(x)?;
    let sum: f64 = xhat
        .data()
        .iter()
        .zip(x.data())
        .map(|(a, b)| {
            let d = (a - b) * data_range;
            d * d
        })
        .sum();
    Ok(sum / x.len() as f64)
}

/// `10 log10(sum X^2 / sum (X - X_hat)^2)` in dB; `+inf` for a perfect match.
pub fn snr_metric(xhat: &ImageGray, x: &ImageGray) -> Result<f64> {
    xhat.ensure_same_dims(x)?;
    let signal: f64 = x.data().iter().map(|v| v * v).sum();
    if signal == 0.0 {
        return Err(Error::Domain("SNR is undefined for an all-zero reference".into()));
    }
    let error: f64 = xhat.data().iter().zip(x.data()).map(|(a, b)| (b - a) * (b - a)).sum();
    if error == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / error).log10())
}

/// Summed-area table with a zero first row and column.
fn integral(width: usize, height: usize, value: impl Fn(usize) -> f64) -> Vec<f64> {
    let stride = width + 1;
    let mut table = vec![0.0; stride * (height + 1)];
    for r in 0..height {
        let mut row_sum = 0.0;
        for c in 0..width {
            row_sum += value(r * width + c);
            table[(r + 1) * stride + c + 1] = table[r * stride + c + 1] + row_sum;
        }
    }
    table
}

/// Mean SSIM over all `window x window` placements (stride 1, uniform weights).
pub fn ssim_with_window(xhat: &ImageGray, x: &ImageGray, data_range: f64, window: usize) -> Result<f64> {
    xhat.ensure_same_dims(x)?;
    x.ensure_at_least(window)?;
    let (h, w) = x.dims();
    let a: Vec<f64> = xhat.data().iter().map(|v| v * data_range).collect();
    let b: Vec<f64> = x.data().iter().map(|v| v * data_range).collect();
    let sa = integral(w, h, |i| a[i]);
    let sb = integral(w, h, |i| b[i]);
    let saa = integral(w, h, |i| a[i] * a[i]);
    let sbb = integral(w, h, |i| b[i] * b[i]);
    let sab = integral(w, h, |i| a[i] * b[i]);

    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let n = (window * window) as f64;
    let stride = w + 1;
    let window_sum = |t: &[f64], r: usize, c: usize| {
        t[(r + window) * stride + c + window] - t[r * stride + c + window] - t[(r + window) * stride + c]
            + t[r * stride + c]
    };

    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..=h - window {
        for c in 0..=w - window {
            let mu_a = window_sum(&sa, r, c) / n;
            let mu_b = window_sum(&sb, r, c) / n;
            let var_a = window_sum(&saa, r, c) / n - mu_a * mu_a;
            let var_b = window_sum(&sbb, r, c) / n - mu_b * mu_b;
            let cov = window_sum(&sab, r, c) / n - mu_a * mu_b;
            let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// SSIM with the default 8x8 window.
pub fn ssim_metric(xhat: &ImageGray, x: &ImageGray, data_range: f64) -> Result<f64> {
    ssim_with_window(xhat, x, data_range, EvalConfig::default().ssim_window)
}

/// Row/column derivative mismatch, the same quantity as the edge cost term.
pub fn edge_fidelity(xhat: &ImageGray, x: &ImageGray) -> Result<f64> {
    Ok(edge_loss(xhat, x)?.0)
}

/// Which pixels count as homogeneous: those whose clean neighbourhood of
/// side `2 * radius + 1` spans less than `tolerance`, at least `border`
/// pixels from the image edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HomogeneityConfig {
    pub radius: usize,
    pub tolerance: f64,
    pub border: usize,
    pub ratio_epsilon: f64,
}

impl Default for HomogeneityConfig {
    fn default() -> Self {
        Self {
            radius: 4,
            tolerance: 0.03,
            border: 8,
            ratio_epsilon: 1e-3,
        }
    }
}

pub fn homogeneous_mask(clean: &ImageGray, cfg: &HomogeneityConfig) -> Vec<bool> {
    let (h, w) = clean.dims();
    let margin = cfg.border.max(cfg.radius);
    let mut mask = vec![false; h * w];
    if h <= 2 * margin || w <= 2 * margin {
        return mask;
    }
    for r in margin..h - margin {
        for c in margin..w - margin {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for rr in r - cfg.radius..=r + cfg.radius {
                for cc in c - cfg.radius..=c + cfg.radius {
                    let v = clean.get(rr, cc);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            mask[r * w + c] = hi - lo < cfg.tolerance;
        }
    }
    mask
}

/// Moments of the ratio image over homogeneous pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioStats {
    pub mean: f64,
    pub variance: f64,
    pub count: usize,
}

/// Pools `noisy / xhat` over the homogeneous pixels of every
/// `(noisy, xhat, clean)` triple. Variance is the population variance.
pub fn ratio_statistics(items: &[(&ImageGray, &ImageGray, &ImageGray)], cfg: &HomogeneityConfig) -> Result<RatioStats> {
    let mut samples = Vec::new();
    for &(noisy, xhat, clean) in items {
        noisy.ensure_same_dims(clean)?;
        let ratio = estimated_noise(noisy, xhat, cfg.ratio_epsilon)?;
        let mask = homogeneous_mask(clean, cfg);
        samples.extend(ratio.data().iter().zip(&mask).filter(|(_, &m)| m).map(|(&q, _)| q));
    }
    if samples.is_empty() {
        return Err(Error::Domain("no homogeneous pixels".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    Ok(RatioStats {
        mean,
        variance: samples.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / n,
        count: samples.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub mse: f64,
    pub snr: f64,
    pub ssim: f64,
    pub edge_err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mse: f64,
    pub snr: f64,
    pub ssim: f64,
    pub edge_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub records: Vec<EvalRecord>,
    pub aggregate: Aggregate,
}

/// Arithmetic mean summed in sorted order, so it does not depend on record order.
fn order_free_mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

fn aggregate(records: &[EvalRecord]) -> Aggregate {
    let col = |f: fn(&EvalRecord) -> f64| order_free_mean(records.iter().map(f).collect());
    Aggregate {
        mse: col(|r| r.mse),
        snr: col(|r| r.snr),
        ssim: col(|r| r.ssim),
        edge_err: col(|r| r.edge_err),
    }
}

pub fn evaluate_pair(id: &str, xhat: &ImageGray, x: &ImageGray, config: &EvalConfig) -> Result<EvalRecord> {
    let wrap = |e: Error| Error::Item {
        id: id.to_string(),
        source: Box::new(e),
    };
    Ok(EvalRecord {
        id: id.to_string(),
        mse: mse_metric(xhat, x, config.data_range).map_err(wrap)?,
        snr: snr_metric(xhat, x).map_err(wrap)?,
        ssim: ssim_with_window(xhat, x, config.data_range, config.ssim_window).map_err(wrap)?,
        edge_err: edge_fidelity(xhat, x).map_err(wrap)?,
    })
}

/// Metrics for `(id, filtered, reference)` triples plus their means.
pub fn evaluate_set(pairs: &[(&str, &ImageGray, &ImageGray)], config: &EvalConfig) -> Result<EvalReport> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::Domain("nothing to evaluate".into()));
    }
    let records = pairs
        .iter()
        .map(|(id, xhat, x)| evaluate_pair(id, xhat, x, config))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_records(*config, records)
}

const CSV_PREAMBLE: &str = "# ssim_variant=uniform";

impl EvalReport {
    pub fn from_records(config: EvalConfig, records: Vec<EvalRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Domain("report has no records".into()));
        }
        let aggregate = aggregate(&records);
        Ok(Self {
            config,
            records,
            aggregate,
        })
    }

    /// Aligned text table in SSIM / SNR / MSE / EdgeErr column order.
    pub fn to_table(&self) -> String {
        let id_width = self
            .records
            .iter()
            .map(|r| r.id.len())
            .chain([5])
            .max()
            .unwrap_or(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<id_width$}  {:>8}  {:>9}  {:>10}  {:>11}",
            "image", "SSIM", "SNR[dB]", "MSE", "EdgeErr"
        );
        let rule = "-".repeat(id_width + 48);
        let _ = writeln!(out, "{rule}");
        let row = |out: &mut String, id: &str, ssim: f64, snr: f64, mse: f64, edge: f64| {
            let _ = writeln!(out, "{id:<id_width$}  {ssim:>8.4}  {snr:>9.3}  {mse:>10.3}  {edge:>11.4e}");
        };
        for r in &self.records {
            row(&mut out, &r.id, r.ssim, r.snr, r.mse, r.edge_err);
        }
        let _ = writeln!(out, "{rule}");
        let a = &self.aggregate;
        row(&mut out, "mean", a.ssim, a.snr, a.mse, a.edge_err);
        let _ = writeln!(
            out,
            "(uniform {w}x{w} SSIM window, data range {dr})",
            w = self.config.ssim_window,
            dr = self.config.data_range
        );
        out
    }

    /// Delimited form: a `#` preamble echoing the configuration, then one
    /// row per image. Floats use shortest round-trip formatting.
    pub fn to_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            wtr.serialize(r)
                .map_err(|e| Error::Domain(format!("csv encoding failed: {e}")))?;
        }
        let body = wtr
            .into_inner()
            .map_err(|e| Error::Domain(format!("csv encoding failed: {e}")))?;
        Ok(format!(
            "{CSV_PREAMBLE} data_range={} ssim_window={}\n{}",
            self.config.data_range,
            self.config.ssim_window,
            String::from_utf8(body).expect("csv output is utf-8")
        ))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |detail: String| Error::Format {
            path: "<report>".into(),
            detail,
        };
        let first = text.lines().next().unwrap_or_default();
        let settings = first
            .strip_prefix(CSV_PREAMBLE)
            .ok_or_else(|| bad("missing report preamble".into()))?;
        let mut config = EvalConfig::default();
        for item in settings.split_whitespace() {
            match item.split_once('=') {
                Some(("data_range", v)) => {
                    config.data_range = v.parse().map_err(|_| bad(format!("bad data_range '{v}'")))?
                }
                Some(("ssim_window", v)) => {
                    config.ssim_window = v.parse().map_err(|_| bad(format!("bad ssim_window '{v}'")))?
                }
                _ => return Err(bad(format!("unknown preamble entry '{item}'"))),
            }
        }
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let records = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<EvalRecord>, _>>()
            .map_err(|e| bad(e.to_string()))?;
        Self::from_records(config, records)
    }
}
