//! Cost terms for training the despeckling filter.
//!
//! Every term is a per-element mean and returns its gradient with respect to
//! the filtered image. The statistical term compares the histogram of the
//! ratio image `Y / X_hat` with the Gamma speckle law using a base-2 KL
//! divergence; the histogram uses triangular soft binning so that it is
//! differentiable in the samples.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::image::ImageGray;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_kl: f64,
    pub lambda_edge: f64,
    pub kl_bins: usize,
    pub kl_range: [f64; 2],
    pub kl_epsilon: f64,
    pub ratio_epsilon: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_kl: 1.0,
            lambda_edge: 1.0,
            kl_bins: 64,
            kl_range: [0.0, 8.0],
            kl_epsilon: 1e-7,
            ratio_epsilon: 1e-3,
        }
    }
}

impl LossWeights {
    /// Same weights with the edge term switched off (the two-term cost).
    pub fn without_edge(self) -> Self {
        Self {
            lambda_edge: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.kl_range;
        let problem = if !(self.lambda_kl >= 0.0 && self.lambda_kl.is_finite()) {
            Some("lambda_kl must be a finite value >= 0")
        } else if !(self.lambda_edge >= 0.0 && self.lambda_edge.is_finite()) {
            Some("lambda_edge must be a finite value >= 0")
        } else if self.kl_bins < 2 {
            Some("kl_bins must be at least 2")
        } else if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
            Some("kl_range must satisfy 0 <= lo < hi")
        } else if !(self.kl_epsilon > 0.0) {
            Some("kl_epsilon must be > 0")
        } else if !(self.ratio_epsilon > 0.0) {
            Some("ratio_epsilon must be > 0")
        } else {
            None
        };
        match problem {
            Some(msg) => Err(Error::Domain(msg.into())),
            None => Ok(()),
        }
    }
}

/// Discrete distribution over uniform bins spanning `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub masses: Vec<f64>,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.masses.len()
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.masses.len() as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        let w = self.bin_width();
        (0..=self.bins()).map(|i| self.lo + i as f64 * w).collect()
    }

    pub fn center(&self, bin: usize) -> f64 {
        self.lo + (bin as f64 + 0.5) * self.bin_width()
    }
}

/// Floor at `eps` and renormalize. Returns masses, which bins were floored
/// and the normalizer.
fn floor_and_normalize(raw: &[f64], eps: f64) -> (Vec<f64>, Vec<bool>, f64) {
    let floored: Vec<bool> = raw.iter().map(|&r| r <= eps).collect();
    let lifted: Vec<f64> = raw.iter().map(|&r| r.max(eps)).collect();
    let total: f64 = lifted.iter().sum();
    (lifted.iter().map(|v| v / total).collect(), floored, total)
}

pub fn mse_loss(xhat: &ImageGray, x: &ImageGray) -> Result<(f64, ImageGray)> {
    xhat.ensure_same_dims(x)?;
    let n = xhat.len() as f64;
    let mut sum = 0.0;
    let grad = xhat
        .data()
        .iter()
        .zip(x.data())
        .map(|(a, b)| {
            let d = a - b;
            sum += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((
        sum / n,
        ImageGray::from_vec_unchecked(xhat.height(), xhat.width(), grad),
    ))
}

/// Ratio image `Y / max(X_hat, eps)`.
pub fn estimated_noise(noisy: &ImageGray, xhat: &ImageGray, ratio_epsilon: f64) -> Result<ImageGray> {
    noisy.ensure_same_dims(xhat)?;
    let data = noisy
        .data()
        .iter()
        .zip(xhat.data())
        .map(|(y, x)| y / x.max(ratio_epsilon))
        .collect();
    ImageGray::new(noisy.height(), noisy.width(), data)
}

fn gamma_cdf(x: f64, looks: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if looks == 1.0 {
        -(-x).exp_m1()
    } else {
        gamma_lr(looks, looks * x)
    }
}

/// Bin masses of the Gamma speckle law. The first and last bins absorb the
/// tails below `lo` and above `hi`, matching how [`empirical_histogram`]
/// clamps out-of-range samples.
pub fn theoretical_histogram(looks: f64, weights: &LossWeights) -> Result<Histogram> {
    if !(looks > 0.0 && looks.is_finite()) {
        return Err(Error::Domain(format!("looks must be > 0, got {looks}")));
    }
    weights.validate()?;
    let [lo, hi] = weights.kl_range;
    let bins = weights.kl_bins;
    let width = (hi - lo) / bins as f64;
    let cdf: Vec<f64> = (0..=bins)
        .map(|i| gamma_cdf(lo + i as f64 * width, looks))
        .collect();
    let raw: Vec<f64> = (0..bins)
        .map(|i| {
            let left = if i == 0 { 0.0 } else { cdf[i] };
            let right = if i + 1 == bins { 1.0 } else { cdf[i + 1] };
            (right - left).max(0.0)
        })
        .collect();
    let (masses, _, _) = floor_and_normalize(&raw, weights.kl_epsilon);
    Ok(Histogram { lo, hi, masses })
}

/// Per-sample soft-bin assignment retained for the backward pass.
#[derive(Debug, Clone)]
pub struct SoftAssignment {
    lower_bin: Vec<usize>,
    upper_weight: Vec<f64>,
    in_range: Vec<bool>,
    raw: Vec<f64>,
    floored: Vec<bool>,
    normalizer: f64,
    bin_width: f64,
}

impl SoftAssignment {
    /// Left bin of the kernel segment each sample falls in.
    pub fn lower_bins(&self) -> &[usize] {
        &self.lower_bin
    }

    /// Share of each sample assigned to bin `lower_bins()[k] + 1`.
    pub fn upper_weights(&self) -> &[f64] {
        &self.upper_weight
    }

    /// Whether each sample lies between the first and last bin centers
    /// (outside, it is clamped and has zero derivative).
    pub fn in_range(&self) -> &[bool] {
        &self.in_range
    }

    /// Un-floored mass of each bin.
    pub fn raw_masses(&self) -> &[f64] {
        &self.raw
    }

    pub fn floored(&self) -> &[bool] {
        &self.floored
    }
}

/// Soft histogram of `samples`: each sample splits its unit weight between
/// the two nearest bin centers with a triangular kernel one bin wide.
pub fn empirical_histogram(samples: &ImageGray, weights: &LossWeights) -> Result<(Histogram, SoftAssignment)> {
    weights.validate()?;
    let [lo, hi] = weights.kl_range;
    let bins = weights.kl_bins;
    let width = (hi - lo) / bins as f64;
    let first_center = lo + 0.5 * width;
    let last = (bins - 1) as f64;
    let n = samples.len();

    let mut raw = vec![0.0; bins];
    let mut lower_bin = Vec::with_capacity(n);
    let mut upper_weight = Vec::with_capacity(n);
    let mut in_range = Vec::with_capacity(n);
    for &x in samples.data() {
        if !x.is_finite() {
            return Err(Error::NonFinite("histogram sample".into()));
        }
        let s = (x - first_center) / width;
        let clamped = s.clamp(0.0, last);
        let i = (clamped.floor() as usize).min(bins - 2);
        let t = clamped - i as f64;
        raw[i] += 1.0 - t;
        raw[i + 1] += t;
        lower_bin.push(i);
        upper_weight.push(t);
        in_range.push((0.0..=last).contains(&s));
    }
    for r in &mut raw {
        *r /= n as f64;
    }
    let (masses, floored, normalizer) = floor_and_normalize(&raw, weights.kl_epsilon);
    Ok((
        Histogram { lo, hi, masses },
        SoftAssignment {
            lower_bin,
            upper_weight,
            in_range,
            raw,
            floored,
            normalizer,
            bin_width: width,
        },
    ))
}

fn same_bins(p: &Histogram, q: &Histogram) -> bool {
    p.lo == q.lo && p.hi == q.hi && p.masses.len() == q.masses.len()
}

/// `sum_i p_i log2(p_i / q_i)`.
pub fn kl_divergence(p: &Histogram, q: &Histogram) -> Result<f64> {
    if !same_bins(p, q) {
        return Err(Error::HistogramMismatch);
    }
    Ok(p.masses
        .iter()
        .zip(&q.masses)
        .map(|(&pi, &qi)| if pi > 0.0 { pi * (pi / qi).log2() } else { 0.0 })
        .sum())
}

/// Divergence and its derivative with respect to every sample.
fn kl_sample_gradient(
    p: &Histogram,
    q: &Histogram,
    cache: &SoftAssignment,
) -> Result<(f64, Vec<f64>)> {
    let value = kl_divergence(p, q)?;
    let dp: Vec<f64> = p
        .masses
        .iter()
        .zip(&q.masses)
        .map(|(&pi, &qi)| (pi / qi).log2() + 1.0 / LN_2)
        .collect();
    let mean_dp: f64 = p.masses.iter().zip(&dp).map(|(pi, g)| pi * g).sum();
    let draw: Vec<f64> = dp
        .iter()
        .zip(&cache.floored)
        .map(|(&g, &floored)| if floored { 0.0 } else { (g - mean_dp) / cache.normalizer })
        .collect();
    let n = cache.lower_bin.len() as f64;
    let scale = 1.0 / (cache.bin_width * n);
    let grad = cache
        .lower_bin
        .iter()
        .zip(&cache.in_range)
        .map(|(&i, &inside)| if inside { (draw[i + 1] - draw[i]) * scale } else { 0.0 })
        .collect();
    Ok((value, grad))
}

fn kl_against(
    noisy: &ImageGray,
    xhat: &ImageGray,
    target: &Histogram,
    weights: &LossWeights,
) -> Result<(f64, ImageGray)> {
    noisy.ensure_same_dims(xhat)?;
    let ratio = estimated_noise(noisy, xhat, weights.ratio_epsilon)?;
    let (p, cache) = empirical_histogram(&ratio, weights)?;
    let (value, dsample) = kl_sample_gradient(&p, target, &cache)?;
    let grad = dsample
        .iter()
        .zip(noisy.data())
        .zip(xhat.data())
        .map(|((&g, &y), &x)| {
            if x > weights.ratio_epsilon {
                -g * y / (x * x)
            } else {
                0.0
            }
        })
        .collect();
    Ok((
        value,
        ImageGray::from_vec_unchecked(xhat.height(), xhat.width(), grad),
    ))
}

/// KL divergence between the ratio-image histogram and the Gamma law.
pub fn kl_loss(
    noisy: &ImageGray,
    xhat: &ImageGray,
    looks: f64,
    weights: &LossWeights,
) -> Result<(f64, ImageGray)> {
    let target = theoretical_histogram(looks, weights)?;
    kl_against(noisy, xhat, &target, weights)
}

/// Mean squared mismatch of forward differences along rows and along columns.
pub fn edge_loss(xhat: &ImageGray, x: &ImageGray) -> Result<(f64, ImageGray)> {
    xhat.ensure_same_dims(x)?;
    xhat.ensure_at_least(2)?;
    let (h, w) = xhat.dims();
    let a = xhat.data();
    let b = x.data();
    let n_row = (h * (w - 1)) as f64;
    let n_col = ((h - 1) * w) as f64;
    let mut grad = vec![0.0; h * w];

    let mut row_sum = 0.0;
    for r in 0..h {
        for c in 0..w - 1 {
            let k = r * w + c;
            let e = (a[k + 1] - a[k]) - (b[k + 1] - b[k]);
            row_sum += e * e;
            let g = 2.0 * e / n_row;
            grad[k + 1] += g;
            grad[k] -= g;
        }
    }
    let mut col_sum = 0.0;
    for r in 0..h - 1 {
        for c in 0..w {
            let k = r * w + c;
            let e = (a[k + w] - a[k]) - (b[k + w] - b[k]);
            col_sum += e * e;
            let g = 2.0 * e / n_col;
            grad[k + w] += g;
            grad[k] -= g;
        }
    }
    Ok((
        row_sum / n_row + col_sum / n_col,
        ImageGray::from_vec_unchecked(h, w, grad),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub mse_term: f64,
    pub kl_term: f64,
    pub edge_term: f64,
    pub grad: ImageGray,
}

/// The weighted cost with the Gamma target histogram computed once.
#[derive(Debug, Clone)]
pub struct CompositeLoss {
    weights: LossWeights,
    looks: f64,
    target: Histogram,
}

impl CompositeLoss {
    pub fn new(looks: f64, weights: LossWeights) -> Result<Self> {
        let target = theoretical_histogram(looks, &weights)?;
        Ok(Self {
            weights,
            looks,
            target,
        })
    }

    pub fn weights(&self) -> &LossWeights {
        &self.weights
    }

    pub fn looks(&self) -> f64 {
        self.looks
    }

    pub fn target(&self) -> &Histogram {
        &self.target
    }

    /// `MSE + lambda_kl * KL + lambda_edge * EDGE` and its gradient.
    pub fn evaluate(&self, xhat: &ImageGray, clean: &ImageGray, noisy: &ImageGray) -> Result<LossValue> {
        xhat.ensure_same_dims(clean)?;
        xhat.ensure_same_dims(noisy)?;
        let (mse, g_mse) = mse_loss(xhat, clean)?;
        let (kl, g_kl) = kl_against(noisy, xhat, &self.target, &self.weights)?;
        let (edge, g_edge) = edge_loss(xhat, clean)?;
        let (lk, le) = (self.weights.lambda_kl, self.weights.lambda_edge);
        let grad = g_mse
            .data()
            .iter()
            .zip(g_kl.data())
            .zip(g_edge.data())
            .map(|((a, b), c)| a + lk * b + le * c)
            .collect();
        Ok(LossValue {
            total: mse + lk * kl + le * edge,
            mse_term: mse,
            kl_term: kl,
            edge_term: edge,
            grad: ImageGray::from_vec_unchecked(xhat.height(), xhat.width(), grad),
        })
    }

    /// The two-term `MSE + lambda_kl * KL` cost; `edge_term` is reported but
    /// does not enter `total` or `grad`.
    pub fn evaluate_without_edge(
        &self,
        xhat: &ImageGray,
        clean: &ImageGray,
        noisy: &ImageGray,
    ) -> Result<LossValue> {
        let (mse, g_mse) = mse_loss(xhat, clean)?;
        let (kl, g_kl) = kl_against(noisy, xhat, &self.target, &self.weights)?;
        let (edge, _) = edge_loss(xhat, clean)?;
        let lk = self.weights.lambda_kl;
        let grad = g_mse
            .data()
            .iter()
            .zip(g_kl.data())
            .map(|(a, b)| a + lk * b)
            .collect();
        Ok(LossValue {
            total: mse + lk * kl,
            mse_term: mse,
            kl_term: kl,
            edge_term: edge,
            grad: ImageGray::from_vec_unchecked(xhat.height(), xhat.width(), grad),
        })
    }
}

pub fn composite_loss(
    xhat: &ImageGray,
    clean: &ImageGray,
    noisy: &ImageGray,
    looks: f64,
    weights: &LossWeights,
) -> Result<LossValue> {
    CompositeLoss::new(looks, *weights)?.evaluate(xhat, clean, noisy)
}
