#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sardespeckle::losses::{empirical_histogram, estimated_noise, LossWeights};
use sardespeckle::net::{forward, ArchSpec, NetworkParams, init_params};
use sardespeckle::speckle_sim::{apply_multiplicative, draw_speckle};
use sardespeckle::ImageGray;

pub const FD_STEP: f64 = 1e-4;
pub const FD_TOL: f64 = 1e-4;
/// Denominator floor for relative errors: below this magnitude the
/// comparison is effectively absolute.
pub const REL_FLOOR: f64 = 1e-6;

pub mod gradcheck;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Central differences at `h, h/2, h/4, h/8` combined by Richardson
/// extrapolation. `f(delta)` evaluates the function at the point shifted by
/// `delta`; returns `None` if `valid(delta)` rejects any stencil point.
///
/// A plain central difference at `h = 1e-4` carries an `O(h^2)` error near
/// 1e-3 relative for the KL term, because `Y / X` magnifies the step into a
/// visible fraction of a histogram bin. Extrapolation removes the `h^2`,
/// `h^4` and `h^6` terms.
pub fn richardson_derivative(
    h: f64,
    mut f: impl FnMut(f64) -> f64,
    mut valid: impl FnMut(f64) -> bool,
) -> Option<f64> {
    let mut table: Vec<f64> = Vec::with_capacity(4);
    for level in 0..4 {
        let step = h / f64::from(1u32 << level);
        if !valid(step) || !valid(-step) {
            return None;
        }
        table.push((f(step) - f(-step)) / (2.0 * step));
    }
    let mut factor = 4.0;
    while table.len() > 1 {
        table = table
            .windows(2)
            .map(|pair| (factor * pair[1] - pair[0]) / (factor - 1.0))
            .collect();
        factor *= 4.0;
    }
    Some(table[0])
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

pub fn random_image(rng: &mut impl Rng, h: usize, w: usize, lo: f64, hi: f64) -> ImageGray {
    ImageGray::from_fn(h, w, |_, _| rng.random_range(lo..hi))
}

/// Clean, noisy and a plausible filtered estimate, all on an `h x w` grid.
pub struct LossInstance {
    pub clean: ImageGray,
    pub noisy: ImageGray,
    pub xhat: ImageGray,
}

pub fn loss_instance(rng: &mut impl Rng, h: usize, w: usize) -> LossInstance {
    let clean = random_image(rng, h, w, 0.05, 1.0);
    let noise = ImageGray::from_fn(h, w, |_, _| draw_speckle(rng, 1.0));
    let noisy = apply_multiplicative(&clean, &noise).unwrap();
    let xhat = ImageGray::from_fn(h, w, |r, c| (clean.get(r, c) * rng.random_range(0.6..1.4)).max(0.02));
    LossInstance { clean, noisy, xhat }
}

/// Everything that decides which smooth piece of the KL term a point is on:
/// the soft-bin segment of each ratio sample, whether it is clamped, which
/// bins are floored and where the ratio denominator clamp is active.
pub fn kl_signature(noisy: &ImageGray, xhat: &ImageGray, w: &LossWeights) -> Vec<u64> {
    let ratio = estimated_noise(noisy, xhat, w.ratio_epsilon).unwrap();
    let (_, cache) = empirical_histogram(&ratio, w).unwrap();
    let mut sig: Vec<u64> = cache.lower_bins().iter().map(|&b| b as u64).collect();
    sig.extend(cache.in_range().iter().map(|&b| b as u64));
    sig.extend(cache.floored().iter().map(|&b| b as u64));
    sig.extend(xhat.data().iter().map(|&x| (x > w.ratio_epsilon) as u64));
    sig
}

pub fn network_signature(params: &NetworkParams, noisy: &ImageGray, w: &LossWeights) -> Vec<u64> {
    let (xhat, cache) = forward(params, noisy).unwrap();
    let mut sig: Vec<u64> = cache.relu_pattern().into_iter().map(|b| b as u64).collect();
    sig.extend(kl_signature(noisy, &xhat, w));
    sig
}

/// Random small network with nonzero biases and an output offset that keeps
/// most of the estimate above the ratio clamp.
pub fn random_network(rng: &mut impl Rng, seed: u64) -> NetworkParams {
    let arch = ArchSpec {
        depth: rng.random_range(2..=3),
        hidden_channels: rng.random_range(1..=4),
        kernel: if rng.random_bool(0.7) { 3 } else { 1 },
        io_channels: 1,
    };
    let mut params = init_params(&arch, seed).unwrap();
    let last = params.layers.len() - 1;
    for (l, layer) in params.layers.iter_mut().enumerate() {
        for b in layer.bias.iter_mut() {
            *b = if l == last { 0.5 } else { rng.random_range(-0.1..0.1) };
        }
    }
    params
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(a, m, fa, flm, fm);
        let right = simpson(m, b, fm, frm, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, depth)
}

/// Adaptive Simpson over unit panels of `[a, b]`; the panels keep the first
/// coarse estimate from missing a narrow mode.
pub fn integrate(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let panels = (b - a).ceil() as usize;
    let width = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + i as f64 * width;
            adaptive_simpson(f, lo, lo + width, 1e-12, 40)
        })
        .sum()
}
