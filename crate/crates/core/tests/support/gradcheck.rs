//! Finite-difference gradient checks shared by the gradient tests and the
//! acceptance suite.

use super::*;
use sardespeckle::losses::{composite_loss, edge_loss, kl_loss, mse_loss, LossWeights};
use sardespeckle::net::{backward, forward, NetworkParams};
use sardespeckle::ImageGray;

pub type LossFn = fn(&LossInstance, &ImageGray, &LossWeights) -> (f64, ImageGray);

pub fn mse_term(inst: &LossInstance, xhat: &ImageGray, _: &LossWeights) -> (f64, ImageGray) {
    mse_loss(xhat, &inst.clean).unwrap()
}

pub fn kl_term(inst: &LossInstance, xhat: &ImageGray, w: &LossWeights) -> (f64, ImageGray) {
    kl_loss(&inst.noisy, xhat, 1.0, w).unwrap()
}

pub fn edge_term(inst: &LossInstance, xhat: &ImageGray, _: &LossWeights) -> (f64, ImageGray) {
    edge_loss(xhat, &inst.clean).unwrap()
}

pub fn composite_term(inst: &LossInstance, xhat: &ImageGray, w: &LossWeights) -> (f64, ImageGray) {
    let v = composite_loss(xhat, &inst.clean, &inst.noisy, 1.0, w).unwrap();
    (v.total, v.grad)
}

pub fn shifted(image: &ImageGray, k: usize, delta: f64) -> ImageGray {
    let mut out = image.clone();
    out.data_mut()[k] += delta;
    out
}

/// Worst relative error over all pixels, or `None` when a stencil crosses a
/// kink of the KL term.
pub fn check_loss(inst: &LossInstance, w: &LossWeights, f: LossFn) -> Option<f64> {
    let (_, grad) = f(inst, &inst.xhat, w);
    let base = kl_signature(&inst.noisy, &inst.xhat, w);
    let mut worst = 0.0f64;
    for k in 0..inst.xhat.len() {
        let numeric = richardson_derivative(
            FD_STEP,
            |d| f(inst, &shifted(&inst.xhat, k, d), w).0,
            |d| kl_signature(&inst.noisy, &shifted(&inst.xhat, k, d), w) == base,
        )?;
        worst = worst.max(rel_err(grad.data()[k], numeric));
    }
    Some(worst)
}

pub fn run_loss_suite(name: &str, f: LossFn, weights: LossWeights) -> SuiteStats {
    let mut rng = rng(0x5eed_0001);
    let mut stats = SuiteStats::default();
    while stats.checked < 100 {
        let inst = loss_instance(&mut rng, 8, 8);
        match check_loss(&inst, &weights, f) {
            Some(err) => {
                stats.worst = stats.worst.max(err);
                stats.checked += 1;
            }
            None => stats.skipped += 1,
        }
        assert!(stats.skipped < 100, "{name}: too many instances straddle a kink");
    }
    stats
}

pub fn network_loss(params: &NetworkParams, inst: &LossInstance, w: &LossWeights) -> f64 {
    let (xhat, _) = forward(params, &inst.noisy).unwrap();
    composite_loss(&xhat, &inst.clean, &inst.noisy, 1.0, w).unwrap().total
}

pub fn perturbed(params: &NetworkParams, index: usize, delta: f64) -> NetworkParams {
    let mut p = params.clone();
    *p.values_mut().nth(index).unwrap() += delta;
    p
}

/// Worst relative error over every parameter, or `None` at a kink.
pub fn check_network(params: &NetworkParams, inst: &LossInstance, w: &LossWeights) -> Option<f64> {
    let (xhat, cache) = forward(params, &inst.noisy).unwrap();
    let loss = composite_loss(&xhat, &inst.clean, &inst.noisy, 1.0, w).unwrap();
    let grads = backward(params, &cache, &loss.grad).unwrap();
    let analytic: Vec<f64> = grads.values().copied().collect();
    assert_eq!(analytic.len(), params.parameter_count());
    let base = network_signature(params, &inst.noisy, w);
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let numeric = richardson_derivative(
            FD_STEP,
            |d| network_loss(&perturbed(params, i, d), inst, w),
            |d| network_signature(&perturbed(params, i, d), &inst.noisy, w) == base,
        )?;
        worst = worst.max(rel_err(a, numeric));
    }
    Some(worst)
}


pub fn run_network_suite(seed: u64) -> SuiteStats {
    let w = LossWeights::default();
    let mut rng = rng(seed);
    let mut stats = SuiteStats::default();
    while stats.checked < 100 {
        let inst = loss_instance(&mut rng, 8, 8);
        let params = random_network(&mut rng, 1000 + (stats.checked + stats.skipped) as u64);
        match check_network(&params, &inst, &w) {
            Some(err) => {
                stats.worst = stats.worst.max(err);
                stats.parameters += params.parameter_count();
                stats.checked += 1;
            }
            None => stats.skipped += 1,
        }
        assert!(stats.skipped < 200, "too many instances straddle a kink");
    }
    stats
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SuiteStats {
    pub checked: usize,
    pub skipped: usize,
    pub parameters: usize,
    pub worst: f64,
}
