//! Analytic gradients against finite differences with base step 1e-4.
//!
//! Points whose stencil crosses a kink (soft-bin segment change, clamp,
//! floor switch or ReLU sign flip) are skipped and counted.

mod support;

use sardespeckle::losses::LossWeights;
use sardespeckle::net::{init_params, ArchSpec};
use support::gradcheck::*;
use support::*;

fn assert_suite(name: &str, stats: SuiteStats) {
    println!(
        "{name}: {} instances, {} skipped at kinks, worst relative error {:.2e}",
        stats.checked, stats.skipped, stats.worst
    );
    assert!(stats.worst < FD_TOL, "{name}: worst relative error {}", stats.worst);
}

#[test]
fn mse_gradient_matches_finite_differences() {
    assert_suite("mse", run_loss_suite("mse", mse_term, LossWeights::default()));
}

#[test]
fn edge_gradient_matches_finite_differences() {
    assert_suite("edge", run_loss_suite("edge", edge_term, LossWeights::default()));
}

#[test]
fn kl_gradient_matches_finite_differences() {
    assert_suite("kl", run_loss_suite("kl", kl_term, LossWeights::default()));
}

#[test]
fn kl_gradient_with_coarse_bins() {
    // Few wide bins put many samples in each bin and push more of them past
    // the last center.
    let w = LossWeights {
        kl_bins: 6,
        kl_range: [0.0, 3.0],
        ..LossWeights::default()
    };
    assert_suite("kl-coarse", run_loss_suite("kl-coarse", kl_term, w));
}

#[test]
fn composite_gradient_matches_finite_differences() {
    let w = LossWeights {
        lambda_kl: 0.8,
        lambda_edge: 1.7,
        ..LossWeights::default()
    };
    assert_suite("composite", run_loss_suite("composite", composite_term, w));
}

#[test]
fn network_parameter_gradients_end_to_end() {
    let stats = run_network_suite(0x5eed_0002);
    println!("network parameters checked: {}", stats.parameters);
    assert_suite("network", stats);
}

#[test]
fn two_layer_four_channel_instance() {
    let arch = ArchSpec {
        depth: 2,
        hidden_channels: 4,
        kernel: 3,
        io_channels: 1,
    };
    let w = LossWeights::default();
    let mut rng = rng(0x5eed_0003);
    for seed in 0..20u64 {
        let inst = loss_instance(&mut rng, 8, 8);
        let mut params = init_params(&arch, seed).unwrap();
        params.layers[1].bias[0] = 0.5;
        if let Some(err) = check_network(&params, &inst, &w) {
            assert!(err < FD_TOL, "worst relative error {err}");
            return;
        }
    }
    panic!("no kink-free instance found");
}
