mod common;

use common::gradcheck::{check_setting, grl_paired_gap};

#[test]
fn every_objective_matches_finite_differences() {
    for seed in 0..20 {
        let w = check_setting(seed);
        assert!(w.max() < 1e-3, "seed {seed}: {w:?}");
    }
}

#[test]
fn reversal_layer_flips_only_encoder_gradients() {
    for seed in 0..5 {
        assert!(grl_paired_gap(seed) < 1e-12);
    }
}
