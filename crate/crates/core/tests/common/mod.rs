#![allow(dead_code)]
pub mod gradcheck;
pub mod invariants;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spinshield::spectral::PatchSignalClip;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_clip(rng: &mut ChaCha8Rng, m: usize, t: usize) -> PatchSignalClip {
    PatchSignalClip::new(m, t, (0..m * t).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

/// O(T^2) one-sided DFT of one signal: (re, im) per bin.
pub fn direct_dft(x: &[f64]) -> Vec<(f64, f64)> {
    let t = x.len();
    (0..=t / 2)
        .map(|k| {
            x.iter().enumerate().fold((0.0, 0.0), |(re, im), (s, v)| {
                let a = -2.0 * std::f64::consts::PI * (k * s) as f64 / t as f64;
                (re + v * a.cos(), im + v * a.sin())
            })
        })
        .collect()
}

/// Smallest signed angle between two phases.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * std::f64::consts::PI);
    d.min(2.0 * std::f64::consts::PI - d)
}
