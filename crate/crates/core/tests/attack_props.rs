mod common;

use common::{angle_diff, random_clip, rng};
use proptest::prelude::*;
use spinshield::attacks::{
    apply_attack, attacked_amplitude, build_mask, sample_attack, AttackKind, AttackParams, AttackSpec,
};
use spinshield::spectral::{dft_onesided, FrequencyGrid, PatchSignalClip};

const ALL: [AttackKind; 5] = [
    AttackKind::Identity,
    AttackKind::Notch,
    AttackKind::RandomBandMask,
    AttackKind::SpectralTilt,
    AttackKind::SnrNoise,
];

fn clip_strategy() -> impl Strategy<Value = PatchSignalClip> {
    (1usize..4, prop::sample::select(vec![8usize, 9, 16, 17, 32])).prop_flat_map(|(m, t)| {
        prop::collection::vec(-3.0f64..3.0, m * t).prop_map(move |v| PatchSignalClip::new(m, t, v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn every_attack_keeps_phase(clip in clip_strategy(), seed in any::<u64>(), which in 0usize..5) {
        let spec = sample_attack(ALL[which], clip.grid(), clip.patch_count(), seed).unwrap();
        let before = dft_onesided(&clip).unwrap();
        let after = dft_onesided(&apply_attack(&clip, &spec).unwrap()).unwrap();
        let a_hat = attacked_amplitude(&before, &spec).unwrap();
        for m in 0..clip.patch_count() {
            for k in 0..before.grid().bin_count() {
                if before.amplitude().get(m, k).min(a_hat.get(m, k)) > 1e-8 {
                    prop_assert!(angle_diff(after.phase().get(m, k), before.phase().get(m, k)) < 1e-6);
                }
            }
        }
    }

    #[test]
    fn tilt_and_noise_stay_positive(clip in clip_strategy(), seed in any::<u64>()) {
        let s = dft_onesided(&clip).unwrap();
        for kind in [AttackKind::SpectralTilt, AttackKind::SnrNoise] {
            let spec = sample_attack(kind, clip.grid(), clip.patch_count(), seed).unwrap();
            prop_assert!(attacked_amplitude(&s, &spec).unwrap().as_slice().iter().all(|&a| a > 0.0));
        }
    }

    #[test]
    fn masks_never_amplify_and_keep_the_mean(clip in clip_strategy(), seed in any::<u64>()) {
        for kind in [AttackKind::Notch, AttackKind::RandomBandMask] {
            let spec = sample_attack(kind, clip.grid(), clip.patch_count(), seed).unwrap();
            let mask = build_mask(&spec, clip.grid()).unwrap();
            prop_assert_eq!(mask[0], 1.0);
            prop_assert!(mask.iter().all(|&w| (0.0..=1.0).contains(&w)));
            let out = apply_attack(&clip, &spec).unwrap();
            for m in 0..clip.patch_count() {
                let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
                prop_assert!((mean(clip.patch(m)) - mean(out.patch(m))).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn replay_is_bitwise(clip in clip_strategy(), seed in any::<u64>(), which in 0usize..5) {
        let spec = sample_attack(ALL[which], clip.grid(), clip.patch_count(), seed).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: AttackSpec = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(&back, &spec);
        let a = apply_attack(&clip, &spec).unwrap();
        let b = apply_attack(&clip, &back).unwrap();
        prop_assert!(a.signals().iter().zip(b.signals()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn identity_returns_input() {
    let clip = random_clip(&mut rng(1), 3, 16);
    assert_eq!(apply_attack(&clip, &AttackSpec::identity()).unwrap(), clip);
}

#[test]
fn flat_tilt_moves_samples_by_at_most_the_eps_bound() {
    let mut r = rng(2);
    for t in [8, 16, 17] {
        let clip = random_clip(&mut r, 2, t);
        let eps0 = 1e-8;
        let out = apply_attack(&clip, &AttackSpec::tilt(0.0, 0.0)).unwrap();
        let bound = 2.0 * eps0 * (t / 2 + 1) as f64 / t as f64;
        for (a, b) in clip.signals().iter().zip(out.signals()) {
            assert!((a - b).abs() <= bound + 1e-12, "{} > {bound}", (a - b).abs());
        }
    }
}

#[test]
fn band_count_is_uniform() {
    let grid = FrequencyGrid::new(16).unwrap();
    let mut counts = [0f64; 3];
    let n = 10_000;
    for seed in 0..n {
        match sample_attack(AttackKind::RandomBandMask, grid, 1, seed).unwrap().params {
            AttackParams::RandomBandMask(p) => counts[p.sampled_count.unwrap() - 1] += 1.0,
            _ => unreachable!(),
        }
    }
    let expected = n as f64 / 3.0;
    let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    // 99th percentile of chi-square with 2 degrees of freedom.
    assert!(chi2 < 9.2103, "chi2 {chi2}, counts {counts:?}");
}

#[test]
fn notch_centres_cover_the_interior() {
    let grid = FrequencyGrid::new(16).unwrap();
    let mut seen = [false; 9];
    for seed in 0..500 {
        if let AttackParams::Notch(p) = sample_attack(AttackKind::Notch, grid, 1, seed).unwrap().params {
            assert!((1..=7).contains(&p.center_bin) && (1..=2).contains(&p.width_bins));
            seen[p.center_bin] = true;
        }
    }
    assert_eq!(seen, [false, true, true, true, true, true, true, true, false]);
}
