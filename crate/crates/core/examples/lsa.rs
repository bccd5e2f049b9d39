//! The learnable spectral adversary on one clip: an untrained generator's
//! modulation stays inside `[e^-alpha, e^alpha]` and keeps the phase.

use spinshield::models::{lsa_perturb, Dims, ModelBundle};
use spinshield::spectral::dft_onesided;
use spinshield::synth::{generate_clip, DatasetSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = DatasetSpec::default();
    let clip = generate_clip(&spec, 0)?.clip;
    let mut bundle = ModelBundle::init(Dims::new(spec.patch_count(), spec.frame_count), 0.6, 3);
    // Larger generator weights push tanh towards its bounds.
    for p in bundle.generator_tensors_mut() {
        for v in p.as_mut_slice() {
            *v *= 6.0;
        }
    }
    let s = dft_onesided(&clip)?;
    let (out, mask) = lsa_perturb(&s, &bundle)?;
    let (lo, hi) = mask
        .mask
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &m| (lo.min(m), hi.max(m)));
    println!("mask range [{lo:.3}, {hi:.3}], bounds [{:.3}, {:.3}]", (-0.6f64).exp(), 0.6f64.exp());
    let back = dft_onesided(&out)?;
    println!("patch 0, bin 1..4 amplitude before/after:");
    for k in 1..5 {
        println!("  bin {k}: {:.3} -> {:.3}", s.amplitude().get(0, k), back.amplitude().get(0, k));
    }
    Ok(())
}
