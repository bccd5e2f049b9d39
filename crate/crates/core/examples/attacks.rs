//! Samples one spec of each attack kind, prints it as JSON with its mask
//! and shows that the phase of the attacked clip is unchanged.

use spinshield::attacks::{apply_attack, build_mask, sample_attack, AttackKind};
use spinshield::spectral::dft_onesided;
use spinshield::synth::{generate_clip, DatasetSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let clip = generate_clip(&DatasetSpec::default(), 1)?.clip;
    let before = dft_onesided(&clip)?;
    for kind in AttackKind::SUITE {
        let spec = sample_attack(kind, clip.grid(), clip.patch_count(), 7)?;
        let json = serde_json::to_string(&spec)?;
        // Noise specs carry every per-bin draw.
        println!("{}", if json.len() > 120 { format!("{}...", &json[..120]) } else { json });
        if let Ok(mask) = build_mask(&spec, clip.grid()) {
            let m: Vec<String> = mask.iter().map(|v| format!("{v:.2}")).collect();
            println!("  mask [{}]", m.join(" "));
        }
        let after = dft_onesided(&apply_attack(&clip, &spec)?)?;
        let mut drift = 0.0_f64;
        for (i, (p, q)) in before.phase().as_slice().iter().zip(after.phase().as_slice()).enumerate() {
            if before.amplitude().as_slice()[i] > 1e-8 && after.amplitude().as_slice()[i] > 1e-8 {
                let d = (p - q).rem_euclid(std::f64::consts::TAU);
                drift = drift.max(d.min(std::f64::consts::TAU - d));
            }
        }
        println!("  max phase drift {drift:.2e} rad");
    }
    Ok(())
}
