//! Amplitude/phase decomposition of one synthetic clip and an amplitude-only
//! edit through `recompose`.

use spinshield::spectral::{dft_onesided, idft_real, recompose, PatchSignalClip};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let t = 16;
    let signal: Vec<f64> = (0..t)
        .map(|s| {
            let x = s as f64 / t as f64;
            0.5 + (2.0 * std::f64::consts::PI * x).sin() + 0.3 * (2.0 * std::f64::consts::PI * 5.0 * x).cos()
        })
        .collect();
    let clip = PatchSignalClip::new(1, t, signal)?;
    let spec = dft_onesided(&clip)?;
    println!("bin  omega      A        P");
    for k in 0..spec.grid().bin_count() {
        println!(
            "{k:>3}  {:>6.3}  {:>7.3}  {:>7.3}",
            spec.grid().omega(k),
            spec.amplitude().get(0, k),
            spec.phase().get(0, k)
        );
    }

    let back = idft_real(&spec)?;
    let err = clip.signals().iter().zip(back.signals()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("round-trip error {err:.2e}");

    // Halve bin 5 only; the phase spectrum is untouched.
    let mut amp = spec.amplitude().clone();
    amp.set(0, 5, 0.5 * amp.get(0, 5));
    let edited = dft_onesided(&recompose(&amp, spec.phase(), spec.grid())?)?;
    println!(
        "bin 5 amplitude {:.3} -> {:.3}, phase {:.6} -> {:.6}",
        spec.amplitude().get(0, 5),
        edited.amplitude().get(0, 5),
        spec.phase().get(0, 5),
        edited.phase().get(0, 5)
    );
    Ok(())
}
