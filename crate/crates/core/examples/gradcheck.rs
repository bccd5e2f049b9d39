//! Finite-difference check of the full detector objective on a tiny model.
//! The encoder sees the blindness term through the reversal layer, so it
//! is compared against `FD(total) - 2 lambda_blind FD(blind)`.

use spinshield::autodiff::{max_rel_error, numeric_grad};
use spinshield::harness::train::{detector_step, Batch, EnvSource, TrainConfig};
use spinshield::models::{clips_matrix, Dims, ModelBundle, SpectralBatch};
use spinshield::spectral::{dft_onesided, SynthesisBasis};
use spinshield::synth::{generate_dataset, DatasetSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate_dataset(&DatasetSpec {
        n_clips: 4,
        patch_rows: 1,
        patch_cols: 2,
        ..DatasetSpec::default()
    })?;
    let clips: Vec<_> = data.iter().map(|c| &c.clip).collect();
    let spectra = clips.iter().map(|c| dft_onesided(c)).collect::<Result<Vec<_>, _>>()?;
    let labels: Vec<usize> = data.iter().map(|c| c.label).collect();
    let dims = Dims {
        hidden: 6,
        feature: 4,
        disc_hidden: 5,
        gen_hidden: 5,
        ..Dims::new(2, 16)
    };
    let bundle = ModelBundle::init(dims, 0.6, 0);
    let basis = SynthesisBasis::new(dims.grid());
    let cfg = TrainConfig::default();
    let batch = || -> Batch<'_> {
        Batch {
            clean: clips_matrix(&clips).unwrap(),
            spectral: SpectralBatch::from_spectra(&spectra.iter().collect::<Vec<_>>()).unwrap(),
            labels: &labels,
        }
    };
    let losses = |b: &ModelBundle| detector_step(b, &cfg, &batch(), &EnvSource::Generator, &basis).unwrap().losses;
    let analytic = detector_step(&bundle, &cfg, &batch(), &EnvSource::Generator, &basis)?.detector;
    let names = ["enc.w1", "enc.b1", "enc.w2", "enc.b2", "head.w", "head.b", "disc.w1", "disc.b1", "disc.w2", "disc.b2"];
    for (i, a) in analytic.iter().enumerate() {
        let mut probe = bundle.clone();
        let x = probe.detector_tensors_mut()[i].clone();
        let mut fd_of = |pick: fn(&spinshield::objectives::LossComponents) -> f64| {
            numeric_grad(&x, 1e-5, |p| {
                *probe.detector_tensors_mut()[i] = p.clone();
                pick(&losses(&probe))
            })
        };
        let total = fd_of(|l| l.total);
        let expected = if i < 4 {
            let blind = fd_of(|l| l.l_blind);
            total.zip_map(&blind, |t, b| t - 2.0 * cfg.weights.lambda_blind * b)
        } else {
            total
        };
        println!("{:<8} max relative error {:.2e}", names[i], max_rel_error(a, &expected, 1e-6));
    }
    Ok(())
}
