//! Finite-difference checks of every training objective against the
//! gradients the training steps actually apply.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spinshield::autodiff::{max_rel_error, numeric_grad, Tape};
use spinshield::harness::train::{detector_step, generator_step, Batch, EnvSource, TrainConfig};
use spinshield::models::{
    bind_mlp, clips_matrix, encode_graph, lsa_graph, DetectorVars, Dims, ModelBundle, SpectralBatch,
};
use spinshield::objectives::{blindness_loss_graph, median_sq_distance, KernelSpec, LossComponents, LossWeights};
use spinshield::spectral::{dft_onesided, PatchSignalClip, SynthesisBasis};
use spinshield::tensor::Matrix;

pub const H: f64 = 1e-5;
pub const FLOOR: f64 = 1e-6;

pub struct Setting {
    pub bundle: ModelBundle,
    pub clean: Matrix,
    pub spectral: SpectralBatch,
    pub labels: Vec<usize>,
    pub basis: SynthesisBasis,
}

impl Setting {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = Dims {
            hidden: 6,
            feature: 4,
            disc_hidden: 5,
            gen_hidden: 5,
            ..Dims::new(2, 8)
        };
        let mut bundle = ModelBundle::init(dims, 0.6, seed);
        // Non-zero biases so every parameter has a generic gradient.
        let mut jitter = |t: &mut Matrix| {
            for v in t.as_mut_slice() {
                *v += rng.random_range(-0.3..0.3);
            }
        };
        bundle.detector_tensors_mut().into_iter().for_each(&mut jitter);
        bundle.generator_tensors_mut().into_iter().for_each(&mut jitter);
        let clips: Vec<PatchSignalClip> = (0..4)
            .map(|_| PatchSignalClip::new(2, 8, (0..16).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
            .collect();
        let refs: Vec<&PatchSignalClip> = clips.iter().collect();
        let spectra: Vec<_> = clips.iter().map(|c| dft_onesided(c).unwrap()).collect();
        let srefs: Vec<_> = spectra.iter().collect();
        Self {
            bundle,
            clean: clips_matrix(&refs).unwrap(),
            spectral: SpectralBatch::from_spectra(&srefs).unwrap(),
            labels: vec![0, 1, 1, 0],
            basis: SynthesisBasis::new(dims.grid()),
        }
    }

    pub fn batch(&self) -> Batch<'_> {
        Batch {
            clean: self.clean.clone(),
            spectral: self.spectral.clone(),
            labels: &self.labels,
        }
    }

    fn det(&self, bundle: &ModelBundle, cfg: &TrainConfig) -> (Vec<Matrix>, LossComponents) {
        let g = detector_step(bundle, cfg, &self.batch(), &EnvSource::Generator, &self.basis).unwrap();
        (g.detector, g.losses)
    }

    /// FD of `pick(losses)` for detector tensor `i`.
    fn det_fd(&self, cfg: &TrainConfig, i: usize, pick: impl Fn(&LossComponents) -> f64) -> Matrix {
        let mut b = self.bundle.clone();
        let x = b.detector_tensors_mut()[i].clone();
        numeric_grad(&x, H, |probe| {
            *b.detector_tensors_mut()[i] = probe.clone();
            pick(&self.det(&b, cfg).1)
        })
    }
}

fn cfg_with(lambda_sym: f64, lambda_blind: f64) -> TrainConfig {
    TrainConfig {
        weights: LossWeights {
            lambda_sym,
            lambda_blind,
            ..LossWeights::default()
        },
        ..TrainConfig::default()
    }
}

/// Encoder tensors see the blindness term through the reversal layer.
const ENCODER: std::ops::Range<usize> = 0..4;

/// Worst relative error per objective on one setting.
#[derive(Debug, Default, Clone, Copy)]
pub struct Worst {
    pub detector: f64,
    pub sym: f64,
    pub blind: f64,
    pub total: f64,
    pub generator: f64,
}

impl Worst {
    pub fn max(&self) -> f64 {
        [self.detector, self.sym, self.blind, self.total, self.generator]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Compares analytic and FD gradients of `L_det`, `L_det + L_sym`,
/// `L_det + L_blind`, the full total and `L_gen`.
pub fn check_setting(seed: u64) -> Worst {
    let s = Setting::new(seed);
    let mut w = Worst::default();
    let cases: [(f64, f64, &mut f64); 4] = [
        (0.0, 0.0, &mut w.detector),
        (1.0, 0.0, &mut w.sym),
        (0.0, 1.0, &mut w.blind),
        (0.9, 0.7, &mut w.total),
    ];
    for (ls, lb, slot) in cases {
        let cfg = cfg_with(ls, lb);
        let (analytic, _) = s.det(&s.bundle, &cfg);
        for (i, a) in analytic.iter().enumerate() {
            let fd_total = s.det_fd(&cfg, i, |l| l.total);
            let expected = if ENCODER.contains(&i) && lb > 0.0 {
                // GRL: the encoder descends L_total - 2 lambda_blind L_blind.
                let fd_blind = s.det_fd(&cfg, i, |l| l.l_blind);
                fd_total.zip_map(&fd_blind, |t, b| t - 2.0 * lb * b)
            } else {
                fd_total
            };
            *slot = slot.max(max_rel_error(a, &expected, FLOOR));
        }
    }
    w.generator = check_generator(&s);
    w
}

/// The median bandwidth is detached on the tape, so the FD reference holds
/// it at its value for the unperturbed parameters.
fn check_generator(s: &Setting) -> f64 {
    let sigma = {
        let mut t = Tape::new();
        let dv = DetectorVars::bind(&mut t, &s.bundle, false);
        let gv = bind_mlp(&mut t, &s.bundle.generator, false);
        let lsa = lsa_graph(&mut t, &gv, &s.spectral, s.bundle.alpha, s.bundle.delta, &s.basis).unwrap();
        let xc = t.constant(s.clean.clone());
        let hc = encode_graph(&mut t, &dv.encoder, xc).unwrap();
        let he = encode_graph(&mut t, &dv.encoder, lsa.x_env).unwrap();
        median_sq_distance(t.value(hc), t.value(he)).unwrap().sqrt()
    };
    let cfg = TrainConfig {
        kernel: KernelSpec::fixed(sigma),
        ..TrainConfig::default()
    };
    let run = |b: &ModelBundle| generator_step(b, &cfg, &s.batch(), &s.basis).unwrap();
    let base = run(&s.bundle);
    let mut worst = 0.0_f64;
    for (i, a) in base.generator.iter().enumerate() {
        let mut b = s.bundle.clone();
        let x = b.generator_tensors_mut()[i].clone();
        let fd = numeric_grad(&x, H, |probe| {
            *b.generator_tensors_mut()[i] = probe.clone();
            run(&b).losses.l_gen
        });
        // The step returns the gradient of -L_gen (ascent).
        worst = worst.max(max_rel_error(&a.map(|v| -v), &fd, FLOOR));
    }
    worst
}

/// Encoder gradient of the blindness loss with and without the reversal
/// layer; returns the largest `|with + without|`.
pub fn grl_paired_gap(seed: u64) -> f64 {
    let s = Setting::new(seed);
    let grads = |through_grl: bool| {
        let mut t = Tape::new();
        let dv = DetectorVars::bind(&mut t, &s.bundle, true);
        let gv = bind_mlp(&mut t, &s.bundle.generator, false);
        let lsa = lsa_graph(&mut t, &gv, &s.spectral, s.bundle.alpha, s.bundle.delta, &s.basis).unwrap();
        let xc = t.constant(s.clean.clone());
        let hc = encode_graph(&mut t, &dv.encoder, xc).unwrap();
        let he = encode_graph(&mut t, &dv.encoder, lsa.x_env).unwrap();
        let l = blindness_loss_graph(&mut t, &dv.disc, hc, he, through_grl).unwrap();
        t.backward(l).unwrap();
        dv.vars().iter().map(|&v| t.grad_or_zero(v)).collect::<Vec<_>>()
    };
    let (with, without) = (grads(true), grads(false));
    let mut gap = 0.0_f64;
    for i in 0..with.len() {
        for (a, b) in with[i].as_slice().iter().zip(without[i].as_slice()) {
            // Encoder flips sign; head and discriminator are untouched.
            let d = if ENCODER.contains(&i) { a + b } else { a - b };
            gap = gap.max(d.abs());
        }
    }
    gap
}
