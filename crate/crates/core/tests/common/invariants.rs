//! Deterministic invariant sweeps shared by the property tests and the
//! acceptance target.

use rand::Rng;
use spinshield::models::{generator_field, lsa_perturb, Dims, Mlp, ModelBundle};
use spinshield::objectives::{cross_entropy, mask_regularizer, mmd, symmetric_kl, KernelSpec};
use spinshield::spectral::{dft_onesided, idft_real, recompose, PatchSignalClip};
use spinshield::tensor::Matrix;

use super::{angle_diff, direct_dft, random_clip, rng};

/// Worst errors over a spectral sweep. Round trip is absolute; Parseval and
/// linearity are relative to the signal scale.
#[derive(Debug, Default, Clone, Copy)]
pub struct SpectralWorst {
    pub round_trip: f64,
    pub parseval: f64,
    pub linearity: f64,
    pub phase: f64,
}

impl SpectralWorst {
    pub fn passes(&self) -> bool {
        self.round_trip < 1e-9 && self.parseval < 1e-8 && self.linearity < 1e-9 && self.phase < 1e-6
    }
}

pub fn spectral_worst(clips: u64) -> SpectralWorst {
    let mut w = SpectralWorst::default();
    for seed in 0..clips {
        let mut r = rng(10_000 + seed);
        let m = r.random_range(1..5);
        let t = r.random_range(2..33);
        let a = random_clip(&mut r, m, t);
        let b = random_clip(&mut r, m, t);
        let sa = dft_onesided(&a).unwrap();

        let back = idft_real(&sa).unwrap();
        for (x, y) in a.signals().iter().zip(back.signals()) {
            w.round_trip = w.round_trip.max((x - y).abs());
        }

        for p in 0..m {
            let mut e = 0.0;
            for (k, v) in sa.amplitude().row(p).iter().enumerate() {
                let twice = k != 0 && !(t % 2 == 0 && k == t / 2);
                e += v * v * if twice { 2.0 } else { 1.0 };
            }
            let direct: f64 = a.patch(p).iter().map(|v| v * v).sum();
            w.parseval = w.parseval.max((e / t as f64 - direct).abs() / direct.max(1e-300));
        }

        let (c1, c2) = (r.random_range(-3.0..3.0), r.random_range(-3.0..3.0));
        let mix: Vec<f64> = a.signals().iter().zip(b.signals()).map(|(x, y)| c1 * x + c2 * y).collect();
        let sm = dft_onesided(&PatchSignalClip::new(m, t, mix).unwrap()).unwrap();
        for p in 0..m {
            let (da, db) = (direct_dft(a.patch(p)), direct_dft(b.patch(p)));
            for k in 0..=t / 2 {
                let re = c1 * da[k].0 + c2 * db[k].0;
                let im = c1 * da[k].1 + c2 * db[k].1;
                let (amp, ph) = (sm.amplitude().get(p, k), sm.phase().get(p, k));
                let err = (amp * ph.cos() - re).abs().max((amp * ph.sin() - im).abs());
                w.linearity = w.linearity.max(err / (1.0 + re.hypot(im)));
            }
        }

        let scaled = sa.amplitude().map(|v| v * r.random_range(0.2..3.0));
        let edited = dft_onesided(&recompose(&scaled, sa.phase(), sa.grid()).unwrap()).unwrap();
        for p in 0..m {
            for k in 0..sa.grid().bin_count() {
                if sa.amplitude().get(p, k) > 1e-8 && edited.amplitude().get(p, k) > 1e-8 {
                    w.phase = w.phase.max(angle_diff(edited.phase().get(p, k), sa.phase().get(p, k)));
                }
            }
        }
    }
    w
}

/// Worst violations over `pairs` random (generator, clip) pairs.
#[derive(Debug, Clone, Copy)]
pub struct LsaWorst {
    pub min_amp: f64,
    /// `max |log(A_hat / A)| - alpha`.
    pub over: f64,
    pub phase: f64,
    pub neutral: f64,
}

impl LsaWorst {
    pub fn passes(&self) -> bool {
        self.min_amp > 0.0 && self.over <= 1e-12 && self.phase < 1e-6 && self.neutral < 1e-9
    }
}

pub fn lsa_violations(pairs: u64) -> LsaWorst {
    let mut w = LsaWorst {
        min_amp: f64::INFINITY,
        over: f64::NEG_INFINITY,
        phase: 0.0,
        neutral: 0.0,
    };
    for seed in 0..pairs {
        let mut r = rng(seed);
        let t = [8, 16, 17][seed as usize % 3];
        let m = r.random_range(1..5);
        let mut bundle = ModelBundle::init(Dims::new(m, t), 0.6, seed);
        // Scale the generator up so tanh saturates on some bins.
        for p in bundle.generator_tensors_mut() {
            let s = r.random_range(0.5..8.0);
            for v in p.as_mut_slice() {
                *v *= s;
            }
        }
        let clip = random_clip(&mut r, m, t);
        let spec = dft_onesided(&clip).unwrap();
        let (out, mask) = lsa_perturb(&spec, &bundle).unwrap();
        let back = dft_onesided(&out).unwrap();
        let field = generator_field(&bundle, &spec).unwrap();
        for i in 0..m {
            for k in 0..spec.grid().bin_count() {
                let a = spec.amplitude().get(i, k);
                if a <= 0.0 {
                    continue;
                }
                let a_hat = a * (bundle.alpha * field.get(i, k).tanh()).exp();
                w.min_amp = w.min_amp.min(a_hat);
                w.over = w.over.max((a_hat / a).ln().abs() - bundle.alpha);
                let rebuilt = mask.mask.get(i, k) * (a + mask.delta);
                assert!((rebuilt - a_hat).abs() <= 1e-12 * a_hat.max(1.0));
                if a > 1e-8 && back.amplitude().get(i, k) > 1e-8 {
                    w.phase = w.phase.max(angle_diff(back.phase().get(i, k), spec.phase().get(i, k)));
                }
            }
        }
        bundle.generator = Mlp::zeros(spec.grid().bin_count(), bundle.dims.gen_hidden, spec.grid().bin_count());
        let (same, _) = lsa_perturb(&spec, &bundle).unwrap();
        for (x, y) in clip.signals().iter().zip(same.signals()) {
            w.neutral = w.neutral.max((x - y).abs());
        }
    }
    w
}

fn random_matrix(r: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| r.random_range(-scale..scale)).collect()).unwrap()
}

fn random_probs(r: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| r.random_range(0.01..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Largest deviation from the exact loss identities over `trials` random
/// inputs: `MMD(a, a) = 0`, MMD symmetry, `KL_sym(p, p) = 0` and its
/// symmetry, `KL_sym(p, q) > 0` for `p != q`, one-hot CE and the identity
/// mask. A failed strict-positivity check counts as deviation 1.
pub fn loss_identity_worst(trials: u64) -> f64 {
    let mut worst = 0.0_f64;
    for seed in 0..trials {
        let mut r = rng(20_000 + seed);
        let n = r.random_range(2..9);
        let d = r.random_range(1..6);
        let a = random_matrix(&mut r, n, d, 2.0);
        let nb = r.random_range(2..9);
        let b = random_matrix(&mut r, nb, d, 2.0);
        let kernel = KernelSpec::default();
        worst = worst.max(mmd(&a, &a, &kernel).unwrap().abs());
        worst = worst.max((mmd(&a, &b, &kernel).unwrap() - mmd(&b, &a, &kernel).unwrap()).abs());

        let k = r.random_range(2..5);
        let (p, q) = (random_probs(&mut r, k), random_probs(&mut r, k));
        worst = worst.max(symmetric_kl(&p, &p).unwrap().abs());
        let (pq, qp) = (symmetric_kl(&p, &q).unwrap(), symmetric_kl(&q, &p).unwrap());
        worst = worst.max((pq - qp).abs());
        if pq <= 0.0 {
            worst = 1.0;
        }

        let y = r.random_range(0..k);
        let onehot: Vec<f64> = (0..k).map(|i| if i == y { 1.0 } else { 0.0 }).collect();
        worst = worst.max(cross_entropy(&onehot, y).unwrap().abs());

        let (mr, mc) = (r.random_range(1..5), r.random_range(1..10));
        let ones = Matrix::ones(mr, mc);
        worst = worst.max(mask_regularizer(&[&ones]).unwrap().abs());
    }
    worst
}
