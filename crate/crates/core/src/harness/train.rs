//! Alternating minimax training.
//!
//! Each iteration runs a detector step (generator frozen) and, every
//! `alternation` detector steps, a generator step (detector frozen). The
//! frozen side is bound to the tape as constants, so its gradients are
//! identically zero by construction; [`StepGrads`] exposes both sides so
//! callers can check that.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::harness::eval::{compute_auc, score_clips};
use crate::harness::optim::{Adam, AdamConfig};
use crate::models::{
    bind_mlp, clips_matrix, encode_graph, head_graph, lsa_graph, synthesize_graph, DetectorVars, Dims, ModelBundle,
    SpectralBatch, DEFAULT_ALPHA,
};
use crate::objectives::{
    blindness_loss_graph, detector_loss_graph, generator_loss_graph, mask_regularizer_graph, mmd_graph,
    symmetric_kl_graph, total_loss_graph, KernelSpec, LossComponents, LossWeights,
};
use crate::spectral::{dft_onesided, OneSidedSpectrum, SynthesisBasis};
use crate::synth::LabeledClip;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Baseline,
    Spinshield,
    NaiveAug,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Spinshield => "spinshield",
            Mode::NaiveAug => "naive_aug",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: Mode,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    /// Detector steps per generator step.
    pub alternation: usize,
    pub weights: LossWeights,
    pub alpha: f64,
    /// Std of the log-amplitude noise used by `naive_aug`.
    pub naive_sigma: f64,
    pub kernel: KernelSpec,
    pub hidden: usize,
    pub feature: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Spinshield,
            epochs: 10,
            batch_size: 32,
            optimizer: AdamConfig::default(),
            alternation: 1,
            weights: LossWeights::default(),
            alpha: DEFAULT_ALPHA,
            naive_sigma: DEFAULT_ALPHA,
            kernel: KernelSpec::default(),
            hidden: 64,
            feature: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.epochs == 0 || self.batch_size < 2 || self.alternation == 0 {
            return Err(Error::InvalidInput(
                "epochs and alternation must be positive and batch_size at least 2".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidInput(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.naive_sigma >= 0.0) {
            return Err(Error::InvalidInput("naive_sigma must be non-negative".into()));
        }
        Ok(())
    }

    pub fn dims(&self, patch_count: usize, frame_count: usize) -> Dims {
        Dims {
            hidden: self.hidden,
            feature: self.feature,
            ..Dims::new(patch_count, frame_count)
        }
    }
}

/// Deterministic 80/10/10 index split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = n * 8 / 10;
        let n_val = n / 10;
        let test = idx.split_off(n_train + n_val);
        let val = idx.split_off(n_train);
        Self { train: idx, val, test }
    }

    pub fn pick<'a>(clips: &'a [LabeledClip], idx: &[usize]) -> Vec<&'a LabeledClip> {
        idx.iter().map(|&i| &clips[i]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Det,
    Gen,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub phase: Phase,
    #[serde(flatten)]
    pub losses: LossComponents,
}

pub const LOG_HEADER: &str = "step,phase,L_det,L_sym,L_blind,L_gen,mmd,mask_reg,total";

pub fn write_log_csv(path: &Path, rows: &[LogRow]) -> Result<()> {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(LOG_HEADER);
    out.push('\n');
    for r in rows {
        let l = &r.losses;
        let phase = match r.phase {
            Phase::Det => "det",
            Phase::Gen => "gen",
        };
        out.push_str(&format!(
            "{},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
            r.step, phase, l.l_det, l.l_sym, l.l_blind, l.l_gen, l.mmd, l.mask_reg, l.total
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub bundle: ModelBundle,
    pub log: Vec<LogRow>,
    /// Validation clean AUC after each epoch.
    pub val_auc: Vec<f64>,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: usize,
}

/// Gradients of one step for both players, in the tensor orders of
/// [`ModelBundle::detector_tensors_mut`] and
/// [`ModelBundle::generator_tensors_mut`].
#[derive(Debug, Clone)]
pub struct StepGrads {
    pub detector: Vec<Matrix>,
    pub generator: Vec<Matrix>,
    pub losses: LossComponents,
}

/// Everything a step needs about one batch.
pub struct Batch<'a> {
    pub clean: Matrix,
    pub spectral: SpectralBatch,
    pub labels: &'a [usize],
}

/// Source of the env view during the detector step.
pub enum EnvSource {
    None,
    Generator,
    Fixed(Matrix),
}

/// Detector step: `L_total` (or the clean CE for the baseline) with the
/// generator bound as constants.
pub fn detector_step(
    bundle: &ModelBundle,
    cfg: &TrainConfig,
    batch: &Batch,
    env: &EnvSource,
    basis: &SynthesisBasis,
) -> Result<StepGrads> {
    let mut t = Tape::new();
    let dv = DetectorVars::bind(&mut t, bundle, true);
    let gv = bind_mlp(&mut t, &bundle.generator, false);
    let xc = t.constant(batch.clean.clone());
    let hc = encode_graph(&mut t, &dv.encoder, xc)?;
    let zc = head_graph(&mut t, &dv.head, hc)?;

    let xe = match env {
        EnvSource::None => None,
        EnvSource::Fixed(m) => Some(t.constant(m.clone())),
        EnvSource::Generator => {
            let lsa = lsa_graph(&mut t, &gv, &batch.spectral, bundle.alpha, bundle.delta, basis)?;
            Some(lsa.x_env)
        }
    };
    let mut losses = LossComponents::default();
    let total = match xe {
        None => {
            let ce = t.cross_entropy(zc, batch.labels)?;
            losses.l_det = t.scalar(ce);
            ce
        }
        Some(xe) => {
            let he = encode_graph(&mut t, &dv.encoder, xe)?;
            let ze = head_graph(&mut t, &dv.head, he)?;
            let l_det = detector_loss_graph(&mut t, zc, ze, batch.labels)?;
            let pc = t.softmax(zc);
            let pe = t.softmax(ze);
            let l_sym = symmetric_kl_graph(&mut t, pc, pe)?;
            let l_blind = blindness_loss_graph(&mut t, &dv.disc, hc, he, true)?;
            losses.l_det = t.scalar(l_det);
            losses.l_sym = t.scalar(l_sym);
            losses.l_blind = t.scalar(l_blind);
            total_loss_graph(&mut t, l_det, l_sym, l_blind, &cfg.weights)?
        }
    };
    losses.total = t.scalar(total);
    t.backward(total)?;
    Ok(StepGrads {
        detector: dv.vars().iter().map(|&v| t.grad_or_zero(v)).collect(),
        generator: gv.vars().iter().map(|&v| t.grad_or_zero(v)).collect(),
        losses,
    })
}

/// Generator step: gradient of `-L_gen` with the detector bound as constants.
pub fn generator_step(
    bundle: &ModelBundle,
    cfg: &TrainConfig,
    batch: &Batch,
    basis: &SynthesisBasis,
) -> Result<StepGrads> {
    let mut t = Tape::new();
    let dv = DetectorVars::bind(&mut t, bundle, false);
    let gv = bind_mlp(&mut t, &bundle.generator, true);
    let lsa = lsa_graph(&mut t, &gv, &batch.spectral, bundle.alpha, bundle.delta, basis)?;
    let xc = t.constant(batch.clean.clone());
    let hc = encode_graph(&mut t, &dv.encoder, xc)?;
    let he = encode_graph(&mut t, &dv.encoder, lsa.x_env)?;
    let ze = head_graph(&mut t, &dv.head, he)?;
    let ce = t.cross_entropy(ze, batch.labels)?;
    let mmd = mmd_graph(&mut t, hc, he, &cfg.kernel)?;
    let reg = mask_regularizer_graph(&mut t, lsa.mask)?;
    let l_gen = generator_loss_graph(&mut t, ce, mmd, reg, &cfg.weights)?;
    let objective = t.neg(l_gen);
    t.backward(objective)?;
    let losses = LossComponents {
        l_gen: t.scalar(l_gen),
        mmd: t.scalar(mmd),
        mask_reg: t.scalar(reg),
        total: t.scalar(l_gen),
        ..LossComponents::default()
    };
    Ok(StepGrads {
        detector: dv.vars().iter().map(|&v| t.grad_or_zero(v)).collect(),
        generator: gv.vars().iter().map(|&v| t.grad_or_zero(v)).collect(),
        losses,
    })
}

/// `A * exp(eta)` with i.i.d. `eta ~ N(0, sigma^2)`, synthesized with the
/// batch phase.
fn naive_env(batch: &SpectralBatch, sigma: f64, basis: &SynthesisBasis, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut noisy = batch.amplitude.clone();
    for a in noisy.as_mut_slice() {
        *a *= normal.sample(rng).exp();
    }
    let mut t = Tape::new();
    let a = t.constant(noisy);
    let x = synthesize_graph(&mut t, a, batch, basis)?;
    Ok(t.value(x).clone())
}

fn check_finite(losses: &LossComponents, grads: &[Matrix], step: usize, phase: &str) -> Result<()> {
    if !losses.all_finite() || grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite loss or gradient at step {step} ({phase} phase): {losses:?}"
        )));
    }
    Ok(())
}

/// Splits `dataset` 80/10/10 by `cfg.seed` and trains on the first part.
pub fn train(cfg: &TrainConfig, dataset: &[LabeledClip]) -> Result<(TrainOutput, Split)> {
    let split = Split::new(dataset.len(), cfg.seed);
    let tr = Split::pick(dataset, &split.train);
    let va = Split::pick(dataset, &split.val);
    Ok((train_on(cfg, &tr, &va)?, split))
}

pub fn train_on(cfg: &TrainConfig, train: &[&LabeledClip], val: &[&LabeledClip]) -> Result<TrainOutput> {
    cfg.validate()?;
    let first = train.first().ok_or_else(|| Error::InvalidInput("empty training set".into()))?;
    let (m_len, t_len) = (first.clip.patch_count(), first.clip.frame_count());
    if train.len() < cfg.batch_size {
        return Err(Error::InvalidInput(format!(
            "training set of {} clips is smaller than one batch of {}",
            train.len(),
            cfg.batch_size
        )));
    }
    let dims = cfg.dims(m_len, t_len);
    let mut bundle = ModelBundle::init(dims, cfg.alpha, cfg.seed);
    let basis = SynthesisBasis::new(dims.grid());

    let clip_refs: Vec<_> = train.iter().map(|c| &c.clip).collect();
    let clean_all = clips_matrix(&clip_refs)?;
    let spectra = train.iter().map(|c| dft_onesided(&c.clip)).collect::<Result<Vec<OneSidedSpectrum>>>()?;
    let spec_refs: Vec<&OneSidedSpectrum> = spectra.iter().collect();
    let spectral_all = SpectralBatch::from_spectra(&spec_refs)?;
    let labels_all: Vec<usize> = train.iter().map(|c| c.label).collect();
    let val_clips: Vec<_> = val.iter().map(|c| &c.clip).collect();
    let val_labels: Vec<usize> = val.iter().map(|c| c.label).collect();

    let mut det_opt = Adam::for_params(cfg.optimizer, &bundle.detector_tensors_mut());
    let mut gen_opt = Adam::for_params(cfg.optimizer, &bundle.generator_tensors_mut());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let width = clean_all.cols();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::new();
    let mut val_auc = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ModelBundle)> = None;
    let mut step = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for (b, idx) in order.chunks_exact(cfg.batch_size).enumerate() {
            let mut clean = Vec::with_capacity(idx.len() * width);
            for &i in idx {
                clean.extend_from_slice(clean_all.row(i));
            }
            let labels: Vec<usize> = idx.iter().map(|&i| labels_all[i]).collect();
            let batch = Batch {
                clean: Matrix::from_vec(idx.len(), width, clean)?,
                spectral: spectral_all.select(idx),
                labels: &labels,
            };
            let env = match cfg.mode {
                Mode::Baseline => EnvSource::None,
                Mode::Spinshield => EnvSource::Generator,
                Mode::NaiveAug => EnvSource::Fixed(naive_env(&batch.spectral, cfg.naive_sigma, &basis, &mut rng)?),
            };
            let g = detector_step(&bundle, cfg, &batch, &env, &basis)?;
            check_finite(&g.losses, &g.detector, step, "det")?;
            det_opt.step(bundle.detector_tensors_mut(), &g.detector)?;
            log.push(LogRow {
                step,
                phase: Phase::Det,
                losses: g.losses,
            });

            if cfg.mode == Mode::Spinshield && (b + 1) % cfg.alternation == 0 {
                let g = generator_step(&bundle, cfg, &batch, &basis)?;
                check_finite(&g.losses, &g.generator, step, "gen")?;
                gen_opt.step(bundle.generator_tensors_mut(), &g.generator)?;
                log.push(LogRow {
                    step,
                    phase: Phase::Gen,
                    losses: g.losses,
                });
            }
            step += 1;
        }

        let auc = if val_clips.is_empty() {
            f64::NAN
        } else {
            compute_auc(&score_clips(&bundle, &val_clips)?, &val_labels)?
        };
        val_auc.push(auc);
        // Ties go to the later epoch.
        let better = match &best {
            None => true,
            Some((b, _, _)) => auc >= *b || b.is_nan(),
        };
        if better {
            best = Some((auc, epoch, bundle.clone()));
        }
    }
    let (_, best_epoch, best_bundle) = best.expect("at least one epoch");
    Ok(TrainOutput {
        bundle: best_bundle,
        log,
        val_auc,
        best_epoch,
    })
}
