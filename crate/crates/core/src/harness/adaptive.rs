//! White-box amplitude-modulation attack.
//!
//! The attacker owns a log-amplitude field `u` per clip and sets
//! `A_hat = A * exp(clamp(u, -budget, budget))`, phase fixed. It runs signed
//! gradient ascent on the detector's cross-entropy for the true label and
//! keeps, per clip, the iterate with the lowest true-label probability.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax_rows, Tape};
use crate::error::{Error, Result};
use crate::harness::eval::{compute_auc, score_clips};
use crate::models::{bind_linear, bind_mlp, encode_graph, head_graph, synthesize_graph, ModelBundle, SpectralBatch};
use crate::spectral::{dft_onesided, OneSidedSpectrum, PatchSignalClip, SynthesisBasis};
use crate::synth::LabeledClip;
use crate::tensor::Matrix;

const CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveConfig {
    pub steps: usize,
    /// Bound on `|u|`; `ln 2` allows one octave either way.
    pub budget: f64,
    /// Signed step as a fraction of the budget.
    pub step_fraction: f64,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            steps: 20,
            budget: std::f64::consts::LN_2,
            step_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveOutcome {
    pub config: AdaptiveConfig,
    pub clip_ids: Vec<usize>,
    pub labels: Vec<usize>,
    pub clean_scores: Vec<f64>,
    pub attacked_scores: Vec<f64>,
    pub clean_auc: f64,
    pub attacked_auc: f64,
}

/// Best field found for each clip of one chunk, `B*M x K`.
fn attack_chunk(
    bundle: &ModelBundle,
    spectra: &[&OneSidedSpectrum],
    labels: &[usize],
    cfg: &AdaptiveConfig,
    basis: &SynthesisBasis,
) -> Result<Matrix> {
    let batch = SpectralBatch::from_spectra(spectra)?;
    let (rows, k_len) = batch.amplitude.shape();
    let m_len = batch.patch_count;
    let mut u = Matrix::zeros(rows, k_len);
    let mut best = u.clone();
    let mut best_p = vec![f64::INFINITY; labels.len()];
    let step = cfg.step_fraction * cfg.budget;

    // One extra pass scores the last iterate without stepping.
    for it in 0..=cfg.steps {
        let mut t = Tape::new();
        let enc = bind_mlp(&mut t, &bundle.encoder, false);
        let head = bind_linear(&mut t, &bundle.head, false);
        let uv = t.param(u.clone());
        let e = t.exp(uv);
        let amp = t.constant(batch.amplitude.clone());
        let a_hat = t.mul(amp, e)?;
        let x = synthesize_graph(&mut t, a_hat, &batch, basis)?;
        let h = encode_graph(&mut t, &enc, x)?;
        let z = head_graph(&mut t, &head, h)?;
        let p = softmax_rows(t.value(z));
        for (b, &y) in labels.iter().enumerate() {
            let pt = p.get(b, y);
            if pt < best_p[b] {
                best_p[b] = pt;
                let span = b * m_len * k_len..(b + 1) * m_len * k_len;
                best.as_mut_slice()[span.clone()].copy_from_slice(&u.as_slice()[span]);
            }
        }
        if it == cfg.steps {
            break;
        }
        let ce = t.cross_entropy(z, labels)?;
        t.backward(ce)?;
        let g = t.grad_or_zero(uv);
        if !g.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite gradient in adaptive attack at step {it} (loss {})",
                t.scalar(ce)
            )));
        }
        for (ui, gi) in u.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *ui = (*ui + step * gi.signum()).clamp(-cfg.budget, cfg.budget);
        }
    }
    Ok(best)
}

/// Attacked clips for `clips`, in order. Final clips are rebuilt from the
/// spectrum with the modulated amplitude.
pub fn adaptive_attack_batch(
    bundle: &ModelBundle,
    clips: &[&PatchSignalClip],
    labels: &[usize],
    cfg: &AdaptiveConfig,
) -> Result<Vec<PatchSignalClip>> {
    if clips.len() != labels.len() {
        return Err(Error::shape("adaptive labels", clips.len(), labels.len()));
    }
    if !(cfg.budget >= 0.0 && cfg.budget.is_finite()) {
        return Err(Error::InvalidInput(format!("budget must be finite and non-negative, got {}", cfg.budget)));
    }
    if cfg.budget == 0.0 || cfg.steps == 0 || clips.is_empty() {
        return Ok(clips.iter().map(|c| (*c).clone()).collect());
    }
    let basis = SynthesisBasis::new(bundle.dims.grid());
    let spectra = clips.iter().map(|c| dft_onesided(c)).collect::<Result<Vec<_>>>()?;
    let idx: Vec<usize> = (0..clips.len()).collect();
    let chunks: Vec<Vec<PatchSignalClip>> = idx
        .par_chunks(CHUNK)
        .map(|ix| {
            let sp: Vec<&OneSidedSpectrum> = ix.iter().map(|&i| &spectra[i]).collect();
            let ys: Vec<usize> = ix.iter().map(|&i| labels[i]).collect();
            let field = attack_chunk(bundle, &sp, &ys, cfg, &basis)?;
            let rows = field.rows() / ix.len();
            sp.iter()
                .enumerate()
                .map(|(b, s)| {
                    let amp = s.amplitude();
                    let mut a_hat = amp.clone();
                    let off = b * rows * amp.cols();
                    for (a, u) in a_hat.as_mut_slice().iter_mut().zip(&field.as_slice()[off..]) {
                        *a *= u.clamp(-cfg.budget, cfg.budget).exp();
                    }
                    s.with_amplitude(&a_hat)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(chunks.concat())
}

/// Single-clip form; returns the attacked clip and its p(fake).
pub fn adaptive_attack(
    bundle: &ModelBundle,
    clip: &PatchSignalClip,
    label: usize,
    cfg: &AdaptiveConfig,
) -> Result<(PatchSignalClip, f64)> {
    let out = adaptive_attack_batch(bundle, &[clip], &[label], cfg)?.remove(0);
    let score = score_clips(bundle, &[&out])?[0];
    Ok((out, score))
}

/// Clean and post-attack AUC over `clips`.
pub fn adaptive_auc(bundle: &ModelBundle, clips: &[&LabeledClip], cfg: &AdaptiveConfig) -> Result<AdaptiveOutcome> {
    let refs: Vec<&PatchSignalClip> = clips.iter().map(|c| &c.clip).collect();
    let labels: Vec<usize> = clips.iter().map(|c| c.label).collect();
    let clean_scores = score_clips(bundle, &refs)?;
    let attacked = adaptive_attack_batch(bundle, &refs, &labels, cfg)?;
    let attacked_refs: Vec<&PatchSignalClip> = attacked.iter().collect();
    let attacked_scores = score_clips(bundle, &attacked_refs)?;
    Ok(AdaptiveOutcome {
        config: *cfg,
        clip_ids: clips.iter().map(|c| c.id).collect(),
        clean_auc: compute_auc(&clean_scores, &labels)?,
        attacked_auc: compute_auc(&attacked_scores, &labels)?,
        labels,
        clean_scores,
        attacked_scores,
    })
}
