//! AUC, attack-suite evaluation and the notch sweep.
//!
//! Scoring always goes through the clean single-stream path
//! ([`score_clips`]); the generator is never touched here.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{apply_attack, sample_attack_with, AttackKind, AttackSettings, AttackSpec};
use crate::error::{Error, Result};
use crate::models::{score_batch, ModelBundle};
use crate::spectral::PatchSignalClip;
use crate::synth::LabeledClip;

/// Clips scored per inference batch.
const SCORE_CHUNK: usize = 64;

/// Mann-Whitney AUC with midranks, so ties count one half.
pub fn compute_auc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape("compute_auc", scores.len().to_string(), labels.len().to_string()));
    }
    if let Some(&y) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::InvalidInput(format!("labels must be 0 or 1, got {y}")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("score is NaN".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidInput(
            "AUC needs both classes present".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean.
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += mid * order[i..=j].iter().filter(|&&o| labels[o] == 1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// p(fake) for each clip through the clean inference path.
pub fn score_clips(bundle: &ModelBundle, clips: &[&PatchSignalClip]) -> Result<Vec<f64>> {
    let chunks: Vec<Vec<f64>> = clips
        .par_chunks(SCORE_CHUNK)
        .map(|c| score_batch(bundle, c))
        .collect::<Result<_>>()?;
    Ok(chunks.concat())
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the attack drawn for one clip, kind and suite seed.
pub fn attack_seed(seed: u64, kind: AttackKind, clip_id: usize) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ kind as u64) ^ clip_id as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSuite {
    pub kinds: Vec<AttackKind>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub settings: AttackSettings,
}

impl Default for AttackSuite {
    fn default() -> Self {
        Self {
            kinds: AttackKind::SUITE.to_vec(),
            seeds: vec![0, 1, 2],
            settings: AttackSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRun {
    pub kind: AttackKind,
    pub seed: u64,
    pub auc: f64,
    pub scores: Vec<f64>,
    /// One spec per clip, aligned with [`EvalReport::clip_ids`].
    pub specs: Vec<AttackSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucSummary {
    pub kind: AttackKind,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Free-form snapshot of whatever produced the checkpoint.
    pub config: serde_json::Value,
    pub suite: AttackSuite,
    pub clip_ids: Vec<usize>,
    pub labels: Vec<usize>,
    pub clean_auc: f64,
    pub clean_scores: Vec<f64>,
    pub runs: Vec<AttackRun>,
    pub summary: Vec<AucSummary>,
}

impl EvalReport {
    pub fn summary_for(&self, kind: AttackKind) -> Option<AucSummary> {
        self.summary.iter().copied().find(|s| s.kind == kind)
    }

    /// Mean of the per-kind means.
    pub fn mean_attacked_auc(&self) -> f64 {
        self.summary.iter().map(|s| s.mean).sum::<f64>() / self.summary.len().max(1) as f64
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn sorted_by_id<'a>(clips: &[&'a LabeledClip]) -> Vec<&'a LabeledClip> {
    let mut v = clips.to_vec();
    v.sort_by_key(|c| c.id);
    v
}

/// AUC of `bundle` on `clips` with one spec per clip applied.
pub fn score_with_specs(bundle: &ModelBundle, clips: &[&LabeledClip], specs: &[AttackSpec]) -> Result<Vec<f64>> {
    if clips.len() != specs.len() {
        return Err(Error::shape("attack specs", clips.len().to_string(), specs.len().to_string()));
    }
    let attacked: Vec<PatchSignalClip> = clips
        .par_iter()
        .zip(specs.par_iter())
        .map(|(c, s)| apply_attack(&c.clip, s))
        .collect::<Result<_>>()?;
    let refs: Vec<&PatchSignalClip> = attacked.iter().collect();
    score_clips(bundle, &refs)
}

/// AUC with the same spec applied to every clip.
pub fn auc_under_spec(bundle: &ModelBundle, clips: &[&LabeledClip], spec: &AttackSpec) -> Result<f64> {
    let specs = vec![spec.clone(); clips.len()];
    let scores = score_with_specs(bundle, clips, &specs)?;
    compute_auc(&scores, &labels_of(clips))
}

pub fn clean_auc(bundle: &ModelBundle, clips: &[&LabeledClip]) -> Result<f64> {
    let refs: Vec<&PatchSignalClip> = clips.iter().map(|c| &c.clip).collect();
    compute_auc(&score_clips(bundle, &refs)?, &labels_of(clips))
}

fn labels_of(clips: &[&LabeledClip]) -> Vec<usize> {
    clips.iter().map(|c| c.label).collect()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn summarize(kinds: &[AttackKind], runs: &[AttackRun]) -> Vec<AucSummary> {
    kinds
        .iter()
        .map(|&kind| {
            let aucs: Vec<f64> = runs.iter().filter(|r| r.kind == kind).map(|r| r.auc).collect();
            let (mean, std) = mean_std(&aucs);
            AucSummary { kind, mean, std }
        })
        .collect()
}

/// Draws one spec per clip per suite seed for every kind, scores the
/// attacked clips and aggregates AUC mean and population std over seeds.
pub fn evaluate_under_attacks(
    bundle: &ModelBundle,
    clips: &[&LabeledClip],
    suite: &AttackSuite,
    config: serde_json::Value,
) -> Result<EvalReport> {
    if suite.kinds.is_empty() || suite.seeds.is_empty() {
        return Err(Error::InvalidInput("attack suite needs at least one kind and one seed".into()));
    }
    let clips = sorted_by_id(clips);
    let first = clips.first().ok_or_else(|| Error::InvalidInput("empty evaluation set".into()))?;
    let grid = first.clip.grid();
    let patch_count = first.clip.patch_count();
    let labels = labels_of(&clips);
    let clean_refs: Vec<&PatchSignalClip> = clips.iter().map(|c| &c.clip).collect();
    let clean_scores = score_clips(bundle, &clean_refs)?;
    let clean_auc = compute_auc(&clean_scores, &labels)?;

    let mut runs = Vec::with_capacity(suite.kinds.len() * suite.seeds.len());
    for &kind in &suite.kinds {
        for &seed in &suite.seeds {
            let specs: Vec<AttackSpec> = clips
                .iter()
                .map(|c| sample_attack_with(kind, grid, patch_count, attack_seed(seed, kind, c.id), &suite.settings))
                .collect::<Result<_>>()?;
            let scores = score_with_specs(bundle, &clips, &specs)?;
            let auc = compute_auc(&scores, &labels)?;
            runs.push(AttackRun {
                kind,
                seed,
                auc,
                scores,
                specs,
            });
        }
    }
    let summary = summarize(&suite.kinds, &runs);
    Ok(EvalReport {
        config,
        suite: suite.clone(),
        clip_ids: clips.iter().map(|c| c.id).collect(),
        labels,
        clean_auc,
        clean_scores,
        runs,
        summary,
    })
}

/// Rebuilds a report from its stored specs alone. `clips` must contain
/// every id the report lists.
pub fn regenerate(report: &EvalReport, bundle: &ModelBundle, clips: &[&LabeledClip]) -> Result<EvalReport> {
    let by_id: std::collections::HashMap<usize, &LabeledClip> = clips.iter().map(|c| (c.id, *c)).collect();
    let ordered: Vec<&LabeledClip> = report
        .clip_ids
        .iter()
        .map(|id| {
            by_id
                .get(id)
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("clip {id} listed in report is missing")))
        })
        .collect::<Result<_>>()?;
    let labels = labels_of(&ordered);
    let clean_refs: Vec<&PatchSignalClip> = ordered.iter().map(|c| &c.clip).collect();
    let clean_scores = score_clips(bundle, &clean_refs)?;
    let clean_auc = compute_auc(&clean_scores, &labels)?;
    let runs = report
        .runs
        .iter()
        .map(|r| {
            let scores = score_with_specs(bundle, &ordered, &r.specs)?;
            Ok(AttackRun {
                kind: r.kind,
                seed: r.seed,
                auc: compute_auc(&scores, &labels)?,
                scores,
                specs: r.specs.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        config: report.config.clone(),
        suite: report.suite.clone(),
        clip_ids: report.clip_ids.clone(),
        labels,
        clean_auc,
        clean_scores,
        summary: summarize(&report.suite.kinds, &runs),
        runs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// `None` for the no-suppression row.
    pub center_bin: Option<usize>,
    pub omega_k: Option<f64>,
    pub auc: f64,
}

/// Full-suppression notch (width 1, floor 0) at every interior bin.
/// The first row is the unattacked AUC.
pub fn notch_sweep(bundle: &ModelBundle, clips: &[&LabeledClip]) -> Result<Vec<SweepRow>> {
    let first = clips.first().ok_or_else(|| Error::InvalidInput("empty sweep set".into()))?;
    let grid = first.clip.grid();
    let mut rows = vec![SweepRow {
        center_bin: None,
        omega_k: None,
        auc: clean_auc(bundle, clips)?,
    }];
    for k in grid.interior_bins() {
        rows.push(SweepRow {
            center_bin: Some(k),
            omega_k: Some(grid.omega(k)),
            auc: auc_under_spec(bundle, clips, &AttackSpec::notch(k, 1, 0.0))?,
        });
    }
    Ok(rows)
}

/// Largest `clean - auc` over the suppressed rows.
pub fn max_sweep_drop(rows: &[SweepRow]) -> f64 {
    let clean = rows.iter().find(|r| r.center_bin.is_none()).map_or(f64::NAN, |r| r.auc);
    rows.iter()
        .filter(|r| r.center_bin.is_some())
        .map(|r| clean - r.auc)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut out = String::from("omega_k,auc\n");
    for r in rows {
        match r.omega_k {
            None => out.push_str(&format!("none,{:?}\n", r.auc)),
            Some(w) => out.push_str(&format!("{w:?},{:?}\n", r.auc)),
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
