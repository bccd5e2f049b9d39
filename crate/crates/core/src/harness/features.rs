//! Encoder features of clean and perturbed views, for external plotting.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{apply_attack, sample_attack, AttackKind};
use crate::error::{Error, Result};
use crate::harness::eval::attack_seed;
use crate::models::{encode_batch, lsa_perturb, ModelBundle};
use crate::spectral::{dft_onesided, PatchSignalClip};
use crate::synth::LabeledClip;

/// How the second view of each clip is produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "view", rename_all = "snake_case")]
pub enum EnvView {
    /// The checkpoint's own adversary.
    Lsa,
    /// A sampled attack per clip.
    Attack { kind: AttackKind, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub clip_id: usize,
    /// "clean" or "env".
    pub view: String,
    pub label: usize,
    pub h: Vec<f64>,
}

fn env_clip(bundle: &ModelBundle, clip: &LabeledClip, view: EnvView) -> Result<PatchSignalClip> {
    match view {
        EnvView::Lsa => Ok(lsa_perturb(&dft_onesided(&clip.clip)?, bundle)?.0),
        EnvView::Attack { kind, seed } => {
            let spec = sample_attack(
                kind,
                clip.clip.grid(),
                clip.clip.patch_count(),
                attack_seed(seed, kind, clip.id),
            )?;
            apply_attack(&clip.clip, &spec)
        }
    }
}

/// Two rows per clip, clean first, sorted by clip id.
pub fn dump_features(bundle: &ModelBundle, clips: &[&LabeledClip], view: EnvView) -> Result<Vec<FeatureRow>> {
    let mut clips = clips.to_vec();
    clips.sort_by_key(|c| c.id);
    let env: Vec<PatchSignalClip> = clips
        .par_iter()
        .map(|c| env_clip(bundle, c, view))
        .collect::<Result<_>>()?;
    let clean_refs: Vec<&PatchSignalClip> = clips.iter().map(|c| &c.clip).collect();
    let env_refs: Vec<&PatchSignalClip> = env.iter().collect();
    let hc = encode_batch(bundle, &clean_refs)?;
    let he = encode_batch(bundle, &env_refs)?;
    let mut rows = Vec::with_capacity(2 * clips.len());
    for (i, c) in clips.iter().enumerate() {
        for (name, h) in [("clean", &hc), ("env", &he)] {
            rows.push(FeatureRow {
                clip_id: c.id,
                view: name.into(),
                label: c.label,
                h: h.row(i).to_vec(),
            });
        }
    }
    Ok(rows)
}

/// Mean over clips and dimensions of `|h_clean - h_env|`.
pub fn mean_view_gap(rows: &[FeatureRow]) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for pair in rows.chunks_exact(2) {
        for (a, b) in pair[0].h.iter().zip(&pair[1].h) {
            total += (a - b).abs();
            n += 1;
        }
    }
    total / n.max(1) as f64
}

pub fn write_features_csv(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    let dim = rows.first().map_or(0, |r| r.h.len());
    let mut out = String::from("clip_id,view,y");
    for d in 0..dim {
        out.push_str(&format!(",h{d}"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{}", r.clip_id, r.view, r.label));
        for v in &r.h {
            out.push_str(&format!(",{v:?}"));
        }
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
