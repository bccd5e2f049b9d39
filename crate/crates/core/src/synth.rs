//! Planted-shortcut synthetic clips.
//!
//! Real clips are a per-patch baseline, three smooth low-frequency
//! components and white noise. Fake clips add two cues:
//!
//! * an amplitude shortcut, a sinusoid at bin `k_s`, easy to read from the
//!   amplitude spectrum and removable by any mask over `k_s`;
//! * a phase cue, a sign inversion of one base component from a random frame
//!   `t0` onwards, which lives in the phase relations between frames.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_clip, write_clip, SignalFormat};
use crate::spectral::{dft_onesided, PatchSignalClip, DEFAULT_FPS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub n_clips: usize,
    pub frame_count: usize,
    pub patch_rows: usize,
    pub patch_cols: usize,
    pub shortcut_bin: usize,
    pub shortcut_amplitude: f64,
    pub phase_cue_strength: f64,
    /// Index into `base_bins` of the component whose sign flips.
    pub phase_cue_component: usize,
    pub base_bins: Vec<usize>,
    pub base_amplitudes: Vec<f64>,
    pub noise_std: f64,
    /// Range of the per-patch baseline `b_m`.
    pub baseline_range: (f64, f64),
    pub fps: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_clips: 2000,
            frame_count: 16,
            patch_rows: 4,
            patch_cols: 4,
            shortcut_bin: 5,
            shortcut_amplitude: 0.8,
            phase_cue_strength: 1.0,
            phase_cue_component: 0,
            base_bins: vec![1, 2, 3],
            base_amplitudes: vec![1.0, 0.6, 0.3],
            noise_std: 0.05,
            baseline_range: (0.3, 0.7),
            fps: DEFAULT_FPS,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn patch_count(&self) -> usize {
        self.patch_rows * self.patch_cols
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        let half = self.frame_count / 2;
        if self.frame_count < 4 {
            return bad(format!("T must be at least 4, got {}", self.frame_count));
        }
        if self.patch_rows == 0 || self.patch_cols == 0 {
            return bad("patch grid must be non-empty".into());
        }
        if self.shortcut_bin < 1 || self.shortcut_bin + 1 > half {
            return bad(format!("shortcut bin {} outside [1, {}]", self.shortcut_bin, half - 1));
        }
        if self.base_bins.contains(&self.shortcut_bin) {
            return bad(format!("shortcut bin {} collides with a base component", self.shortcut_bin));
        }
        if self.base_bins.len() != self.base_amplitudes.len() || self.base_bins.is_empty() {
            return bad("base_bins and base_amplitudes must be non-empty and the same length".into());
        }
        if self.phase_cue_component >= self.base_bins.len() {
            return bad(format!("phase cue component {} out of range", self.phase_cue_component));
        }
        if self.base_bins.iter().any(|&k| k == 0 || k > half) {
            return bad("base bins must lie in [1, T/2]".into());
        }
        if !(self.noise_std >= 0.0 && self.shortcut_amplitude >= 0.0 && self.phase_cue_strength >= 0.0) {
            return bad("noise, shortcut amplitude and cue strength must be non-negative".into());
        }
        if !(self.baseline_range.0 <= self.baseline_range.1) {
            return bad("baseline range is inverted".into());
        }
        if self.n_clips == 0 {
            return bad("n_clips must be positive".into());
        }
        Ok(())
    }
}

/// What the generator drew for one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipProvenance {
    pub index: usize,
    pub seed: u64,
    /// Onset frame of the sign inversion (fake clips only).
    pub t0: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledClip {
    pub id: usize,
    pub clip: PatchSignalClip,
    /// 0 real, 1 fake.
    pub label: usize,
    pub provenance: Option<ClipProvenance>,
}

/// Phases `p0 + gr * r / rows + gc * c / cols`, smooth over the patch grid.
fn smooth_phases(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    let p0 = rng.random_range(0.0..2.0 * PI);
    let gr = rng.random_range(-PI / 2.0..PI / 2.0);
    let gc = rng.random_range(-PI / 2.0..PI / 2.0);
    (0..rows * cols)
        .map(|m| p0 + gr * (m / cols) as f64 / rows as f64 + gc * (m % cols) as f64 / cols as f64)
        .collect()
}

/// Clip `index` of the dataset. Its RNG stream depends only on
/// `(seed, index)`, so generation order and thread count do not matter.
pub fn generate_clip(spec: &DatasetSpec, index: usize) -> Result<LabeledClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let fake = index % 2 == 0;
    let (t_len, rows, cols) = (spec.frame_count, spec.patch_rows, spec.patch_cols);
    let m_len = rows * cols;
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let omega = |k: usize, t: usize| 2.0 * PI * k as f64 * t as f64 / t_len as f64;

    let (lo, hi) = spec.baseline_range;
    let mut x: Vec<f64> = Vec::with_capacity(m_len * t_len);
    for _ in 0..m_len {
        let b = if hi > lo { rng.random_range(lo..hi) } else { lo };
        for _ in 0..t_len {
            x.push(b + noise.sample(&mut rng));
        }
    }
    // Drawn for every clip so that the two classes consume the stream alike.
    let t0 = rng.random_range(t_len / 4..=3 * t_len / 4);
    for (i, (&k, &a)) in spec.base_bins.iter().zip(&spec.base_amplitudes).enumerate() {
        let ph = smooth_phases(&mut rng, rows, cols);
        let flip = fake && i == spec.phase_cue_component;
        for m in 0..m_len {
            for t in 0..t_len {
                let sign = if flip && t >= t0 { 1.0 - 2.0 * spec.phase_cue_strength } else { 1.0 };
                x[m * t_len + t] += sign * a * (omega(k, t) + ph[m]).sin();
            }
        }
    }
    let shortcut_ph = smooth_phases(&mut rng, rows, cols);
    if fake {
        for m in 0..m_len {
            for t in 0..t_len {
                x[m * t_len + t] += spec.shortcut_amplitude * (omega(spec.shortcut_bin, t) + shortcut_ph[m]).sin();
            }
        }
    }
    let clip = PatchSignalClip::new(m_len, t_len, x)?.with_fps(spec.fps)?;
    Ok(LabeledClip {
        id: index,
        clip,
        label: usize::from(fake),
        provenance: Some(ClipProvenance {
            index,
            seed: spec.seed,
            t0: fake.then_some(t0),
        }),
    })
}

/// Balanced dataset, `ceil(n/2)` fakes at even indices.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<LabeledClip>> {
    spec.validate()?;
    (0..spec.n_clips).into_par_iter().map(|i| generate_clip(spec, i)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    pub path: PathBuf,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: Option<DatasetSpec>,
    pub seed: Option<u64>,
    pub format: SignalFormat,
    pub clips: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line() as u64,
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

/// Writes one signal file per clip under `dir` plus `dir/manifest.json`.
/// Paths in the manifest are relative to the manifest.
pub fn write_dataset(
    dir: &Path,
    clips: &[LabeledClip],
    spec: Option<&DatasetSpec>,
    format: SignalFormat,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(clips.len());
    for c in clips {
        let name = PathBuf::from(format!("clip_{:05}.{}", c.id, format.extension()));
        write_clip(&dir.join(&name), &c.clip, format)?;
        entries.push(ManifestEntry {
            id: c.id,
            path: name,
            label: c.label,
        });
    }
    let manifest = Manifest {
        spec: spec.cloned(),
        seed: spec.map(|s| s.seed),
        format,
        clips: entries,
    };
    let path = dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}

/// Reads every clip listed in the manifest at `path`. Signal files must be
/// in `format`.
pub fn load_clips(path: &Path, format: SignalFormat) -> Result<Vec<LabeledClip>> {
    let manifest = Manifest::load(path)?;
    if manifest.format != format {
        return Err(Error::InvalidInput(format!(
            "{} lists {:?} files, {:?} requested",
            path.display(),
            manifest.format,
            format
        )));
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    manifest
        .clips
        .iter()
        .map(|e| {
            if e.label > 1 {
                return Err(Error::InvalidInput(format!("clip {}: label {} is not 0 or 1", e.id, e.label)));
            }
            let p = if e.path.is_absolute() { e.path.clone() } else { base.join(&e.path) };
            Ok(LabeledClip {
                id: e.id,
                clip: read_clip(&p, format)?,
                label: e.label,
                provenance: None,
            })
        })
        .collect()
}

/// Loads a manifest in whatever format it declares.
pub fn load_manifest_clips(path: &Path) -> Result<Vec<LabeledClip>> {
    let format = Manifest::load(path)?.format;
    load_clips(path, format)
}

/// Patch-averaged one-sided amplitude at bin `k`.
pub fn mean_amplitude_at(clip: &PatchSignalClip, k: usize) -> Result<f64> {
    let s = dft_onesided(clip)?;
    let a = s.amplitude();
    if k >= a.cols() {
        return Err(Error::InvalidInput(format!("bin {k} beyond {} bins", a.cols())));
    }
    Ok((0..a.rows()).map(|m| a.get(m, k)).sum::<f64>() / a.rows() as f64)
}

/// Phase-cue statistic: the largest frame-to-frame jump of the local phase
/// of bin `k`, averaged over patches.
///
/// The local phase is that of a circular sliding DFT of length `window`,
/// `z(t) = sum_{s=t}^{t+window-1} x(s) e^{-j 2 pi k s / T}`. Demodulation
/// moves the shortcut to offsets `k_s - k` and `k_s + k`; a window that
/// spans whole periods of both cancels it exactly (see [`phase_cue_window`]).
pub fn phase_jump_statistic(clip: &PatchSignalClip, k: usize, window: usize) -> f64 {
    let t_len = clip.frame_count();
    let mut total = 0.0;
    for m in 0..clip.patch_count() {
        let x = clip.patch(m);
        let z: Vec<(f64, f64)> = (0..t_len)
            .map(|t| {
                (0..window).fold((0.0, 0.0), |(re, im), j| {
                    let s = (t + j) % t_len;
                    let arg = -2.0 * PI * (k * s) as f64 / t_len as f64;
                    (re + x[s] * arg.cos(), im + x[s] * arg.sin())
                })
            })
            .collect();
        let mut worst = 0.0_f64;
        for t in 0..t_len {
            let (a, b) = (z[t], z[(t + 1) % t_len]);
            // arg(b * conj(a))
            let re = b.0 * a.0 + b.1 * a.1;
            let im = b.1 * a.0 - b.0 * a.1;
            worst = worst.max(im.atan2(re).abs());
        }
        total += worst;
    }
    total / clip.patch_count() as f64
}

/// Default window for [`phase_jump_statistic`] on a spec's clips.
pub fn phase_cue_window(spec: &DatasetSpec) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    let k = spec.base_bins[spec.phase_cue_component];
    let g = gcd(gcd(spec.shortcut_bin.abs_diff(k), spec.shortcut_bin + k), spec.frame_count);
    spec.frame_count / g.max(1)
}

/// AUC of a one-feature logistic probe. The probe is fitted by Newton's
/// method; with a single feature its ranking is that of the feature or its
/// negation, which the fit decides.
pub fn logistic_probe_auc(feature: &[f64], labels: &[usize]) -> Result<f64> {
    if feature.len() != labels.len() || feature.is_empty() {
        return Err(Error::shape("logistic_probe_auc", feature.len(), labels.len()));
    }
    let n = feature.len() as f64;
    let mu = feature.iter().sum::<f64>() / n;
    let sd = (feature.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n).sqrt().max(1e-12);
    let z: Vec<f64> = feature.iter().map(|x| (x - mu) / sd).collect();
    let (mut w0, mut w1) = (0.0, 0.0);
    for _ in 0..50 {
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 1e-6, 0.0, 1e-6);
        for (&x, &y) in z.iter().zip(labels) {
            let p = 1.0 / (1.0 + (-(w0 + w1 * x)).exp());
            let r = p - y as f64;
            g0 += r;
            g1 += r * x;
            let s = p * (1.0 - p);
            h00 += s;
            h01 += s * x;
            h11 += s * x * x;
        }
        // Small ridge keeps the step finite on separable data.
        h00 += 1e-3;
        h11 += 1e-3;
        let det = h00 * h11 - h01 * h01;
        w0 -= (h11 * g0 - h01 * g1) / det;
        w1 -= (h00 * g1 - h01 * g0) / det;
    }
    let scores: Vec<f64> = z.iter().map(|x| w0 + w1 * x).collect();
    crate::harness::compute_auc(&scores, labels)
}

/// Probe AUC on patch-averaged `A(k_s)`.
pub fn shortcut_probe_auc(clips: &[LabeledClip], shortcut_bin: usize) -> Result<f64> {
    let feature = clips
        .iter()
        .map(|c| mean_amplitude_at(&c.clip, shortcut_bin))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = clips.iter().map(|c| c.label).collect();
    logistic_probe_auc(&feature, &labels)
}
