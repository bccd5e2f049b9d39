//! Fixed phase-preserving amplitude attacks.
//!
//! Each attack is a plain record of already-sampled parameters, so a stored
//! [`AttackSpec`] replays exactly without its seed. All of them act on the
//! amplitude only and recompose through [`crate::spectral::recompose`].

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{dft_onesided, FrequencyGrid, OneSidedSpectrum, PatchSignalClip};
use crate::tensor::Matrix;

pub const DEFAULT_EPS0: f64 = 1e-8;
pub const DEFAULT_NOISE_SIGMA: f64 = 0.5;
pub const DEFAULT_TUKEY_ALPHA: f64 = 0.5;
pub const TILT_RANGE: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttackKind {
    Identity,
    Notch,
    RandomBandMask,
    SpectralTilt,
    SnrNoise,
}

impl AttackKind {
    /// The four attacks used for robustness tables.
    pub const SUITE: [AttackKind; 4] = [
        AttackKind::RandomBandMask,
        AttackKind::Notch,
        AttackKind::SpectralTilt,
        AttackKind::SnrNoise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Identity => "identity",
            AttackKind::Notch => "notch",
            AttackKind::RandomBandMask => "band",
            AttackKind::SpectralTilt => "tilt",
            AttackKind::SnrNoise => "noise",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            AttackKind::Identity,
            AttackKind::Notch,
            AttackKind::RandomBandMask,
            AttackKind::SpectralTilt,
            AttackKind::SnrNoise,
        ]
        .into_iter()
        .find(|k| k.name().eq_ignore_ascii_case(s) || format!("{k:?}").eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotchParams {
    pub center_bin: usize,
    pub width_bins: usize,
    #[serde(default)]
    pub floor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Band {
    pub start_bin: usize,
    pub width_bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandMaskParams {
    pub bands: Vec<Band>,
    #[serde(default = "default_tukey_alpha")]
    pub tukey_alpha: f64,
    /// Number of bands drawn before overlapping ones were merged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampled_count: Option<usize>,
}

fn default_tukey_alpha() -> f64 {
    DEFAULT_TUKEY_ALPHA
}

fn default_eps0() -> f64 {
    DEFAULT_EPS0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltParams {
    pub beta1: f64,
    pub beta2: f64,
    #[serde(default = "default_eps0")]
    pub eps0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub sigma: f64,
    #[serde(default = "default_eps0")]
    pub eps0: f64,
    /// Materialized `eta` draws, one per (patch, bin).
    pub per_bin_draws: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum AttackParams {
    Identity,
    Notch(NotchParams),
    RandomBandMask(BandMaskParams),
    SpectralTilt(TiltParams),
    SnrNoise(NoiseParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    #[serde(flatten)]
    pub params: AttackParams,
    /// Seed the parameters were drawn with, if they were drawn at all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl AttackSpec {
    pub fn new(params: AttackParams) -> Self {
        Self { params, seed: None }
    }

    pub fn identity() -> Self {
        Self::new(AttackParams::Identity)
    }

    pub fn notch(center_bin: usize, width_bins: usize, floor: f64) -> Self {
        Self::new(AttackParams::Notch(NotchParams {
            center_bin,
            width_bins,
            floor,
        }))
    }

    pub fn band(bands: &[(usize, usize)], tukey_alpha: f64) -> Self {
        Self::new(AttackParams::RandomBandMask(BandMaskParams {
            bands: bands
                .iter()
                .map(|&(start_bin, width_bins)| Band { start_bin, width_bins })
                .collect(),
            tukey_alpha,
            sampled_count: None,
        }))
    }

    pub fn tilt(beta1: f64, beta2: f64) -> Self {
        Self::new(AttackParams::SpectralTilt(TiltParams {
            beta1,
            beta2,
            eps0: DEFAULT_EPS0,
        }))
    }

    pub fn kind(&self) -> AttackKind {
        match self.params {
            AttackParams::Identity => AttackKind::Identity,
            AttackParams::Notch(_) => AttackKind::Notch,
            AttackParams::RandomBandMask(_) => AttackKind::RandomBandMask,
            AttackParams::SpectralTilt(_) => AttackKind::SpectralTilt,
            AttackParams::SnrNoise(_) => AttackKind::SnrNoise,
        }
    }
}

/// Strength knobs the sampler does not draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSettings {
    pub noise_sigma: f64,
    pub tukey_alpha: f64,
    pub notch_floor: f64,
    pub eps0: f64,
}

impl Default for AttackSettings {
    fn default() -> Self {
        Self {
            noise_sigma: DEFAULT_NOISE_SIGMA,
            tukey_alpha: DEFAULT_TUKEY_ALPHA,
            notch_floor: 0.0,
            eps0: DEFAULT_EPS0,
        }
    }
}

/// Draws an attack with default strengths. `patch_count` sizes the noise
/// field and is ignored by the other kinds.
pub fn sample_attack(kind: AttackKind, grid: FrequencyGrid, patch_count: usize, seed: u64) -> Result<AttackSpec> {
    sample_attack_with(kind, grid, patch_count, seed, &AttackSettings::default())
}

pub fn sample_attack_with(
    kind: AttackKind,
    grid: FrequencyGrid,
    patch_count: usize,
    seed: u64,
    settings: &AttackSettings,
) -> Result<AttackSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k_len = grid.bin_count();
    let params = match kind {
        AttackKind::Identity => AttackParams::Identity,
        AttackKind::Notch => {
            let interior = grid.interior_bins();
            if interior.is_empty() || k_len < 3 {
                return Err(Error::InvalidInput(format!(
                    "notch needs a non-DC, non-Nyquist bin; T = {} has none",
                    grid.frame_count()
                )));
            }
            AttackParams::Notch(NotchParams {
                center_bin: rng.random_range(interior),
                width_bins: rng.random_range(1..=2),
                floor: settings.notch_floor,
            })
        }
        AttackKind::RandomBandMask => {
            if k_len < 3 {
                return Err(Error::InvalidInput(format!(
                    "band mask needs at least 3 bins, T = {} gives {k_len}",
                    grid.frame_count()
                )));
            }
            let count = rng.random_range(1..=3usize);
            let mut bands = Vec::with_capacity(count);
            for _ in 0..count {
                let width = rng.random_range(1..=4usize).min(k_len - 1);
                let start = rng.random_range(1..=k_len - width);
                bands.push(Band {
                    start_bin: start,
                    width_bins: width,
                });
            }
            AttackParams::RandomBandMask(BandMaskParams {
                bands: merge_bands(bands),
                tukey_alpha: settings.tukey_alpha,
                sampled_count: Some(count),
            })
        }
        AttackKind::SpectralTilt => AttackParams::SpectralTilt(TiltParams {
            beta1: rng.random_range(-TILT_RANGE..TILT_RANGE),
            beta2: rng.random_range(-TILT_RANGE..TILT_RANGE),
            eps0: settings.eps0,
        }),
        AttackKind::SnrNoise => {
            if patch_count == 0 {
                return Err(Error::InvalidInput("noise attack needs patch_count >= 1".into()));
            }
            let normal = Normal::new(0.0, settings.noise_sigma)
                .map_err(|e| Error::InvalidInput(format!("noise sigma: {e}")))?;
            let draws = (0..patch_count * k_len).map(|_| normal.sample(&mut rng)).collect();
            AttackParams::SnrNoise(NoiseParams {
                sigma: settings.noise_sigma,
                eps0: settings.eps0,
                per_bin_draws: Matrix::from_vec(patch_count, k_len, draws)?,
            })
        }
    };
    Ok(AttackSpec {
        params,
        seed: Some(seed),
    })
}

/// Sorts bands and merges any that share a bin.
fn merge_bands(mut bands: Vec<Band>) -> Vec<Band> {
    bands.sort_by_key(|b| (b.start_bin, b.width_bins));
    let mut out: Vec<Band> = Vec::with_capacity(bands.len());
    for b in bands {
        match out.last_mut() {
            Some(last) if b.start_bin < last.start_bin + last.width_bins => {
                let end = (last.start_bin + last.width_bins).max(b.start_bin + b.width_bins);
                last.width_bins = end - last.start_bin;
            }
            _ => out.push(b),
        }
    }
    out
}

/// Tukey window sampled at bin centres `(j + 0.5) / len`, so that a
/// one-bin band is fully stopped for any `alpha < 1`.
pub fn tukey_window(len: usize, alpha: f64) -> Vec<f64> {
    (0..len)
        .map(|j| {
            let x = (j as f64 + 0.5) / len as f64;
            if alpha <= 0.0 {
                1.0
            } else if x < alpha / 2.0 {
                0.5 * (1.0 - (2.0 * PI * x / alpha).cos())
            } else if x > 1.0 - alpha / 2.0 {
                0.5 * (1.0 - (2.0 * PI * (1.0 - x) / alpha).cos())
            } else {
                1.0
            }
        })
        .collect()
}

fn notch_mask(p: &NotchParams, grid: FrequencyGrid) -> Result<Vec<f64>> {
    let interior = grid.interior_bins();
    if !interior.contains(&p.center_bin) {
        return Err(Error::InvalidInput(format!(
            "notch centre {} outside non-DC, non-Nyquist bins {interior:?}",
            p.center_bin
        )));
    }
    if !(1..=2).contains(&p.width_bins) {
        return Err(Error::InvalidInput(format!("notch width {} not in {{1, 2}}", p.width_bins)));
    }
    if !(0.0..1.0).contains(&p.floor) {
        return Err(Error::InvalidInput(format!("notch floor {} not in [0, 1)", p.floor)));
    }
    // Raised cosine of half-width w/2 + 1/2 bins: width 1 touches only the
    // centre, width 2 also dips the two neighbours to 0.75.
    let half = p.width_bins as f64 / 2.0 + 0.5;
    let mut mask = vec![1.0; grid.bin_count()];
    for k in interior {
        let d = (k as f64 - p.center_bin as f64).abs();
        if d < half {
            mask[k] = 1.0 - (1.0 - p.floor) * 0.5 * (1.0 + (PI * d / half).cos());
        }
    }
    Ok(mask)
}

fn band_mask(p: &BandMaskParams, grid: FrequencyGrid) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&p.tukey_alpha) {
        return Err(Error::InvalidInput(format!("tukey alpha {} not in [0, 1]", p.tukey_alpha)));
    }
    let k_len = grid.bin_count();
    let mut mask = vec![1.0; k_len];
    for b in &p.bands {
        if b.width_bins == 0 || b.start_bin == 0 || b.start_bin + b.width_bins > k_len {
            return Err(Error::InvalidInput(format!(
                "band at {} of width {} does not fit bins 1..{}",
                b.start_bin,
                b.width_bins,
                k_len - 1
            )));
        }
        for (j, w) in tukey_window(b.width_bins, p.tukey_alpha).into_iter().enumerate() {
            mask[b.start_bin + j] *= 1.0 - w;
        }
    }
    Ok(mask)
}

/// Per-bin multiplicative mask of a mask-shaped attack.
pub fn build_mask(spec: &AttackSpec, grid: FrequencyGrid) -> Result<Vec<f64>> {
    let mut mask = match &spec.params {
        AttackParams::Identity => vec![1.0; grid.bin_count()],
        AttackParams::Notch(p) => notch_mask(p, grid)?,
        AttackParams::RandomBandMask(p) => band_mask(p, grid)?,
        AttackParams::SpectralTilt(_) | AttackParams::SnrNoise(_) => {
            return Err(Error::InvalidInput(format!(
                "{} is not a mask attack; use apply_attack",
                spec.kind().name()
            )))
        }
    };
    mask[0] = 1.0;
    Ok(mask)
}

/// New amplitude for `spectrum` under `spec`.
pub fn attacked_amplitude(spectrum: &OneSidedSpectrum, spec: &AttackSpec) -> Result<Matrix> {
    let grid = spectrum.grid();
    let amp = spectrum.amplitude();
    let (m_len, k_len) = amp.shape();
    let mut out = amp.clone();
    match &spec.params {
        AttackParams::Identity => {}
        AttackParams::Notch(_) | AttackParams::RandomBandMask(_) => {
            let mask = build_mask(spec, grid)?;
            for m in 0..m_len {
                for (a, w) in out.row_mut(m).iter_mut().zip(&mask) {
                    *a *= w;
                }
            }
        }
        AttackParams::SpectralTilt(p) => {
            for m in 0..m_len {
                for (k, a) in out.row_mut(m).iter_mut().enumerate() {
                    let w = grid.omega(k);
                    *a = ((*a + p.eps0).ln() + p.beta1 * w + p.beta2 * w * w).exp();
                }
            }
        }
        AttackParams::SnrNoise(p) => {
            if p.per_bin_draws.shape() != (m_len, k_len) {
                return Err(Error::shape(
                    "SnrNoise draws",
                    format!("{m_len}x{k_len}"),
                    format!("{:?}", p.per_bin_draws.shape()),
                ));
            }
            for (a, eta) in out.as_mut_slice().iter_mut().zip(p.per_bin_draws.as_slice()) {
                *a = ((*a + p.eps0).ln() + eta).exp();
            }
        }
    }
    Ok(out)
}

/// Identity returns the clip untouched rather than a round trip through
/// the DFT, so scores under Identity equal clean scores bit for bit.
pub fn apply_attack(clip: &PatchSignalClip, spec: &AttackSpec) -> Result<PatchSignalClip> {
    if spec.params == AttackParams::Identity {
        return Ok(clip.clone());
    }
    let spectrum = dft_onesided(clip)?;
    apply_to_spectrum(&spectrum, spec)
}

pub fn apply_to_spectrum(spectrum: &OneSidedSpectrum, spec: &AttackSpec) -> Result<PatchSignalClip> {
    let amp = attacked_amplitude(spectrum, spec)?;
    spectrum.with_amplitude(&amp)
}
