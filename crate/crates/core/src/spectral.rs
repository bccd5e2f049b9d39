//! One-sided temporal spectra of patch intensity profiles.
//!
//! Forward transform is unnormalized, `X(k) = sum_t x(t) e^{-j 2 pi k t / T}`;
//! the `1/T` factor lives in the inverse. Only bins `0..=T/2` are kept, the
//! negative half being implied by Hermitian symmetry of a real signal.
//!
//! Every amplitude-only transform in the crate goes through [`recompose`],
//! which keeps the original phase and asserts that the inverse transform is
//! real to within `1e-9` of the largest amplitude.

use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const DEFAULT_FPS: f64 = 25.0;

/// Amplitudes at or below this fraction of a patch's peak amplitude are
/// treated as exact zeros (and get phase 0).
pub const ZERO_AMPLITUDE_REL: f64 = 1e-13;

/// Bound on the discarded imaginary part of an inverse transform, relative
/// to the largest amplitude of the spectrum.
pub const REALNESS_TOL: f64 = 1e-9;

const BOUNDARY_PHASE_TOL: f64 = 1e-12;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_in_place(buf: &mut [Complex<f64>], inverse: bool) {
    let plan = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(buf.len())
        } else {
            p.plan_fft_forward(buf.len())
        }
    });
    plan.process(buf);
}

/// `M x T` patch-mean intensity profiles of one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSignalClip {
    patch_count: usize,
    frame_count: usize,
    fps: f64,
    signals: Vec<f64>,
}

impl PatchSignalClip {
    /// Builds a clip from row-major `patch_count x frame_count` samples.
    pub fn new(patch_count: usize, frame_count: usize, signals: Vec<f64>) -> Result<Self> {
        if patch_count < 1 {
            return Err(Error::InvalidInput("clip needs at least one patch".into()));
        }
        if frame_count < 2 {
            return Err(Error::InvalidInput(format!(
                "clip needs at least two frames, got {frame_count}"
            )));
        }
        if signals.len() != patch_count * frame_count {
            return Err(Error::shape(
                "PatchSignalClip::new",
                patch_count * frame_count,
                signals.len(),
            ));
        }
        if let Some(i) = signals.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "clip signal at patch {}, frame {}",
                i / frame_count,
                i % frame_count
            )));
        }
        Ok(Self {
            patch_count,
            frame_count,
            fps: DEFAULT_FPS,
            signals,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = Matrix::from_rows(rows)?;
        Self::from_matrix(m)
    }

    pub fn from_matrix(m: Matrix) -> Result<Self> {
        let (rows, cols) = m.shape();
        Self::new(rows, cols, m.into_vec())
    }

    pub fn with_fps(mut self, fps: f64) -> Result<Self> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::InvalidInput(format!("fps must be positive, got {fps}")));
        }
        self.fps = fps;
        Ok(self)
    }

    pub fn patch_count(&self) -> usize {
        self.patch_count
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn signals(&self) -> &[f64] {
        &self.signals
    }

    pub fn into_signals(self) -> Vec<f64> {
        self.signals
    }

    pub fn patch(&self, m: usize) -> &[f64] {
        &self.signals[m * self.frame_count..(m + 1) * self.frame_count]
    }

    pub fn value(&self, m: usize, t: usize) -> f64 {
        self.signals[m * self.frame_count + t]
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(self.patch_count, self.frame_count, self.signals.clone())
            .expect("clip shape is consistent")
    }

    pub fn grid(&self) -> FrequencyGrid {
        FrequencyGrid::new(self.frame_count).expect("clip has T >= 2")
    }

    pub fn mean(&self) -> f64 {
        self.signals.iter().sum::<f64>() / self.signals.len() as f64
    }
}

/// Normalized DFT bins `k / T` for `k = 0..=T/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    frame_count: usize,
}

impl FrequencyGrid {
    pub fn new(frame_count: usize) -> Result<Self> {
        if frame_count < 2 {
            return Err(Error::InvalidInput(format!(
                "frequency grid needs T >= 2, got {frame_count}"
            )));
        }
        Ok(Self { frame_count })
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn bin_count(&self) -> usize {
        self.frame_count / 2 + 1
    }

    pub fn omega(&self, k: usize) -> f64 {
        k as f64 / self.frame_count as f64
    }

    pub fn bins(&self) -> Vec<f64> {
        (0..self.bin_count()).map(|k| self.omega(k)).collect()
    }

    /// Index of the Nyquist bin, present only for even `T`.
    pub fn nyquist(&self) -> Option<usize> {
        (self.frame_count % 2 == 0).then_some(self.frame_count / 2)
    }

    /// Bins that are neither DC nor Nyquist.
    pub fn interior_bins(&self) -> std::ops::RangeInclusive<usize> {
        let last = match self.nyquist() {
            Some(n) => n - 1,
            None => self.bin_count() - 1,
        };
        1..=last
    }

    fn is_boundary(&self, k: usize) -> bool {
        k == 0 || Some(k) == self.nyquist()
    }
}

/// Amplitude and phase of a one-sided spectrum, `M x (T/2 + 1)` each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneSidedSpectrum {
    grid: FrequencyGrid,
    fps: f64,
    amplitude: Matrix,
    phase: Matrix,
}

impl OneSidedSpectrum {
    /// Validates shapes, finiteness and non-negativity, and canonicalizes the
    /// phase of zero-amplitude bins to 0. Realness of the DC/Nyquist phase is
    /// checked lazily by [`idft_real`].
    pub fn new(amplitude: Matrix, phase: Matrix, grid: FrequencyGrid) -> Result<Self> {
        if amplitude.shape() != phase.shape() {
            return Err(Error::shape(
                "OneSidedSpectrum",
                format!("{:?}", amplitude.shape()),
                format!("{:?}", phase.shape()),
            ));
        }
        if amplitude.cols() != grid.bin_count() || amplitude.rows() == 0 {
            return Err(Error::shape(
                "OneSidedSpectrum",
                format!("M x {}", grid.bin_count()),
                format!("{:?}", amplitude.shape()),
            ));
        }
        check_amplitude(&amplitude)?;
        if !phase.is_finite() {
            return Err(Error::NonFinite("spectrum phase".into()));
        }
        let mut phase = phase;
        for (p, &a) in phase.as_mut_slice().iter_mut().zip(amplitude.as_slice()) {
            if a == 0.0 {
                *p = 0.0;
            }
        }
        Ok(Self {
            grid,
            fps: DEFAULT_FPS,
            amplitude,
            phase,
        })
    }

    pub fn with_fps(mut self, fps: f64) -> Self {
        self.fps = fps;
        self
    }

    pub fn grid(&self) -> FrequencyGrid {
        self.grid
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn patch_count(&self) -> usize {
        self.amplitude.rows()
    }

    pub fn amplitude(&self) -> &Matrix {
        &self.amplitude
    }

    pub fn phase(&self) -> &Matrix {
        &self.phase
    }

    /// Recomposes with a new amplitude and this spectrum's phase.
    pub fn with_amplitude(&self, amplitude: &Matrix) -> Result<PatchSignalClip> {
        recompose(amplitude, &self.phase, self.grid)?.with_fps(self.fps)
    }
}

fn check_amplitude(amplitude: &Matrix) -> Result<()> {
    let cols = amplitude.cols();
    for (i, &a) in amplitude.as_slice().iter().enumerate() {
        if !a.is_finite() {
            return Err(Error::NonFinite(format!(
                "amplitude at patch {}, bin {}",
                i / cols,
                i % cols
            )));
        }
        if a < 0.0 {
            return Err(Error::NegativeAmplitude {
                patch: i / cols,
                bin: i % cols,
                value: a,
            });
        }
    }
    Ok(())
}

/// One-sided DFT of every patch profile.
pub fn dft_onesided(clip: &PatchSignalClip) -> Result<OneSidedSpectrum> {
    if let Some(i) = clip.signals().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("clip sample {i}")));
    }
    let grid = clip.grid();
    let t_len = clip.frame_count();
    let k_len = grid.bin_count();
    let m_len = clip.patch_count();
    let mut amplitude = Matrix::zeros(m_len, k_len);
    let mut phase = Matrix::zeros(m_len, k_len);
    let mut buf = vec![Complex::new(0.0, 0.0); t_len];

    for m in 0..m_len {
        for (b, &x) in buf.iter_mut().zip(clip.patch(m)) {
            *b = Complex::new(x, 0.0);
        }
        fft_in_place(&mut buf, false);
        let peak = buf[..k_len].iter().fold(0.0_f64, |p, z| p.max(z.norm()));
        let floor = peak * ZERO_AMPLITUDE_REL;
        for k in 0..k_len {
            let z = buf[k];
            let a = z.norm();
            if a <= floor {
                continue;
            }
            let p = if grid.is_boundary(k) {
                // Real by construction; the imaginary part is rounding.
                if z.re >= 0.0 {
                    0.0
                } else {
                    PI
                }
            } else {
                z.im.atan2(z.re)
            };
            amplitude.set(m, k, a);
            // atan2 yields [-pi, pi]; fold -pi onto pi.
            phase.set(m, k, if p <= -PI { PI } else { p });
        }
    }
    Ok(OneSidedSpectrum::new(amplitude, phase, grid)?.with_fps(clip.fps()))
}

/// Inverse of [`dft_onesided`]: conjugate-mirrors the one-sided spectrum,
/// applies the `1/T` inverse DFT and returns the real part after checking
/// that the imaginary residual is negligible.
pub fn idft_real(spectrum: &OneSidedSpectrum) -> Result<PatchSignalClip> {
    let grid = spectrum.grid();
    let t_len = grid.frame_count();
    let k_len = grid.bin_count();
    let amp = spectrum.amplitude();
    let ph = spectrum.phase();
    let m_len = amp.rows();

    for m in 0..m_len {
        for k in [Some(0), grid.nyquist()].into_iter().flatten() {
            let p = ph.get(m, k);
            if amp.get(m, k) > 0.0 && p.sin().abs() > BOUNDARY_PHASE_TOL {
                return Err(Error::Realness(format!(
                    "phase {p} at boundary bin {k} of patch {m} must be 0 or pi"
                )));
            }
        }
    }

    let max_amp = amp.max_abs();
    let tol = REALNESS_TOL * max_amp;
    let scale = 1.0 / t_len as f64;
    let mut out = Vec::with_capacity(m_len * t_len);
    let mut buf = vec![Complex::new(0.0, 0.0); t_len];
    for m in 0..m_len {
        buf.fill(Complex::new(0.0, 0.0));
        for k in 0..k_len {
            let z = Complex::from_polar(amp.get(m, k), ph.get(m, k));
            buf[k] = z;
            if k != 0 && Some(k) != grid.nyquist() {
                buf[t_len - k] = z.conj();
            }
        }
        fft_in_place(&mut buf, true);
        for z in &buf {
            let im = z.im * scale;
            if im.abs() > tol {
                return Err(Error::Realness(format!(
                    "imaginary residual {im:e} exceeds {tol:e} in patch {m}"
                )));
            }
            out.push(z.re * scale);
        }
    }
    PatchSignalClip::new(m_len, t_len, out)?.with_fps(spectrum.fps())
}

/// Per-clip min-max normalization of the amplitude, jointly over patches and
/// bins. A constant amplitude maps to all zeros.
pub fn minmax_normalize_amplitude(spectrum: &OneSidedSpectrum) -> Matrix {
    let a = spectrum.amplitude();
    let (lo, hi) = a
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if range <= 0.0 {
        return Matrix::zeros(a.rows(), a.cols());
    }
    a.map(|v| (v - lo) / range)
}

/// Builds the spectrum `amplitude * e^{j phase}` and inverts it. This is the
/// single path by which attacks and the adversary produce time-domain clips.
pub fn recompose(amplitude: &Matrix, phase: &Matrix, grid: FrequencyGrid) -> Result<PatchSignalClip> {
    let spectrum = OneSidedSpectrum::new(amplitude.clone(), phase.clone(), grid)?;
    idft_real(&spectrum)
}

/// Real-valued synthesis basis used by differentiable recomposition.
///
/// For a patch with amplitude row `a` and phase row `p`,
/// `x = (a .* cos p) * cos_basis - (a .* sin p) * sin_basis` reproduces
/// [`recompose`]. Both bases are `(T/2 + 1) x T`.
#[derive(Debug, Clone)]
pub struct SynthesisBasis {
    pub cos_basis: Matrix,
    pub sin_basis: Matrix,
}

impl SynthesisBasis {
    pub fn new(grid: FrequencyGrid) -> Self {
        let t_len = grid.frame_count();
        let k_len = grid.bin_count();
        let mut cos_basis = Matrix::zeros(k_len, t_len);
        let mut sin_basis = Matrix::zeros(k_len, t_len);
        for k in 0..k_len {
            let weight = if grid.is_boundary(k) { 1.0 } else { 2.0 } / t_len as f64;
            for t in 0..t_len {
                let arg = 2.0 * PI * (k * t % t_len) as f64 / t_len as f64;
                cos_basis.set(k, t, weight * arg.cos());
                sin_basis.set(k, t, weight * arg.sin());
            }
        }
        Self {
            cos_basis,
            sin_basis,
        }
    }
}

/// Rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// Tiling of a region of interest into `rows x cols` patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGridSpec {
    pub rows: usize,
    pub cols: usize,
    pub roi: Roi,
}

impl PatchGridSpec {
    pub fn patch_count(&self) -> usize {
        self.rows * self.cols
    }
}

/// A short video as a `T x H x W x C` tensor, `C` in {1, 3}.
#[derive(Debug, Clone)]
pub struct Frames {
    frame_count: usize,
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Frames {
    pub fn new(frame_count: usize, height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!(
                "frames must be grayscale or RGB, got {channels} channels"
            )));
        }
        if data.len() != frame_count * height * width * channels {
            return Err(Error::shape(
                "Frames::new",
                frame_count * height * width * channels,
                data.len(),
            ));
        }
        Ok(Self {
            frame_count,
            height,
            width,
            channels,
            data,
        })
    }

    pub fn grayscale(frame_count: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(frame_count, height, width, 1, data)
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Luminance at `(t, y, x)`; RGB uses 0.299 R + 0.587 G + 0.114 B.
    pub fn luminance(&self, t: usize, y: usize, x: usize) -> f64 {
        let base = ((t * self.height + y) * self.width + x) * self.channels;
        if self.channels == 1 {
            self.data[base]
        } else {
            0.299 * self.data[base] + 0.587 * self.data[base + 1] + 0.114 * self.data[base + 2]
        }
    }
}

/// Splits `[start, start + len)` into `parts` contiguous spans; the last span
/// absorbs the remainder.
fn tile_spans(start: usize, len: usize, parts: usize) -> Vec<(usize, usize)> {
    let step = len / parts;
    (0..parts)
        .map(|i| {
            let lo = start + i * step;
            let hi = if i + 1 == parts { start + len } else { lo + step };
            (lo, hi)
        })
        .collect()
}

/// Mean luminance of each patch at each frame.
pub fn extract_patch_signals(frames: &Frames, grid: &PatchGridSpec) -> Result<PatchSignalClip> {
    let roi = grid.roi;
    if grid.rows == 0 || grid.cols == 0 {
        return Err(Error::InvalidInput("patch grid must have at least one row and column".into()));
    }
    if roi.x + roi.width > frames.width || roi.y + roi.height > frames.height {
        return Err(Error::InvalidInput(format!(
            "roi {}x{} at ({}, {}) exceeds {}x{} frame",
            roi.width, roi.height, roi.x, roi.y, frames.width, frames.height
        )));
    }
    if roi.width < grid.cols || roi.height < grid.rows {
        return Err(Error::InvalidInput(format!(
            "roi {}x{} is too small for a {}x{} patch grid (empty patch)",
            roi.width, roi.height, grid.rows, grid.cols
        )));
    }
    let row_spans = tile_spans(roi.y, roi.height, grid.rows);
    let col_spans = tile_spans(roi.x, roi.width, grid.cols);
    let t_len = frames.frame_count;
    let mut signals = vec![0.0; grid.patch_count() * t_len];
    for (r, &(y0, y1)) in row_spans.iter().enumerate() {
        for (c, &(x0, x1)) in col_spans.iter().enumerate() {
            let m = r * grid.cols + c;
            let count = ((y1 - y0) * (x1 - x0)) as f64;
            for t in 0..t_len {
                let mut acc = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        acc += frames.luminance(t, y, x);
                    }
                }
                signals[m * t_len + t] = acc / count;
            }
        }
    }
    PatchSignalClip::new(grid.patch_count(), t_len, signals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_clip(rng: &mut ChaCha8Rng, m: usize, t: usize) -> PatchSignalClip {
        let data = (0..m * t).map(|_| rng.random_range(-1.0..1.0)).collect();
        PatchSignalClip::new(m, t, data).unwrap()
    }

    /// O(T^2) direct summation, independent of the FFT path.
    fn direct_dft(x: &[f64]) -> Vec<(f64, f64)> {
        let n = x.len();
        (0..=n / 2)
            .map(|k| {
                x.iter().enumerate().fold((0.0, 0.0), |(re, im), (t, &v)| {
                    let arg = -2.0 * PI * (k * t) as f64 / n as f64;
                    (re + v * arg.cos(), im + v * arg.sin())
                })
            })
            .collect()
    }

    #[test]
    fn constant_signal_concentrates_at_dc() {
        let clip = PatchSignalClip::new(1, 4, vec![1.0; 4]).unwrap();
        let s = dft_onesided(&clip).unwrap();
        assert_eq!(s.amplitude().as_slice(), &[4.0, 0.0, 0.0]);
        assert_eq!(s.phase().as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn unit_cosine_lands_in_one_bin() {
        let x: Vec<f64> = (0..4).map(|t| (2.0 * PI * t as f64 / 4.0).cos()).collect();
        let s = dft_onesided(&PatchSignalClip::new(1, 4, x).unwrap()).unwrap();
        let a = s.amplitude().as_slice();
        assert_eq!(a[0], 0.0);
        assert!((a[1] - 2.0).abs() < 1e-12);
        assert_eq!(a[2], 0.0);
        assert!(s.phase().get(0, 1).abs() < 1e-12);
    }

    #[test]
    fn fft_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let clip = random_clip(&mut rng, 3, 16);
        let s = dft_onesided(&clip).unwrap();
        for m in 0..3 {
            for (k, (re, im)) in direct_dft(clip.patch(m)).into_iter().enumerate() {
                let a = (re * re + im * im).sqrt();
                assert!((s.amplitude().get(m, k) - a).abs() <= 1e-10 * a.max(1.0));
                let z = Complex::from_polar(s.amplitude().get(m, k), s.phase().get(m, k));
                assert!((z.re - re).abs() < 1e-10 * a.max(1.0));
                assert!((z.im - im).abs() < 1e-10 * a.max(1.0));
            }
        }
    }

    #[test]
    fn dc_only_spectrum_inverts_to_constant() {
        let grid = FrequencyGrid::new(4).unwrap();
        let a = Matrix::row_vector(vec![4.0, 0.0, 0.0]);
        let p = Matrix::zeros(1, 3);
        let clip = recompose(&a, &p, grid).unwrap();
        for &v in clip.signals() {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn round_trip_random_clips() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..100 {
            let t = [8, 16, 17][i % 3];
            let clip = random_clip(&mut rng, 1 + i % 4, t);
            let back = idft_real(&dft_onesided(&clip).unwrap()).unwrap();
            for (a, b) in clip.signals().iter().zip(back.signals()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn boundary_phase_must_be_real() {
        let grid = FrequencyGrid::new(4).unwrap();
        let a = Matrix::row_vector(vec![1.0, 1.0, 1.0]);
        let bad_dc = Matrix::row_vector(vec![0.3, 0.0, 0.0]);
        assert!(matches!(recompose(&a, &bad_dc, grid), Err(Error::Realness(_))));
        let bad_nyq = Matrix::row_vector(vec![0.0, 0.0, 1.0]);
        assert!(matches!(recompose(&a, &bad_nyq, grid), Err(Error::Realness(_))));
        let ok = Matrix::row_vector(vec![PI, 0.4, 0.0]);
        assert!(recompose(&a, &ok, grid).is_ok());
    }

    #[test]
    fn odd_length_has_no_nyquist() {
        let grid = FrequencyGrid::new(17).unwrap();
        assert_eq!(grid.bin_count(), 9);
        assert_eq!(grid.nyquist(), None);
        assert_eq!(grid.interior_bins(), 1..=8);
        let g16 = FrequencyGrid::new(16).unwrap();
        assert_eq!(g16.interior_bins(), 1..=7);
        assert_eq!(*g16.bins().last().unwrap(), 0.5);
    }

    #[test]
    fn minmax_examples() {
        let grid = FrequencyGrid::new(4).unwrap();
        let s = OneSidedSpectrum::new(Matrix::row_vector(vec![0.0, 2.0, 4.0]), Matrix::zeros(1, 3), grid).unwrap();
        assert_eq!(minmax_normalize_amplitude(&s).as_slice(), &[0.0, 0.5, 1.0]);
        let c = OneSidedSpectrum::new(Matrix::filled(2, 3, 3.0), Matrix::zeros(2, 3), grid).unwrap();
        assert!(minmax_normalize_amplitude(&c).as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn minmax_preserves_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = dft_onesided(&random_clip(&mut rng, 4, 16)).unwrap();
        let n = minmax_normalize_amplitude(&s);
        let (a, b) = (s.amplitude().as_slice(), n.as_slice());
        assert_eq!(b.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
        assert_eq!(b.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.0);
        for i in 0..a.len() {
            for j in 0..a.len() {
                if a[i] < a[j] {
                    assert!(b[i] <= b[j]);
                }
            }
        }
    }

    #[test]
    fn recompose_rejects_negative_amplitude() {
        let grid = FrequencyGrid::new(4).unwrap();
        let a = Matrix::row_vector(vec![1.0, -0.5, 0.0]);
        assert!(matches!(
            recompose(&a, &Matrix::zeros(1, 3), grid),
            Err(Error::NegativeAmplitude { bin: 1, .. })
        ));
    }

    #[test]
    fn zero_spectrum_gives_zero_clip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = dft_onesided(&random_clip(&mut rng, 2, 16)).unwrap();
        let zero = s.amplitude().map(|_| 0.0);
        let clip = s.with_amplitude(&zero).unwrap();
        assert!(clip.signals().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn synthesis_basis_matches_recompose() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for t in [16, 17] {
            let clip = random_clip(&mut rng, 3, t);
            let s = dft_onesided(&clip).unwrap();
            let basis = SynthesisBasis::new(s.grid());
            let re = s.amplitude().zip_map(s.phase(), |a, p| a * p.cos());
            let im = s.amplitude().zip_map(s.phase(), |a, p| a * p.sin());
            let x = re.matmul(&basis.cos_basis).unwrap();
            let y = im.matmul(&basis.sin_basis).unwrap();
            for (i, &v) in clip.signals().iter().enumerate() {
                assert!((x.as_slice()[i] - y.as_slice()[i] - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn patch_extraction_examples() {
        let (t, h, w) = (5, 8, 8);
        let white = Frames::grayscale(t, h, w, vec![1.0; t * h * w]).unwrap();
        let grid = PatchGridSpec {
            rows: 3,
            cols: 2,
            roi: Roi { x: 1, y: 0, width: 7, height: 8 },
        };
        let clip = extract_patch_signals(&white, &grid).unwrap();
        assert!(clip.signals().iter().all(|&v| (v - 1.0).abs() < 1e-15));

        let ramp: Vec<f64> = (0..t).flat_map(|i| vec![i as f64 / t as f64; h * w]).collect();
        let frames = Frames::grayscale(t, h, w, ramp).unwrap();
        let g2 = PatchGridSpec {
            rows: 2,
            cols: 2,
            roi: Roi { x: 0, y: 0, width: 8, height: 8 },
        };
        let clip = extract_patch_signals(&frames, &g2).unwrap();
        for m in 0..4 {
            for (i, &v) in clip.patch(m).iter().enumerate() {
                assert!((v - i as f64 / t as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn patch_extraction_matches_pixel_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (t, h, w) = (16, 32, 32);
        let data: Vec<f64> = (0..t * h * w).map(|_| rng.random::<f64>()).collect();
        let frames = Frames::grayscale(t, h, w, data.clone()).unwrap();
        let grid = PatchGridSpec {
            rows: 4,
            cols: 4,
            roi: Roi { x: 0, y: 0, width: 32, height: 32 },
        };
        let clip = extract_patch_signals(&frames, &grid).unwrap();
        for pr in 0..4 {
            for pc in 0..4 {
                for ti in 0..t {
                    let mut acc = 0.0;
                    for y in pr * 8..pr * 8 + 8 {
                        for x in pc * 8..pc * 8 + 8 {
                            acc += data[(ti * h + y) * w + x];
                        }
                    }
                    assert!((clip.value(pr * 4 + pc, ti) - acc / 64.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn patch_extraction_remainder_and_errors() {
        let frames = Frames::grayscale(2, 5, 5, (0..50).map(|v| v as f64).collect()).unwrap();
        let grid = PatchGridSpec {
            rows: 2,
            cols: 2,
            roi: Roi { x: 0, y: 0, width: 5, height: 5 },
        };
        // Last row/column patches span 3 pixels.
        let clip = extract_patch_signals(&frames, &grid).unwrap();
        let expected: f64 = [12.0, 13.0, 14.0, 17.0, 18.0, 19.0, 22.0, 23.0, 24.0].iter().sum::<f64>() / 9.0;
        assert!((clip.value(3, 0) - expected).abs() < 1e-12);

        let oob = PatchGridSpec {
            roi: Roi { x: 2, y: 0, width: 5, height: 5 },
            ..grid
        };
        assert!(extract_patch_signals(&frames, &oob).is_err());
        let tiny = PatchGridSpec {
            rows: 3,
            cols: 3,
            roi: Roi { x: 0, y: 0, width: 2, height: 5 },
        };
        let err = extract_patch_signals(&frames, &tiny).unwrap_err().to_string();
        assert!(err.contains("empty patch"));

        let rgb = Frames::new(2, 1, 1, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let g1 = PatchGridSpec {
            rows: 1,
            cols: 1,
            roi: Roi { x: 0, y: 0, width: 1, height: 1 },
        };
        let c = extract_patch_signals(&rgb, &g1).unwrap();
        assert_eq!(c.signals(), &[0.299, 0.587]);
    }

    #[test]
    fn clip_validation() {
        assert!(PatchSignalClip::new(1, 1, vec![0.0]).is_err());
        assert!(PatchSignalClip::new(0, 4, vec![]).is_err());
        assert!(matches!(
            PatchSignalClip::new(1, 2, vec![0.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
    }
}
