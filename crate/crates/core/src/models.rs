//! Toy Siamese detector and the learnable spectral adversary.
//!
//! One [`ModelBundle`] holds every parameter: encoder `f`, head `g`, domain
//! discriminator `q` and generator `G`. Graph builders bind the parameters
//! onto a [`Tape`] either as trainable leaves or as constants, which is how
//! the alternating steps keep the other player frozen.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax_rows, Tape, Var};
use crate::error::{Error, Result};
use crate::spectral::{
    minmax_normalize_amplitude, FrequencyGrid, OneSidedSpectrum, PatchSignalClip, SynthesisBasis,
};
use crate::tensor::Matrix;

pub const DEFAULT_ALPHA: f64 = 0.6;
pub const DEFAULT_DELTA: f64 = 1e-8;
pub const STANDARDIZE_EPS: f64 = 1e-8;
const CHECKPOINT_MAGIC: &[u8; 4] = b"SPCK";

/// Architecture sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub patch_count: usize,
    pub frame_count: usize,
    pub hidden: usize,
    pub feature: usize,
    pub disc_hidden: usize,
    pub gen_hidden: usize,
}

impl Dims {
    pub fn new(patch_count: usize, frame_count: usize) -> Self {
        Self {
            patch_count,
            frame_count,
            hidden: 64,
            feature: 32,
            disc_hidden: 16,
            gen_hidden: 32,
        }
    }

    pub fn input_width(&self) -> usize {
        self.patch_count * self.frame_count
    }

    pub fn bin_count(&self) -> usize {
        self.frame_count / 2 + 1
    }

    pub fn grid(&self) -> FrequencyGrid {
        FrequencyGrid::new(self.frame_count).expect("T >= 2")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: Matrix,
    pub b: Matrix,
}

impl Linear {
    /// Uniform `+-1/sqrt(fan_in)` weights, zero bias.
    pub fn init(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
        Self {
            w: Matrix::from_vec(fan_in, fan_out, data).expect("sized"),
            b: Matrix::zeros(1, fan_out),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            w: Matrix::zeros(fan_in, fan_out),
            b: Matrix::zeros(1, fan_out),
        }
    }
}

/// `in -> hidden (tanh) -> out (linear)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub l1: Linear,
    pub l2: Linear,
}

impl Mlp {
    pub fn init(rng: &mut ChaCha8Rng, input: usize, hidden: usize, output: usize) -> Self {
        Self {
            l1: Linear::init(rng, input, hidden),
            l2: Linear::init(rng, hidden, output),
        }
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            l1: Linear::zeros(input, hidden),
            l2: Linear::zeros(hidden, output),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub dims: Dims,
    pub alpha: f64,
    pub delta: f64,
    pub encoder: Mlp,
    pub head: Linear,
    pub disc: Mlp,
    pub generator: Mlp,
}

impl ModelBundle {
    pub fn init(dims: Dims, alpha: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = dims.bin_count();
        Self {
            dims,
            alpha,
            delta: DEFAULT_DELTA,
            encoder: Mlp::init(&mut rng, dims.input_width(), dims.hidden, dims.feature),
            head: Linear::init(&mut rng, dims.feature, 2),
            disc: Mlp::init(&mut rng, dims.feature, dims.disc_hidden, 2),
            generator: Mlp::init(&mut rng, k, dims.gen_hidden, k),
        }
    }

    /// Detector-side tensors in a fixed order: encoder, head, discriminator.
    pub fn detector_tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let ModelBundle { encoder, head, disc, .. } = self;
        vec![
            &mut encoder.l1.w,
            &mut encoder.l1.b,
            &mut encoder.l2.w,
            &mut encoder.l2.b,
            &mut head.w,
            &mut head.b,
            &mut disc.l1.w,
            &mut disc.l1.b,
            &mut disc.l2.w,
            &mut disc.l2.b,
        ]
    }

    pub fn generator_tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let g = &mut self.generator;
        vec![&mut g.l1.w, &mut g.l1.b, &mut g.l2.w, &mut g.l2.b]
    }

    fn named_tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("encoder.l1.w", &self.encoder.l1.w),
            ("encoder.l1.b", &self.encoder.l1.b),
            ("encoder.l2.w", &self.encoder.l2.w),
            ("encoder.l2.b", &self.encoder.l2.b),
            ("head.w", &self.head.w),
            ("head.b", &self.head.b),
            ("disc.l1.w", &self.disc.l1.w),
            ("disc.l1.b", &self.disc.l1.b),
            ("disc.l2.w", &self.disc.l2.w),
            ("disc.l2.b", &self.disc.l2.b),
            ("generator.l1.w", &self.generator.l1.w),
            ("generator.l1.b", &self.generator.l1.b),
            ("generator.l2.w", &self.generator.l2.w),
            ("generator.l2.b", &self.generator.l2.b),
        ]
    }

    fn expected_shapes(dims: &Dims) -> Vec<(usize, usize)> {
        let (i, h, d, q, k, gh) = (
            dims.input_width(),
            dims.hidden,
            dims.feature,
            dims.disc_hidden,
            dims.bin_count(),
            dims.gen_hidden,
        );
        vec![
            (i, h),
            (1, h),
            (h, d),
            (1, d),
            (d, 2),
            (1, 2),
            (d, q),
            (1, q),
            (q, 2),
            (1, 2),
            (k, gh),
            (1, gh),
            (gh, k),
            (1, k),
        ]
    }

    /// Bitwise fingerprint of every parameter, for determinism checks.
    pub fn parameter_bits(&self) -> Vec<u64> {
        self.named_tensors()
            .into_iter()
            .flat_map(|(_, m)| m.as_slice().iter().map(|v| v.to_bits()))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, m)| m.is_finite())
    }

    /// Writes `SPCK`, a little-endian `u64` header length, the JSON header
    /// and then every tensor as little-endian `f64` in header order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut offset = 0;
        let tensors: Vec<TensorEntry> = self
            .named_tensors()
            .into_iter()
            .map(|(name, m)| {
                let e = TensorEntry {
                    name: name.to_string(),
                    rows: m.rows(),
                    cols: m.cols(),
                    offset,
                };
                offset += m.len();
                e
            })
            .collect();
        let header = CheckpointHeader {
            dims: self.dims,
            alpha: self.alpha,
            delta: self.delta,
            tensors,
        };
        let json = serde_json::to_vec(&header)?;
        let mut buf = Vec::with_capacity(12 + json.len() + 8 * offset);
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);
        for (_, m) in self.named_tensors() {
            for v in m.as_slice() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        if bytes.len() < 12 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint(format!("{}: missing SPCK header", path.display())));
        }
        let hlen = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
        let body = bytes
            .get(12..12 + hlen)
            .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
        let header: CheckpointHeader = serde_json::from_slice(body)?;
        let blob = &bytes[12 + hlen..];

        let expected = Self::expected_shapes(&header.dims);
        if header.tensors.len() != expected.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                header.tensors.len()
            )));
        }
        let mut mats = Vec::with_capacity(expected.len());
        for (entry, &(r, c)) in header.tensors.iter().zip(&expected) {
            if (entry.rows, entry.cols) != (r, c) {
                return Err(Error::Checkpoint(format!(
                    "tensor {} is {}x{}, dims require {r}x{c}",
                    entry.name, entry.rows, entry.cols
                )));
            }
            let start = 8 * entry.offset;
            let end = start + 8 * r * c;
            let raw = blob
                .get(start..end)
                .ok_or_else(|| Error::Checkpoint(format!("blob too short for tensor {}", entry.name)))?;
            let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
            mats.push(Matrix::from_vec(r, c, data)?);
        }
        let mut it = mats.into_iter();
        let mut next = || it.next().expect("count checked");
        let mut linear = || Linear { w: next(), b: next() };
        let encoder = Mlp { l1: linear(), l2: linear() };
        let head = linear();
        let disc = Mlp { l1: linear(), l2: linear() };
        let generator = Mlp { l1: linear(), l2: linear() };
        Ok(Self {
            dims: header.dims,
            alpha: header.alpha,
            delta: header.delta,
            encoder,
            head,
            disc,
            generator,
        })
    }

    /// Loads a checkpoint and rejects it unless its architecture is `dims`.
    pub fn load_expecting(path: &Path, dims: &Dims) -> Result<Self> {
        let b = Self::load(path)?;
        if b.dims != *dims {
            return Err(Error::Checkpoint(format!(
                "checkpoint dims {:?} do not match expected {:?}",
                b.dims, dims
            )));
        }
        Ok(b)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    dims: Dims,
    alpha: f64,
    delta: f64,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, Copy)]
pub struct LinearVars {
    pub w: Var,
    pub b: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct MlpVars {
    pub l1: LinearVars,
    pub l2: LinearVars,
}

pub fn bind_linear(t: &mut Tape, l: &Linear, trainable: bool) -> LinearVars {
    let mut leaf = |m: &Matrix| if trainable { t.param(m.clone()) } else { t.constant(m.clone()) };
    LinearVars { w: leaf(&l.w), b: leaf(&l.b) }
}

pub fn bind_mlp(t: &mut Tape, m: &Mlp, trainable: bool) -> MlpVars {
    MlpVars {
        l1: bind_linear(t, &m.l1, trainable),
        l2: bind_linear(t, &m.l2, trainable),
    }
}

impl MlpVars {
    pub fn vars(&self) -> [Var; 4] {
        [self.l1.w, self.l1.b, self.l2.w, self.l2.b]
    }
}

pub fn linear_forward(t: &mut Tape, l: &LinearVars, x: Var) -> Result<Var> {
    let z = t.matmul(x, l.w)?;
    t.add_row(z, l.b)
}

pub fn mlp_forward(t: &mut Tape, m: &MlpVars, x: Var) -> Result<Var> {
    let z = linear_forward(t, &m.l1, x)?;
    let a = t.tanh(z);
    linear_forward(t, &m.l2, a)
}

/// Every detector parameter bound on one tape.
#[derive(Debug, Clone, Copy)]
pub struct DetectorVars {
    pub encoder: MlpVars,
    pub head: LinearVars,
    pub disc: MlpVars,
}

impl DetectorVars {
    pub fn bind(t: &mut Tape, b: &ModelBundle, trainable: bool) -> Self {
        Self {
            encoder: bind_mlp(t, &b.encoder, trainable),
            head: bind_linear(t, &b.head, trainable),
            disc: bind_mlp(t, &b.disc, trainable),
        }
    }

    /// Same order as [`ModelBundle::detector_tensors_mut`].
    pub fn vars(&self) -> [Var; 10] {
        let [a, b, c, d] = self.encoder.vars();
        let [e, f, g, h] = self.disc.vars();
        [a, b, c, d, self.head.w, self.head.b, e, f, g, h]
    }
}

/// Features `h = tanh(f(standardize(x)))` for a `B x (M*T)` batch. The same
/// bound encoder serves both Siamese views.
pub fn encode_graph(t: &mut Tape, enc: &MlpVars, x: Var) -> Result<Var> {
    let z = t.standardize_rows(x, STANDARDIZE_EPS);
    let out = mlp_forward(t, enc, z)?;
    Ok(t.tanh(out))
}

pub fn head_graph(t: &mut Tape, head: &LinearVars, h: Var) -> Result<Var> {
    linear_forward(t, head, h)
}

/// Domain logits `q(h)`, routed through a gradient reversal when asked.
pub fn discriminate_graph(t: &mut Tape, disc: &MlpVars, h: Var, through_grl: bool) -> Result<Var> {
    let h = if through_grl { t.grl(h) } else { h };
    mlp_forward(t, disc, h)
}

/// Stacks clips into a `B x (M*T)` matrix.
pub fn clips_matrix(clips: &[&PatchSignalClip]) -> Result<Matrix> {
    let width = clips.first().map_or(0, |c| c.signals().len());
    let mut data = Vec::with_capacity(width * clips.len());
    for c in clips {
        if c.signals().len() != width {
            return Err(Error::shape("clips_matrix", width, c.signals().len()));
        }
        data.extend_from_slice(c.signals());
    }
    Matrix::from_vec(clips.len(), width, data)
}

fn check_clip(b: &ModelBundle, clip: &PatchSignalClip) -> Result<()> {
    if (clip.patch_count(), clip.frame_count()) != (b.dims.patch_count, b.dims.frame_count) {
        return Err(Error::shape(
            "encode",
            format!("{}x{}", b.dims.patch_count, b.dims.frame_count),
            format!("{}x{}", clip.patch_count(), clip.frame_count()),
        ));
    }
    Ok(())
}

/// Features of a batch of clips, `B x D`.
pub fn encode_batch(b: &ModelBundle, clips: &[&PatchSignalClip]) -> Result<Matrix> {
    for c in clips {
        check_clip(b, c)?;
    }
    let mut t = Tape::new();
    let enc = bind_mlp(&mut t, &b.encoder, false);
    let x = t.constant(clips_matrix(clips)?);
    let h = encode_graph(&mut t, &enc, x)?;
    Ok(t.value(h).clone())
}

pub fn encode(b: &ModelBundle, clip: &PatchSignalClip) -> Result<Vec<f64>> {
    Ok(encode_batch(b, &[clip])?.into_vec())
}

/// `softmax(g(h))` over {real, fake}.
pub fn classify(b: &ModelBundle, h: &[f64]) -> Result<[f64; 2]> {
    let mut t = Tape::new();
    let head = bind_linear(&mut t, &b.head, false);
    let hv = t.constant(Matrix::row_vector(h.to_vec()));
    let z = head_graph(&mut t, &head, hv)?;
    let p = softmax_rows(t.value(z));
    Ok([p.get(0, 0), p.get(0, 1)])
}

/// `softmax(q(h))` over {clean, env}. GRL does not change the forward value.
pub fn discriminate_domain(b: &ModelBundle, h: &[f64], through_grl: bool) -> Result<[f64; 2]> {
    let mut t = Tape::new();
    let disc = bind_mlp(&mut t, &b.disc, false);
    let hv = t.constant(Matrix::row_vector(h.to_vec()));
    let z = discriminate_graph(&mut t, &disc, hv, through_grl)?;
    let p = softmax_rows(t.value(z));
    Ok([p.get(0, 0), p.get(0, 1)])
}

/// Probability of "fake" for each clip, single-stream (clean view only).
pub fn score_batch(b: &ModelBundle, clips: &[&PatchSignalClip]) -> Result<Vec<f64>> {
    if clips.is_empty() {
        return Ok(Vec::new());
    }
    let h = encode_batch(b, clips)?;
    let mut t = Tape::new();
    let head = bind_linear(&mut t, &b.head, false);
    let hv = t.constant(h);
    let z = head_graph(&mut t, &head, hv)?;
    let p = softmax_rows(t.value(z));
    Ok((0..p.rows()).map(|r| p.get(r, 1)).collect())
}

/// Multiplicative modulation `A_hat / (A + delta)`, `M x K` per clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationMask {
    pub mask: Matrix,
    pub delta: f64,
}

/// Per-clip spectral inputs of the generator, stacked patch-major so a batch
/// of `B` clips is `B*M` rows of `K` bins.
#[derive(Debug, Clone)]
pub struct SpectralBatch {
    pub clips: usize,
    pub patch_count: usize,
    pub amplitude: Matrix,
    pub cos_phase: Matrix,
    pub sin_phase: Matrix,
    pub normalized: Matrix,
}

impl SpectralBatch {
    pub fn from_spectra(spectra: &[&OneSidedSpectrum]) -> Result<Self> {
        let first = spectra
            .first()
            .ok_or_else(|| Error::InvalidInput("empty spectral batch".into()))?;
        let (m_len, k_len) = first.amplitude().shape();
        let rows = spectra.len() * m_len;
        let mut amp = Vec::with_capacity(rows * k_len);
        let mut cos = Vec::with_capacity(rows * k_len);
        let mut sin = Vec::with_capacity(rows * k_len);
        let mut norm = Vec::with_capacity(rows * k_len);
        for s in spectra {
            if s.amplitude().shape() != (m_len, k_len) {
                return Err(Error::shape(
                    "SpectralBatch",
                    format!("{m_len}x{k_len}"),
                    format!("{:?}", s.amplitude().shape()),
                ));
            }
            amp.extend_from_slice(s.amplitude().as_slice());
            cos.extend(s.phase().as_slice().iter().map(|p| p.cos()));
            sin.extend(s.phase().as_slice().iter().map(|p| p.sin()));
            norm.extend_from_slice(minmax_normalize_amplitude(s).as_slice());
        }
        Ok(Self {
            clips: spectra.len(),
            patch_count: m_len,
            amplitude: Matrix::from_vec(rows, k_len, amp)?,
            cos_phase: Matrix::from_vec(rows, k_len, cos)?,
            sin_phase: Matrix::from_vec(rows, k_len, sin)?,
            normalized: Matrix::from_vec(rows, k_len, norm)?,
        })
    }

    /// Gathers clips by index.
    pub fn select(&self, idx: &[usize]) -> Self {
        let k = self.amplitude.cols();
        let m = self.patch_count;
        let gather = |src: &Matrix| {
            let mut data = Vec::with_capacity(idx.len() * m * k);
            for &i in idx {
                data.extend_from_slice(&src.as_slice()[i * m * k..(i + 1) * m * k]);
            }
            Matrix::from_vec(idx.len() * m, k, data).expect("sized")
        };
        Self {
            clips: idx.len(),
            patch_count: m,
            amplitude: gather(&self.amplitude),
            cos_phase: gather(&self.cos_phase),
            sin_phase: gather(&self.sin_phase),
            normalized: gather(&self.normalized),
        }
    }
}

/// Differentiable real-basis synthesis of `A_hat` with the batch's phase,
/// returning `B x (M*T)`. Equal to [`crate::spectral::recompose`] up to
/// rounding (asserted by tests); used where gradients are needed.
pub fn synthesize_graph(t: &mut Tape, a_hat: Var, batch: &SpectralBatch, basis: &SynthesisBasis) -> Result<Var> {
    let cos = t.constant(batch.cos_phase.clone());
    let sin = t.constant(batch.sin_phase.clone());
    let cb = t.constant(basis.cos_basis.clone());
    let sb = t.constant(basis.sin_basis.clone());
    let re = t.mul(a_hat, cos)?;
    let im = t.mul(a_hat, sin)?;
    let x_re = t.matmul(re, cb)?;
    let x_im = t.matmul(im, sb)?;
    let x = t.sub(x_re, x_im)?;
    let frames = basis.cos_basis.cols();
    t.reshape(x, batch.clips, batch.patch_count * frames)
}

/// Outputs of the generator graph for one batch.
#[derive(Debug, Clone, Copy)]
pub struct LsaGraph {
    /// Perturbed clips, `B x (M*T)`.
    pub x_env: Var,
    /// Perturbed amplitude, `B*M x K`.
    pub a_hat: Var,
    /// `A_hat / (A + delta)`.
    pub mask: Var,
}

static GENERATOR_CALLS: AtomicUsize = AtomicUsize::new(0);

/// Process-wide count of generator forward passes (graph or eager). Lets
/// tests assert that inference paths never reach the adversary.
pub fn generator_invocations() -> usize {
    GENERATOR_CALLS.load(Ordering::Relaxed)
}

/// `A_hat = A * exp(alpha * tanh(G(A_breve)))` and its reconstruction.
pub fn lsa_graph(
    t: &mut Tape,
    gen: &MlpVars,
    batch: &SpectralBatch,
    alpha: f64,
    delta: f64,
    basis: &SynthesisBasis,
) -> Result<LsaGraph> {
    GENERATOR_CALLS.fetch_add(1, Ordering::Relaxed);
    let input = t.constant(batch.normalized.clone());
    let out = mlp_forward(t, gen, input)?;
    let th = t.tanh(out);
    let scaled = t.scale(th, alpha);
    let modulation = t.exp(scaled);
    let amp = t.constant(batch.amplitude.clone());
    let a_hat = t.mul(amp, modulation)?;
    let inv = t.constant(batch.amplitude.map(|a| 1.0 / (a + delta)));
    let mask = t.mul(a_hat, inv)?;
    let x_env = synthesize_graph(t, a_hat, batch, basis)?;
    Ok(LsaGraph { x_env, a_hat, mask })
}

/// Generator output field `G(A_breve)` for one spectrum, `M x K`.
pub fn generator_field(b: &ModelBundle, spectrum: &OneSidedSpectrum) -> Result<Matrix> {
    GENERATOR_CALLS.fetch_add(1, Ordering::Relaxed);
    let mut t = Tape::new();
    let gen = bind_mlp(&mut t, &b.generator, false);
    let input = t.constant(minmax_normalize_amplitude(spectrum));
    let out = mlp_forward(&mut t, &gen, input)?;
    Ok(t.value(out).clone())
}

/// Applies the adversary to one clip through the recompose chokepoint.
pub fn lsa_perturb(spectrum: &OneSidedSpectrum, b: &ModelBundle) -> Result<(PatchSignalClip, ModulationMask)> {
    if spectrum.amplitude().cols() != b.dims.bin_count() {
        return Err(Error::shape("lsa_perturb", b.dims.bin_count(), spectrum.amplitude().cols()));
    }
    let field = generator_field(b, spectrum)?;
    let a = spectrum.amplitude();
    let a_hat = a.zip_map(&field, |a, g| a * (b.alpha * g.tanh()).exp());
    let mask = a_hat.zip_map(a, |h, a| h / (a + b.delta));
    let clip = spectrum.with_amplitude(&a_hat)?;
    Ok((clip, ModulationMask { mask, delta: b.delta }))
}
