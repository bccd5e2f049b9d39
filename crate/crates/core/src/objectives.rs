//! Losses of the minimax game, as tape graphs plus plain-value wrappers.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::autodiff::{pairwise_sq_dist, softmax_rows, Tape, Var};
use crate::error::{Error, Result};
use crate::models::{discriminate_graph, MlpVars};
use crate::tensor::Matrix;

pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub gamma: f64,
    pub lambda_mask: f64,
    pub lambda_sym: f64,
    pub lambda_blind: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            lambda_mask: 0.1,
            lambda_sym: 0.9,
            lambda_blind: 0.7,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma", self.gamma),
            ("lambda_mask", self.lambda_mask),
            ("lambda_sym", self.lambda_sym),
            ("lambda_blind", self.lambda_blind),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        Ok(())
    }
}

/// RBF bandwidth `sigma` in `k(x, y) = exp(-|x - y|^2 / (2 sigma^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    /// `sigma^2` = median squared distance over distinct pairs of the union.
    Median,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub bandwidth: Bandwidth,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Median,
        }
    }
}

impl KernelSpec {
    pub fn fixed(sigma: f64) -> Self {
        Self {
            bandwidth: Bandwidth::Fixed(sigma),
        }
    }
}

/// Per-step loss values, one row of the training log.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub l_det: f64,
    pub l_sym: f64,
    pub l_blind: f64,
    pub l_gen: f64,
    pub mmd: f64,
    pub mask_reg: f64,
    pub total: f64,
}

impl LossComponents {
    pub fn all_finite(&self) -> bool {
        [self.l_det, self.l_sym, self.l_blind, self.l_gen, self.mmd, self.mask_reg, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

fn lex_cmp(a: &Matrix, b: &Matrix) -> Ordering {
    a.shape().cmp(&b.shape()).then_with(|| {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Median of the squared distances between distinct rows of `[a; b]`.
pub fn median_sq_distance(a: &Matrix, b: &Matrix) -> Result<f64> {
    let z = Matrix::vstack(&[a, b])?;
    let d = pairwise_sq_dist(&z, &z)?;
    let n = z.rows();
    let mut vals: Vec<f64> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).map(|(i, j)| d.get(i, j)).collect();
    if vals.is_empty() {
        return Ok(0.0);
    }
    vals.sort_by(f64::total_cmp);
    let mid = vals.len() / 2;
    Ok(if vals.len() % 2 == 1 {
        vals[mid]
    } else {
        0.5 * (vals[mid - 1] + vals[mid])
    })
}

/// Resolved `2 sigma^2`. A degenerate median (all points equal) falls back
/// to `sigma = 1`.
fn kernel_denominator(kernel: &KernelSpec, a: &Matrix, b: &Matrix) -> Result<f64> {
    let sigma_sq = match kernel.bandwidth {
        Bandwidth::Fixed(s) => {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidInput(format!("bandwidth must be positive, got {s}")));
            }
            s * s
        }
        Bandwidth::Median => {
            let m = median_sq_distance(a, b)?;
            if m > 0.0 && m.is_finite() {
                m
            } else {
                1.0
            }
        }
    };
    Ok(2.0 * sigma_sq)
}

/// Biased (V-statistic) MMD^2 between the rows of `a` and `b`.
///
/// Arguments are put in a canonical order before evaluation, so
/// `mmd(a, b)` and `mmd(b, a)` run the same arithmetic. The bandwidth is a
/// plain number on the tape, so no gradient flows through it.
pub fn mmd_graph(t: &mut Tape, a: Var, b: Var, kernel: &KernelSpec) -> Result<Var> {
    let (av, bv) = (t.value(a), t.value(b));
    if av.rows() == 0 || bv.rows() == 0 {
        return Err(Error::InvalidInput("mmd needs two non-empty sets".into()));
    }
    if av.cols() != bv.cols() {
        return Err(Error::shape("mmd", av.cols(), bv.cols()));
    }
    let (a, b) = if lex_cmp(av, bv) == Ordering::Greater { (b, a) } else { (a, b) };
    let denom = kernel_denominator(kernel, t.value(a), t.value(b))?;
    let mut kernel_mean = |x: Var, y: Var| -> Result<Var> {
        let d = t.pairwise_sq_dist(x, y)?;
        let s = t.scale(d, -1.0 / denom);
        let k = t.exp(s);
        Ok(t.mean(k))
    };
    let kaa = kernel_mean(a, a)?;
    let kbb = kernel_mean(b, b)?;
    let kab = kernel_mean(a, b)?;
    let within = t.add(kaa, kbb)?;
    let cross = t.scale(kab, 2.0);
    let v = t.sub(within, cross)?;
    // The V-statistic is a squared RKHS norm; clip rounding below zero.
    Ok(t.clamp_min(v, 0.0))
}

pub fn mmd(a: &Matrix, b: &Matrix, kernel: &KernelSpec) -> Result<f64> {
    let mut t = Tape::new();
    let av = t.constant(a.clone());
    let bv = t.constant(b.clone());
    let m = mmd_graph(&mut t, av, bv, kernel)?;
    Ok(t.scalar(m))
}

/// `(1/N) |mask - 1|_F^2` with `N` the number of mask entries.
pub fn mask_regularizer_graph(t: &mut Tape, mask: Var) -> Result<Var> {
    let shifted = t.add_scalar(mask, -1.0);
    let sq = t.mul(shifted, shifted)?;
    Ok(t.mean(sq))
}

/// Plain-value regularizer over a batch of masks of equal shape.
pub fn mask_regularizer(masks: &[&Matrix]) -> Result<f64> {
    let stacked = Matrix::vstack(masks)?;
    let mut t = Tape::new();
    let m = t.constant(stacked);
    let r = mask_regularizer_graph(&mut t, m)?;
    Ok(t.scalar(r))
}

/// Batch mean of `-log p[y]` from logits.
pub fn cross_entropy_graph(t: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    t.cross_entropy(logits, labels)
}

/// `-ln p[y]` of a probability vector.
pub fn cross_entropy(p: &[f64], y: usize) -> Result<f64> {
    let v = *p
        .get(y)
        .ok_or_else(|| Error::InvalidInput(format!("label {y} out of range for {} classes", p.len())))?;
    Ok(-v.ln())
}

/// Batch-mean CE on the clean view plus batch-mean CE on the env view.
pub fn detector_loss_graph(t: &mut Tape, logits_clean: Var, logits_env: Var, labels: &[usize]) -> Result<Var> {
    let c = t.cross_entropy(logits_clean, labels)?;
    let e = t.cross_entropy(logits_env, labels)?;
    t.add(c, e)
}

fn kl_rows(t: &mut Tape, p: Var, lp: Var, lq: Var) -> Result<Var> {
    let diff = t.sub(lp, lq)?;
    let prod = t.mul(p, diff)?;
    Ok(t.sum(prod))
}

/// Batch mean of `0.5 (KL(p|q) + KL(q|p))` over rows of two probability
/// matrices, with each entry floored at `1e-12` before the logs.
pub fn symmetric_kl_graph(t: &mut Tape, p: Var, q: Var) -> Result<Var> {
    let rows = t.value(p).rows();
    if t.value(p).shape() != t.value(q).shape() {
        return Err(Error::shape(
            "symmetric_kl",
            format!("{:?}", t.value(p).shape()),
            format!("{:?}", t.value(q).shape()),
        ));
    }
    let pf = t.clamp_min(p, PROB_FLOOR);
    let qf = t.clamp_min(q, PROB_FLOOR);
    let lp = t.log(pf)?;
    let lq = t.log(qf)?;
    let kpq = kl_rows(t, pf, lp, lq)?;
    let kqp = kl_rows(t, qf, lq, lp)?;
    let s = t.add(kpq, kqp)?;
    Ok(t.scale(s, 0.5 / rows as f64))
}

pub fn symmetric_kl(p: &[f64], q: &[f64]) -> Result<f64> {
    let mut t = Tape::new();
    let pv = t.constant(Matrix::row_vector(p.to_vec()));
    let qv = t.constant(Matrix::row_vector(q.to_vec()));
    let s = symmetric_kl_graph(&mut t, pv, qv)?;
    Ok(t.scalar(s))
}

/// `CE(q(GRL(h_clean)), 0) + CE(q(GRL(h_env)), 1)`, each a batch mean.
pub fn blindness_loss_graph(t: &mut Tape, disc: &MlpVars, h_clean: Var, h_env: Var, through_grl: bool) -> Result<Var> {
    let zc = discriminate_graph(t, disc, h_clean, through_grl)?;
    let ze = discriminate_graph(t, disc, h_env, through_grl)?;
    let nc = t.value(zc).rows();
    let ne = t.value(ze).rows();
    let lc = t.cross_entropy(zc, &vec![0; nc])?;
    let le = t.cross_entropy(ze, &vec![1; ne])?;
    t.add(lc, le)
}

/// `CE_env + gamma * MMD - lambda_mask * reg`, the quantity the generator
/// maximizes.
pub fn generator_loss_graph(t: &mut Tape, ce_env: Var, mmd: Var, mask_reg: Var, w: &LossWeights) -> Result<Var> {
    let gm = t.scale(mmd, w.gamma);
    let rm = t.scale(mask_reg, w.lambda_mask);
    let s = t.add(ce_env, gm)?;
    t.sub(s, rm)
}

pub fn generator_loss(ce_env: f64, mmd: f64, mask_reg: f64, w: &LossWeights) -> f64 {
    ce_env + w.gamma * mmd - w.lambda_mask * mask_reg
}

/// `L_det + lambda_sym * L_sym + lambda_blind * L_blind`.
pub fn total_loss_graph(t: &mut Tape, l_det: Var, l_sym: Var, l_blind: Var, w: &LossWeights) -> Result<Var> {
    let s = t.scale(l_sym, w.lambda_sym);
    let b = t.scale(l_blind, w.lambda_blind);
    let x = t.add(l_det, s)?;
    t.add(x, b)
}

pub fn total_loss(l_det: f64, l_sym: f64, l_blind: f64, w: &LossWeights) -> f64 {
    l_det + w.lambda_sym * l_sym + w.lambda_blind * l_blind
}

/// Plain-value detector loss from logits.
pub fn detector_loss(logits_clean: &Matrix, logits_env: &Matrix, labels: &[usize]) -> Result<f64> {
    let mut t = Tape::new();
    let c = t.constant(logits_clean.clone());
    let e = t.constant(logits_env.clone());
    let l = detector_loss_graph(&mut t, c, e, labels)?;
    Ok(t.scalar(l))
}

/// Rowwise softmax, re-exported for callers working with plain logits.
pub fn probabilities(logits: &Matrix) -> Matrix {
    softmax_rows(logits)
}
