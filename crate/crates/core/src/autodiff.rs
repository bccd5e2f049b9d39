//! Reverse-mode differentiation over rank-2 values.
//!
//! A [`Tape`] is an arena of nodes appended in evaluation order, so the
//! arena order is already topological and `backward` is a single reverse
//! sweep. [`Var`] is a plain index into the arena.
//!
//! Constants (data, labels, fixed masks) are nodes that never receive a
//! gradient; anything depending only on constants is skipped in the sweep.

use crate::error::{Error, Result};
use crate::tensor::{matmul_at_into, matmul_bt_into, matmul_into, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    AddScalar(Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    ClampMin(Var, f64),
    Softmax(Var),
    LogSoftmax(Var),
    Sum(Var),
    Mean(Var),
    Transpose(Var),
    Reshape(Var),
    ConcatRows(Var, Var),
    SliceRows(Var, usize),
    Grl(Var),
    /// Mean cross-entropy of rowwise logits; keeps the softmax for backward.
    CrossEntropy(Var, Vec<usize>, Matrix),
    PairwiseSqDist(Var, Var),
    /// Rowwise standardization; keeps `1/sqrt(var + eps)` per row.
    Standardize(Var, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
}

fn check_same(ctx: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(ctx, format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    Ok(())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("add", self.value(a), self.value(b))?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("sub", self.value(a), self.value(b))?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("mul", self.value(a), self.value(b))?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    /// `a (n x m) + row (1 x m)` broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (av, rv) = (self.value(a), self.value(row));
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return Err(Error::shape("add_row", format!("1x{}", av.cols()), format!("{:?}", rv.shape())));
        }
        let mut v = av.clone();
        for r in 0..v.rows() {
            for (x, b) in v.row_mut(r).iter_mut().zip(rv.as_slice()) {
                *x += b;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(v, Op::AddRow(a, row), rg))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        let rg = self.rg(a);
        self.push(v, Op::AddScalar(a), rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x * c);
        let rg = self.rg(a);
        self.push(v, Op::Scale(a, c), rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::MatMul(a, b), rg))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(v, Op::Tanh(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        let rg = self.rg(a);
        self.push(v, Op::Exp(a), rg)
    }

    /// Natural log; non-positive inputs are an error, callers stabilize first.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(x) = self.value(a).as_slice().iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::Numerical(format!("log of non-positive value {x}")));
        }
        let v = self.value(a).map(f64::ln);
        let rg = self.rg(a);
        Ok(self.push(v, Op::Log(a), rg))
    }

    /// `max(a, floor)`; the gradient is passed only where `a > floor`.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        let v = self.value(a).map(|x| x.max(floor));
        let rg = self.rg(a);
        self.push(v, Op::ClampMin(a, floor), rg)
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let v = softmax_rows(self.value(a));
        let rg = self.rg(a);
        self.push(v, Op::Softmax(a), rg)
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let mut v = src.clone();
        for r in 0..v.rows() {
            let row = v.row_mut(r);
            let lse = log_sum_exp(row);
            row.iter_mut().for_each(|x| *x -= lse);
        }
        let rg = self.rg(a);
        self.push(v, Op::LogSoftmax(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Matrix::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(v, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let v = Matrix::scalar(m.sum() / m.len() as f64);
        let rg = self.rg(a);
        self.push(v, Op::Mean(a), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(v, Op::Transpose(a), rg)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let v = self.value(a).clone().reshape(rows, cols)?;
        let rg = self.rg(a);
        Ok(self.push(v, Op::Reshape(a), rg))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = Matrix::vstack(&[self.value(a), self.value(b)])?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::ConcatRows(a, b), rg))
    }

    /// Rows `start..start + count`.
    pub fn slice_rows(&mut self, a: Var, start: usize, count: usize) -> Result<Var> {
        let src = self.value(a);
        if start + count > src.rows() {
            return Err(Error::shape("slice_rows", format!("<= {} rows", src.rows()), start + count));
        }
        let cols = src.cols();
        let v = Matrix::from_vec(count, cols, src.as_slice()[start * cols..(start + count) * cols].to_vec())?;
        let rg = self.rg(a);
        Ok(self.push(v, Op::SliceRows(a, start), rg))
    }

    /// Gradient reversal: identity forward, negated gradient backward.
    pub fn grl(&mut self, a: Var) -> Var {
        let v = self.value(a).clone();
        let rg = self.rg(a);
        self.push(v, Op::Grl(a), rg)
    }

    /// Mean over rows of `-log softmax(logits)[label]`, in log-sum-exp form.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let z = self.value(logits);
        if labels.len() != z.rows() {
            return Err(Error::shape("cross_entropy", z.rows(), labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= z.cols()) {
            return Err(Error::InvalidInput(format!("label {bad} out of range for {} classes", z.cols())));
        }
        let mut total = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            let row = z.row(r);
            total += log_sum_exp(row) - row[y];
        }
        let probs = softmax_rows(z);
        let v = Matrix::scalar(total / labels.len() as f64);
        let rg = self.rg(logits);
        Ok(self.push(v, Op::CrossEntropy(logits, labels.to_vec(), probs), rg))
    }

    /// `d[i][j] = |a_i - b_j|^2` for row vectors of `a` and `b`.
    pub fn pairwise_sq_dist(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = pairwise_sq_dist(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::PairwiseSqDist(a, b), rg))
    }

    /// Each row shifted to zero mean and scaled to unit variance,
    /// `(x - mu) / sqrt(var + eps)` with the population variance.
    pub fn standardize_rows(&mut self, a: Var, eps: f64) -> Var {
        let src = self.value(a);
        let n = src.cols() as f64;
        let mut v = src.clone();
        let mut inv = Vec::with_capacity(src.rows());
        for r in 0..v.rows() {
            let row = v.row_mut(r);
            let mu = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
            let s = 1.0 / (var + eps).sqrt();
            row.iter_mut().for_each(|x| *x = (*x - mu) * s);
            inv.push(s);
        }
        let rg = self.rg(a);
        self.push(v, Op::Standardize(a, inv), rg)
    }

    /// Gradient of `v` after [`Tape::backward`], or `None` if `v` does not
    /// influence the loss through trainable paths.
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, zeros if it was not reached.
    pub fn grad_or_zero(&self, v: Var) -> Matrix {
        self.grad(v).cloned().unwrap_or_else(|| {
            let (r, c) = self.value(v).shape();
            Matrix::zeros(r, c)
        })
    }

    pub fn zero_grad(&mut self) {
        self.grads.clear();
    }

    /// Accumulates `d loss / d node` into every node that requires a gradient.
    /// Calling twice without [`Tape::zero_grad`] adds the second pass on top.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::InvalidInput(format!("backward needs a scalar loss, got {shape:?}")));
        }
        if self.grads.len() < self.nodes.len() {
            self.grads.resize(self.nodes.len(), None);
        }
        let mut pending: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        pending[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = pending[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.backprop_node(i, &g, &mut pending);
            match &mut self.grads[i] {
                Some(acc) => acc.add_assign(&g),
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &Matrix, pending: &mut [Option<Matrix>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        let mut send = |v: Var, contrib: Matrix| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut pending[v.0] {
                Some(acc) => acc.add_assign(&contrib),
                slot => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::Sub(a, b) => {
                send(*a, g.clone());
                send(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    send(*a, g.zip_map(bv, |x, y| x * y));
                }
                if self.rg(*b) {
                    send(*b, g.zip_map(av, |x, y| x * y));
                }
            }
            Op::AddRow(a, row) => {
                send(*a, g.clone());
                if self.rg(*row) {
                    let mut acc = vec![0.0; g.cols()];
                    for r in 0..g.rows() {
                        for (s, x) in acc.iter_mut().zip(g.row(r)) {
                            *s += x;
                        }
                    }
                    send(*row, Matrix::row_vector(acc));
                }
            }
            Op::AddScalar(a) => send(*a, g.clone()),
            Op::Scale(a, c) => send(*a, g.map(|x| x * c)),
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (n, k, m) = (av.rows(), av.cols(), bv.cols());
                if self.rg(*a) {
                    let mut ga = Matrix::zeros(n, k);
                    matmul_bt_into(g.as_slice(), bv.as_slice(), ga.as_mut_slice(), n, m, k);
                    send(*a, ga);
                }
                if self.rg(*b) {
                    let mut gb = Matrix::zeros(k, m);
                    matmul_at_into(av.as_slice(), g.as_slice(), gb.as_mut_slice(), n, k, m);
                    send(*b, gb);
                }
            }
            Op::Tanh(a) => send(*a, g.zip_map(out, |x, y| x * (1.0 - y * y))),
            Op::Exp(a) => send(*a, g.zip_map(out, |x, y| x * y)),
            Op::Log(a) => send(*a, g.zip_map(self.value(*a), |x, y| x / y)),
            Op::ClampMin(a, floor) => {
                let f = *floor;
                send(*a, g.zip_map(self.value(*a), |x, y| if y > f { x } else { 0.0 }))
            }
            Op::Softmax(a) => {
                let mut ga = g.clone();
                for r in 0..ga.rows() {
                    let p = out.row(r);
                    let dot: f64 = g.row(r).iter().zip(p).map(|(x, y)| x * y).sum();
                    for (gx, py) in ga.row_mut(r).iter_mut().zip(p) {
                        *gx = py * (*gx - dot);
                    }
                }
                send(*a, ga);
            }
            Op::LogSoftmax(a) => {
                let mut ga = g.clone();
                for r in 0..ga.rows() {
                    let gsum: f64 = g.row(r).iter().sum();
                    for (gx, ly) in ga.row_mut(r).iter_mut().zip(out.row(r)) {
                        *gx -= ly.exp() * gsum;
                    }
                }
                send(*a, ga);
            }
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                send(*a, Matrix::filled(r, c, g.item()));
            }
            Op::Mean(a) => {
                let (r, c) = self.value(*a).shape();
                send(*a, Matrix::filled(r, c, g.item() / (r * c) as f64));
            }
            Op::Transpose(a) => send(*a, g.transpose()),
            Op::Reshape(a) => {
                let (r, c) = self.value(*a).shape();
                send(*a, g.clone().reshape(r, c).expect("reshape preserves size"));
            }
            Op::ConcatRows(a, b) => {
                let ra = self.value(*a).rows();
                let cols = g.cols();
                let (top, bottom) = g.as_slice().split_at(ra * cols);
                send(*a, Matrix::from_vec(ra, cols, top.to_vec()).expect("split"));
                send(*b, Matrix::from_vec(g.rows() - ra, cols, bottom.to_vec()).expect("split"));
            }
            Op::SliceRows(a, start) => {
                let src = self.value(*a);
                let mut ga = Matrix::zeros(src.rows(), src.cols());
                let cols = src.cols();
                ga.as_mut_slice()[start * cols..start * cols + g.len()].copy_from_slice(g.as_slice());
                send(*a, ga);
            }
            Op::Grl(a) => send(*a, g.map(|x| -x)),
            Op::CrossEntropy(a, labels, probs) => {
                let scale = g.item() / labels.len() as f64;
                let mut ga = probs.clone();
                for (r, &y) in labels.iter().enumerate() {
                    let row = ga.row_mut(r);
                    row[y] -= 1.0;
                    row.iter_mut().for_each(|x| *x *= scale);
                }
                send(*a, ga);
            }
            Op::PairwiseSqDist(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let d = av.cols();
                let mut ga = Matrix::zeros(av.rows(), d);
                let mut gb = Matrix::zeros(bv.rows(), d);
                for i in 0..av.rows() {
                    for j in 0..bv.rows() {
                        let w = 2.0 * g.get(i, j);
                        if w == 0.0 {
                            continue;
                        }
                        for c in 0..d {
                            let diff = w * (av.get(i, c) - bv.get(j, c));
                            ga.as_mut_slice()[i * d + c] += diff;
                            gb.as_mut_slice()[j * d + c] -= diff;
                        }
                    }
                }
                // `a` and `b` may be the same node; send() accumulates.
                send(*a, ga);
                send(*b, gb);
            }
            Op::Standardize(a, inv) => {
                let n = out.cols() as f64;
                let mut ga = g.clone();
                for (r, &s) in inv.iter().enumerate() {
                    let y = out.row(r);
                    let gy = g.row(r);
                    let mean_g = gy.iter().sum::<f64>() / n;
                    let mean_gy = gy.iter().zip(y).map(|(p, q)| p * q).sum::<f64>() / n;
                    for ((gx, &gv), &yv) in ga.row_mut(r).iter_mut().zip(gy).zip(y) {
                        *gx = s * (gv - mean_g - yv * mean_gy);
                    }
                }
                send(*a, ga);
            }
        }
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Rowwise softmax, shifted by the row maximum.
pub fn softmax_rows(z: &Matrix) -> Matrix {
    let mut p = z.clone();
    for r in 0..p.rows() {
        let row = p.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            s += *x;
        }
        row.iter_mut().for_each(|x| *x /= s);
    }
    p
}

pub fn pairwise_sq_dist(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(Error::shape("pairwise_sq_dist", a.cols(), b.cols()));
    }
    let mut out = Matrix::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        let ai = a.row(i);
        for j in 0..b.rows() {
            let d: f64 = ai.iter().zip(b.row(j)).map(|(x, y)| (x - y) * (x - y)).sum();
            out.set(i, j, d);
        }
    }
    Ok(out)
}

/// `out += a * b`, exposed for callers that evaluate without a tape.
pub fn matmul_acc(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    matmul_into(a.as_slice(), b.as_slice(), out.as_mut_slice(), a.rows(), a.cols(), b.cols());
}

/// Central finite-difference gradient of `f` at `x`.
pub fn numeric_grad(x: &Matrix, h: f64, mut f: impl FnMut(&Matrix) -> f64) -> Matrix {
    let mut probe = x.clone();
    let mut g = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + h;
        let up = f(&probe);
        probe.as_mut_slice()[i] = orig - h;
        let down = f(&probe);
        probe.as_mut_slice()[i] = orig;
        g.as_mut_slice()[i] = (up - down) / (2.0 * h);
    }
    g
}

/// Largest elementwise `|a - b| / max(|a|, |b|, floor)`.
pub fn max_rel_error(a: &Matrix, b: &Matrix, floor: f64) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
