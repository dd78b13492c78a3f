//! Attention problem definition and the full-precision reference evaluation.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{matrix_from_seed, Dist, Matrix};
use crate::precision::Precision;

/// Problem dimensions with the batch and head axes already folded into `n_q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub n_q: usize,
    pub n_kv: usize,
    pub d_qk: usize,
    pub d_v: usize,
}

impl Dims {
    pub fn new(n_q: usize, n_kv: usize, d_qk: usize, d_v: usize) -> Self {
        Self {
            n_q,
            n_kv,
            d_qk,
            d_v,
        }
    }
}

/// `1 / sqrt(d_qk)`, the conventional logit multiplier.
pub fn default_scale(d_qk: usize) -> f64 {
    1.0 / libm::sqrt(d_qk as f64)
}

/// One decode attention instance. Q, K and V are stored already rounded to
/// the operand format of `precision`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionProblem {
    q: Matrix,
    k: Matrix,
    v: Matrix,
    scale: f64,
    precision: Precision,
}

impl AttentionProblem {
    pub fn new(q: Matrix, k: Matrix, v: Matrix, scale: f64, precision: Precision) -> Result<Self> {
        if q.cols() != k.cols() {
            return Err(Error::DimensionMismatch {
                op: "problem d_qk",
                expected: q.cols(),
                actual: k.cols(),
            });
        }
        if k.rows() != v.rows() {
            return Err(Error::DimensionMismatch {
                op: "problem n_kv",
                expected: k.rows(),
                actual: v.rows(),
            });
        }
        if !scale.is_finite() || scale < 0.0 {
            return Err(Error::InvalidScale(scale));
        }
        Ok(Self {
            q: q.rounded(precision),
            k: k.rounded(precision),
            v: v.rounded(precision),
            scale,
            precision,
        })
    }

    /// Seeded instance: Q, K and V are drawn from `matrix_from_seed` with
    /// seeds `3*seed`, `3*seed + 1` and `3*seed + 2` (wrapping). `scale`
    /// defaults to [`default_scale`].
    pub fn random(seed: u64, dims: Dims, scale: Option<f64>, precision: Precision) -> Result<Self> {
        let base = seed.wrapping_mul(3);
        let q = matrix_from_seed(dims.n_q, dims.d_qk, base, Dist::Normal)?;
        let k = matrix_from_seed(dims.n_kv, dims.d_qk, base.wrapping_add(1), Dist::Normal)?;
        let v = matrix_from_seed(dims.n_kv, dims.d_v, base.wrapping_add(2), Dist::Normal)?;
        let scale = scale.unwrap_or_else(|| default_scale(dims.d_qk));
        Self::new(q, k, v, scale, precision)
    }

    /// Same Q, K and V under a different arithmetic mode.
    pub fn with_precision(&self, precision: Precision) -> Self {
        Self {
            q: self.q.rounded(precision),
            k: self.k.rounded(precision),
            v: self.v.rounded(precision),
            scale: self.scale,
            precision,
        }
    }

    pub fn dims(&self) -> Dims {
        Dims {
            n_q: self.q.rows(),
            n_kv: self.k.rows(),
            d_qk: self.q.cols(),
            d_v: self.v.cols(),
        }
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn k(&self) -> &Matrix {
        &self.k
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }
}

/// Attention output `O` (n_q x d_v) and per-query logsumexp `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub o: Matrix,
    pub lse: Vec<f64>,
}

impl AttentionOutput {
    /// Largest absolute difference between the two logsumexp vectors.
    pub fn lse_max_abs_diff(&self, other: &AttentionOutput) -> Result<f64> {
        if self.lse.len() != other.lse.len() {
            return Err(Error::DimensionMismatch {
                op: "lse_max_abs_diff",
                expected: self.lse.len(),
                actual: other.lse.len(),
            });
        }
        let mut worst = 0.0f64;
        for (a, b) in self.lse.iter().zip(&other.lse) {
            let d = (a - b).abs();
            if d.is_nan() {
                return Ok(f64::NAN);
            }
            worst = worst.max(d);
        }
        Ok(worst)
    }
}

/// Reference attention in binary64: `softmax(scale * Q K^T) V`, one query row
/// at a time with max subtraction. The problem's precision mode is ignored
/// (inputs are used as stored).
pub fn attention_ref(problem: &AttentionProblem) -> AttentionOutput {
    let Dims { n_q, n_kv, d_v, .. } = problem.dims();
    let (q, k, v) = (problem.q(), problem.k(), problem.v());
    let mut o = Matrix::zeros(n_q, d_v).expect("validated dims");
    let mut lse = Vec::with_capacity(n_q);
    let mut logits = vec![0.0; n_kv];

    for i in 0..n_q {
        let qi = q.row(i);
        for (j, s) in logits.iter_mut().enumerate() {
            let dot: f64 = qi.iter().zip(k.row(j)).map(|(a, b)| a * b).sum();
            *s = problem.scale() * dot;
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for s in logits.iter_mut() {
            *s = libm::exp(*s - max);
            sum += *s;
        }
        let out = o.row_mut(i);
        for (j, &w) in logits.iter().enumerate() {
            let p = w / sum;
            for (acc, &x) in out.iter_mut().zip(v.row(j)) {
                *acc += p * x;
            }
        }
        lse.push(max + libm::log(sum));
    }
    AttentionOutput { o, lse }
}
