//! Query-major blocked attention with the streaming (online) softmax.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{gemm, Matrix};
use crate::oracle::{AttentionOutput, AttentionProblem};
use crate::precision::Precision;

/// Block sizes and circular-buffer depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TileConfig {
    b_r: usize,
    b_c: usize,
    stages: usize,
}

impl TileConfig {
    pub fn new(b_r: usize, b_c: usize, stages: usize) -> Result<Self> {
        if b_r == 0 {
            return Err(Error::ZeroDimension { what: "b_r" });
        }
        if b_c == 0 {
            return Err(Error::ZeroDimension { what: "b_c" });
        }
        if stages == 0 {
            return Err(Error::ZeroDimension { what: "stages" });
        }
        Ok(Self { b_r, b_c, stages })
    }

    pub fn b_r(&self) -> usize {
        self.b_r
    }

    pub fn b_c(&self) -> usize {
        self.b_c
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    /// Number of KV blocks, `ceil(n_kv / b_c)`.
    pub fn kv_blocks(&self, n_kv: usize) -> usize {
        n_kv.div_ceil(self.b_c)
    }
}

impl Default for TileConfig {
    fn default() -> Self {
        Self {
            b_r: 64,
            b_c: 64,
            stages: 2,
        }
    }
}

/// Half-open ranges `[start, end)` of width `step` covering `0..len`.
pub(crate) fn blocks(len: usize, step: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..len)
        .step_by(step)
        .map(move |s| (s, (s + step).min(len)))
}

/// How stale accumulator contributions are rescaled when the running max grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rescale {
    /// Multiply by `exp(m_old - m_new)`, which lies in (0, 1].
    #[default]
    Attenuate,
    /// Multiply by `exp(m_new - m_old)`. Numerically wrong; kept as a
    /// negative control for the verification suite.
    Amplify,
}

impl Rescale {
    #[inline]
    fn factor(self, m_old: f64, m_new: f64) -> f64 {
        if m_old == f64::NEG_INFINITY {
            // Nothing accumulated yet.
            return 0.0;
        }
        match self {
            Rescale::Attenuate => libm::exp(m_old - m_new),
            Rescale::Amplify => libm::exp(m_new - m_old),
        }
    }
}

/// Running max `m` and running sum `l` for one block of queries.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxState {
    m: Vec<f64>,
    l: Vec<f64>,
}

impl SoftmaxState {
    pub fn new(queries: usize) -> Self {
        Self {
            m: vec![f64::NEG_INFINITY; queries],
            l: vec![0.0; queries],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn max(&self) -> &[f64] {
        &self.m
    }

    pub fn sum(&self) -> &[f64] {
        &self.l
    }

    /// Fold in a block's per-query maxima and return the per-query factors
    /// that rescale everything accumulated so far.
    pub fn update_max(
        &mut self,
        block_max: &[f64],
        rescale: Rescale,
        precision: Precision,
    ) -> Vec<f64> {
        assert_eq!(block_max.len(), self.m.len());
        self.m
            .iter_mut()
            .zip(block_max)
            .map(|(m, &b)| {
                let old = *m;
                *m = old.max(b);
                precision.accumulate(rescale.factor(old, *m))
            })
            .collect()
    }

    /// `l <- factor * l + block_sum`.
    pub fn update_sum(&mut self, factors: &[f64], block_sum: &[f64], precision: Precision) {
        assert_eq!(factors.len(), self.l.len());
        assert_eq!(block_sum.len(), self.l.len());
        for ((l, &f), &s) in self.l.iter_mut().zip(factors).zip(block_sum) {
            *l = precision.accumulate(f * *l + s);
        }
    }

    /// `m + log(l)` per query.
    pub fn logsumexp(&self, precision: Precision) -> Vec<f64> {
        self.m
            .iter()
            .zip(&self.l)
            .map(|(&m, &l)| precision.accumulate(m + libm::log(l)))
            .collect()
    }
}

/// Callback invoked after every (query block, KV block) step with the
/// softmax state as it stands once that KV block has been absorbed.
pub trait BlockObserver {
    fn on_block(&mut self, query_block: usize, kv_block: usize, state: &SoftmaxState);
}

impl BlockObserver for () {
    fn on_block(&mut self, _: usize, _: usize, _: &SoftmaxState) {}
}

impl<F: FnMut(usize, usize, &SoftmaxState)> BlockObserver for F {
    fn on_block(&mut self, query_block: usize, kv_block: usize, state: &SoftmaxState) {
        self(query_block, kv_block, state)
    }
}

/// Scaled logits `scale * x`, rounded to the accumulator format.
pub(crate) fn scale_logits(mut s: Matrix, scale: f64, precision: Precision) -> Matrix {
    for x in s.data_mut() {
        *x = precision.accumulate(scale * *x);
    }
    s
}

/// Standard blocked attention: for each query block, stream KV blocks through
/// `S = Q_i K_j^T`, update the running statistics, rescale the accumulator and
/// add `P~ V_j`. The epilogue divides by `l` and emits `L = m + log l`.
pub fn run_standard(problem: &AttentionProblem, tiles: &TileConfig) -> Result<AttentionOutput> {
    run_standard_observed(problem, tiles, &mut ())
}

pub fn run_standard_observed(
    problem: &AttentionProblem,
    tiles: &TileConfig,
    observer: &mut impl BlockObserver,
) -> Result<AttentionOutput> {
    let dims = problem.dims();
    let precision = problem.precision();
    let mut o = Matrix::zeros(dims.n_q, dims.d_v)?;
    let mut lse = Vec::with_capacity(dims.n_q);

    for (qb, (q0, q1)) in blocks(dims.n_q, tiles.b_r()).enumerate() {
        let q_i = problem.q().row_block(q0, q1)?;
        let rows = q1 - q0;
        let mut state = SoftmaxState::new(rows);
        let mut acc = Matrix::zeros(rows, dims.d_v)?;

        for (kb, (k0, k1)) in blocks(dims.n_kv, tiles.b_c()).enumerate() {
            let k_j = problem.k().row_block(k0, k1)?;
            let v_j = problem.v().row_block(k0, k1)?;

            let s = gemm(&q_i, &k_j, false, true, precision)?;
            let mut p = scale_logits(s, problem.scale(), precision);
            let row_max: Vec<f64> = (0..rows)
                .map(|r| p.row(r).iter().copied().fold(f64::NEG_INFINITY, f64::max))
                .collect();
            let factors = state.update_max(&row_max, Rescale::Attenuate, precision);

            let mut row_sum = vec![0.0; rows];
            for (r, sum) in row_sum.iter_mut().enumerate() {
                let m = state.max()[r];
                for x in p.row_mut(r) {
                    *x = precision.probability(libm::exp(*x - m));
                    *sum = precision.accumulate(*sum + *x);
                }
            }
            state.update_sum(&factors, &row_sum, precision);

            let pv = gemm(&p, &v_j, false, false, precision)?;
            for (r, &f) in factors.iter().enumerate() {
                for (a, &x) in acc.row_mut(r).iter_mut().zip(pv.row(r)) {
                    *a = precision.accumulate(f * *a + x);
                }
            }
            observer.on_block(qb, kb, &state);
        }

        for r in 0..rows {
            let l = state.sum()[r];
            for (dst, &a) in o.row_mut(q0 + r).iter_mut().zip(acc.row(r)) {
                *dst = precision.accumulate(a / l);
            }
        }
        lse.extend(state.logsumexp(precision));
    }
    Ok(AttentionOutput { o, lse })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{attention_ref, Dims};

    #[test]
    fn tile_config_validation() {
        assert!(TileConfig::new(0, 1, 1).is_err());
        assert!(TileConfig::new(1, 0, 1).is_err());
        assert!(TileConfig::new(1, 1, 0).is_err());
        let t = TileConfig::new(2, 64, 2).unwrap();
        assert_eq!(t.kv_blocks(257), 5);
        assert_eq!(t.kv_blocks(64), 1);
        assert_eq!(t.kv_blocks(1), 1);
    }

    #[test]
    fn block_ranges_cover_partial_tail() {
        let v: Vec<_> = blocks(10, 4).collect();
        assert_eq!(v, vec![(0, 4), (4, 8), (8, 10)]);
    }

    #[test]
    fn initial_state_contributes_nothing() {
        let mut st = SoftmaxState::new(2);
        let f = st.update_max(&[1.0, -3.0], Rescale::Attenuate, Precision::Exact64);
        assert_eq!(f, vec![0.0, 0.0]);
        let f = st.update_max(&[2.0, -5.0], Rescale::Attenuate, Precision::Exact64);
        assert_eq!(f[1], 1.0);
        assert!((f[0] - libm::exp(-1.0)).abs() < 1e-16);
        assert_eq!(st.max(), &[2.0, -3.0]);
    }

    #[test]
    fn single_block_matches_reference() {
        let p =
            AttentionProblem::random(5, Dims::new(3, 20, 6, 4), None, Precision::Exact64).unwrap();
        let out = run_standard(&p, &TileConfig::new(8, 32, 1).unwrap()).unwrap();
        let reference = attention_ref(&p);
        assert!(out.o.max_abs_diff(&reference.o).unwrap() <= 1e-12);
        assert!(out.lse_max_abs_diff(&reference).unwrap() <= 1e-12);
    }

    #[test]
    fn observer_sees_every_step() {
        let p =
            AttentionProblem::random(1, Dims::new(5, 10, 4, 4), None, Precision::Exact64).unwrap();
        let tiles = TileConfig::new(2, 3, 1).unwrap();
        let mut steps = Vec::new();
        run_standard_observed(&p, &tiles, &mut |qb, kb, st: &SoftmaxState| {
            steps.push((qb, kb, st.len()))
        })
        .unwrap();
        assert_eq!(steps.len(), 3 * 4);
        assert_eq!(steps.last(), Some(&(2, 3, 1)));
    }
}
