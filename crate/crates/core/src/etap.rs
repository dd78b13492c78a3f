//! KV-major transposed attention.
//!
//! Logits are formed as `S^T = K_j Q_i^T` so the long KV axis is the row
//! (GEMM M) dimension and the few queries are columns. The output is
//! accumulated transposed, `O^T = V^T P^T`, split along the value head
//! dimension into two halves that share one softmax state, and transposed back
//! exactly once per query block in the epilogue.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{gemm, Matrix};
use crate::oracle::{AttentionOutput, AttentionProblem};
use crate::precision::Precision;
use crate::tiled::{blocks, scale_logits, BlockObserver, Rescale, SoftmaxState, TileConfig};

/// Which half-accumulator is updated first within a block step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HalfOrder {
    #[default]
    LowerFirst,
    UpperFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EtapOptions {
    pub rescale: Rescale,
    pub half_order: HalfOrder,
}

/// Counters collected while running the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EtapStats {
    pub query_blocks: usize,
    pub kv_steps: usize,
    /// Output transposes; one per query block regardless of the KV length.
    pub transposes: usize,
}

/// Transposed output accumulator for one query block.
///
/// `o_lower` holds value dims `0..ceil(d_v/2)`, `o_upper` the rest (absent
/// when `d_v == 1`). Both are `dims x queries` and are rescaled with the same
/// factors from the shared [`SoftmaxState`].
#[derive(Debug, Clone, PartialEq)]
pub struct EtapAccumulator {
    o_lower: Matrix,
    o_upper: Option<Matrix>,
    state: SoftmaxState,
}

impl EtapAccumulator {
    pub fn new(queries: usize, d_v: usize) -> Result<Self> {
        if queries == 0 {
            return Err(Error::ZeroDimension { what: "queries" });
        }
        if d_v == 0 {
            return Err(Error::ZeroDimension { what: "d_v" });
        }
        let lower = d_v.div_ceil(2);
        let upper = d_v / 2;
        Ok(Self {
            o_lower: Matrix::zeros(lower, queries)?,
            o_upper: if upper > 0 {
                Some(Matrix::zeros(upper, queries)?)
            } else {
                None
            },
            state: SoftmaxState::new(queries),
        })
    }

    pub fn o_lower(&self) -> &Matrix {
        &self.o_lower
    }

    pub fn o_upper(&self) -> Option<&Matrix> {
        self.o_upper.as_ref()
    }

    pub fn state(&self) -> &SoftmaxState {
        &self.state
    }

    pub fn queries(&self) -> usize {
        self.state.len()
    }

    pub fn d_v(&self) -> usize {
        self.o_lower.rows() + self.o_upper.as_ref().map_or(0, Matrix::rows)
    }

    /// Full `d_v x queries` accumulator (lower half on top).
    pub fn stacked(&self) -> Matrix {
        match &self.o_upper {
            Some(upper) => self.o_lower.vstack(upper).expect("halves share width"),
            None => self.o_lower.clone(),
        }
    }

    /// Absorb one KV block (`k_j`: b x d_qk, `v_j`: b x d_v) for queries `q_i`.
    pub fn block_update(
        &mut self,
        k_j: &Matrix,
        v_j: &Matrix,
        q_i: &Matrix,
        scale: f64,
        precision: Precision,
    ) -> Result<()> {
        self.block_update_with(k_j, v_j, q_i, scale, precision, &EtapOptions::default())
    }

    pub fn block_update_with(
        &mut self,
        k_j: &Matrix,
        v_j: &Matrix,
        q_i: &Matrix,
        scale: f64,
        precision: Precision,
        options: &EtapOptions,
    ) -> Result<()> {
        let queries = self.queries();
        if q_i.rows() != queries {
            return Err(mismatch("etap queries", queries, q_i.rows()));
        }
        if k_j.cols() != q_i.cols() {
            return Err(mismatch("etap d_qk", q_i.cols(), k_j.cols()));
        }
        if v_j.rows() != k_j.rows() {
            return Err(mismatch("etap block rows", k_j.rows(), v_j.rows()));
        }
        if v_j.cols() != self.d_v() {
            return Err(mismatch("etap d_v", self.d_v(), v_j.cols()));
        }

        // S^T block: KV rows x query columns.
        let mut p = scale_logits(gemm(k_j, q_i, false, true, precision)?, scale, precision);
        let mut col_max = vec![f64::NEG_INFINITY; queries];
        for c in 0..p.rows() {
            for (m, &x) in col_max.iter_mut().zip(p.row(c)) {
                *m = m.max(x);
            }
        }
        let factors = self.state.update_max(&col_max, options.rescale, precision);

        let mut col_sum = vec![0.0; queries];
        let m_new = self.state.max();
        for c in 0..p.rows() {
            for ((x, sum), &m) in p.row_mut(c).iter_mut().zip(col_sum.iter_mut()).zip(m_new) {
                *x = precision.probability(libm::exp(*x - m));
                *sum = precision.accumulate(*sum + *x);
            }
        }
        self.state.update_sum(&factors, &col_sum, precision);

        let split = self.o_lower.rows();
        let d_v = self.d_v();
        let update_lower = |acc: &mut Matrix| -> Result<()> {
            accumulate_half(acc, &v_j.col_block(0, split)?, &p, &factors, precision)
        };
        match options.half_order {
            HalfOrder::LowerFirst => {
                update_lower(&mut self.o_lower)?;
                if let Some(upper) = self.o_upper.as_mut() {
                    accumulate_half(upper, &v_j.col_block(split, d_v)?, &p, &factors, precision)?;
                }
            }
            HalfOrder::UpperFirst => {
                if let Some(upper) = self.o_upper.as_mut() {
                    accumulate_half(upper, &v_j.col_block(split, d_v)?, &p, &factors, precision)?;
                }
                update_lower(&mut self.o_lower)?;
            }
        }
        Ok(())
    }

    /// Normalize by `l`, transpose once, and return `(O_i, L_i)`.
    pub fn finish(&self, precision: Precision, stats: &mut EtapStats) -> (Matrix, Vec<f64>) {
        let mut o_t = self.stacked();
        let l = self.state.sum();
        for d in 0..o_t.rows() {
            for (x, &li) in o_t.row_mut(d).iter_mut().zip(l) {
                *x = precision.accumulate(*x / li);
            }
        }
        stats.transposes += 1;
        (o_t.transpose(), self.state.logsumexp(precision))
    }
}

/// `acc <- acc * diag(factors) + v_half^T p`: column scaling of the
/// transposed accumulator, then the value GEMM.
fn accumulate_half(
    acc: &mut Matrix,
    v_half: &Matrix,
    p: &Matrix,
    factors: &[f64],
    precision: Precision,
) -> Result<()> {
    let contrib = gemm(v_half, p, true, false, precision)?;
    for d in 0..acc.rows() {
        for ((a, &x), &f) in acc.row_mut(d).iter_mut().zip(contrib.row(d)).zip(factors) {
            *a = precision.accumulate(f * *a + x);
        }
    }
    Ok(())
}

fn mismatch(op: &'static str, expected: usize, actual: usize) -> Error {
    Error::DimensionMismatch {
        op,
        expected,
        actual,
    }
}

pub fn run_etap(problem: &AttentionProblem, tiles: &TileConfig) -> Result<AttentionOutput> {
    run_etap_with(problem, tiles, &EtapOptions::default(), &mut ()).map(|(out, _)| out)
}

pub fn run_etap_with(
    problem: &AttentionProblem,
    tiles: &TileConfig,
    options: &EtapOptions,
    observer: &mut impl BlockObserver,
) -> Result<(AttentionOutput, EtapStats)> {
    let dims = problem.dims();
    let precision = problem.precision();
    let mut stats = EtapStats::default();
    let mut o = Matrix::zeros(dims.n_q, dims.d_v)?;
    let mut lse = Vec::with_capacity(dims.n_q);

    for (qb, (q0, q1)) in blocks(dims.n_q, tiles.b_r()).enumerate() {
        let q_i = problem.q().row_block(q0, q1)?;
        let mut acc = EtapAccumulator::new(q1 - q0, dims.d_v)?;
        for (kb, (k0, k1)) in blocks(dims.n_kv, tiles.b_c()).enumerate() {
            let k_j = problem.k().row_block(k0, k1)?;
            let v_j = problem.v().row_block(k0, k1)?;
            acc.block_update_with(&k_j, &v_j, &q_i, problem.scale(), precision, options)?;
            stats.kv_steps += 1;
            observer.on_block(qb, kb, acc.state());
        }
        let (o_i, l_i) = acc.finish(precision, &mut stats);
        for r in 0..o_i.rows() {
            o.row_mut(q0 + r).copy_from_slice(o_i.row(r));
        }
        lse.extend(l_i);
        stats.query_blocks += 1;
    }
    Ok((AttentionOutput { o, lse }, stats))
}
