//! Multiply-accumulate accounting for WGMMA tile padding.
//!
//! Hopper's WGMMA needs an M extent of at least 64. A decode step with 16
//! heads and one query token puts 16 rows on M, so the original query-major
//! mapping issues four times the useful work. Moving the KV length onto M
//! (the transposed mapping) leaves only the query count on N, which pads to a
//! multiple of 8.
//!
//! The model counts MACs only; memory traffic, softmax ALU work and barrier
//! latency are ignored. Its speedup is therefore an upper bound: published
//! H20 measurements report 2.78x at a 64K context against this model's ~4x.

/// Tile-granularity constraints of the matrix instruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WgmmaSpec {
    /// Minimum M extent; M is also padded to multiples of it.
    pub m_min: u64,
    pub n_step: u64,
    pub k_step: u64,
    /// Dense FP16 peak used to translate utilization into throughput.
    pub peak_tflops: Option<f64>,
}

impl Default for WgmmaSpec {
    fn default() -> Self {
        Self {
            m_min: 64,
            n_step: 8,
            k_step: 16,
            peak_tflops: Some(148.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    M,
    N,
    K,
}

/// GEMM axis assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Queries on M (`S = Q K^T`, `O = P V`).
    Original,
    /// KV length on M (`S^T = K Q^T`, `O^T = V^T P^T`).
    Etap,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Original => "original",
            Mode::Etap => "etap",
        }
    }
}

/// Decode workload dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DecodeShape {
    pub heads: u64,
    pub q_tokens: u64,
    pub kv_len: u64,
    pub d_qk: u64,
    pub d_v: u64,
    pub batch: u64,
}

impl DecodeShape {
    /// 16 heads, one query token, 576/512 head dims, batch 1.
    pub fn decode(kv_len: u64) -> Self {
        Self {
            heads: 16,
            q_tokens: 1,
            kv_len,
            d_qk: 576,
            d_v: 512,
            batch: 1,
        }
    }

    /// Query rows folded from heads and tokens.
    pub fn queries(&self) -> u64 {
        self.heads * self.q_tokens
    }

    fn is_valid(&self) -> bool {
        [
            self.heads,
            self.q_tokens,
            self.kv_len,
            self.d_qk,
            self.d_v,
            self.batch,
        ]
        .iter()
        .all(|&x| x >= 1)
    }
}

/// Logical and padded extents of one GEMM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GemmCost {
    pub m: u64,
    pub n: u64,
    pub k: u64,
    pub padded_m: u64,
    pub padded_n: u64,
    pub padded_k: u64,
}

impl GemmCost {
    fn new(m: u64, n: u64, k: u64, spec: &WgmmaSpec) -> Self {
        Self {
            m,
            n,
            k,
            padded_m: padded_extent(m, Axis::M, spec),
            padded_n: padded_extent(n, Axis::N, spec),
            padded_k: padded_extent(k, Axis::K, spec),
        }
    }

    pub fn useful_macs(&self) -> u64 {
        self.m * self.n * self.k
    }

    pub fn issued_macs(&self) -> u64 {
        self.padded_m * self.padded_n * self.padded_k
    }

    pub fn utilization(&self) -> f64 {
        self.useful_macs() as f64 / self.issued_macs() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilizationReport {
    pub mode: Mode,
    pub useful_macs: u64,
    pub issued_macs: u64,
    pub utilization: f64,
    /// Logit GEMM then value GEMM, per batch element.
    pub per_gemm: [GemmCost; 2],
}

impl UtilizationReport {
    /// Fraction of `peak_tflops` left after padding.
    pub fn effective_tflops(&self, spec: &WgmmaSpec) -> Option<f64> {
        spec.peak_tflops.map(|p| p * self.utilization)
    }
}

fn round_up(x: u64, step: u64) -> u64 {
    x.div_ceil(step) * step
}

/// Least legal extent covering `logical` on `axis`.
pub fn padded_extent(logical: u64, axis: Axis, spec: &WgmmaSpec) -> u64 {
    match axis {
        Axis::M => round_up(logical, spec.m_min).max(spec.m_min),
        Axis::N => round_up(logical, spec.n_step),
        Axis::K => round_up(logical, spec.k_step),
    }
}

/// Useful versus issued MACs for one decode step.
///
/// # Panics
///
/// If any shape field is zero.
pub fn utilization(mode: Mode, shape: &DecodeShape, spec: &WgmmaSpec) -> UtilizationReport {
    assert!(shape.is_valid(), "decode shape fields must be >= 1");
    let q = shape.queries();
    let kv = shape.kv_len;
    let per_gemm = match mode {
        Mode::Original => [
            GemmCost::new(q, kv, shape.d_qk, spec),
            GemmCost::new(q, shape.d_v, kv, spec),
        ],
        Mode::Etap => [
            GemmCost::new(kv, q, shape.d_qk, spec),
            GemmCost::new(shape.d_v, q, kv, spec),
        ],
    };
    let useful: u64 = per_gemm.iter().map(GemmCost::useful_macs).sum::<u64>() * shape.batch;
    let issued: u64 = per_gemm.iter().map(GemmCost::issued_macs).sum::<u64>() * shape.batch;
    UtilizationReport {
        mode,
        useful_macs: useful,
        issued_macs: issued,
        utilization: useful as f64 / issued as f64,
        per_gemm,
    }
}

/// MAC-equivalent charge for the single output transpose of the transposed
/// mapping: `d_v * queries` per batch element.
pub fn transpose_cost(shape: &DecodeShape) -> u64 {
    shape.d_v * shape.queries() * shape.batch
}

/// Issued work of the original mapping over issued work (plus the output
/// transpose) of the transposed mapping.
pub fn predicted_speedup(shape: &DecodeShape, spec: &WgmmaSpec) -> f64 {
    let original = utilization(Mode::Original, shape, spec).issued_macs;
    let etap = utilization(Mode::Etap, shape, spec).issued_macs + transpose_cost(shape);
    original as f64 / etap as f64
}
