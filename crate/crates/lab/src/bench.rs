//! Desk-scale timing harness behind `etap-lab bench`.

use std::time::Instant;

use etap_core::cost_model::{utilization, DecodeShape, Mode, WgmmaSpec};
use etap_core::{
    attention_ref, rmse, run_etap, run_standard, AttentionOutput, AttentionProblem, Dims, Matrix,
    Precision, TileConfig,
};
use serde::Serialize;

use crate::config::{count, Flags, PipelineMode};
use crate::CliError;

pub const DEFAULT_SEQ_LENS: [usize; 6] = [512, 1024, 2048, 4096, 8192, 16384];
/// Longest context run by default; the naive oracle stays cheap up to here.
pub const DESK_MAX_SEQ_LEN: usize = 16384;
pub const DEFAULT_MAX_S_BYTES: usize = 256 << 20;

/// One CSV row; field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub mode: &'static str,
    pub n_q: usize,
    pub n_kv: usize,
    pub d_qk: usize,
    pub d_v: usize,
    pub batch: usize,
    pub b_r: usize,
    pub b_c: usize,
    pub stages: usize,
    pub precision: &'static str,
    /// Mean over `repeats` runs.
    pub wall_time_ms: f64,
    pub wall_time_median_ms: f64,
    pub achieved_gmacs_per_s: f64,
    pub modeled_utilization: f64,
    pub rmse_vs_oracle: f64,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchPlan {
    pub modes: Vec<PipelineMode>,
    pub seq_lens: Vec<usize>,
    pub batch: usize,
    pub heads: usize,
    pub q_tokens: usize,
    pub d_qk: usize,
    pub d_v: usize,
    pub tiles: TileConfig,
    pub precisions: Vec<Precision>,
    pub scale: Option<f64>,
    pub seed: u64,
    pub repeats: usize,
    pub allow_large: bool,
    pub max_s_bytes: usize,
}

impl BenchPlan {
    pub fn from_flags(flags: &Flags) -> Result<Self, CliError> {
        let bcs = flags.bcs(&[64])?;
        if bcs.len() != 1 {
            return Err(CliError::Usage("bench takes a single --bc".into()));
        }
        let plan = Self {
            modes: flags.modes()?,
            seq_lens: flags.seq_lens(&DEFAULT_SEQ_LENS)?,
            batch: count("batch", flags.batch, 1)?,
            heads: count("heads", flags.heads, 16)?,
            q_tokens: count("q-tokens", flags.q_tokens, 1)?,
            d_qk: count("d-qk", flags.d_qk, 576)?,
            d_v: count("d-v", flags.d_v, 512)?,
            tiles: TileConfig::new(
                count("br", flags.br, 64)?,
                bcs[0],
                count("stages", flags.stages, 2)?,
            )?,
            precisions: flags.precisions()?,
            scale: flags.scale()?,
            seed: flags.seed.unwrap_or(0),
            repeats: count("repeats", flags.repeats, 5)?,
            allow_large: flags.allow_large,
            max_s_bytes: flags.max_s_bytes.unwrap_or(DEFAULT_MAX_S_BYTES),
        };
        plan.check_budget()?;
        Ok(plan)
    }

    pub fn n_q(&self) -> usize {
        self.heads * self.q_tokens
    }

    fn s_bytes(&self, n_kv: usize) -> usize {
        self.n_q().saturating_mul(n_kv).saturating_mul(8)
    }

    /// Whether the naive oracle is run for this context length.
    pub fn naive_allowed(&self, n_kv: usize) -> bool {
        n_kv <= DESK_MAX_SEQ_LEN && self.s_bytes(n_kv) <= self.max_s_bytes
    }

    fn check_budget(&self) -> Result<(), CliError> {
        if self.allow_large {
            return Ok(());
        }
        match self.seq_lens.iter().find(|&&n| !self.naive_allowed(n)) {
            Some(n) => Err(CliError::Usage(format!(
                "seq-len {n} exceeds the desk-scale limit ({DESK_MAX_SEQ_LEN} tokens, {} bytes of scores); pass --allow-large",
                self.max_s_bytes
            ))),
            None => Ok(()),
        }
    }
}

fn run_mode(
    mode: PipelineMode,
    problem: &AttentionProblem,
    tiles: &TileConfig,
) -> Result<AttentionOutput, CliError> {
    Ok(match mode {
        PipelineMode::Naive => attention_ref(problem),
        PipelineMode::Standard => run_standard(problem, tiles)?,
        PipelineMode::Etap => run_etap(problem, tiles)?,
    })
}

fn stack(outputs: &[Matrix]) -> Matrix {
    outputs[1..].iter().fold(outputs[0].clone(), |acc, m| {
        acc.vstack(m).expect("same width")
    })
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Rows in config order: sequence length outer, then precision, mode inner. Naive rows are
/// skipped for contexts beyond the desk limit; there the exact64 standard
/// pipeline is the reference.
pub fn run_bench(
    plan: &BenchPlan,
    mut on_skip: impl FnMut(&str),
) -> Result<Vec<BenchResult>, CliError> {
    let mut rows = Vec::new();
    let spec = WgmmaSpec::default();
    for (&n_kv, &precision) in plan
        .seq_lens
        .iter()
        .flat_map(|n| plan.precisions.iter().map(move |p| (n, p)))
    {
        let dims = Dims::new(plan.n_q(), n_kv, plan.d_qk, plan.d_v);
        let problems = (0..plan.batch as u64)
            .map(|b| {
                AttentionProblem::random(plan.seed.wrapping_add(b), dims, plan.scale, precision)
            })
            .collect::<Result<Vec<_>, _>>()?;

        let naive_ok = plan.naive_allowed(n_kv);
        let reference = stack(
            &problems
                .iter()
                .map(|p| {
                    Ok(if naive_ok {
                        attention_ref(p).o
                    } else {
                        run_standard(&p.with_precision(Precision::Exact64), &plan.tiles)?.o
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?,
        );

        let shape = DecodeShape {
            heads: plan.heads as u64,
            q_tokens: plan.q_tokens as u64,
            kv_len: n_kv as u64,
            d_qk: plan.d_qk as u64,
            d_v: plan.d_v as u64,
            batch: plan.batch as u64,
        };
        let useful_macs = (plan.batch * plan.n_q() * n_kv * (plan.d_qk + plan.d_v)) as f64;

        for &mode in &plan.modes {
            if mode == PipelineMode::Naive && !naive_ok {
                on_skip(&format!(
                    "skipping naive mode at seq-len {n_kv} (beyond desk-scale limit)"
                ));
                continue;
            }
            let mut times = Vec::with_capacity(plan.repeats);
            let mut first = None;
            for _ in 0..plan.repeats {
                let start = Instant::now();
                let outs = problems
                    .iter()
                    .map(|p| run_mode(mode, p, &plan.tiles).map(|o| o.o))
                    .collect::<Result<Vec<_>, _>>()?;
                // Clamp so the positive-time invariant holds on coarse clocks.
                times.push((start.elapsed().as_secs_f64() * 1e3).max(1e-6));
                first.get_or_insert(outs);
            }
            let out = stack(&first.expect("repeats >= 1"));
            let mean = times.iter().sum::<f64>() / times.len() as f64;
            let model_mode = match mode {
                PipelineMode::Naive | PipelineMode::Standard => Mode::Original,
                PipelineMode::Etap => Mode::Etap,
            };
            rows.push(BenchResult {
                mode: mode.label(),
                n_q: plan.n_q(),
                n_kv,
                d_qk: plan.d_qk,
                d_v: plan.d_v,
                batch: plan.batch,
                b_r: plan.tiles.b_r(),
                b_c: plan.tiles.b_c(),
                stages: plan.tiles.stages(),
                precision: precision.label(),
                wall_time_ms: mean,
                wall_time_median_ms: median(&mut times),
                achieved_gmacs_per_s: useful_macs / (mean * 1e-3) / 1e9,
                modeled_utilization: utilization(model_mode, &shape, &spec).utilization,
                rmse_vs_oracle: rmse(&out, &reference)?,
                repeats: plan.repeats,
            });
        }
    }
    Ok(rows)
}
