//! Equivalence and invariant suite behind `etap-lab verify`.

use std::fmt::Write as _;

use etap_core::{
    attention_ref, rmse, run_etap_with, run_standard_observed, AttentionProblem, Dims, EtapOptions,
    Precision, Rescale, SoftmaxState, TileConfig,
};

use crate::config::{count, Flags};
use crate::CliError;

pub const DEFAULT_SEEDS: [u64; 3] = [1, 2, 3];
pub const DEFAULT_SEQ_LENS: [usize; 3] = [64, 257, 1024];
pub const DEFAULT_BCS: [usize; 3] = [16, 64, 100];
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyPlan {
    pub seeds: Vec<u64>,
    pub seq_lens: Vec<usize>,
    pub bcs: Vec<usize>,
    pub n_q: usize,
    pub d_qk: usize,
    pub d_v: usize,
    pub b_r: usize,
    pub stages: usize,
    pub precisions: Vec<Precision>,
    pub scale: Option<f64>,
    pub tolerance: f64,
    pub rescale: Rescale,
}

impl VerifyPlan {
    pub fn from_flags(flags: &Flags) -> Result<Self, CliError> {
        let tolerance = flags.tolerance.unwrap_or(DEFAULT_TOLERANCE);
        if tolerance.is_nan() || tolerance < 0.0 {
            return Err(CliError::Usage(format!(
                "tolerance must be >= 0, got {tolerance}"
            )));
        }
        let heads = count("heads", flags.heads, 16)?;
        let q_tokens = count("q-tokens", flags.q_tokens, 1)?;
        Ok(Self {
            seeds: flags
                .seed
                .map_or_else(|| DEFAULT_SEEDS.to_vec(), |s| vec![s]),
            seq_lens: flags.seq_lens(&DEFAULT_SEQ_LENS)?,
            bcs: flags.bcs(&DEFAULT_BCS)?,
            n_q: heads * q_tokens,
            d_qk: count("d-qk", flags.d_qk, 576)?,
            d_v: count("d-v", flags.d_v, 512)?,
            b_r: count("br", flags.br, 64)?,
            stages: count("stages", flags.stages, 2)?,
            precisions: flags.precisions()?,
            scale: flags.scale()?,
            tolerance,
            rescale: if flags.fault_amplify_rescale {
                Rescale::Amplify
            } else {
                Rescale::Attenuate
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyCase {
    pub seed: u64,
    pub dims: Dims,
    pub b_r: usize,
    pub b_c: usize,
    pub precision: Precision,
}

impl VerifyCase {
    fn csv_prefix(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.seed,
            self.dims.n_q,
            self.dims.n_kv,
            self.dims.d_qk,
            self.dims.d_v,
            self.b_r,
            self.b_c,
            self.precision
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub case: VerifyCase,
    pub check: &'static str,
    /// Max-abs error, or the violation count for `online_invariants`.
    pub value: f64,
    pub rmse: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub tolerance: f64,
    pub rows: Vec<CheckRow>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRow> {
        self.rows.iter().filter(|r| !r.passed)
    }

    pub fn render(&self) -> String {
        let mut s =
            String::from("seed,n_q,n_kv,d_qk,d_v,b_r,b_c,precision,check,max_abs,rmse,status\n");
        for r in &self.rows {
            let rmse = r
                .rmse
                .map_or_else(|| "-".to_string(), |x| format!("{x:.6e}"));
            let status = if r.passed { "pass" } else { "FAIL" };
            writeln!(
                s,
                "{},{},{:.6e},{},{}",
                r.case.csv_prefix(),
                r.check,
                r.value,
                rmse,
                status
            )
            .unwrap();
        }
        let failed = self.failures().count();
        writeln!(
            s,
            "# {} checks, {} failed, tolerance {:e}",
            self.rows.len(),
            failed,
            self.tolerance
        )
        .unwrap();
        s
    }
}

/// Counts running-max decreases and non-positive running sums within each
/// query block.
#[derive(Default)]
struct InvariantCounter {
    last: Option<(usize, Vec<f64>)>,
    violations: usize,
}

impl etap_core::BlockObserver for InvariantCounter {
    fn on_block(&mut self, query_block: usize, _kv_block: usize, state: &SoftmaxState) {
        self.violations += state
            .sum()
            .iter()
            .filter(|&&l| !(l > 0.0 && l.is_finite()))
            .count();
        if let Some((qb, m)) = &self.last {
            if *qb == query_block {
                self.violations += m.iter().zip(state.max()).filter(|(a, b)| a > b).count();
            }
        }
        self.last = Some((query_block, state.max().to_vec()));
    }
}

fn within(value: f64, tolerance: f64) -> bool {
    value <= tolerance
}

pub fn run_verify(plan: &VerifyPlan) -> Result<VerifyReport, CliError> {
    let mut rows = Vec::new();
    let tol = plan.tolerance;
    let options = EtapOptions {
        rescale: plan.rescale,
        ..Default::default()
    };

    for &seed in &plan.seeds {
        for (&n_kv, &precision) in plan
            .seq_lens
            .iter()
            .flat_map(|n| plan.precisions.iter().map(move |p| (n, p)))
        {
            let dims = Dims::new(plan.n_q, n_kv, plan.d_qk, plan.d_v);
            let problem = AttentionProblem::random(seed, dims, plan.scale, precision)?;
            let reference = attention_ref(&problem);
            for &b_c in &plan.bcs {
                let tiles = TileConfig::new(plan.b_r, b_c, plan.stages)?;
                let case = VerifyCase {
                    seed,
                    dims,
                    b_r: plan.b_r,
                    b_c,
                    precision,
                };

                let mut std_inv = InvariantCounter::default();
                let standard = run_standard_observed(&problem, &tiles, &mut std_inv)?;
                let mut etap_inv = InvariantCounter::default();
                let (etap, _) = run_etap_with(&problem, &tiles, &options, &mut etap_inv)?;

                let mut push = |check, value: f64, rmse: Option<f64>, passed| {
                    rows.push(CheckRow {
                        case: case.clone(),
                        check,
                        value,
                        rmse,
                        passed,
                    })
                };
                let e = etap.o.max_abs_diff(&reference.o)?;
                push(
                    "etap_vs_oracle",
                    e,
                    Some(rmse(&etap.o, &reference.o)?),
                    within(e, tol),
                );
                let e = standard.o.max_abs_diff(&reference.o)?;
                push(
                    "standard_vs_oracle",
                    e,
                    Some(rmse(&standard.o, &reference.o)?),
                    within(e, tol),
                );
                let e = etap.o.max_abs_diff(&standard.o)?;
                push(
                    "transposition_equivalence",
                    e,
                    Some(rmse(&etap.o, &standard.o)?),
                    within(e, tol),
                );
                let e = etap
                    .lse_max_abs_diff(&reference)?
                    .max(standard.lse_max_abs_diff(&reference)?);
                push("lse_vs_oracle", e, None, within(e, tol));
                let v = std_inv.violations + etap_inv.violations;
                push("online_invariants", v as f64, None, v == 0);
            }
        }
    }
    Ok(VerifyReport {
        tolerance: tol,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_plan() -> VerifyPlan {
        VerifyPlan {
            seeds: vec![1, 2],
            seq_lens: vec![5, 33],
            bcs: vec![4, 16],
            n_q: 3,
            d_qk: 8,
            d_v: 6,
            b_r: 2,
            stages: 2,
            precisions: vec![Precision::Exact64],
            scale: None,
            tolerance: DEFAULT_TOLERANCE,
            rescale: Rescale::Attenuate,
        }
    }

    #[test]
    fn small_grid_passes() {
        let report = run_verify(&small_plan()).unwrap();
        assert_eq!(report.rows.len(), 2 * 2 * 2 * 5);
        assert!(report.passed(), "{}", report.render());
    }

    #[test]
    fn amplified_rescale_fails_transposition_check() {
        let plan = VerifyPlan {
            rescale: Rescale::Amplify,
            ..small_plan()
        };
        let report = run_verify(&plan).unwrap();
        assert!(!report.passed());
        assert!(report
            .failures()
            .any(|r| r.check == "transposition_equivalence"));
    }

    #[test]
    fn zero_tolerance_fails() {
        let plan = VerifyPlan {
            tolerance: 0.0,
            ..small_plan()
        };
        assert!(!run_verify(&plan).unwrap().passed());
    }

    #[test]
    fn render_is_stable() {
        let a = run_verify(&small_plan()).unwrap().render();
        let b = run_verify(&small_plan()).unwrap().render();
        assert_eq!(a, b);
        assert!(a.starts_with("seed,n_q,n_kv"));
    }
}
