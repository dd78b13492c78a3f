//! Cost-model sweep behind `etap-lab model`.

use etap_core::cost_model::{predicted_speedup, utilization, DecodeShape, Mode, WgmmaSpec};
use serde::Serialize;

use crate::config::{count, Flags};
use crate::CliError;

pub const DEFAULT_SEQ_LENS: [usize; 8] = [512, 1024, 2048, 4096, 8192, 16384, 32768, 65536];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelRow {
    pub mode: &'static str,
    pub heads: u64,
    pub q_tokens: u64,
    pub kv_len: u64,
    pub d_qk: u64,
    pub d_v: u64,
    pub batch: u64,
    pub useful_macs: u64,
    pub issued_macs: u64,
    pub utilization: f64,
    pub qk_utilization: f64,
    pub pv_utilization: f64,
    pub predicted_speedup: f64,
    pub effective_tflops: Option<f64>,
}

pub fn spec_from_flags(flags: &Flags) -> Result<WgmmaSpec, CliError> {
    let d = WgmmaSpec::default();
    let step = |name, v: Option<u64>, default| match v.unwrap_or(default) {
        0 => Err(CliError::Usage(format!("{name} must be >= 1"))),
        x => Ok(x),
    };
    Ok(WgmmaSpec {
        m_min: step("m-min", flags.m_min, d.m_min)?,
        n_step: step("n-step", flags.n_step, d.n_step)?,
        k_step: step("k-step", flags.k_step, d.k_step)?,
        peak_tflops: flags.peak_tflops.or(d.peak_tflops),
    })
}

pub fn shapes_from_flags(flags: &Flags) -> Result<Vec<DecodeShape>, CliError> {
    let heads = count("heads", flags.heads, 16)? as u64;
    let q_tokens = count("q-tokens", flags.q_tokens, 1)? as u64;
    let d_qk = count("d-qk", flags.d_qk, 576)? as u64;
    let d_v = count("d-v", flags.d_v, 512)? as u64;
    let batch = count("batch", flags.batch, 1)? as u64;
    Ok(flags
        .seq_lens(&DEFAULT_SEQ_LENS)?
        .into_iter()
        .map(|kv| DecodeShape {
            heads,
            q_tokens,
            kv_len: kv as u64,
            d_qk,
            d_v,
            batch,
        })
        .collect())
}

/// Two rows (original, etap) per shape, in input order.
pub fn model_rows(shapes: &[DecodeShape], spec: &WgmmaSpec) -> Vec<ModelRow> {
    let mut rows = Vec::with_capacity(2 * shapes.len());
    for shape in shapes {
        let speedup = predicted_speedup(shape, spec);
        for mode in [Mode::Original, Mode::Etap] {
            let r = utilization(mode, shape, spec);
            rows.push(ModelRow {
                mode: mode.label(),
                heads: shape.heads,
                q_tokens: shape.q_tokens,
                kv_len: shape.kv_len,
                d_qk: shape.d_qk,
                d_v: shape.d_v,
                batch: shape.batch,
                useful_macs: r.useful_macs,
                issued_macs: r.issued_macs,
                utilization: r.utilization,
                qk_utilization: r.per_gemm[0].utilization(),
                pv_utilization: r.per_gemm[1].utilization(),
                predicted_speedup: speedup,
                effective_tflops: r.effective_tflops(spec),
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sweep() {
        let shapes = shapes_from_flags(&Flags::default()).unwrap();
        let rows = model_rows(&shapes, &WgmmaSpec::default());
        assert_eq!(rows.len(), 16);
        assert!(rows
            .iter()
            .filter(|r| r.mode == "original")
            .all(|r| r.utilization == 0.25));
        assert!(rows
            .iter()
            .filter(|r| r.mode == "etap")
            .all(|r| r.utilization == 1.0));
        let speedups: Vec<f64> = rows
            .iter()
            .step_by(2)
            .map(|r| r.predicted_speedup)
            .collect();
        assert!(speedups.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn zero_steps_rejected() {
        let flags = Flags {
            m_min: Some(0),
            ..Default::default()
        };
        assert!(spec_from_flags(&flags).is_err());
    }
}
