//! `etap-lab simulate`: schedule trace as CSV plus a summary line.

use etap_core::schedule::{simulate, PipelineTrace, ScheduleConfig};
use serde::Serialize;

use crate::config::{count, Flags};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRow {
    pub time: u64,
    pub actor: &'static str,
    pub action: &'static str,
    pub stage: u64,
    pub block: u64,
}

pub fn config_from_flags(flags: &Flags) -> Result<ScheduleConfig, CliError> {
    let t_c = match flags.blocks {
        Some(b) => b,
        None => {
            let seq = flags.seq_lens(&[4096])?;
            if seq.len() != 1 {
                return Err(CliError::Usage("simulate takes a single --seq-len".into()));
            }
            let bcs = flags.bcs(&[64])?;
            if bcs.len() != 1 {
                return Err(CliError::Usage("simulate takes a single --bc".into()));
            }
            seq[0].div_ceil(bcs[0]) as u64
        }
    };
    let cfg = ScheduleConfig {
        t_c,
        stages: count("stages", flags.stages, 2)? as u64,
        t_load: flags.t_load.unwrap_or(2),
        t_compute: flags.t_compute.unwrap_or(3),
        t_barrier: flags.t_barrier.unwrap_or(0),
        split: flags.split,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn trace_rows(trace: &PipelineTrace) -> Vec<TraceRow> {
    trace
        .events
        .iter()
        .map(|e| TraceRow {
            time: e.time,
            actor: e.actor.label(),
            action: e.action.label(),
            stage: e.stage,
            block: e.block,
        })
        .collect()
}

pub fn summary(cfg: &ScheduleConfig, trace: &PipelineTrace) -> String {
    format!(
        "makespan={} stall_time={} exposed_load={} t_c={} stages={} t_load={} t_compute={} t_barrier={} split={}",
        trace.makespan,
        trace.stall_time,
        trace.exposed_load,
        cfg.t_c,
        cfg.stages,
        cfg.t_load,
        cfg.t_compute,
        cfg.t_barrier,
        cfg.split
    )
}

pub fn run(cfg: &ScheduleConfig) -> Result<PipelineTrace, CliError> {
    Ok(simulate(cfg)?)
}
