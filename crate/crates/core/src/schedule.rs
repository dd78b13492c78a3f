//! Discrete-time simulation of the producer/consumer block pipeline.
//!
//! One producer streams K/V blocks into an `s`-slot circular buffer; one
//! consumer waits for block `j`, pays the per-block barrier, computes, then
//! releases slot `j mod s` so the producer can refill it with block `j + s`.
//! The Q load is issued together with block 0 and lands with it.
//!
//! In split mode the value update is divided between the consumer (lower half,
//! `ceil(t_compute / 2)`) and the producer (upper half, `floor(t_compute / 2)`,
//! started one barrier after the consumer). A slot is released once both
//! halves are done.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScheduleConfig {
    pub t_c: u64,
    pub stages: u64,
    pub t_load: u64,
    pub t_compute: u64,
    pub t_barrier: u64,
    pub split: bool,
}

impl ScheduleConfig {
    pub fn new(t_c: u64, stages: u64, t_load: u64, t_compute: u64) -> Self {
        Self {
            t_c,
            stages,
            t_load,
            t_compute,
            t_barrier: 0,
            split: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_c == 0 {
            return Err(Error::InvalidSchedule("t_c must be >= 1"));
        }
        if self.stages == 0 {
            return Err(Error::InvalidSchedule("stages must be >= 1"));
        }
        if self.t_load == 0 {
            return Err(Error::InvalidSchedule("t_load must be > 0"));
        }
        if self.t_compute == 0 {
            return Err(Error::InvalidSchedule("t_compute must be > 0"));
        }
        Ok(())
    }

    /// Compute time the consumer itself spends per block.
    pub fn consumer_compute(&self) -> u64 {
        if self.split {
            self.t_compute.div_ceil(2)
        } else {
            self.t_compute
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Actor {
    Producer,
    Consumer,
}

impl Actor {
    pub fn label(self) -> &'static str {
        match self {
            Actor::Producer => "producer",
            Actor::Consumer => "consumer",
        }
    }
}

/// Event kinds. The declaration order is the tie-break order for events that
/// share a timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    ComputeDone,
    Release,
    LoadDone,
    ComputeStart,
    LoadIssue,
}

impl Action {
    pub fn label(self) -> &'static str {
        match self {
            Action::LoadIssue => "load_issue",
            Action::LoadDone => "load_done",
            Action::ComputeStart => "compute_start",
            Action::ComputeDone => "compute_done",
            Action::Release => "release",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub time: u64,
    pub actor: Actor,
    pub action: Action,
    pub stage: u64,
    pub block: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineTrace {
    pub events: Vec<Event>,
    /// Time of the last compute completion.
    pub makespan: u64,
    /// Consumer idle time after the first block has landed.
    pub stall_time: u64,
    /// Load latency that nothing can overlap (block 0).
    pub exposed_load: u64,
}

/// Broken trace invariant found by [`PipelineTrace::check`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    SlotReusedBeforeRelease { block: u64 },
    ComputeBeforeLoad { block: u64 },
    OutOfOrder { block: u64 },
    MissingEvent { block: u64, action: Action },
    Accounting { expected: u64, actual: u64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SlotReusedBeforeRelease { block } => {
                write!(f, "block {block} loaded before its slot was released")
            }
            Violation::ComputeBeforeLoad { block } => {
                write!(f, "block {block} computed before its load completed")
            }
            Violation::OutOfOrder { block } => write!(f, "block {block} completed out of order"),
            Violation::MissingEvent { block, action } => {
                write!(f, "block {block} has no {} event", action.label())
            }
            Violation::Accounting { expected, actual } => {
                write!(
                    f,
                    "stall accounting expected {expected}, trace reports {actual}"
                )
            }
        }
    }
}

/// Greedy earliest-start schedule.
pub fn simulate(cfg: &ScheduleConfig) -> Result<PipelineTrace> {
    cfg.validate()?;
    let n = cfg.t_c as usize;
    let s = cfg.stages;
    let mut events = Vec::with_capacity(n * 6);

    let mut load_done = vec![0u64; n];
    let mut release = vec![0u64; n];
    let mut producer_free = 0u64;
    let mut consumer_free = 0u64;
    let mut consumer_busy = 0u64;
    let mut stall = 0u64;

    let half_consumer = cfg.consumer_compute();
    let half_producer = cfg.t_compute - half_consumer;

    let issue_load = |j: usize,
                      producer_free: &mut u64,
                      release: &[u64],
                      load_done: &mut [u64],
                      events: &mut Vec<Event>| {
        let slot_free = if (j as u64) < s {
            0
        } else {
            release[j - s as usize]
        };
        let start = (*producer_free).max(slot_free);
        let done = start + cfg.t_load;
        let stage = j as u64 % s;
        events.push(ev(start, Actor::Producer, Action::LoadIssue, stage, j));
        events.push(ev(done, Actor::Producer, Action::LoadDone, stage, j));
        load_done[j] = done;
        *producer_free = done;
    };

    // The producer's program order: with two or more slots it prefetches the
    // next block before taking its share of the current one; with one slot
    // the next load must wait for the release, so it comes after.
    issue_load(0, &mut producer_free, &release, &mut load_done, &mut events);
    for j in 0..n {
        let stage = j as u64 % s;
        let prefetch_first = s >= 2;
        if prefetch_first && j + 1 < n && !cfg.split {
            // Fused mode: the load does not depend on block j at all.
            issue_load(
                j + 1,
                &mut producer_free,
                &release,
                &mut load_done,
                &mut events,
            );
        }

        let ready = if j == 0 { load_done[0] } else { consumer_free };
        let start = consumer_free.max(load_done[j]) + cfg.t_barrier;
        stall += start - ready;
        let done = start + half_consumer;
        consumer_busy += half_consumer;
        events.push(ev(start, Actor::Consumer, Action::ComputeStart, stage, j));
        events.push(ev(done, Actor::Consumer, Action::ComputeDone, stage, j));
        consumer_free = done;

        let mut released = done;
        if cfg.split {
            if prefetch_first && j + 1 < n {
                issue_load(
                    j + 1,
                    &mut producer_free,
                    &release,
                    &mut load_done,
                    &mut events,
                );
            }
            let p_start = producer_free.max(start) + cfg.t_barrier;
            let p_done = p_start + half_producer;
            events.push(ev(p_start, Actor::Producer, Action::ComputeStart, stage, j));
            events.push(ev(p_done, Actor::Producer, Action::ComputeDone, stage, j));
            producer_free = p_done;
            released = released.max(p_done);
        }
        release[j] = released;
        events.push(ev(released, Actor::Consumer, Action::Release, stage, j));

        if !prefetch_first && j + 1 < n {
            issue_load(
                j + 1,
                &mut producer_free,
                &release,
                &mut load_done,
                &mut events,
            );
        }
    }

    events.sort_by_key(|e| (e.time, e.action, e.block, e.actor));
    let makespan = release[n - 1];
    let exposed_load = load_done[0];
    let trace = PipelineTrace {
        events,
        makespan,
        stall_time: if cfg.split {
            makespan - exposed_load - consumer_busy
        } else {
            stall
        },
        exposed_load,
    };
    debug_assert_eq!(trace.stall_time, makespan - exposed_load - consumer_busy);
    Ok(trace)
}

fn ev(time: u64, actor: Actor, action: Action, stage: u64, block: usize) -> Event {
    Event {
        time,
        actor,
        action,
        stage,
        block: block as u64,
    }
}

impl PipelineTrace {
    /// Replay the event log and re-check buffer safety, load-before-compute,
    /// in-order completion and the stall accounting identity.
    pub fn check(&self, cfg: &ScheduleConfig) -> core::result::Result<(), Violation> {
        let n = cfg.t_c as usize;
        let mut load_issue = vec![None; n];
        let mut load_done = vec![None; n];
        let mut first_start = vec![None; n];
        let mut last_done = vec![None; n];
        let mut release = vec![None; n];
        let mut consumer_busy = 0u64;
        let mut consumer_start = vec![0u64; n];

        // position in the log, for "precedes" checks on equal timestamps
        for (pos, e) in self.events.iter().enumerate() {
            let b = e.block as usize;
            let stamp = Some((e.time, pos));
            match e.action {
                Action::LoadIssue => load_issue[b] = stamp,
                Action::LoadDone => load_done[b] = stamp,
                Action::ComputeStart => {
                    first_start[b] = first_start[b].or(stamp);
                    if e.actor == Actor::Consumer {
                        consumer_start[b] = e.time;
                    }
                }
                Action::ComputeDone => {
                    last_done[b] = stamp;
                    if e.actor == Actor::Consumer {
                        consumer_busy += e.time - consumer_start[b];
                    }
                }
                Action::Release => release[b] = stamp,
            }
        }

        let need = |v: &[Option<(u64, usize)>], b: usize, action| {
            v[b].ok_or(Violation::MissingEvent {
                block: b as u64,
                action,
            })
        };
        let s = cfg.stages as usize;
        let mut prev_done = None;
        for b in 0..n {
            let issued = need(&load_issue, b, Action::LoadIssue)?;
            let landed = need(&load_done, b, Action::LoadDone)?;
            let started = need(&first_start, b, Action::ComputeStart)?;
            let done = need(&last_done, b, Action::ComputeDone)?;
            need(&release, b, Action::Release)?;
            if b >= s {
                let freed = need(&release, b - s, Action::Release)?;
                if freed > issued {
                    return Err(Violation::SlotReusedBeforeRelease { block: b as u64 });
                }
            }
            if landed > started {
                return Err(Violation::ComputeBeforeLoad { block: b as u64 });
            }
            if prev_done.is_some_and(|p| p > done) {
                return Err(Violation::OutOfOrder { block: b as u64 });
            }
            prev_done = Some(done);
        }

        let makespan = self.events.iter().map(|e| e.time).max().unwrap_or(0);
        let exposed = load_done[0].map_or(0, |(t, _)| t);
        let expected = makespan - exposed - consumer_busy;
        if expected != self.stall_time || makespan != self.makespan {
            return Err(Violation::Accounting {
                expected,
                actual: self.stall_time,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_invalid_config() {
        assert!(simulate(&ScheduleConfig::new(0, 1, 1, 1)).is_err());
        assert!(simulate(&ScheduleConfig::new(1, 0, 1, 1)).is_err());
        assert!(simulate(&ScheduleConfig::new(1, 1, 0, 1)).is_err());
        assert!(simulate(&ScheduleConfig::new(1, 1, 1, 0)).is_err());
    }

    #[test]
    fn hand_stepped_double_buffer() {
        // t_c = 4, load 2, compute 3
        //   load:    [0,2] [2,4] [5,7] [8,10]
        //   compute: [2,5] [5,8] [8,11] [11,14]
        let trace = simulate(&ScheduleConfig::new(4, 2, 2, 3)).unwrap();
        let issues: Vec<u64> = trace
            .events
            .iter()
            .filter(|e| e.action == Action::LoadIssue)
            .map(|e| e.time)
            .collect();
        assert_eq!(issues, vec![0, 2, 5, 8]);
        assert_eq!(trace.makespan, 14);
        assert_eq!(trace.stall_time, 0);
        trace.check(&ScheduleConfig::new(4, 2, 2, 3)).unwrap();
    }

    #[test]
    fn hand_stepped_load_bound() {
        // load 4, compute 2: compute j runs [4(j+1), 4(j+1)+2]
        let cfg = ScheduleConfig::new(4, 2, 4, 2);
        let trace = simulate(&cfg).unwrap();
        assert_eq!(trace.makespan, 18);
        assert_eq!(trace.stall_time, 18 - 4 - 8);
        trace.check(&cfg).unwrap();
    }

    #[test]
    fn single_slot_with_barrier_serializes() {
        let cfg = ScheduleConfig {
            t_barrier: 1,
            ..ScheduleConfig::new(5, 1, 3, 2)
        };
        let trace = simulate(&cfg).unwrap();
        assert_eq!(trace.makespan, 5 * (3 + 2 + 1));
        trace.check(&cfg).unwrap();
    }

    #[test]
    fn split_mode_traces_are_legal() {
        for stages in 1..4 {
            let cfg = ScheduleConfig {
                split: true,
                t_barrier: 1,
                ..ScheduleConfig::new(7, stages, 3, 5)
            };
            let trace = simulate(&cfg).unwrap();
            trace.check(&cfg).unwrap();
            let producer_computes = trace
                .events
                .iter()
                .filter(|e| e.actor == Actor::Producer && e.action == Action::ComputeStart)
                .count();
            assert_eq!(producer_computes, 7);
        }
    }

    #[test]
    fn tampered_trace_is_caught() {
        let cfg = ScheduleConfig::new(4, 1, 2, 3);
        let mut trace = simulate(&cfg).unwrap();
        let issue = trace
            .events
            .iter_mut()
            .find(|e| e.action == Action::LoadIssue && e.block == 2)
            .unwrap();
        issue.time = 0;
        trace
            .events
            .sort_by_key(|e| (e.time, e.action, e.block, e.actor));
        assert_eq!(
            trace.check(&cfg),
            Err(Violation::SlotReusedBeforeRelease { block: 2 })
        );
    }
}
