//! Attention pipelines on a binary64 carrier with precision emulation, an
//! analytical WGMMA tile-padding model and a producer/consumer schedule
//! simulator.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, CSV output and
//! the command line live in the `etap-lab` crate.
#![no_std]

extern crate alloc;

pub mod cost_model;
pub mod error;
pub mod etap;
pub mod matrix;
pub mod oracle;
pub mod precision;
pub mod schedule;
pub mod tiled;

pub use error::{Error, Result};
pub use etap::{run_etap, run_etap_with, EtapAccumulator, EtapOptions, EtapStats, HalfOrder};
pub use matrix::{gemm, matrix_from_seed, rmse, Dist, Matrix};
pub use oracle::{attention_ref, default_scale, AttentionOutput, AttentionProblem, Dims};
pub use precision::{round_half, round_single, Precision};
pub use tiled::{
    run_standard, run_standard_observed, BlockObserver, Rescale, SoftmaxState, TileConfig,
};
