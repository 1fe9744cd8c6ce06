//! Analytic cycle model of the accelerator.
//!
//! The NN module is a weight-stationary systolic array of `w_sys` columns by
//! `h_sys` rows whose rows drain through tree adders of depth `log2 w_sys`.
//! The HD module is a pipeline of level lookups, binding units, bundling
//! trees, comparators, distance tree adders and a tree comparator. Only
//! cycles and wall-clock latency are modeled; area and power are not.

mod config;
mod hd;
mod report;
mod schedule;
mod systolic;

pub use config::{HdSection, PerfConfig};
pub use hd::{hd_latency, HdLatency, HdMode, HdPipeConfig};
pub use report::{format_report, report, write_report_csv, ReportRow, REPORT_COLUMNS};
pub use schedule::{candidates, compile, match_latency, simulate, Candidate, Instruction, LoopOrder, Schedule};
pub use systolic::{layer_cycles, network_cycles, NetworkCycles, NetworkShape, SystolicConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PerfError {
    #[error("w_sys must be a power of two, got {0}")]
    NotPowerOfTwo(usize),
    #[error("{0} must be at least 1")]
    Zero(&'static str),
    #[error("array {w}x{h} exceeds the PE budget {budget}")]
    OverBudget { w: usize, h: usize, budget: usize },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("no candidate schedules")]
    EmptyCandidates,
    #[error("malformed schedule at instruction {index}: {reason}")]
    Malformed { index: usize, reason: String },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
}

/// Smallest `k` with `base^k >= n`; 0 for `n <= 1`.
pub(crate) fn ceil_log(base: usize, n: usize) -> usize {
    debug_assert!(base >= 2);
    let mut k = 0;
    let mut reach = 1usize;
    while reach < n {
        reach = reach.saturating_mul(base);
        k += 1;
    }
    k
}
