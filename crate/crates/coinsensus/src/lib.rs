//! Command-line harness for `coinsensus-core`: single runs, Monte-Carlo
//! sweeps with summary statistics, JSONL trace files, and an exhaustive
//! checker for the broadcast abstractions at `n = 4, t = 1`.

pub mod check;
pub mod config;
pub mod report;
pub mod stats;
pub mod sweep;
pub mod tracefile;
