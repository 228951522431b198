//! JSON rendering of a single run.

use coinsensus_core::sim::{RunConfig, RunResult};
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Decision {
    pub pid: u16,
    pub value: u8,
    pub round: u32,
}

/// Field order here is the output order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunReport {
    pub algorithm: &'static str,
    pub n: usize,
    pub t: usize,
    pub seed: u64,
    /// One entry per process; `null` for faulty or undecided ones.
    pub decisions: Vec<Option<Decision>>,
    pub decision_round: Option<u32>,
    pub safety_ok: bool,
    pub violations: Vec<String>,
    pub timed_out: bool,
    pub stalled: bool,
    pub closed_round: u32,
    /// `broadcasts[p][r-1]` for non-faulty `p`; empty for faulty ones.
    pub broadcasts: Vec<Vec<u32>>,
    pub total_events: u64,
    pub max_delay: u64,
    pub delay_cap: u64,
    pub dropped: u64,
    pub set_aside: u64,
    pub byzantine_messages: u64,
    pub gated_peeks: u64,
    pub coin_leaks: u64,
    pub trace_digest: String,
}

impl RunReport {
    pub fn new(cfg: &RunConfig, r: &RunResult) -> Self {
        RunReport {
            algorithm: cfg.algorithm.name(),
            n: cfg.params.n(),
            t: cfg.params.t(),
            seed: cfg.seed,
            decisions: r
                .decisions
                .iter()
                .enumerate()
                .map(|(p, d)| {
                    d.map(|(v, round)| Decision {
                        pid: p as u16,
                        value: v.as_u8(),
                        round: round.get(),
                    })
                })
                .collect(),
            decision_round: r.decision_round(),
            safety_ok: r.safety_ok,
            violations: r.violations.iter().map(ToString::to_string).collect(),
            timed_out: r.timed_out,
            stalled: r.stalled,
            closed_round: r.closed_round,
            broadcasts: r.broadcasts.clone(),
            total_events: r.total_events,
            max_delay: r.max_delay,
            delay_cap: r.delay_cap,
            dropped: r.dropped,
            set_aside: r.set_aside,
            byzantine_messages: r.byzantine_messages,
            gated_peeks: r.gated_peeks,
            coin_leaks: r.coin_leaks,
            trace_digest: hex(r.trace_digest),
        }
    }

    /// Exit status for the CLI: 0 iff safe and not timed out.
    pub fn ok(&self) -> bool {
        self.safety_ok && !self.timed_out
    }
}

pub fn hex(digest: u64) -> String {
    format!("{digest:016x}")
}
