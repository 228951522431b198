//! Global checks over the non-faulty processes of a run.

use alloc::vec::Vec;
use core::fmt;

use crate::error::Error;
use crate::strong::StrongProcess;
use crate::types::{BinValue, EstValue, ProcessId, Protocol, Round, ValueSet};
use crate::weak::WeakProcess;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// Two non-faulty processes decided differently.
    Agreement {
        first: (ProcessId, BinValue),
        other: (ProcessId, BinValue),
    },
    /// A decided value no non-faulty process proposed.
    Validity { pid: ProcessId, value: BinValue },
    /// A state machine reported an impossible situation.
    Protocol { pid: ProcessId, error: Error },
    /// Non-faulty inputs to `stage[r,1]` contained both binary values.
    OneSidedStage1 { round: Round },
    /// After a decision on `v`, a later view was not `{v}` or the flag for
    /// `¬v` came up.
    PostDecisionLockstep { pid: ProcessId, round: Round },
    /// Non-faulty processes S-Broadcast different values in one round.
    SBroadcastMismatch { round: Round },
    /// A message waited longer than the fairness cap.
    Fairness { delay: u64, cap: u64 },
    /// After the final drain a non-faulty process had not left the last
    /// decision round.
    IncompleteRound { pid: ProcessId, round: Round },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Agreement { first, other } => write!(
                f,
                "agreement: {} decided {} but {} decided {}",
                first.0, first.1, other.0, other.1
            ),
            Violation::Validity { pid, value } => {
                write!(
                    f,
                    "validity: {pid} decided {value}, which no correct process proposed"
                )
            }
            Violation::Protocol { pid, error } => write!(f, "protocol error at {pid}: {error}"),
            Violation::OneSidedStage1 { round } => {
                write!(f, "round {round}: phase-one inputs hold both binary values")
            }
            Violation::PostDecisionLockstep { pid, round } => {
                write!(f, "round {round}: {pid} left lockstep after a decision")
            }
            Violation::SBroadcastMismatch { round } => {
                write!(
                    f,
                    "round {round}: correct processes S-Broadcast different values"
                )
            }
            Violation::Fairness { delay, cap } => {
                write!(f, "fairness: a message waited {delay} ticks, cap {cap}")
            }
            Violation::IncompleteRound { pid, round } => {
                write!(f, "{pid} still in round {round} after the final drain")
            }
        }
    }
}

impl Violation {
    /// Agreement and validity failures: the consensus guarantees proper.
    pub fn is_consensus_failure(&self) -> bool {
        matches!(
            self,
            Violation::Agreement { .. } | Violation::Validity { .. }
        )
    }
}

pub struct Observer {
    proposed: ValueSet,
    first: Option<(ProcessId, BinValue, Round)>,
    pub violations: Vec<Violation>,
}

impl Observer {
    pub fn new(correct_proposals: impl IntoIterator<Item = BinValue>) -> Self {
        Observer {
            proposed: correct_proposals.into_iter().map(EstValue::from).collect(),
            first: None,
            violations: Vec::new(),
        }
    }

    pub fn first_decision(&self) -> Option<(ProcessId, BinValue, Round)> {
        self.first
    }

    pub fn on_decide(&mut self, pid: ProcessId, value: BinValue, round: Round) {
        if !self.proposed.contains(value.into()) {
            self.violations.push(Violation::Validity { pid, value });
        }
        match self.first {
            None => self.first = Some((pid, value, round)),
            Some((p0, v0, r0)) => {
                if v0 != value {
                    self.violations.push(Violation::Agreement {
                        first: (p0, v0),
                        other: (pid, value),
                    });
                }
                if round < r0 {
                    self.first = Some((pid, v0, round));
                }
            }
        }
    }

    pub fn check_weak(&mut self, procs: &[&WeakProcess]) {
        let last = procs.iter().map(|p| p.round().get()).max().unwrap_or(0);
        for r in 1..=last {
            let inputs: ValueSet = procs
                .iter()
                .filter_map(|p| p.stage1_input(Round(r)))
                .collect();
            if inputs.binary().len() > 1 {
                self.violations
                    .push(Violation::OneSidedStage1 { round: Round(r) });
            }
        }
    }

    pub fn check_strong(&mut self, procs: &[&StrongProcess]) {
        let last = procs.iter().map(|p| p.round().get()).max().unwrap_or(0);
        for r in 2..=last {
            let started: ValueSet = procs
                .iter()
                .filter_map(|p| p.started_value(Round(r)))
                .map(EstValue::from)
                .collect();
            if started.len() > 1 {
                self.violations
                    .push(Violation::SBroadcastMismatch { round: Round(r) });
            }
        }
        let Some((_, v, rd)) = self.first else { return };
        for p in procs {
            for r in rd.get() + 1..=p.round().get() {
                let r = Round(r);
                let bad_view = p
                    .view(r)
                    .is_some_and(|view| view != ValueSet::single(v.into()));
                let bad_flag = p.instance(r, !v).is_some_and(|i| i.svalue());
                if bad_view || bad_flag {
                    self.violations.push(Violation::PostDecisionLockstep {
                        pid: p.id(),
                        round: r,
                    });
                    break;
                }
            }
        }
    }
}
