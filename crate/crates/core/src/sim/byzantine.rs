//! Byzantine message generators.
//!
//! Faulty processes are not state machines. Each one watches non-faulty
//! broadcasts as they are sent and reacts at most once per message kind and
//! instance, sending per-recipient payloads of its choosing.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::coin::{CoinOracle, Peek};
use crate::types::{
    BinValue, EstValue, InstanceTag, Payload, ProcessId, ProcessSet, Round, ValueSet,
};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ScriptEntry {
    /// Injected just before the delivery with this index (0-based).
    pub at_tick: u64,
    /// Recipients; empty means every non-faulty process.
    pub to: Vec<ProcessId>,
    pub payload: Payload,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ByzStrategy {
    /// Silent from the start.
    Crash,
    /// Silent from the start.
    Mute,
    /// Value 0 to the lower half of the processes, 1 to the upper half.
    Equivocate,
    /// The negation of what it just saw, to everyone.
    Mirror,
    /// Fixed messages at fixed ticks.
    Scripted(Vec<ScriptEntry>),
}

impl ByzStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            ByzStrategy::Crash => "crash",
            ByzStrategy::Mute => "mute",
            ByzStrategy::Equivocate => "equivocate",
            ByzStrategy::Mirror => "mirror",
            ByzStrategy::Scripted(_) => "scripted",
        }
    }
}

/// Identity of what a reaction is keyed on: message kind plus instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Key {
    Tagged(u8, InstanceTag),
    Round(u8, Round),
}

fn key(p: &Payload) -> Key {
    match *p {
        Payload::Bval { tag, .. } => Key::Tagged(0, tag),
        Payload::Sval { tag, .. } => Key::Tagged(1, tag),
        Payload::Aux { tag, .. } => Key::Tagged(2, tag),
        Payload::AuxSet { round, .. } => Key::Round(3, round),
        Payload::AuxBin { round, .. } => Key::Round(4, round),
    }
}

/// Same kind and instance as `p`, carrying `v` (or `{v}` for sets).
fn with_value(p: &Payload, v: BinValue) -> Payload {
    let e = EstValue::from(v);
    match *p {
        Payload::Bval { tag, .. } => Payload::Bval { tag, value: e },
        Payload::Sval { tag, .. } => Payload::Sval { tag, value: e },
        Payload::Aux { tag, .. } => Payload::Aux { tag, value: e },
        Payload::AuxSet { round, .. } => Payload::AuxSet {
            round,
            set: ValueSet::single(e),
        },
        Payload::AuxBin { round, .. } => Payload::AuxBin { round, value: v },
    }
}

fn negate(p: &Payload) -> Payload {
    let flip = |v: EstValue| match v {
        EstValue::Zero => EstValue::One,
        EstValue::One | EstValue::Bot => EstValue::Zero,
    };
    match *p {
        Payload::Bval { tag, value } => Payload::Bval {
            tag,
            value: flip(value),
        },
        Payload::Sval { tag, value } => Payload::Sval {
            tag,
            value: flip(value),
        },
        Payload::Aux { tag, value } => Payload::Aux {
            tag,
            value: flip(value),
        },
        Payload::AuxSet { round, set } => {
            let set = match set.as_single() {
                Some(v) => ValueSet::single(flip(v)),
                None => set,
            };
            Payload::AuxSet { round, set }
        }
        Payload::AuxBin { round, value } => Payload::AuxBin {
            round,
            value: !value,
        },
    }
}

/// One faulty process's generator.
pub struct Adversary {
    pub pid: ProcessId,
    strategy: ByzStrategy,
    seen: BTreeSet<Key>,
    script_pos: usize,
}

/// A message a faulty process sends to a list of recipients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Injection {
    pub payload: Payload,
    pub to: Vec<ProcessId>,
}

impl Adversary {
    pub fn new(pid: ProcessId, mut strategy: ByzStrategy) -> Self {
        if let ByzStrategy::Scripted(entries) = &mut strategy {
            entries.sort_by_key(|e| e.at_tick);
        }
        Adversary {
            pid,
            strategy,
            seen: BTreeSet::new(),
            script_pos: 0,
        }
    }

    pub fn strategy(&self) -> &ByzStrategy {
        &self.strategy
    }

    /// Reaction to a non-faulty broadcast of `observed`.
    pub fn react(
        &mut self,
        observed: &Payload,
        n: usize,
        correct: ProcessSet,
        coin: &mut CoinOracle,
        out: &mut Vec<Injection>,
    ) {
        match self.strategy {
            ByzStrategy::Equivocate | ByzStrategy::Mirror => {}
            _ => return,
        }
        if !self.seen.insert(key(observed)) {
            return;
        }
        let recipients = correct.iter();
        if self.strategy == ByzStrategy::Equivocate {
            let (low, high): (Vec<_>, Vec<_>) = recipients.partition(|p| p.index() < n / 2);
            for (value, to) in [(BinValue::Zero, low), (BinValue::One, high)] {
                if !to.is_empty() {
                    out.push(Injection {
                        payload: with_value(observed, value),
                        to,
                    });
                }
            }
        } else {
            let first = correct.iter().next();
            let payload = match (coin.adversary_peek(observed.round()), first) {
                // Once the round's coin is public, push against it.
                (Peek::Revealed(assignment), Some(p)) => {
                    with_value(observed, !assignment[p.index()])
                }
                _ => negate(observed),
            };
            out.push(Injection {
                payload,
                to: recipients.collect(),
            });
        }
    }

    /// Scripted messages due before delivery number `tick`.
    pub fn scripted(&mut self, tick: u64, correct: ProcessSet, out: &mut Vec<Injection>) {
        let ByzStrategy::Scripted(entries) = &self.strategy else {
            return;
        };
        while let Some(e) = entries.get(self.script_pos) {
            if e.at_tick > tick {
                break;
            }
            let to = if e.to.is_empty() {
                correct.iter().collect()
            } else {
                e.to.clone()
            };
            out.push(Injection {
                payload: e.payload,
                to,
            });
            self.script_pos += 1;
        }
    }
}
