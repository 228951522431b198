//! Idealized round-indexed common coin.
//!
//! The oracle holds the randomness for every round but produces nothing
//! until enough non-faulty processes have asked: one for the weak coin,
//! `t+1` for the strong coin. Requests from faulty processes are ignored.
//!
//! Each round draws from its own ChaCha stream, so the outcome of round `r`
//! depends only on `(seed, r)` and, in the split branch, on the leans the
//! driver reports at revelation time.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{BinValue, ProcessId, ProcessSet, Round, SystemParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CoinKind {
    /// All-0 with probability `1/d`, all-1 with `1/d`, split otherwise.
    Weak { d: u32 },
    /// One bit shared by everyone, revealed after `t+1` non-faulty requests.
    Strong,
}

impl CoinKind {
    fn d(self) -> u32 {
        match self {
            CoinKind::Weak { d } => d,
            CoinKind::Strong => 2,
        }
    }
}

/// Per-process assignment rule for the split branch of the weak coin.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum SplitStrategy {
    /// Every process gets the opposite of the value it leans towards.
    #[default]
    EstimateOpposing,
    /// Independent fair bits, redrawn until not unanimous.
    FairBit,
    /// First half of the non-faulty processes get 0, the rest 1.
    HalfHalf,
}

impl SplitStrategy {
    pub fn name(self) -> &'static str {
        match self {
            SplitStrategy::EstimateOpposing => "estimate-opposing",
            SplitStrategy::FairBit => "fair-bit",
            SplitStrategy::HalfHalf => "half-half",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CoinConfig {
    pub kind: CoinKind,
    pub split: SplitStrategy,
}

impl CoinConfig {
    pub fn weak(d: u32) -> Self {
        CoinConfig {
            kind: CoinKind::Weak { d },
            split: SplitStrategy::default(),
        }
    }

    pub fn strong() -> Self {
        CoinConfig {
            kind: CoinKind::Strong,
            split: SplitStrategy::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            CoinKind::Weak { d } if d < 2 => Err(Error::Config(alloc::format!(
                "weak coin needs d >= 2, got {d}"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    AllZero,
    AllOne,
    Split,
}

/// What a request produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Registration {
    /// Not enough non-faulty requests yet.
    Pending,
    /// The threshold was just met; call [`CoinOracle::reveal`].
    Reveal,
    /// Already revealed.
    Revealed,
}

/// The adversary's view of one round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Peek<'a> {
    Unrevealed,
    Revealed(&'a [BinValue]),
}

#[derive(Clone, Debug, Default)]
struct CoinRound {
    requesters: ProcessSet,
    assignment: Option<Vec<BinValue>>,
    outcome: Option<Outcome>,
}

#[derive(Clone, Debug)]
pub struct CoinOracle {
    config: CoinConfig,
    params: SystemParams,
    seed: u64,
    rounds: Vec<CoinRound>,
    gated_peeks: u64,
    leaks: u64,
}

impl CoinOracle {
    pub fn new(config: CoinConfig, params: SystemParams, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(CoinOracle {
            config,
            params,
            seed,
            rounds: Vec::new(),
            gated_peeks: 0,
            leaks: 0,
        })
    }

    pub fn config(&self) -> CoinConfig {
        self.config
    }

    fn slot(&mut self, round: Round) -> &mut CoinRound {
        let i = round.get().saturating_sub(1) as usize;
        if self.rounds.len() <= i {
            self.rounds.resize_with(i + 1, CoinRound::default);
        }
        &mut self.rounds[i]
    }

    fn get(&self, round: Round) -> Option<&CoinRound> {
        self.rounds.get(round.get().checked_sub(1)? as usize)
    }

    fn threshold(&self) -> usize {
        match self.config.kind {
            CoinKind::Weak { .. } => 1,
            CoinKind::Strong => self.params.t() + 1,
        }
    }

    /// Registers `pid` as having called `random()` for `round`.
    pub fn request(&mut self, round: Round, pid: ProcessId) -> Registration {
        if self.params.is_faulty(pid) || round < Round::FIRST {
            return Registration::Pending;
        }
        let threshold = self.threshold();
        let slot = self.slot(round);
        slot.requesters.insert(pid);
        if slot.assignment.is_some() {
            Registration::Revealed
        } else if slot.requesters.len() >= threshold {
            Registration::Reveal
        } else {
            Registration::Pending
        }
    }

    /// Non-faulty processes that have requested `round`.
    pub fn requesters(&self, round: Round) -> ProcessSet {
        self.get(round).map_or(ProcessSet::EMPTY, |s| s.requesters)
    }

    /// Draws the round's assignment. `leans[p]` is the value process `p`
    /// would keep whatever the coin says, if any; only the estimate-opposing
    /// split strategy reads it.
    pub fn reveal(&mut self, round: Round, leans: &[Option<BinValue>]) -> Result<&[BinValue]> {
        let threshold = self.threshold();
        let (kind, split, seed, params) =
            (self.config.kind, self.config.split, self.seed, self.params);
        let slot = self.slot(round);
        if slot.assignment.is_none() {
            if slot.requesters.len() < threshold {
                return Err(Error::ProtocolViolation(
                    "coin revealed below its threshold",
                ));
            }
            let (outcome, assignment) = draw(kind, split, seed, round, &params, leans);
            slot.outcome = Some(outcome);
            slot.assignment = Some(assignment);
        }
        Ok(slot.assignment.as_deref().unwrap_or_default())
    }

    /// The value process `pid` receives for `round`, once revealed.
    pub fn value_for(&mut self, round: Round, pid: ProcessId) -> Option<BinValue> {
        match self.get(round).and_then(|s| s.assignment.as_ref()) {
            Some(a) => Some(a[pid.index()]),
            None => {
                self.leaks += 1;
                None
            }
        }
    }

    pub fn is_revealed(&self, round: Round) -> bool {
        self.get(round).is_some_and(|s| s.assignment.is_some())
    }

    pub fn outcome(&self, round: Round) -> Option<Outcome> {
        self.get(round).and_then(|s| s.outcome)
    }

    /// The only door through which schedulers and Byzantine processes see
    /// the coin.
    pub fn adversary_peek(&mut self, round: Round) -> Peek<'_> {
        let revealed = self.get(round).is_some_and(|s| s.assignment.is_some());
        if !revealed {
            self.gated_peeks += 1;
            return Peek::Unrevealed;
        }
        let i = round.get() as usize - 1;
        Peek::Revealed(self.rounds[i].assignment.as_deref().unwrap_or_default())
    }

    /// Number of peeks answered with [`Peek::Unrevealed`].
    pub fn gated_peeks(&self) -> u64 {
        self.gated_peeks
    }

    /// Number of times a value was asked for before its round was revealed.
    pub fn leaks(&self) -> u64 {
        self.leaks
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// The RNG behind round `round` for a given run seed.
pub fn round_rng(seed: u64, round: Round) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(u64::from(round.get()))))
}

/// Draws one round's coin. Faulty slots of the assignment carry 0 and mean
/// nothing.
pub fn draw(
    kind: CoinKind,
    split: SplitStrategy,
    seed: u64,
    round: Round,
    params: &SystemParams,
    leans: &[Option<BinValue>],
) -> (Outcome, Vec<BinValue>) {
    let mut rng = round_rng(seed, round);
    let n = params.n();
    match rng.random_range(0..kind.d()) {
        0 => (Outcome::AllZero, vec![BinValue::Zero; n]),
        1 => (Outcome::AllOne, vec![BinValue::One; n]),
        _ => (
            Outcome::Split,
            split_assignment(split, &mut rng, round, params, leans),
        ),
    }
}

fn split_assignment(
    split: SplitStrategy,
    rng: &mut ChaCha8Rng,
    round: Round,
    params: &SystemParams,
    leans: &[Option<BinValue>],
) -> Vec<BinValue> {
    let n = params.n();
    let correct = params.non_faulty();
    let mut out = vec![BinValue::Zero; n];
    match split {
        SplitStrategy::HalfHalf => {
            let half = correct.len() / 2;
            for (rank, p) in correct.iter().enumerate() {
                out[p.index()] = BinValue::from_bit(rank >= half);
            }
        }
        SplitStrategy::FairBit => loop {
            for p in correct.iter() {
                out[p.index()] = BinValue::from_bit(rng.random());
            }
            if correct.len() < 2 || !unanimous(&out, correct) {
                break;
            }
        },
        SplitStrategy::EstimateOpposing => {
            let lean = |p: ProcessId| leans.get(p.index()).copied().flatten();
            let mut counts = [0usize; 2];
            for p in correct.iter() {
                if let Some(b) = lean(p) {
                    counts[b.index()] += 1;
                }
            }
            let dominant = match counts[0].cmp(&counts[1]) {
                core::cmp::Ordering::Less => Some(BinValue::One),
                core::cmp::Ordering::Greater => Some(BinValue::Zero),
                core::cmp::Ordering::Equal => None,
            };
            for p in correct.iter() {
                out[p.index()] = match (lean(p), dominant) {
                    (Some(b), _) | (None, Some(b)) => !b,
                    (None, None) => BinValue::from_bit((p.index() + round.get() as usize) % 2 == 1),
                };
            }
            if correct.len() >= 2 && unanimous(&out, correct) {
                let victim = correct
                    .iter()
                    .filter(|p| lean(*p).is_some())
                    .last()
                    .or_else(|| correct.iter().last());
                if let Some(p) = victim {
                    out[p.index()] = !out[p.index()];
                }
            }
        }
    }
    out
}

fn unanimous(assignment: &[BinValue], correct: ProcessSet) -> bool {
    let mut it = correct.iter().map(|p| assignment[p.index()]);
    let first = it.next();
    it.all(|b| Some(b) == first)
}
