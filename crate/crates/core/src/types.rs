//! Value types shared by every protocol layer.

use alloc::vec::Vec;
use core::fmt;
use core::ops::Not;

use crate::error::{Error, Result};

/// Largest supported system; sender sets are 128-bit masks.
pub const MAX_PROCESSES: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProcessId(pub u16);

impl ProcessId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for ProcessId {
    fn from(i: usize) -> Self {
        debug_assert!(i < MAX_PROCESSES);
        ProcessId(i as u16)
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Round number. Round 0 only exists before `propose`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Round(pub u32);

impl Round {
    pub const ZERO: Round = Round(0);
    pub const FIRST: Round = Round(1);

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn next(self) -> Round {
        Round(self.0 + 1)
    }
}

impl fmt::Display for Round {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinValue {
    Zero,
    One,
}

impl BinValue {
    pub const BOTH: [BinValue; 2] = [BinValue::Zero, BinValue::One];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_bit(bit: bool) -> Self {
        if bit {
            BinValue::One
        } else {
            BinValue::Zero
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

impl Not for BinValue {
    type Output = BinValue;

    fn not(self) -> BinValue {
        match self {
            BinValue::Zero => BinValue::One,
            BinValue::One => BinValue::Zero,
        }
    }
}

impl TryFrom<u8> for BinValue {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(BinValue::Zero),
            1 => Ok(BinValue::One),
            _ => Err(Error::Config(alloc::format!(
                "binary value expected, got {v}"
            ))),
        }
    }
}

impl fmt::Display for BinValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// Protocol value: a binary value or `⊥` ("both values were seen").
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EstValue {
    Zero,
    One,
    Bot,
}

impl EstValue {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_bin(self) -> Option<BinValue> {
        match self {
            EstValue::Zero => Some(BinValue::Zero),
            EstValue::One => Some(BinValue::One),
            EstValue::Bot => None,
        }
    }

    pub fn is_bot(self) -> bool {
        self == EstValue::Bot
    }
}

impl From<BinValue> for EstValue {
    fn from(v: BinValue) -> Self {
        match v {
            BinValue::Zero => EstValue::Zero,
            BinValue::One => EstValue::One,
        }
    }
}

impl fmt::Display for EstValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstValue::Zero => f.write_str("0"),
            EstValue::One => f.write_str("1"),
            EstValue::Bot => f.write_str("bot"),
        }
    }
}

/// Subset of `{0, 1, ⊥}`.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ValueSet(u8);

impl ValueSet {
    pub const EMPTY: ValueSet = ValueSet(0);
    pub const BINARY: ValueSet = ValueSet(0b011);
    const ALL: u8 = 0b111;

    pub const fn from_bits(bits: u8) -> Self {
        ValueSet(bits & Self::ALL)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn single(v: EstValue) -> Self {
        ValueSet(1 << v.index())
    }

    pub fn insert(&mut self, v: EstValue) -> bool {
        let had = self.contains(v);
        self.0 |= 1 << v.index();
        !had
    }

    pub fn contains(self, v: EstValue) -> bool {
        self.0 & (1 << v.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn union(self, other: ValueSet) -> ValueSet {
        ValueSet(self.0 | other.0)
    }

    pub fn difference(self, other: ValueSet) -> ValueSet {
        ValueSet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: ValueSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// The binary part of the set (drops `⊥`).
    pub fn binary(self) -> ValueSet {
        ValueSet(self.0 & Self::BINARY.0)
    }

    pub fn is_binary(self) -> bool {
        !self.contains(EstValue::Bot)
    }

    /// The only member, if the set is a singleton.
    pub fn as_single(self) -> Option<EstValue> {
        match self.0 {
            0b001 => Some(EstValue::Zero),
            0b010 => Some(EstValue::One),
            0b100 => Some(EstValue::Bot),
            _ => None,
        }
    }

    pub fn iter(self) -> impl Iterator<Item = EstValue> {
        [EstValue::Zero, EstValue::One, EstValue::Bot]
            .into_iter()
            .filter(move |v| self.contains(*v))
    }
}

impl FromIterator<EstValue> for ValueSet {
    fn from_iter<I: IntoIterator<Item = EstValue>>(iter: I) -> Self {
        let mut s = ValueSet::EMPTY;
        for v in iter {
            s.insert(v);
        }
        s
    }
}

impl fmt::Debug for ValueSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, v) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str("}")
    }
}

/// Set of process ids, as a bitmask.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProcessSet(u128);

impl ProcessSet {
    pub const EMPTY: ProcessSet = ProcessSet(0);

    /// `{p_0, ..., p_{n-1}}`.
    pub fn first(n: usize) -> Self {
        if n >= MAX_PROCESSES {
            ProcessSet(u128::MAX)
        } else {
            ProcessSet((1u128 << n) - 1)
        }
    }

    pub fn insert(&mut self, p: ProcessId) -> bool {
        let bit = 1u128 << p.0;
        let fresh = self.0 & bit == 0;
        self.0 |= bit;
        fresh
    }

    pub fn remove(&mut self, p: ProcessId) {
        self.0 &= !(1u128 << p.0);
    }

    pub fn contains(self, p: ProcessId) -> bool {
        self.0 & (1u128 << p.0) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: ProcessSet) -> ProcessSet {
        ProcessSet(self.0 | other.0)
    }

    pub fn intersection(self, other: ProcessSet) -> ProcessSet {
        ProcessSet(self.0 & other.0)
    }

    pub fn difference(self, other: ProcessSet) -> ProcessSet {
        ProcessSet(self.0 & !other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = ProcessId> {
        let mut bits = self.0;
        core::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let i = bits.trailing_zeros();
            bits &= bits - 1;
            Some(ProcessId(i as u16))
        })
    }
}

impl FromIterator<ProcessId> for ProcessSet {
    fn from_iter<I: IntoIterator<Item = ProcessId>>(iter: I) -> Self {
        let mut s = ProcessSet::EMPTY;
        for p in iter {
            s.insert(p);
        }
        s
    }
}

impl fmt::Debug for ProcessSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(|p| p.0)).finish()
    }
}

/// Which of the two SBV instances of a weak-coin round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Zero = 0,
    One = 1,
}

impl Phase {
    pub fn index(self) -> usize {
        self as usize
    }
}

/// Names one abstraction instance. Ordered round-major, then phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InstanceTag {
    /// SBV instance `stage[round, phase]` of the weak-coin algorithm.
    Stage { round: Round, phase: Phase },
    /// S-Broadcast instance `est[round]` of the strong-coin algorithm.
    Est { round: Round },
}

impl InstanceTag {
    pub fn stage(round: u32, phase: Phase) -> Self {
        InstanceTag::Stage {
            round: Round(round),
            phase,
        }
    }

    pub fn est(round: u32) -> Self {
        InstanceTag::Est {
            round: Round(round),
        }
    }

    pub fn round(self) -> Round {
        match self {
            InstanceTag::Stage { round, .. } | InstanceTag::Est { round } => round,
        }
    }
}

/// The body of a wire message. The sender travels alongside in [`Message`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Payload {
    Bval { tag: InstanceTag, value: EstValue },
    Sval { tag: InstanceTag, value: EstValue },
    Aux { tag: InstanceTag, value: EstValue },
    AuxSet { round: Round, set: ValueSet },
    AuxBin { round: Round, value: BinValue },
}

impl Payload {
    /// The round a message belongs to, used for metering and halting.
    pub fn round(&self) -> Round {
        match *self {
            Payload::Bval { tag, .. } | Payload::Sval { tag, .. } | Payload::Aux { tag, .. } => {
                tag.round()
            }
            Payload::AuxSet { round, .. } | Payload::AuxBin { round, .. } => round,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Payload::Bval { .. } => "BVAL",
            Payload::Sval { .. } => "SVAL",
            Payload::Aux { .. } => "AUX",
            Payload::AuxSet { .. } => "AUXSET",
            Payload::AuxBin { .. } => "AUXBIN",
        }
    }

    /// Structural validity, independent of receiver state. Byzantine senders
    /// can produce anything; receivers drop what fails here.
    pub fn is_well_formed(&self) -> bool {
        match *self {
            Payload::Bval { tag, value } | Payload::Aux { tag, value } => match tag {
                InstanceTag::Stage { round, phase } => {
                    round >= Round::FIRST && (phase == Phase::One || !value.is_bot())
                }
                InstanceTag::Est { .. } => false,
            },
            Payload::Sval { tag, value } => {
                matches!(tag, InstanceTag::Est { round } if round >= Round::FIRST)
                    && !value.is_bot()
            }
            Payload::AuxSet { round, set } => {
                round >= Round::FIRST && !set.is_empty() && set.is_binary()
            }
            Payload::AuxBin { round, .. } => round >= Round::FIRST,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Message {
    pub sender: ProcessId,
    pub payload: Payload,
}

/// What a state machine asks its driver to do.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Effect {
    Broadcast(Payload),
    RequestCoin(Round),
    Decide { value: BinValue, round: Round },
}

/// What a driver feeds into a state machine.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Input {
    Propose(BinValue),
    Deliver(Message),
    Coin { round: Round, value: BinValue },
}

/// `n`, `t` and which processes a run treats as faulty.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SystemParams {
    n: usize,
    t: usize,
    faulty: ProcessSet,
}

impl SystemParams {
    /// Accepts `(n, t)` iff `t < n/3`, with every process non-faulty.
    pub fn new(n: usize, t: usize) -> Result<Self> {
        if n == 0 || n > MAX_PROCESSES {
            return Err(Error::UnsupportedSize(n));
        }
        if 3 * t >= n {
            return Err(Error::InvalidParams { n, t });
        }
        Ok(SystemParams {
            n,
            t,
            faulty: ProcessSet::EMPTY,
        })
    }

    /// Marks `faulty` as Byzantine; at most `t` of them.
    pub fn with_faulty(mut self, faulty: ProcessSet) -> Result<Self> {
        if faulty.len() > self.t {
            return Err(Error::TooManyFaulty {
                faulty: faulty.len(),
                t: self.t,
            });
        }
        if faulty.difference(ProcessSet::first(self.n)) != ProcessSet::EMPTY {
            return Err(Error::Config(alloc::format!(
                "faulty set {faulty:?} names processes outside 0..{}",
                self.n
            )));
        }
        self.faulty = faulty;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn faulty(&self) -> ProcessSet {
        self.faulty
    }

    pub fn non_faulty(&self) -> ProcessSet {
        ProcessSet::first(self.n).difference(self.faulty)
    }

    pub fn is_faulty(&self, p: ProcessId) -> bool {
        self.faulty.contains(p)
    }

    pub fn processes(&self) -> impl Iterator<Item = ProcessId> {
        (0..self.n).map(ProcessId::from)
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            echo: self.t + 1,
            deliver: 2 * self.t + 1,
            quorum: self.n - self.t,
        }
    }
}

/// The only three quorum sizes any protocol here compares against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Thresholds {
    /// `t + 1`: at least one non-faulty process is among the senders.
    pub echo: usize,
    /// `2t + 1`: non-faulty senders outnumber all faulty ones.
    pub deliver: usize,
    /// `n - t`: the most a process can wait for.
    pub quorum: usize,
}

/// The driver contract every consensus state machine implements.
///
/// `step` is deterministic: identical state and input produce identical
/// effects in identical order. Malformed or unknown inputs produce no effects
/// and bump [`Protocol::dropped`].
pub trait Protocol {
    fn step(&mut self, input: Input, out: &mut Vec<Effect>) -> Result<()>;

    fn id(&self) -> ProcessId;

    /// Current round; `Round::ZERO` before `propose`.
    fn round(&self) -> Round;

    fn decision(&self) -> Option<(BinValue, Round)>;

    /// The binary value this process would keep regardless of the coin, if any.
    fn coin_lean(&self) -> Option<BinValue>;

    /// Count of inputs discarded as malformed or unusable.
    fn dropped(&self) -> u64;

    /// Convenience wrapper around [`Protocol::step`].
    fn step_collect(&mut self, input: Input) -> Result<Vec<Effect>> {
        let mut out = Vec::new();
        self.step(input, &mut out)?;
        Ok(out)
    }
}
