//! Consensus with a weak common coin.
//!
//! Each round runs two SBV instances. `stage[r,0]` takes the binary
//! estimate; its view is relayed as an `AUXSET` and `n-t` justified sets
//! decide whether the second instance `stage[r,1]` gets a binary value or
//! `⊥`. The view of `stage[r,1]` together with the round's coin settles the
//! next estimate, and a singleton binary view decides.
//!
//! [`Mode::Optimized`] trims broadcasts from round 2 on. A process whose
//! estimate is already in `stage[r-1,1].bin_values` skips the `BVAL` of
//! `stage[r,0]` and sends `AUX` directly; a process with estimate `⊥` skips
//! the `BVAL` of `stage[r,1]` when `stage[r,0]` delivered both binary
//! values. The justifying sets are fed into the later instance as external
//! justification and keep flowing forward as older instances grow.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::sbv::{SbvState, SbvStep, ViewSelection};
use crate::types::{
    BinValue, Effect, EstValue, Input, InstanceTag, Message, Payload, Phase, ProcessId, ProcessSet,
    Protocol, Round, SystemParams, ValueSet,
};

/// Messages further than this many rounds ahead of the receiver are dropped.
pub const LOOKAHEAD: u32 = 1024;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Mode {
    #[default]
    Baseline,
    Optimized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Idle,
    Stage0,
    AwaitAuxSet,
    Stage1,
    AwaitCoin,
}

#[derive(Clone, Debug)]
struct RoundState {
    stage: [SbvState; 2],
    // Senders grouped by the set they sent: {0}, {1}, {0,1}.
    auxset_by: [ProcessSet; 3],
    auxset_senders: ProcessSet,
    auxset_arrivals: Vec<(ProcessId, ValueSet)>,
    auxset_view: Option<ValueSet>,
    stage1_input: Option<EstValue>,
    coin: Option<BinValue>,
}

const AUXSETS: [ValueSet; 3] = [
    ValueSet::from_bits(0b01),
    ValueSet::from_bits(0b10),
    ValueSet::BINARY,
];

fn auxset_slot(set: ValueSet) -> usize {
    set.bits() as usize - 1
}

#[derive(Clone, Debug)]
pub struct WeakProcess {
    id: ProcessId,
    params: SystemParams,
    mode: Mode,
    selection: ViewSelection,
    status: Status,
    round: Round,
    est: EstValue,
    decided: Option<(BinValue, Round)>,
    rounds: Vec<RoundState>,
    dropped: u64,
}

impl WeakProcess {
    pub fn new(id: ProcessId, params: SystemParams, mode: Mode, selection: ViewSelection) -> Self {
        WeakProcess {
            id,
            params,
            mode,
            selection,
            status: Status::Idle,
            round: Round::ZERO,
            est: EstValue::Zero,
            decided: None,
            rounds: Vec::new(),
            dropped: 0,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Current estimate. Binary at every round start.
    pub fn est(&self) -> EstValue {
        self.est
    }

    fn state(&self, r: Round) -> Option<&RoundState> {
        self.rounds.get(r.get().checked_sub(1)? as usize)
    }

    fn ensure(&mut self, r: Round) -> &mut RoundState {
        let i = r.get() as usize - 1;
        while self.rounds.len() <= i {
            let round = Round(self.rounds.len() as u32 + 1);
            let th = self.params.thresholds();
            let make = |phase| {
                SbvState::new(InstanceTag::Stage { round, phase }, th, self.selection)
                    .expect("stage tags are valid SBV tags")
            };
            self.rounds.push(RoundState {
                stage: [make(Phase::Zero), make(Phase::One)],
                auxset_by: [ProcessSet::EMPTY; 3],
                auxset_senders: ProcessSet::EMPTY,
                auxset_arrivals: Vec::new(),
                auxset_view: None,
                stage1_input: None,
                coin: None,
            });
        }
        &mut self.rounds[i]
    }

    /// The SBV instance `stage[r, phase]`, if any message or start touched it.
    pub fn stage(&self, r: Round, phase: Phase) -> Option<&SbvState> {
        self.state(r).map(|s| &s.stage[phase.index()])
    }

    /// Union of the justified `AUXSET`s that fixed the input of `stage[r,1]`.
    pub fn auxset_view(&self, r: Round) -> Option<ValueSet> {
        self.state(r)?.auxset_view
    }

    /// The value this process fed into `stage[r,1]`.
    pub fn stage1_input(&self, r: Round) -> Option<EstValue> {
        self.state(r)?.stage1_input
    }

    pub fn coin(&self, r: Round) -> Option<BinValue> {
        self.state(r)?.coin
    }

    fn propose(&mut self, v: BinValue, out: &mut Vec<Effect>) -> Result<()> {
        if self.status != Status::Idle {
            return Err(Error::DuplicateProposal);
        }
        self.est = v.into();
        self.round = Round::FIRST;
        self.start_round(out)
    }

    fn start_round(&mut self, out: &mut Vec<Effect>) -> Result<()> {
        let r = self.round;
        let est = self.est;
        if est.is_bot() {
            return Err(Error::ProtocolViolation("round started with estimate bot"));
        }
        self.status = Status::Stage0;
        let skip = self.mode == Mode::Optimized && r > Round::FIRST;
        let stage = &mut self.ensure(r).stage[0];
        let skip = skip && stage.extra().contains(est);
        let step = stage.init(est, skip)?;
        self.handle(r, Phase::Zero, step, out)
    }

    fn handle(
        &mut self,
        r: Round,
        phase: Phase,
        step: SbvStep,
        out: &mut Vec<Effect>,
    ) -> Result<()> {
        let tag = InstanceTag::Stage { round: r, phase };
        for value in step.bval.iter() {
            out.push(Effect::Broadcast(Payload::Bval { tag, value }));
        }
        if let Some(value) = step.aux {
            out.push(Effect::Broadcast(Payload::Aux { tag, value }));
        }
        if !step.added.is_empty() {
            if self.mode == Mode::Optimized {
                self.forward_justification(r, phase, step.added, out)?;
            }
            if phase == Phase::Zero && r == self.round && self.status == Status::AwaitAuxSet {
                self.check_auxsets(out)?;
            }
        }
        if let Some(view) = step.view {
            if r != self.round {
                return Err(Error::ProtocolViolation(
                    "view completed outside the current round",
                ));
            }
            match (phase, self.status) {
                (Phase::Zero, Status::Stage0) => {
                    out.push(Effect::Broadcast(Payload::AuxSet {
                        round: r,
                        set: view,
                    }));
                    self.status = Status::AwaitAuxSet;
                    self.check_auxsets(out)?;
                }
                (Phase::One, Status::Stage1) => {
                    self.status = Status::AwaitCoin;
                    out.push(Effect::RequestCoin(r));
                }
                _ => return Err(Error::ProtocolViolation("view completed out of order")),
            }
        }
        Ok(())
    }

    /// Growth of `stage[r,0]` can justify `⊥` in `stage[r,1]`; binary growth
    /// of `stage[r,1]` justifies the same values in `stage[r+1,0]`.
    fn forward_justification(
        &mut self,
        r: Round,
        phase: Phase,
        added: ValueSet,
        out: &mut Vec<Effect>,
    ) -> Result<()> {
        match phase {
            Phase::Zero => {
                let rs = self.ensure(r);
                if ValueSet::BINARY.is_subset(rs.stage[0].effective_bin_values()) {
                    let step = rs.stage[1].extend_justification(ValueSet::single(EstValue::Bot));
                    self.handle(r, Phase::One, step, out)?;
                }
            }
            Phase::One => {
                let binary = added.binary();
                if !binary.is_empty() && r.get() < self.round.get() + LOOKAHEAD {
                    let next = r.next();
                    let step = self.ensure(next).stage[0].extend_justification(binary);
                    self.handle(next, Phase::Zero, step, out)?;
                }
            }
        }
        Ok(())
    }

    fn check_auxsets(&mut self, out: &mut Vec<Effect>) -> Result<()> {
        let r = self.round;
        let quorum = self.params.thresholds().quorum;
        let selection = self.selection;
        let optimized = self.mode == Mode::Optimized;
        let rs = self.ensure(r);
        let bin = rs.stage[0].effective_bin_values();
        let mut valid = ProcessSet::EMPTY;
        let mut union = ValueSet::EMPTY;
        for (slot, set) in AUXSETS.iter().enumerate() {
            if set.is_subset(bin) && !rs.auxset_by[slot].is_empty() {
                valid = valid.union(rs.auxset_by[slot]);
                union = union.union(*set);
            }
        }
        if valid.len() < quorum {
            return Ok(());
        }
        let view = match selection {
            ViewSelection::Union => union,
            ViewSelection::FirstQuorum => rs
                .auxset_arrivals
                .iter()
                .filter(|(_, s)| s.is_subset(bin))
                .take(quorum)
                .fold(ValueSet::EMPTY, |acc, (_, s)| acc.union(*s)),
        };
        let est = view.as_single().unwrap_or(EstValue::Bot);
        rs.auxset_view = Some(view);
        rs.stage1_input = Some(est);
        let skip = optimized && est.is_bot() && ValueSet::BINARY.is_subset(bin);
        let step = rs.stage[1].init(est, skip)?;
        self.est = est;
        self.status = Status::Stage1;
        self.handle(r, Phase::One, step, out)
    }

    fn on_coin(&mut self, r: Round, s: BinValue, out: &mut Vec<Effect>) -> Result<()> {
        if self.status != Status::AwaitCoin || r != self.round {
            self.dropped += 1;
            return Ok(());
        }
        let rs = self.ensure(r);
        rs.coin = Some(s);
        let view = rs.stage[1]
            .view()
            .ok_or(Error::ProtocolViolation("coin before phase-one view"))?;
        let binary = view.binary();
        if binary.len() > 1 {
            return Err(Error::ProtocolViolation(
                "phase-one view holds both binary values",
            ));
        }
        match binary.iter().next().and_then(EstValue::as_bin) {
            Some(v) => {
                self.est = v.into();
                if view.len() == 1 && self.decided.is_none() {
                    self.decided = Some((v, r));
                    out.push(Effect::Decide { value: v, round: r });
                }
            }
            None => self.est = s.into(),
        }
        self.round = r.next();
        self.start_round(out)
    }

    fn on_message(&mut self, msg: Message, out: &mut Vec<Effect>) -> Result<()> {
        let Message { sender, payload } = msg;
        let round = payload.round();
        if !payload.is_well_formed()
            || sender.index() >= self.params.n()
            || round.get() > self.round.get() + LOOKAHEAD
        {
            self.dropped += 1;
            return Ok(());
        }
        match payload {
            Payload::Bval {
                tag: InstanceTag::Stage { round, phase },
                value,
            } => {
                let step = self.ensure(round).stage[phase.index()].on_bval(sender, value);
                self.handle(round, phase, step, out)
            }
            Payload::Aux {
                tag: InstanceTag::Stage { round, phase },
                value,
            } => {
                let step = self.ensure(round).stage[phase.index()].on_aux(sender, value);
                self.handle(round, phase, step, out)
            }
            Payload::AuxSet { round, set } => {
                let selection = self.selection;
                let rs = self.ensure(round);
                if rs.auxset_senders.insert(sender) {
                    rs.auxset_by[auxset_slot(set)].insert(sender);
                    if selection == ViewSelection::FirstQuorum {
                        rs.auxset_arrivals.push((sender, set));
                    }
                    if round == self.round && self.status == Status::AwaitAuxSet {
                        return self.check_auxsets(out);
                    }
                }
                Ok(())
            }
            _ => {
                self.dropped += 1;
                Ok(())
            }
        }
    }
}

impl Protocol for WeakProcess {
    fn step(&mut self, input: Input, out: &mut Vec<Effect>) -> Result<()> {
        match input {
            Input::Propose(v) => self.propose(v, out),
            Input::Deliver(msg) => self.on_message(msg, out),
            Input::Coin { round, value } => self.on_coin(round, value, out),
        }
    }

    fn id(&self) -> ProcessId {
        self.id
    }

    fn round(&self) -> Round {
        self.round
    }

    fn decision(&self) -> Option<(BinValue, Round)> {
        self.decided
    }

    fn coin_lean(&self) -> Option<BinValue> {
        let view = self.state(self.round).and_then(|s| s.stage[1].view());
        match view {
            Some(view) => view.binary().as_single().and_then(EstValue::as_bin),
            None => self.est.as_bin(),
        }
    }

    fn dropped(&self) -> u64 {
        self.dropped
    }
}
