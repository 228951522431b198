//! Consensus with a strong common coin.
//!
//! Each process keeps one S-Broadcast flag per value (`binptr`). A round
//! starts a single new S-Broadcast instance, for the negation of the last
//! coin, and leaves the other pointer untouched. Once a flag is set the
//! process sends one `AUXBIN`, waits for `n-t` senders whose values are
//! flagged, asks for the coin, and decides if its view is exactly the coin.
//! Round 1 instantiates both values: the proposal loudly, its negation
//! silently.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::sbc::{SbcState, SbcStep};
use crate::sbv::ViewSelection;
use crate::types::{
    BinValue, Effect, EstValue, Input, InstanceTag, Message, Payload, ProcessId, ProcessSet,
    Protocol, Round, SystemParams, ValueSet,
};
use crate::weak::LOOKAHEAD;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Idle,
    AwaitFlag,
    AwaitAux,
    AwaitCoin,
}

#[derive(Clone, Debug)]
struct RoundState {
    inst: [SbcState; 2],
    aux_by: [ProcessSet; 2],
    aux_senders: ProcessSet,
    arrivals: Vec<(ProcessId, BinValue)>,
    aux_sent: Option<BinValue>,
    view: Option<ValueSet>,
    coin: Option<BinValue>,
    opened: Option<BinValue>,
}

#[derive(Clone, Debug)]
pub struct StrongProcess {
    id: ProcessId,
    params: SystemParams,
    selection: ViewSelection,
    status: Status,
    round: Round,
    s: BinValue,
    support: bool,
    binptr: [Round; 2],
    rounds: Vec<RoundState>,
    decided: Option<(BinValue, Round)>,
    dropped: u64,
}

impl StrongProcess {
    pub fn new(id: ProcessId, params: SystemParams, selection: ViewSelection) -> Self {
        StrongProcess {
            id,
            params,
            selection,
            status: Status::Idle,
            round: Round::ZERO,
            s: BinValue::Zero,
            support: false,
            binptr: [Round::ZERO; 2],
            rounds: Vec::new(),
            decided: None,
            dropped: 0,
        }
    }

    fn state(&self, r: Round) -> Option<&RoundState> {
        self.rounds.get(r.get().checked_sub(1)? as usize)
    }

    fn ensure(&mut self, r: Round) -> &mut RoundState {
        let i = r.get() as usize - 1;
        while self.rounds.len() <= i {
            let tag = InstanceTag::Est {
                round: Round(self.rounds.len() as u32 + 1),
            };
            let th = self.params.thresholds();
            let make = |v| SbcState::new(tag, v, th).expect("est tags are valid S-Broadcast tags");
            self.rounds.push(RoundState {
                inst: [make(BinValue::Zero), make(BinValue::One)],
                aux_by: [ProcessSet::EMPTY; 2],
                aux_senders: ProcessSet::EMPTY,
                arrivals: Vec::new(),
                aux_sent: None,
                view: None,
                coin: None,
                opened: None,
            });
        }
        &mut self.rounds[i]
    }

    /// Value of the last coin this process received (`¬proposal` before any).
    pub fn last_coin(&self) -> BinValue {
        self.s
    }

    pub fn supports_coin(&self) -> bool {
        self.support
    }

    /// The flag `binptr[v]` currently points at.
    pub fn flag(&self, v: BinValue) -> bool {
        self.state(self.binptr[v.index()])
            .is_some_and(|rs| rs.inst[v.index()].svalue())
    }

    /// The S-Broadcast instance `(est[r], v)`, started or not.
    pub fn instance(&self, r: Round, v: BinValue) -> Option<&SbcState> {
        self.state(r).map(|rs| &rs.inst[v.index()])
    }

    /// The value whose instance this process started at the beginning of
    /// round `r` (round 1 also starts the other value, silently).
    pub fn started_value(&self, r: Round) -> Option<BinValue> {
        self.state(r)?.opened
    }

    pub fn view(&self, r: Round) -> Option<ValueSet> {
        self.state(r)?.view
    }

    pub fn aux_sent(&self, r: Round) -> Option<BinValue> {
        self.state(r)?.aux_sent
    }

    pub fn coin(&self, r: Round) -> Option<BinValue> {
        self.state(r)?.coin
    }

    fn emit(tag: InstanceTag, v: BinValue, step: SbcStep, out: &mut Vec<Effect>) {
        if step.sval {
            out.push(Effect::Broadcast(Payload::Sval {
                tag,
                value: v.into(),
            }));
        }
    }

    fn start_instance(
        &mut self,
        r: Round,
        v: BinValue,
        loud: bool,
        out: &mut Vec<Effect>,
    ) -> Result<()> {
        let inst = &mut self.ensure(r).inst[v.index()];
        let step = inst.init(loud)?;
        Self::emit(inst.tag(), v, step, out);
        self.binptr[v.index()] = r;
        Ok(())
    }

    fn propose(&mut self, v: BinValue, out: &mut Vec<Effect>) -> Result<()> {
        if self.status != Status::Idle {
            return Err(Error::DuplicateProposal);
        }
        self.s = !v;
        self.support = false;
        self.start_instance(Round::FIRST, !v, false, out)?;
        self.start_round(Round::FIRST, out)
    }

    fn start_round(&mut self, r: Round, out: &mut Vec<Effect>) -> Result<()> {
        self.round = r;
        self.status = Status::AwaitFlag;
        let loud = !self.support;
        self.start_instance(r, !self.s, loud, out)?;
        self.ensure(r).opened = Some(!self.s);
        if r > Round::FIRST {
            // SVALs buffered for the value nobody correct instantiates this
            // round are discarded.
            let s = self.s;
            let discarded = self.ensure(r).inst[s.index()].senders().len();
            self.dropped += discarded as u64;
        }
        self.progress(out)
    }

    fn progress(&mut self, out: &mut Vec<Effect>) -> Result<()> {
        let flags = [self.flag(BinValue::Zero), self.flag(BinValue::One)];
        let r = self.round;
        if self.status == Status::AwaitFlag && (flags[0] || flags[1]) {
            let w = if self.support {
                self.s
            } else if flags[0] {
                BinValue::Zero
            } else {
                BinValue::One
            };
            self.ensure(r).aux_sent = Some(w);
            self.status = Status::AwaitAux;
            out.push(Effect::Broadcast(Payload::AuxBin { round: r, value: w }));
        }
        if self.status != Status::AwaitAux {
            return Ok(());
        }
        let quorum = self.params.thresholds().quorum;
        let selection = self.selection;
        let rs = self.ensure(r);
        let mut valid = ProcessSet::EMPTY;
        let mut union = ValueSet::EMPTY;
        for v in BinValue::BOTH {
            if flags[v.index()] && !rs.aux_by[v.index()].is_empty() {
                valid = valid.union(rs.aux_by[v.index()]);
                union.insert(v.into());
            }
        }
        if valid.len() < quorum {
            return Ok(());
        }
        let view = match selection {
            ViewSelection::Union => union,
            ViewSelection::FirstQuorum => rs
                .arrivals
                .iter()
                .filter(|(_, w)| flags[w.index()])
                .take(quorum)
                .map(|(_, w)| EstValue::from(*w))
                .collect(),
        };
        rs.view = Some(view);
        self.status = Status::AwaitCoin;
        out.push(Effect::RequestCoin(r));
        Ok(())
    }

    fn on_coin(&mut self, r: Round, s: BinValue, out: &mut Vec<Effect>) -> Result<()> {
        if self.status != Status::AwaitCoin || r != self.round {
            self.dropped += 1;
            return Ok(());
        }
        let rs = self.ensure(r);
        rs.coin = Some(s);
        let view = rs
            .view
            .ok_or(Error::ProtocolViolation("coin before view"))?;
        self.s = s;
        if view == ValueSet::single(s.into()) {
            self.support = true;
            if self.decided.is_none() {
                self.decided = Some((s, r));
                out.push(Effect::Decide { value: s, round: r });
            }
        } else {
            self.support = view == ValueSet::BINARY;
        }
        self.start_round(r.next(), out)
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
            Payload::Sval { tag, value } => {
                let Some(v) = value.as_bin() else {
                    self.dropped += 1;
                    return Ok(());
                };
                let current = self.round;
                let inst = &mut self.ensure(round).inst[v.index()];
                if round <= current && !inst.is_started() {
                    self.dropped += 1;
                    return Ok(());
                }
                let step = inst.on_sval(sender);
                Self::emit(tag, v, step, out);
                if step.became_true && self.binptr[v.index()] == round {
                    self.progress(out)?;
                }
                Ok(())
            }
            Payload::AuxBin { round, value } => {
                if round < self.round {
                    return Ok(());
                }
                let selection = self.selection;
                let rs = self.ensure(round);
                if rs.aux_senders.insert(sender) {
                    rs.aux_by[value.index()].insert(sender);
                    if selection == ViewSelection::FirstQuorum {
                        rs.arrivals.push((sender, value));
                    }
                    if round == self.round {
                        self.progress(out)?;
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

impl Protocol for StrongProcess {
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
        None
    }

    fn dropped(&self) -> u64 {
        self.dropped
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const Z: BinValue = BinValue::Zero;
    const O: BinValue = BinValue::One;

    fn process() -> StrongProcess {
        StrongProcess::new(
            ProcessId(0),
            SystemParams::new(4, 1).unwrap(),
            ViewSelection::Union,
        )
    }

    fn sval(r: u32, v: BinValue) -> Payload {
        Payload::Sval {
            tag: InstanceTag::est(r),
            value: v.into(),
        }
    }

    fn auxbin(r: u32, v: BinValue) -> Payload {
        Payload::AuxBin {
            round: Round(r),
            value: v,
        }
    }

    fn deliver(p: &mut StrongProcess, sender: u16, payload: Payload) -> Vec<Effect> {
        p.step_collect(Input::Deliver(Message {
            sender: ProcessId(sender),
            payload,
        }))
        .unwrap()
    }

    #[test]
    fn propose_broadcasts_only_the_proposal() {
        let mut p = process();
        let out = p.step_collect(Input::Propose(O)).unwrap();
        assert_eq!(out, [Effect::Broadcast(sval(1, O))]);
        assert!(p.instance(Round(1), Z).unwrap().is_started());
        assert_eq!(p.started_value(Round(1)), Some(O));
        assert_eq!(p.last_coin(), Z);
        assert_eq!(
            p.step_collect(Input::Propose(O)),
            Err(Error::DuplicateProposal)
        );
    }

    /// Runs round 1 to the coin with every sender on `v`.
    fn round_one(p: &mut StrongProcess, v: BinValue) -> Vec<Effect> {
        let mut out = p.step_collect(Input::Propose(v)).unwrap();
        for s in 0..3 {
            out.extend(deliver(p, s, sval(1, v)));
        }
        for s in 0..3 {
            out.extend(deliver(p, s, auxbin(1, v)));
        }
        out
    }

    #[test]
    fn unanimous_round_requests_coin_then_decides_on_match() {
        let mut p = process();
        let out = round_one(&mut p, O);
        assert_eq!(
            out,
            [
                Effect::Broadcast(sval(1, O)),
                Effect::Broadcast(auxbin(1, O)),
                Effect::RequestCoin(Round(1))
            ]
        );
        assert_eq!(p.view(Round(1)), Some(ValueSet::single(EstValue::One)));
        // Coin 1 matches: decide and support; next round starts silently on 0.
        let out = p
            .step_collect(Input::Coin {
                round: Round(1),
                value: O,
            })
            .unwrap();
        assert_eq!(
            out,
            [
                Effect::Decide {
                    value: O,
                    round: Round(1)
                },
                Effect::Broadcast(auxbin(2, O))
            ]
        );
        assert!(p.supports_coin());
        assert_eq!(p.started_value(Round(2)), Some(Z));
    }

    #[test]
    fn coin_mismatch_drops_support_and_broadcasts_negation() {
        let mut p = process();
        round_one(&mut p, O);
        let out = p
            .step_collect(Input::Coin {
                round: Round(1),
                value: Z,
            })
            .unwrap();
        // view {1}, coin 0: no decision; binptr[1] moves to a fresh round-2
        // instance, S-Broadcast loudly, so no flag is set yet.
        assert_eq!(out, [Effect::Broadcast(sval(2, O))]);
        assert!(!p.flag(O) && !p.flag(Z));
        assert!(!p.supports_coin());
        assert_eq!(p.decision(), None);
    }

    #[test]
    fn support_prefers_coin_over_flags() {
        let mut p = process();
        p.step_collect(Input::Propose(O)).unwrap();
        for s in 0..3 {
            deliver(&mut p, s, sval(1, O));
            deliver(&mut p, s, sval(1, Z));
        }
        for (s, v) in [(0, Z), (1, O), (2, O)] {
            deliver(&mut p, s, auxbin(1, v));
        }
        assert_eq!(p.view(Round(1)), Some(ValueSet::BINARY));
        // view {0,1}: support with s = 1, so AUXBIN(2, 1) despite flag 0.
        let out = p
            .step_collect(Input::Coin {
                round: Round(1),
                value: O,
            })
            .unwrap();
        assert!(p.supports_coin());
        assert_eq!(out, [Effect::Broadcast(auxbin(2, O))]);
    }

    #[test]
    fn both_flags_without_support_pick_zero() {
        let mut p = process();
        p.step_collect(Input::Propose(O)).unwrap();
        for s in 1..4 {
            deliver(&mut p, s, sval(1, Z));
        }
        let mut out = Vec::new();
        for s in 1..4 {
            out.extend(deliver(&mut p, s, sval(1, O)));
        }
        assert_eq!(p.aux_sent(Round(1)), Some(Z));
        assert!(!out.contains(&Effect::Broadcast(auxbin(1, O))));
    }

    #[test]
    fn unflagged_aux_is_held() {
        let mut p = process();
        p.step_collect(Input::Propose(O)).unwrap();
        for s in 0..3 {
            deliver(&mut p, s, sval(1, O));
        }
        deliver(&mut p, 0, auxbin(1, O));
        deliver(&mut p, 1, auxbin(1, O));
        assert!(deliver(&mut p, 3, auxbin(1, Z)).is_empty());
        assert_eq!(p.view(Round(1)), None);
        let out = deliver(&mut p, 2, auxbin(1, O));
        assert_eq!(out, [Effect::RequestCoin(Round(1))]);
    }

    #[test]
    fn sval_for_uninstantiated_value_is_dropped() {
        let mut p = process();
        round_one(&mut p, O);
        p.step_collect(Input::Coin {
            round: Round(1),
            value: O,
        })
        .unwrap();
        // Round 2 instantiated 0 only.
        let before = p.dropped();
        assert!(deliver(&mut p, 3, sval(2, O)).is_empty());
        assert_eq!(p.dropped(), before + 1);
    }

    #[test]
    fn future_svals_are_buffered() {
        let mut p = process();
        for s in 1..3 {
            assert!(deliver(&mut p, s, sval(1, Z)).is_empty());
        }
        let out = p.step_collect(Input::Propose(O)).unwrap();
        // The silent 0 instance echoes on start, then the loud 1 goes out.
        assert_eq!(
            out,
            [Effect::Broadcast(sval(1, Z)), Effect::Broadcast(sval(1, O))]
        );
    }
}
