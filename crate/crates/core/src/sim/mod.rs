//! Seeded discrete-event simulation of one consensus run.
//!
//! Time is the number of deliveries made so far. Every broadcast becomes one
//! pending message per non-faulty recipient, sender included; the scheduler
//! picks what arrives next. Coin values reach requesters as soon as the coin
//! is revealed. Messages addressed to faulty processes are never queued:
//! faulty processes see every broadcast the moment it is sent.
//!
//! A run ends once every non-faulty process has decided and every message
//! of a round up to the last decision round has been delivered. Later-round
//! traffic is set aside at that point, which makes per-round broadcast
//! counts of those rounds final.

pub mod byzantine;
pub mod observer;
pub mod sched;
pub mod trace;

use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::coin::{CoinConfig, CoinKind, CoinOracle, Registration};
use crate::error::{Error, Result};
use crate::sbv::ViewSelection;
use crate::strong::StrongProcess;
use crate::types::{
    BinValue, Effect, Input, Message, Payload, ProcessId, ProcessSet, Protocol, Round, SystemParams,
};
use crate::weak::{Mode, WeakProcess};

pub use byzantine::{ByzStrategy, Injection, ScriptEntry};
pub use observer::Violation;
pub use sched::SchedulerKind;

use byzantine::Adversary;
use observer::Observer;
use sched::{Pending, Scheduler};
use trace::TraceSink;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Weak,
    WeakOpt,
    Strong,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Weak, Algorithm::WeakOpt, Algorithm::Strong];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Weak => "weak",
            Algorithm::WeakOpt => "weak-opt",
            Algorithm::Strong => "strong",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RunConfig {
    pub params: SystemParams,
    pub algorithm: Algorithm,
    pub coin: CoinConfig,
    /// One entry per process; entries of faulty processes are ignored.
    pub proposals: Vec<BinValue>,
    pub scheduler: SchedulerKind,
    /// Longest a message may wait, in deliveries. `None` picks `64 n²`.
    pub delay_cap: Option<u64>,
    /// Strategy per faulty process; faulty processes without one are mute.
    pub byzantine: BTreeMap<ProcessId, ByzStrategy>,
    pub seed: u64,
    pub max_rounds: u32,
    pub view_selection: ViewSelection,
    /// Keep the trace text in the result, not just its digest.
    pub record_trace: bool,
}

pub const DEFAULT_MAX_ROUNDS: u32 = 200;

impl RunConfig {
    /// A config with the last `t` processes faulty and running `strategy`,
    /// the coin matching the algorithm, and FIFO delivery.
    pub fn new(
        n: usize,
        t: usize,
        algorithm: Algorithm,
        proposals: Vec<BinValue>,
        strategy: ByzStrategy,
        seed: u64,
    ) -> Result<Self> {
        let faulty: ProcessSet = (n - t..n).map(ProcessId::from).collect();
        let params = SystemParams::new(n, t)?.with_faulty(faulty)?;
        let coin = match algorithm {
            Algorithm::Strong => CoinConfig::strong(),
            _ => CoinConfig::weak(2),
        };
        let byzantine = faulty.iter().map(|p| (p, strategy.clone())).collect();
        Ok(RunConfig {
            params,
            algorithm,
            coin,
            proposals,
            scheduler: SchedulerKind::Fifo,
            delay_cap: None,
            byzantine,
            seed,
            max_rounds: DEFAULT_MAX_ROUNDS,
            view_selection: ViewSelection::Union,
            record_trace: false,
        })
    }

    pub fn effective_delay_cap(&self) -> u64 {
        let n = self.params.n() as u64;
        self.delay_cap.unwrap_or(64 * n * n)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.params.n();
        if self.proposals.len() != n {
            return Err(Error::Config(alloc::format!(
                "{} proposals given for {n} processes",
                self.proposals.len()
            )));
        }
        self.coin.validate()?;
        if self.algorithm == Algorithm::Strong && self.coin.kind != CoinKind::Strong {
            return Err(Error::Config(
                "the strong algorithm needs the strong coin".into(),
            ));
        }
        if let Some(p) = self.byzantine.keys().find(|p| !self.params.is_faulty(**p)) {
            return Err(Error::Config(alloc::format!(
                "{p} has a Byzantine strategy but is not faulty"
            )));
        }
        if self.max_rounds == 0 {
            return Err(Error::Config("max_rounds must be positive".into()));
        }
        if self.delay_cap == Some(0) {
            return Err(Error::Config("delay cap must be positive".into()));
        }
        Ok(())
    }

    /// The canonical header line of this run's trace.
    pub fn header(&self) -> String {
        let mut b = trace::JsonBuf::default();
        self.write_header(&mut b);
        String::from_utf8_lossy(&b.bytes).into_owned()
    }

    fn write_header(&self, b: &mut trace::JsonBuf) {
        b.raw("{\"seq\":0,\"kind\":\"start\"");
        b.key("algorithm").str(self.algorithm.name());
        b.key("n").num(self.params.n() as u64);
        b.key("t").num(self.params.t() as u64);
        b.key("faulty")
            .num_list(self.params.faulty().iter().map(|p| u64::from(p.0)));
        b.key("proposals")
            .num_list(self.proposals.iter().map(|v| u64::from(v.as_u8())));
        b.key("scheduler").str(self.scheduler.name());
        if let SchedulerKind::DelayTarget { targets } = &self.scheduler {
            b.key("targets")
                .num_list(targets.iter().map(|p| u64::from(p.0)));
        }
        b.key("delay_cap").num(self.effective_delay_cap());
        match self.coin.kind {
            CoinKind::Weak { d } => {
                b.key("coin").str("weak");
                b.key("d").num(d.into());
            }
            CoinKind::Strong => {
                b.key("coin").str("strong");
            }
        }
        b.key("split").str(self.coin.split.name());
        b.key("byzantine").raw("[");
        for (i, (p, s)) in self.byzantine.iter().enumerate() {
            if i > 0 {
                b.raw(",");
            }
            b.raw("{\"pid\":")
                .num(p.0.into())
                .key("strategy")
                .str(s.name());
            if let ByzStrategy::Scripted(entries) = s {
                b.key("entries").num(entries.len() as u64);
            }
            b.raw("}");
        }
        b.raw("]");
        b.key("seed").num(self.seed);
        b.key("max_rounds").num(self.max_rounds.into());
        b.key("view_selection").str(self.view_selection.name());
        b.raw("}");
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunResult {
    /// Decision per process; `None` for faulty or undecided processes.
    pub decisions: Vec<Option<(BinValue, Round)>>,
    pub safety_ok: bool,
    pub violations: Vec<Violation>,
    /// `broadcasts[p][r-1]`: broadcasts by non-faulty `p` tagged with round
    /// `r`, for every closed round `r <= closed_round`.
    pub broadcasts: Vec<Vec<u32>>,
    pub closed_round: u32,
    /// Deliveries performed.
    pub total_events: u64,
    pub trace_digest: u64,
    pub timed_out: bool,
    /// No message was left to deliver before everyone decided.
    pub stalled: bool,
    pub max_delay: u64,
    pub delay_cap: u64,
    /// Messages discarded by receivers as malformed or unusable.
    pub dropped: u64,
    /// Later-round messages set aside when the run ended.
    pub set_aside: u64,
    pub byzantine_messages: u64,
    /// Adversary coin reads answered "unrevealed".
    pub gated_peeks: u64,
    /// Coin reads that bypassed the revelation rule. Always expected 0.
    pub coin_leaks: u64,
    pub trace: Option<Vec<String>>,
}

impl RunResult {
    /// Round by which every non-faulty process had decided.
    pub fn decision_round(&self) -> Option<u32> {
        self.decisions.iter().flatten().map(|(_, r)| r.get()).max()
    }

    pub fn decided_value(&self) -> Option<BinValue> {
        self.decisions.iter().flatten().map(|(v, _)| *v).next()
    }

    /// `(pid, round, count)` for every non-faulty process and closed round.
    pub fn broadcast_counts(&self) -> impl Iterator<Item = (ProcessId, Round, u32)> + '_ {
        self.broadcasts.iter().enumerate().flat_map(|(p, rounds)| {
            rounds
                .iter()
                .enumerate()
                .map(move |(r, c)| (ProcessId::from(p), Round(r as u32 + 1), *c))
        })
    }

    pub fn consensus_failures(&self) -> usize {
        self.violations
            .iter()
            .filter(|v| v.is_consensus_failure())
            .count()
    }
}

enum Node {
    Weak(WeakProcess),
    Strong(StrongProcess),
    Faulty,
}

impl Node {
    fn protocol(&mut self) -> Option<&mut dyn Protocol> {
        match self {
            Node::Weak(p) => Some(p),
            Node::Strong(p) => Some(p),
            Node::Faulty => None,
        }
    }

    fn view(&self) -> Option<&dyn Protocol> {
        match self {
            Node::Weak(p) => Some(p),
            Node::Strong(p) => Some(p),
            Node::Faulty => None,
        }
    }
}

struct Sim<'a> {
    cfg: &'a RunConfig,
    n: usize,
    correct: ProcessSet,
    nodes: Vec<Node>,
    adversaries: Vec<Adversary>,
    coin: CoinOracle,
    sched: Scheduler,
    rng: ChaCha8Rng,
    sink: TraceSink,
    observer: Observer,
    tick: u64,
    work: VecDeque<(ProcessId, Input)>,
    effects: Vec<Effect>,
    injections: Vec<Injection>,
    counts: Vec<Vec<u32>>,
    undecided: usize,
    /// Set once everyone decided: the last round still being delivered.
    stop_round: Option<Round>,
    set_aside: u64,
    byzantine_messages: u64,
    max_delay: u64,
    timed_out: bool,
    aborted: bool,
}

/// Executes one run. Configuration errors are returned; protocol failures
/// are reported in the result.
pub fn run(cfg: &RunConfig) -> Result<RunResult> {
    cfg.validate()?;
    let params = cfg.params;
    let n = params.n();
    let correct = params.non_faulty();
    let nodes = params
        .processes()
        .map(|p| {
            if params.is_faulty(p) {
                return Node::Faulty;
            }
            match cfg.algorithm {
                Algorithm::Weak => Node::Weak(WeakProcess::new(
                    p,
                    params,
                    Mode::Baseline,
                    cfg.view_selection,
                )),
                Algorithm::WeakOpt => Node::Weak(WeakProcess::new(
                    p,
                    params,
                    Mode::Optimized,
                    cfg.view_selection,
                )),
                Algorithm::Strong => {
                    Node::Strong(StrongProcess::new(p, params, cfg.view_selection))
                }
            }
        })
        .collect();
    let adversaries = params
        .faulty()
        .iter()
        .map(|p| {
            Adversary::new(
                p,
                cfg.byzantine.get(&p).cloned().unwrap_or(ByzStrategy::Mute),
            )
        })
        .collect();
    let mut sink = TraceSink::new(cfg.record_trace);
    cfg.write_header(sink.begin_raw());
    sink.commit();

    let mut sim = Sim {
        cfg,
        n,
        correct,
        nodes,
        adversaries,
        coin: CoinOracle::new(cfg.coin, params, cfg.seed)?,
        sched: Scheduler::new(cfg.scheduler.clone(), cfg.effective_delay_cap()),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5ced_u64.rotate_left(48)),
        sink,
        observer: Observer::new(correct.iter().map(|p| cfg.proposals[p.index()])),
        tick: 0,
        work: VecDeque::new(),
        effects: Vec::new(),
        injections: Vec::new(),
        counts: vec![Vec::new(); n],
        undecided: correct.len(),
        stop_round: None,
        set_aside: 0,
        byzantine_messages: 0,
        max_delay: 0,
        timed_out: false,
        aborted: false,
    };
    sim.execute();
    Ok(sim.finish())
}

impl Sim<'_> {
    fn execute(&mut self) {
        for p in self.correct.iter() {
            self.work
                .push_back((p, Input::Propose(self.cfg.proposals[p.index()])));
        }
        self.drain_work();
        while !self.aborted && !self.timed_out {
            self.inject_scripted();
            if self.undecided == 0 && self.stop_round.is_none() {
                self.begin_final_drain();
            }
            let Some(next) = self.sched.next(self.tick, &mut self.rng) else {
                break;
            };
            self.tick += 1;
            self.max_delay = self.max_delay.max(self.tick - next.sent);
            self.sink.deliver(next.to, &next.msg);
            self.work.push_back((next.to, Input::Deliver(next.msg)));
            self.drain_work();
        }
        if self.undecided > 0 && !self.aborted {
            self.timed_out = true;
        }
    }

    fn inject_scripted(&mut self) {
        if self.adversaries.is_empty() {
            return;
        }
        let mut injections = core::mem::take(&mut self.injections);
        for i in 0..self.adversaries.len() {
            injections.clear();
            self.adversaries[i].scripted(self.tick, self.correct, &mut injections);
            let pid = self.adversaries[i].pid;
            for inj in injections.drain(..) {
                self.inject(pid, inj);
            }
        }
        self.injections = injections;
    }

    fn inject(&mut self, sender: ProcessId, inj: Injection) {
        let msg = Message {
            sender,
            payload: inj.payload,
        };
        self.sink.broadcast(&msg, Some(&inj.to));
        for to in inj.to {
            if to.index() < self.n && self.correct.contains(to) {
                self.byzantine_messages += 1;
                self.enqueue(to, msg);
            }
        }
    }

    fn enqueue(&mut self, to: ProcessId, msg: Message) {
        if let Some(stop) = self.stop_round {
            if msg.payload.round() > stop {
                self.set_aside += 1;
                self.sink.drop_message(to, &msg);
                return;
            }
        }
        self.sched.push(Pending {
            to,
            msg,
            sent: self.tick,
        });
    }

    fn begin_final_drain(&mut self) {
        let stop = self
            .nodes
            .iter()
            .filter_map(|n| n.view()?.decision())
            .map(|(_, r)| r)
            .max()
            .unwrap_or(Round::ZERO);
        self.stop_round = Some(stop);
        for p in self.sched.extract(|p| p.msg.payload.round() > stop) {
            self.set_aside += 1;
            self.sink.drop_message(p.to, &p.msg);
        }
    }

    fn drain_work(&mut self) {
        while let Some((pid, input)) = self.work.pop_front() {
            if self.aborted {
                self.work.clear();
                return;
            }
            self.step(pid, input);
        }
    }

    fn step(&mut self, pid: ProcessId, input: Input) {
        let mut effects = core::mem::take(&mut self.effects);
        effects.clear();
        let Some(node) = self.nodes[pid.index()].protocol() else {
            self.effects = effects;
            return;
        };
        let was_decided = node.decision().is_some();
        if let Err(error) = node.step(input, &mut effects) {
            self.observer
                .violations
                .push(Violation::Protocol { pid, error });
            self.aborted = true;
        }
        let round = node.round();
        let decided = node.decision().is_some();
        for e in effects.drain(..) {
            match e {
                Effect::Broadcast(payload) => self.broadcast(pid, payload),
                Effect::RequestCoin(r) => self.request_coin(pid, r),
                Effect::Decide { value, round } => {
                    self.sink.decide(pid, value, round);
                    self.observer.on_decide(pid, value, round);
                }
            }
        }
        self.effects = effects;
        if decided && !was_decided {
            self.undecided -= 1;
        }
        if !decided && round.get() > self.cfg.max_rounds {
            self.timed_out = true;
        }
    }

    fn broadcast(&mut self, pid: ProcessId, payload: Payload) {
        let round = payload.round().get() as usize;
        let counts = &mut self.counts[pid.index()];
        if counts.len() < round {
            counts.resize(round, 0);
        }
        counts[round - 1] += 1;
        let msg = Message {
            sender: pid,
            payload,
        };
        self.sink.broadcast(&msg, None);
        for to in self.correct.iter() {
            self.enqueue(to, msg);
        }
        if self.adversaries.is_empty() {
            return;
        }
        let mut injections = core::mem::take(&mut self.injections);
        for i in 0..self.adversaries.len() {
            injections.clear();
            self.adversaries[i].react(
                &payload,
                self.n,
                self.correct,
                &mut self.coin,
                &mut injections,
            );
            let from = self.adversaries[i].pid;
            for inj in injections.drain(..) {
                self.inject(from, inj);
            }
        }
        self.injections = injections;
    }

    fn request_coin(&mut self, pid: ProcessId, round: Round) {
        self.sink.coin_request(round, pid);
        match self.coin.request(round, pid) {
            Registration::Pending => {}
            Registration::Revealed => {
                if let Some(value) = self.coin.value_for(round, pid) {
                    self.work.push_back((pid, Input::Coin { round, value }));
                }
            }
            Registration::Reveal => {
                let leans: Vec<Option<BinValue>> = self
                    .nodes
                    .iter()
                    .map(|n| n.view().and_then(|p| p.coin_lean()))
                    .collect();
                let assignment = match self.coin.reveal(round, &leans) {
                    Ok(a) => a.to_vec(),
                    Err(error) => {
                        self.observer
                            .violations
                            .push(Violation::Protocol { pid, error });
                        self.aborted = true;
                        return;
                    }
                };
                self.sink.coin_reveal(round, &assignment);
                for p in self.coin.requesters(round).iter() {
                    self.work.push_back((
                        p,
                        Input::Coin {
                            round,
                            value: assignment[p.index()],
                        },
                    ));
                }
            }
        }
    }

    fn finish(mut self) -> RunResult {
        let cap = self.cfg.effective_delay_cap();
        if self.max_delay > cap {
            self.observer.violations.push(Violation::Fairness {
                delay: self.max_delay,
                cap,
            });
        }
        let mut closed_round = 0;
        if let Some(stop) = self.stop_round.filter(|_| !self.aborted && !self.timed_out) {
            closed_round = stop.get();
            for node in &self.nodes {
                if let Some(p) = node.view() {
                    if p.round() <= stop {
                        self.observer.violations.push(Violation::IncompleteRound {
                            pid: p.id(),
                            round: p.round(),
                        });
                    }
                }
            }
        }
        let weak: Vec<&WeakProcess> = self
            .nodes
            .iter()
            .filter_map(|n| if let Node::Weak(p) = n { Some(p) } else { None })
            .collect();
        if !weak.is_empty() {
            self.observer.check_weak(&weak);
        }
        let strong: Vec<&StrongProcess> = self
            .nodes
            .iter()
            .filter_map(|n| {
                if let Node::Strong(p) = n {
                    Some(p)
                } else {
                    None
                }
            })
            .collect();
        if !strong.is_empty() {
            self.observer.check_strong(&strong);
        }
        let mut broadcasts = core::mem::take(&mut self.counts);
        for (p, counts) in broadcasts.iter_mut().enumerate() {
            if self.correct.contains(ProcessId::from(p)) {
                counts.resize(closed_round as usize, 0);
            } else {
                counts.clear();
            }
        }
        let decisions = self
            .nodes
            .iter()
            .map(|n| n.view().and_then(|p| p.decision()))
            .collect();
        let dropped = self
            .nodes
            .iter()
            .filter_map(|n| n.view())
            .map(|p| p.dropped())
            .sum();
        let violations = self.observer.violations;
        RunResult {
            decisions,
            safety_ok: violations.is_empty(),
            violations,
            broadcasts,
            closed_round,
            total_events: self.tick,
            trace_digest: self.sink.digest(),
            timed_out: self.timed_out,
            stalled: self.sched.is_empty() && self.undecided > 0,
            max_delay: self.max_delay,
            delay_cap: cap,
            dropped,
            set_aside: self.set_aside,
            byzantine_messages: self.byzantine_messages,
            gated_peeks: self.coin.gated_peeks(),
            coin_leaks: self.coin.leaks(),
            trace: self.sink.into_lines(),
        }
    }
}
