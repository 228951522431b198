//! Exhaustive exploration of single broadcast instances at `n = 4, t = 1`.
//!
//! Processes 0..3 are correct and p3 is Byzantine. With the equivocate
//! injector, p3 may send every message of its menu (each kind, both values,
//! to each correct process) at any moment, or never. Those sends are modelled
//! as optional transitions, so one search covers every subset, timing and
//! per-recipient mix of Byzantine messages.
//!
//! A state is complete once every message sent by a correct process has been
//! delivered; properties are evaluated at every complete state. States are
//! memoized by an exact packed key; see [`key`].

use std::collections::HashSet;
use std::fmt::Write as _;

use anyhow::{bail, Result};
use coinsensus_core::bv::BvState;
use coinsensus_core::sbc::SbcState;
use coinsensus_core::sbv::{SbvState, ViewSelection};
use coinsensus_core::{
    BinValue, EstValue, InstanceTag, Message, Payload, Phase, ProcessId, ProcessSet, SystemParams,
    ValueSet,
};
use serde::Serialize;

const N: usize = 4;
const CORRECT: usize = 3;
const BYZ: ProcessId = ProcessId(3);
/// Widest per-process key chunk (`sbv`).
const CHUNK_BITS: u32 = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Bv,
    Sbv,
    Sbc,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Bv => "bv",
            Target::Sbv => "sbv",
            Target::Sbc => "sbc",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Injector {
    /// p3 sends nothing.
    Silent,
    Equivocate,
}

#[derive(Clone, Debug)]
pub struct CheckSpec {
    pub target: Target,
    /// Per correct process: input value and, for `sbc`, whether it broadcasts.
    pub inputs: Vec<(BinValue, bool)>,
    pub injector: Injector,
    /// Most messages p3 may inject over the whole run.
    pub budget: usize,
    pub selection: ViewSelection,
}

impl CheckSpec {
    pub fn validate(&self) -> Result<()> {
        if self.inputs.len() != CORRECT {
            bail!(
                "the checker runs n = 4, t = 1: give exactly 3 inputs for p0..p2, got {}",
                self.inputs.len()
            );
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PropertyCount {
    pub name: &'static str,
    /// Complete states where the property applied.
    pub checked: u64,
    pub failed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CheckReport {
    pub target: &'static str,
    pub inputs: String,
    pub injector: &'static str,
    pub states: u64,
    pub transitions: u64,
    pub complete_states: u64,
    pub properties: Vec<PropertyCount>,
    /// Deliveries leading to the first failing state.
    pub counterexample: Option<Vec<String>>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(|p| p.failed == 0)
    }
}

#[derive(Clone, Debug)]
enum Node {
    Bv(BvState),
    Sbv(SbvState),
    Sbc([SbcState; 2]),
}

#[derive(Clone, Debug)]
struct World {
    nodes: Vec<Node>,
    /// Undelivered messages from correct senders, sorted.
    pending: Vec<(ProcessId, Message)>,
    /// Per recipient, bit `i` set: menu entry `i` not yet injected.
    byz_left: [u8; CORRECT],
    injected: usize,
}

struct Search<'a> {
    spec: &'a CheckSpec,
    menu: Vec<Payload>,
    /// Symmetry class of each correct process: processes with equal inputs
    /// are interchangeable.
    class: [u8; CORRECT],
    aux_mask: u8,
    seen: HashSet<u128>,
    path: Vec<(ProcessId, Message)>,
    transitions: u64,
    complete: u64,
    props: Vec<PropertyCount>,
    counterexample: Option<Vec<String>>,
}

fn tag(target: Target) -> InstanceTag {
    match target {
        Target::Sbc => InstanceTag::est(1),
        _ => InstanceTag::stage(1, Phase::Zero),
    }
}

fn property_names(target: Target) -> &'static [&'static str] {
    match target {
        Target::Bv => &[
            "BV-Termination",
            "BV-Justification",
            "BV-Uniformity",
            "BV-Obligation",
            "BV-Single-value",
        ],
        Target::Sbv => &[
            "SBV-Termination",
            "SBV-Obligation",
            "SBV-Justification",
            "SBV-Inclusion",
            "SBV-Uniformity",
            "SBV-Singleton",
            "SBV-Binvalues",
        ],
        Target::Sbc => &[
            "S-Termination",
            "S-Justification",
            "S-Uniformity",
            "S-Obligation",
        ],
    }
}

/// What p3 may send to each correct process.
fn menu(spec: &CheckSpec) -> Vec<Payload> {
    if spec.injector == Injector::Silent {
        return Vec::new();
    }
    let t = tag(spec.target);
    let mut kinds = Vec::new();
    for v in BinValue::BOTH {
        let value = EstValue::from(v);
        match spec.target {
            Target::Bv => kinds.push(Payload::Bval { tag: t, value }),
            Target::Sbv => {
                kinds.push(Payload::Bval { tag: t, value });
                kinds.push(Payload::Aux { tag: t, value });
            }
            Target::Sbc => kinds.push(Payload::Sval { tag: t, value }),
        }
    }
    kinds
}

/// Packs everything that determines a state's future into 128 bits.
///
/// Receivers only ever count distinct senders, so states that differ in
/// which correct processes sent something, but not in how many, behave
/// identically. The key keeps, per process and value, the number of correct
/// senders seen and whether p3 was among them, plus the local outputs.
/// Pending correct messages follow from the senders' states and are left out.
struct Packer(u128, u32);

impl Packer {
    fn put(&mut self, bits: u32, v: impl Into<u64>) {
        let v = v.into();
        debug_assert!(v < (1 << bits));
        self.0 |= u128::from(v) << self.1;
        self.1 += bits;
        assert!(self.1 <= 128, "state key overflow");
    }

    fn senders(&mut self, s: ProcessSet) {
        let byz = s.contains(BYZ);
        self.put(3, (s.len() - usize::from(byz)) as u64);
        self.put(1, byz);
    }

    fn set(&mut self, s: ValueSet) {
        self.put(3, s.bits());
    }
}

/// Canonical key: per-process chunks, sorted within each symmetry class.
fn key(w: &World, class: &[u8; CORRECT]) -> u128 {
    let mut chunks = [(0u8, 0u64); CORRECT];
    for (i, node) in w.nodes.iter().enumerate() {
        let mut k = Packer(0, 0);
        k.put(4, w.byz_left[i]);
        match node {
            Node::Bv(bv) => pack_bv(&mut k, bv),
            Node::Sbv(s) => {
                pack_bv(&mut k, s.bv());
                for v in BinValue::BOTH {
                    k.senders(s.aux_senders(v.into()));
                }
                k.put(2, s.aux_sent().map_or(0, |v| v.index() as u64 + 1));
                k.put(1, s.view().is_some());
                k.set(s.view().unwrap_or(ValueSet::EMPTY));
                let mut n = 0u32;
                for v in s.aux_arrivals() {
                    k.put(1, v.index() as u64);
                    n += 1;
                }
                k.put(4 - n, 0u8);
                k.put(3, n);
            }
            Node::Sbc(inst) => {
                for i in inst {
                    k.senders(i.senders());
                    k.put(1, i.has_broadcast());
                    k.put(1, i.svalue());
                    k.put(1, i.is_started());
                }
            }
        }
        debug_assert!(k.1 <= CHUNK_BITS);
        chunks[i] = (class[i], k.0 as u64);
    }
    chunks.sort_unstable();
    let mut out = Packer(0, 0);
    for (_, c) in chunks {
        out.put(CHUNK_BITS, c);
    }
    out.0
}

fn pack_bv(k: &mut Packer, bv: &BvState) {
    for v in BinValue::BOTH {
        k.senders(bv.senders_of(v.into()));
    }
    k.set(bv.echoed());
    k.set(bv.bin_values());
    k.put(1, bv.is_started());
}

fn describe(to: ProcessId, m: &Message) -> String {
    let value = match m.payload {
        Payload::Bval { value, .. } | Payload::Aux { value, .. } | Payload::Sval { value, .. } => {
            value
        }
        _ => EstValue::Bot,
    };
    format!(
        "{} -> {}: {}({})",
        m.sender,
        to,
        m.payload.kind_name(),
        value
    )
}

impl World {
    fn send(&mut self, from: ProcessId, payload: Payload) {
        for to in 0..CORRECT {
            let item = (
                ProcessId::from(to),
                Message {
                    sender: from,
                    payload,
                },
            );
            if let Err(pos) = self.pending.binary_search(&item) {
                self.pending.insert(pos, item);
            }
        }
    }

    fn deliver(&mut self, to: ProcessId, m: Message) {
        let mut sends: Vec<Payload> = Vec::new();
        match (&mut self.nodes[to.index()], m.payload) {
            (Node::Bv(bv), Payload::Bval { tag, value }) => {
                let step = bv.on_bval(m.sender, value);
                sends.extend(
                    step.broadcast
                        .iter()
                        .map(|v| Payload::Bval { tag, value: v }),
                );
            }
            (Node::Sbv(s), Payload::Bval { tag, value }) => {
                let step = s.on_bval(m.sender, value);
                sends.extend(step.bval.iter().map(|v| Payload::Bval { tag, value: v }));
                sends.extend(step.aux.map(|v| Payload::Aux { tag, value: v }));
            }
            (Node::Sbv(s), Payload::Aux { value, .. }) => {
                s.on_aux(m.sender, value);
            }
            (Node::Sbc(inst), Payload::Sval { tag, value }) => {
                if let Some(b) = value.as_bin() {
                    if inst[b.index()].on_sval(m.sender).sval {
                        sends.push(Payload::Sval { tag, value });
                    }
                }
            }
            _ => {}
        }
        for p in sends {
            self.send(to, p);
        }
    }
}

impl Search<'_> {
    fn record(&mut self, idx: usize, applies: bool, ok: bool) {
        if !applies {
            return;
        }
        let p = &mut self.props[idx];
        p.checked += 1;
        if !ok {
            p.failed += 1;
            if self.counterexample.is_none() {
                self.counterexample =
                    Some(self.path.iter().map(|(to, m)| describe(*to, m)).collect());
            }
        }
    }

    fn dfs(&mut self, w: World) {
        if !self.seen.insert(key(&w, &self.class)) {
            return;
        }
        if w.pending.is_empty() {
            self.complete += 1;
            self.evaluate(&w);
        }
        // Messages that differ only in which correct process sent them lead to
        // the same abstract successor; one representative is enough.
        let mut tried: Vec<(ProcessId, Payload)> = Vec::new();
        for i in 0..w.pending.len() {
            let (to, m) = w.pending[i];
            if tried.contains(&(to, m.payload)) {
                continue;
            }
            tried.push((to, m.payload));
            let mut next = w.clone();
            next.pending.remove(i);
            next.deliver(to, m);
            self.step(next, to, m);
        }
        if w.injected >= self.spec.budget {
            return;
        }
        for to in 0..CORRECT {
            for j in 0..self.menu.len() {
                let payload = self.menu[j];
                if w.byz_left[to] & (1 << j) == 0 {
                    continue;
                }
                let (to, m) = (
                    ProcessId::from(to),
                    Message {
                        sender: BYZ,
                        payload,
                    },
                );
                let mut next = w.clone();
                next.byz_left[to.index()] &= !(1 << j);
                if let Payload::Aux { .. } = payload {
                    // Only a sender's first AUX counts; the other one is moot.
                    next.byz_left[to.index()] &= !self.aux_mask;
                }
                next.injected += 1;
                next.deliver(to, m);
                self.step(next, to, m);
            }
        }
    }

    fn step(&mut self, next: World, to: ProcessId, m: Message) {
        self.transitions += 1;
        self.path.push((to, m));
        self.dfs(next);
        self.path.pop();
    }

    fn input_set(&self, broadcasting_only: bool) -> ValueSet {
        self.spec
            .inputs
            .iter()
            .filter(|(_, b)| !broadcasting_only || *b)
            .map(|(v, _)| EstValue::from(*v))
            .collect()
    }

    fn evaluate(&mut self, w: &World) {
        match self.spec.target {
            Target::Bv => self.evaluate_bv(w),
            Target::Sbv => self.evaluate_sbv(w),
            Target::Sbc => self.evaluate_sbc(w),
        }
    }

    fn evaluate_bv(&mut self, w: &World) {
        let bins: Vec<ValueSet> = w
            .nodes
            .iter()
            .map(|n| {
                if let Node::Bv(b) = n {
                    b.bin_values()
                } else {
                    ValueSet::EMPTY
                }
            })
            .collect();
        let inputs = self.input_set(false);
        let started = w
            .nodes
            .iter()
            .all(|n| matches!(n, Node::Bv(b) if b.is_started()));
        self.record(0, true, started);
        self.record(1, true, bins.iter().all(|b| b.is_subset(inputs)));
        self.record(2, true, bins.iter().all(|b| *b == bins[0]));
        self.record(3, true, bins.iter().all(|b| !b.is_empty()));
        let single = inputs.as_single();
        self.record(
            4,
            single.is_some(),
            bins.iter()
                .all(|b| Some(*b) == single.map(ValueSet::single)),
        );
    }

    fn evaluate_sbv(&mut self, w: &World) {
        let states: Vec<&SbvState> = w
            .nodes
            .iter()
            .filter_map(|n| if let Node::Sbv(s) = n { Some(s) } else { None })
            .collect();
        let views: Vec<Option<ValueSet>> = states.iter().map(|s| s.view()).collect();
        let bins: Vec<ValueSet> = states.iter().map(|s| s.bin_values()).collect();
        let inputs = self.input_set(false);
        self.record(0, true, views.iter().all(Option::is_some));
        let done: Vec<ValueSet> = views.iter().flatten().copied().collect();
        self.record(1, true, done.iter().all(|v| !v.is_empty()));
        self.record(2, true, done.iter().all(|v| v.is_subset(inputs)));
        let inclusion = done.iter().all(|vi| match vi.as_single() {
            Some(v) => done.iter().all(|vj| vj.contains(v)),
            None => true,
        });
        self.record(3, true, inclusion);
        let single = inputs.as_single();
        self.record(
            4,
            single.is_some(),
            done.iter()
                .all(|v| Some(*v) == single.map(ValueSet::single)),
        );
        let singles: ValueSet = done.iter().filter_map(|v| v.as_single()).collect();
        self.record(5, true, singles.len() <= 1);
        let union: ValueSet = done.iter().fold(ValueSet::EMPTY, |acc, v| acc.union(*v));
        let binvalues = bins
            .iter()
            .all(|b| *b == bins[0] && b.is_subset(inputs) && union.is_subset(*b));
        self.record(6, true, binvalues);
    }

    fn evaluate_sbc(&mut self, w: &World) {
        let flags: Vec<[bool; 2]> = w
            .nodes
            .iter()
            .map(|n| {
                if let Node::Sbc(i) = n {
                    [i[0].svalue(), i[1].svalue()]
                } else {
                    [false; 2]
                }
            })
            .collect();
        let started = w
            .nodes
            .iter()
            .all(|n| matches!(n, Node::Sbc(i) if i.iter().all(SbcState::is_started)));
        self.record(0, true, started);
        let loud = self.input_set(true);
        for v in BinValue::BOTH {
            let k = v.index();
            let any = flags.iter().any(|f| f[k]);
            let all = flags.iter().all(|f| f[k]);
            self.record(1, true, !any || loud.contains(v.into()));
            self.record(2, true, !any || all);
            let callers = self
                .spec
                .inputs
                .iter()
                .filter(|(x, b)| *b && *x == v)
                .count();
            self.record(3, callers >= 2, all);
        }
    }
}

fn initial(spec: &CheckSpec) -> Result<World> {
    let th = SystemParams::new(N, 1)?.thresholds();
    let t = tag(spec.target);
    let mut w = World {
        nodes: Vec::new(),
        pending: Vec::new(),
        byz_left: [0; CORRECT],
        injected: 0,
    };
    let mut sends = Vec::new();
    for (i, (v, loud)) in spec.inputs.iter().enumerate() {
        let pid = ProcessId::from(i);
        let value = EstValue::from(*v);
        match spec.target {
            Target::Bv => {
                let mut bv = BvState::new(t, th)?;
                let step = bv.init(value)?;
                sends.extend(
                    step.broadcast
                        .iter()
                        .map(|x| (pid, Payload::Bval { tag: t, value: x })),
                );
                w.nodes.push(Node::Bv(bv));
            }
            Target::Sbv => {
                let mut s = SbvState::new(t, th, spec.selection)?;
                let step = s.init(value, false)?;
                sends.extend(
                    step.bval
                        .iter()
                        .map(|x| (pid, Payload::Bval { tag: t, value: x })),
                );
                w.nodes.push(Node::Sbv(s));
            }
            Target::Sbc => {
                let mut inst = [
                    SbcState::new(t, BinValue::Zero, th)?,
                    SbcState::new(t, BinValue::One, th)?,
                ];
                for b in BinValue::BOTH {
                    let should = *loud && b == *v;
                    if inst[b.index()].init(should)?.sval {
                        sends.push((
                            pid,
                            Payload::Sval {
                                tag: t,
                                value: b.into(),
                            },
                        ));
                    }
                }
                w.nodes.push(Node::Sbc(inst));
            }
        }
    }
    for (from, p) in sends {
        w.send(from, p);
    }
    Ok(w)
}

/// Runs the exhaustive search for `spec`.
pub fn check(spec: &CheckSpec) -> Result<CheckReport> {
    spec.validate()?;
    let menu = menu(spec);
    let mut world = initial(spec)?;
    world.byz_left = [((1u16 << menu.len()) - 1) as u8; CORRECT];
    let mut class = [0u8; CORRECT];
    for (i, (v, loud)) in spec.inputs.iter().enumerate() {
        class[i] = v.as_u8() * 2 + u8::from(*loud);
    }
    let mut search = Search {
        spec,
        aux_mask: menu
            .iter()
            .enumerate()
            .filter(|(_, p)| matches!(p, Payload::Aux { .. }))
            .fold(0, |m, (j, _)| m | (1 << j)),
        menu,
        class,
        seen: HashSet::new(),
        path: Vec::new(),
        transitions: 0,
        complete: 0,
        props: property_names(spec.target)
            .iter()
            .map(|name| PropertyCount {
                name,
                ..PropertyCount::default()
            })
            .collect(),
        counterexample: None,
    };
    search.dfs(world);
    let mut inputs = String::new();
    for (i, (v, loud)) in spec.inputs.iter().enumerate() {
        if i > 0 {
            inputs.push(',');
        }
        let _ = write!(inputs, "{v}");
        if spec.target == Target::Sbc && !loud {
            inputs.push('-');
        }
    }
    Ok(CheckReport {
        target: spec.target.name(),
        inputs,
        injector: match spec.injector {
            Injector::Silent => "silent",
            Injector::Equivocate => "equivocate",
        },
        states: search.seen.len() as u64,
        transitions: search.transitions,
        complete_states: search.complete,
        properties: search.props,
        counterexample: search.counterexample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(target: Target, inputs: &[(u8, bool)]) -> CheckSpec {
        CheckSpec {
            target,
            inputs: inputs
                .iter()
                .map(|(v, b)| (BinValue::try_from(*v).unwrap(), *b))
                .collect(),
            injector: Injector::Equivocate,
            budget: 6,
            selection: ViewSelection::Union,
        }
    }

    #[test]
    fn bv_unanimous_holds() {
        let r = check(&spec(Target::Bv, &[(1, true), (1, true), (1, true)])).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.properties.iter().all(|p| p.checked > 0));
    }

    #[test]
    fn silent_byzantine_has_one_complete_state_for_unanimous_bv() {
        let mut s = spec(Target::Bv, &[(0, true), (0, true), (0, true)]);
        s.injector = Injector::Silent;
        let r = check(&s).unwrap();
        assert!(r.passed());
        assert_eq!(r.complete_states, 1);
    }

    #[test]
    fn wrong_input_count_is_rejected() {
        assert!(check(&spec(Target::Bv, &[(1, true)])).is_err());
    }
}
