use coinsensus_core::bv::BvState;
use coinsensus_core::sbv::{SbvState, ViewSelection};
use coinsensus_core::sim::byzantine::ByzStrategy;
use coinsensus_core::sim::sched::SchedulerKind;
use coinsensus_core::sim::{run, Algorithm, RunConfig};
use coinsensus_core::weak::{Mode, WeakProcess};
use coinsensus_core::{
    BinValue, EstValue, Input, InstanceTag, Message, Payload, Phase, ProcessId, Protocol, Round,
    SystemParams, ValueSet,
};
use proptest::prelude::*;

fn est() -> impl Strategy<Value = EstValue> {
    prop_oneof![
        Just(EstValue::Zero),
        Just(EstValue::One),
        Just(EstValue::Bot)
    ]
}

fn bin() -> impl Strategy<Value = BinValue> {
    prop_oneof![Just(BinValue::Zero), Just(BinValue::One)]
}

fn payload() -> impl Strategy<Value = Payload> {
    let tag = (1u32..4, any::<bool>())
        .prop_map(|(r, p)| InstanceTag::stage(r, if p { Phase::One } else { Phase::Zero }));
    prop_oneof![
        (tag.clone(), est()).prop_map(|(tag, value)| Payload::Bval { tag, value }),
        (tag, est()).prop_map(|(tag, value)| Payload::Aux { tag, value }),
        (1u32..4, 0u8..8).prop_map(|(r, bits)| Payload::AuxSet {
            round: Round(r),
            set: ValueSet::from_bits(bits)
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn bv_delivery_needs_a_quorum(
        input in prop_oneof![Just(EstValue::Zero), Just(EstValue::One)],
        msgs in prop::collection::vec((0u16..7, est()), 0..60),
    ) {
        let th = SystemParams::new(7, 2).unwrap().thresholds();
        let mut bv = BvState::new(InstanceTag::stage(1, Phase::Zero), th).unwrap();
        bv.init(input).unwrap();
        let mut prev = bv.bin_values();
        for (s, v) in msgs {
            bv.on_bval(ProcessId(s), v);
            let now = bv.bin_values();
            prop_assert!(prev.is_subset(now));
            for w in now.iter() {
                prop_assert!(bv.senders_of(w).len() >= th.deliver);
            }
            for w in bv.echoed().iter() {
                prop_assert!(w == input || bv.senders_of(w).len() >= th.echo);
            }
            prev = now;
        }
    }

    #[test]
    fn sbv_view_is_justified_and_fixed(
        input in prop_oneof![Just(EstValue::Zero), Just(EstValue::One)],
        msgs in prop::collection::vec((0u16..4, any::<bool>(), est()), 0..60),
        first_quorum in any::<bool>(),
    ) {
        let th = SystemParams::new(4, 1).unwrap().thresholds();
        let sel = if first_quorum { ViewSelection::FirstQuorum } else { ViewSelection::Union };
        let mut s = SbvState::new(InstanceTag::stage(1, Phase::One), th, sel).unwrap();
        s.init(input, false).unwrap();
        let mut aux = 0;
        let mut view = None;
        for (p, is_aux, v) in msgs {
            let step = if is_aux { s.on_aux(ProcessId(p), v) } else { s.on_bval(ProcessId(p), v) };
            aux += usize::from(step.aux.is_some());
            if let Some(w) = s.view() {
                prop_assert!(!w.is_empty());
                prop_assert!(w.is_subset(s.effective_bin_values()));
                prop_assert!(view.map_or(true, |old| old == w));
                view = Some(w);
            }
            if let Some(a) = s.aux_sent() {
                prop_assert!(s.effective_bin_values().contains(a));
            }
        }
        prop_assert!(aux <= 1);
    }

    #[test]
    fn weak_step_is_a_pure_function_of_state_and_input(
        proposal in bin(),
        msgs in prop::collection::vec((0u16..4, payload()), 1..80),
        optimized in any::<bool>(),
    ) {
        let params = SystemParams::new(4, 1).unwrap();
        let mode = if optimized { Mode::Optimized } else { Mode::Baseline };
        let mut a = WeakProcess::new(ProcessId(0), params, mode, ViewSelection::Union);
        let mut out = Vec::new();
        a.step(Input::Propose(proposal), &mut out).unwrap();
        for (sender, payload) in msgs {
            let mut b = a.clone();
            let input = Input::Deliver(Message { sender: ProcessId(sender), payload });
            let (mut ea, mut eb) = (Vec::new(), Vec::new());
            let ra = a.step(input, &mut ea);
            let rb = b.step(input, &mut eb);
            prop_assert_eq!(&ra, &rb);
            prop_assert_eq!(&ea, &eb);
            prop_assert_eq!(a.round(), b.round());
            prop_assert_eq!(a.decision(), b.decision());
            if ra.is_err() {
                break;
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_runs_are_safe_and_reproducible(
        algo in prop_oneof![Just(Algorithm::Weak), Just(Algorithm::WeakOpt), Just(Algorithm::Strong)],
        n in prop_oneof![Just(4usize), Just(5), Just(7)],
        bits in prop::collection::vec(any::<bool>(), 7),
        byz in prop_oneof![
            Just(ByzStrategy::Crash),
            Just(ByzStrategy::Equivocate),
            Just(ByzStrategy::Mirror),
        ],
        sched in prop_oneof![Just(SchedulerKind::Random), Just(SchedulerKind::Lifo)],
        seed in any::<u64>(),
    ) {
        let t = (n - 1) / 3;
        let proposals = bits[..n].iter().map(|b| BinValue::from_bit(*b)).collect();
        let mut cfg = RunConfig::new(n, t, algo, proposals, byz, seed).unwrap();
        cfg.scheduler = sched;
        let r = run(&cfg).unwrap();
        prop_assert!(r.safety_ok, "{:?}", r.violations);
        prop_assert!(!r.timed_out);
        prop_assert_eq!(run(&cfg).unwrap().trace_digest, r.trace_digest);
    }
}
