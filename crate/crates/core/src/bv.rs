//! Binary-value broadcast.
//!
//! A value is echoed once `t+1` distinct processes have sent it and enters
//! `bin_values` once `2t+1` have. Messages that arrive before the local
//! process starts the instance are counted but produce no effects until
//! [`BvState::init`] (or [`BvState::start_silent`]) runs.

use crate::error::{Error, Result};
use crate::types::{EstValue, InstanceTag, Phase, ProcessId, ProcessSet, Thresholds, ValueSet};

/// Outcome of one BV step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BvStep {
    /// Values to broadcast as `BVAL`, in value order.
    pub broadcast: ValueSet,
    /// Values that entered `bin_values` during this step.
    pub delivered: ValueSet,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BvState {
    tag: InstanceTag,
    th: Thresholds,
    started: bool,
    input: Option<EstValue>,
    senders: [ProcessSet; 3],
    echoed: ValueSet,
    bin_values: ValueSet,
}

impl BvState {
    pub fn new(tag: InstanceTag, th: Thresholds) -> Result<Self> {
        if !matches!(tag, InstanceTag::Stage { .. }) {
            return Err(Error::WrongTag(tag));
        }
        Ok(BvState {
            tag,
            th,
            started: false,
            input: None,
            senders: [ProcessSet::EMPTY; 3],
            echoed: ValueSet::EMPTY,
            bin_values: ValueSet::EMPTY,
        })
    }

    pub fn tag(&self) -> InstanceTag {
        self.tag
    }

    pub fn is_started(&self) -> bool {
        self.started
    }

    pub fn input(&self) -> Option<EstValue> {
        self.input
    }

    /// Monotone set of values backed by `2t+1` distinct senders.
    pub fn bin_values(&self) -> ValueSet {
        self.bin_values
    }

    /// Values this process has broadcast in this instance.
    pub fn echoed(&self) -> ValueSet {
        self.echoed
    }

    pub fn senders_of(&self, v: EstValue) -> ProcessSet {
        self.senders[v.index()]
    }

    /// Starts the instance with input `v` and broadcasts it.
    pub fn init(&mut self, v: EstValue) -> Result<BvStep> {
        self.check_start(v)?;
        self.input = Some(v);
        self.echoed.insert(v);
        let mut step = BvStep {
            broadcast: ValueSet::single(v),
            ..BvStep::default()
        };
        self.catch_up(&mut step);
        Ok(step)
    }

    /// Starts the instance without broadcasting an input. Echo and delivery
    /// rules are active from here on.
    pub fn start_silent(&mut self, v: EstValue) -> Result<BvStep> {
        self.check_start(v)?;
        self.input = Some(v);
        let mut step = BvStep::default();
        self.catch_up(&mut step);
        Ok(step)
    }

    fn check_start(&mut self, v: EstValue) -> Result<()> {
        if self.started {
            return Err(Error::DuplicateInit(self.tag));
        }
        if v.is_bot()
            && matches!(
                self.tag,
                InstanceTag::Stage {
                    phase: Phase::Zero,
                    ..
                }
            )
        {
            return Err(Error::InvalidValue(v));
        }
        self.started = true;
        Ok(())
    }

    fn catch_up(&mut self, step: &mut BvStep) {
        for v in [EstValue::Zero, EstValue::One, EstValue::Bot] {
            self.evaluate(v, step);
        }
    }

    /// Records `BVAL(v)` from `sender`. Repeats from one sender are ignored.
    pub fn on_bval(&mut self, sender: ProcessId, v: EstValue) -> BvStep {
        let mut step = BvStep::default();
        if self.senders[v.index()].insert(sender) && self.started {
            self.evaluate(v, &mut step);
        }
        step
    }

    fn evaluate(&mut self, v: EstValue, step: &mut BvStep) {
        let count = self.senders[v.index()].len();
        if count >= self.th.echo && self.echoed.insert(v) {
            step.broadcast.insert(v);
        }
        if count >= self.th.deliver && self.bin_values.insert(v) {
            step.delivered.insert(v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SystemParams;

    fn th41() -> Thresholds {
        SystemParams::new(4, 1).unwrap().thresholds()
    }

    fn tag() -> InstanceTag {
        InstanceTag::stage(1, Phase::Zero)
    }

    #[test]
    fn init_broadcasts_own_value() {
        let mut bv = BvState::new(tag(), th41()).unwrap();
        let step = bv.init(EstValue::One).unwrap();
        assert_eq!(step.broadcast, ValueSet::single(EstValue::One));
        assert!(bv.bin_values().is_empty());
        assert_eq!(bv.init(EstValue::One), Err(Error::DuplicateInit(tag())));
    }

    #[test]
    fn bot_rejected_in_phase_zero_and_est_tags_rejected() {
        let mut bv = BvState::new(tag(), th41()).unwrap();
        assert_eq!(
            bv.init(EstValue::Bot),
            Err(Error::InvalidValue(EstValue::Bot))
        );
        assert!(BvState::new(InstanceTag::est(1), th41()).is_err());
        let mut one = BvState::new(InstanceTag::stage(1, Phase::One), th41()).unwrap();
        assert!(one.init(EstValue::Bot).is_ok());
    }

    #[test]
    fn echo_at_t_plus_one_and_deliver_at_two_t_plus_one() {
        let mut bv = BvState::new(tag(), th41()).unwrap();
        bv.init(EstValue::Zero).unwrap();
        assert_eq!(bv.on_bval(ProcessId(2), EstValue::One), BvStep::default());
        let step = bv.on_bval(ProcessId(3), EstValue::One);
        assert_eq!(step.broadcast, ValueSet::single(EstValue::One));
        assert!(step.delivered.is_empty());
        // Duplicate sender: nothing happens.
        assert_eq!(bv.on_bval(ProcessId(3), EstValue::One), BvStep::default());
        let step = bv.on_bval(ProcessId(0), EstValue::One);
        assert!(step.broadcast.is_empty());
        assert_eq!(step.delivered, ValueSet::single(EstValue::One));
        assert_eq!(bv.bin_values(), ValueSet::single(EstValue::One));
    }

    #[test]
    fn own_value_is_never_echoed_twice() {
        let mut bv = BvState::new(tag(), th41()).unwrap();
        bv.init(EstValue::One).unwrap();
        for p in 0..4 {
            let step = bv.on_bval(ProcessId(p), EstValue::One);
            assert!(step.broadcast.is_empty());
        }
        assert!(bv.bin_values().contains(EstValue::One));
    }

    #[test]
    fn early_messages_act_on_start() {
        let mut bv = BvState::new(tag(), th41()).unwrap();
        for p in 1..4 {
            assert_eq!(bv.on_bval(ProcessId(p), EstValue::One), BvStep::default());
        }
        let step = bv.init(EstValue::Zero).unwrap();
        assert_eq!(step.broadcast, ValueSet::BINARY);
        assert_eq!(step.delivered, ValueSet::single(EstValue::One));
    }

    #[test]
    fn silent_start_still_echoes() {
        let mut bv = BvState::new(tag(), th41()).unwrap();
        let step = bv.start_silent(EstValue::One).unwrap();
        assert!(step.broadcast.is_empty());
        bv.on_bval(ProcessId(1), EstValue::One);
        let step = bv.on_bval(ProcessId(2), EstValue::One);
        assert_eq!(step.broadcast, ValueSet::single(EstValue::One));
    }
}
