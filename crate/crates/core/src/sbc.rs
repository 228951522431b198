//! Single-value echo broadcast with a monotone output flag.
//!
//! One instance watches one `(tag, value)` pair. The flag turns true once
//! `2t+1` distinct processes have sent `SVAL(value)` and never turns back.

use crate::error::{Error, Result};
use crate::types::{BinValue, InstanceTag, ProcessId, ProcessSet, Thresholds};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SbcStep {
    /// Broadcast `SVAL(value)`.
    pub sval: bool,
    /// The flag flipped to true during this step.
    pub became_true: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SbcState {
    tag: InstanceTag,
    value: BinValue,
    th: Thresholds,
    started: bool,
    senders: ProcessSet,
    broadcast_done: bool,
    svalue: bool,
}

impl SbcState {
    pub fn new(tag: InstanceTag, value: BinValue, th: Thresholds) -> Result<Self> {
        if !matches!(tag, InstanceTag::Est { .. }) {
            return Err(Error::WrongTag(tag));
        }
        Ok(SbcState {
            tag,
            value,
            th,
            started: false,
            senders: ProcessSet::EMPTY,
            broadcast_done: false,
            svalue: false,
        })
    }

    pub fn tag(&self) -> InstanceTag {
        self.tag
    }

    pub fn value(&self) -> BinValue {
        self.value
    }

    pub fn is_started(&self) -> bool {
        self.started
    }

    pub fn svalue(&self) -> bool {
        self.svalue
    }

    pub fn has_broadcast(&self) -> bool {
        self.broadcast_done
    }

    pub fn senders(&self) -> ProcessSet {
        self.senders
    }

    /// Starts the instance; messages seen earlier take effect now.
    pub fn init(&mut self, should_broadcast: bool) -> Result<SbcStep> {
        if self.started {
            return Err(Error::DuplicateInit(self.tag));
        }
        self.started = true;
        let mut step = SbcStep::default();
        if should_broadcast {
            self.broadcast_done = true;
            step.sval = true;
        }
        self.evaluate(&mut step);
        Ok(step)
    }

    pub fn on_sval(&mut self, sender: ProcessId) -> SbcStep {
        let mut step = SbcStep::default();
        if self.senders.insert(sender) && self.started {
            self.evaluate(&mut step);
        }
        step
    }

    fn evaluate(&mut self, step: &mut SbcStep) {
        let count = self.senders.len();
        if count >= self.th.echo && !self.broadcast_done {
            self.broadcast_done = true;
            step.sval = true;
        }
        if count >= self.th.deliver && !self.svalue {
            self.svalue = true;
            step.became_true = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SystemParams;

    fn sbc(v: BinValue) -> SbcState {
        let th = SystemParams::new(4, 1).unwrap().thresholds();
        SbcState::new(InstanceTag::est(1), v, th).unwrap()
    }

    #[test]
    fn init_with_and_without_broadcast() {
        let mut s = sbc(BinValue::One);
        assert_eq!(
            s.init(true).unwrap(),
            SbcStep {
                sval: true,
                became_true: false
            }
        );
        assert!(!s.svalue());
        assert!(matches!(s.init(true), Err(Error::DuplicateInit(_))));
        let mut s = sbc(BinValue::Zero);
        assert_eq!(s.init(false).unwrap(), SbcStep::default());
    }

    #[test]
    fn stage_tags_are_rejected() {
        let th = SystemParams::new(4, 1).unwrap().thresholds();
        let tag = InstanceTag::stage(1, crate::types::Phase::Zero);
        assert!(SbcState::new(tag, BinValue::One, th).is_err());
    }

    #[test]
    fn echo_then_flag() {
        let mut s = sbc(BinValue::One);
        s.init(false).unwrap();
        assert_eq!(s.on_sval(ProcessId(1)), SbcStep::default());
        assert_eq!(
            s.on_sval(ProcessId(3)),
            SbcStep {
                sval: true,
                became_true: false
            }
        );
        assert_eq!(s.on_sval(ProcessId(3)), SbcStep::default());
        assert_eq!(
            s.on_sval(ProcessId(0)),
            SbcStep {
                sval: false,
                became_true: true
            }
        );
        assert!(s.svalue());
        assert_eq!(s.on_sval(ProcessId(2)), SbcStep::default());
        assert!(s.svalue());
    }

    #[test]
    fn initiator_does_not_echo_again() {
        let mut s = sbc(BinValue::Zero);
        s.init(true).unwrap();
        for p in 0..4 {
            assert!(!s.on_sval(ProcessId(p)).sval);
        }
        assert!(s.svalue());
    }
}
