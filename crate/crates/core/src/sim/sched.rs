//! Pending-message pool and delivery-order strategies.
//!
//! Messages sit in send order. A strategy picks the next one, except when
//! the fairness cap forces the oldest: if some prefix of the pool can only
//! meet its deadlines by starting now, the head goes first. That keeps every
//! message's delay within the cap whatever the strategy prefers.

use alloc::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::types::{Message, ProcessId, ProcessSet};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SchedulerKind {
    /// Oldest first.
    Fifo,
    /// Uniformly random among pending messages.
    Random,
    /// Newest first.
    Lifo,
    /// Holds back everything sent by `targets` for as long as the cap allows.
    DelayTarget { targets: ProcessSet },
}

impl SchedulerKind {
    pub fn name(&self) -> &'static str {
        match self {
            SchedulerKind::Fifo => "fifo",
            SchedulerKind::Random => "random",
            SchedulerKind::Lifo => "lifo",
            SchedulerKind::DelayTarget { .. } => "delay-target",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pending {
    pub to: ProcessId,
    pub msg: Message,
    /// Tick at which the message was sent.
    pub sent: u64,
}

pub struct Scheduler {
    kind: SchedulerKind,
    cap: u64,
    pool: VecDeque<Pending>,
    forced: u64,
}

impl Scheduler {
    pub fn new(kind: SchedulerKind, cap: u64) -> Self {
        Scheduler {
            kind,
            cap: cap.max(1),
            pool: VecDeque::new(),
            forced: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.pool.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pool.is_empty()
    }

    pub fn push(&mut self, p: Pending) {
        self.pool.push_back(p);
    }

    /// Times the fairness rule overrode the strategy.
    pub fn forced(&self) -> u64 {
        self.forced
    }

    /// Removes and returns every pending message matching `pred`, in order.
    pub fn extract(&mut self, mut pred: impl FnMut(&Pending) -> bool) -> alloc::vec::Vec<Pending> {
        let mut taken = alloc::vec::Vec::new();
        self.pool.retain(|p| {
            if pred(p) {
                taken.push(*p);
                false
            } else {
                true
            }
        });
        taken
    }

    fn must_deliver_head(&self, tick: u64) -> bool {
        let Some(head) = self.pool.front() else {
            return false;
        };
        // The next delivery happens at tick + 1, so the k-th oldest message
        // (0-based) arrives at tick + 1 + k at the earliest.
        if head.sent + self.cap > tick + self.pool.len() as u64 {
            return false;
        }
        self.pool
            .iter()
            .enumerate()
            .any(|(k, p)| p.sent + self.cap <= tick + 1 + k as u64)
    }

    /// Picks the next delivery for the tick about to happen (`tick` counts
    /// deliveries made so far).
    pub fn next(&mut self, tick: u64, rng: &mut ChaCha8Rng) -> Option<Pending> {
        let len = self.pool.len();
        if len == 0 {
            return None;
        }
        if self.must_deliver_head(tick) {
            self.forced += 1;
            return self.pool.pop_front();
        }
        let i = match &self.kind {
            SchedulerKind::Fifo => 0,
            SchedulerKind::Lifo => len - 1,
            SchedulerKind::Random => rng.random_range(0..len),
            SchedulerKind::DelayTarget { targets } => {
                let held = |p: &Pending| targets.contains(p.msg.sender);
                let mut pick = None;
                for _ in 0..8 {
                    let i = rng.random_range(0..len);
                    if !held(&self.pool[i]) {
                        pick = Some(i);
                        break;
                    }
                }
                pick.or_else(|| self.pool.iter().position(|p| !held(p)))
                    .unwrap_or(0)
            }
        };
        self.pool.remove(i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{BinValue, Payload, Round};
    use rand::SeedableRng;

    fn msg(sender: u16) -> Message {
        Message {
            sender: ProcessId(sender),
            payload: Payload::AuxBin {
                round: Round(1),
                value: BinValue::One,
            },
        }
    }

    fn pending(sender: u16, sent: u64) -> Pending {
        Pending {
            to: ProcessId(0),
            msg: msg(sender),
            sent,
        }
    }

    #[test]
    fn fifo_and_lifo_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = Scheduler::new(SchedulerKind::Fifo, 1000);
        s.push(pending(1, 0));
        s.push(pending(2, 0));
        assert_eq!(s.next(0, &mut rng).unwrap().msg.sender, ProcessId(1));
        let mut s = Scheduler::new(SchedulerKind::Lifo, 1000);
        s.push(pending(1, 0));
        s.push(pending(2, 0));
        assert_eq!(s.next(0, &mut rng).unwrap().msg.sender, ProcessId(2));
    }

    #[test]
    fn lifo_respects_the_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cap = 5;
        let mut s = Scheduler::new(SchedulerKind::Lifo, cap);
        s.push(pending(9, 0));
        let mut tick = 0;
        // Keep feeding newer messages; the old one must still leave in time.
        loop {
            s.push(pending(1, tick));
            let p = s.next(tick, &mut rng).unwrap();
            tick += 1;
            if p.msg.sender == ProcessId(9) {
                assert!(tick - p.sent <= cap);
                break;
            }
            assert!(tick < 100);
        }
        assert!(s.forced() > 0);
    }

    #[test]
    fn delay_target_prefers_others() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let targets: ProcessSet = [ProcessId(1)].into_iter().collect();
        let mut s = Scheduler::new(SchedulerKind::DelayTarget { targets }, 1000);
        for _ in 0..5 {
            s.push(pending(1, 0));
        }
        s.push(pending(2, 0));
        assert_eq!(s.next(0, &mut rng).unwrap().msg.sender, ProcessId(2));
        // Only held messages left: oldest goes.
        assert_eq!(s.next(1, &mut rng).unwrap().msg.sender, ProcessId(1));
    }
}
