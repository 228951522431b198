//! Synchronized binary-value broadcast: a BV instance followed by a single
//! `AUX` exchange that yields a justified `view`.
//!
//! The instance can carry an externally supplied justification set
//! (`extra`). Values in `extra` count as members of `bin_values` for every
//! purpose here: picking the `AUX` value, validating received `AUX`
//! messages, and what [`SbvState::effective_bin_values`] reports. Plain runs
//! never set it.

use alloc::vec::Vec;

use crate::bv::BvState;
use crate::error::{Error, Result};
use crate::types::{EstValue, InstanceTag, ProcessId, ProcessSet, Thresholds, ValueSet};

/// How a view is assembled once `n-t` valid `AUX` senders are known.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum ViewSelection {
    /// Every value carried by a currently valid `AUX` message.
    #[default]
    Union,
    /// Only the values of the first `n-t` valid messages in arrival order.
    FirstQuorum,
}

impl ViewSelection {
    pub fn name(self) -> &'static str {
        match self {
            ViewSelection::Union => "union",
            ViewSelection::FirstQuorum => "first-quorum",
        }
    }
}

/// Outcome of one SBV step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SbvStep {
    /// `BVAL` broadcasts, in value order.
    pub bval: ValueSet,
    /// `AUX` broadcast, emitted after the `BVAL`s.
    pub aux: Option<EstValue>,
    /// Values that entered the effective `bin_values`.
    pub added: ValueSet,
    /// Set when the view completes during this step.
    pub view: Option<ValueSet>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SbvState {
    bv: BvState,
    th: Thresholds,
    selection: ViewSelection,
    aux_sent: Option<EstValue>,
    aux_by_value: [ProcessSet; 3],
    aux_senders: ProcessSet,
    arrivals: Vec<(ProcessId, EstValue)>,
    extra: ValueSet,
    view: Option<ValueSet>,
}

impl SbvState {
    pub fn new(tag: InstanceTag, th: Thresholds, selection: ViewSelection) -> Result<Self> {
        Ok(SbvState {
            bv: BvState::new(tag, th)?,
            th,
            selection,
            aux_sent: None,
            aux_by_value: [ProcessSet::EMPTY; 3],
            aux_senders: ProcessSet::EMPTY,
            arrivals: Vec::new(),
            extra: ValueSet::EMPTY,
            view: None,
        })
    }

    pub fn tag(&self) -> InstanceTag {
        self.bv.tag()
    }

    pub fn bv(&self) -> &BvState {
        &self.bv
    }

    pub fn is_started(&self) -> bool {
        self.bv.is_started()
    }

    /// `bin_values` of the underlying BV instance.
    pub fn bin_values(&self) -> ValueSet {
        self.bv.bin_values()
    }

    /// `bin_values` together with the external justification set.
    pub fn effective_bin_values(&self) -> ValueSet {
        self.bv.bin_values().union(self.extra)
    }

    pub fn extra(&self) -> ValueSet {
        self.extra
    }

    pub fn aux_sent(&self) -> Option<EstValue> {
        self.aux_sent
    }

    pub fn view(&self) -> Option<ValueSet> {
        self.view
    }

    /// Processes whose first `AUX` carried `v`.
    pub fn aux_senders(&self, v: EstValue) -> ProcessSet {
        self.aux_by_value[v.index()]
    }

    /// `AUX` values in arrival order; kept only under
    /// [`ViewSelection::FirstQuorum`].
    pub fn aux_arrivals(&self) -> impl Iterator<Item = EstValue> + '_ {
        self.arrivals.iter().map(|(_, w)| *w)
    }

    /// Starts the instance. With `skip_bval` the input goes straight out as
    /// `AUX`; the input must then already be justified through `extra`.
    pub fn init(&mut self, v: EstValue, skip_bval: bool) -> Result<SbvStep> {
        let before = self.effective_bin_values();
        let mut step = SbvStep::default();
        if skip_bval {
            if !self.extra.contains(v) {
                return Err(Error::InvalidValue(v));
            }
            let bv = self.bv.start_silent(v)?;
            step.bval = bv.broadcast;
            self.aux_sent = Some(v);
            step.aux = Some(v);
        } else {
            let bv = self.bv.init(v)?;
            step.bval = bv.broadcast;
        }
        self.settle(before, &mut step);
        Ok(step)
    }

    pub fn on_bval(&mut self, sender: ProcessId, v: EstValue) -> SbvStep {
        let before = self.effective_bin_values();
        let bv = self.bv.on_bval(sender, v);
        let mut step = SbvStep {
            bval: bv.broadcast,
            ..SbvStep::default()
        };
        if !bv.delivered.is_empty() {
            self.settle(before, &mut step);
        }
        step
    }

    /// Records the first `AUX` from `sender`; later ones are ignored.
    pub fn on_aux(&mut self, sender: ProcessId, w: EstValue) -> SbvStep {
        let mut step = SbvStep::default();
        if !self.aux_senders.insert(sender) {
            return step;
        }
        self.aux_by_value[w.index()].insert(sender);
        if self.selection == ViewSelection::FirstQuorum {
            self.arrivals.push((sender, w));
        }
        if self.is_started() && self.effective_bin_values().contains(w) {
            self.try_complete(&mut step);
        }
        step
    }

    /// Adds values to the external justification set.
    pub fn extend_justification(&mut self, values: ValueSet) -> SbvStep {
        let mut step = SbvStep::default();
        if values.is_subset(self.extra) {
            return step;
        }
        let before = self.effective_bin_values();
        self.extra = self.extra.union(values);
        self.settle(before, &mut step);
        step
    }

    fn settle(&mut self, before: ValueSet, step: &mut SbvStep) {
        let now = self.effective_bin_values();
        step.added = now.difference(before);
        if !self.is_started() {
            return;
        }
        if self.aux_sent.is_none() {
            // First value to become justified; ties go to the lower value.
            // `before` is only non-empty here when justification preceded init.
            let fresh = if before.is_empty() { now } else { before };
            if let Some(w) = fresh.iter().next() {
                self.aux_sent = Some(w);
                step.aux = Some(w);
            }
        }
        self.try_complete(step);
    }

    fn try_complete(&mut self, step: &mut SbvStep) {
        if self.view.is_some() || self.aux_sent.is_none() {
            return;
        }
        let bin = self.effective_bin_values();
        let mut valid = ProcessSet::EMPTY;
        for v in bin.iter() {
            valid = valid.union(self.aux_by_value[v.index()]);
        }
        if valid.len() < self.th.quorum {
            return;
        }
        let view = match self.selection {
            ViewSelection::Union => bin
                .iter()
                .filter(|v| !self.aux_by_value[v.index()].is_empty())
                .collect(),
            ViewSelection::FirstQuorum => self
                .arrivals
                .iter()
                .filter(|(_, w)| bin.contains(*w))
                .take(self.th.quorum)
                .map(|(_, w)| *w)
                .collect(),
        };
        self.view = Some(view);
        step.view = Some(view);
    }
}
