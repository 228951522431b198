//! Randomized asynchronous binary Byzantine consensus.
//!
//! This crate holds the protocol state machines and the deterministic
//! simulator that drives them. Everything here is pure computation: no I/O,
//! no clocks, no threads. File formats, the command line and parallel sweeps
//! live in the `coinsensus` companion crate.
//!
//! Layering, bottom-up:
//!
//! * [`types`]: values, tags, wire messages, effects and system parameters.
//! * [`bv`]: binary-value broadcast (echo at `t+1`, deliver at `2t+1`).
//! * [`sbv`]: BV-broadcast followed by one `AUX` exchange producing a view.
//! * [`sbc`]: single-value echo broadcast whose output is a monotone flag.
//! * [`coin`]: round-indexed common coin with revelation thresholds.
//! * [`weak`]: consensus with a weak common coin (baseline and optimized).
//! * [`strong`]: consensus with a strong `t+1` common coin.
//! * [`sim`]: seeded discrete-event simulator, adversaries and the observer.
//!
//! Every protocol object is a synchronous state machine: inputs go in through
//! [`Protocol::step`], and the machine answers with a list of [`Effect`]s.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod bv;
pub mod coin;
pub mod error;
pub mod sbc;
pub mod sbv;
pub mod sim;
pub mod strong;
pub mod types;
pub mod weak;

pub use crate::error::{Error, Result};
pub use crate::types::{
    BinValue, Effect, EstValue, Input, InstanceTag, Message, Payload, Phase, ProcessId, ProcessSet,
    Protocol, Round, SystemParams, Thresholds, ValueSet,
};
