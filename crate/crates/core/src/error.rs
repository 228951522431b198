use alloc::string::String;

use crate::types::{EstValue, InstanceTag};

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("t < n/3 violated (n = {n}, t = {t})")]
    InvalidParams { n: usize, t: usize },

    #[error("n = {0} is outside the supported range 1..=128")]
    UnsupportedSize(usize),

    #[error("{faulty} faulty processes designated but t = {t}")]
    TooManyFaulty { faulty: usize, t: usize },

    #[error("instance {0:?} initialized twice")]
    DuplicateInit(InstanceTag),

    #[error("propose called twice")]
    DuplicateProposal,

    #[error("tag {0:?} is not usable by this abstraction")]
    WrongTag(InstanceTag),

    #[error("value {0} is not allowed here")]
    InvalidValue(EstValue),

    #[error("protocol violation: {0}")]
    ProtocolViolation(&'static str),

    #[error("invalid run configuration: {0}")]
    Config(String),
}
