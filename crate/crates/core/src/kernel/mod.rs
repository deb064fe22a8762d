//! Event model, logical clocks, the happened-before relation and the
//! immutable [`Configuration`] that every substrate step transforms.

mod clock;
mod config;
mod trace;

pub use clock::{assign_lamport, assign_vclocks, vclock_lt};
pub use config::{CellSpec, Configuration, Outcome, ProcState, SharedCell, StateKey};
pub use trace::{happened_before, Event, EventId, EventKind, Trace, TraceError, TraceRecord};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque value carried by messages, offers and shared cells.
pub type Value = i64;

/// Zero-based process index.
pub type ProcessId = usize;

pub type MsgId = u64;
pub type TxnId = u64;
pub type CellId = u32;

/// Upper bound on simulated processes.
pub const MAX_PROCS: usize = 16;

/// Which communication substrate a configuration runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubstrateKind {
    /// Forward-in-time-only unilateral message passing.
    Fito,
    /// Bilateral atomic transactions.
    Bilateral,
}

impl std::fmt::Display for SubstrateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SubstrateKind::Fito => f.write_str("fito"),
            SubstrateKind::Bilateral => f.write_str("bilateral"),
        }
    }
}

/// Errors raised by configuration transformers.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("unknown process {0}")]
    UnknownProcess(ProcessId),
    #[error("{0} processes requested; at most {MAX_PROCS} are supported")]
    TooManyProcesses(usize),
    #[error("operation requires the {expected} substrate, configuration runs on {actual}")]
    WrongSubstrate {
        expected: SubstrateKind,
        actual: SubstrateKind,
    },
    #[error("message {0} is not in flight")]
    StaleDelivery(MsgId),
    #[error("message {msg_id} cannot cross the partition between {sender} and {receiver}")]
    Blocked {
        msg_id: MsgId,
        sender: ProcessId,
        receiver: ProcessId,
    },
    #[error("unknown cell {0}")]
    UnknownCell(CellId),
    #[error("duplicate cell {0}")]
    DuplicateCell(CellId),
    #[error("cell {cell} is not owned by process {process}")]
    NotOwner { cell: CellId, process: ProcessId },
    #[error("a bilateral transaction needs two distinct endpoints, got {0} twice")]
    SelfTransaction(ProcessId),
    #[error("unknown transaction {0}")]
    UnknownTxn(TxnId),
    #[error("transaction {0} was already decided")]
    TxnDecided(TxnId),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
}
