//! Executable models of unilateral message passing and bilateral atomic
//! transactions, with labs that run the classic impossibility arguments on
//! both substrates.
//!
//! Every lab consumes a [`ScenarioConfig`] (or direct arguments), drives an
//! immutable [`Configuration`] through adversary-chosen steps and freezes the
//! result into a [`Trace`]. Runs are deterministic in the scenario seed.

pub mod adversary;
pub mod cap;
pub mod clocks;
pub mod consensus;
pub mod kernel;
pub mod ordering;
pub mod raw;
pub mod scenario;
pub mod substrates;
pub mod two_generals;

pub use adversary::{Protocol, Schedule, SchedulerAction};
pub use kernel::{
    happened_before, CellSpec, Configuration, Event, EventId, EventKind, Outcome, SimError,
    SubstrateKind, Trace, Value,
};
pub use scenario::{catalog, dispatch, load_scenario, Report, ScenarioConfig, ScenarioError};
