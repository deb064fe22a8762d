use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    CellId, Event, EventId, EventKind, ProcessId, SimError, SubstrateKind, Trace, TxnId, Value,
    MAX_PROCS,
};
use crate::kernel::{assign_lamport, assign_vclocks};
use crate::substrates::{BilateralState, FitoState, Partition, SubstrateState};

/// Adversary's verdict on a bilateral transaction attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    NotOccurred,
}

/// Per-process local state. Labs use the subset of fields they need.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct ProcState {
    pub next_seq: u32,
    /// Protocol steps taken by this process (scheduler `ProcStep`s).
    pub own_steps: u32,
    pub pc: u32,
    pub input: Option<Value>,
    pub pref: Option<Value>,
    /// Last value incorporated from a completed bilateral exchange.
    pub held: Option<Value>,
    /// Payloads incorporated from received messages, in order.
    pub received: Vec<Value>,
    pub completed_txns: BTreeSet<TxnId>,
    pub decision: Option<Value>,
    /// `own_steps` at the moment the process decided.
    pub decided_after: Option<u32>,
    pub sends: u32,
}

impl ProcState {
    pub fn decide(&mut self, v: Value) {
        if self.decision.is_none() {
            self.decision = Some(v);
            self.decided_after = Some(self.own_steps);
        }
    }
}

/// A shared memory location. `None` is the uninitialized value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SharedCell {
    pub cell_id: CellId,
    pub value: Option<Value>,
    /// Private cells may only be swapped by their owner.
    pub owner: Option<ProcessId>,
}

/// Declaration of a cell in a scenario.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub cell_id: CellId,
    #[serde(default)]
    pub initial: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner: Option<ProcessId>,
}

impl CellSpec {
    pub fn shared(cell_id: CellId) -> Self {
        Self {
            cell_id,
            initial: None,
            owner: None,
        }
    }

    pub fn private(cell_id: CellId, owner: ProcessId, initial: Option<Value>) -> Self {
        Self {
            cell_id,
            initial,
            owner: Some(owner),
        }
    }
}

/// Global system state. Every operation returns a new configuration; none
/// mutates its receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub(crate) procs: Vec<ProcState>,
    pub(crate) substrate: SubstrateState,
    pub(crate) cells: BTreeMap<CellId, SharedCell>,
    pub(crate) partition: Option<Partition>,
    pub(crate) step_count: u64,
    pub(crate) log: EventLog,
}

/// Hashable projection of a configuration without its history, used to
/// deduplicate states during exhaustive search.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateKey {
    procs: Vec<ProcState>,
    substrate: SubstrateState,
    cells: Vec<(CellId, Option<Value>)>,
    partition: Option<Partition>,
}

impl Configuration {
    pub fn new(kind: SubstrateKind, n_procs: usize, cells: &[CellSpec]) -> Result<Self, SimError> {
        if n_procs > MAX_PROCS {
            return Err(SimError::TooManyProcesses(n_procs));
        }
        let mut table = BTreeMap::new();
        for c in cells {
            if let Some(owner) = c.owner {
                if owner >= n_procs {
                    return Err(SimError::UnknownProcess(owner));
                }
            }
            let cell = SharedCell {
                cell_id: c.cell_id,
                value: c.initial,
                owner: c.owner,
            };
            if table.insert(c.cell_id, cell).is_some() {
                return Err(SimError::DuplicateCell(c.cell_id));
            }
        }
        let substrate = match kind {
            SubstrateKind::Fito => SubstrateState::Fito(FitoState::default()),
            SubstrateKind::Bilateral => SubstrateState::Bilateral(BilateralState::default()),
        };
        Ok(Self {
            procs: vec![ProcState::default(); n_procs],
            substrate,
            cells: table,
            partition: None,
            step_count: 0,
            log: EventLog::default(),
        })
    }

    /// Emits one `init` Local event per process.
    pub fn initialize(&self) -> Configuration {
        let mut next = self.advanced();
        for p in 0..self.n_procs() {
            next.emit(p, EventKind::Local, None, "init");
        }
        next
    }

    pub fn kind(&self) -> SubstrateKind {
        match self.substrate {
            SubstrateState::Fito(_) => SubstrateKind::Fito,
            SubstrateState::Bilateral(_) => SubstrateKind::Bilateral,
        }
    }

    pub fn n_procs(&self) -> usize {
        self.procs.len()
    }

    pub fn procs(&self) -> &[ProcState] {
        &self.procs
    }

    pub fn proc_state(&self, p: ProcessId) -> Result<&ProcState, SimError> {
        self.procs.get(p).ok_or(SimError::UnknownProcess(p))
    }

    pub fn substrate(&self) -> &SubstrateState {
        &self.substrate
    }

    pub fn cells(&self) -> impl Iterator<Item = &SharedCell> {
        self.cells.values()
    }

    pub fn cell(&self, id: CellId) -> Result<&SharedCell, SimError> {
        self.cells.get(&id).ok_or(SimError::UnknownCell(id))
    }

    pub fn partition(&self) -> Option<&Partition> {
        self.partition.as_ref()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// True when no partition separates `a` from `b`.
    pub fn connected(&self, a: ProcessId, b: ProcessId) -> bool {
        self.partition.as_ref().is_none_or(|p| p.same_cell(a, b))
    }

    /// Events emitted so far, in emission order, without clocks.
    pub fn events(&self) -> Vec<Event> {
        self.log.to_vec()
    }

    pub fn event_count(&self) -> usize {
        self.log.len
    }

    /// Events of one process so far.
    pub fn history(&self, p: ProcessId) -> Vec<Event> {
        self.log
            .to_vec()
            .into_iter()
            .filter(|e| e.id.process == p)
            .collect()
    }

    /// Freezes the history into a validated trace with clocks assigned.
    pub fn trace(&self, scenario_id: &str, seed: u64) -> Trace {
        let raw = Trace::new(scenario_id, seed, self.n_procs(), self.events())
            .expect("simulator emits well-formed traces");
        assign_vclocks(&assign_lamport(&raw))
    }

    pub fn state_key(&self) -> StateKey {
        StateKey {
            procs: self.procs.clone(),
            substrate: self.substrate.clone(),
            cells: self.cells.values().map(|c| (c.cell_id, c.value)).collect(),
            partition: self.partition.clone(),
        }
    }

    /// Records a Local event at `p`.
    pub fn local_event(&self, p: ProcessId, payload: &str) -> Result<Configuration, SimError> {
        self.check_process(p)?;
        let mut next = self.advanced();
        next.emit(p, EventKind::Local, None, payload);
        Ok(next)
    }

    pub(crate) fn check_process(&self, p: ProcessId) -> Result<(), SimError> {
        if p < self.procs.len() {
            Ok(())
        } else {
            Err(SimError::UnknownProcess(p))
        }
    }

    /// Successor configuration with the step counter advanced.
    pub(crate) fn advanced(&self) -> Configuration {
        let mut next = self.clone();
        next.step_count += 1;
        next
    }

    pub(crate) fn emit(
        &mut self,
        p: ProcessId,
        kind: EventKind,
        counterpart: Option<EventId>,
        payload: impl Into<String>,
    ) -> EventId {
        let state = &mut self.procs[p];
        let id = EventId::new(p, state.next_seq);
        state.next_seq += 1;
        self.log
            .push(Event::unclocked(id, kind, counterpart, payload));
        id
    }

    pub(crate) fn proc_mut(&mut self, p: ProcessId) -> &mut ProcState {
        &mut self.procs[p]
    }
}

/// Persistent append-only list: cloning a configuration shares its history.
#[derive(Clone, Default)]
pub(crate) struct EventLog {
    head: Option<Arc<LogNode>>,
    len: usize,
}

struct LogNode {
    event: Event,
    prev: Option<Arc<LogNode>>,
}

impl EventLog {
    fn push(&mut self, event: Event) {
        let prev = self.head.take();
        self.head = Some(Arc::new(LogNode { event, prev }));
        self.len += 1;
    }

    fn to_vec(&self) -> Vec<Event> {
        let mut out = Vec::with_capacity(self.len);
        let mut cur = self.head.as_deref();
        while let Some(node) = cur {
            out.push(node.event.clone());
            cur = node.prev.as_deref();
        }
        out.reverse();
        out
    }
}

impl Drop for EventLog {
    fn drop(&mut self) {
        let mut cur = self.head.take();
        while let Some(node) = cur {
            match Arc::try_unwrap(node) {
                Ok(mut inner) => cur = inner.prev.take(),
                Err(_) => break,
            }
        }
    }
}

impl PartialEq for EventLog {
    fn eq(&self, other: &Self) -> bool {
        self.len == other.len && self.to_vec() == other.to_vec()
    }
}

impl std::fmt::Debug for EventLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.to_vec()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_never_touch_the_prior_configuration() {
        let c0 = Configuration::new(SubstrateKind::Fito, 2, &[]).unwrap();
        let c1 = c0.local_event(0, "x").unwrap();
        let c2 = c1.local_event(1, "y").unwrap();
        assert_eq!(c0.step_count(), 0);
        assert_eq!(c0.event_count(), 0);
        assert_eq!(c1.step_count(), 1);
        assert_eq!(c1.event_count(), 1);
        assert_eq!(c2.step_count(), 2);
        assert_eq!(c2.events()[1].id, EventId::new(1, 0));
    }

    #[test]
    fn rejects_bad_declarations() {
        assert_eq!(
            Configuration::new(SubstrateKind::Fito, 17, &[]).unwrap_err(),
            SimError::TooManyProcesses(17)
        );
        let dup = [CellSpec::shared(1), CellSpec::shared(1)];
        assert_eq!(
            Configuration::new(SubstrateKind::Fito, 1, &dup).unwrap_err(),
            SimError::DuplicateCell(1)
        );
        let orphan = [CellSpec::private(0, 4, None)];
        assert_eq!(
            Configuration::new(SubstrateKind::Fito, 1, &orphan).unwrap_err(),
            SimError::UnknownProcess(4)
        );
    }

    #[test]
    fn long_histories_drop_without_recursion() {
        let mut c = Configuration::new(SubstrateKind::Fito, 1, &[]).unwrap();
        for _ in 0..200_000 {
            c = c.local_event(0, "").unwrap();
        }
        assert_eq!(c.event_count(), 200_000);
    }
}
