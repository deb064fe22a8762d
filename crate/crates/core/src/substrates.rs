//! The two communication substrates and the shared-memory primitives.
//!
//! On the FITO substrate a message is created by its sender and then lives in
//! `in_flight` until the adversary delivers or drops it. The bilateral
//! substrate has no such place: a transaction is either pending with no
//! effects anywhere, completed at both endpoints, or did not occur.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::kernel::{
    CellId, Configuration, EventKind, MsgId, Outcome, ProcessId, SimError, SubstrateKind, TxnId,
    Value,
};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Message {
    pub msg_id: MsgId,
    pub sender: ProcessId,
    pub receiver: ProcessId,
    pub payload: Value,
    pub send_event: crate::kernel::EventId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct FitoState {
    pub in_flight: BTreeMap<MsgId, Message>,
    pub dropped: BTreeSet<MsgId>,
    pub next_msg_id: MsgId,
    pub sends: u64,
    pub deliveries: u64,
}

impl FitoState {
    /// `sends = deliveries + drops + in flight`.
    pub fn conserved(&self) -> bool {
        self.sends == self.deliveries + self.dropped.len() as u64 + self.in_flight.len() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TxnStatus {
    Pending,
    Completed,
    NotOccurred,
}

impl From<Outcome> for TxnStatus {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::Completed => TxnStatus::Completed,
            Outcome::NotOccurred => TxnStatus::NotOccurred,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BilateralTransaction {
    pub txn_id: TxnId,
    pub endpoint_a: ProcessId,
    pub endpoint_b: ProcessId,
    pub offer_a: Value,
    pub offer_b: Value,
    pub outcome: TxnStatus,
}

/// Bilateral bookkeeping. There is deliberately no in-flight collection.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BilateralState {
    pub txns: BTreeMap<TxnId, BilateralTransaction>,
    pub next_txn_id: TxnId,
}

impl BilateralState {
    pub fn pending(&self) -> impl Iterator<Item = &BilateralTransaction> {
        self.txns
            .values()
            .filter(|t| t.outcome == TxnStatus::Pending)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SubstrateState {
    Fito(FitoState),
    Bilateral(BilateralState),
}

/// A set-partition of process indices. Processes in different cells cannot
/// communicate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Partition(Vec<Vec<ProcessId>>);

impl Partition {
    /// Validates that `cells` covers `0..n_procs` exactly once. Cells are
    /// normalized (sorted) so equal partitions compare equal.
    pub fn new(mut cells: Vec<Vec<ProcessId>>, n_procs: usize) -> Result<Self, SimError> {
        let mut seen = vec![false; n_procs];
        for cell in &mut cells {
            if cell.is_empty() {
                return Err(SimError::InvalidPartition("empty cell".into()));
            }
            cell.sort_unstable();
            for &p in cell.iter() {
                match seen.get_mut(p) {
                    None => return Err(SimError::UnknownProcess(p)),
                    Some(true) => {
                        return Err(SimError::InvalidPartition(format!(
                            "process {p} appears twice"
                        )))
                    }
                    Some(s) => *s = true,
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(SimError::InvalidPartition(format!(
                "process {missing} is not covered"
            )));
        }
        cells.sort();
        Ok(Self(cells))
    }

    pub fn cells(&self) -> &[Vec<ProcessId>] {
        &self.0
    }

    pub fn same_cell(&self, a: ProcessId, b: ProcessId) -> bool {
        self.0.iter().any(|c| c.contains(&a) && c.contains(&b))
    }
}

impl Configuration {
    fn fito(&self) -> Result<&FitoState, SimError> {
        match &self.substrate {
            SubstrateState::Fito(s) => Ok(s),
            SubstrateState::Bilateral(_) => Err(SimError::WrongSubstrate {
                expected: SubstrateKind::Fito,
                actual: SubstrateKind::Bilateral,
            }),
        }
    }

    fn fito_mut(&mut self) -> &mut FitoState {
        match &mut self.substrate {
            SubstrateState::Fito(s) => s,
            SubstrateState::Bilateral(_) => unreachable!("checked by caller"),
        }
    }

    fn bilateral(&self) -> Result<&BilateralState, SimError> {
        match &self.substrate {
            SubstrateState::Bilateral(s) => Ok(s),
            SubstrateState::Fito(_) => Err(SimError::WrongSubstrate {
                expected: SubstrateKind::Bilateral,
                actual: SubstrateKind::Fito,
            }),
        }
    }

    fn bilateral_mut(&mut self) -> &mut BilateralState {
        match &mut self.substrate {
            SubstrateState::Bilateral(s) => s,
            SubstrateState::Fito(_) => unreachable!("checked by caller"),
        }
    }

    /// Messages currently in flight (empty on the bilateral substrate).
    pub fn in_flight(&self) -> Vec<&Message> {
        match &self.substrate {
            SubstrateState::Fito(s) => s.in_flight.values().collect(),
            SubstrateState::Bilateral(_) => Vec::new(),
        }
    }

    pub fn transactions(&self) -> Vec<&BilateralTransaction> {
        match &self.substrate {
            SubstrateState::Bilateral(s) => s.txns.values().collect(),
            SubstrateState::Fito(_) => Vec::new(),
        }
    }

    pub fn transaction(&self, txn_id: TxnId) -> Result<&BilateralTransaction, SimError> {
        self.bilateral()?
            .txns
            .get(&txn_id)
            .ok_or(SimError::UnknownTxn(txn_id))
    }

    /// Fire-and-forget send. Always accepted, even across a partition: the
    /// sender cannot observe the cut.
    pub fn fito_send(
        &self,
        sender: ProcessId,
        receiver: ProcessId,
        payload: Value,
    ) -> Result<(Configuration, MsgId), SimError> {
        self.check_process(sender)?;
        self.check_process(receiver)?;
        let msg_id = self.fito()?.next_msg_id;
        let mut next = self.advanced();
        let send_event = next.emit(
            sender,
            EventKind::Send,
            None,
            format!("send m{msg_id} to P{receiver}: {payload}"),
        );
        next.proc_mut(sender).sends += 1;
        let fito = next.fito_mut();
        fito.next_msg_id += 1;
        fito.sends += 1;
        fito.in_flight.insert(
            msg_id,
            Message {
                msg_id,
                sender,
                receiver,
                payload,
                send_event,
            },
        );
        Ok((next, msg_id))
    }

    pub fn fito_deliver(&self, msg_id: MsgId) -> Result<Configuration, SimError> {
        let msg = self
            .fito()?
            .in_flight
            .get(&msg_id)
            .ok_or(SimError::StaleDelivery(msg_id))?
            .clone();
        if !self.connected(msg.sender, msg.receiver) {
            return Err(SimError::Blocked {
                msg_id,
                sender: msg.sender,
                receiver: msg.receiver,
            });
        }
        let mut next = self.advanced();
        let fito = next.fito_mut();
        fito.in_flight.remove(&msg_id);
        fito.deliveries += 1;
        next.emit(
            msg.receiver,
            EventKind::Receive,
            Some(msg.send_event),
            format!("recv m{msg_id} from P{}: {}", msg.sender, msg.payload),
        );
        next.proc_mut(msg.receiver).received.push(msg.payload);
        Ok(next)
    }

    /// Loses an in-flight message. Nothing is recorded at either endpoint.
    pub fn fito_drop(&self, msg_id: MsgId) -> Result<Configuration, SimError> {
        if !self.fito()?.in_flight.contains_key(&msg_id) {
            return Err(SimError::StaleDelivery(msg_id));
        }
        let mut next = self.advanced();
        let fito = next.fito_mut();
        fito.in_flight.remove(&msg_id);
        fito.dropped.insert(msg_id);
        Ok(next)
    }

    /// Registers a pending transaction. No endpoint state changes and no
    /// event is emitted until the adversary decides it.
    pub fn bilateral_propose(
        &self,
        a: ProcessId,
        b: ProcessId,
        offer_a: Value,
        offer_b: Value,
    ) -> Result<(Configuration, TxnId), SimError> {
        self.check_process(a)?;
        self.check_process(b)?;
        if a == b {
            return Err(SimError::SelfTransaction(a));
        }
        let txn_id = self.bilateral()?.next_txn_id;
        let mut next = self.advanced();
        let state = next.bilateral_mut();
        state.next_txn_id += 1;
        state.txns.insert(
            txn_id,
            BilateralTransaction {
                txn_id,
                endpoint_a: a,
                endpoint_b: b,
                offer_a,
                offer_b,
                outcome: TxnStatus::Pending,
            },
        );
        Ok((next, txn_id))
    }

    /// Resolves a pending transaction. `Completed` updates both endpoints and
    /// emits the mutually-referencing TxnComplete pair in one step;
    /// `NotOccurred` touches neither endpoint.
    pub fn bilateral_decide(
        &self,
        txn_id: TxnId,
        decide: Outcome,
    ) -> Result<Configuration, SimError> {
        let txn = self.transaction(txn_id)?.clone();
        if txn.outcome != TxnStatus::Pending {
            return Err(SimError::TxnDecided(txn_id));
        }
        if decide == Outcome::Completed && !self.connected(txn.endpoint_a, txn.endpoint_b) {
            return Err(SimError::InvalidSchedule(format!(
                "transaction {txn_id} crosses the partition and cannot complete"
            )));
        }
        let mut next = self.advanced();
        next.bilateral_mut()
            .txns
            .get_mut(&txn_id)
            .expect("present")
            .outcome = decide.into();
        if decide == Outcome::Completed {
            next.complete_exchange(&txn);
        }
        Ok(next)
    }

    fn complete_exchange(&mut self, txn: &BilateralTransaction) {
        let (a, b) = (txn.endpoint_a, txn.endpoint_b);
        let id_a = crate::kernel::EventId::new(a, self.procs[a].next_seq);
        let id_b = crate::kernel::EventId::new(b, self.procs[b].next_seq);
        self.emit(
            a,
            EventKind::TxnComplete,
            Some(id_b),
            format!("txn t{} with P{b}: got {}", txn.txn_id, txn.offer_b),
        );
        self.emit(
            b,
            EventKind::TxnComplete,
            Some(id_a),
            format!("txn t{} with P{a}: got {}", txn.txn_id, txn.offer_a),
        );
        for (p, got) in [(a, txn.offer_b), (b, txn.offer_a)] {
            let s = self.proc_mut(p);
            s.held = Some(got);
            s.completed_txns.insert(txn.txn_id);
        }
    }

    /// One-shot attempt: propose and decide in a single step. A `NotOccurred`
    /// attempt leaves everything except the step counter untouched.
    pub fn bilateral_attempt(
        &self,
        a: ProcessId,
        b: ProcessId,
        offer_a: Value,
        offer_b: Value,
        decide: Outcome,
    ) -> Result<Configuration, SimError> {
        self.check_process(a)?;
        self.check_process(b)?;
        if a == b {
            return Err(SimError::SelfTransaction(a));
        }
        self.bilateral()?;
        match decide {
            Outcome::NotOccurred => Ok(self.advanced()),
            Outcome::Completed => {
                if !self.connected(a, b) {
                    return Err(SimError::InvalidSchedule(format!(
                        "P{a} and P{b} are partitioned; the attempt cannot complete"
                    )));
                }
                let (proposed, txn_id) = self.bilateral_propose(a, b, offer_a, offer_b)?;
                let mut done = proposed.bilateral_decide(txn_id, Outcome::Completed)?;
                done.step_count = self.step_count + 1;
                Ok(done)
            }
        }
    }

    pub fn cell_read(&self, p: ProcessId, cell_id: CellId) -> Result<Option<Value>, SimError> {
        self.check_process(p)?;
        Ok(self.cell(cell_id)?.value)
    }

    pub fn cell_write(
        &self,
        p: ProcessId,
        cell_id: CellId,
        v: Value,
    ) -> Result<Configuration, SimError> {
        self.check_process(p)?;
        self.cell(cell_id)?;
        let mut next = self.advanced();
        next.cells.get_mut(&cell_id).expect("present").value = Some(v);
        next.emit(p, EventKind::Local, None, format!("write c{cell_id}={v}"));
        Ok(next)
    }

    /// Compare-and-swap with no interleaving point between compare and write.
    pub fn cell_cas(
        &self,
        p: ProcessId,
        cell_id: CellId,
        expect: Option<Value>,
        new: Option<Value>,
    ) -> Result<(Configuration, bool), SimError> {
        self.check_process(p)?;
        let current = self.cell(cell_id)?.value;
        let success = current == expect;
        let mut next = self.advanced();
        if success {
            next.cells.get_mut(&cell_id).expect("present").value = new;
        }
        next.emit(
            p,
            EventKind::Local,
            None,
            format!(
                "cas c{cell_id} {}->{} {}",
                show(expect),
                show(new),
                if success { "ok" } else { "failed" }
            ),
        );
        Ok((next, success))
    }

    /// Memory-to-memory swap of `p`'s private cell with another cell.
    pub fn cell_swap(
        &self,
        p: ProcessId,
        private_cell: CellId,
        shared_cell: CellId,
    ) -> Result<Configuration, SimError> {
        self.check_process(p)?;
        let private = self.cell(private_cell)?;
        if private.owner != Some(p) {
            return Err(SimError::NotOwner {
                cell: private_cell,
                process: p,
            });
        }
        let shared = self.cell(shared_cell)?;
        let (pv, sv) = (private.value, shared.value);
        let mut next = self.advanced();
        next.cells.get_mut(&private_cell).expect("present").value = sv;
        next.cells.get_mut(&shared_cell).expect("present").value = pv;
        next.emit(
            p,
            EventKind::Local,
            None,
            format!("swap c{private_cell}<->c{shared_cell}"),
        );
        Ok(next)
    }

    pub fn with_partition(&self, cells: Vec<Vec<ProcessId>>) -> Result<Configuration, SimError> {
        let partition = Partition::new(cells, self.n_procs())?;
        let mut next = self.advanced();
        next.partition = Some(partition);
        Ok(next)
    }

    pub fn healed(&self) -> Configuration {
        let mut next = self.advanced();
        next.partition = None;
        next
    }

    /// Checks that every transaction is pending-with-no-effects, completed at
    /// both endpoints, or not-occurred at neither, and that TxnComplete events
    /// match the completed set at every process. Returns a description of the
    /// first offending transaction.
    pub fn half_state_violation(&self) -> Option<String> {
        let SubstrateState::Bilateral(state) = &self.substrate else {
            return None;
        };
        for t in state.txns.values() {
            let at_a = self.procs[t.endpoint_a].completed_txns.contains(&t.txn_id);
            let at_b = self.procs[t.endpoint_b].completed_txns.contains(&t.txn_id);
            let ok = match t.outcome {
                TxnStatus::Completed => at_a && at_b,
                TxnStatus::Pending | TxnStatus::NotOccurred => !at_a && !at_b,
            };
            if !ok {
                return Some(format!(
                    "txn {} is {:?} but endpoint flags are ({at_a}, {at_b})",
                    t.txn_id, t.outcome
                ));
            }
        }
        let mut completes = vec![0usize; self.n_procs()];
        for e in self.events() {
            if e.kind == EventKind::TxnComplete {
                completes[e.id.process] += 1;
            }
        }
        for (p, n) in completes.into_iter().enumerate() {
            if n != self.procs[p].completed_txns.len() {
                return Some(format!(
                    "P{p} has {n} TxnComplete events but a different completed set"
                ));
            }
        }
        None
    }
}

pub(crate) fn show(v: Option<Value>) -> String {
    v.map_or_else(|| "⊥".to_string(), |v| v.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::CellSpec;

    fn fito(n: usize) -> Configuration {
        Configuration::new(SubstrateKind::Fito, n, &[]).unwrap()
    }

    fn bilateral(n: usize) -> Configuration {
        Configuration::new(SubstrateKind::Bilateral, n, &[]).unwrap()
    }

    #[test]
    fn send_puts_message_in_flight_only() {
        let c = fito(2);
        let (c1, _) = c.fito_send(0, 1, 7).unwrap();
        assert_eq!(c1.in_flight().len(), 1);
        assert_eq!(c1.proc_state(1).unwrap(), c.proc_state(1).unwrap());
        assert!(c1.history(1).is_empty());
        let (c2, _) = c1.fito_send(0, 1, 8).unwrap();
        assert_eq!(c2.in_flight().len(), 2);
    }

    #[test]
    fn send_across_partition_is_accepted() {
        let c = fito(2).with_partition(vec![vec![0], vec![1]]).unwrap();
        let (c, m) = c.fito_send(0, 1, 1).unwrap();
        assert_eq!(c.in_flight().len(), 1);
        assert_eq!(
            c.fito_deliver(m).unwrap_err(),
            SimError::Blocked {
                msg_id: m,
                sender: 0,
                receiver: 1
            }
        );
    }

    #[test]
    fn deliver_once() {
        let (c, m) = fito(2).fito_send(0, 1, 3).unwrap();
        let c = c.fito_deliver(m).unwrap();
        assert!(c.in_flight().is_empty());
        let recv = c.history(1);
        assert_eq!(recv.len(), 1);
        assert_eq!(recv[0].kind, EventKind::Receive);
        assert_eq!(recv[0].counterpart, Some(crate::kernel::EventId::new(0, 0)));
        assert_eq!(c.fito_deliver(m).unwrap_err(), SimError::StaleDelivery(m));
    }

    #[test]
    fn drop_is_invisible_to_the_sender() {
        let (sent, m) = fito(2).fito_send(0, 1, 3).unwrap();
        let dropped = sent.fito_drop(m).unwrap();
        // A delayed delivery: the message is still in flight.
        let delayed = sent.local_event(1, "idle").unwrap();
        assert!(dropped.history(1).is_empty());
        assert_eq!(
            dropped.proc_state(0).unwrap(),
            delayed.proc_state(0).unwrap()
        );
        assert_eq!(dropped.history(0), delayed.history(0));
        assert_eq!(
            dropped.fito_drop(m).unwrap_err(),
            SimError::StaleDelivery(m)
        );

        let (retried, m2) = dropped.fito_send(0, 1, 3).unwrap();
        assert_ne!(m, m2);
        let sends = retried
            .events()
            .iter()
            .filter(|e| e.kind == EventKind::Send)
            .count();
        assert_eq!(sends, 2);
    }

    #[test]
    fn conservation_counts() {
        let c = fito(3);
        let (c, a) = c.fito_send(0, 1, 1).unwrap();
        let (c, b) = c.fito_send(1, 2, 2).unwrap();
        let (c, _) = c.fito_send(2, 0, 3).unwrap();
        let c = c.fito_deliver(a).unwrap().fito_drop(b).unwrap();
        let SubstrateState::Fito(s) = c.substrate() else {
            panic!()
        };
        assert_eq!(
            (s.sends, s.deliveries, s.dropped.len(), s.in_flight.len()),
            (3, 1, 1, 1)
        );
        assert!(s.conserved());
    }

    #[test]
    fn completed_attempt_swaps_offers() {
        let c = bilateral(2)
            .bilateral_attempt(0, 1, 10, 20, Outcome::Completed)
            .unwrap();
        assert_eq!(c.proc_state(0).unwrap().held, Some(20));
        assert_eq!(c.proc_state(1).unwrap().held, Some(10));
        let events = c.events();
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].counterpart, Some(events[1].id));
        assert_eq!(events[1].counterpart, Some(events[0].id));
        assert_eq!(c.step_count(), 1);
        assert!(c.half_state_violation().is_none());
    }

    #[test]
    fn not_occurred_attempt_changes_nothing_but_the_counter() {
        let c = bilateral(2);
        let after = c
            .bilateral_attempt(0, 1, 10, 20, Outcome::NotOccurred)
            .unwrap();
        assert_eq!(after.step_count(), c.step_count() + 1);
        let mut rewound = after.clone();
        rewound.step_count = c.step_count();
        assert_eq!(rewound, c);
    }

    #[test]
    fn partition_forces_not_occurred() {
        let c = bilateral(2).with_partition(vec![vec![0], vec![1]]).unwrap();
        assert!(matches!(
            c.bilateral_attempt(0, 1, 1, 2, Outcome::Completed),
            Err(SimError::InvalidSchedule(_))
        ));
        let after = c
            .bilateral_attempt(0, 1, 1, 2, Outcome::NotOccurred)
            .unwrap();
        assert_eq!(after.procs(), c.procs());

        let (p, t) = c.bilateral_propose(0, 1, 1, 2).unwrap();
        assert!(p.bilateral_decide(t, Outcome::Completed).is_err());
        let d = p.bilateral_decide(t, Outcome::NotOccurred).unwrap();
        assert_eq!(d.transaction(t).unwrap().outcome, TxnStatus::NotOccurred);
        assert_eq!(
            d.bilateral_decide(t, Outcome::NotOccurred).unwrap_err(),
            SimError::TxnDecided(t)
        );
    }

    #[test]
    fn substrate_mismatch_is_an_error() {
        assert!(matches!(
            bilateral(2).fito_send(0, 1, 1),
            Err(SimError::WrongSubstrate { .. })
        ));
        assert!(matches!(
            fito(2).bilateral_attempt(0, 1, 1, 1, Outcome::Completed),
            Err(SimError::WrongSubstrate { .. })
        ));
        assert_eq!(
            bilateral(2).bilateral_propose(1, 1, 0, 0).unwrap_err(),
            SimError::SelfTransaction(1)
        );
    }

    fn cells() -> Configuration {
        Configuration::new(
            SubstrateKind::Fito,
            2,
            &[
                CellSpec::shared(0),
                CellSpec::shared(1),
                CellSpec::private(10, 0, Some(3)),
                CellSpec::private(11, 1, Some(4)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn write_then_read() {
        let c = cells();
        assert_eq!(c.cell_read(0, 0).unwrap(), None);
        let c = c.cell_write(0, 0, 5).unwrap();
        assert_eq!(c.cell_read(1, 0).unwrap(), Some(5));
        assert_eq!(c.cell_read(0, 99).unwrap_err(), SimError::UnknownCell(99));
        assert_eq!(
            c.cell_write(0, 99, 1).unwrap_err(),
            SimError::UnknownCell(99)
        );
    }

    #[test]
    fn writes_to_distinct_cells_commute() {
        let c = cells();
        let ab = c.cell_write(0, 0, 1).unwrap().cell_write(1, 1, 2).unwrap();
        let ba = c.cell_write(1, 1, 2).unwrap().cell_write(0, 0, 1).unwrap();
        assert_eq!(ab.state_key(), ba.state_key());
    }

    #[test]
    fn cas_semantics() {
        let c = cells();
        let (c, ok) = c.cell_cas(0, 0, None, Some(7)).unwrap();
        assert!(ok);
        assert_eq!(c.cell_read(0, 0).unwrap(), Some(7));
        let (c, ok) = c.cell_cas(1, 0, None, Some(9)).unwrap();
        assert!(!ok);
        assert_eq!(c.cell_read(0, 0).unwrap(), Some(7));
    }

    #[test]
    fn racing_cas_has_exactly_one_winner_and_does_not_commute() {
        let c = cells();
        let (c1, a) = c.cell_cas(0, 0, None, Some(1)).unwrap();
        let (c1, b) = c1.cell_cas(1, 0, None, Some(2)).unwrap();
        let (c2, b2) = c.cell_cas(1, 0, None, Some(2)).unwrap();
        let (c2, a2) = c2.cell_cas(0, 0, None, Some(1)).unwrap();
        assert_eq!((a, b), (true, false));
        assert_eq!((a2, b2), (false, true));
        assert_ne!(c1.cell_read(0, 0).unwrap(), c2.cell_read(0, 0).unwrap());
    }

    #[test]
    fn swap_exchanges_and_is_an_involution() {
        let c = cells();
        let s = c.cell_swap(0, 10, 0).unwrap();
        assert_eq!(s.cell_read(0, 10).unwrap(), None);
        assert_eq!(s.cell_read(0, 0).unwrap(), Some(3));
        let back = s.cell_swap(0, 10, 0).unwrap();
        assert_eq!(back.cell_read(0, 10).unwrap(), Some(3));
        assert_eq!(back.cell_read(0, 0).unwrap(), None);
        assert_eq!(
            c.cell_swap(1, 10, 0).unwrap_err(),
            SimError::NotOwner {
                cell: 10,
                process: 1
            }
        );
    }

    #[test]
    fn sequential_swaps_hand_value_along() {
        let c = cells();
        let first0 = c.cell_swap(0, 10, 0).unwrap().cell_swap(1, 11, 0).unwrap();
        assert_eq!(first0.cell_read(1, 11).unwrap(), Some(3));
        assert_eq!(first0.cell_read(0, 10).unwrap(), None);
        let first1 = c.cell_swap(1, 11, 0).unwrap().cell_swap(0, 10, 0).unwrap();
        assert_eq!(first1.cell_read(0, 10).unwrap(), Some(4));
        assert_eq!(first1.cell_read(1, 11).unwrap(), None);
    }

    #[test]
    fn partitions_must_cover_every_process_once() {
        assert!(Partition::new(vec![vec![0], vec![1, 2]], 3).is_ok());
        assert!(Partition::new(vec![vec![0], vec![1]], 3).is_err());
        assert!(Partition::new(vec![vec![0, 1], vec![1, 2]], 3).is_err());
        assert!(Partition::new(vec![vec![0, 5]], 3).is_err());
        let p = Partition::new(vec![vec![2, 0], vec![1]], 3).unwrap();
        assert!(p.same_cell(0, 2) && !p.same_cell(0, 1));
    }
}
