//! Partial orders induced by interaction, linear-extension counting, and
//! what a timestamp total order adds on top of them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{EventId, EventKind, Trace};

/// Largest pomset `linear_extensions` will count.
pub const EXTENSION_BOUND: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrderingError {
    #[error("unknown event {0}")]
    UnknownEvent(EventId),
    #[error("event {0} listed twice")]
    DuplicateEvent(EventId),
    #[error("counterpart of {0} does not resolve")]
    BadCounterpart(EventId),
    #[error("relation has a cycle through {0}")]
    Cycle(EventId),
    #[error("{n} events exceed the counting bound {bound}")]
    TooLarge { n: usize, bound: usize },
    #[error("total order is not a permutation of the pomset's events")]
    NotAPermutation,
    #[error("no writes to resolve")]
    NoWrites,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledEvent {
    pub id: EventId,
    pub label: String,
}

/// Strict partial order over labeled events. The closure is kept for
/// queries; only the transitive reduction is serialized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pomset {
    events: Vec<LabeledEvent>,
    index: BTreeMap<EventId, usize>,
    /// `below[b][a]` iff `a < b`.
    below: Vec<Vec<bool>>,
    reduced: BTreeSet<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PomsetRecord {
    pub events: Vec<LabeledEvent>,
    pub reduced_edges: Vec<(EventId, EventId)>,
}

impl Pomset {
    /// Closure of the generating edges `gen` (index pairs into `events`),
    /// accumulated along a topological order. Any acyclic relation is accepted.
    fn from_edges(
        events: Vec<LabeledEvent>,
        gen: &[(usize, usize)],
    ) -> Result<Self, OrderingError> {
        let n = events.len();
        let mut index = BTreeMap::new();
        for (i, e) in events.iter().enumerate() {
            if index.insert(e.id, i).is_some() {
                return Err(OrderingError::DuplicateEvent(e.id));
            }
        }
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(a, b) in gen {
            preds[b].push(a);
        }
        let order = topological(n, gen).map_err(|i| OrderingError::Cycle(events[i].id))?;
        let mut below = vec![vec![false; n]; n];
        for &b in &order {
            let mut row = vec![false; n];
            for &a in &preds[b] {
                row[a] = true;
                for (r, &x) in row.iter_mut().zip(&below[a]) {
                    *r |= x;
                }
            }
            below[b] = row;
        }
        let reduced = gen
            .iter()
            .copied()
            .filter(|&(a, b)| !(0..n).any(|c| below[c][a] && below[b][c]))
            .collect();
        Ok(Self {
            events,
            index,
            below,
            reduced,
        })
    }

    /// Pomset of an arbitrary relation given as pairs `(a, b)` meaning `a < b`.
    pub fn from_relation(
        events: Vec<LabeledEvent>,
        edges: &[(EventId, EventId)],
    ) -> Result<Self, OrderingError> {
        let pos: BTreeMap<EventId, usize> =
            events.iter().enumerate().map(|(i, e)| (e.id, i)).collect();
        let gen = edges
            .iter()
            .map(|(a, b)| {
                let pa = *pos.get(a).ok_or(OrderingError::UnknownEvent(*a))?;
                let pb = *pos.get(b).ok_or(OrderingError::UnknownEvent(*b))?;
                Ok((pa, pb))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_edges(events, &gen)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn events(&self) -> &[LabeledEvent] {
        &self.events
    }

    pub fn ids(&self) -> Vec<EventId> {
        self.events.iter().map(|e| e.id).collect()
    }

    fn pos(&self, e: EventId) -> Result<usize, OrderingError> {
        self.index
            .get(&e)
            .copied()
            .ok_or(OrderingError::UnknownEvent(e))
    }

    /// `e < f` in the partial order.
    pub fn lt(&self, e: EventId, f: EventId) -> Result<bool, OrderingError> {
        Ok(self.below[self.pos(f)?][self.pos(e)?])
    }

    pub fn concurrent(&self, e: EventId, f: EventId) -> Result<bool, OrderingError> {
        Ok(e != f && !self.lt(e, f)? && !self.lt(f, e)?)
    }

    pub fn reduced_edges(&self) -> Vec<(EventId, EventId)> {
        self.reduced
            .iter()
            .map(|&(a, b)| (self.events[a].id, self.events[b].id))
            .collect()
    }

    /// All ordered pairs of the closure.
    pub fn closure_pairs(&self) -> Vec<(EventId, EventId)> {
        let mut out = Vec::new();
        for (b, row) in self.below.iter().enumerate() {
            for (a, &lt) in row.iter().enumerate() {
                if lt {
                    out.push((self.events[a].id, self.events[b].id));
                }
            }
        }
        out.sort();
        out
    }

    pub fn concurrent_pairs(&self) -> usize {
        let n = self.len();
        (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .filter(|&(a, b)| !self.below[a][b] && !self.below[b][a])
            .count()
    }

    pub fn to_record(&self) -> PomsetRecord {
        PomsetRecord {
            events: self.events.clone(),
            reduced_edges: self.reduced_edges(),
        }
    }

    /// Predecessor bitmask of every event; requires `len() <= 64`.
    fn pred_masks(&self) -> Vec<u64> {
        self.below
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &lt)| lt)
                    .fold(0u64, |m, (a, _)| m | 1 << a)
            })
            .collect()
    }
}

/// Kahn order, or the index of an event on a cycle.
fn topological(n: usize, edges: &[(usize, usize)]) -> Result<Vec<usize>, usize> {
    let mut indeg = vec![0usize; n];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in edges {
        indeg[b] += 1;
        succ[a].push(b);
    }
    let mut ready: Vec<usize> = (0..n).rev().filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop() {
        order.push(i);
        for &j in &succ[i] {
            indeg[j] -= 1;
            if indeg[j] == 0 {
                ready.push(j);
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        Err((0..n)
            .find(|&i| indeg[i] > 0)
            .expect("some event is blocked"))
    }
}

/// Process order, send before receive, and for a completed transaction each
/// endpoint's prior event before both completion events.
pub fn build_pomset(trace: &Trace) -> Result<Pomset, OrderingError> {
    let events = trace.events();
    let mut last: BTreeMap<usize, usize> = BTreeMap::new();
    let mut prev = vec![None; events.len()];
    for (i, e) in events.iter().enumerate() {
        prev[i] = last.insert(e.id.process, i);
    }
    let mut gen = Vec::new();
    for (i, e) in events.iter().enumerate() {
        if let Some(p) = prev[i] {
            gen.push((p, i));
        }
        match e.kind {
            EventKind::Receive => {
                let c = e.counterpart.ok_or(OrderingError::BadCounterpart(e.id))?;
                let s = trace
                    .position(c)
                    .ok_or(OrderingError::BadCounterpart(e.id))?;
                gen.push((s, i));
            }
            EventKind::TxnComplete => {
                let c = e.counterpart.ok_or(OrderingError::BadCounterpart(e.id))?;
                let partner = trace
                    .position(c)
                    .ok_or(OrderingError::BadCounterpart(e.id))?;
                if let Some(p) = prev[partner] {
                    gen.push((p, i));
                }
            }
            EventKind::Local | EventKind::Send => {}
        }
    }
    gen.sort_unstable();
    gen.dedup();
    let labeled = events
        .iter()
        .map(|e| LabeledEvent {
            id: e.id,
            label: format!("{:?}", e.kind),
        })
        .collect();
    Pomset::from_edges(labeled, &gen)
}

/// Exact number of total orders extending `p`, by dynamic programming over
/// downward-closed subsets.
pub fn linear_extensions(p: &Pomset) -> Result<u128, OrderingError> {
    let n = p.len();
    if n > EXTENSION_BOUND {
        return Err(OrderingError::TooLarge {
            n,
            bound: EXTENSION_BOUND,
        });
    }
    let preds = p.pred_masks();
    let mut ways = vec![0u128; 1 << n];
    ways[0] = 1;
    for mask in 0..(1usize << n) {
        let w = ways[mask];
        if w == 0 {
            continue;
        }
        for (e, &pm) in preds.iter().enumerate() {
            if mask & (1 << e) == 0 && (pm as usize) & !mask == 0 {
                ways[mask | 1 << e] += w;
            }
        }
    }
    Ok(ways[(1 << n) - 1])
}

/// Pairs put in order by `total` that the pomset leaves concurrent.
pub fn surplus_pairs(p: &Pomset, total: &[EventId]) -> Result<usize, OrderingError> {
    let positions = total
        .iter()
        .map(|&e| p.pos(e))
        .collect::<Result<Vec<_>, _>>()?;
    let distinct: BTreeSet<usize> = positions.iter().copied().collect();
    if positions.len() != p.len() || distinct.len() != p.len() {
        return Err(OrderingError::NotAPermutation);
    }
    let mut count = 0;
    for (i, &a) in positions.iter().enumerate() {
        for &b in &positions[i + 1..] {
            if !p.below[a][b] && !p.below[b][a] {
                count += 1;
            }
        }
    }
    Ok(count)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnomalyKind {
    /// Winner and loser were concurrent; the timestamp invented an order.
    LwwSurplusOrder,
    /// The loser causally followed the winner; a skewed clock reversed them.
    LwwCausalInversion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnomalyRecord {
    pub kind: AnomalyKind,
    /// `(winner, loser)`.
    pub pair: (EventId, EventId),
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LwwResolution {
    pub winner: EventId,
    pub anomalies: Vec<AnomalyRecord>,
}

/// One timestamped write, as read from a timestamps file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timestamp {
    pub process: usize,
    pub seq: u32,
    pub time: i64,
}

pub fn timestamp_map(entries: &[Timestamp]) -> BTreeMap<EventId, i64> {
    entries
        .iter()
        .map(|t| (EventId::new(t.process, t.seq), t.time))
        .collect()
}

/// Last-writer-wins over the events that carry a timestamp. Ties go to the
/// lowest process index, then the lowest sequence number.
pub fn lww_resolve(
    trace: &Trace,
    timestamps: &BTreeMap<EventId, i64>,
) -> Result<LwwResolution, OrderingError> {
    let p = build_pomset(trace)?;
    for &e in timestamps.keys() {
        p.pos(e)?;
    }
    let (&winner, &wt) = timestamps
        .iter()
        .max_by(|(a, ta), (b, tb)| ta.cmp(tb).then_with(|| b.cmp(a)))
        .ok_or(OrderingError::NoWrites)?;
    let mut anomalies = Vec::new();
    for (&loser, &lt) in timestamps {
        if loser == winner {
            continue;
        }
        let kind = if p.concurrent(winner, loser)? {
            Some(AnomalyKind::LwwSurplusOrder)
        } else if p.lt(winner, loser)? {
            Some(AnomalyKind::LwwCausalInversion)
        } else {
            None
        };
        if let Some(kind) = kind {
            anomalies.push(AnomalyRecord {
                kind,
                pair: (winner, loser),
                detail: format!("{winner}@{wt} beats {loser}@{lt}"),
            });
        }
    }
    Ok(LwwResolution { winner, anomalies })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{happened_before, Event};

    fn id(p: usize, s: u32) -> EventId {
        EventId::new(p, s)
    }

    fn ev(p: usize, s: u32, kind: EventKind, c: Option<EventId>) -> Event {
        Event::unclocked(id(p, s), kind, c, "")
    }

    fn labeled(ids: &[EventId]) -> Vec<LabeledEvent> {
        ids.iter()
            .map(|&id| LabeledEvent {
                id,
                label: String::new(),
            })
            .collect()
    }

    fn chain(k: u32) -> Pomset {
        let ids: Vec<_> = (0..k).map(|s| id(0, s)).collect();
        let edges: Vec<_> = ids.windows(2).map(|w| (w[0], w[1])).collect();
        Pomset::from_relation(labeled(&ids), &edges).unwrap()
    }

    fn antichain(k: usize) -> Pomset {
        let ids: Vec<_> = (0..k).map(|p| id(p, 0)).collect();
        Pomset::from_relation(labeled(&ids), &[]).unwrap()
    }

    fn two_chains() -> Trace {
        Trace::new(
            "t",
            0,
            2,
            vec![
                ev(0, 0, EventKind::Local, None),
                ev(1, 0, EventKind::Local, None),
                ev(0, 1, EventKind::Local, None),
                ev(1, 1, EventKind::Local, None),
            ],
        )
        .unwrap()
    }

    fn one_txn() -> Trace {
        Trace::new(
            "t",
            0,
            2,
            vec![
                ev(0, 0, EventKind::Local, None),
                ev(1, 0, EventKind::Local, None),
                ev(0, 1, EventKind::TxnComplete, Some(id(1, 1))),
                ev(1, 1, EventKind::TxnComplete, Some(id(0, 1))),
            ],
        )
        .unwrap()
    }

    #[test]
    fn transaction_pomset() {
        let p = build_pomset(&one_txn()).unwrap();
        for prior in [id(0, 0), id(1, 0)] {
            for done in [id(0, 1), id(1, 1)] {
                assert!(p.lt(prior, done).unwrap());
            }
        }
        assert!(p.concurrent(id(0, 1), id(1, 1)).unwrap());
        assert!(!p.concurrent(id(0, 0), id(1, 1)).unwrap());
        assert_eq!(p.reduced_edges().len(), 4);
    }

    #[test]
    fn disjoint_chains() {
        let t = two_chains();
        let p = build_pomset(&t).unwrap();
        assert_eq!(
            p.reduced_edges(),
            vec![(id(0, 0), id(0, 1)), (id(1, 0), id(1, 1))]
        );
        assert!(p.concurrent(id(0, 0), id(1, 1)).unwrap());
        assert!(!p.concurrent(id(0, 0), id(0, 1)).unwrap());
        assert_eq!(linear_extensions(&p).unwrap(), 6);
        assert_eq!(
            surplus_pairs(&p, &[id(0, 0), id(1, 0), id(0, 1), id(1, 1)]).unwrap(),
            4
        );
    }

    #[test]
    fn spot_counts() {
        assert_eq!(linear_extensions(&chain(3)).unwrap(), 1);
        assert_eq!(linear_extensions(&antichain(3)).unwrap(), 6);
        assert_eq!(linear_extensions(&antichain(0)).unwrap(), 1);
        assert_eq!(surplus_pairs(&chain(3), &chain(3).ids()).unwrap(), 0);
        let a = antichain(3);
        assert_eq!(
            surplus_pairs(&a, &[id(2, 0), id(0, 0), id(1, 0)]).unwrap(),
            3
        );
    }

    #[test]
    fn reduction_drops_implied_edges() {
        let ids = [id(0, 0), id(0, 1), id(0, 2)];
        let p = Pomset::from_relation(
            labeled(&ids),
            &[(ids[0], ids[1]), (ids[1], ids[2]), (ids[0], ids[2])],
        )
        .unwrap();
        assert_eq!(p.reduced_edges(), vec![(ids[0], ids[1]), (ids[1], ids[2])]);
        assert_eq!(p, chain(3));
    }

    #[test]
    fn cycles_and_bounds_are_refused() {
        let ids = [id(0, 0), id(1, 0)];
        assert!(matches!(
            Pomset::from_relation(labeled(&ids), &[(ids[0], ids[1]), (ids[1], ids[0])]),
            Err(OrderingError::Cycle(_))
        ));
        assert_eq!(
            linear_extensions(&antichain(11)).unwrap_err(),
            OrderingError::TooLarge { n: 11, bound: 10 }
        );
        assert_eq!(
            surplus_pairs(&chain(3), &[id(0, 0), id(0, 0), id(0, 1)]).unwrap_err(),
            OrderingError::NotAPermutation
        );
    }

    #[test]
    fn agrees_with_happened_before_on_a_message() {
        let t = Trace::new(
            "t",
            0,
            2,
            vec![
                ev(0, 0, EventKind::Send, None),
                ev(1, 0, EventKind::Local, None),
                ev(1, 1, EventKind::Receive, Some(id(0, 0))),
            ],
        )
        .unwrap();
        let p = build_pomset(&t).unwrap();
        for a in t.events() {
            for b in t.events() {
                assert_eq!(
                    p.lt(a.id, b.id).unwrap(),
                    happened_before(&t, a.id, b.id).unwrap()
                );
            }
        }
    }

    #[test]
    fn lww_cases() {
        let t = two_chains();
        let concurrent = BTreeMap::from([(id(0, 1), 100), (id(1, 1), 105)]);
        let r = lww_resolve(&t, &concurrent).unwrap();
        assert_eq!(r.winner, id(1, 1));
        assert_eq!(r.anomalies.len(), 1);
        assert_eq!(r.anomalies[0].kind, AnomalyKind::LwwSurplusOrder);

        let ordered = BTreeMap::from([(id(0, 0), 100), (id(0, 1), 105)]);
        let r = lww_resolve(&t, &ordered).unwrap();
        assert_eq!((r.winner, r.anomalies.len()), (id(0, 1), 0));

        let skewed = BTreeMap::from([(id(0, 0), 105), (id(0, 1), 100)]);
        let r = lww_resolve(&t, &skewed).unwrap();
        assert_eq!(r.winner, id(0, 0));
        assert_eq!(r.anomalies[0].kind, AnomalyKind::LwwCausalInversion);

        let tied = BTreeMap::from([(id(1, 1), 7), (id(0, 1), 7)]);
        assert_eq!(lww_resolve(&t, &tied).unwrap().winner, id(0, 1));

        assert_eq!(
            lww_resolve(&t, &BTreeMap::new()).unwrap_err(),
            OrderingError::NoWrites
        );
        let stray = BTreeMap::from([(id(5, 0), 1)]);
        assert_eq!(
            lww_resolve(&t, &stray).unwrap_err(),
            OrderingError::UnknownEvent(id(5, 0))
        );
    }
}
