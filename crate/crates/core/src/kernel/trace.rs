use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ProcessId, MAX_PROCS};

/// Identity of an event: the emitting process and its per-process sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EventId {
    pub process: ProcessId,
    pub seq: u32,
}

impl EventId {
    pub const fn new(process: ProcessId, seq: u32) -> Self {
        Self { process, seq }
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}#{}", self.process, self.seq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Local,
    Send,
    Receive,
    TxnComplete,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub id: EventId,
    pub kind: EventKind,
    /// The matching Send for a Receive, or the partner side of a TxnComplete.
    pub counterpart: Option<EventId>,
    pub lamport: u64,
    pub vclock: Vec<u64>,
    pub payload: String,
}

impl Event {
    /// An event whose clocks have not been assigned yet.
    pub fn unclocked(
        id: EventId,
        kind: EventKind,
        counterpart: Option<EventId>,
        payload: impl Into<String>,
    ) -> Self {
        Self {
            id,
            kind,
            counterpart,
            lamport: 0,
            vclock: Vec::new(),
            payload: payload.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("unknown event {0}")]
    UnknownEvent(EventId),
    #[error("event {0} names process outside 0..{1}")]
    ProcessOutOfRange(EventId, usize),
    #[error("trace declares {0} processes; at most {MAX_PROCS} are supported")]
    TooManyProcesses(usize),
    #[error("event {0} breaks the consecutive per-process sequence (expected seq {1})")]
    SequenceGap(EventId, u32),
    #[error("event {0}: {1}")]
    BadCounterpart(EventId, String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Recorded run: every event in simulator emission order.
#[derive(Debug, Clone)]
pub struct Trace {
    scenario_id: String,
    seed: u64,
    n_procs: usize,
    events: Vec<Event>,
    index: HashMap<EventId, usize>,
    succ: Vec<Vec<usize>>,
}

impl PartialEq for Trace {
    fn eq(&self, other: &Self) -> bool {
        self.scenario_id == other.scenario_id
            && self.seed == other.seed
            && self.n_procs == other.n_procs
            && self.events == other.events
    }
}

impl Eq for Trace {}

impl Trace {
    /// Builds a trace after checking the structural invariants: consecutive
    /// per-process sequence numbers, resolvable counterparts, Receives that
    /// follow their Send, and symmetric, adjacent TxnComplete pairs.
    pub fn new(
        scenario_id: impl Into<String>,
        seed: u64,
        n_procs: usize,
        events: Vec<Event>,
    ) -> Result<Self, TraceError> {
        if n_procs > MAX_PROCS {
            return Err(TraceError::TooManyProcesses(n_procs));
        }
        let mut index = HashMap::with_capacity(events.len());
        let mut next_seq = vec![0u32; n_procs];
        for (i, e) in events.iter().enumerate() {
            if e.id.process >= n_procs {
                return Err(TraceError::ProcessOutOfRange(e.id, n_procs));
            }
            let expected = next_seq[e.id.process];
            if e.id.seq != expected {
                return Err(TraceError::SequenceGap(e.id, expected));
            }
            next_seq[e.id.process] += 1;
            index.insert(e.id, i);
        }

        let bad = |e: &Event, why: &str| TraceError::BadCounterpart(e.id, why.to_string());
        let mut received: HashSet<EventId> = HashSet::new();
        for (i, e) in events.iter().enumerate() {
            match e.kind {
                EventKind::Local | EventKind::Send => {
                    if e.counterpart.is_some() {
                        return Err(bad(e, "only Receive and TxnComplete carry a counterpart"));
                    }
                }
                EventKind::Receive => {
                    let c = e
                        .counterpart
                        .ok_or_else(|| bad(e, "Receive without its Send"))?;
                    let ci = *index
                        .get(&c)
                        .ok_or_else(|| bad(e, "counterpart not in trace"))?;
                    if events[ci].kind != EventKind::Send {
                        return Err(bad(e, "Receive counterpart is not a Send"));
                    }
                    if ci >= i {
                        return Err(bad(e, "Receive emitted before its Send"));
                    }
                    if !received.insert(c) {
                        return Err(bad(e, "Send received twice"));
                    }
                }
                EventKind::TxnComplete => {
                    let c = e
                        .counterpart
                        .ok_or_else(|| bad(e, "TxnComplete without partner"))?;
                    let ci = *index
                        .get(&c)
                        .ok_or_else(|| bad(e, "partner not in trace"))?;
                    let partner = &events[ci];
                    if partner.kind != EventKind::TxnComplete || partner.counterpart != Some(e.id) {
                        return Err(bad(e, "TxnComplete partner is not symmetric"));
                    }
                    if partner.id.process == e.id.process {
                        return Err(bad(e, "TxnComplete partner on the same process"));
                    }
                    if ci.abs_diff(i) != 1 {
                        return Err(bad(e, "TxnComplete pair is not emitted atomically"));
                    }
                }
            }
        }

        let succ = build_successors(&events, &index);
        Ok(Self {
            scenario_id: scenario_id.into(),
            seed,
            n_procs,
            events,
            index,
            succ,
        })
    }

    pub fn empty(scenario_id: impl Into<String>, seed: u64, n_procs: usize) -> Self {
        Self::new(scenario_id, seed, n_procs, Vec::new()).expect("empty trace is well formed")
    }

    pub fn scenario_id(&self) -> &str {
        &self.scenario_id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_procs(&self) -> usize {
        self.n_procs
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn get(&self, id: EventId) -> Option<&Event> {
        self.index.get(&id).map(|&i| &self.events[i])
    }

    /// Emission index of an event.
    pub fn position(&self, id: EventId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// Events of one process in sequence order.
    pub fn history(&self, process: ProcessId) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.id.process == process)
    }

    pub(crate) fn with_events(&self, events: Vec<Event>) -> Self {
        Self {
            events,
            ..self.clone()
        }
    }

    pub(crate) fn successors(&self, idx: usize) -> &[usize] {
        &self.succ[idx]
    }

    /// One JSON object per line, fields in fixed order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (idx, e) in self.events.iter().enumerate() {
            let record = TraceRecord {
                scenario_id: self.scenario_id.clone(),
                seed: self.seed,
                idx,
                process: e.id.process,
                seq: e.id.seq,
                kind: e.kind,
                counterpart: e.counterpart,
                lamport: e.lamport,
                vclock: e.vclock.clone(),
                payload: e.payload.clone(),
            };
            out.push_str(&serde_json::to_string(&record).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }

    /// Parses JSON Lines produced by [`Trace::to_jsonl`]. The process count is
    /// taken from the vector-clock width.
    pub fn from_jsonl(text: &str) -> Result<Self, TraceError> {
        let mut events = Vec::new();
        let mut scenario_id = String::new();
        let mut seed = 0;
        let mut width: Option<usize> = None;
        for (line_no, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: TraceRecord = serde_json::from_str(line).map_err(|e| TraceError::Parse {
                line: line_no + 1,
                reason: e.to_string(),
            })?;
            if r.idx != events.len() {
                return Err(TraceError::Parse {
                    line: line_no + 1,
                    reason: format!("idx {} out of order", r.idx),
                });
            }
            match width {
                None => width = Some(r.vclock.len()),
                Some(w) if w != r.vclock.len() => {
                    return Err(TraceError::Parse {
                        line: line_no + 1,
                        reason: "vector clocks of different widths".into(),
                    })
                }
                _ => {}
            }
            scenario_id = r.scenario_id;
            seed = r.seed;
            events.push(Event {
                id: EventId::new(r.process, r.seq),
                kind: r.kind,
                counterpart: r.counterpart,
                lamport: r.lamport,
                vclock: r.vclock,
                payload: r.payload,
            });
        }
        let n_procs = width
            .unwrap_or(0)
            .max(events.iter().map(|e| e.id.process + 1).max().unwrap_or(0));
        Trace::new(scenario_id, seed, n_procs, events)
    }
}

/// One line of the JSON Lines trace format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub scenario_id: String,
    pub seed: u64,
    pub idx: usize,
    pub process: ProcessId,
    pub seq: u32,
    pub kind: EventKind,
    pub counterpart: Option<EventId>,
    pub lamport: u64,
    pub vclock: Vec<u64>,
    pub payload: String,
}

/// Direct causal edges: process order, Send to Receive, and for a completed
/// transaction, each endpoint's previous event to the partner's TxnComplete.
fn build_successors(events: &[Event], index: &HashMap<EventId, usize>) -> Vec<Vec<usize>> {
    let mut succ = vec![Vec::new(); events.len()];
    let prev_of = |id: EventId| -> Option<usize> {
        id.seq
            .checked_sub(1)
            .and_then(|s| index.get(&EventId::new(id.process, s)).copied())
    };
    for (i, e) in events.iter().enumerate() {
        if let Some(p) = prev_of(e.id) {
            succ[p].push(i);
        }
        match e.kind {
            EventKind::Receive => {
                let s = index[&e.counterpart.expect("validated")];
                succ[s].push(i);
            }
            EventKind::TxnComplete => {
                let partner = e.counterpart.expect("validated");
                if let Some(p) = prev_of(partner) {
                    succ[p].push(i);
                }
            }
            _ => {}
        }
    }
    succ
}

/// Lamport's happened-before, extended so that a completed transaction orders
/// each endpoint's earlier events before the other endpoint's TxnComplete and
/// everything after it. Irreflexive: `happened_before(t, a, a)` is false.
pub fn happened_before(trace: &Trace, a: EventId, b: EventId) -> Result<bool, TraceError> {
    let from = trace.position(a).ok_or(TraceError::UnknownEvent(a))?;
    let to = trace.position(b).ok_or(TraceError::UnknownEvent(b))?;
    if from == to {
        return Ok(false);
    }
    let mut seen = vec![false; trace.len()];
    let mut queue = VecDeque::from([from]);
    while let Some(i) = queue.pop_front() {
        for &j in trace.successors(i) {
            if j == to {
                return Ok(true);
            }
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    Ok(false)
}
