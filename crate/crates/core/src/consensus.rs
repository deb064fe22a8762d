//! Consensus protocols over each primitive and an exhaustive / randomized
//! checker for agreement, validity, termination and wait-freedom.
//!
//! The read/write family ships two protocols. `rw` decides after one write
//! and one read and admits disagreement. `rw-adopt` never disagrees, but a
//! contending pair can keep adopting each other's value forever; it is the
//! target for the bivalency hunt.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{random_run, Protocol, Schedule, SchedulerAction};
use crate::kernel::{
    CellId, CellSpec, Configuration, ProcessId, SimError, SubstrateKind, TxnId, Value,
};
use crate::substrates::show;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Primitive {
    ReadWrite,
    Cas,
    M2MSwap,
    Bilateral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Variant {
    RwRacing,
    RwAdopt,
    Cas,
    Swap,
    Bilateral,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConsensusError {
    #[error("protocol {protocol} runs {expected} processes, got {got} inputs")]
    InputArity {
        protocol: String,
        expected: usize,
        got: usize,
    },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Deterministic per-process program over one primitive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsensusProtocol {
    name: String,
    primitive: Primitive,
    n_procs: usize,
    variant: Variant,
}

const DECISION_CELL: CellId = 0;

fn private_cell(p: ProcessId) -> CellId {
    1 + p as CellId
}

impl ConsensusProtocol {
    /// Write own input to own register, read the other's; if it is empty
    /// decide own input, otherwise decide whatever is in P0's register.
    pub fn rw_racing() -> Self {
        Self::make("rw", Primitive::ReadWrite, 2, Variant::RwRacing)
    }

    /// Write preference, read the other's register; decide on empty or equal,
    /// adopt the other's value and retry on conflict.
    pub fn rw_adopt() -> Self {
        Self::make("rw-adopt", Primitive::ReadWrite, 2, Variant::RwAdopt)
    }

    /// `cas(D: ⊥ -> input)`, then read `D` and decide it. Any `n`.
    pub fn cas(n: usize) -> Self {
        Self::make("cas", Primitive::Cas, n, Variant::Cas)
    }

    /// Swap the private input cell with shared `D`; decide own input on
    /// receiving ⊥, else the received value. Only the two-process instance.
    pub fn swap(n: usize) -> Result<Self, ConsensusError> {
        if n != 2 {
            return Err(ConsensusError::Unsupported(format!(
                "memory-to-memory swap consensus is shipped for 2 processes, not {n}"
            )));
        }
        Ok(Self::make("swap", Primitive::M2MSwap, 2, Variant::Swap))
    }

    /// Repeated bilateral attempts exchanging inputs; on completion both
    /// decide the minimum.
    pub fn bilateral() -> Self {
        Self::make("bilateral", Primitive::Bilateral, 2, Variant::Bilateral)
    }

    pub fn by_name(name: &str, n_procs: usize) -> Result<Self, ConsensusError> {
        let fixed = |p: Self| {
            if n_procs == p.n_procs {
                Ok(p)
            } else {
                Err(ConsensusError::Unsupported(format!(
                    "{name} is defined for {} processes",
                    p.n_procs
                )))
            }
        };
        match name {
            "rw" | "rw-racing" => fixed(Self::rw_racing()),
            "rw-adopt" => fixed(Self::rw_adopt()),
            "cas" if n_procs >= 1 => Ok(Self::cas(n_procs)),
            "swap" => Self::swap(n_procs),
            "bilateral" => fixed(Self::bilateral()),
            other => Err(ConsensusError::Unsupported(format!(
                "unknown protocol {other}"
            ))),
        }
    }

    fn make(name: &str, primitive: Primitive, n_procs: usize, variant: Variant) -> Self {
        Self {
            name: name.to_string(),
            primitive,
            n_procs,
            variant,
        }
    }

    pub fn primitive(&self) -> Primitive {
        self.primitive
    }

    pub fn n_procs(&self) -> usize {
        self.n_procs
    }

    /// Own steps within which every process must decide, when the protocol
    /// claims wait-freedom.
    pub fn wait_free_bound(&self) -> Option<u32> {
        match self.variant {
            Variant::Bilateral => None,
            _ => Some(2),
        }
    }

    pub fn natural_substrate(&self) -> SubstrateKind {
        match self.variant {
            Variant::RwRacing | Variant::RwAdopt => SubstrateKind::Fito,
            Variant::Cas | Variant::Swap | Variant::Bilateral => SubstrateKind::Bilateral,
        }
    }

    pub fn cells(&self, inputs: &[Value]) -> Vec<CellSpec> {
        match self.variant {
            Variant::RwRacing | Variant::RwAdopt => {
                (0..2).map(|p| CellSpec::shared(p as CellId)).collect()
            }
            Variant::Cas => vec![CellSpec::shared(DECISION_CELL)],
            Variant::Swap => std::iter::once(CellSpec::shared(DECISION_CELL))
                .chain(
                    inputs
                        .iter()
                        .enumerate()
                        .map(|(p, &v)| CellSpec::private(private_cell(p), p, Some(v))),
                )
                .collect(),
            Variant::Bilateral => Vec::new(),
        }
    }

    pub fn initial(&self, inputs: &[Value]) -> Result<Configuration, ConsensusError> {
        self.initial_on(self.natural_substrate(), inputs)
    }

    pub fn initial_on(
        &self,
        kind: SubstrateKind,
        inputs: &[Value],
    ) -> Result<Configuration, ConsensusError> {
        if inputs.len() != self.n_procs {
            return Err(ConsensusError::InputArity {
                protocol: self.name.clone(),
                expected: self.n_procs,
                got: inputs.len(),
            });
        }
        if self.variant == Variant::Bilateral && kind != SubstrateKind::Bilateral {
            return Err(ConsensusError::Unsupported(
                "the bilateral protocol needs the bilateral substrate".into(),
            ));
        }
        let mut c = Configuration::new(kind, self.n_procs, &self.cells(inputs))?;
        for (p, &v) in inputs.iter().enumerate() {
            let s = c.proc_mut(p);
            s.input = Some(v);
            s.pref = Some(v);
        }
        Ok(c)
    }

    fn pending_txn(config: &Configuration) -> Option<TxnId> {
        config
            .transactions()
            .into_iter()
            .find(|t| t.outcome == crate::substrates::TxnStatus::Pending)
            .map(|t| t.txn_id)
    }
}

impl Protocol for ConsensusProtocol {
    fn name(&self) -> &str {
        &self.name
    }

    fn enabled(&self, config: &Configuration) -> Vec<SchedulerAction> {
        let undecided = (0..self.n_procs).filter(|&p| config.procs()[p].decision.is_none());
        if self.variant != Variant::Bilateral {
            return undecided
                .map(|process| SchedulerAction::ProcStep { process })
                .collect();
        }
        if let Some(txn_id) = Self::pending_txn(config) {
            let t = config.transaction(txn_id).expect("pending txn exists");
            let mut actions = Vec::with_capacity(2);
            if config.connected(t.endpoint_a, t.endpoint_b) {
                actions.push(SchedulerAction::TxnDecide {
                    txn_id,
                    outcome: crate::kernel::Outcome::Completed,
                });
            }
            actions.push(SchedulerAction::TxnDecide {
                txn_id,
                outcome: crate::kernel::Outcome::NotOccurred,
            });
            return actions;
        }
        undecided
            .map(|process| SchedulerAction::ProcStep { process })
            .collect()
    }

    fn proc_step(&self, config: &Configuration, p: ProcessId) -> Result<Configuration, SimError> {
        config.check_process(p)?;
        let me = &config.procs()[p];
        if me.decision.is_some() {
            return Err(SimError::InvalidSchedule(format!(
                "P{p} has already decided"
            )));
        }
        let input = me.input.expect("inputs are set at initialization");
        let pref = me.pref.unwrap_or(input);
        let other = 1 - p.min(1);

        let mut next = match (self.variant, me.pc) {
            (Variant::RwRacing, 0) | (Variant::RwAdopt, 0) => {
                let mut n = config.cell_write(p, p as CellId, pref)?;
                n.proc_mut(p).pc = 1;
                n
            }
            (Variant::RwRacing, _) => {
                let seen = config.cell_read(p, other as CellId)?;
                let decided = match seen {
                    None => input,
                    Some(_) => config.cell_read(p, 0)?.expect("P0 wrote before being seen"),
                };
                let mut n = config.local_event(
                    p,
                    &format!("read c{other}={}; decide {decided}", show(seen)),
                )?;
                n.proc_mut(p).own_steps += 1;
                n.proc_mut(p).decide(decided);
                return Ok(n);
            }
            (Variant::RwAdopt, _) => {
                let seen = config.cell_read(p, other as CellId)?;
                let mut n;
                match seen {
                    None => {
                        n = config.local_event(p, &format!("read c{other}=⊥; decide {pref}"))?;
                        n.proc_mut(p).own_steps += 1;
                        n.proc_mut(p).decide(pref);
                        return Ok(n);
                    }
                    Some(v) if v == pref => {
                        n = config.local_event(p, &format!("read c{other}={v}; decide {v}"))?;
                        n.proc_mut(p).own_steps += 1;
                        n.proc_mut(p).decide(v);
                        return Ok(n);
                    }
                    Some(v) => {
                        n = config.local_event(p, &format!("read c{other}={v}; adopt {v}"))?;
                        let s = n.proc_mut(p);
                        s.pref = Some(v);
                        s.pc = 0;
                    }
                }
                n
            }
            (Variant::Cas, 0) => {
                let (mut n, _) = config.cell_cas(p, DECISION_CELL, None, Some(input))?;
                n.proc_mut(p).pc = 1;
                n
            }
            (Variant::Cas, _) => {
                let v = config
                    .cell_read(p, DECISION_CELL)?
                    .expect("some cas succeeded before any read");
                let mut n = config.local_event(p, &format!("read c0={v}; decide {v}"))?;
                n.proc_mut(p).own_steps += 1;
                n.proc_mut(p).decide(v);
                return Ok(n);
            }
            (Variant::Swap, 0) => {
                let mut n = config.cell_swap(p, private_cell(p), DECISION_CELL)?;
                n.proc_mut(p).pc = 1;
                n
            }
            (Variant::Swap, _) => {
                let cell = private_cell(p);
                let got = config.cell_read(p, cell)?;
                let decided = got.unwrap_or(input);
                let mut n = config
                    .local_event(p, &format!("read c{cell}={}; decide {decided}", show(got)))?;
                n.proc_mut(p).own_steps += 1;
                n.proc_mut(p).decide(decided);
                return Ok(n);
            }
            (Variant::Bilateral, _) => {
                if Self::pending_txn(config).is_some() {
                    return Err(SimError::InvalidSchedule(
                        "an attempt is already pending".into(),
                    ));
                }
                let peer = 1 - p;
                let peer_input = config.procs()[peer].input.expect("inputs set");
                let (n, _) = config.bilateral_propose(p, peer, input, peer_input)?;
                n
            }
        };
        next.proc_mut(p).own_steps += 1;
        Ok(next)
    }

    fn on_commit(&self, mut config: Configuration, txn_id: TxnId) -> Configuration {
        let t = config
            .transaction(txn_id)
            .expect("committed txn exists")
            .clone();
        for p in [t.endpoint_a, t.endpoint_b] {
            let s = config.proc_mut(p);
            let mine = s.input.expect("inputs set");
            let theirs = s.held.expect("exchange completed");
            s.decide(mine.min(theirs));
        }
        config
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViolationKind {
    Agreement,
    Validity,
    /// A reachable configuration where undecided processes can take no step.
    Termination,
    /// A process used up its wait-free step budget without deciding.
    WaitFreedom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CheckMode {
    Exhaustive { depth: usize },
    Random { seeds: u64, max_len: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusOutcome {
    pub decisions: Vec<Option<Value>>,
    pub steps_taken: usize,
    pub violated: Option<ViolationKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub kind: ViolationKind,
    pub schedule: Schedule,
    pub outcome: ConsensusOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusReport {
    pub protocol: String,
    pub inputs: Vec<Value>,
    pub mode: CheckMode,
    /// Maximal runs examined (leaves of the schedule tree, or random walks).
    pub runs: usize,
    /// Number of runs exhibiting each kind of violation.
    pub violations: BTreeMap<ViolationKind, usize>,
    /// First witness found for each kind, in discovery order.
    pub witnesses: Vec<Witness>,
    /// Runs cut off by the bound with some process still undecided.
    pub termination_unknown: usize,
    pub max_own_steps_to_decide: Option<u32>,
}

impl ConsensusReport {
    /// No violation of any kind in the explored space. Bounded runs that
    /// simply have not decided yet do not count against certification.
    pub fn certified(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first_violation(&self) -> Option<&Witness> {
        self.witnesses.first()
    }

    pub fn witness(&self, kind: ViolationKind) -> Option<&Witness> {
        self.witnesses.iter().find(|w| w.kind == kind)
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.get(&kind).copied().unwrap_or(0)
    }
}

struct Checker<'a> {
    protocol: &'a ConsensusProtocol,
    inputs: &'a [Value],
    report: ConsensusReport,
}

impl Checker<'_> {
    fn violations_at(&self, c: &Configuration) -> Vec<ViolationKind> {
        let mut found = Vec::new();
        let decided: Vec<Value> = c.procs().iter().filter_map(|s| s.decision).collect();
        if decided.windows(2).any(|w| w[0] != w[1]) {
            found.push(ViolationKind::Agreement);
        }
        if decided.iter().any(|v| !self.inputs.contains(v)) {
            found.push(ViolationKind::Validity);
        }
        if let Some(bound) = self.protocol.wait_free_bound() {
            if c.procs()
                .iter()
                .any(|s| s.decision.is_none() && s.own_steps >= bound)
            {
                found.push(ViolationKind::WaitFreedom);
            }
        }
        found
    }

    fn outcome(
        c: &Configuration,
        steps: usize,
        violated: Option<ViolationKind>,
    ) -> ConsensusOutcome {
        ConsensusOutcome {
            decisions: c.procs().iter().map(|s| s.decision).collect(),
            steps_taken: steps,
            violated,
        }
    }

    fn note(&mut self, kinds: &mut Vec<ViolationKind>, c: &Configuration, path: &Schedule) {
        for k in self.violations_at(c) {
            if !kinds.contains(&k) {
                kinds.push(k);
                if self.report.witness(k).is_none() {
                    self.report.witnesses.push(Witness {
                        kind: k,
                        schedule: path.clone(),
                        outcome: Self::outcome(c, path.len(), Some(k)),
                    });
                }
            }
        }
    }

    fn leaf(
        &mut self,
        c: &Configuration,
        path: &Schedule,
        mut kinds: Vec<ViolationKind>,
        exhausted: bool,
    ) {
        self.report.runs += 1;
        let undecided = c.procs().iter().any(|s| s.decision.is_none());
        if undecided {
            if exhausted {
                if !kinds.contains(&ViolationKind::Termination) {
                    kinds.push(ViolationKind::Termination);
                    if self.report.witness(ViolationKind::Termination).is_none() {
                        self.report.witnesses.push(Witness {
                            kind: ViolationKind::Termination,
                            schedule: path.clone(),
                            outcome: Self::outcome(c, path.len(), Some(ViolationKind::Termination)),
                        });
                    }
                }
            } else {
                self.report.termination_unknown += 1;
            }
        }
        for k in kinds {
            *self.report.violations.entry(k).or_default() += 1;
        }
        for s in c.procs() {
            if let Some(n) = s.decided_after {
                let m = self.report.max_own_steps_to_decide.get_or_insert(n);
                *m = (*m).max(n);
            }
        }
    }

    fn explore(
        &mut self,
        c: &Configuration,
        path: &mut Schedule,
        depth_left: usize,
        kinds: &[ViolationKind],
    ) {
        let mut kinds = kinds.to_vec();
        self.note(&mut kinds, c, path);
        let enabled = self.protocol.enabled(c);
        if enabled.is_empty() {
            self.leaf(c, path, kinds, true);
            return;
        }
        if depth_left == 0 {
            self.leaf(c, path, kinds, false);
            return;
        }
        for a in enabled {
            let next = self
                .protocol
                .apply(c, &a)
                .expect("enabled actions apply cleanly");
            path.push(a);
            self.explore(&next, path, depth_left - 1, &kinds);
            path.steps.pop();
        }
    }
}

/// Explores all schedules up to `depth` (or random walks per seed) from the
/// protocol's initial configuration on its natural substrate.
pub fn check_consensus(
    protocol: &ConsensusProtocol,
    inputs: &[Value],
    mode: CheckMode,
) -> Result<ConsensusReport, ConsensusError> {
    let initial = protocol.initial(inputs)?;
    Ok(check_consensus_from(protocol, &initial, inputs, mode))
}

pub fn check_consensus_from(
    protocol: &ConsensusProtocol,
    initial: &Configuration,
    inputs: &[Value],
    mode: CheckMode,
) -> ConsensusReport {
    let mut checker = Checker {
        protocol,
        inputs,
        report: ConsensusReport {
            protocol: protocol.name().to_string(),
            inputs: inputs.to_vec(),
            mode,
            runs: 0,
            violations: BTreeMap::new(),
            witnesses: Vec::new(),
            termination_unknown: 0,
            max_own_steps_to_decide: None,
        },
    };
    match mode {
        CheckMode::Exhaustive { depth } => {
            checker.explore(initial, &mut Schedule::default(), depth, &[]);
        }
        CheckMode::Random { seeds, max_len } => {
            for seed in 0..seeds {
                let mut kinds = Vec::new();
                let mut prefix = Schedule::default();
                let mut visited = Vec::new();
                let (schedule, last) = random_run(initial, protocol, seed, max_len, |c| {
                    visited.push(c.clone());
                });
                for (i, c) in visited.iter().enumerate() {
                    if i > 0 {
                        prefix.push(schedule.steps[i - 1].clone());
                    }
                    checker.note(&mut kinds, c, &prefix);
                }
                let exhausted = protocol.enabled(&last).is_empty();
                checker.leaf(&last, &schedule, kinds, exhausted);
            }
        }
    }
    checker.report
}

/// Runs one schedule and reports the outcome.
pub fn run_consensus(
    protocol: &ConsensusProtocol,
    inputs: &[Value],
    schedule: &Schedule,
) -> Result<ConsensusOutcome, ConsensusError> {
    let initial = protocol.initial(inputs)?;
    let end = crate::adversary::apply_schedule(protocol, &initial, schedule).map_err(|(_, e)| e)?;
    let report = check_consensus_from(protocol, &end, inputs, CheckMode::Exhaustive { depth: 0 });
    Ok(ConsensusOutcome {
        decisions: end.procs().iter().map(|s| s.decision).collect(),
        steps_taken: schedule.len(),
        violated: report.witnesses.first().map(|w| w.kind),
    })
}
