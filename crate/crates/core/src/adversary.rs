//! Schedules, the adversary's action space, and FLP-style valency analysis.
//!
//! Valency here is always relative to a step bound: a configuration is
//! bivalent when both decision values are reachable within `bound` further
//! scheduler actions.

use std::collections::{HashMap, HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{Configuration, MsgId, Outcome, ProcessId, SimError, StateKey, TxnId, Value};

/// Default exploration bound for enumeration and valency.
pub const DEFAULT_BOUND: usize = 12;

/// One adversary decision.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum SchedulerAction {
    DeliverMsg { msg_id: MsgId },
    DropMsg { msg_id: MsgId },
    ProcStep { process: ProcessId },
    TxnDecide { txn_id: TxnId, outcome: Outcome },
    Partition { cells: Vec<Vec<ProcessId>> },
    Heal,
}

impl SchedulerAction {
    /// True for actions that only make sense on the FITO substrate.
    pub fn is_message_action(&self) -> bool {
        matches!(
            self,
            SchedulerAction::DeliverMsg { .. } | SchedulerAction::DropMsg { .. }
        )
    }

    pub fn is_txn_action(&self) -> bool {
        matches!(self, SchedulerAction::TxnDecide { .. })
    }
}

impl std::fmt::Display for SchedulerAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SchedulerAction::DeliverMsg { msg_id } => write!(f, "deliver m{msg_id}"),
            SchedulerAction::DropMsg { msg_id } => write!(f, "drop m{msg_id}"),
            SchedulerAction::ProcStep { process } => write!(f, "step P{process}"),
            SchedulerAction::TxnDecide { txn_id, outcome } => {
                write!(f, "decide t{txn_id} {outcome:?}")
            }
            SchedulerAction::Partition { cells } => write!(f, "partition {cells:?}"),
            SchedulerAction::Heal => f.write_str("heal"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule {
    pub steps: Vec<SchedulerAction>,
}

impl Schedule {
    pub fn new(steps: Vec<SchedulerAction>) -> Self {
        Self { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn push(&mut self, a: SchedulerAction) {
        self.steps.push(a);
    }
}

impl std::fmt::Display for Schedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.steps.iter().map(|a| a.to_string()).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// A deterministic system driven by adversary actions. Nondeterminism lives
/// only in which enabled action the adversary picks.
pub trait Protocol {
    fn name(&self) -> &str;

    /// Valid actions in `config`, in a fixed order.
    fn enabled(&self, config: &Configuration) -> Vec<SchedulerAction>;

    /// Effect of scheduling process `p`.
    fn proc_step(&self, config: &Configuration, p: ProcessId) -> Result<Configuration, SimError>;

    /// Hook run in the same step as a transaction completing.
    fn on_commit(&self, config: Configuration, _txn_id: TxnId) -> Configuration {
        config
    }

    fn decision(&self, config: &Configuration, p: ProcessId) -> Option<Value> {
        config.procs().get(p).and_then(|s| s.decision)
    }

    fn apply(
        &self,
        config: &Configuration,
        action: &SchedulerAction,
    ) -> Result<Configuration, SimError> {
        match action {
            SchedulerAction::DeliverMsg { msg_id } => config.fito_deliver(*msg_id),
            SchedulerAction::DropMsg { msg_id } => config.fito_drop(*msg_id),
            SchedulerAction::ProcStep { process } => self.proc_step(config, *process),
            SchedulerAction::TxnDecide { txn_id, outcome } => {
                let next = config.bilateral_decide(*txn_id, *outcome)?;
                Ok(match outcome {
                    Outcome::Completed => self.on_commit(next, *txn_id),
                    Outcome::NotOccurred => next,
                })
            }
            SchedulerAction::Partition { cells } => config.with_partition(cells.clone()),
            SchedulerAction::Heal => {
                if config.partition().is_none() {
                    return Err(SimError::InvalidSchedule("heal without a partition".into()));
                }
                Ok(config.healed())
            }
        }
    }
}

/// Applies a schedule step by step. On failure reports the offending index.
pub fn apply_schedule<P: Protocol + ?Sized>(
    protocol: &P,
    config: &Configuration,
    schedule: &Schedule,
) -> Result<Configuration, (usize, SimError)> {
    let mut c = config.clone();
    for (i, a) in schedule.steps.iter().enumerate() {
        c = protocol.apply(&c, a).map_err(|e| (i, e))?;
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Valency {
    Bivalent,
    ZeroValent,
    OneValent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValencyReport {
    pub classification: Valency,
    pub witness_0: Option<Schedule>,
    pub witness_1: Option<Schedule>,
    /// Distinct configurations visited.
    pub explored: usize,
    /// Whether undecided configurations were cut off at the bound.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdversaryError {
    #[error("depth {depth} exceeds the enumeration bound {bound} (~{estimate} schedules)")]
    BoundExceeded {
        depth: usize,
        bound: usize,
        estimate: u128,
    },
    #[error("no decision reachable within {bound} steps; valency unknown")]
    ValencyUnknown { bound: usize },
    #[error("decision value {0} is not binary")]
    NonBinaryDecision(Value),
    #[error("no bivalency-preserving extension at depth {0}")]
    BivalencyExhausted(usize),
    #[error("starting configuration is {0:?}, not bivalent")]
    NotBivalent(Valency),
}

/// Lazily yields every valid schedule of length `<= depth` in depth-first
/// pre-order (parents before children, enabled actions in protocol order).
pub fn enumerate_schedules<'a, P: Protocol + ?Sized>(
    config: &Configuration,
    protocol: &'a P,
    depth: usize,
) -> Result<ScheduleIter<'a, P>, AdversaryError> {
    enumerate_schedules_within(config, protocol, depth, DEFAULT_BOUND)
}

pub fn enumerate_schedules_within<'a, P: Protocol + ?Sized>(
    config: &Configuration,
    protocol: &'a P,
    depth: usize,
    bound: usize,
) -> Result<ScheduleIter<'a, P>, AdversaryError> {
    if depth > bound {
        let branching = protocol.enabled(config).len().max(1) as u128;
        let estimate = (0..=depth as u32).fold(0u128, |acc, k| {
            acc.saturating_add(branching.saturating_pow(k))
        });
        return Err(AdversaryError::BoundExceeded {
            depth,
            bound,
            estimate,
        });
    }
    Ok(ScheduleIter {
        protocol,
        depth,
        stack: vec![(config.clone(), Schedule::default())],
    })
}

pub struct ScheduleIter<'a, P: Protocol + ?Sized> {
    protocol: &'a P,
    depth: usize,
    stack: Vec<(Configuration, Schedule)>,
}

impl<P: Protocol + ?Sized> Iterator for ScheduleIter<'_, P> {
    type Item = Schedule;

    fn next(&mut self) -> Option<Schedule> {
        let (config, prefix) = self.stack.pop()?;
        if prefix.len() < self.depth {
            let children: Vec<_> = self
                .protocol
                .enabled(&config)
                .into_iter()
                .filter_map(|a| {
                    let next = self.protocol.apply(&config, &a).ok()?;
                    let mut s = prefix.clone();
                    s.push(a);
                    Some((next, s))
                })
                .collect();
            self.stack.extend(children.into_iter().rev());
        }
        Some(prefix)
    }
}

fn decisions<P: Protocol + ?Sized>(protocol: &P, config: &Configuration) -> Vec<Value> {
    (0..config.n_procs())
        .filter_map(|p| protocol.decision(config, p))
        .collect()
}

pub fn classify_valency<P: Protocol + ?Sized>(
    config: &Configuration,
    protocol: &P,
) -> Result<ValencyReport, AdversaryError> {
    classify_valency_within(config, protocol, DEFAULT_BOUND)
}

/// Breadth-first reachability over deduplicated states. Witnesses are
/// shortest schedules reaching a configuration where some process decided
/// the value.
pub fn classify_valency_within<P: Protocol + ?Sized>(
    config: &Configuration,
    protocol: &P,
    bound: usize,
) -> Result<ValencyReport, AdversaryError> {
    let mut witness: [Option<Schedule>; 2] = [None, None];
    let mut seen: HashSet<StateKey> = HashSet::from([config.state_key()]);
    let mut queue = VecDeque::from([(config.clone(), Schedule::default())]);
    let mut truncated = false;

    while let Some((c, path)) = queue.pop_front() {
        for v in decisions(protocol, &c) {
            let slot = match v {
                0 => 0,
                1 => 1,
                other => return Err(AdversaryError::NonBinaryDecision(other)),
            };
            witness[slot].get_or_insert_with(|| path.clone());
        }
        if witness.iter().all(Option::is_some) {
            break;
        }
        let enabled = protocol.enabled(&c);
        if path.len() >= bound {
            truncated |= !enabled.is_empty();
            continue;
        }
        for a in enabled {
            let Ok(next) = protocol.apply(&c, &a) else {
                continue;
            };
            if seen.insert(next.state_key()) {
                let mut p = path.clone();
                p.push(a);
                queue.push_back((next, p));
            }
        }
    }

    let [w0, w1] = witness;
    let classification = match (&w0, &w1) {
        (Some(_), Some(_)) => Valency::Bivalent,
        (Some(_), None) => Valency::ZeroValent,
        (None, Some(_)) => Valency::OneValent,
        (None, None) => return Err(AdversaryError::ValencyUnknown { bound }),
    };
    Ok(ValencyReport {
        classification,
        witness_0: w0,
        witness_1: w1,
        explored: seen.len(),
        truncated,
    })
}

/// The FLP adversary at desk scale: searches for a schedule of exactly
/// `max_steps` actions whose every prefix leaves the configuration bivalent
/// (valency judged with the default lookahead bound).
pub fn bivalency_hunt<P: Protocol + ?Sized>(
    protocol: &P,
    initial: &Configuration,
    max_steps: usize,
) -> Result<Schedule, AdversaryError> {
    bivalency_hunt_within(protocol, initial, max_steps, DEFAULT_BOUND)
}

pub fn bivalency_hunt_within<P: Protocol + ?Sized>(
    protocol: &P,
    initial: &Configuration,
    max_steps: usize,
    lookahead: usize,
) -> Result<Schedule, AdversaryError> {
    let start = classify_valency_within(initial, protocol, lookahead)?;
    if start.classification != Valency::Bivalent {
        return Err(AdversaryError::NotBivalent(start.classification));
    }
    let mut hunt = Hunt {
        protocol,
        lookahead,
        valency: HashMap::new(),
        dead: HashSet::new(),
        deepest: 0,
    };
    let mut path = Schedule::default();
    if hunt.extend(initial, &mut path, max_steps) {
        Ok(path)
    } else {
        Err(AdversaryError::BivalencyExhausted(hunt.deepest + 1))
    }
}

struct Hunt<'a, P: Protocol + ?Sized> {
    protocol: &'a P,
    lookahead: usize,
    valency: HashMap<StateKey, bool>,
    dead: HashSet<(StateKey, usize)>,
    deepest: usize,
}

impl<P: Protocol + ?Sized> Hunt<'_, P> {
    fn bivalent(&mut self, c: &Configuration) -> bool {
        let key = c.state_key();
        if let Some(&b) = self.valency.get(&key) {
            return b;
        }
        let b = matches!(
            classify_valency_within(c, self.protocol, self.lookahead),
            Ok(ValencyReport {
                classification: Valency::Bivalent,
                ..
            })
        );
        self.valency.insert(key, b);
        b
    }

    fn extend(&mut self, c: &Configuration, path: &mut Schedule, remaining: usize) -> bool {
        self.deepest = self.deepest.max(path.len());
        if remaining == 0 {
            return true;
        }
        let key = (c.state_key(), remaining);
        if self.dead.contains(&key) {
            return false;
        }
        for a in self.protocol.enabled(c) {
            let Ok(next) = self.protocol.apply(c, &a) else {
                continue;
            };
            if !self.bivalent(&next) {
                continue;
            }
            path.push(a);
            if self.extend(&next, path, remaining - 1) {
                return true;
            }
            path.steps.pop();
        }
        self.dead.insert(key);
        false
    }
}

/// Uniformly random walk over enabled actions, deterministic per seed.
pub fn random_schedule<P: Protocol + ?Sized>(
    config: &Configuration,
    protocol: &P,
    seed: u64,
    length: usize,
) -> Schedule {
    random_run(config, protocol, seed, length, |_| {}).0
}

/// Random walk that hands every visited configuration (including the start)
/// to `visit`. Stops early when no action is enabled.
pub fn random_run<P: Protocol + ?Sized>(
    config: &Configuration,
    protocol: &P,
    seed: u64,
    length: usize,
    mut visit: impl FnMut(&Configuration),
) -> (Schedule, Configuration) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = config.clone();
    let mut schedule = Schedule::default();
    visit(&c);
    for _ in 0..length {
        let enabled = protocol.enabled(&c);
        if enabled.is_empty() {
            break;
        }
        let a = enabled[rng.gen_range(0..enabled.len())].clone();
        c = protocol
            .apply(&c, &a)
            .expect("enabled actions apply cleanly");
        schedule.push(a);
        visit(&c);
    }
    (schedule, c)
}
