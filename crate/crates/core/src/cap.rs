//! A two-replica register under partition, run three ways: FITO with local
//! acceptance, FITO with refusal, and bilateral writes.
//!
//! Replicas are processes 0 and 1. Clients are processes 2 and up, each bound
//! to a single replica and always on that replica's side of the partition.
//! Each workload op is one logical step; the partition covers ops whose index
//! falls in `[start, end)`. Every op leaves a `op=<i> ...` marker at a
//! replica so the trace can be replayed at op granularity.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{
    Configuration, EventKind, Outcome, ProcessId, SubstrateKind, Trace, Value, MAX_PROCS,
};
use crate::substrates::show;

pub const REPLICAS: [ProcessId; 2] = [0, 1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapMode {
    FitoAp,
    FitoCp,
    Bilateral,
}

impl CapMode {
    pub fn substrate(self) -> SubstrateKind {
        match self {
            CapMode::FitoAp | CapMode::FitoCp => SubstrateKind::Fito,
            CapMode::Bilateral => SubstrateKind::Bilateral,
        }
    }
}

impl std::str::FromStr for CapMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fito-ap" => Ok(CapMode::FitoAp),
            "fito-cp" => Ok(CapMode::FitoCp),
            "bilateral" => Ok(CapMode::Bilateral),
            other => Err(format!("unknown cap mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CapOp {
    Read,
    Write(Value),
    Txn { peer_node: ProcessId, value: Value },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientOp {
    pub client: ProcessId,
    pub target_node: ProcessId,
    pub op: CapOp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionWindow {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workload {
    pub ops: Vec<ClientOp>,
    #[serde(default)]
    pub partition_window: Option<PartitionWindow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CapMetrics {
    /// Ops after which the replicas' committed values differ.
    pub divergence_events: usize,
    pub refused_requests: usize,
    pub not_occurred_txns: usize,
    pub final_consistent: bool,
    pub final_values: [Option<Value>; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub start: usize,
    /// Exclusive; `None` when the divergence lasts to the end of the run.
    pub end: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CapError {
    #[error("op {op}: target {node} is not a replica")]
    NotAReplica { op: usize, node: ProcessId },
    #[error("op {op}: client {client} must not be a replica")]
    ClientIsReplica { op: usize, client: ProcessId },
    #[error("op {op}: client {client} is bound to replica {bound}, not {node}")]
    ClientRebound {
        op: usize,
        client: ProcessId,
        bound: ProcessId,
        node: ProcessId,
    },
    #[error("op {op}: peer {peer} must be the other replica")]
    BadPeer { op: usize, peer: ProcessId },
    #[error("op {op}: transactions need the bilateral mode")]
    TxnOnFito { op: usize },
    #[error("partition window [{start}, {end}) outside 0..={len}")]
    BadWindow {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("{0} processes exceed the simulator limit")]
    TooManyProcesses(usize),
}

impl Workload {
    fn validate(&self, mode: CapMode) -> Result<(usize, BTreeMap<ProcessId, ProcessId>), CapError> {
        let mut binding = BTreeMap::new();
        let mut n = REPLICAS.len();
        for (i, o) in self.ops.iter().enumerate() {
            if !REPLICAS.contains(&o.target_node) {
                return Err(CapError::NotAReplica {
                    op: i,
                    node: o.target_node,
                });
            }
            if REPLICAS.contains(&o.client) {
                return Err(CapError::ClientIsReplica {
                    op: i,
                    client: o.client,
                });
            }
            let bound = *binding.entry(o.client).or_insert(o.target_node);
            if bound != o.target_node {
                return Err(CapError::ClientRebound {
                    op: i,
                    client: o.client,
                    bound,
                    node: o.target_node,
                });
            }
            if let CapOp::Txn { peer_node, .. } = o.op {
                if mode != CapMode::Bilateral {
                    return Err(CapError::TxnOnFito { op: i });
                }
                if peer_node != other(o.target_node) {
                    return Err(CapError::BadPeer {
                        op: i,
                        peer: peer_node,
                    });
                }
            }
            n = n.max(o.client + 1);
        }
        if n > MAX_PROCS {
            return Err(CapError::TooManyProcesses(n));
        }
        if let Some(w) = self.partition_window {
            if w.start > w.end || w.end > self.ops.len() {
                return Err(CapError::BadWindow {
                    start: w.start,
                    end: w.end,
                    len: self.ops.len(),
                });
            }
        }
        Ok((n, binding))
    }

    fn partitioned_at(&self, i: usize) -> bool {
        self.partition_window
            .is_some_and(|w| w.start <= i && i < w.end)
    }
}

fn other(node: ProcessId) -> ProcessId {
    1 - node
}

/// One write per side while the replicas are cut off for the whole run.
pub fn conflicting_writes() -> Workload {
    Workload {
        ops: vec![
            ClientOp {
                client: 2,
                target_node: 0,
                op: CapOp::Write(1),
            },
            ClientOp {
                client: 3,
                target_node: 1,
                op: CapOp::Write(2),
            },
        ],
        partition_window: Some(PartitionWindow { start: 0, end: 2 }),
    }
}

/// Random valid workload: clients 2..6 bound to alternating replicas.
pub fn random_workload(seed: u64, n_ops: usize, mode: CapMode) -> Workload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ops = (0..n_ops)
        .map(|_| {
            let client = rng.gen_range(2..6);
            let target_node = client % 2;
            let value = rng.gen_range(0..10);
            let op = match rng.gen_range(0..if mode == CapMode::Bilateral { 3 } else { 2 }) {
                0 => CapOp::Read,
                1 => CapOp::Write(value),
                _ => CapOp::Txn {
                    peer_node: other(target_node),
                    value,
                },
            };
            ClientOp {
                client,
                target_node,
                op,
            }
        })
        .collect();
    let a = rng.gen_range(0..=n_ops);
    let b = rng.gen_range(0..=n_ops);
    Workload {
        ops,
        partition_window: Some(PartitionWindow {
            start: a.min(b),
            end: a.max(b),
        }),
    }
}

struct Run {
    config: Configuration,
    committed: [Option<Value>; 2],
    metrics: CapMetrics,
}

impl Run {
    fn marker(&mut self, node: ProcessId, text: String) {
        self.config = self
            .config
            .local_event(node, &text)
            .expect("replica exists");
    }

    fn message(&mut self, from: ProcessId, to: ProcessId, v: Value, deliver: bool) {
        let (c, m) = self.config.fito_send(from, to, v).expect("fito");
        self.config = if deliver {
            c.fito_deliver(m).expect("co-partitioned")
        } else {
            c.fito_drop(m).expect("in flight")
        };
    }

    fn exchange(
        &mut self,
        a: ProcessId,
        b: ProcessId,
        va: Value,
        vb: Value,
        connected: bool,
    ) -> bool {
        let outcome = if connected {
            Outcome::Completed
        } else {
            Outcome::NotOccurred
        };
        self.config = self
            .config
            .bilateral_attempt(a, b, va, vb, outcome)
            .expect("bilateral");
        connected
    }

    fn commit(&mut self, i: usize, node: ProcessId, v: Value) {
        self.committed[node] = Some(v);
        self.marker(node, format!("op={i} commit={v}"));
    }

    fn fito_op(&mut self, mode: CapMode, i: usize, o: &ClientOp, cut: bool) {
        let node = o.target_node;
        let request = match o.op {
            CapOp::Write(v) => v,
            _ => 0,
        };
        self.message(o.client, node, request, true);
        if cut && mode == CapMode::FitoCp {
            self.metrics.refused_requests += 1;
            self.marker(node, format!("op={i} refused"));
            self.message(node, o.client, 0, true);
            return;
        }
        match o.op {
            CapOp::Read => {
                let v = self.committed[node];
                self.marker(node, format!("op={i} read={}", show(v)));
                self.message(node, o.client, v.unwrap_or(0), true);
            }
            CapOp::Write(v) => {
                self.commit(i, node, v);
                self.message(node, o.client, v, true);
                self.message(node, other(node), v, !cut);
                if !cut {
                    self.commit(i, other(node), v);
                }
            }
            CapOp::Txn { .. } => unreachable!("rejected by validation"),
        }
    }

    fn bilateral_op(&mut self, i: usize, o: &ClientOp, cut: bool) {
        let node = o.target_node;
        let held = self.committed[node].unwrap_or(0);
        match o.op {
            CapOp::Read => {
                self.exchange(o.client, node, 0, held, true);
                self.marker(node, format!("op={i} read={}", show(self.committed[node])));
            }
            CapOp::Write(v) | CapOp::Txn { value: v, .. } => {
                self.exchange(o.client, node, v, held, true);
                let peer = other(node);
                let peer_held = self.committed[peer].unwrap_or(0);
                if self.exchange(node, peer, v, peer_held, !cut) {
                    self.commit(i, node, v);
                    self.commit(i, peer, v);
                } else {
                    self.metrics.not_occurred_txns += 1;
                    self.marker(node, format!("op={i} not-occurred"));
                }
            }
        }
    }
}

/// Final configuration and metrics of a workload run.
pub fn run_cap_config(
    mode: CapMode,
    workload: &Workload,
) -> Result<(Configuration, CapMetrics), CapError> {
    let (n, binding) = workload.validate(mode)?;
    let config = Configuration::new(mode.substrate(), n, &[]).expect("validated size");
    let mut run = Run {
        config,
        committed: [None, None],
        metrics: CapMetrics::default(),
    };
    let cells: Vec<Vec<ProcessId>> = REPLICAS
        .iter()
        .map(|&r| {
            let mut side = vec![r];
            side.extend((2..n).filter(|c| binding.get(c).copied().unwrap_or(0) == r));
            side
        })
        .collect();

    for (i, o) in workload.ops.iter().enumerate() {
        let cut = workload.partitioned_at(i);
        match (cut, run.config.partition().is_some()) {
            (true, false) => {
                run.config = run
                    .config
                    .with_partition(cells.clone())
                    .expect("valid cells")
            }
            (false, true) => run.config = run.config.healed(),
            _ => {}
        }
        match mode {
            CapMode::Bilateral => run.bilateral_op(i, o, cut),
            _ => run.fito_op(mode, i, o, cut),
        }
        if run.committed[0] != run.committed[1] {
            run.metrics.divergence_events += 1;
        }
    }
    if run.config.partition().is_some() {
        run.config = run.config.healed();
    }
    run.metrics.final_values = run.committed;
    run.metrics.final_consistent = run.committed[0] == run.committed[1];
    Ok((run.config, run.metrics))
}

pub fn run_cap(mode: CapMode, workload: &Workload) -> Result<(Trace, CapMetrics), CapError> {
    let (config, metrics) = run_cap_config(mode, workload)?;
    Ok((config.trace("cap", 0), metrics))
}

fn parse_marker(payload: &str) -> Option<(usize, Option<Value>)> {
    let mut parts = payload.split(' ');
    let op = parts.next()?.strip_prefix("op=")?.parse().ok()?;
    let commit = parts
        .next()
        .and_then(|p| p.strip_prefix("commit="))
        .and_then(|v| v.parse().ok());
    Some((op, commit))
}

/// Replays replica commit markers and returns the op intervals during which
/// the two replicas hold different committed values.
pub fn snapshot_consistency(trace: &Trace) -> Vec<Interval> {
    let mut commits: BTreeMap<usize, Vec<(ProcessId, Value)>> = BTreeMap::new();
    let mut n_ops = 0;
    for e in trace.events() {
        if e.kind != EventKind::Local || !REPLICAS.contains(&e.id.process) {
            continue;
        }
        if let Some((op, commit)) = parse_marker(&e.payload) {
            n_ops = n_ops.max(op + 1);
            if let Some(v) = commit {
                commits.entry(op).or_default().push((e.id.process, v));
            }
        }
    }
    let mut replicas: [Option<Value>; 2] = [None, None];
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for op in 0..n_ops {
        for &(node, v) in commits.get(&op).into_iter().flatten() {
            replicas[node] = Some(v);
        }
        match (replicas[0] != replicas[1], open) {
            (true, None) => open = Some(op),
            (false, Some(start)) => {
                out.push(Interval {
                    start,
                    end: Some(op),
                });
                open = None;
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        out.push(Interval { start, end: None });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ap_diverges() {
        let (t, m) = run_cap(CapMode::FitoAp, &conflicting_writes()).unwrap();
        assert_eq!(m.divergence_events, 2);
        assert!(!m.final_consistent);
        assert_eq!(m.final_values, [Some(1), Some(2)]);
        assert_eq!(
            snapshot_consistency(&t),
            vec![Interval {
                start: 0,
                end: None
            }]
        );
    }

    #[test]
    fn cp_refuses() {
        let (t, m) = run_cap(CapMode::FitoCp, &conflicting_writes()).unwrap();
        assert_eq!(
            (m.divergence_events, m.refused_requests, m.not_occurred_txns),
            (0, 2, 0)
        );
        assert!(m.final_consistent);
        assert!(snapshot_consistency(&t).is_empty());
    }

    #[test]
    fn bilateral_stays_at_prior_state() {
        let (t, m) = run_cap(CapMode::Bilateral, &conflicting_writes()).unwrap();
        assert_eq!(
            (m.divergence_events, m.refused_requests, m.not_occurred_txns),
            (0, 0, 2)
        );
        assert!(m.final_consistent);
        assert_eq!(m.final_values, [None, None]);
        assert!(snapshot_consistency(&t).is_empty());
    }

    #[test]
    fn healed_ap_run_keeps_diverging_without_repair() {
        let mut w = conflicting_writes();
        w.ops.push(ClientOp {
            client: 2,
            target_node: 0,
            op: CapOp::Read,
        });
        w.partition_window = Some(PartitionWindow { start: 0, end: 2 });
        let (t, m) = run_cap(CapMode::FitoAp, &w).unwrap();
        assert!(!m.final_consistent);
        assert_eq!(
            snapshot_consistency(&t),
            vec![Interval {
                start: 0,
                end: None
            }]
        );
    }

    #[test]
    fn no_partition_no_divergence() {
        let mut w = conflicting_writes();
        w.partition_window = None;
        for mode in [CapMode::FitoAp, CapMode::FitoCp, CapMode::Bilateral] {
            let (t, m) = run_cap(mode, &w).unwrap();
            assert!(snapshot_consistency(&t).is_empty());
            assert_eq!(m.final_values, [Some(2), Some(2)]);
        }
    }

    #[test]
    fn malformed_workloads() {
        let mut w = conflicting_writes();
        w.ops[0].op = CapOp::Txn {
            peer_node: 1,
            value: 3,
        };
        assert_eq!(
            run_cap(CapMode::FitoAp, &w).unwrap_err(),
            CapError::TxnOnFito { op: 0 }
        );
        assert!(run_cap(CapMode::Bilateral, &w).is_ok());
        w.ops[0].target_node = 4;
        assert!(matches!(
            run_cap(CapMode::Bilateral, &w),
            Err(CapError::NotAReplica { .. })
        ));
        let mut w = conflicting_writes();
        w.ops[1].client = 2;
        assert!(matches!(
            run_cap(CapMode::FitoAp, &w),
            Err(CapError::ClientRebound { .. })
        ));
        let mut w = conflicting_writes();
        w.partition_window = Some(PartitionWindow { start: 1, end: 5 });
        assert!(matches!(
            run_cap(CapMode::FitoAp, &w),
            Err(CapError::BadWindow { .. })
        ));
    }

    #[test]
    fn workload_json() {
        let w: Workload = serde_json::from_str(
            r#"{"ops":[{"client":2,"target_node":0,"op":{"write":7}},
                       {"client":3,"target_node":1,"op":"read"}],
                "partition_window":{"start":0,"end":1}}"#,
        )
        .unwrap();
        assert_eq!(w.ops[0].op, CapOp::Write(7));
        assert_eq!(w.ops[1].op, CapOp::Read);
    }

    #[test]
    fn interval_replay_matches_counter() {
        for seed in 0..200 {
            for mode in [CapMode::FitoAp, CapMode::FitoCp, CapMode::Bilateral] {
                let w = random_workload(seed, 12, mode);
                let (t, m) = run_cap(mode, &w).unwrap();
                let total: usize = snapshot_consistency(&t)
                    .iter()
                    .map(|iv| iv.end.unwrap_or(w.ops.len()) - iv.start)
                    .sum();
                assert_eq!(total, m.divergence_events, "{mode:?} seed {seed}");
            }
        }
    }
}
