//! Acknowledgment chains over FITO, the bilateral coordination counterpart,
//! and a run-enumeration evaluator for nested and common knowledge.
//!
//! Knowledge is judged over the set of runs the same protocol generates
//! under every adversary choice: all delivery masks for a chain of `R`
//! messages, or both outcomes of a single coordination attempt. Two runs are
//! indistinguishable to an agent when its local histories coincide.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{Configuration, EventKind, Outcome, SubstrateKind, Trace};

/// The only fact tracked: the first message (or the coordination
/// transaction that carries it) got through.
pub const ATTACK_AT_DAWN: &str = "attack-at-dawn delivered";

/// Longest chain the run-enumeration oracle accepts.
pub const ORACLE_BOUND: usize = 6;

const A: usize = 0;
const B: usize = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KnowledgeError {
    #[error("mask has {mask} bits but rounds = {rounds}")]
    MaskLength { rounds: usize, mask: usize },
    #[error("mask must be a string of 0s and 1s, got {0:?}")]
    BadMask(String),
    #[error("unknown fact {0:?}")]
    UnknownFact(String),
    #[error("chain of {chain} messages exceeds the oracle bound {bound}")]
    OracleBound { chain: usize, bound: usize },
    #[error("trace is not a two-party exchange: {0}")]
    NotAnExchange(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnowledgeQuery {
    pub fact: String,
    /// 1 = B knows, 2 = A knows B knows, and so on.
    pub depth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Depth {
    Finite(usize),
    Common,
}

impl std::fmt::Display for Depth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Depth::Finite(k) => write!(f, "{k}"),
            Depth::Common => f.write_str("common"),
        }
    }
}

pub fn parse_mask(s: &str) -> Result<Vec<bool>, KnowledgeError> {
    s.chars()
        .map(|c| match c {
            '1' => Ok(true),
            '0' => Ok(false),
            _ => Err(KnowledgeError::BadMask(s.to_string())),
        })
        .collect()
}

/// Final configuration of an alternating A→B, B→A chain. The first dropped
/// message ends the exchange.
pub fn ack_chain(rounds: usize, mask: &[bool]) -> Result<Configuration, KnowledgeError> {
    if mask.len() != rounds {
        return Err(KnowledgeError::MaskLength {
            rounds,
            mask: mask.len(),
        });
    }
    let mut c = Configuration::new(SubstrateKind::Fito, 2, &[]).expect("two processes");
    for (i, &delivered) in mask.iter().enumerate() {
        let (from, to) = if i % 2 == 0 { (A, B) } else { (B, A) };
        let (sent, msg) = c.fito_send(from, to, i as i64).expect("fito send");
        c = if delivered {
            sent.fito_deliver(msg).expect("in flight")
        } else {
            sent.fito_drop(msg).expect("in flight")
        };
        if !delivered {
            break;
        }
    }
    Ok(c)
}

pub fn run_ack_regress(rounds: usize, mask: &[bool]) -> Result<Trace, KnowledgeError> {
    Ok(ack_chain(rounds, mask)?.trace("two-generals", 0))
}

/// One coordination attempt whose completion is the fact.
pub fn bilateral_coordination(decide: Outcome) -> Configuration {
    Configuration::new(SubstrateKind::Bilateral, 2, &[])
        .expect("two processes")
        .bilateral_attempt(A, B, 1, 1, decide)
        .expect("unpartitioned attempt")
}

pub fn run_bilateral_coordination(decide: Outcome) -> Trace {
    bilateral_coordination(decide).trace("two-generals-bilateral", 0)
}

type History = Vec<(EventKind, String)>;

#[derive(Debug, Clone, PartialEq, Eq)]
struct Run {
    histories: [History; 2],
    fact: bool,
}

impl Run {
    fn of(trace: &Trace, fact: bool) -> Self {
        let h = |p| {
            trace
                .history(p)
                .map(|e| (e.kind, e.payload.clone()))
                .collect()
        };
        Run {
            histories: [h(A), h(B)],
            fact,
        }
    }
}

/// Runs of the protocol that produced a trace, with the actual one marked.
#[derive(Debug, Clone)]
pub struct EpistemicModel {
    runs: Vec<Run>,
    actual: usize,
}

impl EpistemicModel {
    /// Rebuilds the run set for `trace`. A trace with transaction events is
    /// judged against the two coordination outcomes; otherwise it is an ack
    /// chain whose planned length is the number of sends when the last one
    /// was lost and the number of deliveries when none was.
    pub fn for_trace(trace: &Trace) -> Result<Self, KnowledgeError> {
        if trace.n_procs() != 2 {
            return Err(KnowledgeError::NotAnExchange(format!(
                "{} processes",
                trace.n_procs()
            )));
        }
        let actual = Run::of(trace, false);
        let is_bilateral = trace
            .events()
            .iter()
            .any(|e| e.kind == EventKind::TxnComplete);
        let runs: Vec<Run> = if is_bilateral {
            [Outcome::Completed, Outcome::NotOccurred]
                .into_iter()
                .map(|o| Run::of(&run_bilateral_coordination(o), o == Outcome::Completed))
                .collect()
        } else {
            let rounds = Self::chain_rounds(trace)?;
            if rounds > ORACLE_BOUND {
                return Err(KnowledgeError::OracleBound {
                    chain: rounds,
                    bound: ORACLE_BOUND,
                });
            }
            (0..=rounds)
                .map(|k| {
                    let mask: Vec<bool> = (0..rounds).map(|i| i < k).collect();
                    let t = run_ack_regress(rounds, &mask).expect("mask sized to rounds");
                    Run::of(&t, k >= 1)
                })
                .collect()
        };
        let actual = runs
            .iter()
            .position(|r| r.histories == actual.histories)
            .ok_or_else(|| {
                KnowledgeError::NotAnExchange("trace is not generated by the chain protocol".into())
            })?;
        Ok(Self { runs, actual })
    }

    fn chain_rounds(trace: &Trace) -> Result<usize, KnowledgeError> {
        let mut sends = 0;
        let mut receives = 0;
        for e in trace.events() {
            match e.kind {
                EventKind::Send => sends += 1,
                EventKind::Receive => receives += 1,
                other => {
                    return Err(KnowledgeError::NotAnExchange(format!(
                        "unexpected {other:?} event"
                    )))
                }
            }
        }
        Ok(if sends > receives { sends } else { receives })
    }

    pub fn run_count(&self) -> usize {
        self.runs.len()
    }

    /// Runs `agent` cannot tell apart from run `r`; always contains `r`.
    pub fn indistinguishable(&self, agent: usize, r: usize) -> Vec<usize> {
        let h = &self.runs[r].histories[agent];
        (0..self.runs.len())
            .filter(|&s| &self.runs[s].histories[agent] == h)
            .collect()
    }

    fn knows(&self, agent: usize, holds: &[bool]) -> Vec<bool> {
        (0..self.runs.len())
            .map(|r| {
                self.indistinguishable(agent, r)
                    .into_iter()
                    .all(|s| holds[s])
            })
            .collect()
    }

    /// Extension of the depth-`k` nested statement over all runs.
    fn nested(&self, k: usize) -> Vec<bool> {
        let mut s: Vec<bool> = self.runs.iter().map(|r| r.fact).collect();
        for level in 1..=k {
            let agent = if level % 2 == 1 { B } else { A };
            s = self.knows(agent, &s);
        }
        s
    }

    pub fn holds(&self, depth: usize) -> bool {
        self.nested(depth)[self.actual]
    }

    /// Every run reachable from the actual one through either agent's
    /// indistinguishability satisfies the fact.
    pub fn common(&self) -> bool {
        let mut seen = vec![false; self.runs.len()];
        let mut stack = vec![self.actual];
        seen[self.actual] = true;
        while let Some(r) = stack.pop() {
            if !self.runs[r].fact {
                return false;
            }
            for agent in [A, B] {
                for s in self.indistinguishable(agent, r) {
                    if !seen[s] {
                        seen[s] = true;
                        stack.push(s);
                    }
                }
            }
        }
        true
    }

    pub fn depth(&self) -> Depth {
        if self.common() {
            return Depth::Common;
        }
        let mut k = 0;
        while self.holds(k + 1) {
            k += 1;
        }
        Depth::Finite(k)
    }
}

fn check_fact(fact: &str) -> Result<(), KnowledgeError> {
    if fact == ATTACK_AT_DAWN {
        Ok(())
    } else {
        Err(KnowledgeError::UnknownFact(fact.to_string()))
    }
}

pub fn knowledge_depth(trace: &Trace, fact: &str) -> Result<Depth, KnowledgeError> {
    check_fact(fact)?;
    Ok(EpistemicModel::for_trace(trace)?.depth())
}

pub fn knows(trace: &Trace, query: &KnowledgeQuery) -> Result<bool, KnowledgeError> {
    check_fact(&query.fact)?;
    Ok(EpistemicModel::for_trace(trace)?.holds(query.depth))
}

pub fn common_knowledge(trace: &Trace, fact: &str) -> Result<bool, KnowledgeError> {
    check_fact(fact)?;
    Ok(EpistemicModel::for_trace(trace)?.common())
}

/// Depth read off the trace shape alone: delivered chain messages, or
/// common knowledge after a completed transaction. Not oracle-checked.
pub fn syntactic_depth(trace: &Trace) -> Depth {
    if trace
        .events()
        .iter()
        .any(|e| e.kind == EventKind::TxnComplete)
    {
        return Depth::Common;
    }
    Depth::Finite(
        trace
            .events()
            .iter()
            .filter(|e| e.kind == EventKind::Receive)
            .count(),
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthRow {
    pub delivered: usize,
    pub oracle: Depth,
    pub syntactic: Depth,
}

/// Oracle and syntactic depth for every prefix of the chain (0, 1, ...
/// delivered messages out of `rounds`).
pub fn depth_table(rounds: usize) -> Result<Vec<DepthRow>, KnowledgeError> {
    (0..=rounds)
        .map(|k| {
            let mask: Vec<bool> = (0..rounds).map(|i| i < k).collect();
            let t = run_ack_regress(rounds, &mask)?;
            Ok(DepthRow {
                delivered: k,
                oracle: knowledge_depth(&t, ATTACK_AT_DAWN)?,
                syntactic: syntactic_depth(&t),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(mask: &str) -> Trace {
        let m = parse_mask(mask).unwrap();
        run_ack_regress(m.len(), &m).unwrap()
    }

    #[test]
    fn chain_shapes() {
        assert_eq!(chain("1").len(), 2);
        let t = chain("110");
        let delivered = t
            .events()
            .iter()
            .filter(|e| e.kind == EventKind::Receive)
            .count();
        let sent = t
            .events()
            .iter()
            .filter(|e| e.kind == EventKind::Send)
            .count();
        assert_eq!((delivered, sent), (2, 3));
        assert!(chain("").is_empty());
        assert_eq!(chain("011").len(), 1);
    }

    #[test]
    fn mask_length_is_checked() {
        assert_eq!(
            run_ack_regress(3, &[true]).unwrap_err(),
            KnowledgeError::MaskLength { rounds: 3, mask: 1 }
        );
        assert!(parse_mask("12").is_err());
    }

    #[test]
    fn a_cannot_tell_delivery_from_loss() {
        let m = EpistemicModel::for_trace(&chain("1")).unwrap();
        assert_eq!(m.run_count(), 2);
        assert_eq!(m.indistinguishable(A, 1), vec![0, 1]);
        assert_eq!(m.indistinguishable(B, 1), vec![1]);
        assert!(m.holds(1));
        assert!(!m.holds(2));
    }

    #[test]
    fn depths_follow_the_chain() {
        for (mask, d) in [
            ("", 0),
            ("0", 0),
            ("1", 1),
            ("11", 2),
            ("110", 2),
            ("1110", 3),
        ] {
            assert_eq!(
                knowledge_depth(&chain(mask), ATTACK_AT_DAWN).unwrap(),
                Depth::Finite(d),
                "{mask}"
            );
            assert!(!common_knowledge(&chain(mask), ATTACK_AT_DAWN).unwrap());
        }
    }

    #[test]
    fn queries() {
        let t = chain("11");
        let q = |depth| KnowledgeQuery {
            fact: ATTACK_AT_DAWN.into(),
            depth,
        };
        assert!(knows(&t, &q(2)).unwrap());
        assert!(!knows(&t, &q(3)).unwrap());
        assert!(matches!(
            knowledge_depth(&t, "retreat"),
            Err(KnowledgeError::UnknownFact(_))
        ));
    }

    #[test]
    fn long_chains_are_refused() {
        let t = chain("1111111");
        assert_eq!(
            knowledge_depth(&t, ATTACK_AT_DAWN).unwrap_err(),
            KnowledgeError::OracleBound { chain: 7, bound: 6 }
        );
        assert_eq!(syntactic_depth(&t), Depth::Finite(7));
    }

    #[test]
    fn completed_coordination_is_common_knowledge() {
        let t = run_bilateral_coordination(Outcome::Completed);
        assert!(common_knowledge(&t, ATTACK_AT_DAWN).unwrap());
        assert_eq!(knowledge_depth(&t, ATTACK_AT_DAWN).unwrap(), Depth::Common);
        let m = EpistemicModel::for_trace(&t).unwrap();
        assert!((1..20).all(|k| m.holds(k)));
    }

    #[test]
    fn withheld_coordination_leaves_nothing() {
        let t = run_bilateral_coordination(Outcome::NotOccurred);
        assert!(t.is_empty());
        assert!(!common_knowledge(&t, ATTACK_AT_DAWN).unwrap());
        assert_eq!(
            knowledge_depth(&t, ATTACK_AT_DAWN).unwrap(),
            Depth::Finite(0)
        );
    }

    #[test]
    fn table_rows_agree() {
        for row in depth_table(6).unwrap() {
            assert_eq!(row.oracle, row.syntactic);
        }
    }
}
