//! Protocol-free exchange model: processes talk to each other round-robin
//! and the adversary controls delivery, transaction outcomes and partitions.
//! Used for trace generation where no lab protocol applies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adversary::{Protocol, SchedulerAction};
use crate::kernel::{Configuration, Outcome, ProcessId, SimError, SubstrateKind, Trace, Value};
use crate::substrates::TxnStatus;

#[derive(Debug, Clone, Copy, Default)]
pub struct RawExchange;

impl RawExchange {
    /// Next peer of `p` after it has already addressed `sent` messages.
    fn peer(p: ProcessId, sent: u32, n: usize) -> ProcessId {
        (p + 1 + sent as usize % (n - 1)) % n
    }

    fn initiated_pending(config: &Configuration, p: ProcessId) -> bool {
        config
            .transactions()
            .iter()
            .any(|t| t.endpoint_a == p && t.outcome == TxnStatus::Pending)
    }

    fn offer(config: &Configuration, p: ProcessId) -> Value {
        let s = &config.procs()[p];
        s.held.unwrap_or(p as Value * 100 + s.own_steps as Value)
    }
}

impl Protocol for RawExchange {
    fn name(&self) -> &str {
        "raw"
    }

    fn enabled(&self, config: &Configuration) -> Vec<SchedulerAction> {
        let n = config.n_procs();
        let mut out = Vec::new();
        for process in 0..n {
            if config.kind() == SubstrateKind::Bilateral && Self::initiated_pending(config, process)
            {
                continue;
            }
            out.push(SchedulerAction::ProcStep { process });
        }
        match config.kind() {
            SubstrateKind::Fito => {
                for m in config.in_flight() {
                    if config.connected(m.sender, m.receiver) {
                        out.push(SchedulerAction::DeliverMsg { msg_id: m.msg_id });
                    }
                    out.push(SchedulerAction::DropMsg { msg_id: m.msg_id });
                }
            }
            SubstrateKind::Bilateral => {
                for t in config.transactions() {
                    if t.outcome != TxnStatus::Pending {
                        continue;
                    }
                    if config.connected(t.endpoint_a, t.endpoint_b) {
                        out.push(SchedulerAction::TxnDecide {
                            txn_id: t.txn_id,
                            outcome: Outcome::Completed,
                        });
                    }
                    out.push(SchedulerAction::TxnDecide {
                        txn_id: t.txn_id,
                        outcome: Outcome::NotOccurred,
                    });
                }
            }
        }
        match config.partition() {
            Some(_) => out.push(SchedulerAction::Heal),
            None if n >= 2 => {
                for p in 0..n {
                    let rest = (0..n).filter(|&q| q != p).collect();
                    out.push(SchedulerAction::Partition {
                        cells: vec![vec![p], rest],
                    });
                }
            }
            None => {}
        }
        out
    }

    fn proc_step(&self, config: &Configuration, p: ProcessId) -> Result<Configuration, SimError> {
        config.check_process(p)?;
        let n = config.n_procs();
        let s = &config.procs()[p];
        let mut next = if n < 2 {
            config.local_event(p, &format!("tick {}", s.own_steps))?
        } else {
            match config.kind() {
                SubstrateKind::Fito => {
                    let to = Self::peer(p, s.sends, n);
                    config.fito_send(p, to, Self::offer(config, p))?.0
                }
                SubstrateKind::Bilateral => {
                    if Self::initiated_pending(config, p) {
                        return Err(SimError::InvalidSchedule(format!(
                            "P{p} already has an attempt pending"
                        )));
                    }
                    let to = Self::peer(p, s.own_steps, n);
                    let (mut c, _) = config.bilateral_propose(
                        p,
                        to,
                        Self::offer(config, p),
                        Self::offer(config, to),
                    )?;
                    c.proc_mut(p).sends += 1;
                    c
                }
            }
        };
        next.proc_mut(p).own_steps += 1;
        Ok(next)
    }
}

/// Random adversarial run of the exchange model with at most `max_events`
/// events, deterministic in `seed`.
pub fn random_trace(kind: SubstrateKind, n_procs: usize, seed: u64, max_events: usize) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = Configuration::new(kind, n_procs, &[]).expect("valid process count");
    for _ in 0..max_events * 4 {
        if c.event_count() + 2 > max_events {
            break;
        }
        let enabled = RawExchange.enabled(&c);
        if enabled.is_empty() {
            break;
        }
        let a = &enabled[rng.gen_range(0..enabled.len())];
        c = RawExchange
            .apply(&c, a)
            .expect("enabled actions apply cleanly");
    }
    c.trace("random", seed)
}
