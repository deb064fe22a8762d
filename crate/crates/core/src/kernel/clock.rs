//! Lamport and vector clock assignment over a recorded trace.
//!
//! Both passes walk events in emission order. A Receive takes the maximum of
//! its own clock and the Send's; a completed transaction is a two-sided
//! synchronization, so both endpoints take the maximum of both clocks before
//! each increments its own component.

use super::{EventKind, Trace};

pub fn assign_lamport(trace: &Trace) -> Trace {
    let events = trace.events();
    let mut clock = vec![0u64; trace.n_procs()];
    let mut stamped: Vec<Option<u64>> = vec![None; events.len()];

    for (i, e) in events.iter().enumerate() {
        if stamped[i].is_some() {
            continue;
        }
        let p = e.id.process;
        match e.kind {
            EventKind::Local | EventKind::Send => {
                clock[p] += 1;
                stamped[i] = Some(clock[p]);
            }
            EventKind::Receive => {
                let send = trace
                    .position(e.counterpart.expect("validated"))
                    .expect("validated");
                let sent_at = stamped[send].expect("send precedes receive");
                clock[p] = clock[p].max(sent_at) + 1;
                stamped[i] = Some(clock[p]);
            }
            EventKind::TxnComplete => {
                let partner_id = e.counterpart.expect("validated");
                let partner = trace.position(partner_id).expect("validated");
                let q = partner_id.process;
                let t = clock[p].max(clock[q]) + 1;
                clock[p] = t;
                clock[q] = t;
                stamped[i] = Some(t);
                stamped[partner] = Some(t);
            }
        }
    }

    let events = events
        .iter()
        .zip(stamped)
        .map(|(e, l)| {
            let mut e = e.clone();
            e.lamport = l.expect("every event stamped");
            e
        })
        .collect();
    trace.with_events(events)
}

pub fn assign_vclocks(trace: &Trace) -> Trace {
    let n = trace.n_procs();
    let events = trace.events();
    let mut clock = vec![vec![0u64; n]; n];
    let mut stamped: Vec<Option<Vec<u64>>> = vec![None; events.len()];

    for (i, e) in events.iter().enumerate() {
        if stamped[i].is_some() {
            continue;
        }
        let p = e.id.process;
        match e.kind {
            EventKind::Local | EventKind::Send => {
                clock[p][p] += 1;
                stamped[i] = Some(clock[p].clone());
            }
            EventKind::Receive => {
                let send = trace
                    .position(e.counterpart.expect("validated"))
                    .expect("validated");
                let sent = stamped[send].as_ref().expect("send precedes receive");
                for (mine, theirs) in clock[p].iter_mut().zip(sent) {
                    *mine = (*mine).max(*theirs);
                }
                clock[p][p] += 1;
                stamped[i] = Some(clock[p].clone());
            }
            EventKind::TxnComplete => {
                let partner_id = e.counterpart.expect("validated");
                let partner = trace.position(partner_id).expect("validated");
                let q = partner_id.process;
                let merged: Vec<u64> = clock[p]
                    .iter()
                    .zip(&clock[q])
                    .map(|(a, b)| (*a).max(*b))
                    .collect();
                clock[p] = merged.clone();
                clock[q] = merged;
                clock[p][p] += 1;
                clock[q][q] += 1;
                stamped[i] = Some(clock[p].clone());
                stamped[partner] = Some(clock[q].clone());
            }
        }
    }

    let events = events
        .iter()
        .zip(stamped)
        .map(|(e, v)| {
            let mut e = e.clone();
            e.vclock = v.expect("every event stamped");
            e
        })
        .collect();
    trace.with_events(events)
}

/// Strict vector-clock order: component-wise `<=` with at least one `<`.
pub fn vclock_lt(a: &[u64], b: &[u64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x <= y) && a != b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{Event, EventId};

    fn ev(p: usize, s: u32, kind: EventKind, c: Option<(usize, u32)>) -> Event {
        Event::unclocked(
            EventId::new(p, s),
            kind,
            c.map(|(p, s)| EventId::new(p, s)),
            "",
        )
    }

    #[test]
    fn single_process_counts_up() {
        let t = Trace::new(
            "t",
            0,
            1,
            (0..3).map(|s| ev(0, s, EventKind::Local, None)).collect(),
        )
        .unwrap();
        let l: Vec<u64> = assign_lamport(&t)
            .events()
            .iter()
            .map(|e| e.lamport)
            .collect();
        assert_eq!(l, vec![1, 2, 3]);
    }

    #[test]
    fn receive_takes_max_plus_one() {
        // Sender reaches lamport 5 on its Send; receiver sits at 2.
        let mut events: Vec<Event> = (0..4).map(|s| ev(0, s, EventKind::Local, None)).collect();
        events.push(ev(0, 4, EventKind::Send, None));
        events.push(ev(1, 0, EventKind::Local, None));
        events.push(ev(1, 1, EventKind::Local, None));
        events.push(ev(1, 2, EventKind::Receive, Some((0, 4))));
        let t = assign_lamport(&Trace::new("t", 0, 2, events).unwrap());
        assert_eq!(t.get(EventId::new(0, 4)).unwrap().lamport, 5);
        assert_eq!(t.get(EventId::new(1, 1)).unwrap().lamport, 2);
        assert_eq!(t.get(EventId::new(1, 2)).unwrap().lamport, 6);
    }

    #[test]
    fn isolated_processes_share_values() {
        let t = Trace::new(
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
        .unwrap();
        let t = assign_lamport(&t);
        let per = |p| t.history(p).map(|e| e.lamport).collect::<Vec<_>>();
        assert_eq!(per(0), vec![1, 2]);
        assert_eq!(per(1), vec![1, 2]);
    }

    #[test]
    fn vector_clocks_for_message() {
        let t = Trace::new(
            "t",
            0,
            2,
            vec![
                ev(0, 0, EventKind::Send, None),
                ev(1, 0, EventKind::Receive, Some((0, 0))),
            ],
        )
        .unwrap();
        let t = assign_vclocks(&t);
        assert_eq!(t.events()[0].vclock, vec![1, 0]);
        assert_eq!(t.events()[1].vclock, vec![1, 1]);
    }

    #[test]
    fn independent_events_are_incomparable() {
        let t = Trace::new(
            "t",
            0,
            2,
            vec![
                ev(0, 0, EventKind::Local, None),
                ev(1, 0, EventKind::Local, None),
            ],
        )
        .unwrap();
        let t = assign_vclocks(&t);
        let (a, b) = (&t.events()[0].vclock, &t.events()[1].vclock);
        assert_eq!(a, &vec![1, 0]);
        assert_eq!(b, &vec![0, 1]);
        assert!(!vclock_lt(a, b) && !vclock_lt(b, a));
    }

    #[test]
    fn transaction_merges_both_sides() {
        let t = Trace::new(
            "t",
            0,
            2,
            vec![
                ev(0, 0, EventKind::Local, None),
                ev(0, 1, EventKind::Local, None),
                ev(1, 0, EventKind::Local, None),
                ev(0, 2, EventKind::TxnComplete, Some((1, 1))),
                ev(1, 1, EventKind::TxnComplete, Some((0, 2))),
            ],
        )
        .unwrap();
        let l = assign_lamport(&t);
        assert_eq!(l.events()[3].lamport, 3);
        assert_eq!(l.events()[4].lamport, 3);
        let v = assign_vclocks(&t);
        assert_eq!(v.events()[3].vclock, vec![3, 1]);
        assert_eq!(v.events()[4].vclock, vec![2, 2]);
    }
}
