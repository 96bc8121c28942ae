//! Reference computations written independently of the library's own
//! analysis code.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use dpafd_core::engine::{TraceEvent, TraceRecord};
use dpafd_core::protocol::Note;
use dpafd_core::{Direction, MessageKind, Topology};

/// Edge list over `0..n`.
pub type Edges = Vec<(u32, u32)>;

fn pairs(n: u32) -> Vec<(u32, u32)> {
    let mut v = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            v.push((a, b));
        }
    }
    v
}

fn permutations(n: usize) -> Vec<Vec<u32>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, (n - 1) as u32);
            out.push(q);
        }
    }
    out
}

fn connected_mask(n: u32, all: &[(u32, u32)], mask: u32) -> bool {
    let mut seen = 1u32;
    let mut frontier = 1u32;
    while frontier != 0 {
        let mut next = 0u32;
        for (i, &(a, b)) in all.iter().enumerate() {
            if mask & (1 << i) == 0 {
                continue;
            }
            if frontier & (1 << a) != 0 {
                next |= 1 << b;
            }
            if frontier & (1 << b) != 0 {
                next |= 1 << a;
            }
        }
        frontier = next & !seen;
        seen |= next;
    }
    seen == (1 << n) - 1
}

/// One representative of every isomorphism class of connected graphs on
/// `n` nodes, found by brute-force canonical labelling.
pub fn connected_graphs(n: u32) -> Vec<Edges> {
    let all = pairs(n);
    let index: BTreeMap<(u32, u32), usize> = all.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    let perms = permutations(n as usize);
    let mut canon = BTreeSet::new();
    let mut out = Vec::new();
    for mask in 0u32..(1 << all.len()) {
        if !connected_mask(n, &all, mask) {
            continue;
        }
        let form = perms
            .iter()
            .map(|p| {
                let mut m = 0u32;
                for (i, &(a, b)) in all.iter().enumerate() {
                    if mask & (1 << i) != 0 {
                        let (x, y) = (p[a as usize], p[b as usize]);
                        m |= 1 << index[&(x.min(y), x.max(y))];
                    }
                }
                m
            })
            .min()
            .unwrap();
        if canon.insert(form) {
            out.push(
                all.iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, e)| *e)
                    .collect(),
            );
        }
    }
    out
}

/// Nodes reachable from `root` without passing through `faulty`.
pub fn reachable(n: usize, edges: &[(u32, u32)], faulty: &BTreeSet<u32>, root: u32) -> BTreeSet<u32> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a as usize].push(b);
        adj[b as usize].push(a);
    }
    let mut seen = BTreeSet::from([root]);
    let mut q = VecDeque::from([root]);
    while let Some(x) = q.pop_front() {
        for &y in &adj[x as usize] {
            if !faulty.contains(&y) && seen.insert(y) {
                q.push_back(y);
            }
        }
    }
    seen
}

pub fn edges_of(t: &Topology) -> Edges {
    t.edges().collect()
}

/// What one cycle's raw records say, grouped by the root each leader
/// reported.
#[derive(Debug, Default)]
pub struct Facts {
    /// root -> leaders in order
    pub sessions: BTreeMap<u32, Vec<u32>>,
    pub session_of: BTreeMap<u32, u32>,
    /// root -> probe targets, in send order
    pub probes: BTreeMap<u32, Vec<u32>>,
    /// root -> (timeouts, classifications)
    pub outcomes: BTreeMap<u32, (u64, u64)>,
    pub forward: BTreeMap<u32, u64>,
    pub backtrack: BTreeMap<u32, u64>,
    pub bcast: BTreeMap<u32, u64>,
    /// root -> faulty list from its finalizer
    pub finalized: BTreeMap<u32, Vec<u32>>,
    pub known: BTreeMap<u32, Vec<Vec<u32>>>,
    pub winners: Vec<u32>,
    pub announced: BTreeSet<u32>,
    pub volunteers: usize,
    pub violations: Vec<String>,
    pub acks: u64,
    pub requests: u64,
    pub terminated: bool,
}

pub fn facts(records: &[TraceRecord]) -> Facts {
    let mut f = Facts::default();
    for r in records {
        match &r.event {
            TraceEvent::Note { node, note } => {
                let me = node.ordinal();
                match note {
                    Note::Volunteered => f.volunteers += 1,
                    Note::Elected { .. } => f.winners.push(me),
                    Note::BecameLeader { root, .. } => {
                        f.sessions.entry(root.ordinal()).or_default().push(me);
                        f.session_of.insert(me, root.ordinal());
                    }
                    Note::Classified { response, .. } => {
                        let root = f.session_of[&me];
                        let e = f.outcomes.entry(root).or_default();
                        e.1 += 1;
                        if response.is_none() {
                            e.0 += 1;
                        }
                    }
                    Note::Finalized { frame } => {
                        let list = frame
                            .entries()
                            .iter()
                            .filter(|e| e.status.is_faulty())
                            .map(|e| e.address.ordinal())
                            .collect();
                        f.finalized.insert(f.session_of[&me], list);
                    }
                    Note::KnownFaulty { faulty } => f
                        .known
                        .entry(me)
                        .or_default()
                        .push(faulty.iter().map(|x| x.address.ordinal()).collect()),
                    Note::Violation(v) => f.violations.push(v.clone()),
                }
            }
            TraceEvent::Send { msg, .. } => {
                let src = msg.src.ordinal();
                match &msg.kind {
                    MessageKind::ProbeRequest(_) => {
                        f.requests += 1;
                        f.probes
                            .entry(f.session_of[&src])
                            .or_default()
                            .push(msg.dst.ordinal());
                    }
                    MessageKind::ProbeAck { .. } => f.acks += 1,
                    MessageKind::ResultTransfer { direction, .. } => {
                        let root = f.session_of[&src];
                        match direction {
                            Direction::Forward => *f.forward.entry(root).or_default() += 1,
                            Direction::Backtrack => *f.backtrack.entry(root).or_default() += 1,
                        }
                    }
                    MessageKind::FinalBroadcast(_) => {
                        *f.bcast.entry(f.session_of[&src]).or_default() += 1
                    }
                    MessageKind::LeaderAnnounce(fr) => {
                        f.announced.insert(fr.address.ordinal());
                    }
                    _ => {}
                }
            }
            TraceEvent::CycleEnd { terminated, .. } => f.terminated = *terminated,
            _ => {}
        }
    }
    f
}
