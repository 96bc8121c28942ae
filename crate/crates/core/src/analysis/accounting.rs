use std::collections::BTreeMap;

use crate::engine::{Trace, TraceEvent, TraceRecord};
use crate::frames::{Direction, LocalFrame, MessageKind};
use crate::protocol::Note;
use crate::topology::NodeId;

use super::AnalysisError;

/// Messages sent in one cycle, by category. Dropped messages count: a send
/// is a send.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct MessageStats {
    pub m_r: u64,
    pub m_a: u64,
    pub m_re_forward: u64,
    pub m_re_backtrack: u64,
    pub m_bcast: u64,
    /// Election traffic: broadcasts, acks, count relays, announcements.
    pub m_extra: u64,
    pub total: u64,
}

impl MessageStats {
    pub fn m_re(&self) -> u64 {
        self.m_re_forward + self.m_re_backtrack
    }

    /// Everything except election traffic.
    pub fn diagnosis_total(&self) -> u64 {
        self.m_r + self.m_a + self.m_re() + self.m_bcast
    }

    pub fn record(&mut self, kind: &MessageKind) {
        match kind {
            MessageKind::ProbeRequest(_) => self.m_r += 1,
            MessageKind::ProbeAck { .. } => self.m_a += 1,
            MessageKind::ResultTransfer {
                direction: Direction::Forward,
                ..
            } => self.m_re_forward += 1,
            MessageKind::ResultTransfer {
                direction: Direction::Backtrack,
                ..
            } => self.m_re_backtrack += 1,
            MessageKind::FinalBroadcast(_) => self.m_bcast += 1,
            MessageKind::VolunteerBroadcast
            | MessageKind::VolunteerAck(_)
            | MessageKind::CountExchange { .. }
            | MessageKind::LeaderAnnounce(_)
            | MessageKind::InterNetworkReport { .. } => self.m_extra += 1,
        }
        self.total += 1;
    }
}

/// Probing done by one leader.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeaderTally {
    pub leader: NodeId,
    pub parent: Option<NodeId>,
    /// Neighbours probed, in send order.
    pub probed: Vec<NodeId>,
    /// Probes that ran into the deadline.
    pub timeouts: u64,
    /// Probes answered with a result that did not match.
    pub mismatches: u64,
}

impl LeaderTally {
    pub fn probes(&self) -> u64 {
        self.probed.len() as u64
    }
}

/// One chain of leaders rooted at an elected node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionTally {
    pub root: NodeId,
    pub leaders: Vec<LeaderTally>,
    pub finalizer: Option<NodeId>,
    pub faulty_found: Option<Vec<NodeId>>,
    /// Diagnosis messages only; election traffic is not split by session.
    pub stats: MessageStats,
}

impl SessionTally {
    pub fn members(&self) -> usize {
        self.leaders.len()
    }

    /// `(probes sent, probes timed out)` per leader, the inputs of the
    /// per-cycle formula.
    pub fn formula_inputs(&self) -> Vec<(u64, u64)> {
        self.leaders.iter().map(|l| (l.probes(), l.timeouts)).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CycleTally {
    pub cycle: u32,
    pub stats: MessageStats,
    pub sessions: Vec<SessionTally>,
    pub volunteers: Vec<NodeId>,
    /// Nodes that won their election.
    pub winners: Vec<NodeId>,
    /// Distinct leaders named in announcement messages.
    pub announced: Vec<NodeId>,
    /// Every faulty list each node was told, in order.
    pub known: BTreeMap<NodeId, Vec<Vec<NodeId>>>,
    pub violations: Vec<String>,
    pub terminated: Option<bool>,
}

fn ids(frames: &[LocalFrame]) -> Vec<NodeId> {
    frames.iter().map(|f| f.address.clone()).collect()
}

/// Reads one cycle's records back into per-session counts.
pub fn tally_cycle(cycle: u32, records: &[TraceRecord]) -> CycleTally {
    let mut t = CycleTally {
        cycle,
        ..Default::default()
    };
    // node -> (session index, leader index)
    let mut led: BTreeMap<NodeId, (usize, usize)> = BTreeMap::new();
    let mut roots: BTreeMap<NodeId, usize> = BTreeMap::new();
    let session_of = |led: &BTreeMap<NodeId, (usize, usize)>, n: &NodeId| led.get(n).copied();

    for r in records {
        match &r.event {
            TraceEvent::Note { node, note } => match note {
                Note::Volunteered => t.volunteers.push(node.clone()),
                Note::Elected { .. } => t.winners.push(node.clone()),
                Note::BecameLeader { parent, root } => {
                    let si = *roots.entry(root.clone()).or_insert_with(|| {
                        t.sessions.push(SessionTally {
                            root: root.clone(),
                            leaders: Vec::new(),
                            finalizer: None,
                            faulty_found: None,
                            stats: MessageStats::default(),
                        });
                        t.sessions.len() - 1
                    });
                    let s = &mut t.sessions[si];
                    s.leaders.push(LeaderTally {
                        leader: node.clone(),
                        parent: parent.clone(),
                        probed: Vec::new(),
                        timeouts: 0,
                        mismatches: 0,
                    });
                    led.insert(node.clone(), (si, s.leaders.len() - 1));
                }
                Note::Classified {
                    status, response, ..
                } => {
                    if let Some((si, li)) = session_of(&led, node) {
                        let l = &mut t.sessions[si].leaders[li];
                        match response {
                            None => l.timeouts += 1,
                            Some(_) if status.is_faulty() => l.mismatches += 1,
                            Some(_) => {}
                        }
                    }
                }
                Note::Finalized { frame } => match session_of(&led, node) {
                    Some((si, _)) => {
                        let s = &mut t.sessions[si];
                        if s.finalizer.is_some() {
                            t.violations
                                .push(format!("session {} finalized twice", s.root));
                        }
                        s.finalizer = Some(node.clone());
                        s.faulty_found = Some(ids(&frame.extract_faulty()));
                    }
                    None => t
                        .violations
                        .push(format!("{node} finalized without leading")),
                },
                Note::KnownFaulty { faulty } => {
                    t.known.entry(node.clone()).or_default().push(ids(faulty));
                }
                Note::Violation(v) => t.violations.push(format!("{node}: {v}")),
            },
            TraceEvent::Send { msg, .. } => {
                t.stats.record(&msg.kind);
                if let MessageKind::LeaderAnnounce(f) = &msg.kind {
                    if !t.announced.contains(&f.address) {
                        t.announced.push(f.address.clone());
                    }
                }
                // The leader side of each diagnosis message decides its session.
                let owner = match &msg.kind {
                    MessageKind::ProbeAck { .. } => Some(&msg.dst),
                    k if k.is_election() => None,
                    _ => Some(&msg.src),
                };
                if let Some((si, li)) = owner.and_then(|o| session_of(&led, o)) {
                    let s = &mut t.sessions[si];
                    s.stats.record(&msg.kind);
                    if matches!(msg.kind, MessageKind::ProbeRequest(_)) {
                        s.leaders[li].probed.push(msg.dst.clone());
                    }
                }
            }
            TraceEvent::CycleEnd { terminated, .. } => t.terminated = Some(*terminated),
            _ => {}
        }
    }
    t
}

/// Per-cycle message counts.
pub fn count_messages(trace: &Trace) -> Result<Vec<MessageStats>, AnalysisError> {
    let cycles = trace.cycles();
    if cycles.is_empty() {
        return Err(AnalysisError::NoCycles);
    }
    Ok(cycles
        .into_iter()
        .map(|(c, records)| tally_cycle(c, records).stats)
        .collect())
}

/// Messages for a single leader exploring the whole network:
/// `2·deg − f + n`. `deg` is the number of probes the leader sent.
pub fn eval_single_leader_formula(deg_l: u64, f_n: u64, n: u64) -> Result<u64, AnalysisError> {
    if f_n > deg_l || n == 0 || deg_l > n - 1 {
        return Err(AnalysisError::Formula(format!(
            "need 0 <= f_n <= deg <= n-1, got f_n={f_n} deg={deg_l} n={n}"
        )));
    }
    Ok(2 * deg_l - f_n + n)
}

/// Messages for a cycle with several leaders: `Σ(2·deg_i − f_i) + n`, where
/// `deg_i` is the number of probes leader `i` sent.
pub fn eval_cycle_formula(per_leader: &[(u64, u64)], n: u64) -> Result<u64, AnalysisError> {
    let mut sum = n;
    for &(deg, f) in per_leader {
        if f > deg {
            return Err(AnalysisError::Formula(format!(
                "leader with {f} failed probes out of {deg}"
            )));
        }
        sum += 2 * deg - f;
    }
    Ok(sum)
}
