use std::collections::{BTreeMap, BTreeSet};

use super::{
    classify, elect_leader, reference_vector, self_test, Candidate, Effects, FaultKind, Input,
    NodeEnv, NodePhase, Note, ProtocolError, TimerKind,
};
use crate::frames::{
    Direction, LocalFrame, Message, MessageKind, ResultFrame, StatusBit, TestVector, Ticks,
};
use crate::topology::NodeId;

/// Mutable per-cycle state of one node. Reset at every cycle start.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeContext {
    pub phase: NodePhase,
    pub self_frame: LocalFrame,
    pub test_result: Option<TestVector>,
    pub ack_count: u32,
    /// First volunteer this node acknowledged.
    pub acked_to: Option<NodeId>,
    pub broadcast_time: Option<Ticks>,
    /// Volunteer counts heard so far, own included once sent.
    pub candidates: BTreeMap<NodeId, Candidate>,
    pub relayed_counts: BTreeSet<NodeId>,
    pub announced_leader: Option<NodeId>,
    /// Held only while this node owns the leadership token.
    pub result_frame: Option<ResultFrame>,
    pub parent_leader: Option<NodeId>,
    /// Probe targets still outstanding, with their send time.
    pub pending_probes: BTreeMap<NodeId, Ticks>,
    pub probe_response_times: BTreeMap<NodeId, Ticks>,
    /// Responders this node already handed the token to, in order.
    pub tried: Vec<NodeId>,
    pub led: bool,
    pub probed_by: Vec<NodeId>,
    pub known_faulty: Option<Vec<LocalFrame>>,
}

impl NodeContext {
    fn idle(id: &NodeId) -> Self {
        Self {
            phase: NodePhase::Idle,
            self_frame: LocalFrame::new(id.clone(), StatusBit::FaultFree),
            test_result: None,
            ack_count: 0,
            acked_to: None,
            broadcast_time: None,
            candidates: BTreeMap::new(),
            relayed_counts: BTreeSet::new(),
            announced_leader: None,
            result_frame: None,
            parent_leader: None,
            pending_probes: BTreeMap::new(),
            probe_response_times: BTreeMap::new(),
            tried: Vec::new(),
            led: false,
            probed_by: Vec::new(),
            known_faulty: None,
        }
    }
}

/// Picks the responder with the smallest response time among those that
/// answered fault-free, have not led yet and were not tried; ties by ordinal.
pub fn select_next(
    response_times: &BTreeMap<NodeId, Ticks>,
    frame: &ResultFrame,
    tried: &[NodeId],
) -> Option<NodeId> {
    response_times
        .iter()
        .filter(|(id, _)| !tried.contains(id))
        .filter(|(id, _)| {
            frame
                .get(id)
                .is_some_and(|e| e.status == StatusBit::FaultFree && !e.leader)
        })
        .min_by_key(|(id, t)| (**t, *id))
        .map(|(id, _)| id.clone())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BroadcastEvent {
    Volunteer(NodeId),
    WaitExpired,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProbeOutcome {
    Ack(TestVector),
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub env: NodeEnv,
    pub ctx: NodeContext,
}

struct Out {
    me: NodeId,
    now: Ticks,
    fx: Effects,
}

impl Out {
    fn send(&mut self, dst: &NodeId, kind: MessageKind) {
        self.fx.messages.push(Message {
            kind,
            src: self.me.clone(),
            dst: dst.clone(),
            send_time: self.now,
        });
    }

    fn timer(&mut self, kind: TimerKind, deadline: Ticks) {
        self.fx.timers.push((kind, deadline));
    }

    fn note(&mut self, note: Note) {
        self.fx.notes.push(note);
    }
}

impl Node {
    pub fn new(env: NodeEnv) -> Self {
        let ctx = NodeContext::idle(&env.id);
        Self { env, ctx }
    }

    pub fn id(&self) -> &NodeId {
        &self.env.id
    }

    pub fn is_crashed(&self) -> bool {
        self.env.fault == Some(FaultKind::Crash)
    }

    fn is_fault_free(&self) -> bool {
        self.env.fault.is_none()
    }

    fn out(&self, now: Ticks) -> Out {
        Out {
            me: self.env.id.clone(),
            now,
            fx: Effects::default(),
        }
    }

    /// Single entry point used by the engine.
    pub fn handle(&mut self, now: Ticks, input: Input) -> Effects {
        if self.is_crashed() {
            return Effects::default();
        }
        match input {
            Input::CycleStart => self.on_cycle_start(now),
            Input::Timer(TimerKind::BroadcastWait) => {
                if self.ctx.phase == NodePhase::AwaitBroadcast {
                    self.on_broadcast_or_timeout(now, BroadcastEvent::WaitExpired)
                } else {
                    Effects::default()
                }
            }
            Input::Timer(TimerKind::AckWindow) => self.close_ack_window(now),
            Input::Timer(TimerKind::CountWindow) => self.decide_election(now),
            Input::Timer(TimerKind::ProbeDeadline(n)) => {
                if self.ctx.pending_probes.contains_key(&n) {
                    self.on_probe_result(now, &n, ProbeOutcome::Timeout)
                } else {
                    Effects::default()
                }
            }
            Input::Message(m) => self.on_message(now, m),
        }
    }

    /// Self-test, then either arm the broadcast wait (fault-free) or sit out
    /// the election while staying answerable to probes (software fault).
    pub fn on_cycle_start(&mut self, now: Ticks) -> Effects {
        self.ctx = NodeContext::idle(&self.env.id);
        let mut out = self.out(now);
        let Some((result, status)) = self_test(self.env.fault) else {
            return Effects::default();
        };
        self.ctx.test_result = Some(result);
        self.ctx.self_frame.status = status;
        if status == StatusBit::FaultFree {
            self.ctx.phase = NodePhase::AwaitBroadcast;
            out.timer(TimerKind::BroadcastWait, now + self.env.bcast_wait);
        } else {
            self.ctx.phase = NodePhase::Done;
        }
        out.fx
    }

    pub fn on_broadcast_or_timeout(&mut self, now: Ticks, event: BroadcastEvent) -> Effects {
        let mut out = self.out(now);
        if self.ctx.phase != NodePhase::AwaitBroadcast {
            return out.fx;
        }
        match event {
            BroadcastEvent::Volunteer(from) => {
                if self.ctx.acked_to.is_none() {
                    out.send(&from, MessageKind::VolunteerAck(self.ctx.self_frame.clone()));
                    self.ctx.acked_to = Some(from);
                    self.ctx.phase = NodePhase::Following;
                }
            }
            BroadcastEvent::WaitExpired => {
                for nb in &self.env.neighbors {
                    out.send(nb, MessageKind::VolunteerBroadcast);
                }
                self.ctx.broadcast_time = Some(now);
                self.ctx.phase = NodePhase::Volunteering;
                out.timer(TimerKind::AckWindow, now + self.env.timing.t_ack_window);
                out.note(Note::Volunteered);
            }
        }
        out.fx
    }

    fn close_ack_window(&mut self, now: Ticks) -> Effects {
        let mut out = self.out(now);
        if self.ctx.phase != NodePhase::Volunteering {
            return out.fx;
        }
        let me = self.env.id.clone();
        let broadcast_time = self.ctx.broadcast_time.unwrap_or(now);
        self.ctx.candidates.insert(
            me.clone(),
            Candidate {
                id: me.clone(),
                ack_count: self.ctx.ack_count,
                broadcast_time,
            },
        );
        self.ctx.relayed_counts.insert(me.clone());
        for nb in &self.env.neighbors {
            out.send(
                nb,
                MessageKind::CountExchange {
                    origin: me.clone(),
                    ack_count: self.ctx.ack_count,
                    broadcast_time,
                },
            );
        }
        self.ctx.phase = NodePhase::CountExchange;
        out.timer(TimerKind::CountWindow, now + self.env.timing.t_count_window);
        out.fx
    }

    fn decide_election(&mut self, now: Ticks) -> Effects {
        if self.ctx.phase != NodePhase::CountExchange {
            return Effects::default();
        }
        let candidates: Vec<Candidate> = self.ctx.candidates.values().cloned().collect();
        let winner = elect_leader(&candidates).expect("own candidacy is always present");
        if winner != self.env.id {
            self.ctx.phase = NodePhase::Following;
            return Effects::default();
        }
        let mut out = self.out(now);
        out.note(Note::Elected { candidates });
        self.ctx.announced_leader = Some(winner);
        let announce = self.ctx.self_frame.clone().with_leader(true);
        for nb in &self.env.neighbors {
            out.send(nb, MessageKind::LeaderAnnounce(announce.clone()));
        }
        let mut fx = out.fx;
        match self.on_become_leader(now, ResultFrame::new(), None) {
            Ok(more) => merge(&mut fx, more),
            Err(e) => fx.notes.push(Note::Violation(e.to_string())),
        }
        fx
    }

    /// Takes the token: raises the own leader bit in `rf` and probes every
    /// neighbour that has no entry yet.
    pub fn on_become_leader(
        &mut self,
        now: Ticks,
        mut rf: ResultFrame,
        parent: Option<NodeId>,
    ) -> Result<Effects, ProtocolError> {
        let me = self.env.id.clone();
        if !self.is_fault_free() || self.ctx.self_frame.status.is_faulty() {
            return Err(ProtocolError::NotFaultFree(me.label().to_owned()));
        }
        if self.ctx.led || rf.get(&me).is_some_and(|e| e.leader) {
            return Err(ProtocolError::AlreadyLeader(me.label().to_owned()));
        }
        rf.upsert(LocalFrame::new(me.clone(), StatusBit::FaultFree).with_leader(true))?;
        let root = rf.entries()[0].address.clone();
        self.ctx.self_frame.leader = true;
        self.ctx.led = true;
        self.ctx.parent_leader = parent.clone();
        self.ctx.phase = NodePhase::LeaderProbing;

        let mut out = self.out(now);
        out.note(Note::BecameLeader { parent, root });
        let request = self.ctx.self_frame.clone();
        for nb in self.env.neighbors.iter().filter(|nb| !rf.contains(nb)) {
            out.send(nb, MessageKind::ProbeRequest(request.clone()));
            out.timer(TimerKind::ProbeDeadline(nb.clone()), now + self.env.timing.t_probe);
            self.ctx.pending_probes.insert(nb.clone(), now);
        }
        self.ctx.result_frame = Some(rf);
        let mut fx = out.fx;
        if self.ctx.pending_probes.is_empty() {
            merge(&mut fx, self.advance(now));
        }
        Ok(fx)
    }

    pub fn on_probe_result(&mut self, now: Ticks, neighbor: &NodeId, outcome: ProbeOutcome) -> Effects {
        let mut out = self.out(now);
        let Some(sent) = self.ctx.pending_probes.remove(neighbor) else {
            if matches!(outcome, ProbeOutcome::Ack(_)) {
                out.note(Note::Violation(format!("ack from {neighbor} which was not probed")));
            }
            return out.fx;
        };
        let (status, response) = match &outcome {
            ProbeOutcome::Ack(r) => (classify(&reference_vector(), Some(r)), Some(now - sent)),
            ProbeOutcome::Timeout => (StatusBit::Faulty, None),
        };
        let rf = self
            .ctx
            .result_frame
            .as_mut()
            .expect("pending probes imply the token is held");
        if let Err(e) = rf.upsert(LocalFrame::new(neighbor.clone(), status)) {
            out.note(Note::Violation(e.to_string()));
        }
        if let Some(t) = response {
            self.ctx.probe_response_times.insert(neighbor.clone(), t);
        }
        out.note(Note::Classified {
            node: neighbor.clone(),
            status,
            response,
        });
        let mut fx = out.fx;
        if self.ctx.pending_probes.is_empty() {
            merge(&mut fx, self.advance(now));
        }
        fx
    }

    pub fn select_next_leader(&self) -> Option<NodeId> {
        let rf = self.ctx.result_frame.as_ref()?;
        select_next(&self.ctx.probe_response_times, rf, &self.ctx.tried)
    }

    /// Hands the token forward to `next` and waits.
    pub fn transfer_leadership(&mut self, now: Ticks, next: &NodeId) -> Result<Effects, ProtocolError> {
        let rf = self
            .ctx
            .result_frame
            .as_ref()
            .ok_or_else(|| ProtocolError::NotAResponder(next.label().to_owned()))?;
        let responded_ok = self.ctx.probe_response_times.contains_key(next)
            && rf.get(next).is_some_and(|e| e.status == StatusBit::FaultFree);
        if !responded_ok {
            return Err(ProtocolError::NotAResponder(next.label().to_owned()));
        }
        let frame = self.ctx.result_frame.take().expect("checked above");
        let mut out = self.out(now);
        out.send(
            next,
            MessageKind::ResultTransfer {
                frame,
                direction: Direction::Forward,
            },
        );
        self.ctx.tried.push(next.clone());
        self.ctx.phase = NodePhase::AwaitingNextLeader;
        Ok(out.fx)
    }

    /// Control returned by a child: re-adopt the grown frame and continue
    /// with the next-best responder.
    pub fn on_backtrack(&mut self, now: Ticks, from: &NodeId, rf: ResultFrame) -> Effects {
        if !self.ctx.led || self.ctx.result_frame.is_some() {
            let mut out = self.out(now);
            out.note(Note::Violation(format!("unexpected backtrack from {from}")));
            return out.fx;
        }
        self.ctx.result_frame = Some(rf);
        self.ctx.phase = NodePhase::LeaderProbing;
        self.advance(now)
    }

    /// Decides what the token holder does once its probes are settled.
    fn advance(&mut self, now: Ticks) -> Effects {
        let rf = self.ctx.result_frame.as_ref().expect("token held");
        if is_complete(rf, &self.env.roster) {
            return self.finalize_broadcast(now);
        }
        if let Some(next) = self.select_next_leader() {
            return self
                .transfer_leadership(now, &next)
                .expect("selected responders are valid targets");
        }
        match self.ctx.parent_leader.clone() {
            Some(parent) => {
                let frame = self.ctx.result_frame.take().expect("token held");
                let mut out = self.out(now);
                out.send(
                    &parent,
                    MessageKind::ResultTransfer {
                        frame,
                        direction: Direction::Backtrack,
                    },
                );
                self.ctx.phase = NodePhase::AwaitingNextLeader;
                out.fx
            }
            None => self.finalize_broadcast(now),
        }
    }

    /// Ends the cycle: nodes never reached are recorded as faulty, and the
    /// faulty list is sent down the tree of leaders.
    pub fn finalize_broadcast(&mut self, now: Ticks) -> Effects {
        let mut rf = self.ctx.result_frame.take().unwrap_or_default();
        let mut out = self.out(now);
        for member in self.env.roster.iter() {
            if !rf.contains(member) {
                if let Err(e) = rf.upsert(LocalFrame::new(member.clone(), StatusBit::Faulty)) {
                    out.note(Note::Violation(e.to_string()));
                }
            }
        }
        let faulty = rf.extract_faulty();
        out.note(Note::Finalized { frame: rf.clone() });
        out.note(Note::KnownFaulty {
            faulty: faulty.clone(),
        });
        for peer in self.tree_neighbors() {
            out.send(&peer, MessageKind::FinalBroadcast(faulty.clone()));
        }
        self.ctx.known_faulty = Some(faulty);
        self.ctx.result_frame = Some(rf);
        self.ctx.phase = NodePhase::Done;
        out.fx
    }

    fn tree_neighbors(&self) -> Vec<NodeId> {
        self.ctx
            .parent_leader
            .iter()
            .chain(self.ctx.tried.iter())
            .cloned()
            .collect()
    }

    fn on_final(&mut self, now: Ticks, from: &NodeId, faulty: Vec<LocalFrame>) -> Effects {
        let mut out = self.out(now);
        if self.ctx.known_faulty.is_some() {
            out.note(Note::Violation(format!("second final broadcast from {from}")));
            return out.fx;
        }
        out.note(Note::KnownFaulty {
            faulty: faulty.clone(),
        });
        for peer in self.tree_neighbors().iter().filter(|p| *p != from) {
            out.send(peer, MessageKind::FinalBroadcast(faulty.clone()));
        }
        self.ctx.known_faulty = Some(faulty);
        self.ctx.phase = NodePhase::Done;
        out.fx
    }

    fn on_message(&mut self, now: Ticks, m: Message) -> Effects {
        let src = m.src;
        let fault_free = self.is_fault_free();
        match m.kind {
            MessageKind::VolunteerBroadcast => {
                if fault_free {
                    return self.on_broadcast_or_timeout(now, BroadcastEvent::Volunteer(src));
                }
                // A faulty node acknowledges once, reporting its status.
                let mut out = self.out(now);
                if self.ctx.acked_to.is_none() {
                    out.send(&src, MessageKind::VolunteerAck(self.ctx.self_frame.clone()));
                    self.ctx.acked_to = Some(src);
                }
                out.fx
            }
            MessageKind::VolunteerAck(_) => {
                if self.ctx.phase == NodePhase::Volunteering {
                    self.ctx.ack_count += 1;
                }
                Effects::default()
            }
            MessageKind::CountExchange {
                origin,
                ack_count,
                broadcast_time,
            } => {
                let mut out = self.out(now);
                if !fault_free || !self.ctx.relayed_counts.insert(origin.clone()) {
                    return out.fx;
                }
                // Kept even before volunteering: a late volunteer must still
                // see counts that flooded past it earlier.
                self.ctx.candidates.insert(
                    origin.clone(),
                    Candidate {
                        id: origin.clone(),
                        ack_count,
                        broadcast_time,
                    },
                );
                for nb in self.env.neighbors.iter().filter(|nb| **nb != src) {
                    out.send(
                        nb,
                        MessageKind::CountExchange {
                            origin: origin.clone(),
                            ack_count,
                            broadcast_time,
                        },
                    );
                }
                out.fx
            }
            MessageKind::LeaderAnnounce(frame) => {
                let mut out = self.out(now);
                if !fault_free {
                    return out.fx;
                }
                match &self.ctx.announced_leader {
                    Some(known) if *known == frame.address => return out.fx,
                    Some(known) => {
                        out.note(Note::Violation(format!(
                            "conflicting leader announce: {} after {known}",
                            frame.address
                        )));
                        return out.fx;
                    }
                    None => {}
                }
                self.ctx.announced_leader = Some(frame.address.clone());
                if matches!(
                    self.ctx.phase,
                    NodePhase::AwaitBroadcast | NodePhase::Volunteering | NodePhase::CountExchange
                ) {
                    self.ctx.phase = NodePhase::Following;
                }
                for nb in self.env.neighbors.iter().filter(|nb| **nb != src) {
                    out.send(nb, MessageKind::LeaderAnnounce(frame.clone()));
                }
                out.fx
            }
            MessageKind::ProbeRequest(_) => {
                let mut out = self.out(now);
                let Some(result) = self.ctx.test_result else {
                    return out.fx;
                };
                out.send(
                    &src,
                    MessageKind::ProbeAck {
                        frame: self.ctx.self_frame.clone().with_leader(false),
                        result,
                    },
                );
                self.ctx.probed_by.push(src);
                out.fx
            }
            MessageKind::ProbeAck { result, .. } => {
                self.on_probe_result(now, &src, ProbeOutcome::Ack(result))
            }
            MessageKind::ResultTransfer {
                frame,
                direction: Direction::Forward,
            } => match self.on_become_leader(now, frame, Some(src)) {
                Ok(fx) => fx,
                Err(e) => {
                    let mut out = self.out(now);
                    out.note(Note::Violation(e.to_string()));
                    out.fx
                }
            },
            MessageKind::ResultTransfer {
                frame,
                direction: Direction::Backtrack,
            } => self.on_backtrack(now, &src, frame),
            MessageKind::FinalBroadcast(faulty) => {
                if fault_free {
                    self.on_final(now, &src, faulty)
                } else {
                    Effects::default()
                }
            }
            MessageKind::InterNetworkReport { .. } => Effects::default(),
        }
    }
}

/// Every member has an entry and every fault-free entry has led.
fn is_complete(rf: &ResultFrame, roster: &[NodeId]) -> bool {
    roster.iter().all(|m| rf.contains(m))
        && rf
            .entries()
            .iter()
            .all(|e| e.status.is_faulty() || e.leader)
}

fn merge(into: &mut Effects, more: Effects) {
    into.messages.extend(more.messages);
    into.timers.extend(more.timers);
    into.notes.extend(more.notes);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::TimingParams;
    use crate::topology::{parse_topology, Topology};
    use std::sync::Arc;

    fn node_in(t: &Topology, label: &str, fault: Option<FaultKind>) -> Node {
        let id = t.lookup(label).unwrap().clone();
        Node::new(NodeEnv {
            neighbors: t.neighbors(&id).unwrap(),
            roster: Arc::from(t.nodes().to_vec()),
            timing: TimingParams::default(),
            fault,
            bcast_wait: 10,
            id,
        })
    }

    fn fig6() -> Topology {
        parse_topology("N1: N2 N3 N4 N8 N9\nN2: N7\nN3:\nN4:\nN5: N8 N6\nN6: N7\nN7: N10\nN8:\nN9:\nN10:\n").unwrap()
    }

    fn id(t: &Topology, l: &str) -> NodeId {
        t.lookup(l).unwrap().clone()
    }

    fn sent_to(fx: &Effects) -> Vec<&str> {
        fx.messages.iter().map(|m| m.dst.label()).collect()
    }

    #[test]
    fn cycle_start_arms_wait_for_fault_free_node() {
        let t = fig6();
        let mut n = node_in(&t, "N1", None);
        let fx = n.on_cycle_start(100);
        assert_eq!(n.ctx.phase, NodePhase::AwaitBroadcast);
        assert_eq!(fx.timers, vec![(TimerKind::BroadcastWait, 110)]);
        assert!(fx.messages.is_empty());
    }

    #[test]
    fn software_faulty_node_sits_out_but_answers_probes() {
        let t = fig6();
        let mut n = node_in(&t, "N3", Some(FaultKind::Software));
        let fx = n.on_cycle_start(0);
        assert!(fx.is_empty());
        assert_eq!(n.ctx.phase, NodePhase::Done);
        assert_eq!(n.ctx.self_frame.status, StatusBit::Faulty);
        let probe = Message {
            kind: MessageKind::ProbeRequest(LocalFrame::new(id(&t, "N1"), StatusBit::FaultFree).with_leader(true)),
            src: id(&t, "N1"),
            dst: id(&t, "N3"),
            send_time: 20,
        };
        let fx = n.handle(21, Input::Message(probe));
        let MessageKind::ProbeAck { frame, result } = &fx.messages[0].kind else { panic!() };
        assert_eq!(frame.status, StatusBit::Faulty);
        assert!(!frame.leader);
        assert_eq!(classify(&reference_vector(), Some(result)), StatusBit::Faulty);
    }

    #[test]
    fn crashed_node_is_silent() {
        let t = fig6();
        let mut n = node_in(&t, "N9", Some(FaultKind::Crash));
        assert!(n.handle(0, Input::CycleStart).is_empty());
        assert!(n.handle(10, Input::Timer(TimerKind::BroadcastWait)).is_empty());
    }

    #[test]
    fn acks_only_the_first_broadcaster() {
        let t = parse_topology("N4: N5\nN5: N8\nN8:\n").unwrap();
        let mut n = node_in(&t, "N5", None);
        n.on_cycle_start(0);
        let bcast = |src: &str| Message {
            kind: MessageKind::VolunteerBroadcast,
            src: id(&t, src),
            dst: id(&t, "N5"),
            send_time: 5,
        };
        let first = n.handle(6, Input::Message(bcast("N8")));
        let second = n.handle(7, Input::Message(bcast("N4")));
        assert_eq!(sent_to(&first), ["N8"]);
        assert!(second.is_empty());
        assert_eq!(n.ctx.acked_to, Some(id(&t, "N8")));
        // the wait timer is now stale
        assert!(n.handle(10, Input::Timer(TimerKind::BroadcastWait)).is_empty());
    }

    #[test]
    fn wait_expiry_broadcasts_to_all_neighbours() {
        let t = fig6();
        let mut n = node_in(&t, "N1", None);
        n.on_cycle_start(0);
        let fx = n.handle(10, Input::Timer(TimerKind::BroadcastWait));
        assert_eq!(sent_to(&fx), ["N2", "N3", "N4", "N8", "N9"]);
        assert!(fx.messages.iter().all(|m| m.kind == MessageKind::VolunteerBroadcast));
        assert_eq!(n.ctx.phase, NodePhase::Volunteering);
        assert_eq!(fx.timers, vec![(TimerKind::AckWindow, 20)]);
    }

    #[test]
    fn first_leader_probes_all_neighbours() {
        let t = fig6();
        let mut n = node_in(&t, "N1", None);
        n.on_cycle_start(0);
        let fx = n.on_become_leader(30, ResultFrame::new(), None).unwrap();
        assert_eq!(sent_to(&fx), ["N2", "N3", "N4", "N8", "N9"]);
        assert_eq!(fx.timers.len(), 5);
        assert!(fx.messages.iter().all(|m| matches!(&m.kind, MessageKind::ProbeRequest(f) if f.leader)));
        let rf = n.ctx.result_frame.as_ref().unwrap();
        assert_eq!(rf.entries(), &[LocalFrame::new(id(&t, "N1"), StatusBit::FaultFree).with_leader(true)]);
    }

    #[test]
    fn leader_probes_only_unexplored() {
        let t = parse_topology("L: A B C\nA:\nB:\nC:\n").unwrap();
        let mut n = node_in(&t, "L", None);
        n.on_cycle_start(0);
        let mut rf = ResultFrame::new();
        rf.upsert(LocalFrame::new(id(&t, "B"), StatusBit::FaultFree).with_leader(true)).unwrap();
        rf.upsert(LocalFrame::new(id(&t, "L"), StatusBit::FaultFree)).unwrap();
        let fx = n.on_become_leader(0, rf, Some(id(&t, "B"))).unwrap();
        assert_eq!(sent_to(&fx), ["A", "C"]);
    }

    #[test]
    fn leader_with_nothing_new_backtracks() {
        let t = parse_topology("P: L X\nL:\nX:\n").unwrap();
        let mut n = node_in(&t, "L", None);
        n.on_cycle_start(0);
        let mut rf = ResultFrame::new();
        rf.upsert(LocalFrame::new(id(&t, "P"), StatusBit::FaultFree).with_leader(true)).unwrap();
        rf.upsert(LocalFrame::new(id(&t, "L"), StatusBit::FaultFree)).unwrap();
        rf.upsert(LocalFrame::new(id(&t, "X"), StatusBit::FaultFree)).unwrap();
        let fx = n.on_become_leader(0, rf, Some(id(&t, "P"))).unwrap();
        assert_eq!(fx.messages.len(), 1);
        assert!(matches!(
            fx.messages[0].kind,
            MessageKind::ResultTransfer { direction: Direction::Backtrack, .. }
        ));
        assert_eq!(fx.messages[0].dst, id(&t, "P"));
    }

    #[test]
    fn becoming_leader_twice_is_rejected() {
        let t = fig6();
        let mut n = node_in(&t, "N1", None);
        n.on_cycle_start(0);
        n.on_become_leader(0, ResultFrame::new(), None).unwrap();
        let mut rf = ResultFrame::new();
        rf.upsert(LocalFrame::new(id(&t, "N1"), StatusBit::FaultFree).with_leader(true)).unwrap();
        assert!(matches!(n.on_become_leader(5, rf, None), Err(ProtocolError::AlreadyLeader(_))));
    }

    #[test]
    fn probe_outcomes_fill_the_frame() {
        let t = fig6();
        let mut n = node_in(&t, "N1", None);
        n.on_cycle_start(0);
        n.on_become_leader(0, ResultFrame::new(), None).unwrap();
        let mut bad = reference_vector();
        bad.0[3] ^= 8;
        n.on_probe_result(2, &id(&t, "N3"), ProbeOutcome::Ack(bad));
        n.on_probe_result(3, &id(&t, "N2"), ProbeOutcome::Ack(reference_vector()));
        n.on_probe_result(10, &id(&t, "N9"), ProbeOutcome::Timeout);
        let rf = n.ctx.result_frame.as_ref().unwrap();
        assert_eq!(rf.get(&id(&t, "N3")).unwrap().status, StatusBit::Faulty);
        assert_eq!(rf.get(&id(&t, "N9")).unwrap().status, StatusBit::Faulty);
        let n2 = rf.get(&id(&t, "N2")).unwrap();
        assert_eq!((n2.status, n2.leader), (StatusBit::FaultFree, false));
        assert_eq!(n.ctx.probe_response_times[&id(&t, "N2")], 3);
        // an ack nobody asked for is only noted
        let fx = n.on_probe_result(4, &id(&t, "N7"), ProbeOutcome::Ack(reference_vector()));
        assert!(matches!(fx.notes[0], Note::Violation(_)));
    }

    #[test]
    fn next_leader_is_fastest_eligible_responder() {
        let a = NodeId::new(0, "A");
        let b = NodeId::new(1, "B");
        let n5 = NodeId::new(4, "N5");
        let n9 = NodeId::new(8, "N9");
        let mut rf = ResultFrame::new();
        for x in [&n5, &n9, &a, &b] {
            rf.upsert(LocalFrame::new(x.clone(), StatusBit::FaultFree)).unwrap();
        }
        let times = BTreeMap::from([(n5.clone(), 3), (n9.clone(), 7)]);
        assert_eq!(select_next(&times, &rf, &[]), Some(n5.clone()));
        assert_eq!(select_next(&times, &rf, std::slice::from_ref(&n5)), Some(n9.clone()));
        let ties = BTreeMap::from([(b.clone(), 4), (a.clone(), 4)]);
        assert_eq!(select_next(&ties, &rf, &[]), Some(a.clone()));

        let mut led = ResultFrame::new();
        led.upsert(LocalFrame::new(n5.clone(), StatusBit::FaultFree).with_leader(true)).unwrap();
        led.upsert(LocalFrame::new(n9.clone(), StatusBit::Faulty)).unwrap();
        assert_eq!(select_next(&times, &led, &[]), None);
    }

    #[test]
    fn transfer_requires_fault_free_responder() {
        let t = fig6();
        let mut n = node_in(&t, "N1", None);
        n.on_cycle_start(0);
        n.on_become_leader(0, ResultFrame::new(), None).unwrap();
        let mut bad = reference_vector();
        bad.0[0] ^= 1;
        n.on_probe_result(2, &id(&t, "N3"), ProbeOutcome::Ack(bad));
        assert!(n.transfer_leadership(3, &id(&t, "N3")).is_err());
        assert!(n.transfer_leadership(3, &id(&t, "N10")).is_err());
    }

    #[test]
    fn backtrack_forwards_to_next_best_then_up() {
        // P -> L; L probed A (2 ticks) and B (4 ticks); A already tried.
        let t = parse_topology("P: L\nL: A B\nA:\nB:\n").unwrap();
        let mut n = node_in(&t, "L", None);
        n.on_cycle_start(0);
        let mut rf = ResultFrame::new();
        rf.upsert(LocalFrame::new(id(&t, "P"), StatusBit::FaultFree).with_leader(true)).unwrap();
        rf.upsert(LocalFrame::new(id(&t, "L"), StatusBit::FaultFree)).unwrap();
        n.on_become_leader(0, rf, Some(id(&t, "P"))).unwrap();
        n.on_probe_result(2, &id(&t, "A"), ProbeOutcome::Ack(reference_vector()));
        let fx = n.on_probe_result(4, &id(&t, "B"), ProbeOutcome::Ack(reference_vector()));
        assert_eq!(sent_to(&fx), ["A"]);

        let MessageKind::ResultTransfer { frame, .. } = fx.messages[0].kind.clone() else { panic!() };
        let mut back = frame;
        back.upsert(LocalFrame::new(id(&t, "A"), StatusBit::FaultFree).with_leader(true)).unwrap();
        let fx = n.on_backtrack(20, &id(&t, "A"), back.clone());
        assert_eq!(sent_to(&fx), ["B"]);

        let MessageKind::ResultTransfer { frame, .. } = fx.messages[0].kind.clone() else { panic!() };
        let mut back = frame;
        back.upsert(LocalFrame::new(id(&t, "B"), StatusBit::FaultFree).with_leader(true)).unwrap();
        let fx = n.on_backtrack(30, &id(&t, "B"), back);
        // complete now: every member present and every fault-free one led
        assert!(fx.notes.iter().any(|x| matches!(x, Note::Finalized { .. })));
    }

    #[test]
    fn backtrack_to_node_that_never_led_is_noted() {
        let t = fig6();
        let mut n = node_in(&t, "N4", None);
        n.on_cycle_start(0);
        let fx = n.on_backtrack(5, &id(&t, "N1"), ResultFrame::new());
        assert!(matches!(fx.notes[0], Note::Violation(_)));
    }

    #[test]
    fn exhausted_root_finalizes_with_unreached_members_faulty() {
        let t = parse_topology("A: B\nB: C\nC:\n").unwrap();
        let mut n = node_in(&t, "A", None);
        n.on_cycle_start(0);
        n.on_become_leader(0, ResultFrame::new(), None).unwrap();
        let fx = n.on_probe_result(10, &id(&t, "B"), ProbeOutcome::Timeout);
        let Some(Note::Finalized { frame }) = fx.notes.iter().find(|x| matches!(x, Note::Finalized { .. })) else {
            panic!("not finalized")
        };
        let faulty = frame.extract_faulty();
        let faulty: Vec<&str> = faulty.iter().map(|f| f.address.label()).collect();
        assert_eq!(faulty, ["B", "C"]);
        assert!(fx.messages.is_empty());
        assert_eq!(n.ctx.phase, NodePhase::Done);
    }

    #[test]
    fn zero_fault_finalization_broadcasts_empty_list() {
        let t = parse_topology("A: B\nB:\n").unwrap();
        let mut a = node_in(&t, "A", None);
        a.on_cycle_start(0);
        a.on_become_leader(0, ResultFrame::new(), None).unwrap();
        let fx = a.on_probe_result(2, &id(&t, "B"), ProbeOutcome::Ack(reference_vector()));
        assert_eq!(sent_to(&fx), ["B"]);
        let MessageKind::ResultTransfer { frame, .. } = fx.messages[0].kind.clone() else { panic!() };
        let mut b = node_in(&t, "B", None);
        b.on_cycle_start(0);
        let fx = b.on_become_leader(3, frame, Some(id(&t, "A"))).unwrap();
        assert_eq!(fx.messages.len(), 1);
        assert_eq!(fx.messages[0].kind, MessageKind::FinalBroadcast(vec![]));
        assert_eq!(fx.messages[0].dst, id(&t, "A"));
    }

    #[test]
    fn transitions_are_replayable() {
        let t = fig6();
        let mut n = node_in(&t, "N1", None);
        n.on_cycle_start(0);
        n.on_become_leader(0, ResultFrame::new(), None).unwrap();
        let inputs = [
            Input::Message(Message {
                kind: MessageKind::ProbeAck {
                    frame: LocalFrame::new(id(&t, "N2"), StatusBit::FaultFree),
                    result: reference_vector(),
                },
                src: id(&t, "N2"),
                dst: id(&t, "N1"),
                send_time: 1,
            }),
            Input::Timer(TimerKind::ProbeDeadline(id(&t, "N9"))),
        ];
        for input in inputs {
            let mut a = n.clone();
            let mut b = n.clone();
            let fa = a.handle(5, input.clone());
            let fb = b.handle(5, input.clone());
            assert_eq!(fa, fb);
            assert_eq!(a, b);
            n = a;
        }
    }
}
