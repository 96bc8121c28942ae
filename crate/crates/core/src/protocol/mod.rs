//! Per-node state machine for periodic leader-driven fault diagnosis.
//!
//! A cycle has two stages. In the election stage every fault-free node waits
//! for a volunteer broadcast; the ones that hear none volunteer, collect
//! acknowledgements, flood their counts to each other and the best one
//! announces itself. In the diagnosis stage a single leadership token walks
//! the fault-free part of the network depth-first: each leader probes its
//! not-yet-tested neighbours, records their status in the result frame, and
//! hands the frame to its fastest fault-free responder, falling back to its
//! parent when nobody is left. The holder that finds every node tested and
//! every fault-free node already led broadcasts the faulty list.
//!
//! Transitions are deterministic functions of `(node state, time, input)`;
//! the engine owns the clock and the network.

mod election;
mod node;
mod selftest;

use std::sync::Arc;

use thiserror::Error;

use crate::frames::{FrameError, LocalFrame, Message, ResultFrame, StatusBit, Ticks};
use crate::topology::NodeId;

pub use election::{elect_leader, Candidate};
pub use node::{select_next, Node, NodeContext};
pub use selftest::{classify, reference_vector, self_test, FaultKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodePhase {
    Idle,
    AwaitBroadcast,
    /// Acknowledged a volunteer, or lost the election; waits to be probed.
    Following,
    Volunteering,
    CountExchange,
    LeaderProbing,
    AwaitingNextLeader,
    Done,
}

/// Protocol timeouts, in ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimingParams {
    /// How long a fault-free node waits for a volunteer broadcast before
    /// volunteering itself.
    pub t_bcast_wait: Ticks,
    /// How long a volunteer collects acknowledgements.
    pub t_ack_window: Ticks,
    /// How long a volunteer listens for other volunteers' counts before
    /// deciding the election. Must cover a flood across the network.
    pub t_count_window: Ticks,
    /// Per-probe reply deadline.
    pub t_probe: Ticks,
    pub cycle_period: Ticks,
}

impl Default for TimingParams {
    fn default() -> Self {
        Self {
            t_bcast_wait: 10,
            t_ack_window: 10,
            t_count_window: 250,
            t_probe: 10,
            cycle_period: 1000,
        }
    }
}

impl TimingParams {
    pub fn check(&self) -> Result<(), String> {
        let all = [
            ("t_bcast_wait", self.t_bcast_wait),
            ("t_ack_window", self.t_ack_window),
            ("t_count_window", self.t_count_window),
            ("t_probe", self.t_probe),
            ("cycle_period", self.cycle_period),
        ];
        if let Some((name, _)) = all.iter().find(|(_, v)| *v == 0) {
            return Err(format!("{name} must be positive"));
        }
        if self.t_probe >= self.cycle_period {
            return Err("t_probe must be shorter than cycle_period".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TimerKind {
    BroadcastWait,
    AckWindow,
    CountWindow,
    ProbeDeadline(NodeId),
}

impl TimerKind {
    pub fn name(&self) -> String {
        match self {
            TimerKind::BroadcastWait => "bcast_wait".into(),
            TimerKind::AckWindow => "ack_window".into(),
            TimerKind::CountWindow => "count_window".into(),
            TimerKind::ProbeDeadline(n) => format!("probe_deadline:{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Input {
    CycleStart,
    Message(Message),
    Timer(TimerKind),
}

/// Observations a node reports alongside its messages. The engine records
/// them in the trace; analysis reads them back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Note {
    Volunteered,
    Elected {
        candidates: Vec<Candidate>,
    },
    BecameLeader {
        parent: Option<NodeId>,
        /// First leader of the chain this node joined.
        root: NodeId,
    },
    Classified {
        node: NodeId,
        status: StatusBit,
        /// Round-trip time; `None` when the probe deadline expired.
        response: Option<Ticks>,
    },
    Finalized {
        frame: ResultFrame,
    },
    KnownFaulty {
        faulty: Vec<LocalFrame>,
    },
    Violation(String),
}

/// Everything a transition emits.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Effects {
    pub messages: Vec<Message>,
    pub timers: Vec<(TimerKind, Ticks)>,
    pub notes: Vec<Note>,
}

impl Effects {
    pub fn is_empty(&self) -> bool {
        self.messages.is_empty() && self.timers.is_empty() && self.notes.is_empty()
    }
}

/// Static per-cycle environment of one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeEnv {
    pub id: NodeId,
    pub neighbors: Vec<NodeId>,
    /// Every node that is a member of the network this cycle, faulty or not.
    pub roster: Arc<[NodeId]>,
    pub timing: TimingParams,
    pub fault: Option<FaultKind>,
    /// Effective broadcast wait for this node this cycle.
    pub bcast_wait: Ticks,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("no volunteer to elect")]
    NoCandidates,
    #[error("{0} was already a leader this cycle")]
    AlreadyLeader(String),
    #[error("{0} is not fault-free and cannot lead")]
    NotFaultFree(String),
    #[error("{0} did not answer this leader fault-free")]
    NotAResponder(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
}
