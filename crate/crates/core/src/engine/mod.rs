//! Discrete-event simulation of diagnosis cycles.
//!
//! One global queue holds message deliveries, timer expiries and cycle
//! starts, ordered by `(time, ordinal of the node that acts, per-node
//! sequence number)`. Given a scenario and its seed the run is fully
//! reproducible.

mod exchange;
mod latency;
mod scenario;
mod trace;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::analysis::{tally_cycle, MessageStats};
use crate::frames::{LocalFrame, Ticks};
use crate::protocol::{FaultKind, Input, Node, NodeEnv};
use crate::topology::NodeId;

pub use exchange::{gateway_of, inter_network_exchange, MergedView, NetworkReport};
pub use latency::{deliver, wait_stagger, LatencyModel, LinkStreams};
pub use scenario::{
    load_scenario, parse_scenario, FaultAction, FaultScript, Membership, Scenario, ScenarioError,
    ScriptEntry, DEFAULT_EVENT_BUDGET,
};
pub use trace::{note_detail, Trace, TraceEvent, TraceRecord};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("cycle {cycle} did not quiesce within {budget} events; pending: {}", pending.join("; "))]
    Livelock {
        cycle: u32,
        budget: u64,
        pending: Vec<String>,
    },
}

/// One independent diagnosis run inside a cycle: the chain of leaders that
/// started from one elected node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionReport {
    pub first_leader: NodeId,
    pub leaders_in_order: Vec<NodeId>,
    pub faulty_found: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleReport {
    pub cycle_index: u32,
    /// From the largest session; see `sessions` when the fault-free nodes
    /// are split into several components.
    pub leaders_in_order: Vec<NodeId>,
    pub faulty_found: Vec<NodeId>,
    pub message_stats: MessageStats,
    pub terminated: bool,
    pub sessions: Vec<SessionReport>,
    pub start: Ticks,
    pub end: Ticks,
}

impl CycleReport {
    pub fn render(&self) -> String {
        let names = |v: &[NodeId]| v.iter().map(NodeId::label).collect::<Vec<_>>().join(",");
        let s = &self.message_stats;
        let mut out = format!(
            "Cycle {} faulty={} terminated={}\n  leaders: {}\n  faulty: {}\n  messages: m_r={} m_a={} m_re={} (forward {} backtrack {}) m_bcast={} m_extra={} total={}\n",
            self.cycle_index,
            self.faulty_found.len(),
            self.terminated,
            names(&self.leaders_in_order),
            names(&self.faulty_found),
            s.m_r,
            s.m_a,
            s.m_re(),
            s.m_re_forward,
            s.m_re_backtrack,
            s.m_bcast,
            s.m_extra,
            s.total,
        );
        if self.sessions.len() > 1 {
            for (i, sess) in self.sessions.iter().enumerate() {
                out.push_str(&format!(
                    "  session {} from {}: leaders {} faulty {}\n",
                    i + 1,
                    sess.first_leader,
                    names(&sess.leaders_in_order),
                    names(&sess.faulty_found),
                ));
            }
        }
        out
    }
}

/// State carried from one cycle to the next: membership, fault conditions,
/// the clock and the link random streams. Protocol state is not carried.
#[derive(Debug, Clone)]
pub struct NetworkState {
    pub membership: Membership,
    pub clock: Ticks,
    pub links: LinkStreams,
    /// Faulty lists held by fault-free nodes at the end of the last cycle.
    pub known_faulty: BTreeMap<NodeId, Vec<LocalFrame>>,
}

impl NetworkState {
    pub fn new(s: &Scenario) -> Self {
        Self {
            membership: Membership::new(s.topology.clone()),
            clock: 0,
            links: LinkStreams::new(s.seed),
            known_faulty: BTreeMap::new(),
        }
    }

    /// Applies the script entries due before `cycle`.
    pub fn begin_cycle(&mut self, s: &Scenario, cycle: u32) -> Result<(), ScenarioError> {
        if cycle == 1 {
            self.membership.apply(&s.script, 0)?;
        }
        self.membership.apply(&s.script, cycle)
    }
}

type EventKey = (Ticks, u32, u64);

struct Queue {
    events: BTreeMap<EventKey, Input>,
    seq: Vec<u64>,
}

impl Queue {
    fn push(&mut self, time: Ticks, node: u32, input: Input) {
        let i = node as usize;
        if self.seq.len() <= i {
            self.seq.resize(i + 1, 0);
        }
        let s = self.seq[i];
        self.seq[i] += 1;
        self.events.insert((time, node, s), input);
    }
}

fn describe(key: &EventKey, input: &Input, nodes: &[Node]) -> String {
    let who = nodes[key.1 as usize].id();
    match input {
        Input::CycleStart => format!("t={} {who} cycle start", key.0),
        Input::Timer(k) => format!("t={} {who} timer {}", key.0, k.name()),
        Input::Message(m) => format!("t={} {} -> {who} {}", key.0, m.src, m.kind.name()),
    }
}

/// Runs one cycle to quiescence. The script for this cycle must already be
/// applied to `state`.
pub fn run_cycle(
    s: &Scenario,
    cycle_index: u32,
    state: &mut NetworkState,
) -> Result<(Trace, CycleReport), EngineError> {
    let m = &state.membership;
    let topo = &m.topology;
    let start = state.clock;
    let roster: Arc<[NodeId]> = Arc::from(topo.nodes().to_vec());
    let mut nodes: Vec<Node> = topo
        .nodes()
        .iter()
        .map(|id| {
            let bcast_wait = s.volunteer_waits.get(id.label()).copied().unwrap_or_else(|| {
                s.timing.t_bcast_wait
                    + wait_stagger(s.seed, cycle_index, id.ordinal(), s.latency.jitter_bound)
            });
            Node::new(NodeEnv {
                id: id.clone(),
                neighbors: topo.neighbors(id).expect("member"),
                roster: roster.clone(),
                timing: s.timing,
                fault: m.fault(id),
                bcast_wait,
            })
        })
        .collect();

    let mut trace = Trace::default();
    trace.push(start, TraceEvent::CycleStart { cycle: cycle_index });
    let mut queue = Queue {
        events: BTreeMap::new(),
        seq: vec![0; nodes.len()],
    };
    for id in topo.nodes() {
        queue.push(start, id.ordinal(), Input::CycleStart);
    }

    let mut processed = 0u64;
    let mut now = start;
    while let Some((key, input)) = queue.events.pop_first() {
        processed += 1;
        if processed > s.event_budget {
            let mut pending = vec![describe(&key, &input, &nodes)];
            pending.extend(
                queue
                    .events
                    .iter()
                    .take(9)
                    .map(|(k, i)| describe(k, i, &nodes)),
            );
            return Err(EngineError::Livelock {
                cycle: cycle_index,
                budget: s.event_budget,
                pending,
            });
        }
        debug_assert!(key.0 >= now, "event scheduled in the past");
        now = key.0;
        let node = &mut nodes[key.1 as usize];
        match &input {
            Input::Message(msg) => trace.push(now, TraceEvent::Receive { msg: msg.clone() }),
            Input::Timer(kind) => trace.push(
                now,
                TraceEvent::Timer {
                    node: node.id().clone(),
                    kind: kind.clone(),
                },
            ),
            Input::CycleStart => {}
        }
        let fx = node.handle(now, input);
        let actor = node.id().clone();
        for note in fx.notes {
            trace.push(
                now,
                TraceEvent::Note {
                    node: actor.clone(),
                    note,
                },
            );
        }
        for (kind, at) in fx.timers {
            queue.push(at, key.1, Input::Timer(kind));
        }
        for msg in fx.messages {
            let up = m.fault(&msg.dst) != Some(FaultKind::Crash);
            let rng = state.links.stream(msg.src.ordinal(), msg.dst.ordinal());
            let arrival = deliver(&s.latency, &msg, rng, up);
            trace.push(
                now,
                TraceEvent::Send {
                    msg: msg.clone(),
                    arrival,
                },
            );
            match arrival {
                Some(at) => queue.push(at, msg.dst.ordinal(), Input::Message(msg)),
                None => trace.push(now, TraceEvent::Drop { msg }),
            }
        }
    }

    state.known_faulty = nodes
        .iter()
        .filter(|n| m.fault(n.id()).is_none())
        .filter_map(|n| n.ctx.known_faulty.clone().map(|k| (n.id().clone(), k)))
        .collect();
    let fault_free: BTreeSet<NodeId> = m.fault_free().into_iter().collect();
    let terminated = fault_free.iter().all(|n| state.known_faulty.contains_key(n));
    trace.push(
        now,
        TraceEvent::CycleEnd {
            cycle: cycle_index,
            terminated,
        },
    );

    let tally = tally_cycle(cycle_index, &trace.records);
    let sessions: Vec<SessionReport> = tally
        .sessions
        .iter()
        .map(|t| SessionReport {
            first_leader: t.root.clone(),
            leaders_in_order: t.leaders.iter().map(|l| l.leader.clone()).collect(),
            faulty_found: t.faulty_found.clone().unwrap_or_default(),
        })
        .collect();
    let main = sessions
        .iter()
        .max_by_key(|s| (s.leaders_in_order.len(), std::cmp::Reverse(&s.first_leader)));
    let report = CycleReport {
        cycle_index,
        leaders_in_order: main.map(|s| s.leaders_in_order.clone()).unwrap_or_default(),
        faulty_found: main.map_or_else(
            // Nobody is left to diagnose: every member is faulty.
            || m.faulty().into_iter().collect(),
            |s| s.faulty_found.clone(),
        ),
        message_stats: tally.stats,
        terminated,
        sessions,
        start,
        end: now,
    };
    state.clock = (start + s.timing.cycle_period).max(now + 1);
    Ok((trace, report))
}

/// Full result of a periodic run.
#[derive(Debug, Clone)]
pub struct Run {
    pub trace: Trace,
    pub reports: Vec<CycleReport>,
    pub state: NetworkState,
}

pub fn simulate(s: &Scenario) -> Result<Run, EngineError> {
    s.validate()?;
    let mut state = NetworkState::new(s);
    let mut trace = Trace::default();
    let mut reports = Vec::with_capacity(s.cycles as usize);
    for cycle in 1..=s.cycles {
        state.begin_cycle(s, cycle)?;
        let (t, r) = run_cycle(s, cycle, &mut state)?;
        trace.extend(t);
        reports.push(r);
    }
    Ok(Run {
        trace,
        reports,
        state,
    })
}

pub fn run_periodic(s: &Scenario) -> Result<Vec<CycleReport>, EngineError> {
    simulate(s).map(|r| r.reports)
}
