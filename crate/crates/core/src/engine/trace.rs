use std::fmt::Write as _;

use crate::frames::{LocalFrame, Message, Ticks};
use crate::protocol::{Note, TimerKind};
use crate::topology::NodeId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEvent {
    CycleStart {
        cycle: u32,
    },
    /// A message leaving its sender. `arrival` is `None` when dropped.
    Send {
        msg: Message,
        arrival: Option<Ticks>,
    },
    Drop {
        msg: Message,
    },
    Receive {
        msg: Message,
    },
    Timer {
        node: NodeId,
        kind: TimerKind,
    },
    Note {
        node: NodeId,
        note: Note,
    },
    CycleEnd {
        cycle: u32,
        terminated: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub time: Ticks,
    pub event: TraceEvent,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

fn labels(frames: &[LocalFrame]) -> String {
    frames
        .iter()
        .map(|f| f.address.label())
        .collect::<Vec<_>>()
        .join(",")
}

pub fn note_detail(note: &Note) -> String {
    match note {
        Note::Volunteered => "volunteered".into(),
        Note::Elected { candidates } => {
            let c: Vec<String> = candidates
                .iter()
                .map(|c| format!("{}:{}@{}", c.id, c.ack_count, c.broadcast_time))
                .collect();
            format!("elected candidates=[{}]", c.join(","))
        }
        Note::BecameLeader { parent, root } => match parent {
            Some(p) => format!("leader parent={p} root={root}"),
            None => format!("leader root={root}"),
        },
        Note::Classified {
            node,
            status,
            response,
        } => match response {
            Some(r) => format!("classified {node}={} rtt={r}", status.as_u8()),
            None => format!("classified {node}={} timeout", status.as_u8()),
        },
        Note::Finalized { frame } => {
            let e: Vec<String> = frame
                .entries()
                .iter()
                .map(|e| format!("{}:{}{}", e.address, e.status.as_u8(), u8::from(e.leader)))
                .collect();
            format!("finalized rf=[{}]", e.join(","))
        }
        Note::KnownFaulty { faulty } => format!("known_faulty=[{}]", labels(faulty)),
        Note::Violation(v) => format!("violation {v}"),
    }
}

impl Trace {
    pub fn push(&mut self, time: Ticks, event: TraceEvent) {
        self.records.push(TraceRecord { time, event });
    }

    pub fn extend(&mut self, other: Trace) {
        self.records.extend(other.records);
    }

    /// Splits the trace at cycle markers. Records before the first marker are
    /// discarded.
    pub fn cycles(&self) -> Vec<(u32, &[TraceRecord])> {
        let mut out = Vec::new();
        let mut open: Option<(u32, usize)> = None;
        for (i, r) in self.records.iter().enumerate() {
            match r.event {
                TraceEvent::CycleStart { cycle } => open = Some((cycle, i)),
                TraceEvent::CycleEnd { cycle, .. } => {
                    if let Some((c, start)) = open.take() {
                        if c == cycle {
                            out.push((cycle, &self.records[start..=i]));
                        }
                    }
                }
                _ => {}
            }
        }
        out
    }

    /// Line-delimited `<time>\t<kind>\t<src>\t<dst>\t<detail>` export.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let (kind, src, dst, detail) = match &r.event {
                TraceEvent::CycleStart { cycle } => {
                    ("cycle_start", "-".to_owned(), "-".to_owned(), format!("cycle={cycle}"))
                }
                TraceEvent::Send { msg, arrival } => {
                    let at = arrival.map_or_else(|| "dropped".to_owned(), |a| format!("arrival={a}"));
                    ("send", msg.src.to_string(), msg.dst.to_string(), join(msg, &at))
                }
                TraceEvent::Drop { msg } => (
                    "drop",
                    msg.src.to_string(),
                    msg.dst.to_string(),
                    msg.kind.name().to_owned(),
                ),
                TraceEvent::Receive { msg } => (
                    "recv",
                    msg.src.to_string(),
                    msg.dst.to_string(),
                    join(msg, &format!("sent={}", msg.send_time)),
                ),
                TraceEvent::Timer { node, kind } => ("timer", node.to_string(), "-".to_owned(), kind.name()),
                TraceEvent::Note { node, note } => ("note", node.to_string(), "-".to_owned(), note_detail(note)),
                TraceEvent::CycleEnd { cycle, terminated } => (
                    "cycle_end",
                    "-".to_owned(),
                    "-".to_owned(),
                    format!("cycle={cycle} terminated={terminated}"),
                ),
            };
            let _ = writeln!(out, "{}\t{kind}\t{src}\t{dst}\t{detail}", r.time);
        }
        out
    }
}

fn join(msg: &Message, tail: &str) -> String {
    let d = msg.detail();
    if d.is_empty() {
        format!("{} {tail}", msg.kind.name())
    } else {
        format!("{} {d} {tail}", msg.kind.name())
    }
}
