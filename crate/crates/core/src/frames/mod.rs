//! Frames and messages exchanged by the diagnosis protocol.
//!
//! A [`LocalFrame`] is the three-field record every node keeps about itself
//! (address, status bit, leader bit). Acknowledgement and request frames are
//! plain copies of it. The [`ResultFrame`] is the ledger a leader grows while
//! probing and hands on to the next leader.

mod wire;

use std::fmt;

use thiserror::Error;

use crate::topology::NodeId;

pub use wire::{decode, encode, DecodeError};

/// Simulated time, in ticks.
pub type Ticks = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StatusBit {
    FaultFree = 0,
    Faulty = 1,
}

impl StatusBit {
    pub fn is_faulty(self) -> bool {
        self == StatusBit::Faulty
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(StatusBit::FaultFree),
            1 => Some(StatusBit::Faulty),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LocalFrame {
    pub address: NodeId,
    pub status: StatusBit,
    pub leader: bool,
}

impl LocalFrame {
    /// A fresh frame: the leader bit starts cleared every cycle.
    pub fn new(address: NodeId, status: StatusBit) -> Self {
        Self {
            address,
            status,
            leader: false,
        }
    }

    pub fn with_leader(mut self, leader: bool) -> Self {
        self.leader = leader;
        self
    }

    /// `label\tstatus\tleader`
    pub fn render(&self) -> String {
        format!(
            "{}\t{}\t{}",
            self.address,
            self.status.as_u8(),
            u8::from(self.leader)
        )
    }
}

impl fmt::Display for LocalFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{{status: {}, ip: {}, leader: {}}}",
            self.status.as_u8(),
            self.address,
            u8::from(self.leader)
        )
    }
}

pub fn new_local_frame(id: NodeId, status: StatusBit) -> LocalFrame {
    LocalFrame::new(id, status)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("{address} already recorded with status {existing:?}, refusing {requested:?}")]
    StatusConflict {
        address: String,
        existing: StatusBit,
        requested: StatusBit,
    },
    #[error("{0} is faulty and cannot carry a leader bit")]
    FaultyLeader(String),
}

/// Ordered per-node ledger. Addresses are unique; a recorded status never
/// changes and a leader bit only ever goes from 0 to 1.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct ResultFrame {
    entries: Vec<LocalFrame>,
}

impl ResultFrame {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[LocalFrame] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &NodeId) -> Option<&LocalFrame> {
        self.entries.iter().find(|e| &e.address == id)
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.get(id).is_some()
    }

    /// Inserts a new address at the end, or raises the leader bit of an
    /// existing entry with the same status. Existing positions never move and
    /// the frame is untouched on error.
    pub fn upsert(&mut self, entry: LocalFrame) -> Result<(), FrameError> {
        if entry.leader && entry.status.is_faulty() {
            return Err(FrameError::FaultyLeader(entry.address.label().to_owned()));
        }
        match self.entries.iter_mut().find(|e| e.address == entry.address) {
            None => self.entries.push(entry),
            Some(existing) if existing.status != entry.status => {
                return Err(FrameError::StatusConflict {
                    address: entry.address.label().to_owned(),
                    existing: existing.status,
                    requested: entry.status,
                })
            }
            Some(existing) => existing.leader |= entry.leader,
        }
        Ok(())
    }

    /// Entries with status Faulty, in frame order.
    pub fn extract_faulty(&self) -> Vec<LocalFrame> {
        self.entries
            .iter()
            .filter(|e| e.status.is_faulty())
            .cloned()
            .collect()
    }

    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|e| e.render() + "\n")
            .collect()
    }

    /// Builds a frame from raw entries without the upsert checks; used by the
    /// decoder, which must reproduce whatever was encoded.
    pub(crate) fn from_entries_unchecked(entries: Vec<LocalFrame>) -> Self {
        Self { entries }
    }
}

pub fn upsert_entry(mut rf: ResultFrame, entry: LocalFrame) -> Result<ResultFrame, FrameError> {
    rf.upsert(entry)?;
    Ok(rf)
}

pub fn extract_faulty(rf: &ResultFrame) -> Vec<LocalFrame> {
    rf.extract_faulty()
}

/// Outcome vector of the local self-test battery: one word per check
/// (I/O, floating point, arithmetic, memory).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TestVector(pub [u64; 4]);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Backtrack,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum MessageKind {
    VolunteerBroadcast,
    VolunteerAck(LocalFrame),
    /// Flooded among volunteers; `origin` is the volunteer whose count this is.
    CountExchange {
        origin: NodeId,
        ack_count: u32,
        broadcast_time: Ticks,
    },
    LeaderAnnounce(LocalFrame),
    ProbeRequest(LocalFrame),
    ProbeAck {
        frame: LocalFrame,
        result: TestVector,
    },
    ResultTransfer {
        frame: ResultFrame,
        direction: Direction,
    },
    FinalBroadcast(Vec<LocalFrame>),
    InterNetworkReport {
        faulty: Vec<LocalFrame>,
        origin_network: String,
    },
}

impl MessageKind {
    pub fn name(&self) -> &'static str {
        match self {
            MessageKind::VolunteerBroadcast => "volunteer",
            MessageKind::VolunteerAck(_) => "volunteer_ack",
            MessageKind::CountExchange { .. } => "count",
            MessageKind::LeaderAnnounce(_) => "announce",
            MessageKind::ProbeRequest(_) => "probe",
            MessageKind::ProbeAck { .. } => "probe_ack",
            MessageKind::ResultTransfer {
                direction: Direction::Forward,
                ..
            } => "transfer",
            MessageKind::ResultTransfer {
                direction: Direction::Backtrack,
                ..
            } => "backtrack",
            MessageKind::FinalBroadcast(_) => "final",
            MessageKind::InterNetworkReport { .. } => "internet",
        }
    }

    pub fn is_election(&self) -> bool {
        matches!(
            self,
            MessageKind::VolunteerBroadcast
                | MessageKind::VolunteerAck(_)
                | MessageKind::CountExchange { .. }
                | MessageKind::LeaderAnnounce(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Message {
    pub kind: MessageKind,
    pub src: NodeId,
    pub dst: NodeId,
    pub send_time: Ticks,
}

impl Message {
    /// One-line payload summary used by trace exports.
    pub fn detail(&self) -> String {
        fn labels(frames: &[LocalFrame]) -> String {
            frames
                .iter()
                .map(|f| f.address.label())
                .collect::<Vec<_>>()
                .join(",")
        }
        match &self.kind {
            MessageKind::VolunteerBroadcast => String::new(),
            MessageKind::VolunteerAck(f) => format!("status={}", f.status.as_u8()),
            MessageKind::CountExchange {
                origin,
                ack_count,
                broadcast_time,
            } => format!("origin={origin} acks={ack_count} at={broadcast_time}"),
            MessageKind::LeaderAnnounce(f) => format!("leader={}", f.address),
            MessageKind::ProbeRequest(f) => format!("leader={}", f.address),
            MessageKind::ProbeAck { frame, .. } => format!("status={}", frame.status.as_u8()),
            MessageKind::ResultTransfer { frame, .. } => {
                let entries: Vec<String> = frame
                    .entries()
                    .iter()
                    .map(|e| format!("{}:{}{}", e.address, e.status.as_u8(), u8::from(e.leader)))
                    .collect();
                format!("rf=[{}]", entries.join(","))
            }
            MessageKind::FinalBroadcast(faulty) => format!("faulty=[{}]", labels(faulty)),
            MessageKind::InterNetworkReport {
                faulty,
                origin_network,
            } => format!("from={origin_network} faulty=[{}]", labels(faulty)),
        }
    }
}
