use std::cmp::Reverse;

use super::ProtocolError;
use crate::frames::Ticks;
use crate::topology::NodeId;

/// A volunteer's claim, as exchanged between volunteers.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Candidate {
    pub id: NodeId,
    pub ack_count: u32,
    pub broadcast_time: Ticks,
}

/// Most acknowledgements wins; then the earliest broadcaster; then the
/// smallest ordinal.
pub fn elect_leader(candidates: &[Candidate]) -> Result<NodeId, ProtocolError> {
    candidates
        .iter()
        .max_by_key(|c| (c.ack_count, Reverse(c.broadcast_time), Reverse(&c.id)))
        .map(|c| c.id.clone())
        .ok_or(ProtocolError::NoCandidates)
}
