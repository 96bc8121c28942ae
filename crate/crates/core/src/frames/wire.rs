//! Canonical binary layout.
//!
//! ```text
//! message  = tag:u8 src:node dst:node send_time:u64 payload
//! node     = ordinal:u32 label_len:u16 label:utf8
//! frame    = node status:u8 leader:u8
//! rframe   = count:u32 frame*
//! ```
//! All integers are big-endian.

use thiserror::Error;

use super::{Direction, LocalFrame, Message, MessageKind, ResultFrame, StatusBit, TestVector};
use crate::topology::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("truncated input at byte {offset}: need {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("unknown message tag {tag} at byte {offset}")]
    BadTag { offset: usize, tag: u8 },
    #[error("invalid bit value {value} at byte {offset}")]
    BadBit { offset: usize, value: u8 },
    #[error("label is not UTF-8 at byte {offset}")]
    Utf8 { offset: usize },
    #[error("{count} trailing bytes at byte {offset}")]
    Trailing { offset: usize, count: usize },
}

const TAG_VOLUNTEER: u8 = 0;
const TAG_VOLUNTEER_ACK: u8 = 1;
const TAG_COUNT: u8 = 2;
const TAG_ANNOUNCE: u8 = 3;
const TAG_PROBE: u8 = 4;
const TAG_PROBE_ACK: u8 = 5;
const TAG_TRANSFER: u8 = 6;
const TAG_FINAL: u8 = 7;
const TAG_INTER: u8 = 8;

pub fn encode(m: &Message) -> Vec<u8> {
    let mut w = Writer(Vec::with_capacity(64));
    let tag = match &m.kind {
        MessageKind::VolunteerBroadcast => TAG_VOLUNTEER,
        MessageKind::VolunteerAck(_) => TAG_VOLUNTEER_ACK,
        MessageKind::CountExchange { .. } => TAG_COUNT,
        MessageKind::LeaderAnnounce(_) => TAG_ANNOUNCE,
        MessageKind::ProbeRequest(_) => TAG_PROBE,
        MessageKind::ProbeAck { .. } => TAG_PROBE_ACK,
        MessageKind::ResultTransfer { .. } => TAG_TRANSFER,
        MessageKind::FinalBroadcast(_) => TAG_FINAL,
        MessageKind::InterNetworkReport { .. } => TAG_INTER,
    };
    w.u8(tag);
    w.node(&m.src);
    w.node(&m.dst);
    w.u64(m.send_time);
    match &m.kind {
        MessageKind::VolunteerBroadcast => {}
        MessageKind::VolunteerAck(f)
        | MessageKind::LeaderAnnounce(f)
        | MessageKind::ProbeRequest(f) => w.frame(f),
        MessageKind::CountExchange {
            origin,
            ack_count,
            broadcast_time,
        } => {
            w.node(origin);
            w.u32(*ack_count);
            w.u64(*broadcast_time);
        }
        MessageKind::ProbeAck { frame, result } => {
            w.frame(frame);
            for word in result.0 {
                w.u64(word);
            }
        }
        MessageKind::ResultTransfer { frame, direction } => {
            w.u8(match direction {
                Direction::Forward => 0,
                Direction::Backtrack => 1,
            });
            w.frames(frame.entries());
        }
        MessageKind::FinalBroadcast(faulty) => w.frames(faulty),
        MessageKind::InterNetworkReport {
            faulty,
            origin_network,
        } => {
            w.str(origin_network);
            w.frames(faulty);
        }
    }
    w.0
}

pub fn decode(bytes: &[u8]) -> Result<Message, DecodeError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let tag_at = r.pos;
    let tag = r.u8()?;
    let src = r.node()?;
    let dst = r.node()?;
    let send_time = r.u64()?;
    let kind = match tag {
        TAG_VOLUNTEER => MessageKind::VolunteerBroadcast,
        TAG_VOLUNTEER_ACK => MessageKind::VolunteerAck(r.frame()?),
        TAG_COUNT => MessageKind::CountExchange {
            origin: r.node()?,
            ack_count: r.u32()?,
            broadcast_time: r.u64()?,
        },
        TAG_ANNOUNCE => MessageKind::LeaderAnnounce(r.frame()?),
        TAG_PROBE => MessageKind::ProbeRequest(r.frame()?),
        TAG_PROBE_ACK => {
            let frame = r.frame()?;
            let mut words = [0u64; 4];
            for w in &mut words {
                *w = r.u64()?;
            }
            MessageKind::ProbeAck {
                frame,
                result: TestVector(words),
            }
        }
        TAG_TRANSFER => {
            let at = r.pos;
            let direction = match r.u8()? {
                0 => Direction::Forward,
                1 => Direction::Backtrack,
                value => return Err(DecodeError::BadBit { offset: at, value }),
            };
            MessageKind::ResultTransfer {
                frame: ResultFrame::from_entries_unchecked(r.frames()?),
                direction,
            }
        }
        TAG_FINAL => MessageKind::FinalBroadcast(r.frames()?),
        TAG_INTER => MessageKind::InterNetworkReport {
            origin_network: r.str()?,
            faulty: r.frames()?,
        },
        tag => return Err(DecodeError::BadTag { offset: tag_at, tag }),
    };
    if r.pos != bytes.len() {
        return Err(DecodeError::Trailing {
            offset: r.pos,
            count: bytes.len() - r.pos,
        });
    }
    Ok(Message {
        kind,
        src,
        dst,
        send_time,
    })
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn str(&mut self, s: &str) {
        let len = u16::try_from(s.len()).expect("label longer than 65535 bytes");
        self.u16(len);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn node(&mut self, id: &NodeId) {
        self.u32(id.ordinal());
        self.str(id.label());
    }
    fn frame(&mut self, f: &LocalFrame) {
        self.node(&f.address);
        self.u8(f.status.as_u8());
        self.u8(u8::from(f.leader));
    }
    fn frames(&mut self, fs: &[LocalFrame]) {
        self.u32(fs.len() as u32);
        for f in fs {
            self.frame(f);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let rest = self.buf.len() - self.pos;
        if rest < n {
            return Err(DecodeError::Truncated {
                offset: self.pos,
                needed: n - rest,
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String, DecodeError> {
        let len = self.u16()? as usize;
        let at = self.pos;
        let raw = self.take(len)?;
        std::str::from_utf8(raw)
            .map(str::to_owned)
            .map_err(|_| DecodeError::Utf8 { offset: at })
    }
    fn node(&mut self) -> Result<NodeId, DecodeError> {
        let ordinal = self.u32()?;
        Ok(NodeId::new(ordinal, self.str()?))
    }
    fn bit(&mut self) -> Result<u8, DecodeError> {
        let at = self.pos;
        match self.u8()? {
            v @ (0 | 1) => Ok(v),
            value => Err(DecodeError::BadBit { offset: at, value }),
        }
    }
    fn frame(&mut self) -> Result<LocalFrame, DecodeError> {
        let address = self.node()?;
        let status = StatusBit::from_u8(self.bit()?).expect("bit checked");
        let leader = self.bit()? == 1;
        Ok(LocalFrame {
            address,
            status,
            leader,
        })
    }
    fn frames(&mut self) -> Result<Vec<LocalFrame>, DecodeError> {
        let count = self.u32()? as usize;
        // each frame is at least 8 bytes; reject absurd counts before allocating
        let min = count.saturating_mul(8);
        if self.buf.len() - self.pos < min {
            return Err(DecodeError::Truncated {
                offset: self.pos,
                needed: min - (self.buf.len() - self.pos),
            });
        }
        (0..count).map(|_| self.frame()).collect()
    }
}
