//! Local self-test battery and the comparison used to judge a neighbour.

use std::io::{Cursor, Read, Write};
use std::sync::OnceLock;

use crate::frames::{StatusBit, TestVector};

/// Fault injected into a node for the current cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultKind {
    /// The node stops: no self-test output, no messages.
    Crash,
    /// The node keeps running but its memory check has a stuck bit, so its
    /// test vector no longer matches the reference.
    Software,
}

const MEMORY_WORDS: usize = 1024;
const STUCK_BIT: u64 = 1 << 3;

fn io_check() -> u64 {
    let mut sink = Vec::with_capacity(512);
    for i in 0..512u32 {
        sink.write_all(&[(i.wrapping_mul(31) ^ 0x5a) as u8]).expect("write to Vec");
    }
    let mut back = Vec::new();
    Cursor::new(sink).read_to_end(&mut back).expect("read from Cursor");
    back.iter()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

fn float_check() -> u64 {
    let s: f64 = (1..=256).map(|i| (i as f64).sqrt() * 0.5 + (i as f64).ln()).sum();
    s.to_bits()
}

fn arithmetic_check() -> u64 {
    (0..64u64).fold(1u64, |x, i| {
        x.wrapping_mul(6_364_136_223_846_793_005)
            .wrapping_add(1_442_695_040_888_963_407 ^ i)
            .rotate_left((i % 63) as u32)
    })
}

fn memory_check(stuck: bool) -> u64 {
    let mut mem = vec![0u64; MEMORY_WORDS];
    for (i, word) in mem.iter_mut().enumerate() {
        let v = (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        *word = if stuck { v | STUCK_BIT } else { v };
    }
    mem.iter()
        .fold(0u64, |acc, w| acc.wrapping_mul(0x0100_0000_01b3).wrapping_add(*w))
}

fn battery(fault: Option<FaultKind>) -> TestVector {
    TestVector([
        io_check(),
        float_check(),
        arithmetic_check(),
        memory_check(fault == Some(FaultKind::Software)),
    ])
}

/// Result every healthy node computes; what a tester compares against.
pub fn reference_vector() -> TestVector {
    static REFERENCE: OnceLock<TestVector> = OnceLock::new();
    *REFERENCE.get_or_init(|| battery(None))
}

/// Runs the battery. A crashed node produces nothing.
pub fn self_test(fault: Option<FaultKind>) -> Option<(TestVector, StatusBit)> {
    if fault == Some(FaultKind::Crash) {
        return None;
    }
    let r = battery(fault);
    Some((r, classify(&reference_vector(), Some(&r))))
}

/// 0 when the observed result matches the expected one, 1 otherwise or when
/// nothing was received.
pub fn classify(expected: &TestVector, observed: Option<&TestVector>) -> StatusBit {
    match observed {
        Some(r) if r == expected => StatusBit::FaultFree,
        _ => StatusBit::Faulty,
    }
}
