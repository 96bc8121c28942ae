use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::frames::{Message, Ticks};

const LINK_STREAM: u64 = 1 << 60;
const WAIT_STREAM: u64 = 2 << 60;

/// Per-hop latency: `base` plus a uniform draw in `[0, jitter_bound]`, unless
/// the link has a fixed override.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatencyModel {
    pub base: Ticks,
    pub jitter_bound: Ticks,
    /// Fixed latency for specific links, keyed by the two labels in sorted
    /// order. Applies to both directions.
    pub overrides: BTreeMap<(String, String), Ticks>,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            base: 1,
            jitter_bound: 2,
            overrides: BTreeMap::new(),
        }
    }
}

impl LatencyModel {
    pub fn fixed(base: Ticks) -> Self {
        Self {
            base,
            jitter_bound: 0,
            overrides: BTreeMap::new(),
        }
    }

    pub fn set_link(&mut self, a: &str, b: &str, ticks: Ticks) {
        self.overrides.insert(link_key(a, b), ticks);
    }

    pub fn link(&self, a: &str, b: &str) -> Option<Ticks> {
        self.overrides.get(&link_key(a, b)).copied()
    }

    /// Worst single-hop latency any message can see.
    pub fn max_hop(&self) -> Ticks {
        self.overrides
            .values()
            .copied()
            .fold(self.base + self.jitter_bound, Ticks::max)
    }
}

fn link_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_owned(), b.to_owned())
    } else {
        (b.to_owned(), a.to_owned())
    }
}

/// Seeded random streams, one per directed link, so a link's jitter sequence
/// does not depend on traffic elsewhere.
#[derive(Debug, Clone)]
pub struct LinkStreams {
    seed: u64,
    streams: HashMap<(u32, u32), ChaCha8Rng>,
}

impl LinkStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            streams: HashMap::new(),
        }
    }

    pub fn stream(&mut self, src: u32, dst: u32) -> &mut ChaCha8Rng {
        let seed = self.seed;
        self.streams.entry((src, dst)).or_insert_with(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(LINK_STREAM | (u64::from(src) << 28) | u64::from(dst));
            rng
        })
    }
}

/// Extra broadcast wait drawn for one node in one cycle.
pub fn wait_stagger(seed: u64, cycle: u32, node: u32, jitter_bound: Ticks) -> Ticks {
    if jitter_bound == 0 {
        return 0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(WAIT_STREAM | (u64::from(cycle) << 28) | u64::from(node));
    rng.gen_range(0..=jitter_bound)
}

/// Arrival time of `msg`, or `None` when the destination cannot receive.
pub fn deliver(
    model: &LatencyModel,
    msg: &Message,
    rng: &mut ChaCha8Rng,
    dst_up: bool,
) -> Option<Ticks> {
    if !dst_up {
        return None;
    }
    if let Some(fixed) = model.link(msg.src.label(), msg.dst.label()) {
        return Some(msg.send_time + fixed);
    }
    let jitter = if model.jitter_bound == 0 {
        0
    } else {
        rng.gen_range(0..=model.jitter_bound)
    };
    Some(msg.send_time + model.base + jitter)
}
