use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{run_periodic, FaultScript, Scenario};
use crate::topology::Topology;

use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub faults: usize,
    pub mean_total_messages: f64,
}

/// For each fault count, runs `trials` single cycles with that many random
/// crashed nodes and averages the total message count.
pub fn fault_sweep(
    topology: &Topology,
    fault_counts: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<SweepRow>, AnalysisError> {
    let n = topology.len();
    if let Some(&k) = fault_counts.iter().find(|&&k| k + 1 > n) {
        return Err(AnalysisError::TooManyFaults { faults: k, nodes: n });
    }
    if trials == 0 {
        return Err(AnalysisError::Formula("trials must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = Scenario::new("sweep", topology.clone());
    let mut rows = Vec::with_capacity(fault_counts.len());
    for &k in fault_counts {
        let mut sum = 0u64;
        for _ in 0..trials {
            let victims = sample(&mut rng, n, k);
            let mut s = base.clone();
            s.seed = rng.gen();
            s.script = FaultScript::crash_all(
                1,
                victims.iter().map(|i| topology.nodes()[i].label()),
            );
            let reports = run_periodic(&s)?;
            sum += reports[0].message_stats.total;
        }
        rows.push(SweepRow {
            faults: k,
            mean_total_messages: sum as f64 / trials as f64,
        });
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("faults,mean_total_messages\n");
    for r in rows {
        let _ = writeln!(out, "{},{:.3}", r.faults, r.mean_total_messages);
    }
    out
}
