//! Message accounting, diagnosis verdicts and fault sweeps over traces.

mod accounting;
mod sweep;
mod verdict;

use thiserror::Error;

use crate::engine::{EngineError, ScenarioError};

pub use accounting::{
    count_messages, eval_cycle_formula, eval_single_leader_formula, tally_cycle, CycleTally,
    LeaderTally, MessageStats, SessionTally,
};
pub use sweep::{fault_sweep, sweep_csv, SweepRow};
pub use verdict::{check_cycle, check_diagnosis, Verdict};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("trace has no complete cycle")]
    NoCycles,
    #[error("{0}")]
    Formula(String),
    #[error("{faults} faults on {nodes} nodes: at most n-1 = {} nodes can be faulty", nodes.saturating_sub(1))]
    TooManyFaults { faults: usize, nodes: usize },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}
