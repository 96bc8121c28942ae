//! Simulator and protocol library for periodic, leader-driven fault
//! diagnosis in networks of arbitrary topology.
//!
//! Each cycle a leader is elected, then leadership walks the fault-free part
//! of the network depth-first. Every leader tests its untested neighbours and
//! passes a shared result frame on; the last leader broadcasts the list of
//! faulty nodes.
//!
//! ```
//! use dpafd_core::{run_periodic, FaultScript, Scenario, Topology};
//!
//! let topo: Topology = "A: B C\nB: D\nC: D\nD:\n".parse().unwrap();
//! let mut s = Scenario::new("lab", topo);
//! s.script = FaultScript::crash_all(1, ["C"]);
//! let reports = run_periodic(&s).unwrap();
//! let faulty: Vec<&str> = reports[0].faulty_found.iter().map(|n| n.label()).collect();
//! assert_eq!(faulty, ["C"]);
//! ```

pub mod analysis;
pub mod engine;
pub mod frames;
pub mod protocol;
pub mod topology;

pub use analysis::{
    check_diagnosis, count_messages, eval_cycle_formula, eval_single_leader_formula, fault_sweep,
    sweep_csv, MessageStats, Verdict,
};
pub use engine::{
    inter_network_exchange, load_scenario, parse_scenario, run_cycle, run_periodic, simulate,
    CycleReport, EngineError, FaultAction, FaultScript, MergedView, NetworkReport, Scenario,
    Trace,
};
pub use frames::{Direction, LocalFrame, Message, MessageKind, ResultFrame, StatusBit, Ticks};
pub use protocol::{FaultKind, TimingParams};
pub use topology::{parse_topology, NodeId, Topology};
