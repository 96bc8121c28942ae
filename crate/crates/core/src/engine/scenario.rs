//! Scenario description, its text format, and fault-script replay.
//!
//! ```text
//! network vlan30
//! topology vlan30.topo        # relative to the scenario file
//! seed 7
//! cycles 2
//! latency 1 0                 # base jitter_bound
//! timing t_probe=20 t_bcast_wait=400
//! volunteer 172.16.30.110 5   # fixed broadcast wait for one node
//! link 172.16.30.108 172.16.30.107 3
//! gateway 172.16.30.110
//! budget 1000000
//!
//! [script]
//! cycle 1 crash 172.16.30.102
//! cycle 2 repair 172.16.30.102
//! cycle 2 join 172.16.30.120 172.16.30.110
//! ```
//!
//! A `[topology]` section may replace the `topology` line.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::latency::LatencyModel;
use crate::frames::Ticks;
use crate::protocol::{FaultKind, TimingParams};
use crate::topology::{parse_topology, NodeId, Topology, TopologyError};

pub const DEFAULT_EVENT_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FaultAction {
    Crash,
    SoftwareFault,
    Repair,
    /// The node enters the network attached to these neighbours.
    Join(Vec<String>),
}

impl FaultAction {
    pub fn name(&self) -> &'static str {
        match self {
            FaultAction::Crash => "crash",
            FaultAction::SoftwareFault => "software",
            FaultAction::Repair => "repair",
            FaultAction::Join(_) => "join",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScriptEntry {
    pub node: String,
    pub action: FaultAction,
    /// Applied just before this cycle starts. Cycles are numbered from 1;
    /// cycle 0 entries apply before cycle 1 entries.
    pub at_cycle: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultScript {
    pub entries: Vec<ScriptEntry>,
}

impl FaultScript {
    pub fn push(&mut self, at_cycle: u32, node: &str, action: FaultAction) -> &mut Self {
        self.entries.push(ScriptEntry {
            node: node.to_owned(),
            action,
            at_cycle,
        });
        self
    }

    pub fn crash_all<'a>(at_cycle: u32, nodes: impl IntoIterator<Item = &'a str>) -> Self {
        let mut s = Self::default();
        for n in nodes {
            s.push(at_cycle, n, FaultAction::Crash);
        }
        s
    }

    fn at(&self, cycle: u32) -> impl Iterator<Item = &ScriptEntry> {
        self.entries.iter().filter(move |e| e.at_cycle == cycle)
    }

    fn last_cycle(&self) -> u32 {
        self.entries.iter().map(|e| e.at_cycle).max().unwrap_or(0)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    TopologyFile {
        path: PathBuf,
        source: TopologyError,
    },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("script at cycle {cycle}: {reason}")]
    Script { cycle: u32, reason: String },
}

/// Who is in the network and what is wrong with them, for one cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Membership {
    pub topology: Topology,
    pub faults: BTreeMap<u32, FaultKind>,
}

impl Membership {
    pub fn new(topology: Topology) -> Self {
        Self {
            topology,
            faults: BTreeMap::new(),
        }
    }

    pub fn fault(&self, id: &NodeId) -> Option<FaultKind> {
        self.faults.get(&id.ordinal()).copied()
    }

    pub fn faulty(&self) -> BTreeSet<NodeId> {
        self.topology
            .nodes()
            .iter()
            .filter(|n| self.faults.contains_key(&n.ordinal()))
            .cloned()
            .collect()
    }

    pub fn fault_free(&self) -> Vec<NodeId> {
        self.topology
            .nodes()
            .iter()
            .filter(|n| !self.faults.contains_key(&n.ordinal()))
            .cloned()
            .collect()
    }

    /// Applies every script entry for `cycle`.
    pub fn apply(&mut self, script: &FaultScript, cycle: u32) -> Result<(), ScenarioError> {
        let err = |reason: String| ScenarioError::Script { cycle, reason };
        let mut seen = BTreeSet::new();
        for e in script.at(cycle) {
            if !seen.insert(e.node.as_str()) {
                return Err(err(format!("more than one action for {}", e.node)));
            }
            if let FaultAction::Join(neighbors) = &e.action {
                if self.topology.lookup(&e.node).is_ok() {
                    return Err(err(format!("{} is already a member and cannot join", e.node)));
                }
                let nbs: Vec<&str> = neighbors.iter().map(String::as_str).collect();
                self.topology = self
                    .topology
                    .with_node(&e.node, &nbs)
                    .map_err(|t| err(t.to_string()))?;
                continue;
            }
            let id = self
                .topology
                .lookup(&e.node)
                .map_err(|_| err(format!("{} is not a member", e.node)))?
                .clone();
            match e.action {
                FaultAction::Crash => {
                    self.faults.insert(id.ordinal(), FaultKind::Crash);
                }
                FaultAction::SoftwareFault => {
                    self.faults.insert(id.ordinal(), FaultKind::Software);
                }
                FaultAction::Repair => {
                    if self.faults.remove(&id.ordinal()).is_none() {
                        return Err(err(format!("{} is not faulty and cannot be repaired", e.node)));
                    }
                }
                FaultAction::Join(_) => unreachable!(),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub network_id: String,
    pub topology: Topology,
    pub script: FaultScript,
    pub timing: TimingParams,
    pub latency: LatencyModel,
    pub seed: u64,
    pub cycles: u32,
    /// Nodes with a fixed broadcast wait instead of the staggered default.
    pub volunteer_waits: BTreeMap<String, Ticks>,
    pub gateway: Option<String>,
    pub event_budget: u64,
}

impl Scenario {
    /// One cycle, no faults, default timing with the count window widened
    /// to cover a flood across the whole graph.
    pub fn new(network_id: impl Into<String>, topology: Topology) -> Self {
        let latency = LatencyModel::default();
        let mut timing = TimingParams::default();
        let n = topology.len() as u64;
        let needed = latency.jitter_bound + n * latency.max_hop() + 1;
        timing.t_count_window = timing.t_count_window.max(needed);
        Self {
            network_id: network_id.into(),
            topology,
            script: FaultScript::default(),
            timing,
            latency,
            seed: 0,
            cycles: 1,
            volunteer_waits: BTreeMap::new(),
            gateway: None,
            event_budget: DEFAULT_EVENT_BUDGET,
        }
    }

    /// Membership in effect during `cycle`.
    pub fn membership_at(&self, cycle: u32) -> Result<Membership, ScenarioError> {
        let mut m = Membership::new(self.topology.clone());
        for c in 0..=cycle {
            m.apply(&self.script, c)?;
        }
        Ok(m)
    }

    fn all_labels(&self) -> BTreeSet<String> {
        let mut labels: BTreeSet<String> =
            self.topology.nodes().iter().map(|n| n.label().to_owned()).collect();
        for e in &self.script.entries {
            if matches!(e.action, FaultAction::Join(_)) {
                labels.insert(e.node.clone());
            }
        }
        labels
    }

    /// Checks parameters, replays the script, and checks that the timeouts
    /// are long enough for the latency model.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |s: String| Err(ScenarioError::Invalid(s));
        if self.cycles == 0 {
            return invalid("cycles must be at least 1".into());
        }
        if self.topology.is_empty() {
            return invalid("topology has no nodes".into());
        }
        if !self.topology.is_connected() {
            return invalid("topology is not connected".into());
        }
        if self.event_budget == 0 {
            return invalid("event budget must be positive".into());
        }
        self.timing.check().map_err(ScenarioError::Invalid)?;
        let t = &self.timing;
        let lat = &self.latency;
        if lat.base < 1 {
            return invalid("latency base must be at least 1".into());
        }
        let hop = lat.max_hop();
        if hop >= t.t_probe.min(t.t_bcast_wait) {
            return invalid(format!(
                "worst hop latency {hop} must be below both t_probe and t_bcast_wait"
            ));
        }
        if 2 * hop >= t.t_probe {
            return invalid(format!("t_probe {} must exceed a round trip of {}", t.t_probe, 2 * hop));
        }
        if 2 * hop >= t.t_ack_window {
            return invalid(format!(
                "t_ack_window {} must exceed a round trip of {}",
                t.t_ack_window,
                2 * hop
            ));
        }
        for c in 0..=self.script.last_cycle() {
            self.membership_at(c)?;
        }
        let labels = self.all_labels();
        let known = |l: &str| labels.contains(l);
        for l in self.volunteer_waits.keys() {
            if !known(l) {
                return invalid(format!("volunteer names unknown node {l}"));
            }
        }
        for (a, b) in lat.overrides.keys() {
            if !known(a) || !known(b) {
                return invalid(format!("link {a} {b} names an unknown node"));
            }
        }
        if let Some(g) = &self.gateway {
            if !known(g) {
                return invalid(format!("gateway names unknown node {g}"));
            }
        }
        self.check_election_windows(labels.len() as u64, hop)
    }

    /// Volunteers whose broadcast waits fall close together must all hear
    /// each other's counts before anyone decides. Waits far apart form
    /// separate tiers: an earlier tier's announcement reaches a later tier
    /// before it would volunteer.
    fn check_election_windows(&self, n: u64, hop: Ticks) -> Result<(), ScenarioError> {
        let t = &self.timing;
        let flood = n.saturating_sub(1) * hop;
        let mut waits: Vec<(Ticks, Ticks)> = self.volunteer_waits.values().map(|w| (*w, *w)).collect();
        if self.volunteer_waits.len() < n as usize {
            waits.push((t.t_bcast_wait, t.t_bcast_wait + self.latency.jitter_bound));
        }
        waits.sort();
        let gap = t.t_ack_window + t.t_count_window + flood + hop;
        let mut tier = waits[0];
        let check = |(lo, hi): (Ticks, Ticks)| {
            let spread = hi - lo;
            if spread + flood >= t.t_count_window {
                Err(ScenarioError::Invalid(format!(
                    "t_count_window {} must exceed wait spread {spread} plus flood time {flood}",
                    t.t_count_window
                )))
            } else {
                Ok(())
            }
        };
        for &(lo, hi) in &waits[1..] {
            if lo > tier.1 + gap {
                check(tier)?;
                tier = (lo, hi);
            } else {
                tier.1 = tier.1.max(hi);
            }
        }
        check(tier)
    }
}

fn parse_err(line: usize, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        line,
        reason: reason.into(),
    }
}

fn num<T: std::str::FromStr>(line: usize, what: &str, v: Option<&str>) -> Result<T, ScenarioError> {
    let v = v.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    v.parse()
        .map_err(|_| parse_err(line, format!("bad {what} {v:?}")))
}

/// Reads a scenario file; a relative `topology` path is resolved against the
/// file's directory.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_owned(),
        source,
    })?;
    let dir = path.parent().unwrap_or(Path::new("."));
    parse_scenario(&text, dir)
}

pub fn parse_scenario(text: &str, base_dir: &Path) -> Result<Scenario, ScenarioError> {
    #[derive(PartialEq)]
    enum Section {
        Main,
        Topology,
        Script,
    }
    let mut section = Section::Main;
    let mut network_id = None;
    let mut topo_path: Option<PathBuf> = None;
    let mut inline_topo = String::new();
    let mut seed = 0;
    let mut cycles = 1;
    let mut latency = LatencyModel::default();
    let mut timing = TimingParams::default();
    let mut waits = BTreeMap::new();
    let mut gateway = None;
    let mut budget = DEFAULT_EVENT_BUDGET;
    let mut script = FaultScript::default();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        match content {
            "[topology]" => {
                section = Section::Topology;
                continue;
            }
            "[script]" => {
                section = Section::Script;
                continue;
            }
            s if s.starts_with('[') => return Err(parse_err(line, format!("unknown section {s}"))),
            _ => {}
        }
        if section == Section::Topology {
            inline_topo.push_str(content);
            inline_topo.push('\n');
            continue;
        }
        let mut words = content.split_whitespace();
        let key = words.next().unwrap_or_default();
        if section == Section::Script {
            if key != "cycle" {
                return Err(parse_err(line, "script lines start with `cycle <k>`"));
            }
            let at_cycle = num(line, "cycle number", words.next())?;
            let action = words.next().ok_or_else(|| parse_err(line, "missing action"))?;
            let node = words
                .next()
                .ok_or_else(|| parse_err(line, "missing node"))?
                .to_owned();
            let rest: Vec<String> = words.map(str::to_owned).collect();
            let action = match action {
                "crash" => FaultAction::Crash,
                "software" => FaultAction::SoftwareFault,
                "repair" => FaultAction::Repair,
                "join" => FaultAction::Join(rest.clone()),
                other => return Err(parse_err(line, format!("unknown action {other}"))),
            };
            if !matches!(action, FaultAction::Join(_)) && !rest.is_empty() {
                return Err(parse_err(line, "only join takes a neighbour list"));
            }
            script.entries.push(ScriptEntry {
                node,
                action,
                at_cycle,
            });
            continue;
        }
        match key {
            "network" => {
                network_id = Some(
                    words
                        .next()
                        .ok_or_else(|| parse_err(line, "missing network id"))?
                        .to_owned(),
                )
            }
            "topology" => {
                let p = words.next().ok_or_else(|| parse_err(line, "missing topology path"))?;
                topo_path = Some(base_dir.join(p));
            }
            "seed" => seed = num(line, "seed", words.next())?,
            "cycles" => cycles = num(line, "cycle count", words.next())?,
            "budget" => budget = num(line, "event budget", words.next())?,
            "latency" => {
                latency.base = num(line, "latency base", words.next())?;
                latency.jitter_bound = num(line, "jitter bound", words.next())?;
            }
            "timing" => {
                for kv in words.by_ref() {
                    let (k, v) = kv
                        .split_once('=')
                        .ok_or_else(|| parse_err(line, format!("expected key=value, got {kv:?}")))?;
                    let v: Ticks = num(line, k, Some(v))?;
                    match k {
                        "t_bcast_wait" => timing.t_bcast_wait = v,
                        "t_ack_window" => timing.t_ack_window = v,
                        "t_count_window" => timing.t_count_window = v,
                        "t_probe" => timing.t_probe = v,
                        "cycle_period" => timing.cycle_period = v,
                        _ => return Err(parse_err(line, format!("unknown timing key {k}"))),
                    }
                }
            }
            "volunteer" => {
                let who = words.next().ok_or_else(|| parse_err(line, "missing node"))?;
                waits.insert(who.to_owned(), num(line, "wait", words.next())?);
            }
            "link" => {
                let a = words.next().ok_or_else(|| parse_err(line, "missing node"))?;
                let b = words.next().ok_or_else(|| parse_err(line, "missing node"))?;
                latency.set_link(a, b, num(line, "latency", words.next())?);
            }
            "gateway" => {
                gateway = Some(
                    words
                        .next()
                        .ok_or_else(|| parse_err(line, "missing node"))?
                        .to_owned(),
                )
            }
            other => return Err(parse_err(line, format!("unknown key {other}"))),
        }
        if let Some(extra) = words.next() {
            return Err(parse_err(line, format!("unexpected {extra:?}")));
        }
    }

    let topology = match (topo_path, inline_topo.is_empty()) {
        (Some(_), false) => {
            return Err(ScenarioError::Invalid(
                "both a topology path and a [topology] section".into(),
            ))
        }
        (Some(path), true) => {
            let text = fs::read_to_string(&path).map_err(|source| ScenarioError::Io {
                path: path.clone(),
                source,
            })?;
            parse_topology(&text).map_err(|source| ScenarioError::TopologyFile { path, source })?
        }
        (None, false) => parse_topology(&inline_topo)?,
        (None, true) => return Err(ScenarioError::Invalid("no topology given".into())),
    };

    let scenario = Scenario {
        network_id: network_id.unwrap_or_else(|| "net".to_owned()),
        topology,
        script,
        timing,
        latency,
        seed,
        cycles,
        volunteer_waits: waits,
        gateway,
        event_budget: budget,
    };
    scenario.validate()?;
    Ok(scenario)
}
