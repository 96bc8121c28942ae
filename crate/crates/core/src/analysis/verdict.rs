use std::collections::BTreeSet;
use std::fmt;

use crate::engine::{Membership, Scenario, Trace};
use crate::topology::NodeId;

use super::{tally_cycle, AnalysisError, CycleTally};

/// Correctness of a diagnosis, judged against the reachability oracle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    /// No node reachable over fault-free paths was reported faulty.
    pub sound: bool,
    /// Every node the oracle expects to be reported was reported.
    pub complete: bool,
    /// No node was probed twice within a session.
    pub tested_once: bool,
    /// Each fault-free component had exactly one elected root, each of its
    /// nodes led exactly once, and no faulty node led.
    pub coverage: bool,
    /// Every fault-free node ended with the same faulty list as its
    /// finalizer.
    pub agreement: bool,
    /// Human-readable reasons for every false flag, plus protocol
    /// violations reported by the nodes.
    pub problems: Vec<String>,
}

impl Default for Verdict {
    fn default() -> Self {
        Self {
            sound: true,
            complete: true,
            tested_once: true,
            coverage: true,
            agreement: true,
            problems: Vec::new(),
        }
    }
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.sound
            && self.complete
            && self.tested_once
            && self.coverage
            && self.agreement
            && self.problems.is_empty()
    }

    pub fn merge(&mut self, other: Verdict) {
        self.sound &= other.sound;
        self.complete &= other.complete;
        self.tested_once &= other.tested_once;
        self.coverage &= other.coverage;
        self.agreement &= other.agreement;
        self.problems.extend(other.problems);
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "sound={}", self.sound)?;
        writeln!(f, "complete={}", self.complete)?;
        writeln!(f, "tested_once={}", self.tested_once)?;
        writeln!(f, "coverage={}", self.coverage)?;
        writeln!(f, "agreement={}", self.agreement)
    }
}

/// Checks one cycle against the membership that was in effect.
pub fn check_cycle(t: &CycleTally, m: &Membership) -> Verdict {
    let mut v = Verdict::default();
    let topo = &m.topology;
    let faulty = m.faulty();
    let present: BTreeSet<NodeId> = topo.nodes().iter().cloned().collect();
    let c = t.cycle;

    if t.terminated != Some(true) {
        v.problems.push(format!("cycle {c} did not terminate"));
    }
    for p in &t.violations {
        v.problems.push(format!("cycle {c}: {p}"));
    }

    for s in &t.sessions {
        for l in &s.leaders {
            if faulty.contains(&l.leader) {
                v.coverage = false;
                v.problems.push(format!("cycle {c}: faulty {} led", l.leader));
            }
        }
    }

    for comp in topo.components(&faulty) {
        let sessions: Vec<_> = t.sessions.iter().filter(|s| comp.contains(&s.root)).collect();
        let winners = t.winners.iter().filter(|w| comp.contains(w)).count();
        let announced = t.announced.iter().filter(|a| comp.contains(a)).count();
        let first = comp.iter().next().expect("components are non-empty");
        if sessions.len() != 1 || winners != 1 || announced != 1 {
            v.coverage = false;
            v.problems.push(format!(
                "cycle {c}: component of {first} had {} sessions, {winners} winners, {announced} announced leaders",
                sessions.len()
            ));
            if sessions.is_empty() {
                v.complete = false;
                v.agreement = false;
                continue;
            }
        }
        for s in sessions {
            let leaders: Vec<&NodeId> = s.leaders.iter().map(|l| &l.leader).collect();
            let unique: BTreeSet<&NodeId> = leaders.iter().copied().collect();
            if unique.len() != leaders.len() || unique != comp.iter().collect() {
                v.coverage = false;
                v.problems.push(format!(
                    "cycle {c}: session {} led by {} nodes, component has {}",
                    s.root,
                    unique.len(),
                    comp.len()
                ));
            }

            let mut probed = BTreeSet::new();
            for l in &s.leaders {
                for p in &l.probed {
                    if *p == l.leader || !probed.insert(p) {
                        v.tested_once = false;
                        v.problems
                            .push(format!("cycle {c}: {p} probed again by {}", l.leader));
                    }
                }
            }

            let expected: BTreeSet<&NodeId> = present.difference(&comp).collect();
            let Some(found) = &s.faulty_found else {
                v.complete = false;
                v.agreement = false;
                v.problems.push(format!("cycle {c}: session {} never finalized", s.root));
                continue;
            };
            let found_set: BTreeSet<&NodeId> = found.iter().collect();
            if found_set.len() != found.len() {
                v.sound = false;
                v.problems.push(format!("cycle {c}: duplicate entries in faulty list"));
            }
            for n in found_set.iter().filter(|n| comp.contains(**n)) {
                v.sound = false;
                v.problems.push(format!("cycle {c}: reachable fault-free {n} reported faulty"));
            }
            for n in expected.difference(&found_set) {
                v.complete = false;
                v.problems.push(format!("cycle {c}: {n} not reported faulty"));
            }

            for n in &comp {
                match t.known.get(n).map(Vec::as_slice) {
                    Some([list]) if list == found => {}
                    other => {
                        v.agreement = false;
                        v.problems.push(format!(
                            "cycle {c}: {n} holds {} faulty lists, expected the finalizer's",
                            other.map_or(0, <[_]>::len)
                        ));
                    }
                }
            }
        }
    }
    v
}

/// Checks every cycle of `trace`, replaying the scenario's script for the
/// membership of each.
pub fn check_diagnosis(trace: &Trace, s: &Scenario) -> Result<Verdict, AnalysisError> {
    let cycles = trace.cycles();
    if cycles.is_empty() {
        return Err(AnalysisError::NoCycles);
    }
    let mut v = Verdict::default();
    for (c, records) in cycles {
        let m = s.membership_at(c)?;
        v.merge(check_cycle(&tally_cycle(c, records), &m));
    }
    Ok(v)
}
