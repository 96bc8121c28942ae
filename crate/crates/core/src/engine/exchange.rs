use crate::frames::LocalFrame;
use crate::topology::NodeId;

use super::{Membership, Scenario};

/// What one network contributes to an exchange: its gateway and the faulty
/// list from its last cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkReport {
    pub network_id: String,
    pub gateway: NodeId,
    pub faulty: Vec<LocalFrame>,
}

/// A network's own faulty list plus what its gateway received, tagged by the
/// sending network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergedView {
    pub network_id: String,
    pub gateway: NodeId,
    pub own: Vec<LocalFrame>,
    pub received: Vec<(String, Vec<LocalFrame>)>,
}

impl MergedView {
    pub fn render(&self) -> String {
        let names = |v: &[LocalFrame]| {
            v.iter()
                .map(|f| f.address.label())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut out = format!(
            "Network {} gateway={}\n  own faulty: {}\n",
            self.network_id,
            self.gateway,
            names(&self.own)
        );
        for (origin, frames) in &self.received {
            out.push_str(&format!("  from {origin}: {}\n", names(frames)));
        }
        out
    }
}

/// The configured gateway, else the lowest-ordinal fault-free member.
pub fn gateway_of(s: &Scenario, m: &Membership) -> Option<NodeId> {
    if let Some(g) = &s.gateway {
        return m.topology.lookup(g).ok().cloned();
    }
    m.fault_free().into_iter().next()
}

/// Every gateway receives every other network's list verbatim, in input
/// order.
pub fn inter_network_exchange(reports: &[NetworkReport]) -> Vec<MergedView> {
    reports
        .iter()
        .enumerate()
        .map(|(i, r)| MergedView {
            network_id: r.network_id.clone(),
            gateway: r.gateway.clone(),
            own: r.faulty.clone(),
            received: reports
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, o)| (o.network_id.clone(), o.faulty.clone()))
                .collect(),
        })
        .collect()
}
