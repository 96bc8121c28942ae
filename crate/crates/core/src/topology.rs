//! Undirected network graph over opaque node labels.
//!
//! Nodes only know their direct neighbours; the graph itself is what the
//! simulator uses to route messages and what the reachability oracle walks to
//! decide which nodes a diagnosis cycle can possibly test.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Identity of a node: a unique label plus a dense ordinal assigned at load.
///
/// Ordering and equality follow the ordinal first, so ties broken "by
/// smallest node" are broken by declaration order.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    ordinal: u32,
    label: Arc<str>,
}

impl NodeId {
    pub fn new(ordinal: u32, label: impl Into<Arc<str>>) -> Self {
        Self {
            ordinal,
            label: label.into(),
        }
    }

    pub fn ordinal(&self) -> u32 {
        self.ordinal
    }

    pub fn index(&self) -> usize {
        self.ordinal as usize
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.label, self.ordinal)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("line {line}: {reason}: `{text}`")]
    Parse {
        line: usize,
        text: String,
        reason: String,
    },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node `{0}` is listed as faulty and cannot start a traversal")]
    FaultyStart(String),
    #[error("node `{0}` already exists")]
    DuplicateNode(String),
}

/// Flags raised by [`Topology::validate`]. None of them is fatal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub disconnected: bool,
    /// Every node is adjacent to every other node; the protocol still works
    /// but the deployment model assumes a sparser network.
    pub fully_connected: bool,
    pub too_small: bool,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        !(self.disconnected || self.fully_connected || self.too_small)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut flags = Vec::new();
        if self.disconnected {
            flags.push("disconnected");
        }
        if self.fully_connected {
            flags.push("fully-connected");
        }
        if self.too_small {
            flags.push("fewer than two nodes");
        }
        if flags.is_empty() {
            f.write_str("ok")
        } else {
            f.write_str(&flags.join(", "))
        }
    }
}

/// Immutable undirected graph. Adjacency is symmetric and irreflexive.
#[derive(Clone, PartialEq, Eq)]
pub struct Topology {
    nodes: Vec<NodeId>,
    adjacency: Vec<BTreeSet<u32>>,
    by_label: HashMap<Arc<str>, u32>,
}

impl fmt::Debug for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Topology")
            .field("nodes", &self.nodes.len())
            .field("edges", &self.edge_count())
            .finish()
    }
}

impl Topology {
    /// Builds a topology from labels (ordinals follow slice order) and
    /// undirected edges given as ordinal pairs.
    pub fn from_edges<S: AsRef<str>>(
        labels: &[S],
        edges: &[(u32, u32)],
    ) -> Result<Self, TopologyError> {
        let mut topo = Self::empty();
        for label in labels {
            topo.push_node(label.as_ref())?;
        }
        for &(a, b) in edges {
            let n = topo.nodes.len() as u32;
            if a >= n {
                return Err(TopologyError::UnknownNode(format!("#{a}")));
            }
            if b >= n {
                return Err(TopologyError::UnknownNode(format!("#{b}")));
            }
            if a == b {
                return Err(TopologyError::Parse {
                    line: 0,
                    text: topo.nodes[a as usize].label().to_owned(),
                    reason: "self-loop".into(),
                });
            }
            topo.link(a, b);
        }
        Ok(topo)
    }

    /// Convenience for tests and generators: nodes labelled `N1..Nn`.
    pub fn numbered(n: usize, edges: &[(u32, u32)]) -> Result<Self, TopologyError> {
        let labels: Vec<String> = (1..=n).map(|i| format!("N{i}")).collect();
        Self::from_edges(&labels, edges)
    }

    fn empty() -> Self {
        Self {
            nodes: Vec::new(),
            adjacency: Vec::new(),
            by_label: HashMap::new(),
        }
    }

    fn push_node(&mut self, label: &str) -> Result<u32, TopologyError> {
        if self.by_label.contains_key(label) {
            return Err(TopologyError::DuplicateNode(label.to_owned()));
        }
        let ordinal = self.nodes.len() as u32;
        let label: Arc<str> = Arc::from(label);
        self.nodes.push(NodeId::new(ordinal, label.clone()));
        self.adjacency.push(BTreeSet::new());
        self.by_label.insert(label, ordinal);
        Ok(ordinal)
    }

    fn link(&mut self, a: u32, b: u32) {
        self.adjacency[a as usize].insert(b);
        self.adjacency[b as usize].insert(a);
    }

    /// Returns a copy with one more node attached to `neighbors`.
    pub fn with_node(&self, label: &str, neighbors: &[&str]) -> Result<Self, TopologyError> {
        let mut next = self.clone();
        let ordinal = next.push_node(label)?;
        for &nb in neighbors {
            let other = next
                .by_label
                .get(nb)
                .copied()
                .ok_or_else(|| TopologyError::UnknownNode(nb.to_owned()))?;
            if other == ordinal {
                return Err(TopologyError::Parse {
                    line: 0,
                    text: label.to_owned(),
                    reason: "self-loop".into(),
                });
            }
            next.link(ordinal, other);
        }
        Ok(next)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn node(&self, ordinal: u32) -> Option<&NodeId> {
        self.nodes.get(ordinal as usize)
    }

    pub fn lookup(&self, label: &str) -> Result<&NodeId, TopologyError> {
        self.by_label
            .get(label)
            .map(|&o| &self.nodes[o as usize])
            .ok_or_else(|| TopologyError::UnknownNode(label.to_owned()))
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.nodes.get(id.index()) == Some(id)
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(a, nbrs)| {
            nbrs.iter()
                .filter(move |&&b| (a as u32) < b)
                .map(move |&b| (a as u32, b))
        })
    }

    pub fn degree(&self, id: &NodeId) -> Result<usize, TopologyError> {
        self.check(id)?;
        Ok(self.adjacency[id.index()].len())
    }

    pub fn are_adjacent(&self, a: &NodeId, b: &NodeId) -> bool {
        self.contains(a) && self.adjacency[a.index()].contains(&b.ordinal)
    }

    fn check(&self, id: &NodeId) -> Result<(), TopologyError> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(TopologyError::UnknownNode(id.label().to_owned()))
        }
    }

    /// Adjacency partners of `id`, ordered by ordinal.
    pub fn neighbors(&self, id: &NodeId) -> Result<Vec<NodeId>, TopologyError> {
        self.check(id)?;
        Ok(self.adjacency[id.index()]
            .iter()
            .map(|&o| self.nodes[o as usize].clone())
            .collect())
    }

    pub fn validate(&self) -> ValidationReport {
        let n = self.len();
        let components = self.components(&BTreeSet::new());
        ValidationReport {
            disconnected: components.len() > 1,
            fully_connected: n >= 2 && self.edge_count() == n * (n - 1) / 2,
            too_small: n < 2,
        }
    }

    /// Nodes reachable from `start` through paths made only of nodes outside
    /// `faults`. `start` itself is included.
    pub fn fault_free_reachable(
        &self,
        faults: &BTreeSet<NodeId>,
        start: &NodeId,
    ) -> Result<BTreeSet<NodeId>, TopologyError> {
        self.check(start)?;
        if faults.contains(start) {
            return Err(TopologyError::FaultyStart(start.label().to_owned()));
        }
        let blocked: BTreeSet<u32> = faults.iter().map(NodeId::ordinal).collect();
        Ok(self
            .bfs(start.ordinal, &blocked)
            .into_iter()
            .map(|o| self.nodes[o as usize].clone())
            .collect())
    }

    fn bfs(&self, start: u32, blocked: &BTreeSet<u32>) -> BTreeSet<u32> {
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u as usize] {
                if !blocked.contains(&v) && seen.insert(v) {
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    /// Connected components of the subgraph induced by nodes outside
    /// `excluded`, each sorted, listed by smallest member.
    pub fn components(&self, excluded: &BTreeSet<NodeId>) -> Vec<BTreeSet<NodeId>> {
        let blocked: BTreeSet<u32> = excluded.iter().map(NodeId::ordinal).collect();
        let mut assigned = vec![false; self.len()];
        let mut out = Vec::new();
        for start in 0..self.len() as u32 {
            if assigned[start as usize] || blocked.contains(&start) {
                continue;
            }
            let comp = self.bfs(start, &blocked);
            for &o in &comp {
                assigned[o as usize] = true;
            }
            out.push(comp.into_iter().map(|o| self.nodes[o as usize].clone()).collect());
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components(&BTreeSet::new()).len() <= 1
    }

    /// Renders the line format accepted by [`parse_topology`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for node in &self.nodes {
            out.push_str(node.label());
            out.push(':');
            for &o in &self.adjacency[node.index()] {
                out.push(' ');
                out.push_str(self.nodes[o as usize].label());
            }
            out.push('\n');
        }
        out
    }

    /// Random connected graph on `n` nodes labelled `N1..Nn`: a random
    /// spanning tree plus each remaining pair independently with
    /// probability `extra_edge_prob`.
    pub fn random_connected(n: usize, extra_edge_prob: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<u32> = (0..n as u32).collect();
        order.shuffle(&mut rng);
        let mut edges = BTreeSet::new();
        for i in 1..n {
            let parent = order[rng.gen_range(0..i)];
            let child = order[i];
            edges.insert((parent.min(child), parent.max(child)));
        }
        for a in 0..n as u32 {
            for b in a + 1..n as u32 {
                if rng.gen_bool(extra_edge_prob) {
                    edges.insert((a, b));
                }
            }
        }
        let edges: Vec<_> = edges.into_iter().collect();
        Self::numbered(n, &edges).expect("generated edges are in range")
    }
}

/// Parses the topology line format: `<label>: <label> <label> ...`, one line
/// per node, `#` comments, blank lines ignored. Adjacency is symmetrized.
pub fn parse_topology(text: &str) -> Result<Topology, TopologyError> {
    let mut declared: Vec<(usize, &str, &str, Vec<&str>)> = Vec::new();
    let mut topo = Topology::empty();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |reason: &str| TopologyError::Parse {
            line: line_no,
            text: raw.to_owned(),
            reason: reason.to_owned(),
        };
        let (label, rest) = content.split_once(':').ok_or_else(|| err("missing `:`"))?;
        let label = label.trim();
        if label.is_empty() || label.contains(char::is_whitespace) {
            return Err(err("invalid node label"));
        }
        if topo.push_node(label).is_err() {
            return Err(err("duplicate node line"));
        }
        declared.push((line_no, raw, label, rest.split_whitespace().collect()));
    }
    for (line_no, raw, label, nbrs) in declared {
        let me = topo.by_label[label];
        for nb in nbrs {
            let err = |reason: String| TopologyError::Parse {
                line: line_no,
                text: raw.to_owned(),
                reason,
            };
            let other = *topo
                .by_label
                .get(nb)
                .ok_or_else(|| err(format!("reference to undeclared node `{nb}`")))?;
            if other == me {
                return Err(err("self-loop".into()));
            }
            topo.link(me, other);
        }
    }
    Ok(topo)
}

impl std::str::FromStr for Topology {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_topology(s)
    }
}
