//! Geometric transport forests: topology, per-edge flows and the α-mass.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::Point;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Source,
    Sink,
    Steiner,
}

/// A directed edge, oriented away from the source of its component.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub parent: usize,
    pub child: usize,
}

/// Combinatorial skeleton of a transport network: a forest in which every
/// component is rooted at exactly one source.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    kinds: Vec<NodeKind>,
    edges: Vec<Edge>,
    parent_edge: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    component: Vec<usize>,
    /// Nodes in breadth-first order from the sources.
    order: Vec<usize>,
}

impl Topology {
    /// Builds and roots a forest from unordered node pairs.
    pub fn new(kinds: Vec<NodeKind>, pairs: &[(usize, usize)]) -> Result<Topology> {
        let n = kinds.len();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(u, v) in pairs {
            if u >= n || v >= n {
                return Err(Error::Invalid(format!("edge ({u}, {v}) references a missing node")));
            }
            if u == v {
                return Err(Error::NotAForest);
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        for (v, k) in kinds.iter().enumerate() {
            if *k == NodeKind::Steiner && adj[v].len() < 3 {
                return Err(Error::Invalid(format!("steiner node {v} has degree {} < 3", adj[v].len())));
            }
        }
        let mut parent: Vec<Option<usize>> = vec![None; n];
        let mut component = vec![usize::MAX; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::new();
        for s in (0..n).filter(|&v| kinds[v] == NodeKind::Source) {
            if component[s] != usize::MAX {
                return Err(Error::Invalid(format!("sources {} and {s} share a component", component[s])));
            }
            component[s] = s;
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                order.push(u);
                for &w in &adj[u] {
                    if Some(w) == parent[u] {
                        continue;
                    }
                    if component[w] != usize::MAX {
                        return if kinds[w] == NodeKind::Source && component[w] != s {
                            Err(Error::Invalid(format!("sources {s} and {w} share a component")))
                        } else {
                            Err(Error::NotAForest)
                        };
                    }
                    component[w] = s;
                    parent[w] = Some(u);
                    queue.push_back(w);
                }
            }
        }
        if let Some(v) = (0..n).find(|&v| component[v] == usize::MAX) {
            // An unreached node is either in a sourceless tree or on a cycle.
            return if pairs.len() + count_components(&adj) > n {
                Err(Error::NotAForest)
            } else {
                Err(Error::Invalid(format!("node {v} is not connected to any source")))
            };
        }
        let sources = kinds.iter().filter(|&&k| k == NodeKind::Source).count();
        if pairs.len() != n - sources {
            return Err(Error::NotAForest);
        }
        let mut edges = Vec::with_capacity(n);
        let mut parent_edge = vec![None; n];
        let mut children = vec![Vec::new(); n];
        for &v in &order {
            if let Some(p) = parent[v] {
                parent_edge[v] = Some(edges.len());
                edges.push(Edge { parent: p, child: v });
                children[p].push(v);
            }
        }
        Ok(Topology { kinds, edges, parent_edge, children, component, order })
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn kind(&self, v: usize) -> NodeKind {
        self.kinds[v]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn parent_edge(&self, v: usize) -> Option<usize> {
        self.parent_edge[v]
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent_edge[v].map(|e| self.edges[e].parent)
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.children[v].len() + usize::from(self.parent_edge[v].is_some())
    }

    /// Source at the root of `v`'s component.
    pub fn component_of(&self, v: usize) -> usize {
        self.component[v]
    }

    pub fn bfs_order(&self) -> &[usize] {
        &self.order
    }

    pub fn sources(&self) -> Vec<usize> {
        self.nodes_of(NodeKind::Source)
    }

    pub fn sinks(&self) -> Vec<usize> {
        self.nodes_of(NodeKind::Sink)
    }

    pub fn steiner_nodes(&self) -> Vec<usize> {
        self.nodes_of(NodeKind::Steiner)
    }

    fn nodes_of(&self, kind: NodeKind) -> Vec<usize> {
        (0..self.len()).filter(|&v| self.kinds[v] == kind).collect()
    }

    /// Nodes on the path from `v` up to its source, `v` first.
    pub fn root_path(&self, v: usize) -> Vec<usize> {
        let mut path = vec![v];
        let mut u = v;
        while let Some(p) = self.parent(u) {
            path.push(p);
            u = p;
        }
        path
    }
}

fn count_components(adj: &[Vec<usize>]) -> usize {
    let mut seen = vec![false; adj.len()];
    let mut count = 0;
    for s in 0..adj.len() {
        if seen[s] {
            continue;
        }
        count += 1;
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(u) = stack.pop() {
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    count
}

/// Flow on each edge = total sink mass in the subtree below it.
///
/// `sink_masses` is indexed by node; entries of non-sink nodes are ignored.
pub fn edge_flows(topology: &Topology, sink_masses: &[f64]) -> Result<Vec<f64>> {
    if sink_masses.len() != topology.len() {
        return Err(Error::Invalid("sink_masses must have one entry per node".into()));
    }
    let mut below = vec![0.0; topology.len()];
    for v in 0..topology.len() {
        if topology.kind(v) == NodeKind::Sink {
            let m = sink_masses[v];
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::Invalid(format!("sink {v} has non-positive mass {m}")));
            }
            below[v] = m;
        }
    }
    for &v in topology.bfs_order().iter().rev() {
        if let Some(p) = topology.parent(v) {
            below[p] += below[v];
        }
    }
    Ok(topology.edges().iter().map(|e| below[e.child]).collect())
}

/// A transport forest with positions and per-edge flows.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportNetwork {
    dim: usize,
    alpha: f64,
    topology: Topology,
    positions: Vec<Point>,
    masses: Vec<f64>,
    labels: Vec<Option<usize>>,
    flows: Vec<f64>,
    cost: f64,
    converged: bool,
}

impl TransportNetwork {
    /// Builds a network; flows are derived from the topology and sink masses.
    ///
    /// `masses[v]` is the sink mass of sink nodes (ignored otherwise). `labels`
    /// carries, for terminals, the index of the atom in the input measure.
    pub fn new(
        dim: usize,
        alpha: f64,
        topology: Topology,
        positions: Vec<Point>,
        masses: Vec<f64>,
        labels: Vec<Option<usize>>,
    ) -> Result<TransportNetwork> {
        let n = topology.len();
        if positions.len() != n || masses.len() != n || labels.len() != n {
            return Err(Error::Invalid("positions, masses and labels need one entry per node".into()));
        }
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::Invalid("non-finite node position".into()));
        }
        let flows = edge_flows(&topology, &masses)?;
        let mut masses = masses;
        for v in 0..n {
            match topology.kind(v) {
                NodeKind::Sink => {}
                NodeKind::Steiner => masses[v] = 0.0,
                NodeKind::Source => {
                    masses[v] = topology.children(v).iter().map(|&c| flows[topology.parent_edge(c).unwrap()]).sum()
                }
            }
        }
        let mut net = TransportNetwork {
            dim,
            alpha,
            topology,
            positions,
            masses,
            labels,
            flows,
            cost: 0.0,
            converged: true,
        };
        net.cost = alpha_mass(&net)?;
        Ok(net)
    }

    pub(crate) fn set_converged(&mut self, converged: bool) {
        self.converged = converged;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn position(&self, v: usize) -> Point {
        self.positions[v]
    }

    /// Sink mass for sinks, outgoing mass for sources, 0 for Steiner nodes.
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn flows(&self) -> &[f64] {
        &self.flows
    }

    /// Cached α-mass.
    pub fn cost(&self) -> f64 {
        self.cost
    }

    /// False when geometry optimization hit its iteration cap.
    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let edge = self.topology.edges()[e];
        self.positions[edge.parent].dist(&self.positions[edge.child])
    }

    /// Flow on the edge from `v` to its parent.
    pub fn flow_into(&self, v: usize) -> Option<f64> {
        self.topology.parent_edge(v).map(|e| self.flows[e])
    }

    pub fn total_sink_mass(&self) -> f64 {
        self.topology.sinks().iter().map(|&v| self.masses[v]).sum()
    }

    /// Same topology, positions scaled by `lambda` and sink masses by `mass_factor`.
    pub fn rescaled(&self, lambda: f64, mass_factor: f64) -> Result<TransportNetwork> {
        TransportNetwork::new(
            self.dim,
            self.alpha,
            self.topology.clone(),
            self.positions.iter().map(|p| *p * lambda).collect(),
            self.masses.iter().map(|m| m * mass_factor).collect(),
            self.labels.clone(),
        )
    }

    /// Same geometry evaluated with another exponent.
    pub fn with_alpha(&self, alpha: f64) -> Result<TransportNetwork> {
        let mut net = self.clone();
        net.alpha = alpha;
        net.cost = alpha_mass(&net)?;
        Ok(net)
    }

    /// Checks Kirchhoff balance, subtree flows and the per-component mass balance.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        let topo = &self.topology;
        let expected = edge_flows(topo, &self.masses)?;
        let scale = self.total_sink_mass().max(f64::MIN_POSITIVE);
        for (e, (f, g)) in self.flows.iter().zip(&expected).enumerate() {
            if (f - g).abs() > tol * scale {
                return Err(Error::Invalid(format!("edge {e}: flow {f} differs from subtree mass {g}")));
            }
        }
        for v in 0..topo.len() {
            let out: f64 = topo.children(v).iter().map(|&c| self.flows[topo.parent_edge(c).unwrap()]).sum();
            match topo.kind(v) {
                NodeKind::Steiner => {
                    let inflow = self.flow_into(v).unwrap_or(0.0);
                    if (inflow - out).abs() > tol * scale {
                        return Err(Error::Invalid(format!("kirchhoff violated at steiner node {v}")));
                    }
                }
                NodeKind::Sink => {
                    let inflow = self.flow_into(v).unwrap_or(0.0);
                    if (inflow - out - self.masses[v]).abs() > tol * scale {
                        return Err(Error::Invalid(format!("kirchhoff violated at sink {v}")));
                    }
                }
                NodeKind::Source => {
                    let sinks: f64 = topo
                        .sinks()
                        .iter()
                        .filter(|&&s| topo.component_of(s) == v)
                        .map(|&s| self.masses[s])
                        .sum();
                    if (out - sinks).abs() > tol * scale || (self.masses[v] - out).abs() > tol * scale {
                        return Err(Error::Invalid(format!("source {v} out-mass does not match its sinks")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Mass delivered to each sink label (summing split atoms).
    pub fn sink_marginal(&self, atom_count: usize) -> Vec<f64> {
        self.marginal(NodeKind::Sink, atom_count)
    }

    pub fn source_marginal(&self, atom_count: usize) -> Vec<f64> {
        self.marginal(NodeKind::Source, atom_count)
    }

    fn marginal(&self, kind: NodeKind, atom_count: usize) -> Vec<f64> {
        let mut out = vec![0.0; atom_count];
        for v in 0..self.topology.len() {
            if self.topology.kind(v) == kind {
                if let Some(l) = self.labels[v] {
                    if l < atom_count {
                        out[l] += self.masses[v];
                    }
                }
            }
        }
        out
    }
}

/// `Σ_e flow_e^α · |e|`.
pub fn alpha_mass(network: &TransportNetwork) -> Result<f64> {
    let mut total = 0.0;
    for (e, &f) in network.flows.iter().enumerate() {
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::InvalidFlow(e));
        }
        let len = network.edge_length(e);
        if len > 0.0 {
            total += f.powf(network.alpha) * len;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use NodeKind::*;

    fn net(kinds: Vec<NodeKind>, pairs: &[(usize, usize)], pos: Vec<Point>, masses: Vec<f64>, alpha: f64) -> TransportNetwork {
        let n = kinds.len();
        let topo = Topology::new(kinds, pairs).unwrap();
        TransportNetwork::new(2, alpha, topo, pos, masses, vec![None; n]).unwrap()
    }

    #[test]
    fn single_edge_cost() {
        for alpha in [0.6, 0.8, 1.0] {
            let n = net(vec![Source, Sink], &[(0, 1)], vec![Point::xy(0.0, 0.0), Point::xy(1.0, 0.0)], vec![0.0, 1.0], alpha);
            assert_relative_eq!(n.cost(), 1.0);
        }
        let n = net(vec![Source, Sink], &[(0, 1)], vec![Point::xy(0.0, 0.0), Point::xy(2.0, 0.0)], vec![0.0, 0.5], 0.5);
        assert_relative_eq!(n.cost(), 1.41421356, epsilon = 1e-8);
    }

    #[test]
    fn y_network_cost() {
        // trunk flow 1 length 2, branches flow 1/2 lengths 3 and 4
        let pos = vec![Point::xy(0.0, 0.0), Point::xy(2.0, 0.0), Point::xy(2.0, 3.0), Point::xy(2.0, -4.0)];
        let n = net(vec![Source, Steiner, Sink, Sink], &[(0, 1), (1, 2), (1, 3)], pos, vec![0.0, 0.0, 0.5, 0.5], 0.5);
        assert_relative_eq!(n.cost(), 2.0 + 7.0 / 2f64.sqrt(), max_relative = 1e-14);
        n.check_invariants(1e-10).unwrap();
    }

    #[test]
    fn flows_path_and_star() {
        let t = Topology::new(vec![Source, Sink], &[(1, 0)]).unwrap();
        assert_eq!(edge_flows(&t, &[0.0, 0.7]).unwrap(), vec![0.7]);
        let t = Topology::new(vec![Source, Steiner, Sink, Sink, Sink], &[(0, 1), (1, 2), (1, 3), (1, 4)]).unwrap();
        let third = 1.0 / 3.0;
        let f = edge_flows(&t, &[0.0, 0.0, third, third, third]).unwrap();
        assert_relative_eq!(f[0], 1.0, epsilon = 1e-15);
        assert!(f[1..].iter().all(|&x| x == third));
    }

    #[test]
    fn caterpillar_suffix_sums() {
        // spine: source - s1 - s2 - s3 - s4(sink 0.4), legs with sinks 0.1, 0.2, 0.3
        let kinds = vec![Source, Steiner, Steiner, Steiner, Sink, Sink, Sink, Sink];
        let pairs = [(0, 1), (1, 2), (2, 3), (3, 4), (1, 5), (2, 6), (3, 7)];
        let masses = [0.0, 0.0, 0.0, 0.0, 0.4, 0.1, 0.2, 0.3];
        let t = Topology::new(kinds, &pairs).unwrap();
        let f = edge_flows(&t, &masses).unwrap();
        let spine: Vec<f64> = [1, 2, 3, 4].iter().map(|&v| f[t.parent_edge(v).unwrap()]).collect();
        for (got, want) in spine.iter().zip([1.0, 0.9, 0.7, 0.4]) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_cycles_and_bad_components() {
        let cyc = Topology::new(vec![Source, Sink, Sink], &[(0, 1), (1, 2), (2, 0)]);
        assert_eq!(cyc, Err(Error::NotAForest));
        let two = Topology::new(vec![Source, Source, Sink], &[(0, 2), (1, 2)]);
        assert!(matches!(two, Err(Error::Invalid(_))));
        let orphan = Topology::new(vec![Source, Sink], &[]);
        assert!(matches!(orphan, Err(Error::Invalid(_))));
        let deg2 = Topology::new(vec![Source, Steiner, Sink], &[(0, 1), (1, 2)]);
        assert!(matches!(deg2, Err(Error::Invalid(_))));
        let cyc_away = Topology::new(vec![Source, Sink, Sink, Sink, Sink], &[(0, 1), (2, 3), (3, 4), (4, 2)]);
        assert_eq!(cyc_away, Err(Error::NotAForest));
    }

    #[test]
    fn invalid_flow_detected() {
        let mut n = net(vec![Source, Sink], &[(0, 1)], vec![Point::xy(0.0, 0.0), Point::xy(1.0, 0.0)], vec![0.0, 1.0], 0.7);
        n.flows[0] = 0.0;
        assert_eq!(alpha_mass(&n), Err(Error::InvalidFlow(0)));
    }
}
