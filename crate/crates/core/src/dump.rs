//! JSON documents for networks and quantizers.

use serde::{Deserialize, Serialize};

use crate::asymptotics::basin_stats;
use crate::error::{Error, Result};
use crate::network::{NodeKind, Topology, TransportNetwork};
use crate::point::Point;
use crate::quantizer::Quantizer;

const DUMP_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindDoc {
    Source,
    Sink,
    Steiner,
}

impl From<NodeKind> for KindDoc {
    fn from(k: NodeKind) -> Self {
        match k {
            NodeKind::Source => KindDoc::Source,
            NodeKind::Sink => KindDoc::Sink,
            NodeKind::Steiner => KindDoc::Steiner,
        }
    }
}

impl From<KindDoc> for NodeKind {
    fn from(k: KindDoc) -> Self {
        match k {
            KindDoc::Source => NodeKind::Source,
            KindDoc::Sink => NodeKind::Sink,
            KindDoc::Steiner => NodeKind::Steiner,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: usize,
    pub kind: KindDoc,
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    /// Index of the terminal in its input measure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDoc {
    /// Upstream node.
    pub u: usize,
    /// Downstream node.
    pub v: usize,
    pub flow: f64,
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDump {
    pub alpha: f64,
    pub nodes: Vec<NodeDoc>,
    pub edges: Vec<EdgeDoc>,
    pub cost: f64,
}

impl NetworkDump {
    pub fn from_network(net: &TransportNetwork) -> NetworkDump {
        let topo = net.topology();
        let dim = net.dim();
        let nodes = (0..topo.len())
            .map(|v| NodeDoc {
                id: v,
                kind: topo.kind(v).into(),
                x: net.position(v).coords(dim).to_vec(),
                mass: (topo.kind(v) != NodeKind::Steiner).then(|| net.masses()[v]),
                label: net.labels()[v],
            })
            .collect();
        let edges = topo
            .edges()
            .iter()
            .enumerate()
            .map(|(e, edge)| EdgeDoc { u: edge.parent, v: edge.child, flow: net.flows()[e], length: net.edge_length(e) })
            .collect();
        NetworkDump { alpha: net.alpha(), nodes, edges, cost: net.cost() }
    }

    /// Rebuilds the network and checks the stored flows, lengths and cost against it.
    pub fn to_network(&self) -> Result<TransportNetwork> {
        let dim = self.nodes.first().map_or(0, |v| v.x.len());
        if !(1..=3).contains(&dim) {
            return Err(Error::Invalid("nodes: coordinates must have length 1..=3".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i {
                return Err(Error::Invalid(format!("nodes[{i}].id: expected {i}, found {}", node.id)));
            }
            if node.x.len() != dim {
                return Err(Error::Invalid(format!("nodes[{i}].x: expected {dim} coordinates")));
            }
            if node.kind == KindDoc::Sink && !node.mass.is_some_and(|m| m > 0.0) {
                return Err(Error::Invalid(format!("nodes[{i}].mass: sinks need a positive mass")));
            }
        }
        let kinds: Vec<NodeKind> = self.nodes.iter().map(|v| v.kind.into()).collect();
        let pairs: Vec<(usize, usize)> = self.edges.iter().map(|e| (e.u, e.v)).collect();
        let topo = Topology::new(kinds, &pairs)?;
        let positions = self.nodes.iter().map(|v| Point::new(&v.x)).collect();
        let masses = self.nodes.iter().map(|v| if v.kind == KindDoc::Sink { v.mass.unwrap_or(0.0) } else { 0.0 }).collect();
        let labels = self.nodes.iter().map(|v| v.label).collect();
        let net = TransportNetwork::new(dim, self.alpha, topo, positions, masses, labels)?;
        let scale = net.total_sink_mass().max(1.0);
        for (i, e) in self.edges.iter().enumerate() {
            let k = net
                .topology()
                .parent_edge(e.v)
                .filter(|&k| net.topology().edges()[k].parent == e.u)
                .ok_or_else(|| Error::Invalid(format!("edges[{i}]: ({}, {}) is not oriented away from a source", e.u, e.v)))?;
            if (net.flows()[k] - e.flow).abs() > DUMP_TOL * scale {
                return Err(Error::Invalid(format!("edges[{i}].flow: stored {} but subtree mass is {}", e.flow, net.flows()[k])));
            }
            if (net.edge_length(k) - e.length).abs() > DUMP_TOL * net.edge_length(k).max(1.0) {
                return Err(Error::Invalid(format!("edges[{i}].length: stored {} but geometry gives {}", e.length, net.edge_length(k))));
            }
        }
        if (net.cost() - self.cost).abs() > DUMP_TOL * net.cost().max(1.0) {
            return Err(Error::Invalid(format!("cost: stored {} but edges give {}", self.cost, net.cost())));
        }
        net.check_invariants(DUMP_TOL)?;
        Ok(net)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteDoc {
    pub x: Vec<f64>,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasinDoc {
    pub cost: f64,
    pub diameter: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerDump {
    pub alpha: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub sites: Vec<SiteDoc>,
    pub assignment: Vec<usize>,
    pub cost: f64,
    pub per_basin: Vec<BasinDoc>,
    /// One network per site, used by `render` and `validate`.
    pub networks: Vec<NetworkDump>,
}

impl QuantizerDump {
    pub fn from_quantizer(q: &Quantizer) -> QuantizerDump {
        let dim = q.dim();
        QuantizerDump {
            alpha: q.alpha(),
            n: q.len(),
            sites: q.sites().iter().zip(q.masses()).map(|(x, &mass)| SiteDoc { x: x.coords(dim).to_vec(), mass }).collect(),
            assignment: q.assignment().to_vec(),
            cost: q.total_cost(),
            per_basin: basin_stats(q).into_iter().map(|b| BasinDoc { cost: b.cost, diameter: b.diameter, mass: b.mass }).collect(),
            networks: q.networks().iter().map(NetworkDump::from_network).collect(),
        }
    }

    /// Rebuilds the quantizer and checks every stored summary against it.
    pub fn to_quantizer(&self) -> Result<Quantizer> {
        if self.n != self.sites.len() || self.per_basin.len() != self.sites.len() {
            return Err(Error::Invalid("N, sites and per_basin must have the same length".into()));
        }
        let networks = self
            .networks
            .iter()
            .enumerate()
            .map(|(i, n)| n.to_network().map_err(|e| Error::Invalid(format!("networks[{i}]: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let dim = networks.first().map_or(2, |n| n.dim());
        let sites: Vec<Point> = self.sites.iter().map(|s| Point::new(&s.x)).collect();
        let q = Quantizer::from_parts(dim, self.alpha, sites, self.assignment.clone(), networks)?;
        for (i, (s, b)) in self.sites.iter().zip(&self.per_basin).enumerate() {
            if (s.mass - q.masses()[i]).abs() > DUMP_TOL || (b.mass - q.masses()[i]).abs() > DUMP_TOL {
                return Err(Error::Invalid(format!("sites[{i}].mass disagrees with its network")));
            }
            let c = q.networks()[i].cost();
            if (b.cost - c).abs() > DUMP_TOL * c.max(1.0) {
                return Err(Error::Invalid(format!("per_basin[{i}].cost disagrees with its network")));
            }
        }
        if (self.cost - q.total_cost()).abs() > DUMP_TOL * q.total_cost().max(1.0) {
            return Err(Error::Invalid("cost disagrees with the basin networks".into()));
        }
        let sinks = self.assignment.len();
        let mut seen = vec![0usize; sinks];
        for (i, net) in q.networks().iter().enumerate() {
            let src = net.topology().sources()[0];
            if net.position(src) != q.sites()[i] {
                return Err(Error::Invalid(format!("networks[{i}] is not rooted at sites[{i}]")));
            }
            for v in net.topology().sinks() {
                match net.labels()[v] {
                    Some(j) if j < sinks && self.assignment[j] == i => seen[j] += 1,
                    _ => return Err(Error::Invalid(format!("networks[{i}]: sink {v} does not match the assignment"))),
                }
            }
        }
        if seen.iter().any(|&c| c != 1) {
            return Err(Error::Invalid("assignment: basins do not partition the sinks".into()));
        }
        Ok(q)
    }
}

/// Either kind of dump, told apart by its fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Dump {
    Quantizer(QuantizerDump),
    Network(NetworkDump),
}

impl Dump {
    pub fn parse(text: &str) -> std::result::Result<Dump, String> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let is_quantizer = value.get("sites").is_some();
        if is_quantizer {
            serde_json::from_value(value).map(Dump::Quantizer).map_err(|e| format!("quantizer dump: {e}"))
        } else {
            serde_json::from_value(value).map(Dump::Network).map_err(|e| format!("network dump: {e}"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{grid_discretize, AxisBox, DensitySpec};
    use crate::quantizer::{solve_quantization, QuantizerConfig};

    #[test]
    fn quantizer_round_trip() {
        let nu = grid_discretize(&AxisBox::unit_cube(2), &DensitySpec::Uniform, 6).unwrap();
        let q = solve_quantization(&nu, 2, 0.8, &QuantizerConfig::default()).unwrap();
        let dump = QuantizerDump::from_quantizer(&q);
        let text = serde_json::to_string(&dump).unwrap();
        let Dump::Quantizer(back) = Dump::parse(&text).unwrap() else { panic!("wrong kind") };
        let q2 = back.to_quantizer().unwrap();
        assert_eq!(q2.assignment(), q.assignment());
        assert!((q2.total_cost() - q.total_cost()).abs() < 1e-12);
    }

    #[test]
    fn tampered_network_is_rejected() {
        let nu = grid_discretize(&AxisBox::unit_cube(2), &DensitySpec::Uniform, 3).unwrap();
        let q = solve_quantization(&nu, 1, 0.8, &QuantizerConfig::default()).unwrap();
        let mut dump = NetworkDump::from_network(&q.networks()[0]);
        dump.to_network().unwrap();
        dump.edges[0].flow *= 2.0;
        let err = dump.to_network().unwrap_err().to_string();
        assert!(err.contains("edges[0].flow"), "{err}");
        let bad = r#"{"alpha": 0.8, "nodes": [], "edges": [], "cost": "x"}"#;
        assert!(Dump::parse(bad).unwrap_err().contains("invalid type"));
    }
}
