//! Landscape function of a transport network: the path integral of
//! `flow^(α-1)` from the source to each node.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{NodeKind, TransportNetwork};
use crate::point::Point;

/// Maximum number of sink pairs examined by [`holder_estimate`].
pub const HOLDER_PAIR_CAP: usize = 200_000;

/// Landscape value of one sink node.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SinkLandscape {
    pub node: usize,
    /// Index of the sink in the input measure.
    pub label: Option<usize>,
    pub x: Point,
    pub mass: f64,
    /// Node id of the source irrigating this sink.
    pub source: usize,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LandscapeField {
    alpha: f64,
    per_node_z: Vec<f64>,
    positions: Vec<Point>,
    component_of: Vec<usize>,
    sinks: Vec<SinkLandscape>,
}

impl LandscapeField {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn per_node_z(&self) -> &[f64] {
        &self.per_node_z
    }

    pub fn z(&self, node: usize) -> f64 {
        self.per_node_z[node]
    }

    pub fn position(&self, node: usize) -> Point {
        self.positions[node]
    }

    pub fn component_of(&self, node: usize) -> usize {
        self.component_of[node]
    }

    pub fn sinks(&self) -> &[SinkLandscape] {
        &self.sinks
    }

    pub fn per_sink_z(&self) -> Vec<f64> {
        self.sinks.iter().map(|s| s.z).collect()
    }

    /// Sinks with `z(x) < |x - source| - slack`; the landscape dominates the distance
    /// to the source whenever flows are at most 1.
    pub fn distance_violations(&self, slack: f64) -> usize {
        self.sinks
            .iter()
            .filter(|s| s.z < s.x.dist(&self.positions[s.source]) - slack)
            .count()
    }
}

/// One downward pass over the network.
pub fn compute_landscape(network: &TransportNetwork) -> Result<LandscapeField> {
    let topo = network.topology();
    let alpha = network.alpha();
    let mut z = vec![0.0; topo.len()];
    for &v in topo.bfs_order() {
        if let Some(e) = topo.parent_edge(v) {
            let f = network.flows()[e];
            if !(f > 0.0) {
                return Err(Error::InvalidFlow(e));
            }
            let p = topo.parent(v).unwrap();
            z[v] = z[p] + f.powf(alpha - 1.0) * network.edge_length(e);
        }
    }
    let sinks = (0..topo.len())
        .filter(|&v| topo.kind(v) == NodeKind::Sink)
        .map(|v| SinkLandscape {
            node: v,
            label: network.labels()[v],
            x: network.position(v),
            mass: network.masses()[v],
            source: topo.component_of(v),
            z: z[v],
        })
        .collect();
    Ok(LandscapeField {
        alpha,
        per_node_z: z,
        positions: network.positions().to_vec(),
        component_of: (0..topo.len()).map(|v| topo.component_of(v)).collect(),
        sinks,
    })
}

/// `|cost - Σ z(sink)·mass(sink)|`.
pub fn cost_identity_check(network: &TransportNetwork, field: &LandscapeField) -> f64 {
    let integral: f64 = field.sinks.iter().map(|s| s.z * s.mass).sum();
    (network.cost() - integral).abs()
}

/// Upper first-variation surrogate for hanging `mass` at `point` from `attach_node`:
/// `α·z(attach)·mass + mass^α·|point - attach|`.
pub fn marginal_cost(field: &LandscapeField, attach_node: usize, point: &Point, mass: f64) -> f64 {
    field.alpha * field.per_node_z[attach_node] * mass + mass.powf(field.alpha) * point.dist(&field.positions[attach_node])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HolderEstimate {
    pub c_emp: f64,
    pub pair_count: usize,
}

/// Largest `|z(x) - z(y)| / |x - y|^β` over sink pairs (all pairs up to
/// [`HOLDER_PAIR_CAP`], otherwise a seeded sample). Coincident pairs are skipped.
pub fn holder_estimate(samples: &[(Point, f64)], beta: f64, seed: u64) -> Result<HolderEstimate> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Invalid(format!("Hölder exponent {beta} outside (0, 1]")));
    }
    let n = samples.len();
    let ratio = |i: usize, j: usize| {
        let d = samples[i].0.dist(&samples[j].0);
        (d > 0.0).then(|| (samples[i].1 - samples[j].1).abs() / d.powf(beta))
    };
    let total = n * n.saturating_sub(1) / 2;
    let mut c_emp = 0.0f64;
    let mut pair_count = 0;
    if total <= HOLDER_PAIR_CAP {
        for i in 0..n {
            for j in i + 1..n {
                if let Some(r) = ratio(i, j) {
                    c_emp = c_emp.max(r);
                    pair_count += 1;
                }
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..HOLDER_PAIR_CAP {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n - 1);
            let j = if j >= i { j + 1 } else { j };
            if let Some(r) = ratio(i, j) {
                c_emp = c_emp.max(r);
                pair_count += 1;
            }
        }
    }
    Ok(HolderEstimate { c_emp, pair_count })
}

/// `(position, z)` of every sink, for [`holder_estimate`].
pub fn sink_samples<'a>(fields: impl IntoIterator<Item = &'a LandscapeField>) -> Vec<(Point, f64)> {
    fields.into_iter().flat_map(|f| f.sinks.iter().map(|s| (s.x, s.z))).collect()
}
