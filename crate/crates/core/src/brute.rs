//! Exact reference solver for tiny instances: enumerates every full Steiner
//! topology and optimizes each one. Degenerate optima (branch points on
//! terminals, higher-degree nodes) are limits of full topologies and are
//! reached by edge collapse.

use crate::error::{check_alpha, Error, Result};
use crate::measures::DiscreteMeasure;
use crate::network::{NodeKind, TransportNetwork};
use crate::point::Point;
use crate::solver::{length_scale, pick_best, polish, SinkRef, SolverConfig};
use crate::tree::{NetworkParts, Tree, NIL};

/// Largest `#sources + #sinks` accepted by [`brute_force_bot`].
pub const ORACLE_TERMINAL_CAP: usize = 5;

const GRID_EVALUATION_CAP: usize = 20_000_000;

/// How Steiner positions are found for each topology.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OracleMode {
    /// Convex optimization to high precision.
    Continuous,
    /// Exhaustive search over a lattice on the bounding box (plus the terminals).
    Grid { resolution: usize },
}

pub fn brute_force_bot(
    sources: &DiscreteMeasure,
    sinks: &DiscreteMeasure,
    alpha: f64,
    mode: OracleMode,
) -> Result<TransportNetwork> {
    if sources.is_empty() || sinks.is_empty() {
        return Err(Error::EmptyInstance);
    }
    let terminals = sources.len() + sinks.len();
    if terminals > ORACLE_TERMINAL_CAP {
        return Err(Error::OracleCap(terminals));
    }
    check_alpha(alpha, sinks.dim())?;
    if (sources.total_mass() - sinks.total_mass()).abs() > 1e-9 {
        return Err(Error::Unbalanced(sources.total_mass(), sinks.total_mass()));
    }
    let cfg = SolverConfig {
        geometry_tol: 1e-12,
        epsilon_smoothing: 1e-3,
        epsilon_final: 1e-9,
        max_geometry_iters: 20_000,
        ..SolverConfig::default()
    };
    let scale = length_scale(sources.points().iter().chain(sinks.points().iter()));
    let mut best: Option<(f64, Vec<Tree>)> = None;
    for assignment in assignments(sources, sinks) {
        let mut trees = Vec::new();
        let mut total = 0.0;
        for (i, src) in sources.atoms().iter().enumerate() {
            let group: Vec<SinkRef> = assignment
                .iter()
                .enumerate()
                .filter(|(_, &a)| a == i)
                .map(|(j, _)| SinkRef { x: sinks.atoms()[j].x, m: sinks.atoms()[j].m, label: j })
                .collect();
            let t = best_component(src.x, i, &group, alpha, mode, &cfg, scale)?;
            total += t.cost();
            trees.push(t);
        }
        if best.as_ref().map_or(true, |(c, _)| total < *c) {
            best = Some((total, trees));
        }
    }
    let (_, trees) = best.ok_or_else(|| Error::Invalid("oracle needs a sink assignment that splits no atom".into()))?;
    let mut parts = NetworkParts::default();
    for t in &trees {
        t.append_to(&mut parts);
    }
    parts.build(sinks.dim(), alpha)
}

/// Sink-to-source maps whose per-source sink mass matches the source mass.
fn assignments(sources: &DiscreteMeasure, sinks: &DiscreteMeasure) -> Vec<Vec<usize>> {
    let (k, n) = (sources.len(), sinks.len());
    let mut out = Vec::new();
    let mut current = vec![0usize; n];
    loop {
        let mut load = vec![0.0; k];
        for (j, &i) in current.iter().enumerate() {
            load[i] += sinks.atoms()[j].m;
        }
        if load.iter().zip(sources.atoms()).all(|(l, a)| (l - a.m).abs() <= 1e-9) {
            out.push(current.clone());
        }
        let mut pos = 0;
        loop {
            if pos == n {
                return out;
            }
            current[pos] += 1;
            if current[pos] < k {
                break;
            }
            current[pos] = 0;
            pos += 1;
        }
    }
}

fn best_component(
    source: Point,
    index: usize,
    sinks: &[SinkRef],
    alpha: f64,
    mode: OracleMode,
    cfg: &SolverConfig,
    scale: f64,
) -> Result<Tree> {
    let mut candidates = Vec::new();
    for edges in full_topologies(sinks.len() + 1) {
        let mut t = build(source, index, sinks, alpha, &edges);
        match mode {
            OracleMode::Continuous => {
                polish(&mut t, cfg, scale);
            }
            OracleMode::Grid { resolution } => grid_search(&mut t, resolution, scale)?,
        }
        candidates.push((t.compact(), true));
    }
    Ok(pick_best(candidates).0)
}

/// Edge lists of all full Steiner topologies on `n` terminals (`0..n`); Steiner
/// nodes are numbered from `n`. There are `(2n - 5)!!` of them for `n ≥ 3`.
pub(crate) fn full_topologies(n: usize) -> Vec<Vec<(usize, usize)>> {
    match n {
        0 | 1 => return vec![Vec::new()],
        2 => return vec![vec![(0, 1)]],
        _ => {}
    }
    let mut level = vec![vec![(0, n), (1, n), (2, n)]];
    for t in 3..n {
        let steiner = n + t - 2;
        let mut next = Vec::new();
        for edges in &level {
            for e in 0..edges.len() {
                let (a, b) = edges[e];
                let mut grown = edges.clone();
                grown[e] = (a, steiner);
                grown.push((steiner, b));
                grown.push((steiner, t));
                next.push(grown);
            }
        }
        level = next;
    }
    level
}

fn build(source: Point, index: usize, sinks: &[SinkRef], alpha: f64, edges: &[(usize, usize)]) -> Tree {
    let n = sinks.len() + 1;
    let nodes = edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(1).max(n);
    let centroid = sinks.iter().fold(source, |acc, s| acc + s.x) * (1.0 / n as f64);
    let mut t = Tree::new(source, Some(index), alpha);
    let mut id = vec![NIL; nodes];
    id[0] = 0;
    for v in 1..nodes {
        id[v] = if v < n {
            let s = sinks[v - 1];
            t.add_node(NodeKind::Sink, s.x, s.m, Some(s.label))
        } else {
            t.add_node(NodeKind::Steiner, centroid, 0.0, None)
        };
    }
    let mut adj = vec![Vec::new(); nodes];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut stack = vec![0];
    let mut seen = vec![false; nodes];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &w in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                t.link(id[w], id[u]);
                stack.push(w);
            }
        }
    }
    t.recompute_flows();
    t
}

fn grid_search(t: &mut Tree, resolution: usize, scale: f64) -> Result<()> {
    let order = t.bfs();
    let steiner: Vec<usize> = order.iter().copied().filter(|&v| t.kind[v] == NodeKind::Steiner).collect();
    if steiner.is_empty() {
        return Ok(());
    }
    let terminals: Vec<Point> = order.iter().filter(|&&v| t.kind[v] != NodeKind::Steiner).map(|&v| t.pos[v]).collect();
    let dim = (0..3).filter(|&k| terminals.iter().any(|p| p.0[k] != terminals[0].0[k])).count().max(1);
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &terminals {
        for k in 0..3 {
            lo[k] = lo[k].min(p.0[k]);
            hi[k] = hi[k].max(p.0[k]);
        }
    }
    let res = resolution.max(2);
    let mut lattice = terminals.clone();
    let axes: Vec<usize> = (0..3).filter(|&k| hi[k] > lo[k]).collect();
    let total = res.pow(axes.len() as u32);
    for idx in 0..total {
        let mut p = Point([lo[0], lo[1], lo[2]]);
        let mut r = idx;
        for &k in &axes {
            p.0[k] = lo[k] + (hi[k] - lo[k]) * (r % res) as f64 / (res - 1) as f64;
            r /= res;
        }
        lattice.push(p);
    }
    let evaluations = (lattice.len() as f64).powi(steiner.len() as i32);
    if evaluations > GRID_EVALUATION_CAP as f64 || dim > 3 {
        return Err(Error::OracleCap(steiner.len()));
    }
    let mut choice = vec![0usize; steiner.len()];
    let mut best = (f64::INFINITY, choice.clone());
    loop {
        for (s, &c) in steiner.iter().zip(&choice) {
            t.pos[*s] = lattice[c];
        }
        let cost = t.cost();
        if cost < best.0 {
            best = (cost, choice.clone());
        }
        let mut pos = 0;
        loop {
            if pos == choice.len() {
                for (s, &c) in steiner.iter().zip(&best.1) {
                    t.pos[*s] = lattice[c];
                }
                t.collapse_short_edges(1e-15 * scale.max(f64::MIN_POSITIVE));
                return Ok(());
            }
            choice[pos] += 1;
            if choice[pos] < lattice.len() {
                break;
            }
            choice[pos] = 0;
            pos += 1;
        }
    }
}
