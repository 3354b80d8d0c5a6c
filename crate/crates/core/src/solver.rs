//! Branched transport solver: geometry optimization for a fixed topology and a
//! multistart local search over topologies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rstar::primitives::GeomWithData;
use rstar::RTree;
use serde::{Deserialize, Serialize};

use crate::error::{check_alpha, Error, Result};
use crate::geometry::{self, fermat_point, GeometryParams};
use crate::measures::DiscreteMeasure;
use crate::network::{NodeKind, TransportNetwork};
use crate::point::Point;
use crate::transport::transport_plan;
use crate::tree::{pow, NetworkParts, Tree, NIL};

/// Knobs of the branched transport solver. Lengths are relative to the instance diameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Initial smoothing of `|·|`; halved down to `epsilon_final`.
    pub epsilon_smoothing: f64,
    pub epsilon_final: f64,
    pub geometry_tol: f64,
    pub max_geometry_iters: usize,
    /// Rounds of local topology moves per start.
    pub topology_moves: usize,
    pub multistarts: usize,
    pub seed: u64,
    pub collapse_threshold: f64,
    /// Nearby nodes tried as new parents of a moved subtree.
    pub candidate_neighbors: usize,
    /// Up to this many sinks every move is scored by a full geometry re-optimization.
    pub exhaustive_below: usize,
    /// Larger instances stop once a round gains less than this fraction of the cost.
    pub search_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon_smoothing: 1e-3,
            epsilon_final: 1e-9,
            geometry_tol: 1e-10,
            max_geometry_iters: 2000,
            topology_moves: 30,
            multistarts: 8,
            seed: 0,
            collapse_threshold: 1e-7,
            candidate_neighbors: 8,
            exhaustive_below: 8,
            search_tol: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive =
            [self.epsilon_smoothing, self.epsilon_final, self.geometry_tol, self.collapse_threshold, self.search_tol];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Invalid("solver tolerances must be positive".into()));
        }
        if self.epsilon_final > self.epsilon_smoothing {
            return Err(Error::Invalid("epsilon_final must not exceed epsilon_smoothing".into()));
        }
        if self.multistarts == 0 || self.max_geometry_iters == 0 || self.candidate_neighbors == 0 {
            return Err(Error::Invalid("multistarts, max_geometry_iters and candidate_neighbors must be positive".into()));
        }
        Ok(())
    }
}

/// Length scale of a point set: the bounding-box diagonal (within √d of the diameter).
pub(crate) fn length_scale<'a>(pts: impl IntoIterator<Item = &'a Point>) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in pts {
        for k in 0..3 {
            lo[k] = lo[k].min(p.0[k]);
            hi[k] = hi[k].max(p.0[k]);
        }
    }
    let s: f64 = (0..3).map(|k| (hi[k] - lo[k]).max(0.0).powi(2)).sum::<f64>().sqrt();
    if s.is_finite() {
        s
    } else {
        0.0
    }
}

fn tree_scale(t: &Tree) -> f64 {
    length_scale(t.bfs().iter().map(|&v| &t.pos[v]))
}

/// Optimizes the geometry of `t` and contracts degenerate edges; returns convergence.
pub(crate) fn polish(t: &mut Tree, cfg: &SolverConfig, scale: f64) -> bool {
    if scale <= 0.0 {
        return true;
    }
    let params = GeometryParams {
        eps_start: cfg.epsilon_smoothing * scale,
        eps_final: cfg.epsilon_final * scale,
        tol: cfg.geometry_tol,
        max_iters: cfg.max_geometry_iters,
        free_root: false,
    };
    let mut converged = true;
    for _ in 0..4 {
        let out = geometry::optimize(t, &params);
        log::trace!("geometry: {} iterations, converged {}", out.iterations, out.converged);
        converged = out.converged;
        if t.collapse_short_edges(cfg.collapse_threshold * scale) == 0 {
            break;
        }
    }
    converged
}

/// Optimizes the Steiner positions of `network` with its topology fixed (up to
/// the contraction of degenerate edges). Terminal positions never move.
pub fn optimize_geometry(network: &TransportNetwork, config: &SolverConfig) -> Result<TransportNetwork> {
    config.validate()?;
    let scale = length_scale(network.positions());
    let mut parts = NetworkParts::default();
    let mut converged = true;
    for s in network.topology().sources() {
        let mut t = Tree::from_network(network, s);
        converged &= polish(&mut t, config, scale);
        t.append_to(&mut parts);
    }
    let mut out = parts.build(network.dim(), network.alpha())?;
    out.set_converged(converged);
    Ok(out)
}

/// A sink handed to the single-source solver.
#[derive(Clone, Copy, Debug)]
pub(crate) struct SinkRef {
    pub x: Point,
    pub m: f64,
    pub label: usize,
}

/// Heuristic minimizer of the α-mass between `sources` and `sinks`.
///
/// With several sources the sinks are first split by an optimal classical
/// transport plan, then each source irrigates its share as a separate tree.
pub fn solve_bot(
    sources: &DiscreteMeasure,
    sinks: &DiscreteMeasure,
    alpha: f64,
    config: &SolverConfig,
) -> Result<TransportNetwork> {
    config.validate()?;
    if sources.is_empty() || sinks.is_empty() {
        return Err(Error::EmptyInstance);
    }
    if sources.dim() != sinks.dim() {
        return Err(Error::Invalid("sources and sinks have different dimensions".into()));
    }
    check_alpha(alpha, sinks.dim())?;
    if (sources.total_mass() - sinks.total_mass()).abs() > 1e-9 {
        return Err(Error::Unbalanced(sources.total_mass(), sinks.total_mass()));
    }
    let mut groups: Vec<Vec<SinkRef>> = vec![Vec::new(); sources.len()];
    if sources.len() == 1 {
        groups[0] = sinks.atoms().iter().enumerate().map(|(j, a)| SinkRef { x: a.x, m: a.m, label: j }).collect();
    } else {
        for (i, j, m) in transport_plan(sources, sinks)? {
            groups[i].push(SinkRef { x: sinks.atoms()[j].x, m, label: j });
        }
    }
    let mut parts = NetworkParts::default();
    let mut converged = true;
    for (i, group) in groups.iter().enumerate() {
        let (t, ok) = solve_single(sources.atoms()[i].x, Some(i), group, alpha, config);
        converged &= ok;
        t.append_to(&mut parts);
    }
    let mut net = parts.build(sinks.dim(), alpha)?;
    net.set_converged(converged);
    Ok(net)
}

/// Best tree over all multistarts, reduced by `(cost, signature)`.
pub(crate) fn solve_single(
    source: Point,
    label: Option<usize>,
    sinks: &[SinkRef],
    alpha: f64,
    cfg: &SolverConfig,
) -> (Tree, bool) {
    let starts: Vec<(Tree, bool)> = (0..cfg.multistarts)
        .into_par_iter()
        .map(|s| {
            let t = if sinks.len() <= cfg.exhaustive_below {
                insertion_tree(source, label, sinks, alpha, cfg, s)
            } else {
                greedy_tree(source, label, sinks, alpha, cfg.seed, s, cfg.candidate_neighbors)
            };
            local_search(t, sinks.len(), cfg)
        })
        .collect();
    pick_best(starts)
}

/// Continues the search from an existing tree (no multistart).
pub(crate) fn refine_tree(t: Tree, cfg: &SolverConfig) -> (Tree, bool) {
    let sinks = t.bfs().iter().filter(|&&v| t.kind[v] == NodeKind::Sink).count();
    local_search(t, sinks, cfg)
}

pub(crate) fn pick_best(candidates: Vec<(Tree, bool)>) -> (Tree, bool) {
    let mut best: Option<(f64, Vec<(usize, usize)>, Tree, bool)> = None;
    for (t, ok) in candidates {
        let cost = t.cost();
        let better = match &best {
            None => true,
            Some((c, sig, _, _)) => cost < *c || (cost == *c && t.signature() < *sig),
        };
        if better {
            let sig = t.signature();
            best = Some((cost, sig, t, ok));
        }
    }
    let (_, _, t, ok) = best.expect("at least one candidate");
    (t, ok)
}

/// Sink indices in order of (perturbed, for `start > 0`) distance to the source.
fn insertion_order(source: Point, sinks: &[SinkRef], seed: u64, start: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (start as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut keyed: Vec<(f64, usize)> = sinks
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let f = if start == 0 { 1.0 } else { rng.gen_range(0.5..1.5) };
            (s.x.dist(&source) * f, i)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, i)| i).collect()
}

/// Greedy insertion: each sink is hung from whichever of the nearest nodes
/// already in the tree makes the exact cost increase smallest.
pub(crate) fn greedy_tree(
    source: Point,
    label: Option<usize>,
    sinks: &[SinkRef],
    alpha: f64,
    seed: u64,
    start: usize,
    k: usize,
) -> Tree {
    let mut t = Tree::new(source, label, alpha);
    let mut index: RTree<GeomWithData<[f64; 3], usize>> = RTree::new();
    index.insert(GeomWithData::new(source.0, 0));
    for i in insertion_order(source, sinks, seed, start) {
        let s = sinks[i];
        let mut best = (f64::INFINITY, 0);
        for w in index.nearest_neighbor_iter(s.x.0).take(k).map(|g| g.data).chain(std::iter::once(0)) {
            let d = pow(s.m, alpha) * s.x.dist(&t.pos[w]) + t.path_increase(w, s.m);
            if d < best.0 {
                best = (d, w);
            }
        }
        let v = t.add_node(NodeKind::Sink, s.x, s.m, Some(s.label));
        t.attach(v, best.1);
        index.insert(GeomWithData::new(s.x.0, v));
    }
    t
}

/// Best insertion: each sink goes wherever the re-optimized tree is cheapest,
/// either under an existing node or on an edge.
fn insertion_tree(source: Point, label: Option<usize>, sinks: &[SinkRef], alpha: f64, cfg: &SolverConfig, start: usize) -> Tree {
    let scale = length_scale(sinks.iter().map(|s| &s.x).chain(std::iter::once(&source)));
    let mut t = Tree::new(source, label, alpha);
    for i in insertion_order(source, sinks, cfg.seed, start) {
        let s = sinks[i];
        let mut best: Option<(f64, Tree)> = None;
        for w in t.bfs() {
            let mut c = t.clone();
            let v = c.add_node(NodeKind::Sink, s.x, s.m, Some(s.label));
            c.link(v, w);
            c.recompute_flows();
            consider(c, cfg, scale, f64::INFINITY, &mut best);
            if w != t.root {
                let mut c = t.clone();
                let q = s.x.project_on_segment(&t.pos[w], &t.pos[t.parent[w]]);
                let st = c.split_edge(w, q);
                let v = c.add_node(NodeKind::Sink, s.x, s.m, Some(s.label));
                c.link(v, st);
                c.recompute_flows();
                consider(c, cfg, scale, f64::INFINITY, &mut best);
            }
        }
        t = best.expect("the root is always a candidate").1;
    }
    t
}

fn local_search(mut t: Tree, sink_count: usize, cfg: &SolverConfig) -> (Tree, bool) {
    let scale = tree_scale(&t);
    let mut converged = polish(&mut t, cfg, scale);
    if scale <= 0.0 {
        return (t.compact(), true);
    }
    let exhaustive = sink_count <= cfg.exhaustive_below;
    for round in 0..cfg.topology_moves {
        let clock = std::time::Instant::now();
        let before = t.cost();
        let improved = if exhaustive {
            exhaustive_round(&mut t, cfg, scale)
        } else {
            let snapshot = t.clone();
            let snapshot_converged = converged;
            if fast_round(&mut t, cfg) {
                t.tidy_all();
                converged = polish(&mut t, cfg, scale);
                t = t.compact();
            }
            if t.cost() >= before {
                t = snapshot;
                converged = snapshot_converged;
            }
            t.cost() < before * (1.0 - cfg.search_tol)
        };
        log::trace!("search round {round}: cost {} in {:?}", t.cost(), clock.elapsed());
        if !improved {
            break;
        }
    }
    (t.compact(), converged)
}

/// Every subtree regraft (onto a node or onto the projection on an edge) is
/// scored by a full geometry optimization; the best strictly improving move is applied.
fn exhaustive_round(t: &mut Tree, cfg: &SolverConfig, scale: f64) -> bool {
    let base = t.cost();
    let tol = 1e-12 * base.max(f64::MIN_POSITIVE);
    let nodes = t.bfs();
    let mut best: Option<(f64, Tree)> = None;
    for &u in &nodes {
        if u == t.root {
            continue;
        }
        let p = t.parent[u];
        for &w in &nodes {
            if t.is_ancestor(u, w) {
                continue;
            }
            if w != p {
                let mut c = t.clone();
                c.detach(u);
                c.attach(u, w);
                consider(c, cfg, scale, base - tol, &mut best);
            }
            // onto the edge above w
            if w != t.root {
                let mut c = t.clone();
                let q = t.pos[u].project_on_segment(&t.pos[w], &t.pos[t.parent[w]]);
                c.detach(u);
                let s = c.split_edge(w, q);
                c.attach(u, s);
                consider(c, cfg, scale, base - tol, &mut best);
            }
        }
    }
    match best {
        Some((_, c)) => {
            *t = c;
            true
        }
        None => false,
    }
}

fn consider(mut c: Tree, cfg: &SolverConfig, scale: f64, bar: f64, best: &mut Option<(f64, Tree)>) {
    c.tidy_all();
    polish(&mut c, cfg, scale);
    let cost = c.cost();
    let limit = best.as_ref().map_or(bar, |(b, _)| b.min(bar));
    if cost < limit {
        *best = Some((cost, c.compact()));
    }
}

struct Candidates {
    index: RTree<GeomWithData<[f64; 3], usize>>,
}

impl Candidates {
    fn new(t: &Tree) -> Candidates {
        let items = t.bfs().into_iter().map(|v| GeomWithData::new(t.pos[v].0, v)).collect();
        Candidates { index: RTree::bulk_load(items) }
    }

    fn near(&self, x: &Point, limit: usize) -> impl Iterator<Item = usize> + '_ {
        self.index.nearest_neighbor_iter(x.0).take(limit).map(|g| g.data)
    }
}

enum Target {
    Node(usize),
    Edge(usize, Point),
}

/// One pass of regrafts, swaps and Steiner splits scored exactly at fixed
/// geometry. Returns true if any move was applied.
fn fast_round(t: &mut Tree, cfg: &SolverConfig) -> bool {
    let tol = 1e-12 * t.cost().max(f64::MIN_POSITIVE);
    let cands = Candidates::new(t);
    let order = t.bfs();
    let mut changed = false;
    for &u in &order {
        if u != t.root && t.alive[u] && t.parent[u] != NIL {
            changed |= try_regraft(t, u, &cands, cfg.candidate_neighbors, tol);
        }
    }
    let swap_k = (cfg.candidate_neighbors / 2).max(1);
    let mut marks = Marks::new(t.len());
    for &u in &order {
        if u != t.root && t.alive[u] && t.parent[u] != NIL {
            changed |= try_swap(t, u, &cands, swap_k, tol, &mut marks);
        }
    }
    for &w in &order {
        while t.alive[w] && try_split(t, w, tol) {
            changed = true;
        }
    }
    t.recompute_flows();
    changed
}

/// Generation-stamped node marks for ancestor queries.
struct Marks {
    stamp: Vec<u32>,
    current: u32,
}

impl Marks {
    fn new(n: usize) -> Marks {
        Marks { stamp: vec![0; n], current: 0 }
    }

    /// Lowest common ancestor of `a` and `b`.
    fn lca(&mut self, t: &Tree, a: usize, b: usize) -> usize {
        if self.stamp.len() < t.len() {
            self.stamp.resize(t.len(), 0);
        }
        self.current += 1;
        let mut w = a;
        while w != NIL {
            self.stamp[w] = self.current;
            w = t.parent[w];
        }
        let mut w = b;
        while self.stamp[w] != self.current {
            w = t.parent[w];
        }
        w
    }
}

/// Cost change of adding `delta` to the flow on every edge from `v` up to (not including) `stop`.
fn shift_until(t: &Tree, mut v: usize, stop: usize, delta: f64) -> f64 {
    let a = t.alpha;
    let mut change = 0.0;
    while v != stop {
        let f = t.flow[v];
        change += (pow(f + delta, a) - pow(f, a)) * t.edge_len(v);
        v = t.parent[v];
    }
    change
}

fn try_regraft(t: &mut Tree, u: usize, cands: &Candidates, k: usize, tol: f64) -> bool {
    let a = t.alpha;
    let p = t.parent[u];
    let fu = t.flow[u];
    let mut delta = t.detach(u);
    let contracted = if p != t.root && t.kind[p] == NodeKind::Steiner && t.children[p].len() == 1 {
        let c = t.children[p][0];
        delta += t.contract(p);
        Some(c)
    } else {
        None
    };
    let mut best: Option<(f64, Target)> = None;
    let mut offer = |d: f64, target: Target| {
        if best.as_ref().map_or(true, |(b, _)| d < *b) {
            best = Some((d, target));
        }
    };
    let xu = t.pos[u];
    let mut targets: Vec<usize> = cands.near(&xu, 2 * k + 1).filter(|&w| w != u).collect();
    targets.push(t.root);
    let g = if contracted.is_some() { t.parent[contracted.unwrap()] } else { t.parent[p] };
    if g != NIL {
        targets.push(g);
    }
    for w in targets {
        if !t.alive[w] || !t.is_attached(w) {
            continue;
        }
        if w != p {
            offer(pow(fu, a) * xu.dist(&t.pos[w]) + t.path_increase(w, fu), Target::Node(w));
        }
        if w != t.root {
            let g = t.parent[w];
            let q = xu.project_on_segment(&t.pos[w], &t.pos[g]);
            if q.dist(&t.pos[w]) > 0.0 && q.dist(&t.pos[g]) > 0.0 {
                let fw = t.flow[w];
                let d = pow(fu, a) * xu.dist(&q) + pow(fw, a) * (t.pos[w].dist(&q) - t.pos[w].dist(&t.pos[g]))
                    + pow(fw + fu, a) * q.dist(&t.pos[g])
                    + t.path_increase(g, fu);
                offer(d, Target::Edge(w, q));
            }
        }
    }
    if let Some((d, target)) = best {
        if delta + d < -tol {
            match target {
                Target::Node(w) => {
                    t.attach(u, w);
                }
                Target::Edge(w, q) => {
                    let s = t.split_edge(w, q);
                    t.attach(u, s);
                    geometry::relax_node(t, s, 50);
                }
            }
            return true;
        }
    }
    if let Some(c) = contracted {
        t.uncontract(p, c);
    }
    t.attach(u, p);
    false
}

/// Exchanges the parents of `u` and a nearby node `v`.
fn try_swap(t: &mut Tree, u: usize, cands: &Candidates, k: usize, tol: f64, marks: &mut Marks) -> bool {
    let a = t.alpha;
    let xu = t.pos[u];
    let mut tried = 0;
    for v in cands.near(&xu, 3 * k + 1) {
        if tried >= k {
            break;
        }
        if v == u || v == t.root || !t.alive[v] || t.parent[v] == NIL {
            continue;
        }
        let (pu, pv) = (t.parent[u], t.parent[v]);
        if pu == pv || t.is_ancestor(u, v) || t.is_ancestor(v, u) {
            continue;
        }
        tried += 1;
        let (fu, fv) = (t.flow[u], t.flow[v]);
        let l = marks.lca(t, pu, pv);
        let d = pow(fu, a) * (xu.dist(&t.pos[pv]) - xu.dist(&t.pos[pu]))
            + pow(fv, a) * (t.pos[v].dist(&t.pos[pu]) - t.pos[v].dist(&t.pos[pv]))
            + shift_until(t, pu, l, fv - fu)
            + shift_until(t, pv, l, fu - fv);
        if d < -tol {
            t.detach(u);
            t.detach(v);
            t.attach(u, pv);
            t.attach(v, pu);
            return true;
        }
    }
    false
}

/// Moves two children of `w` under a new Steiner node at their weighted Fermat point.
fn try_split(t: &mut Tree, w: usize, tol: f64) -> bool {
    let needed = if t.kind[w] == NodeKind::Steiner { 3 } else { 2 };
    if t.children[w].len() < needed {
        return false;
    }
    let a = t.alpha;
    let xw = t.pos[w];
    // Splitting `ca, cb` off `w` helps iff the pull of the two branches beats the
    // weight of the new shared edge: |A e_a + B e_b| > W.
    let mut screened: Vec<(f64, usize, usize)> = Vec::new();
    let kids = &t.children[w];
    for (i, &ca) in kids.iter().enumerate() {
        let la = t.pos[ca].dist(&xw);
        if la == 0.0 {
            continue;
        }
        for &cb in &kids[i + 1..] {
            let lb = t.pos[cb].dist(&xw);
            if lb == 0.0 {
                continue;
            }
            let (fa, fb) = (t.flow[ca], t.flow[cb]);
            let pull = (t.pos[ca] - xw) * (pow(fa, a) / la) + (t.pos[cb] - xw) * (pow(fb, a) / lb);
            let excess = pull.norm() - pow(fa + fb, a);
            if excess > 0.0 {
                screened.push((excess, ca, cb));
            }
        }
    }
    screened.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut best: Option<(f64, usize, usize, Point)> = None;
    for &(_, ca, cb) in screened.iter().take(3) {
        let (fa, fb) = (t.flow[ca], t.flow[cb]);
        let anchors = [(xw, pow(fa + fb, a)), (t.pos[ca], pow(fa, a)), (t.pos[cb], pow(fb, a))];
        let start = (xw + t.pos[ca] + t.pos[cb]) * (1.0 / 3.0);
        let (s, value) = fermat_point(&anchors, start, 100);
        let d = value - pow(fa, a) * t.pos[ca].dist(&xw) - pow(fb, a) * t.pos[cb].dist(&xw);
        if best.as_ref().map_or(true, |b| d < b.0) {
            best = Some((d, ca, cb, s));
        }
    }
    match best {
        Some((d, ca, cb, s)) if d < -tol => {
            let node = t.add_node(NodeKind::Steiner, s, 0.0, None);
            t.unlink(ca);
            t.unlink(cb);
            t.link(node, w);
            t.link(ca, node);
            t.link(cb, node);
            t.flow[node] = t.flow[ca] + t.flow[cb];
            true
        }
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::alpha_mass;
    use approx::assert_relative_eq;

    fn measure(pts: &[(f64, f64, f64)]) -> DiscreteMeasure {
        let pairs: Vec<([f64; 2], f64)> = pts.iter().map(|&(x, y, m)| ([x, y], m)).collect();
        let refs: Vec<(&[f64], f64)> = pairs.iter().map(|(c, m)| (&c[..], *m)).collect();
        DiscreteMeasure::from_pairs(2, &refs).unwrap()
    }

    #[test]
    fn single_edge() {
        let net = solve_bot(&measure(&[(0.0, 0.0, 1.0)]), &measure(&[(1.0, 0.0, 1.0)]), 0.7, &SolverConfig::default())
            .unwrap();
        assert_eq!(net.topology().edges().len(), 1);
        assert_relative_eq!(net.cost(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn collinear_chain() {
        let src = measure(&[(0.0, 0.0, 1.0)]);
        let snk = measure(&[(1.0, 0.0, 1.0 / 3.0), (2.0, 0.0, 1.0 / 3.0), (3.0, 0.0, 1.0 / 3.0)]);
        let net = solve_bot(&src, &snk, 0.9, &SolverConfig::default()).unwrap();
        let expected = 1.0 + (2.0f64 / 3.0).powf(0.9) + (1.0f64 / 3.0).powf(0.9);
        assert_relative_eq!(net.cost(), expected, max_relative = 1e-9);
        assert!(net.topology().steiner_nodes().is_empty());
    }

    #[test]
    fn symmetric_y_at_alpha_one_is_degenerate() {
        let src = measure(&[(0.0, 0.0, 1.0)]);
        let snk = measure(&[(1.0, 1.0, 0.5), (1.0, -1.0, 0.5)]);
        let net = solve_bot(&src, &snk, 1.0, &SolverConfig::default()).unwrap();
        assert_relative_eq!(net.cost(), 2f64.sqrt(), max_relative = 1e-8);
    }

    #[test]
    fn errors() {
        let cfg = SolverConfig::default();
        let src = measure(&[(0.0, 0.0, 1.0)]);
        let snk = measure(&[(1.0, 0.0, 0.5)]);
        assert!(matches!(solve_bot(&src, &snk, 0.7, &cfg), Err(Error::Unbalanced(..))));
        let empty = DiscreteMeasure::new(2, vec![]).unwrap();
        assert!(matches!(solve_bot(&src, &empty, 0.7, &cfg), Err(Error::EmptyInstance)));
        assert!(matches!(solve_bot(&src, &src, 0.3, &cfg), Err(Error::AlphaOutOfRange { .. })));
    }

    #[test]
    fn multi_source_marginals() {
        let src = measure(&[(0.0, 0.0, 0.5), (10.0, 0.0, 0.5)]);
        let snk = measure(&[(0.0, 1.0, 0.25), (1.0, 1.0, 0.25), (10.0, 1.0, 0.3), (11.0, 0.0, 0.2)]);
        let net = solve_bot(&src, &snk, 0.8, &SolverConfig::default()).unwrap();
        net.check_invariants(1e-10).unwrap();
        let sm = net.sink_marginal(4);
        for (a, b) in sm.iter().zip(snk.atoms()) {
            assert_relative_eq!(*a, b.m, epsilon = 1e-10);
        }
        let so = net.source_marginal(2);
        assert_relative_eq!(so[0], 0.5, epsilon = 1e-10);
        assert_relative_eq!(alpha_mass(&net).unwrap(), net.cost(), max_relative = 1e-12);
    }

    #[test]
    fn large_instance_uses_fast_moves() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<(f64, f64, f64)> = (0..60).map(|_| (rng.gen::<f64>(), rng.gen::<f64>(), 1.0 / 60.0)).collect();
        let snk = measure(&pts);
        let src = measure(&[(0.5, 0.5, 1.0)]);
        let cfg = SolverConfig { multistarts: 2, ..SolverConfig::default() };
        let net = solve_bot(&src, &snk, 0.7, &cfg).unwrap();
        net.check_invariants(1e-10).unwrap();
        let star: f64 = pts.iter().map(|&(x, y, m)| m.powf(0.7) * ((x - 0.5).hypot(y - 0.5))).sum();
        assert!(net.cost() < 0.7 * star, "{} vs star {}", net.cost(), star);
    }
}
