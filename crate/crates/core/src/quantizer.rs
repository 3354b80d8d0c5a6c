//! N-point branched quantization: each site irrigates its basin of sinks with a
//! single-source tree, and the total cost is the sum of the basin costs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rstar::primitives::GeomWithData;
use rstar::RTree;
use serde::{Deserialize, Serialize};

use crate::error::{check_alpha, Error, Result};
use crate::geometry::{self, GeometryParams};
use crate::measures::{Atom, DiscreteMeasure};
use crate::network::{NodeKind, TransportNetwork};
use crate::point::Point;
use crate::solver::{length_scale, polish, refine_tree, solve_single, SinkRef, SolverConfig};
use crate::tree::{pow, Tree};

/// Measures larger than this are coarsened for the multistart stage.
const COARSE_ATOMS: usize = 256;
const SITE_RTOL: f64 = 1e-12;
const SITE_STEPS: usize = 64;
const SITE_REFINES: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantizerConfig {
    pub solver: SolverConfig,
    /// Multistarts for basin solves from scratch.
    pub basin_multistarts: usize,
    /// Reassignment sweeps per mass-optimal pass.
    pub reassign_rounds: usize,
    /// Alternations of site improvement and reassignment.
    pub site_rounds: usize,
    /// Relative improvement below which the alternation stops.
    pub tol: f64,
    /// Random site candidates per basin in [`improve_sites`].
    pub site_perturbations: usize,
    /// Nearby nodes of a destination basin tried as attach points.
    pub attach_candidates: usize,
    /// Independent seedings in [`solve_quantization`].
    pub multistarts: usize,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        QuantizerConfig {
            solver: SolverConfig { multistarts: 2, topology_moves: 12, search_tol: 1e-5, ..SolverConfig::default() },
            basin_multistarts: 2,
            reassign_rounds: 6,
            site_rounds: 6,
            tol: 1e-4,
            site_perturbations: 2,
            attach_candidates: 5,
            multistarts: 8,
        }
    }
}

impl QuantizerConfig {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.basin_multistarts == 0 || self.multistarts == 0 || self.attach_candidates == 0 {
            return Err(Error::Invalid("quantizer multistarts and attach_candidates must be positive".into()));
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(Error::Invalid("quantizer tol must be nonnegative".into()));
        }
        Ok(())
    }

    fn basin_solver(&self, salt: u64) -> SolverConfig {
        SolverConfig {
            multistarts: self.basin_multistarts,
            seed: self.solver.seed ^ salt.wrapping_mul(0xD1B5_4A32_D192_ED03),
            ..self.solver.clone()
        }
    }
}

/// Sites with their basins and per-basin networks.
#[derive(Clone, Debug, PartialEq)]
pub struct Quantizer {
    dim: usize,
    alpha: f64,
    sites: Vec<Point>,
    masses: Vec<f64>,
    assignment: Vec<usize>,
    networks: Vec<TransportNetwork>,
    total_cost: f64,
}

impl Quantizer {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sites(&self) -> &[Point] {
        &self.sites
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Site index of every sink of the target measure.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn networks(&self) -> &[TransportNetwork] {
        &self.networks
    }

    pub fn total_cost(&self) -> f64 {
        self.total_cost
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Sink indices of basin `i`, increasing.
    pub fn basin(&self, i: usize) -> Vec<usize> {
        self.assignment.iter().enumerate().filter(|(_, &s)| s == i).map(|(j, _)| j).collect()
    }

    /// Rebuilds a quantizer from its parts, recomputing masses and cost.
    pub fn from_parts(
        dim: usize,
        alpha: f64,
        sites: Vec<Point>,
        assignment: Vec<usize>,
        networks: Vec<TransportNetwork>,
    ) -> Result<Quantizer> {
        if networks.len() != sites.len() {
            return Err(Error::Invalid("one network per site is required".into()));
        }
        let mut masses = vec![0.0; sites.len()];
        for net in &networks {
            if net.topology().sources().len() != 1 {
                return Err(Error::Invalid("each basin network must have exactly one source".into()));
            }
        }
        for (i, net) in networks.iter().enumerate() {
            masses[i] = net.total_sink_mass();
        }
        if assignment.iter().any(|&s| s >= sites.len()) {
            return Err(Error::Invalid("assignment refers to a missing site".into()));
        }
        let total_cost = networks.iter().map(|n| n.cost()).sum();
        Ok(Quantizer { dim, alpha, sites, masses, assignment, networks, total_cost })
    }

    /// Structural checks against the target measure.
    pub fn check_invariants(&self, nu: &DiscreteMeasure, tol: f64) -> Result<()> {
        if self.assignment.len() != nu.len() {
            return Err(Error::Invalid("assignment does not cover the target".into()));
        }
        let mut seen = vec![0usize; nu.len()];
        for (i, net) in self.networks.iter().enumerate() {
            net.check_invariants(tol)?;
            let src = net.topology().sources()[0];
            if net.position(src) != self.sites[i] {
                return Err(Error::Invalid(format!("network {i} is not rooted at its site")));
            }
            let mut mass = 0.0;
            for v in net.topology().sinks() {
                let j = net.labels()[v].ok_or_else(|| Error::Invalid("unlabelled sink".into()))?;
                if j >= nu.len() || self.assignment[j] != i {
                    return Err(Error::Invalid(format!("sink {j} is served by the wrong basin")));
                }
                seen[j] += 1;
                mass += net.masses()[v];
            }
            if self.masses[i] <= 0.0 || (mass - self.masses[i]).abs() > tol * nu.total_mass().max(1.0) {
                return Err(Error::Invalid(format!("basin {i} mass mismatch")));
            }
        }
        if seen.iter().any(|&c| c != 1) {
            return Err(Error::Invalid("basins do not partition the sinks".into()));
        }
        let total: f64 = self.masses.iter().sum();
        if (total - nu.total_mass()).abs() > 1e-9 * nu.total_mass().max(1.0) {
            return Err(Error::Invalid("site masses do not add up to the target mass".into()));
        }
        let cost: f64 = self.networks.iter().map(|n| n.cost()).sum();
        if (cost - self.total_cost).abs() > 1e-9 * cost.max(1.0) {
            return Err(Error::Invalid("total cost differs from the sum of basin costs".into()));
        }
        Ok(())
    }
}

/// Working state: one tree per basin.
#[derive(Clone)]
struct State<'a> {
    nu: &'a DiscreteMeasure,
    alpha: f64,
    basins: Vec<Tree>,
}

impl<'a> State<'a> {
    fn cost(&self) -> f64 {
        self.basins.iter().map(|t| t.cost()).sum()
    }

    fn members(&self) -> Vec<Vec<usize>> {
        self.basins.iter().map(members_of).collect()
    }

    fn from_quantizer(q: &Quantizer, nu: &'a DiscreteMeasure) -> State<'a> {
        let basins = q.networks.iter().map(|n| Tree::from_network(n, n.topology().sources()[0])).collect();
        State { nu, alpha: q.alpha, basins }
    }

    fn to_quantizer(&self) -> Result<Quantizer> {
        let mut assignment = vec![usize::MAX; self.nu.len()];
        let mut sites = Vec::with_capacity(self.basins.len());
        let mut networks = Vec::with_capacity(self.basins.len());
        for t in &self.basins {
            let i = sites.len();
            let mut t = t.compact();
            t.label[t.root] = Some(i);
            for v in 1..t.len() {
                if t.kind[v] == NodeKind::Sink {
                    assignment[t.label[v].unwrap()] = i;
                }
            }
            sites.push(t.pos[t.root]);
            networks.push(t.to_network(self.nu.dim())?);
        }
        if assignment.contains(&usize::MAX) {
            return Err(Error::Invalid("internal error: unassigned sink".into()));
        }
        Quantizer::from_parts(self.nu.dim(), self.alpha, sites, assignment, networks)
    }
}

fn members_of(t: &Tree) -> Vec<usize> {
    let mut m: Vec<usize> = t.bfs().into_iter().filter(|&v| t.kind[v] == NodeKind::Sink).map(|v| t.label[v].unwrap()).collect();
    m.sort_unstable();
    m
}

/// Landscape value of every node of a tree (by node id).
fn node_z(t: &Tree) -> Vec<f64> {
    let mut z = vec![0.0; t.len()];
    for v in t.bfs() {
        if v != t.root {
            z[v] = z[t.parent[v]] + t.flow[v].powf(t.alpha - 1.0) * t.edge_len(v);
        }
    }
    z
}

fn dedupe(sites: &[Point]) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::new();
    for s in sites {
        if !out.iter().any(|o| o.bit_key() == s.bit_key()) {
            out.push(*s);
        }
    }
    out
}

fn nearest_site(x: &Point, sites: &[Point]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, s) in sites.iter().enumerate() {
        let d = x.dist2(s);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

fn check_inputs(nu: &DiscreteMeasure, alpha: f64, cfg: &QuantizerConfig) -> Result<()> {
    cfg.validate()?;
    if nu.is_empty() {
        return Err(Error::EmptyInstance);
    }
    check_alpha(alpha, nu.dim())
}

/// Solves basin `members` from `site`, from scratch or by adapting `warm`.
fn solve_basin(
    nu: &DiscreteMeasure,
    site: Point,
    members: &[usize],
    alpha: f64,
    cfg: &QuantizerConfig,
    warm: Option<&Tree>,
) -> Tree {
    let salt = site.bit_key().iter().fold(members.len() as u64, |h, k| h.rotate_left(17) ^ k);
    let scfg = cfg.basin_solver(salt);
    if let Some(w) = warm {
        let adapted = adapt(w, site, members, nu, scfg.candidate_neighbors);
        if let Some(t) = adapted {
            return refine_tree(t, &scfg).0;
        }
    }
    let sinks: Vec<SinkRef> = members.iter().map(|&j| SinkRef { x: nu.atoms()[j].x, m: nu.atoms()[j].m, label: j }).collect();
    solve_single(site, None, &sinks, alpha, &scfg).0
}

/// Edits `warm` to serve exactly `members` from `site`; `None` when too much changed.
fn adapt(warm: &Tree, site: Point, members: &[usize], nu: &DiscreteMeasure, k: usize) -> Option<Tree> {
    let mut wanted = vec![false; nu.len()];
    for &j in members {
        wanted[j] = true;
    }
    let mut t = warm.clone();
    t.pos[t.root] = site;
    let mut present = vec![false; nu.len()];
    for v in t.bfs() {
        if t.kind[v] != NodeKind::Sink {
            continue;
        }
        let j = t.label[v].unwrap();
        if wanted[j] {
            present[j] = true;
        } else {
            t.kind[v] = NodeKind::Steiner;
            t.own[v] = 0.0;
            t.label[v] = None;
        }
    }
    let missing: Vec<usize> = members.iter().copied().filter(|&j| !present[j]).collect();
    if 4 * missing.len() > members.len() + 4 {
        return None;
    }
    t.recompute_flows();
    t.tidy_all();
    for j in missing {
        let a = &nu.atoms()[j];
        let mut near: Vec<(f64, usize)> = t.bfs().into_iter().map(|v| (t.pos[v].dist2(&a.x), v)).collect();
        let keep = k.min(near.len());
        near.select_nth_unstable_by(keep - 1, |x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        near.truncate(keep);
        near.push((0.0, t.root));
        let mut best = (f64::INFINITY, t.root);
        for &(_, w) in &near {
            let d = pow(a.m, t.alpha) * a.x.dist(&t.pos[w]) + t.path_increase(w, a.m);
            if d < best.0 || (d == best.0 && w < best.1) {
                best = (d, w);
            }
        }
        let v = t.add_node(NodeKind::Sink, a.x, a.m, Some(j));
        t.attach(v, best.1);
    }
    t.recompute_flows();
    let t = t.compact();
    (t.bfs().len() > 1).then_some(t)
}

/// Locations fixed, masses optimized: nearest-site start, then reassignment sweeps.
pub fn mass_optimal(sites: &[Point], nu: &DiscreteMeasure, alpha: f64, config: &QuantizerConfig) -> Result<Quantizer> {
    check_inputs(nu, alpha, config)?;
    if sites.is_empty() {
        return Err(Error::Invalid("at least one site is required".into()));
    }
    let mut state = nearest_state(&dedupe(sites), nu, alpha, config);
    reassign(&mut state, config);
    state.to_quantizer()
}

fn nearest_state<'a>(sites: &[Point], nu: &'a DiscreteMeasure, alpha: f64, cfg: &QuantizerConfig) -> State<'a> {
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); sites.len()];
    for (j, a) in nu.atoms().iter().enumerate() {
        groups[nearest_site(&a.x, sites)].push(j);
    }
    let basins = sites
        .par_iter()
        .zip(groups.par_iter())
        .filter(|(_, g)| !g.is_empty())
        .map(|(s, g)| solve_basin(nu, *s, g, alpha, cfg, None))
        .collect();
    State { nu, alpha, basins }
}

/// A proposed move of sink `sink` from basin `from` to basin `to`.
#[derive(Clone, Copy, Debug)]
struct Move {
    gain: f64,
    sink: usize,
    from: usize,
    to: usize,
}

fn reassign(state: &mut State, cfg: &QuantizerConfig) {
    for _ in 0..cfg.reassign_rounds {
        let moves = propose_moves(state, cfg.attach_candidates);
        if moves.is_empty() || !apply_batches(state, &moves, cfg) {
            break;
        }
    }
}

/// Sinks whose first-variation surrogate in another basin beats `α·z·m` in their own.
fn propose_moves(state: &State, k: usize) -> Vec<Move> {
    let alpha = state.alpha;
    let zs: Vec<Vec<f64>> = state.basins.iter().map(node_z).collect();
    let items: Vec<GeomWithData<[f64; 3], (usize, usize)>> = state
        .basins
        .iter()
        .enumerate()
        .flat_map(|(b, t)| t.bfs().into_iter().map(move |v| GeomWithData::new(t.pos[v].0, (b, v))))
        .collect();
    let index = RTree::bulk_load(items);
    let nb = state.basins.len();
    let mut moves = Vec::new();
    for (i, t) in state.basins.iter().enumerate() {
        for v in t.bfs() {
            if t.kind[v] != NodeKind::Sink {
                continue;
            }
            let (x, m) = (t.pos[v], t.own[v]);
            let stay = alpha * zs[i][v] * m;
            let mut count = vec![0usize; nb];
            let mut best = vec![f64::INFINITY; nb];
            for g in index.nearest_neighbor_iter(x.0).take(4 * k + 8) {
                let (b, w) = g.data;
                if b == i || count[b] >= k {
                    continue;
                }
                count[b] += 1;
                let s = alpha * zs[b][w] * m + pow(m, alpha) * x.dist(&state.basins[b].pos[w]);
                best[b] = best[b].min(s);
            }
            let mut pick: Option<(f64, usize)> = None;
            for b in 0..nb {
                if count[b] == 0 {
                    continue;
                }
                let root = &state.basins[b].pos[state.basins[b].root];
                let s = best[b].min(pow(m, alpha) * x.dist(root));
                if s < stay && pick.map_or(true, |(p, _)| s < p) {
                    pick = Some((s, b));
                }
            }
            if let Some((s, b)) = pick {
                moves.push(Move { gain: stay - s, sink: t.label[v].unwrap(), from: i, to: b });
            }
        }
    }
    moves.sort_by(|a, b| b.gain.total_cmp(&a.gain).then(a.sink.cmp(&b.sink)));
    moves
}

/// Applies the best `len` moves, halving `len` until the re-solved total strictly decreases.
fn apply_batches(state: &mut State, moves: &[Move], cfg: &QuantizerConfig) -> bool {
    let base = state.cost();
    let mut len = moves.len();
    let members = state.members();
    while len > 0 {
        let mut groups = members.clone();
        let mut touched = vec![false; groups.len()];
        for mv in &moves[..len] {
            groups[mv.from].retain(|&j| j != mv.sink);
            groups[mv.to].push(mv.sink);
            touched[mv.from] = true;
            touched[mv.to] = true;
        }
        let trees: Vec<Option<Tree>> = (0..groups.len())
            .into_par_iter()
            .map(|b| {
                let t = &state.basins[b];
                if !touched[b] {
                    return Some(t.clone());
                }
                let mut g = groups[b].clone();
                g.sort_unstable();
                (!g.is_empty()).then(|| solve_basin(state.nu, t.pos[t.root], &g, state.alpha, cfg, Some(t)))
            })
            .collect();
        let trial: Vec<Tree> = trees.into_iter().flatten().collect();
        let cost: f64 = trial.iter().map(|t| t.cost()).sum();
        if cost < base {
            state.basins = trial;
            return true;
        }
        len /= 2;
    }
    false
}

/// Candidate positions for basin `t`'s site: centroid, first branch point,
/// root relaxed onto its neighbours, and random perturbations.
fn site_candidates(t: &Tree, cfg: &QuantizerConfig, salt: u64) -> Vec<Point> {
    let mut out = Vec::new();
    let sinks: Vec<usize> = t.bfs().into_iter().filter(|&v| t.kind[v] == NodeKind::Sink).collect();
    let mass: f64 = sinks.iter().map(|&v| t.own[v]).sum();
    if mass > 0.0 {
        out.push(sinks.iter().fold(Point::ORIGIN, |acc, &v| acc + t.pos[v] * t.own[v]) * (1.0 / mass));
    }
    let mut v = t.root;
    while t.children[v].len() == 1 && t.kind[v] != NodeKind::Sink {
        v = t.children[v][0];
    }
    if t.children[v].len() == 1 && v == t.root {
        v = t.children[v][0];
    }
    out.push(t.pos[v]);
    let mut relaxed = t.clone();
    let scale = length_scale(sinks.iter().map(|&v| &t.pos[v]));
    if scale > 0.0 {
        let params = GeometryParams {
            eps_start: cfg.solver.epsilon_smoothing * scale,
            eps_final: cfg.solver.epsilon_final * scale,
            tol: cfg.solver.geometry_tol,
            max_iters: cfg.solver.max_geometry_iters,
            free_root: true,
        };
        geometry::optimize(&mut relaxed, &params);
        out.push(relaxed.pos[relaxed.root]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.solver.seed ^ salt);
    let site = t.pos[t.root];
    let r = scale / 4.0;
    let dim = (0..3).filter(|&k| sinks.iter().any(|&v| t.pos[v].0[k] != 0.0)).count().max(1);
    for _ in 0..cfg.site_perturbations {
        let mut p = site;
        for k in 0..dim {
            p.0[k] += rng.gen_range(-r..=r);
        }
        out.push(p);
    }
    out
}

/// Moves each site to the best of a few candidates (scored by re-optimizing the
/// basin network's geometry, then re-solved); per-basin costs never increase.
pub fn improve_sites(q: &Quantizer, nu: &DiscreteMeasure, config: &QuantizerConfig) -> Result<Quantizer> {
    check_inputs(nu, q.alpha, config)?;
    let mut state = State::from_quantizer(q, nu);
    improve_state(&mut state, config);
    state.to_quantizer()
}

fn improve_state(state: &mut State, cfg: &QuantizerConfig) {
    let (nu, alpha) = (state.nu, state.alpha);
    state.basins = state.basins.par_iter().enumerate().map(|(i, t)| improve_basin(nu, alpha, i, t, cfg)).collect();
}

/// Geometry-only descent over the site candidates, then a topology refine,
/// repeated until the basin cost drops by less than the geometry tolerance.
fn improve_basin(nu: &DiscreteMeasure, alpha: f64, index: usize, t: &Tree, cfg: &QuantizerConfig) -> Tree {
    let scale = length_scale(t.bfs().iter().map(|&v| &t.pos[v]));
    let settle = cfg.solver.geometry_tol / nu.len().max(1) as f64;
    let better = |a: f64, b: f64| a < b * (1.0 - SITE_RTOL) && b - a > settle;
    let mut best = t.clone();
    for _ in 0..SITE_REFINES {
        let mut cur = best.clone();
        let mut moved = false;
        for _ in 0..SITE_STEPS {
            let salt = (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ cur.pos[cur.root].bit_key()[0];
            let mut step: Option<Tree> = None;
            for c in site_candidates(&cur, cfg, salt) {
                if c == cur.pos[cur.root] || !c.is_finite() {
                    continue;
                }
                let mut trial = cur.clone();
                trial.pos[trial.root] = c;
                polish(&mut trial, &cfg.solver, scale);
                if step.as_ref().map_or(true, |s| trial.cost() < s.cost()) {
                    step = Some(trial);
                }
            }
            match step {
                Some(s) if better(s.cost(), cur.cost()) => {
                    cur = s;
                    moved = true;
                }
                _ => break,
            }
        }
        if !moved {
            break;
        }
        let refined = solve_basin(nu, cur.pos[cur.root], &members_of(&cur), alpha, cfg, Some(&cur));
        let next = if refined.cost() <= cur.cost() { refined } else { cur };
        if !better(next.cost(), best.cost()) {
            break;
        }
        best = next;
    }
    best
}

/// k-means++ style seeding weighted by mass.
fn seed_sites(nu: &DiscreteMeasure, n: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let atoms = nu.atoms();
    let pick = |w: &[f64], rng: &mut ChaCha8Rng| {
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        let mut r = rng.gen::<f64>() * total;
        for (j, x) in w.iter().enumerate() {
            if r < *x {
                return Some(j);
            }
            r -= x;
        }
        w.iter().rposition(|x| *x > 0.0)
    };
    let masses: Vec<f64> = atoms.iter().map(|a| a.m).collect();
    let first = pick(&masses, rng).unwrap_or(0);
    let mut sites = vec![atoms[first].x];
    let mut d2: Vec<f64> = atoms.iter().map(|a| a.x.dist2(&sites[0])).collect();
    while sites.len() < n {
        let w: Vec<f64> = atoms.iter().zip(&d2).map(|(a, d)| a.m * d).collect();
        let Some(j) = pick(&w, rng) else { break };
        let s = atoms[j].x;
        sites.push(s);
        for (d, a) in d2.iter_mut().zip(atoms) {
            *d = d.min(a.x.dist2(&s));
        }
    }
    sites
}

/// Adds sites at the sinks of largest landscape value until there are `n`,
/// discounting sinks near each new site.
fn add_sites(state: &State, n: usize) -> Vec<Point> {
    let mut sites: Vec<Point> = state.basins.iter().map(|t| t.pos[t.root]).collect();
    let mut z: Vec<(Point, f64, usize)> = Vec::new();
    for t in &state.basins {
        let zt = node_z(t);
        for v in t.bfs() {
            if t.kind[v] == NodeKind::Sink {
                z.push((t.pos[v], zt[v], t.label[v].unwrap()));
            }
        }
    }
    z.sort_by_key(|e| e.2);
    while sites.len() < n {
        let mut best: Option<(f64, usize)> = None;
        for (k, e) in z.iter().enumerate() {
            if sites.iter().any(|s| s.bit_key() == e.0.bit_key()) {
                continue;
            }
            if best.map_or(true, |(b, _)| e.1 > b) {
                best = Some((e.1, k));
            }
        }
        let Some((_, k)) = best else { break };
        let s = z[k].0;
        sites.push(s);
        for e in z.iter_mut() {
            e.1 = e.1.min(e.0.dist(&s));
        }
    }
    sites
}

/// Nearest-site basins for `sites`, then reassignment sweeps.
fn start<'a>(nu: &'a DiscreteMeasure, sites: &[Point], alpha: f64, cfg: &QuantizerConfig) -> State<'a> {
    let mut state = nearest_state(&dedupe(sites), nu, alpha, cfg);
    reassign(&mut state, cfg);
    state
}

/// Up to `rounds` alternations of site improvement and reassignment; returns
/// whether the last one still improved by more than `tol`.
fn alternate(state: &mut State, cfg: &QuantizerConfig, rounds: usize) -> bool {
    for round in 0..rounds {
        let before = state.cost();
        improve_state(state, cfg);
        reassign(state, cfg);
        let after = state.cost();
        log::debug!("site round {round}: {before} -> {after}");
        if after >= before * (1.0 - cfg.tol) {
            return false;
        }
    }
    rounds > 0
}

/// Alternation interleaved with restarts from the nearest-site assignment of
/// the current sites, while the restarts keep winning.
fn finish<'a>(mut state: State<'a>, cfg: &QuantizerConfig, rounds: usize) -> State<'a> {
    for _ in 0..=rounds {
        alternate(&mut state, cfg, rounds);
        let sites: Vec<Point> = state.basins.iter().map(|t| t.pos[t.root]).collect();
        let fresh = start(state.nu, &sites, state.alpha, cfg);
        if fresh.cost() < state.cost() * (1.0 - cfg.tol) {
            state = fresh;
        } else {
            if fresh.cost() <= state.cost() * (1.0 + 1e-12) {
                state = fresh;
            }
            break;
        }
    }
    state
}

fn trivial(nu: &DiscreteMeasure, alpha: f64) -> Result<Quantizer> {
    let mut state = State { nu, alpha, basins: Vec::new() };
    for (j, a) in nu.atoms().iter().enumerate() {
        let mut t = Tree::new(a.x, None, alpha);
        let v = t.add_node(NodeKind::Sink, a.x, a.m, Some(j));
        t.link(v, 0);
        t.recompute_flows();
        state.basins.push(t);
    }
    state.to_quantizer()
}

/// Heuristic optimal quantizer with at most `n` sites.
pub fn solve_quantization(nu: &DiscreteMeasure, n: usize, alpha: f64, config: &QuantizerConfig) -> Result<Quantizer> {
    check_inputs(nu, alpha, config)?;
    if n == 0 {
        return Err(Error::Invalid("N must be at least 1".into()));
    }
    if n >= nu.len() {
        return trivial(nu, alpha);
    }
    solve_from(nu, n, alpha, config, None).to_quantizer()
}

/// Multistart from seeded sites plus `extra` site sets. Large measures run the
/// multistart on a binned copy and refine the winner at full resolution.
fn solve_from<'a>(nu: &'a DiscreteMeasure, n: usize, alpha: f64, config: &QuantizerConfig, extra: Option<Vec<Point>>) -> State<'a> {
    if nu.len() > COARSE_ATOMS {
        if let Ok(coarse) = coarsen(nu, COARSE_ATOMS) {
            if coarse.len() > n {
                let best = multistart(&coarse, n, alpha, config, extra);
                let sites: Vec<Point> = best.basins.iter().map(|t| t.pos[t.root]).collect();
                let state = finish(start(nu, &sites, alpha, config), config, config.site_rounds);
                return fill(state, n, config);
            }
        }
    }
    fill(multistart(nu, n, alpha, config, extra), n, config)
}

fn multistart<'a>(nu: &'a DiscreteMeasure, n: usize, alpha: f64, config: &QuantizerConfig, extra: Option<Vec<Point>>) -> State<'a> {
    let mut seeds: Vec<Vec<Point>> = extra.into_iter().collect();
    for s in 0..config.multistarts {
        let mut rng = ChaCha8Rng::seed_from_u64(config.solver.seed ^ (s as u64 + 1).wrapping_mul(0xA076_1D64_78BD_642F));
        seeds.push(seed_sites(nu, n, &mut rng));
    }
    let runs: Vec<State> =
        seeds.par_iter().map(|sites| finish(start(nu, sites, alpha, config), config, config.site_rounds)).collect();
    best_state(runs)
}

/// Tops a state up to `n` sites when basins were lost.
fn fill<'a>(state: State<'a>, n: usize, config: &QuantizerConfig) -> State<'a> {
    if state.basins.len() >= n || state.basins.len() >= state.nu.len() {
        return state;
    }
    let more = add_sites(&state, n);
    let filled = finish(start(state.nu, &more, state.alpha, config), config, config.site_rounds);
    if filled.cost() <= state.cost() {
        filled
    } else {
        state
    }
}

/// Mass-weighted centroids of the atoms binned on a uniform grid of at most `cap` cells.
fn coarsen(nu: &DiscreteMeasure, cap: usize) -> Result<DiscreteMeasure> {
    let d = nu.dim();
    let k = ((cap as f64).powf(1.0 / d as f64).floor() as usize).max(1);
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for a in nu.atoms() {
        for i in 0..d {
            lo[i] = lo[i].min(a.x.0[i]);
            hi[i] = hi[i].max(a.x.0[i]);
        }
    }
    let mut bins: Vec<(Point, f64)> = vec![(Point::ORIGIN, 0.0); k.pow(d as u32)];
    for a in nu.atoms() {
        let mut cell = 0;
        for i in (0..d).rev() {
            let w = hi[i] - lo[i];
            let c = if w > 0.0 { (((a.x.0[i] - lo[i]) / w * k as f64) as usize).min(k - 1) } else { 0 };
            cell = cell * k + c;
        }
        bins[cell].0 = bins[cell].0 + a.x * a.m;
        bins[cell].1 += a.m;
    }
    let atoms = bins.into_iter().filter(|b| b.1 > 0.0).map(|(p, m)| Atom { x: p * (1.0 / m), m }).collect();
    DiscreteMeasure::new(d, atoms)
}

/// Like [`solve_quantization`], seeded from a solution with fewer sites plus new
/// sites at sinks of maximal landscape value. Never returns a costlier quantizer
/// than `previous`.
pub fn solve_quantization_warm(
    nu: &DiscreteMeasure,
    n: usize,
    alpha: f64,
    config: &QuantizerConfig,
    previous: &Quantizer,
) -> Result<Quantizer> {
    check_inputs(nu, alpha, config)?;
    if previous.assignment.len() != nu.len() || previous.alpha != alpha {
        return Err(Error::Invalid("previous quantizer does not match the target".into()));
    }
    if n >= nu.len() {
        return trivial(nu, alpha);
    }
    let prev = State::from_quantizer(previous, nu);
    let sites = add_sites(&prev, n);
    let state = solve_from(nu, n, alpha, config, Some(sites));
    if state.cost() <= prev.cost() {
        state.to_quantizer()
    } else {
        Ok(previous.clone())
    }
}

fn best_state(runs: Vec<State>) -> State {
    let mut best: Option<State> = None;
    for s in runs {
        if best.as_ref().map_or(true, |b| s.cost() < b.cost()) {
            best = Some(s);
        }
    }
    best.expect("at least one run")
}

/// `|total_cost - Σ_i cost_i|` where `cost_i` re-optimizes basin `i` as an
/// independent single-source problem (its own site, its own sinks). Fails if
/// the basins do not partition the sinks.
pub fn partition_equivalence_check(q: &Quantizer, nu: &DiscreteMeasure, config: &QuantizerConfig) -> Result<f64> {
    let mut count = vec![0usize; nu.len()];
    for net in &q.networks {
        for v in net.topology().sinks() {
            if let Some(j) = net.labels()[v] {
                if j < count.len() {
                    count[j] += 1;
                }
            }
        }
    }
    if q.assignment.len() != nu.len() || count.iter().any(|&c| c != 1) {
        return Err(Error::Invalid("basins do not partition the sinks".into()));
    }
    let mut sum = 0.0;
    for net in &q.networks {
        let mut t = Tree::from_network(net, net.topology().sources()[0]);
        let scale = length_scale(net.positions());
        polish(&mut t, &config.solver, scale);
        sum += t.cost().min(net.cost());
    }
    Ok((q.total_cost - sum).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{grid_discretize, AxisBox, DensitySpec};
    use approx::assert_relative_eq;

    fn pair() -> DiscreteMeasure {
        DiscreteMeasure::from_pairs(2, &[(&[-1.0, 0.0], 0.5), (&[1.0, 0.0], 0.5)]).unwrap()
    }

    #[test]
    fn single_site_two_atoms() {
        let q = mass_optimal(&[Point::xy(0.0, 0.0)], &pair(), 0.75, &QuantizerConfig::default()).unwrap();
        assert_relative_eq!(q.total_cost(), 2.0 * 0.5f64.powf(0.75), max_relative = 1e-9);
        q.check_invariants(&pair(), 1e-10).unwrap();
    }

    #[test]
    fn duplicate_sites_collapse() {
        let nu = pair();
        let cfg = QuantizerConfig::default();
        let a = mass_optimal(&[Point::xy(0.0, 0.5), Point::xy(0.0, 0.5)], &nu, 0.7, &cfg).unwrap();
        let b = mass_optimal(&[Point::xy(0.0, 0.5)], &nu, 0.7, &cfg).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a, b);
    }

    #[test]
    fn single_sink_basin_moves_onto_sink() {
        let nu = DiscreteMeasure::from_pairs(2, &[(&[0.3, 0.4], 1.0)]).unwrap();
        let cfg = QuantizerConfig::default();
        let q = mass_optimal(&[Point::xy(0.0, 0.0)], &nu, 0.8, &cfg).unwrap();
        assert_relative_eq!(q.total_cost(), 0.5, max_relative = 1e-12);
        let q = improve_sites(&q, &nu, &cfg).unwrap();
        assert!(q.total_cost() < 1e-12);
        assert_eq!(q.sites()[0], Point::xy(0.3, 0.4));
    }

    #[test]
    fn many_sites_means_zero_cost() {
        let nu = pair();
        let q = solve_quantization(&nu, 2, 0.7, &QuantizerConfig::default()).unwrap();
        assert_eq!(q.total_cost(), 0.0);
        q.check_invariants(&nu, 1e-10).unwrap();
    }

    #[test]
    fn grid_quantizer_invariants() {
        let nu = grid_discretize(&AxisBox::unit_cube(2), &DensitySpec::Uniform, 12).unwrap();
        let cfg = QuantizerConfig::default();
        let q = solve_quantization(&nu, 3, 0.8, &cfg).unwrap();
        q.check_invariants(&nu, 1e-10).unwrap();
        assert!(q.len() <= 3);
        let r = partition_equivalence_check(&q, &nu, &cfg).unwrap();
        assert!(r <= 1e-6 * q.total_cost(), "residual {r}");
        let w = solve_quantization_warm(&nu, 4, 0.8, &cfg, &q).unwrap();
        assert!(w.total_cost() <= q.total_cost() + 1e-9);
        w.check_invariants(&nu, 1e-10).unwrap();
    }
}
