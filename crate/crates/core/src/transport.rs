//! Exact classical optimal transport (W1 with Euclidean ground cost) between two
//! discrete measures, solved as an uncapacitated transportation problem with a
//! primal network simplex.

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;

/// Default cap on `#mu + #nu` for [`w1_distance`].
pub const DEFAULT_W1_CAP: usize = 12_000;

const UP: i8 = -1;
const DOWN: i8 = 1;
const NONE: usize = usize::MAX;

pub fn w1_distance(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    w1_distance_with_cap(mu, nu, DEFAULT_W1_CAP)
}

pub fn w1_distance_with_cap(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cap: usize) -> Result<f64> {
    Ok(solve(mu, nu, cap)?.map_or(0.0, |s| s.objective()))
}

/// Optimal W1 plan as `(i, j, mass)` triples with positive mass.
pub fn transport_plan(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Vec<(usize, usize, f64)>> {
    let Some(s) = solve(mu, nu, DEFAULT_W1_CAP)? else {
        return Ok(Vec::new());
    };
    Ok(s.flow[..s.arcs()]
        .iter()
        .enumerate()
        .filter(|(_, f)| **f > 0.0)
        .map(|(k, &f)| (k / s.n2, k % s.n2, f))
        .collect())
}

fn solve(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cap: usize) -> Result<Option<TransportSimplex>> {
    if (mu.total_mass() - nu.total_mass()).abs() > 1e-9 {
        return Err(Error::Unbalanced(mu.total_mass(), nu.total_mass()));
    }
    if mu.len() + nu.len() > cap {
        return Err(Error::TooLargeForW1 { atoms: mu.len() + nu.len(), cap });
    }
    if mu.is_empty() || nu.is_empty() {
        return Ok(None);
    }
    let supply: Vec<f64> = mu.atoms().iter().map(|a| a.m).collect();
    let scale = mu.total_mass() / nu.total_mass();
    let demand: Vec<f64> = nu.atoms().iter().map(|a| a.m * scale).collect();
    let xs = mu.points();
    let ys = nu.points();
    let n2 = ys.len();
    let cost: Vec<f64> = xs.iter().flat_map(|x| ys.iter().map(move |y| x.dist(y))).collect();
    debug_assert_eq!(cost.len(), xs.len() * n2);
    let mut simplex = TransportSimplex::new(supply, demand, cost);
    simplex.solve();
    Ok(Some(simplex))
}

/// Network simplex state for a dense bipartite transportation problem.
///
/// Nodes `0..n1` are supplies, `n1..n1+n2` demands and `n1+n2` an artificial root.
/// Real arc `k = i*n2 + j` goes from supply `i` to demand `j`; artificial arc
/// `A + v` links node `v` with the root.
struct TransportSimplex {
    n1: usize,
    n2: usize,
    cost: Vec<f64>,
    flow: Vec<f64>,
    art_cost: f64,
    parent: Vec<usize>,
    pred: Vec<usize>,
    pred_dir: Vec<i8>,
    depth: Vec<usize>,
    pi: Vec<f64>,
    children: Vec<Vec<usize>>,
    next_arc: usize,
    eps: f64,
}

impl TransportSimplex {
    fn new(supply: Vec<f64>, demand: Vec<f64>, cost: Vec<f64>) -> Self {
        let (n1, n2) = (supply.len(), demand.len());
        let n = n1 + n2;
        let root = n;
        let arcs = n1 * n2;
        let max_c = cost.iter().cloned().fold(0.0, f64::max);
        let art_cost = (max_c + 1.0) * (n as f64 + 1.0);
        let mut flow = vec![0.0; arcs + n];
        let mut parent = vec![root; n + 1];
        let mut pred = vec![NONE; n + 1];
        let mut pred_dir = vec![0i8; n + 1];
        let mut depth = vec![1usize; n + 1];
        let mut pi = vec![0.0; n + 1];
        for v in 0..n {
            pred[v] = arcs + v;
            if v < n1 {
                pred_dir[v] = UP;
                flow[arcs + v] = supply[v];
                pi[v] = -art_cost;
            } else {
                pred_dir[v] = DOWN;
                flow[arcs + v] = demand[v - n1];
                pi[v] = art_cost;
            }
        }
        parent[root] = NONE;
        depth[root] = 0;
        let mut children = vec![Vec::new(); n + 1];
        children[root] = (0..n).collect();
        TransportSimplex {
            n1,
            n2,
            cost,
            flow,
            art_cost,
            parent,
            pred,
            pred_dir,
            depth,
            pi,
            children,
            next_arc: 0,
            eps: 1e-13 * art_cost,
        }
    }

    fn arcs(&self) -> usize {
        self.n1 * self.n2
    }

    fn source(&self, a: usize) -> usize {
        let arcs = self.arcs();
        if a < arcs {
            a / self.n2
        } else {
            let v = a - arcs;
            if v < self.n1 {
                v
            } else {
                self.n1 + self.n2
            }
        }
    }

    fn target(&self, a: usize) -> usize {
        let arcs = self.arcs();
        if a < arcs {
            self.n1 + a % self.n2
        } else {
            let v = a - arcs;
            if v < self.n1 {
                self.n1 + self.n2
            } else {
                v
            }
        }
    }

    fn reduced_cost(&self, a: usize) -> f64 {
        self.cost[a] + self.pi[a / self.n2] - self.pi[self.n1 + a % self.n2]
    }

    /// Block search pricing over real arcs.
    fn find_entering(&mut self) -> Option<usize> {
        let arcs = self.arcs();
        let block = ((arcs as f64).sqrt() as usize).max(10).min(arcs);
        let mut best = None;
        let mut best_rc = -self.eps;
        let mut scanned = 0;
        let mut a = self.next_arc;
        while scanned < arcs {
            let rc = self.reduced_cost(a);
            if rc < best_rc {
                best_rc = rc;
                best = Some(a);
            }
            a += 1;
            if a == arcs {
                a = 0;
            }
            scanned += 1;
            if scanned % block == 0 && best.is_some() {
                break;
            }
        }
        self.next_arc = a;
        best
    }

    fn solve(&mut self) {
        while let Some(entering) = self.find_entering() {
            self.pivot(entering);
        }
    }

    fn pivot(&mut self, entering: usize) {
        let first = self.source(entering);
        let second = self.target(entering);
        let join = {
            let (mut u, mut v) = (first, second);
            while u != v {
                if self.depth[u] > self.depth[v] {
                    u = self.parent[u];
                } else if self.depth[v] > self.depth[u] {
                    v = self.parent[v];
                } else {
                    u = self.parent[u];
                    v = self.parent[v];
                }
            }
            u
        };

        // Leaving arc: last blocking arc met when traversing the cycle from `join`
        // in the direction of the entering arc.
        let mut delta = f64::INFINITY;
        let mut u_out = NONE;
        let mut side = 0;
        let mut u = first;
        while u != join {
            if self.pred_dir[u] == UP {
                let d = self.flow[self.pred[u]].max(0.0);
                if d < delta {
                    delta = d;
                    u_out = u;
                    side = 1;
                }
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != join {
            if self.pred_dir[u] == DOWN {
                let d = self.flow[self.pred[u]].max(0.0);
                if d <= delta {
                    delta = d;
                    u_out = u;
                    side = 2;
                }
            }
            u = self.parent[u];
        }
        assert!(u_out != NONE, "transportation problem is unbounded");

        if delta > 0.0 {
            let mut u = first;
            while u != join {
                self.flow[self.pred[u]] += self.pred_dir[u] as f64 * delta;
                u = self.parent[u];
            }
            let mut u = second;
            while u != join {
                self.flow[self.pred[u]] -= self.pred_dir[u] as f64 * delta;
                u = self.parent[u];
            }
        }
        self.flow[self.pred[u_out]] = 0.0;
        self.flow[entering] += delta;

        // Re-hang the subtree below the leaving arc from the entering arc.
        let (start, other, start_dir) = if side == 1 { (first, second, UP) } else { (second, first, DOWN) };
        let mut path = vec![start];
        while *path.last().unwrap() != u_out {
            let last = *path.last().unwrap();
            path.push(self.parent[last]);
        }
        let old_parent: Vec<usize> = path.iter().map(|&p| self.parent[p]).collect();
        let old_pred: Vec<usize> = path.iter().map(|&p| self.pred[p]).collect();
        let old_dir: Vec<i8> = path.iter().map(|&p| self.pred_dir[p]).collect();
        for (i, &p) in path.iter().enumerate() {
            let siblings = &mut self.children[old_parent[i]];
            if let Some(pos) = siblings.iter().position(|&c| c == p) {
                siblings.swap_remove(pos);
            }
        }
        self.parent[start] = other;
        self.pred[start] = entering;
        self.pred_dir[start] = start_dir;
        self.children[other].push(start);
        for i in 1..path.len() {
            let p = path[i];
            self.parent[p] = path[i - 1];
            self.pred[p] = old_pred[i - 1];
            self.pred_dir[p] = -old_dir[i - 1];
            self.children[path[i - 1]].push(p);
        }

        let rc = self.cost[entering] + self.pi[first] - self.pi[second];
        let shift = if side == 1 { -rc } else { rc };
        let mut stack = vec![start];
        self.depth[start] = self.depth[other] + 1;
        while let Some(v) = stack.pop() {
            self.pi[v] += shift;
            for k in 0..self.children[v].len() {
                let c = self.children[v][k];
                self.depth[c] = self.depth[v] + 1;
                stack.push(c);
            }
        }
    }

    fn objective(&self) -> f64 {
        debug_assert!(self.art_cost > 0.0);
        self.flow[..self.arcs()]
            .iter()
            .zip(&self.cost)
            .filter(|(f, _)| **f > 0.0)
            .map(|(f, c)| f * c)
            .sum()
    }
}
