//! Fixed-topology geometry optimization.
//!
//! Minimizes `F(p) = Σ_e w_e |p_u - p_v|` with `w_e = flow_e^α` over the free
//! nodes (Steiner nodes, optionally the root). The convex functional is
//! smoothed to `Σ w_e sqrt(|p_u - p_v|² + ε²)`; each ε level is minimized by
//! damped Newton steps (the Hessian is tree-structured, so the Newton system is
//! solved exactly by leaf-to-root elimination) with Weiszfeld sweeps as the
//! fallback, and ε is halved whenever the relative improvement drops below the
//! tolerance.

use nalgebra::{Matrix3, Vector3};

use crate::network::NodeKind;
use crate::point::Point;
use crate::tree::{Tree, NIL};

#[derive(Clone, Copy, Debug)]
pub(crate) struct GeometryParams {
    pub eps_start: f64,
    pub eps_final: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub free_root: bool,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct GeometryOutcome {
    pub converged: bool,
    pub iterations: usize,
}

struct Workspace {
    order: Vec<usize>,
    free: Vec<bool>,
    weight: Vec<f64>,
}

impl Workspace {
    fn new(tree: &Tree, free_root: bool) -> Workspace {
        let order = tree.bfs();
        let mut free = vec![false; tree.len()];
        let mut weight = vec![0.0; tree.len()];
        for &v in &order {
            free[v] = tree.kind[v] == NodeKind::Steiner || (free_root && v == tree.root);
            if v != tree.root {
                weight[v] = if tree.flow[v] > 0.0 { tree.flow[v].powf(tree.alpha) } else { 0.0 };
            }
        }
        Workspace { order, free, weight }
    }

    fn any_free(&self) -> bool {
        self.order.iter().any(|&v| self.free[v])
    }

    fn smoothed(&self, tree: &Tree, pos: &[Point], eps2: f64) -> f64 {
        self.order
            .iter()
            .filter(|&&v| v != tree.root)
            .map(|&v| self.weight[v] * (pos[v].dist2(&pos[tree.parent[v]]) + eps2).sqrt())
            .sum()
    }
}

fn vec3(p: &Point) -> Vector3<f64> {
    Vector3::new(p.0[0], p.0[1], p.0[2])
}

fn point(v: &Vector3<f64>) -> Point {
    Point([v[0], v[1], v[2]])
}

pub(crate) fn optimize(tree: &mut Tree, params: &GeometryParams) -> GeometryOutcome {
    let ws = Workspace::new(tree, params.free_root);
    if !ws.any_free() {
        return GeometryOutcome { converged: true, iterations: 0 };
    }
    let dim_mask = dim_mask(tree);
    let mut eps = params.eps_start.max(params.eps_final);
    let mut iterations = 0;
    let mut pos = tree.pos.clone();
    loop {
        let eps2 = eps * eps;
        let mut current = ws.smoothed(tree, &pos, eps2);
        loop {
            if iterations >= params.max_iters {
                tree.pos = pos;
                return GeometryOutcome { converged: false, iterations };
            }
            iterations += 1;
            let next = newton_step(tree, &ws, &mut pos, eps2, current, &dim_mask)
                .unwrap_or_else(|| weiszfeld_sweep(tree, &ws, &mut pos, eps2));
            let improvement = current - next;
            current = next;
            if improvement <= params.tol * current.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        if eps <= params.eps_final {
            break;
        }
        eps = (eps * 0.5).max(params.eps_final);
    }
    tree.pos = pos;
    GeometryOutcome { converged: true, iterations }
}

/// Coordinates that are identically zero on every node stay out of the Newton system.
fn dim_mask(tree: &Tree) -> [bool; 3] {
    let mut mask = [false; 3];
    for p in &tree.pos {
        for k in 0..3 {
            if p.0[k] != 0.0 {
                mask[k] = true;
            }
        }
    }
    mask
}

/// One damped Newton step; returns the new smoothed value, or `None` if no descent was found.
fn newton_step(
    tree: &Tree,
    ws: &Workspace,
    pos: &mut [Point],
    eps2: f64,
    current: f64,
    mask: &[bool; 3],
) -> Option<f64> {
    let n = tree.len();
    let mut diag = vec![Matrix3::<f64>::zeros(); n];
    let mut rhs = vec![Vector3::<f64>::zeros(); n];
    let mut coupling = vec![Matrix3::<f64>::zeros(); n];
    for &v in &ws.order {
        if v == tree.root {
            continue;
        }
        let p = tree.parent[v];
        if !(ws.free[v] || ws.free[p]) {
            continue;
        }
        let u = vec3(&pos[v]) - vec3(&pos[p]);
        let s2 = u.norm_squared() + eps2;
        let s = s2.sqrt();
        let w = ws.weight[v];
        let grad = u * (w / s);
        let hess = (Matrix3::identity() * s2 - u * u.transpose()) * (w / (s2 * s));
        if ws.free[v] {
            diag[v] += hess;
            rhs[v] -= grad;
        }
        if ws.free[p] {
            diag[p] += hess;
            rhs[p] += grad;
        }
        coupling[v] = hess;
    }
    for (k, &active) in mask.iter().enumerate() {
        if !active {
            for v in &ws.order {
                rhs[*v][k] = 0.0;
            }
        }
    }
    // Eliminate children into parents; off-diagonal block is -coupling.
    let mut inv = vec![Matrix3::<f64>::zeros(); n];
    for &v in ws.order.iter().rev() {
        if !ws.free[v] {
            continue;
        }
        inv[v] = diag[v].try_inverse()?;
        let p = tree.parent[v];
        if p != NIL && ws.free[p] {
            let b = coupling[v];
            let t = b * inv[v];
            diag[p] -= t * b;
            let r = rhs[v];
            rhs[p] += t * r;
        }
    }
    let mut step = vec![Vector3::<f64>::zeros(); n];
    let mut slope = 0.0;
    for &v in &ws.order {
        if !ws.free[v] {
            continue;
        }
        let p = tree.parent[v];
        let mut r = rhs[v];
        if p != NIL && ws.free[p] {
            r += coupling[v] * step[p];
        }
        step[v] = inv[v] * r;
    }
    // rhs was modified by elimination; recompute the directional derivative from scratch.
    for &v in &ws.order {
        if v == tree.root {
            continue;
        }
        let p = tree.parent[v];
        if !(ws.free[v] || ws.free[p]) {
            continue;
        }
        let u = vec3(&pos[v]) - vec3(&pos[p]);
        let s = (u.norm_squared() + eps2).sqrt();
        let grad = u * (ws.weight[v] / s);
        let dv = if ws.free[v] { step[v] } else { Vector3::zeros() };
        let dp = if ws.free[p] { step[p] } else { Vector3::zeros() };
        slope += grad.dot(&(dv - dp));
    }
    if !(slope < 0.0) || !step.iter().all(|s| s.iter().all(|c| c.is_finite())) {
        return None;
    }
    let base: Vec<Point> = pos.to_vec();
    let mut t = 1.0;
    for _ in 0..40 {
        for &v in &ws.order {
            if ws.free[v] {
                pos[v] = point(&(vec3(&base[v]) + step[v] * t));
            }
        }
        let value = ws.smoothed(tree, pos, eps2);
        if value <= current + 1e-4 * t * slope {
            return Some(value);
        }
        t *= 0.5;
    }
    pos.copy_from_slice(&base);
    None
}

/// Gauss–Seidel Weiszfeld sweep; every node update is a majorize–minimize step.
fn weiszfeld_sweep(tree: &Tree, ws: &Workspace, pos: &mut [Point], eps2: f64) -> f64 {
    for &v in &ws.order {
        if !ws.free[v] {
            continue;
        }
        let mut num = Point::ORIGIN;
        let mut den = 0.0;
        let mut add = |nbr: usize, w: f64| {
            let s = (pos[v].dist2(&pos[nbr]) + eps2).sqrt();
            let c = w / s;
            num = num + pos[nbr] * c;
            den += c;
        };
        if tree.parent[v] != NIL {
            add(tree.parent[v], ws.weight[v]);
        }
        for &c in &tree.children[v] {
            add(c, ws.weight[c]);
        }
        if den > 0.0 {
            pos[v] = num * (1.0 / den);
        }
    }
    ws.smoothed(tree, pos, eps2)
}

/// Moves a single node to the weighted Fermat point of its neighbours; returns
/// the change in exact cost (never positive).
pub(crate) fn relax_node(tree: &mut Tree, v: usize, iters: usize) -> f64 {
    let nbrs = neighbours(tree, v);
    if nbrs.is_empty() {
        return 0.0;
    }
    let start = local_cost(&nbrs, &tree.pos[v]);
    let (x, value) = fermat_point(&nbrs, tree.pos[v], iters);
    if value < start {
        tree.pos[v] = x;
        value - start
    } else {
        0.0
    }
}

fn local_cost(nbrs: &[(Point, f64)], p: &Point) -> f64 {
    nbrs.iter().map(|(q, w)| w * p.dist(q)).sum()
}

/// Approximate minimizer of `Σ w_i |x - q_i|` by Weiszfeld iterations from `start`;
/// the anchors themselves are also tried, since optima are often degenerate.
pub(crate) fn fermat_point(nbrs: &[(Point, f64)], start: Point, iters: usize) -> (Point, f64) {
    let mut x = start;
    let mut best = (x, local_cost(nbrs, &x));
    for _ in 0..iters {
        let mut num = Point::ORIGIN;
        let mut den = 0.0;
        for (q, w) in nbrs {
            let d = x.dist(q);
            if d < 1e-300 {
                den = 0.0;
                break;
            }
            num = num + *q * (w / d);
            den += w / d;
        }
        if den == 0.0 {
            break;
        }
        let next = num * (1.0 / den);
        let value = local_cost(nbrs, &next);
        if value < best.1 {
            best = (next, value);
        }
        if next.dist(&x) <= 1e-14 * (1.0 + x.norm()) {
            break;
        }
        x = next;
    }
    for (q, _) in nbrs {
        let value = local_cost(nbrs, q);
        if value < best.1 {
            best = (*q, value);
        }
    }
    best
}

pub(crate) fn neighbours(tree: &Tree, v: usize) -> Vec<(Point, f64)> {
    let mut out = Vec::with_capacity(tree.children[v].len() + 1);
    let a = tree.alpha;
    if tree.parent[v] != NIL && tree.flow[v] > 0.0 {
        out.push((tree.pos[tree.parent[v]], tree.flow[v].powf(a)));
    }
    for &c in &tree.children[v] {
        if tree.flow[c] > 0.0 {
            out.push((tree.pos[c], tree.flow[c].powf(a)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> GeometryParams {
        GeometryParams { eps_start: 1e-3, eps_final: 1e-10, tol: 1e-13, max_iters: 5000, free_root: false }
    }

    fn fermat_tree(alpha: f64, masses: [f64; 2]) -> Tree {
        let mut t = Tree::new(Point::xy(0.0, 0.0), None, alpha);
        let s = t.add_node(NodeKind::Steiner, Point::xy(0.5, 0.3), 0.0, None);
        let a = t.add_node(NodeKind::Sink, Point::xy(4.0, 1.0), masses[0], Some(0));
        let b = t.add_node(NodeKind::Sink, Point::xy(4.0, -1.0), masses[1], Some(1));
        t.link(s, 0);
        t.link(a, s);
        t.link(b, s);
        t.recompute_flows();
        t
    }

    #[test]
    fn steiner_point_satisfies_balance_of_forces() {
        // At an interior optimum the weighted unit vectors sum to zero.
        let mut t = fermat_tree(0.6, [0.5, 0.5]);
        let out = optimize(&mut t, &params());
        assert!(out.converged);
        let s = t.pos[1];
        let mut force = Point::ORIGIN;
        for (q, w) in neighbours(&t, 1) {
            force = force + (q - s) * (w / q.dist(&s));
        }
        assert!(force.norm() < 1e-6, "residual force {force:?}");
        // symmetric instance: branch point on the axis
        assert!(s.0[1].abs() < 1e-8);
    }

    #[test]
    fn matches_one_dimensional_scan() {
        let mut t = fermat_tree(0.75, [0.5, 0.5]);
        optimize(&mut t, &params());
        let f = |x: f64| x + 2.0 * 0.5f64.powf(0.75) * ((4.0 - x).powi(2) + 1.0).sqrt();
        let mut best = f64::INFINITY;
        let mut k = 0;
        while k <= 400_000 {
            best = best.min(f(k as f64 * 1e-5));
            k += 1;
        }
        assert_relative_eq!(t.cost(), best, max_relative = 1e-9);
    }

    #[test]
    fn relax_node_never_increases_cost() {
        let mut t = fermat_tree(0.8, [0.2, 0.8]);
        let before = t.cost();
        let d = relax_node(&mut t, 1, 200);
        assert!(d <= 0.0);
        assert_relative_eq!(t.cost(), before + d, max_relative = 1e-12);
    }
}

