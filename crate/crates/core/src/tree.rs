//! Mutable single-source geometric tree used by the solvers.
//!
//! Nodes live in an arena; `flow[v]` is the mass carried on the edge from `v` to
//! its parent (the sink mass of `v`'s subtree). Cost deltas of structural edits
//! are tracked exactly at fixed geometry.

use std::collections::VecDeque;

use crate::error::Result;
use crate::network::{NodeKind, Topology, TransportNetwork};
use crate::point::Point;

pub(crate) const NIL: usize = usize::MAX;

#[derive(Clone, Debug)]
pub(crate) struct Tree {
    pub alpha: f64,
    pub pos: Vec<Point>,
    pub kind: Vec<NodeKind>,
    /// Sink mass held at the node itself.
    pub own: Vec<f64>,
    pub label: Vec<Option<usize>>,
    pub parent: Vec<usize>,
    pub children: Vec<Vec<usize>>,
    pub flow: Vec<f64>,
    pub alive: Vec<bool>,
    pub root: usize,
}

impl Tree {
    pub fn new(source: Point, label: Option<usize>, alpha: f64) -> Tree {
        Tree {
            alpha,
            pos: vec![source],
            kind: vec![NodeKind::Source],
            own: vec![0.0],
            label: vec![label],
            parent: vec![NIL],
            children: vec![Vec::new()],
            flow: vec![0.0],
            alive: vec![true],
            root: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn add_node(&mut self, kind: NodeKind, pos: Point, own: f64, label: Option<usize>) -> usize {
        self.pos.push(pos);
        self.kind.push(kind);
        self.own.push(own);
        self.label.push(label);
        self.parent.push(NIL);
        self.children.push(Vec::new());
        self.flow.push(own);
        self.alive.push(true);
        self.pos.len() - 1
    }

    /// Links `u` under `p` without touching flows.
    pub fn link(&mut self, u: usize, p: usize) {
        debug_assert_eq!(self.parent[u], NIL);
        self.parent[u] = p;
        self.children[p].push(u);
    }

    pub fn unlink(&mut self, u: usize) {
        let p = self.parent[u];
        if p != NIL {
            let ch = &mut self.children[p];
            if let Some(i) = ch.iter().position(|&c| c == u) {
                ch.remove(i);
            }
            self.parent[u] = NIL;
        }
    }

    pub fn edge_len(&self, u: usize) -> f64 {
        self.pos[u].dist(&self.pos[self.parent[u]])
    }

    pub fn edge_cost(&self, u: usize) -> f64 {
        let f = self.flow[u];
        if f <= 0.0 {
            return 0.0;
        }
        f.powf(self.alpha) * self.edge_len(u)
    }

    /// Nodes reachable from the root, breadth first.
    pub fn bfs(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.len());
        let mut queue = VecDeque::from([self.root]);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            queue.extend(self.children[u].iter().copied());
        }
        order
    }

    pub fn recompute_flows(&mut self) {
        let order = self.bfs();
        for &v in &order {
            self.flow[v] = self.own[v];
        }
        for &v in order.iter().rev() {
            let p = self.parent[v];
            if p != NIL {
                self.flow[p] += self.flow[v];
            }
        }
    }

    pub fn cost(&self) -> f64 {
        self.bfs().into_iter().filter(|&v| v != self.root).map(|v| self.edge_cost(v)).sum()
    }

    /// Adds `delta` to the flow of every edge from `v` up to the root; returns the cost change.
    pub fn shift_mass(&mut self, v: usize, delta: f64) -> f64 {
        let mut change = 0.0;
        let mut w = v;
        while w != NIL {
            let old = self.flow[w];
            let new = (old + delta).max(0.0);
            if w != self.root {
                let len = self.edge_len(w);
                change += (pow(new, self.alpha) - pow(old, self.alpha)) * len;
            }
            self.flow[w] = new;
            w = self.parent[w];
        }
        change
    }

    /// Cost increase of pushing `delta` more mass through `v` and up, without applying it.
    pub fn path_increase(&self, v: usize, delta: f64) -> f64 {
        let mut change = 0.0;
        let mut w = v;
        while w != self.root && w != NIL {
            let old = self.flow[w];
            change += (pow(old + delta, self.alpha) - pow(old, self.alpha)) * self.edge_len(w);
            w = self.parent[w];
        }
        change
    }

    /// Cuts the subtree of `u` off; returns the cost change.
    pub fn detach(&mut self, u: usize) -> f64 {
        let p = self.parent[u];
        let mut change = -self.edge_cost(u);
        self.unlink(u);
        change += self.shift_mass(p, -self.flow[u]);
        change
    }

    /// Hangs the detached subtree of `u` under `w`; returns the cost change.
    pub fn attach(&mut self, u: usize, w: usize) -> f64 {
        self.link(u, w);
        self.edge_cost(u) + self.shift_mass(w, self.flow[u])
    }

    /// Inserts a Steiner node at `q` on the edge from `c` to its parent.
    pub fn split_edge(&mut self, c: usize, q: Point) -> usize {
        let p = self.parent[c];
        let s = self.add_node(NodeKind::Steiner, q, 0.0, None);
        self.flow[s] = self.flow[c];
        self.unlink(c);
        self.link(s, p);
        self.link(c, s);
        s
    }

    /// Removes Steiner node `s` that has a single child, joining the child to the
    /// grandparent; returns the cost change.
    pub fn contract(&mut self, s: usize) -> f64 {
        let c = self.children[s][0];
        let g = self.parent[s];
        let before = self.edge_cost(c) + self.edge_cost(s);
        self.unlink(c);
        self.unlink(s);
        self.alive[s] = false;
        self.link(c, g);
        self.edge_cost(c) - before
    }

    /// Inverse of [`Tree::contract`].
    pub fn uncontract(&mut self, s: usize, c: usize) {
        let g = self.parent[c];
        self.unlink(c);
        self.alive[s] = true;
        self.flow[s] = self.flow[c];
        self.link(s, g);
        self.link(c, s);
    }

    /// True if `a` lies on the path from `b` to the root (or `a == b`).
    pub fn is_ancestor(&self, a: usize, b: usize) -> bool {
        let mut w = b;
        while w != NIL {
            if w == a {
                return true;
            }
            w = self.parent[w];
        }
        false
    }

    /// True if `v` is currently connected to the root.
    pub fn is_attached(&self, v: usize) -> bool {
        self.alive[v] && self.is_ancestor(self.root, v)
    }

    /// Removes childless Steiner nodes and contracts Steiner nodes with one child,
    /// walking up from `v`. Never increases the cost.
    pub fn tidy_from(&mut self, mut v: usize) {
        while v != NIL && v != self.root && self.alive[v] && self.kind[v] == NodeKind::Steiner {
            let p = self.parent[v];
            match self.children[v].len() {
                0 => {
                    self.unlink(v);
                    self.alive[v] = false;
                    v = p;
                }
                1 => {
                    let c = self.children[v][0];
                    self.unlink(c);
                    self.unlink(v);
                    self.alive[v] = false;
                    if p != NIL {
                        self.link(c, p);
                    }
                    return;
                }
                _ => return,
            }
        }
    }

    pub fn tidy_all(&mut self) {
        for v in self.bfs() {
            if self.alive[v] && self.kind[v] == NodeKind::Steiner && self.children[v].len() < 2 {
                self.tidy_from(v);
            }
        }
        self.recompute_flows();
    }

    /// Merges Steiner nodes into neighbours closer than `threshold`.
    pub fn collapse_short_edges(&mut self, threshold: f64) -> usize {
        let mut merged = 0;
        for v in self.bfs() {
            if !self.alive[v] || v == self.root {
                continue;
            }
            let p = self.parent[v];
            if self.edge_len(v) >= threshold {
                continue;
            }
            if self.kind[v] == NodeKind::Steiner {
                // v disappears into its parent
                let kids = std::mem::take(&mut self.children[v]);
                for c in kids {
                    self.parent[c] = NIL;
                    self.link(c, p);
                }
                self.unlink(v);
                self.alive[v] = false;
                merged += 1;
            } else if self.kind[p] == NodeKind::Steiner {
                // terminal v takes the place of its Steiner parent
                let gp = self.parent[p];
                self.unlink(v);
                let kids = std::mem::take(&mut self.children[p]);
                for c in kids {
                    self.parent[c] = NIL;
                    self.link(c, v);
                }
                self.unlink(p);
                self.alive[p] = false;
                self.link(v, gp);
                merged += 1;
            }
        }
        if merged > 0 {
            self.tidy_all();
        }
        merged
    }

    /// Copy holding only attached nodes: root first, then sinks by label, then Steiner
    /// nodes in breadth-first order.
    pub fn compact(&self) -> Tree {
        let order = self.bfs();
        let mut bfs_index = vec![0usize; self.len()];
        for (i, &v) in order.iter().enumerate() {
            bfs_index[v] = i;
        }
        let mut ranked: Vec<usize> = order.clone();
        ranked.sort_by_key(|&v| {
            let rank = match self.kind[v] {
                NodeKind::Source => 0,
                NodeKind::Sink => 1,
                NodeKind::Steiner => 2,
            };
            let bfs_pos = bfs_index[v];
            let key = if self.kind[v] == NodeKind::Sink { self.label[v].unwrap_or(usize::MAX) } else { bfs_pos };
            (rank, key, bfs_pos)
        });
        let mut index = vec![NIL; self.len()];
        for (i, &v) in ranked.iter().enumerate() {
            index[v] = i;
        }
        let mut t = Tree::new(self.pos[self.root], self.label[self.root], self.alpha);
        for &v in &ranked[1..] {
            t.add_node(self.kind[v], self.pos[v], self.own[v], self.label[v]);
        }
        for &v in &order {
            let p = self.parent[v];
            if v != self.root {
                t.link(index[v], index[p]);
            }
        }
        for c in &mut t.children {
            c.sort_unstable();
        }
        t.recompute_flows();
        t
    }

    /// Parent labels in a canonical order; used to break exact cost ties.
    pub fn signature(&self) -> Vec<(usize, usize)> {
        let c = self.compact();
        (1..c.len()).map(|v| (v, c.parent[v])).collect()
    }

    /// Appends this tree as one component of a network under construction.
    pub fn append_to(&self, acc: &mut NetworkParts) {
        let c = self.compact();
        let offset = acc.kinds.len();
        for v in 0..c.len() {
            acc.kinds.push(c.kind[v]);
            acc.positions.push(c.pos[v]);
            acc.masses.push(c.own[v]);
            acc.labels.push(c.label[v]);
            if v != c.root {
                acc.pairs.push((offset + c.parent[v], offset + v));
            }
        }
    }

    pub fn to_network(&self, dim: usize) -> Result<TransportNetwork> {
        let mut parts = NetworkParts::default();
        self.append_to(&mut parts);
        parts.build(dim, self.alpha)
    }

    /// Extracts the component rooted at `source` of a network.
    pub fn from_network(net: &TransportNetwork, source: usize) -> Tree {
        let topo = net.topology();
        let mut t = Tree::new(net.position(source), net.labels()[source], net.alpha());
        let mut index = vec![NIL; topo.len()];
        index[source] = 0;
        for &v in topo.bfs_order() {
            if topo.component_of(v) != source || v == source {
                continue;
            }
            let own = if topo.kind(v) == NodeKind::Sink { net.masses()[v] } else { 0.0 };
            let id = t.add_node(topo.kind(v), net.position(v), own, net.labels()[v]);
            index[v] = id;
            t.link(id, index[topo.parent(v).unwrap()]);
        }
        t.recompute_flows();
        t
    }
}

#[inline]
pub(crate) fn pow(x: f64, a: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x.powf(a)
    }
}

#[derive(Default)]
pub(crate) struct NetworkParts {
    pub kinds: Vec<NodeKind>,
    pub positions: Vec<Point>,
    pub masses: Vec<f64>,
    pub labels: Vec<Option<usize>>,
    pub pairs: Vec<(usize, usize)>,
}

impl NetworkParts {
    pub fn build(self, dim: usize, alpha: f64) -> Result<TransportNetwork> {
        let topo = Topology::new(self.kinds, &self.pairs)?;
        TransportNetwork::new(dim, alpha, topo, self.positions, self.masses, self.labels)
    }
}
