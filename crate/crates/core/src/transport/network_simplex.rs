//! Primal network simplex for the balanced transportation problem.
//!
//! The bipartite network has one node per source row, one per sink column and
//! an artificial root. The initial basis consists of the artificial arcs
//! `row -> root` and `root -> column`, priced at a cost no real solution can
//! beat. Pivots keep the spanning tree strongly feasible (leaving arc is the
//! last blocking arc met when walking the pivot cycle from its apex along the
//! entering arc), which rules out cycling under degeneracy. Entering arcs are
//! chosen by block search pricing.

use crate::error::{EndaError, Result};

const NONE: usize = usize::MAX;

/// Solution of a transportation problem: sparse flows `(row, col, mass)` and
/// the objective value.
#[derive(Debug, Clone)]
pub(crate) struct FlowSolution {
    pub entries: Vec<(usize, usize, f64)>,
    pub cost: f64,
}

struct Network<'a> {
    rows: usize,
    cols: usize,
    cost: &'a [f64],
    art_cost: f64,
    flow: Vec<f64>,
    in_tree: Vec<bool>,
    adj: Vec<Vec<usize>>,
    parent: Vec<usize>,
    parent_arc: Vec<usize>,
    depth: Vec<usize>,
    pot: Vec<f64>,
}

impl<'a> Network<'a> {
    fn real_arcs(&self) -> usize {
        self.rows * self.cols
    }

    fn arc_count(&self) -> usize {
        self.real_arcs() + self.rows + self.cols
    }

    fn root(&self) -> usize {
        self.rows + self.cols
    }

    fn tail(&self, a: usize) -> usize {
        let real = self.real_arcs();
        if a < real {
            a / self.cols
        } else if a < real + self.rows {
            a - real
        } else {
            self.root()
        }
    }

    fn head(&self, a: usize) -> usize {
        let real = self.real_arcs();
        if a < real {
            self.rows + a % self.cols
        } else if a < real + self.rows {
            self.root()
        } else {
            self.rows + (a - real - self.rows)
        }
    }

    fn arc_cost(&self, a: usize) -> f64 {
        if a < self.real_arcs() {
            self.cost[a]
        } else {
            self.art_cost
        }
    }

    fn reduced_cost(&self, a: usize) -> f64 {
        self.arc_cost(a) + self.pot[self.tail(a)] - self.pot[self.head(a)]
    }

    /// Recomputes parents, depths and potentials by a traversal from the root.
    fn rebuild(&mut self) {
        let root = self.root();
        self.parent.fill(NONE);
        self.parent_arc.fill(NONE);
        self.depth[root] = 0;
        self.pot[root] = 0.0;
        let mut stack = vec![root];
        let mut visited = vec![false; self.adj.len()];
        visited[root] = true;
        while let Some(v) = stack.pop() {
            for k in 0..self.adj[v].len() {
                let a = self.adj[v][k];
                let (t, h) = (self.tail(a), self.head(a));
                let other = if t == v { h } else { t };
                if visited[other] {
                    continue;
                }
                visited[other] = true;
                self.parent[other] = v;
                self.parent_arc[other] = a;
                self.depth[other] = self.depth[v] + 1;
                let c = self.arc_cost(a);
                self.pot[other] = if t == v { self.pot[v] + c } else { self.pot[v] - c };
                stack.push(other);
            }
        }
    }

    fn remove_tree_arc(&mut self, a: usize) {
        for node in [self.tail(a), self.head(a)] {
            let list = &mut self.adj[node];
            let pos = list.iter().position(|x| *x == a).expect("tree arc in adjacency");
            list.swap_remove(pos);
        }
        self.in_tree[a] = false;
    }

    fn add_tree_arc(&mut self, a: usize) {
        let (t, h) = (self.tail(a), self.head(a));
        self.adj[t].push(a);
        self.adj[h].push(a);
        self.in_tree[a] = true;
    }

    /// Pushes flow around the cycle closed by `entering` and swaps the leaving arc out.
    fn pivot(&mut self, entering: usize) -> Result<()> {
        let u = self.tail(entering);
        let v = self.head(entering);

        let (mut a, mut b) = (u, v);
        while self.depth[a] > self.depth[b] {
            a = self.parent[a];
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b];
        }
        while a != b {
            a = self.parent[a];
            b = self.parent[b];
        }
        let apex = a;

        // (arc, forward) in cycle orientation, starting at the apex.
        let mut cycle: Vec<(usize, bool)> = Vec::new();
        let mut down = Vec::new();
        let mut x = u;
        while x != apex {
            let pa = self.parent_arc[x];
            // traversed parent -> x
            down.push((pa, self.tail(pa) != x));
            x = self.parent[x];
        }
        cycle.extend(down.into_iter().rev());
        cycle.push((entering, true));
        let mut x = v;
        while x != apex {
            let pa = self.parent_arc[x];
            // traversed x -> parent
            cycle.push((pa, self.tail(pa) == x));
            x = self.parent[x];
        }

        let mut theta = f64::INFINITY;
        let mut leaving = NONE;
        for &(arc, forward) in &cycle {
            if !forward && self.flow[arc] <= theta {
                theta = self.flow[arc];
                leaving = arc;
            }
        }
        if leaving == NONE {
            return Err(EndaError::NonConvergence(
                "unbounded pivot cycle in transport network".into(),
            ));
        }
        if theta > 0.0 {
            for &(arc, forward) in &cycle {
                if forward {
                    self.flow[arc] += theta;
                } else {
                    self.flow[arc] -= theta;
                }
            }
        }
        self.flow[leaving] = 0.0;
        self.remove_tree_arc(leaving);
        self.add_tree_arc(entering);
        self.rebuild();
        Ok(())
    }
}

/// Solves `min sum c_ij t_ij` subject to row sums `supply`, column sums
/// `demand`, `t >= 0`. `cost` is row-major `supply.len() x demand.len()`.
/// Supplies and demands must already be balanced.
pub(crate) fn solve_transportation(cost: &[f64], supply: &[f64], demand: &[f64]) -> Result<FlowSolution> {
    let rows = supply.len();
    let cols = demand.len();
    if cost.len() != rows * cols {
        return Err(EndaError::DimensionMismatch(format!(
            "cost has {} entries for a {rows}x{cols} problem",
            cost.len()
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(EndaError::Domain("non-finite transport cost".into()));
    }
    let cmax = cost.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let nodes = rows + cols + 1;
    let art_cost = if cmax > 0.0 { cmax * nodes as f64 } else { 1.0 };
    let eps = 1e-12 * art_cost;

    let mut net = Network {
        rows,
        cols,
        cost,
        art_cost,
        flow: vec![0.0; rows * cols + rows + cols],
        in_tree: vec![false; rows * cols + rows + cols],
        adj: vec![Vec::new(); nodes],
        parent: vec![NONE; nodes],
        parent_arc: vec![NONE; nodes],
        depth: vec![0; nodes],
        pot: vec![0.0; nodes],
    };
    let real = rows * cols;
    for (i, s) in supply.iter().enumerate() {
        net.flow[real + i] = *s;
        net.add_tree_arc(real + i);
    }
    for (j, d) in demand.iter().enumerate() {
        net.flow[real + rows + j] = *d;
        net.add_tree_arc(real + rows + j);
    }
    net.rebuild();

    let n_arcs = net.arc_count();
    let block = ((n_arcs as f64).sqrt() as usize).max(10);
    let max_pivots = 50 * n_arcs + 10_000;
    let mut next = 0usize;
    let mut pivots = 0usize;
    loop {
        let mut best = NONE;
        let mut best_rc = -eps;
        let mut scanned = 0usize;
        let mut last = next;
        for k in 0..n_arcs {
            let a = (next + k) % n_arcs;
            last = a;
            if net.in_tree[a] {
                continue;
            }
            let rc = net.reduced_cost(a);
            if rc < best_rc {
                best_rc = rc;
                best = a;
            }
            scanned += 1;
            if scanned == block {
                if best != NONE {
                    break;
                }
                scanned = 0;
            }
        }
        if best == NONE {
            break;
        }
        next = (last + 1) % n_arcs;
        net.pivot(best)?;
        pivots += 1;
        if pivots > max_pivots {
            return Err(EndaError::NonConvergence(format!(
                "network simplex exceeded {max_pivots} pivots"
            )));
        }
    }

    let total: f64 = supply.iter().sum();
    let leftover: f64 = net.flow[real..].iter().sum();
    if leftover > 1e-9 * total.max(1.0) * 2.0 {
        return Err(EndaError::Infeasible(format!(
            "artificial arcs still carry {leftover:e} units"
        )));
    }

    let mut entries = Vec::new();
    let mut objective = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let f = net.flow[i * cols + j];
            if f > 0.0 {
                entries.push((i, j, f));
                objective += f * cost[i * cols + j];
            }
        }
    }
    Ok(FlowSolution {
        entries,
        cost: objective,
    })
}
