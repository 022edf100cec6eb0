//! Primal network simplex for the uncapacitated bipartite transportation problem.
//!
//! Supply nodes are `0..m`, demand nodes `m..m+n` and an artificial root `m+n`. The
//! initial basis is the strongly feasible tree of artificial arcs (supply -> root,
//! root -> demand). Leaving arcs follow Cunningham's last-blocking-arc rule, which keeps
//! the tree strongly feasible and rules out cycling.
//!
//! A [`TransportProblem`] keeps its optimal basis between calls. Re-solving with new
//! costs but the same marginals starts from that basis, which stays primal feasible;
//! fixed-point metric iterations only change costs, so most re-solves need few pivots.

use std::cell::RefCell;

use crate::error::{Error, Result};

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct BasicArc {
    arc: u32,
    tail: u32,
    head: u32,
    flow: f64,
}

/// A transportation problem with fixed positive marginals and a persistent basis.
#[derive(Debug, Clone)]
pub struct TransportProblem {
    supply: Vec<f64>,
    demand: Vec<f64>,
    basis: Vec<BasicArc>,
}

#[derive(Default)]
struct Scratch {
    cost: Vec<f64>,
    is_basic: Vec<bool>,
    adj_start: Vec<u32>,
    adj: Vec<(u32, u32)>,
    parent: Vec<u32>,
    parent_slot: Vec<u32>,
    dir_up: Vec<bool>,
    depth: Vec<u32>,
    potential: Vec<f64>,
    queue: Vec<u32>,
    fill: Vec<u32>,
}

thread_local! {
    static SCRATCH: RefCell<Scratch> = RefCell::new(Scratch::default());
}

impl TransportProblem {
    /// `supply` and `demand` must be strictly positive. Demand is rescaled to the supply
    /// total so the problem is exactly balanced up to rounding.
    pub fn new(supply: Vec<f64>, mut demand: Vec<f64>) -> Self {
        debug_assert!(supply.iter().chain(&demand).all(|&x| x > 0.0));
        let total_s: f64 = supply.iter().sum();
        let total_d: f64 = demand.iter().sum();
        if total_d > 0.0 && total_s != total_d {
            let scale = total_s / total_d;
            demand.iter_mut().for_each(|x| *x *= scale);
        }
        Self { supply, demand, basis: Vec::new() }
    }

    pub fn num_sources(&self) -> usize {
        self.supply.len()
    }

    pub fn num_sinks(&self) -> usize {
        self.demand.len()
    }

    fn endpoints(&self, arc: u32) -> (u32, u32) {
        let (m, n) = (self.supply.len() as u32, self.demand.len() as u32);
        let root = m + n;
        if arc < m * n {
            (arc / n, m + arc % n)
        } else if arc < m * n + m {
            (arc - m * n, root)
        } else {
            (root, m + (arc - m * n - m))
        }
    }

    fn reset_basis(&mut self) {
        let (m, n) = (self.supply.len() as u32, self.demand.len() as u32);
        self.basis.clear();
        for (i, &s) in self.supply.iter().enumerate() {
            self.basis.push(BasicArc { arc: m * n + i as u32, tail: i as u32, head: m + n, flow: s });
        }
        for (j, &d) in self.demand.iter().enumerate() {
            self.basis.push(BasicArc { arc: m * n + m + j as u32, tail: m + n, head: m + j as u32, flow: d });
        }
    }

    /// Minimum transport cost under `cost(i, j)`, starting from the previous basis.
    pub fn solve(&mut self, cost: impl Fn(usize, usize) -> f64) -> Result<f64> {
        SCRATCH.with(|cell| self.solve_with(&mut cell.borrow_mut(), cost))
    }

    /// Cost of the coupling held by the current basis under `cost`, an upper bound on the
    /// optimum. `None` before the first solve.
    pub fn coupling_cost(&self, cost: impl Fn(usize, usize) -> f64) -> Option<f64> {
        if self.basis.is_empty() {
            return None;
        }
        let real_arcs = (self.supply.len() * self.demand.len()) as u32;
        let n = self.demand.len() as u32;
        Some(
            self.basis
                .iter()
                .filter(|b| b.arc < real_arcs)
                .map(|b| b.flow * cost((b.arc / n) as usize, (b.arc % n) as usize))
                .sum(),
        )
    }

    /// Positive entries `(i, j, mass)` of the current optimal coupling.
    pub fn coupling(&self) -> Vec<(usize, usize, f64)> {
        let (m, n) = (self.supply.len() as u32, self.demand.len() as u32);
        self.basis
            .iter()
            .filter(|b| b.arc < m * n && b.flow > 0.0)
            .map(|b| ((b.arc / n) as usize, (b.arc % n) as usize, b.flow))
            .collect()
    }

    fn solve_with(&mut self, sc: &mut Scratch, cost: impl Fn(usize, usize) -> f64) -> Result<f64> {
        let (m, n) = (self.supply.len(), self.demand.len());
        let nodes = m + n + 1;
        let root = (m + n) as u32;
        if self.basis.len() != nodes - 1 {
            self.reset_basis();
        }

        sc.cost.clear();
        let mut max_cost = 0.0_f64;
        for i in 0..m {
            for j in 0..n {
                let c = cost(i, j);
                max_cost = max_cost.max(c.abs());
                sc.cost.push(c);
            }
        }
        let artificial = (max_cost + 1.0) * nodes as f64;
        let eps = 1e-12 * (1.0 + max_cost);
        let real_arcs = (m * n) as u32;
        let arc_cost = |cost: &[f64], arc: u32| {
            if arc < real_arcs {
                cost[arc as usize]
            } else {
                artificial
            }
        };

        sc.is_basic.clear();
        sc.is_basic.resize(m * n, false);
        for b in &self.basis {
            if b.arc < real_arcs {
                sc.is_basic[b.arc as usize] = true;
            }
        }

        let max_pivots = 50 * (m * n + nodes) + 1000;
        for _ in 0..max_pivots {
            self.build_tree(sc, nodes, root, &arc_cost);

            let mut best = (NONE, -eps);
            let col_pot = &sc.potential[m..m + n];
            for i in 0..m {
                let pi_i = sc.potential[i];
                let row = &sc.cost[i * n..(i + 1) * n];
                let basic = &sc.is_basic[i * n..(i + 1) * n];
                for j in 0..n {
                    let rc = row[j] + pi_i - col_pot[j];
                    if rc < best.1 && !basic[j] {
                        best = ((i * n + j) as u32, rc);
                    }
                }
            }
            let entering = best.0;
            if entering == NONE {
                let total = self
                    .basis
                    .iter()
                    .filter(|b| b.arc < real_arcs)
                    .map(|b| b.flow * sc.cost[b.arc as usize])
                    .sum();
                return Ok(total);
            }

            let (first, second) = self.endpoints(entering);
            // join node
            let (mut a, mut b) = (first, second);
            while a != b {
                if sc.depth[a as usize] >= sc.depth[b as usize] {
                    a = sc.parent[a as usize];
                } else {
                    b = sc.parent[b as usize];
                }
            }
            let join = a;

            let mut delta = f64::INFINITY;
            let mut leaving_node = NONE;
            let mut x = first;
            while x != join {
                if sc.dir_up[x as usize] {
                    let f = self.basis[sc.parent_slot[x as usize] as usize].flow;
                    if f < delta {
                        delta = f;
                        leaving_node = x;
                    }
                }
                x = sc.parent[x as usize];
            }
            let mut x = second;
            while x != join {
                if !sc.dir_up[x as usize] {
                    let f = self.basis[sc.parent_slot[x as usize] as usize].flow;
                    if f <= delta {
                        delta = f;
                        leaving_node = x;
                    }
                }
                x = sc.parent[x as usize];
            }
            debug_assert!(leaving_node != NONE, "uncapacitated cycle without blocking arc");
            if leaving_node == NONE {
                return Err(Error::PivotLimit);
            }

            if delta > 0.0 {
                let mut x = first;
                while x != join {
                    let slot = sc.parent_slot[x as usize] as usize;
                    if sc.dir_up[x as usize] {
                        self.basis[slot].flow -= delta;
                    } else {
                        self.basis[slot].flow += delta;
                    }
                    x = sc.parent[x as usize];
                }
                let mut x = second;
                while x != join {
                    let slot = sc.parent_slot[x as usize] as usize;
                    if sc.dir_up[x as usize] {
                        self.basis[slot].flow += delta;
                    } else {
                        self.basis[slot].flow -= delta;
                    }
                    x = sc.parent[x as usize];
                }
            }
            let slot = sc.parent_slot[leaving_node as usize] as usize;
            let leaving = self.basis[slot].arc;
            if leaving < real_arcs {
                sc.is_basic[leaving as usize] = false;
            }
            sc.is_basic[entering as usize] = true;
            self.basis[slot] = BasicArc { arc: entering, tail: first, head: second, flow: delta };
        }
        Err(Error::PivotLimit)
    }

    fn build_tree(
        &self,
        sc: &mut Scratch,
        nodes: usize,
        root: u32,
        arc_cost: &impl Fn(&[f64], u32) -> f64,
    ) {
        sc.adj_start.clear();
        sc.adj_start.resize(nodes + 1, 0);
        for b in &self.basis {
            let (u, v) = (b.tail, b.head);
            sc.adj_start[u as usize + 1] += 1;
            sc.adj_start[v as usize + 1] += 1;
        }
        for k in 0..nodes {
            sc.adj_start[k + 1] += sc.adj_start[k];
        }
        sc.adj.clear();
        sc.adj.resize(2 * self.basis.len(), (0, 0));
        sc.fill.clear();
        sc.fill.extend_from_slice(&sc.adj_start[..nodes]);
        for (slot, b) in self.basis.iter().enumerate() {
            let (u, v) = (b.tail, b.head);
            sc.adj[sc.fill[u as usize] as usize] = (v, slot as u32);
            sc.fill[u as usize] += 1;
            sc.adj[sc.fill[v as usize] as usize] = (u, slot as u32);
            sc.fill[v as usize] += 1;
        }

        sc.parent.clear();
        sc.parent.resize(nodes, NONE);
        sc.parent_slot.clear();
        sc.parent_slot.resize(nodes, NONE);
        sc.dir_up.clear();
        sc.dir_up.resize(nodes, false);
        sc.depth.clear();
        sc.depth.resize(nodes, 0);
        sc.potential.clear();
        sc.potential.resize(nodes, 0.0);
        sc.queue.clear();
        sc.queue.push(root);
        sc.parent[root as usize] = root;
        let mut head = 0;
        while head < sc.queue.len() {
            let x = sc.queue[head];
            head += 1;
            let (lo, hi) = (sc.adj_start[x as usize] as usize, sc.adj_start[x as usize + 1] as usize);
            for k in lo..hi {
                let (y, slot) = sc.adj[k];
                if sc.parent[y as usize] != NONE {
                    continue;
                }
                let arc = self.basis[slot as usize];
                let c = arc_cost(&sc.cost, arc.arc);
                let tail = arc.tail;
                sc.parent[y as usize] = x;
                sc.parent_slot[y as usize] = slot;
                sc.depth[y as usize] = sc.depth[x as usize] + 1;
                // tree arcs have zero reduced cost c + pi_tail - pi_head
                if tail == x {
                    sc.dir_up[y as usize] = false;
                    sc.potential[y as usize] = sc.potential[x as usize] + c;
                } else {
                    sc.dir_up[y as usize] = true;
                    sc.potential[y as usize] = sc.potential[x as usize] - c;
                }
                sc.queue.push(y);
            }
        }
        debug_assert_eq!(sc.queue.len(), nodes, "basis is not a spanning tree");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_closed_form() {
        let mut t = TransportProblem::new(vec![0.7, 0.3], vec![0.4, 0.6]);
        let c = [[0.0, 1.0], [1.0, 0.0]];
        let w = t.solve(|i, j| c[i][j]).unwrap();
        assert!((w - 0.3).abs() < 1e-14);
    }

    #[test]
    fn coupling_has_the_right_marginals() {
        let p = vec![0.2, 0.5, 0.3];
        let q = vec![0.1, 0.1, 0.4, 0.4];
        let mut t = TransportProblem::new(p.clone(), q.clone());
        let w = t.solve(|i, j| ((i as f64) - (j as f64) * 0.7).abs()).unwrap();
        let mut row = [0.0; 3];
        let mut col = [0.0; 4];
        let mut total = 0.0;
        for (i, j, f) in t.coupling() {
            row[i] += f;
            col[j] += f;
            total += f * ((i as f64) - (j as f64) * 0.7).abs();
        }
        for i in 0..3 {
            assert!((row[i] - p[i]).abs() < 1e-12);
        }
        for j in 0..4 {
            assert!((col[j] - q[j]).abs() < 1e-12);
        }
        assert!((total - w).abs() < 1e-12);
    }

    #[test]
    fn warm_start_matches_cold_start() {
        let p = vec![0.1, 0.2, 0.3, 0.4];
        let q = vec![0.25, 0.25, 0.25, 0.25];
        let mut warm = TransportProblem::new(p.clone(), q.clone());
        for k in 0..6 {
            let scale = 1.0 + k as f64 * 0.3;
            let cost = |i: usize, j: usize| ((i * 3 + j * 5) % 7) as f64 * scale + (i as f64 - j as f64).powi(2) * k as f64;
            let w1 = warm.solve(cost).unwrap();
            let w2 = TransportProblem::new(p.clone(), q.clone()).solve(cost).unwrap();
            assert!((w1 - w2).abs() < 1e-12, "{w1} vs {w2}");
        }
    }

    #[test]
    fn zero_costs_give_zero() {
        let mut t = TransportProblem::new(vec![0.5, 0.5], vec![0.3, 0.3, 0.4]);
        assert_eq!(t.solve(|_, _| 0.0).unwrap(), 0.0);
    }
}
