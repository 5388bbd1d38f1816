//! Exact optimum for small and medium instances.
//!
//! [`opt_flow`] solves the allocation as a max-flow with unit arcs
//! `source → u` and `u → v` and arcs `v → sink` of capacity `C_v`, using
//! Dinic's blocking flows. Integral flows give integral allocations, and the
//! fractional optimum equals the integral one on these constraint systems, so
//! the result doubles as the fractional OPT.
//!
//! [`opt_brute`] enumerates subsets and shares no code with the flow solver.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::graph::{AllocationInstance, IntegralAllocation};

pub const BRUTE_FORCE_LIMIT: usize = 24;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub opt_size: usize,
    pub witness: IntegralAllocation,
}

struct Arc {
    to: usize,
    cap: u32,
}

struct FlowNetwork {
    arcs: Vec<Arc>,
    out: Vec<Vec<usize>>,
    level: Vec<i32>,
    cursor: Vec<usize>,
}

impl FlowNetwork {
    fn new(nodes: usize) -> Self {
        Self {
            arcs: Vec::new(),
            out: vec![Vec::new(); nodes],
            level: vec![0; nodes],
            cursor: vec![0; nodes],
        }
    }

    /// Adds `from → to` and its residual twin; returns the forward arc id.
    fn add(&mut self, from: usize, to: usize, cap: u32) -> usize {
        let id = self.arcs.len();
        self.arcs.push(Arc { to, cap });
        self.arcs.push(Arc { to: from, cap: 0 });
        self.out[from].push(id);
        self.out[to].push(id + 1);
        id
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(a) = queue.pop_front() {
            for &id in &self.out[a] {
                let arc = &self.arcs[id];
                if arc.cap > 0 && self.level[arc.to] < 0 {
                    self.level[arc.to] = self.level[a] + 1;
                    queue.push_back(arc.to);
                }
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, a: usize, t: usize, limit: u32) -> u32 {
        if a == t {
            return limit;
        }
        while self.cursor[a] < self.out[a].len() {
            let id = self.out[a][self.cursor[a]];
            let (to, cap) = (self.arcs[id].to, self.arcs[id].cap);
            if cap > 0 && self.level[to] == self.level[a] + 1 {
                let pushed = self.dfs(to, t, limit.min(cap));
                if pushed > 0 {
                    self.arcs[id].cap -= pushed;
                    self.arcs[id ^ 1].cap += pushed;
                    return pushed;
                }
            }
            self.cursor[a] += 1;
        }
        0
    }

    fn max_flow(&mut self, s: usize, t: usize) -> u64 {
        let mut total = 0u64;
        while self.bfs(s, t) {
            self.cursor.iter_mut().for_each(|c| *c = 0);
            loop {
                let pushed = self.dfs(s, t, u32::MAX);
                if pushed == 0 {
                    break;
                }
                total += pushed as u64;
            }
        }
        total
    }
}

/// Maximum allocation by max-flow, with a witness read off the saturated
/// `u → v` arcs.
pub fn opt_flow(instance: &AllocationInstance) -> OracleResult {
    let n = instance.vertex_count();
    let (source, sink) = (n, n + 1);
    let mut net = FlowNetwork::new(n + 2);
    for u in instance.left_vertices() {
        net.add(source, u, 1);
    }
    let middle: Vec<usize> = instance.edges().iter().map(|&(u, v)| net.add(u, v, 1)).collect();
    for v in instance.right_vertices() {
        net.add(v, sink, instance.capacity(v));
    }
    let flow = net.max_flow(source, sink) as usize;
    let witness: Vec<usize> = middle
        .iter()
        .enumerate()
        .filter(|&(_, &id)| net.arcs[id].cap == 0)
        .map(|(e, _)| e)
        .collect();
    debug_assert_eq!(witness.len(), flow);
    OracleResult {
        opt_size: flow,
        witness: IntegralAllocation::new(witness),
    }
}

/// Maximum allocation by include/exclude search over all edge subsets.
pub fn opt_brute(instance: &AllocationInstance) -> Result<usize> {
    let m = instance.edge_count();
    if m > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            m,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut load = vec![0u32; instance.vertex_count()];
    let mut best = 0;
    brute(instance, 0, 0, &mut load, &mut best);
    Ok(best)
}

fn brute(g: &AllocationInstance, e: usize, taken: usize, load: &mut [u32], best: &mut usize) {
    if taken + (g.edge_count() - e) <= *best {
        return;
    }
    if e == g.edge_count() {
        *best = taken;
        return;
    }
    let (u, v) = g.edge(e);
    if load[u] == 0 && load[v] < g.capacity(v) {
        load[u] += 1;
        load[v] += 1;
        brute(g, e + 1, taken + 1, load, best);
        load[u] -= 1;
        load[v] -= 1;
    }
    brute(g, e + 1, taken, load, best);
}
