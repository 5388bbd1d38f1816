//! Augmenting-walk improvement of an integral allocation through layered graphs.
//!
//! Each iteration:
//! 1. splits every vertex into `b(w)` copies (1 on the left, `C_v` on the
//!    right) and places every edge of the current allocation on its own pair
//!    of lowest-index free copies;
//! 2. puts free left copies in layer 0 and free right copies in layer `k+1`;
//! 3. places every matched edge, as an arc from its right copy (tail) to its
//!    left copy (head), in a uniformly random layer `1..=k`;
//! 4. gives every unmatched edge `{u, v}` a uniform `i_e ∈ 0..=k` and keeps it
//!    if `u` has a copy in `H_{i_e}` and `v` has one in `T_{i_e+1}`;
//! 5. contracts the copies of a vertex inside each `H_i` / `T_i`, with
//!    capacity `b′` equal to the number of copies merged.
//!
//! Between every pair `(H_i, T_{i+1})` the kept edges form an allocation
//! instance (heads on the left, contracted tails with capacity `b′` on the
//! right) which the supplied solver handles. Walks are then stitched greedily
//! from layer 0: a head's chosen edge enters a distinct tail copy, whose arc
//! leads to the next head, until a free right copy in layer `k+1` is reached.
//! Walks that stall are dropped; complete ones are flipped.
//!
//! A layered graph with `k` middle layers only carries walks through exactly
//! `k` matched edges, so iterations cycle `k = 0, 1, …, ⌈2/ε⌉`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{build_instance, validate_integral, AllocationInstance, IntegralAllocation};
use crate::local::{default_tau, run_until_terminated};
use crate::rng::SimRng;
use crate::rounding::{default_copies, round_best_of};

pub const STAGNATION_WINDOW: usize = 50;
pub const MAX_ITERATIONS_CAP: usize = 10_000;

/// Source of the random layer choices; `pick(n)` returns a value in `0..n`
/// and is only called with `n >= 2`.
pub trait PlacementSource {
    fn pick(&mut self, n: usize) -> usize;
}

impl PlacementSource for SimRng {
    fn pick(&mut self, n: usize) -> usize {
        self.index(n)
    }
}

/// Replays a fixed list of choices (0 once exhausted) and records the arity
/// of every request, so tests can enumerate all placements.
#[derive(Clone, Debug, Default)]
pub struct ScriptedPlacement {
    script: Vec<usize>,
    pub arities: Vec<usize>,
}

impl ScriptedPlacement {
    pub fn new(script: Vec<usize>) -> Self {
        Self {
            script,
            arities: Vec::new(),
        }
    }
}

impl PlacementSource for ScriptedPlacement {
    fn pick(&mut self, n: usize) -> usize {
        let choice = self.script.get(self.arities.len()).copied().unwrap_or(0) % n;
        self.arities.push(n);
        choice
    }
}

/// A matched pair of copies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MatchedPair {
    pub edge: usize,
    pub left_copy: usize,
    pub right_copy: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitGraph {
    /// Copies of vertex `w` are `copy_offset[w]..copy_offset[w + 1]`.
    copy_offset: Vec<usize>,
    owner: Vec<usize>,
    /// Matched pair index per copy.
    mate: Vec<Option<usize>>,
    pairs: Vec<MatchedPair>,
}

impl SplitGraph {
    pub fn copies(&self, w: usize) -> std::ops::Range<usize> {
        self.copy_offset[w]..self.copy_offset[w + 1]
    }

    pub fn copy_count(&self) -> usize {
        self.owner.len()
    }

    pub fn owner(&self, copy: usize) -> usize {
        self.owner[copy]
    }

    pub fn matched_pairs(&self) -> &[MatchedPair] {
        &self.pairs
    }

    pub fn is_free(&self, copy: usize) -> bool {
        self.mate[copy].is_none()
    }

    pub fn free_copies(&self) -> Vec<usize> {
        (0..self.copy_count()).filter(|&c| self.is_free(c)).collect()
    }
}

/// Copies per vertex with every allocated edge on the lowest free copy pair,
/// taking edges in ascending index order.
pub fn split_to_matching_graph(instance: &AllocationInstance, m: &IntegralAllocation) -> SplitGraph {
    let mut copy_offset = Vec::with_capacity(instance.vertex_count() + 1);
    let mut owner = Vec::new();
    copy_offset.push(0);
    for w in 0..instance.vertex_count() {
        for _ in 0..instance.capacity(w) {
            owner.push(w);
        }
        copy_offset.push(owner.len());
    }
    let mut mate = vec![None; owner.len()];
    let mut pairs = Vec::with_capacity(m.len());
    for &e in m.edges() {
        let (u, v) = instance.edge(e);
        let lc = (copy_offset[u]..copy_offset[u + 1]).find(|&c| mate[c].is_none());
        let rc = (copy_offset[v]..copy_offset[v + 1]).find(|&c| mate[c].is_none());
        let (Some(left_copy), Some(right_copy)) = (lc, rc) else {
            panic!("allocation is not feasible at edge {e}");
        };
        mate[left_copy] = Some(pairs.len());
        mate[right_copy] = Some(pairs.len());
        pairs.push(MatchedPair {
            edge: e,
            left_copy,
            right_copy,
        });
    }
    SplitGraph {
        copy_offset,
        owner,
        mate,
        pairs,
    }
}

/// A matched edge placed in a middle layer, oriented right → left.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerArc {
    pub edge: usize,
    pub layer: usize,
    /// Right copy.
    pub tail: usize,
    /// Left copy.
    pub head: usize,
}

/// An unmatched edge kept between `H_layer` and `T_{layer+1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CrossEdge {
    pub edge: usize,
    pub layer: usize,
    pub u: usize,
    pub v: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayeredGraph {
    pub k: usize,
    /// Copies per layer `L_0..=L_{k+1}`.
    pub layers: Vec<Vec<usize>>,
    pub arcs: Vec<LayerArc>,
    /// `heads[i]` = `H_i` (left copies), `i = 0..=k+1`.
    pub heads: Vec<Vec<usize>>,
    /// `tails[i]` = `T_i` (right copies), `i = 0..=k+1`.
    pub tails: Vec<Vec<usize>>,
    pub cross_edges: Vec<CrossEdge>,
    /// `head_caps[i]`: `(vertex, b′)` after contracting `H_i`, ascending vertex.
    pub head_caps: Vec<Vec<(usize, u32)>>,
    /// `tail_caps[i]`: `(vertex, b′)` after contracting `T_i`, ascending vertex.
    pub tail_caps: Vec<Vec<(usize, u32)>>,
}

fn contract(split: &SplitGraph, copies: &[usize]) -> Vec<(usize, u32)> {
    let mut owners: Vec<usize> = copies.iter().map(|&c| split.owner(c)).collect();
    owners.sort_unstable();
    let mut out: Vec<(usize, u32)> = Vec::new();
    for w in owners {
        match out.last_mut() {
            Some((last, count)) if *last == w => *count += 1,
            _ => out.push((w, 1)),
        }
    }
    out
}

/// Builds the layered graph with `k` middle layers. Matched edges are dropped
/// when `k = 0`. Choices are drawn matched edges first, then unmatched edges,
/// each in ascending edge order.
pub fn build_layered<P: PlacementSource + ?Sized>(
    split: &SplitGraph,
    instance: &AllocationInstance,
    k: usize,
    source: &mut P,
) -> LayeredGraph {
    let mut heads = vec![Vec::new(); k + 2];
    let mut tails = vec![Vec::new(); k + 2];
    let mut copy_layer: Vec<Option<usize>> = vec![None; split.copy_count()];
    for c in split.free_copies() {
        if instance.is_left(split.owner(c)) {
            heads[0].push(c);
            copy_layer[c] = Some(0);
        } else {
            tails[k + 1].push(c);
            copy_layer[c] = Some(k + 1);
        }
    }
    let mut arcs = Vec::new();
    if k > 0 {
        for pair in split.matched_pairs() {
            let layer = 1 + if k > 1 { source.pick(k) } else { 0 };
            arcs.push(LayerArc {
                edge: pair.edge,
                layer,
                tail: pair.right_copy,
                head: pair.left_copy,
            });
            heads[layer].push(pair.left_copy);
            tails[layer].push(pair.right_copy);
            copy_layer[pair.left_copy] = Some(layer);
            copy_layer[pair.right_copy] = Some(layer);
        }
    }
    for list in heads.iter_mut().chain(tails.iter_mut()) {
        list.sort_unstable();
    }

    let mut matched = vec![false; instance.edge_count()];
    for pair in split.matched_pairs() {
        matched[pair.edge] = true;
    }
    let mut cross_edges = Vec::new();
    for (e, &(u, v)) in instance.edges().iter().enumerate() {
        if matched[e] {
            continue;
        }
        let layer = if k > 0 { source.pick(k + 1) } else { 0 };
        let u_ok = split
            .copies(u)
            .any(|c| copy_layer[c] == Some(layer) && heads[layer].binary_search(&c).is_ok());
        let v_ok = split
            .copies(v)
            .any(|c| copy_layer[c] == Some(layer + 1) && tails[layer + 1].binary_search(&c).is_ok());
        if u_ok && v_ok {
            cross_edges.push(CrossEdge { edge: e, layer, u, v });
        }
    }

    let layers = (0..k + 2)
        .map(|i| {
            let mut all: Vec<usize> = heads[i].iter().chain(&tails[i]).copied().collect();
            all.sort_unstable();
            all
        })
        .collect();
    let head_caps = heads.iter().map(|h| contract(split, h)).collect();
    let tail_caps = tails.iter().map(|t| contract(split, t)).collect();
    LayeredGraph {
        k,
        layers,
        arcs,
        heads,
        tails,
        cross_edges,
        head_caps,
        tail_caps,
    }
}

/// The allocation instance between `H_i` and `T_{i+1}`, with the original edge
/// index of every sub-instance edge.
pub fn layer_instance(layered: &LayeredGraph, i: usize) -> Result<(AllocationInstance, Vec<usize>)> {
    let heads = &layered.head_caps[i];
    let tails = &layered.tail_caps[i + 1];
    let h = heads.len();
    let mut edges = Vec::new();
    let mut origin = Vec::new();
    for ce in layered.cross_edges.iter().filter(|ce| ce.layer == i) {
        let a = heads.binary_search_by_key(&ce.u, |&(w, _)| w);
        let b = tails.binary_search_by_key(&ce.v, |&(w, _)| w);
        if let (Ok(a), Ok(b)) = (a, b) {
            edges.push((a, h + b));
            origin.push(ce.edge);
        }
    }
    let caps: Vec<u32> = tails.iter().map(|&(_, c)| c).collect();
    let sub = build_instance(h, tails.len(), &edges, &caps)?;
    // build_instance keeps the given edge order
    Ok((sub, origin))
}

/// Stitches per-layer choices into complete augmenting walks. `chosen[i]`
/// holds original edge indices selected between `H_i` and `T_{i+1}`.
/// Returns each walk as `(added edges, removed edges)`.
pub fn stitch_walks(
    instance: &AllocationInstance,
    split: &SplitGraph,
    layered: &LayeredGraph,
    chosen: &[Vec<usize>],
) -> Vec<(Vec<usize>, Vec<usize>)> {
    let k = layered.k;
    // next[u] = (edge, tail copy entered) for the head u in its layer
    let mut next: Vec<Option<(usize, usize)>> = vec![None; instance.left_count()];
    for (i, edges) in chosen.iter().enumerate() {
        let mut sorted: Vec<usize> = edges.clone();
        sorted.sort_by_key(|&e| (instance.edge(e).0, e));
        let mut used = vec![false; split.copy_count()];
        for e in sorted {
            let (u, v) = instance.edge(e);
            if next[u].is_some() {
                continue;
            }
            let target = layered.tails[i + 1]
                .iter()
                .copied()
                .find(|&c| split.owner(c) == v && !used[c]);
            if let Some(c) = target {
                used[c] = true;
                next[u] = Some((e, c));
            }
        }
    }
    let arc_of_tail: std::collections::HashMap<usize, LayerArc> = layered.arcs.iter().map(|a| (a.tail, *a)).collect();
    let mut walks = Vec::new();
    for &start in &layered.heads[0] {
        let mut u = split.owner(start);
        let (mut added, mut removed) = (Vec::new(), Vec::new());
        let mut layer = 0;
        let complete = loop {
            let Some((e, tail)) = next[u] else { break false };
            added.push(e);
            if layer + 1 == k + 1 {
                break true;
            }
            let Some(arc) = arc_of_tail.get(&tail) else { break false };
            removed.push(arc.edge);
            u = split.owner(arc.head);
            layer += 1;
        };
        if complete {
            walks.push((added, removed));
        }
    }
    walks
}

/// Applies vertex-disjoint walks to `m`.
pub fn apply_walks(m: &IntegralAllocation, walks: &[(Vec<usize>, Vec<usize>)]) -> IntegralAllocation {
    let mut edges: std::collections::BTreeSet<usize> = m.edges().iter().copied().collect();
    for (added, removed) in walks {
        for e in removed {
            edges.remove(e);
        }
        edges.extend(added.iter().copied());
    }
    IntegralAllocation::new(edges.into_iter().collect())
}

/// Adds edges in ascending index order while they fit.
pub fn complete_greedily(instance: &AllocationInstance, m: &IntegralAllocation) -> IntegralAllocation {
    let mut load = vec![0u32; instance.vertex_count()];
    let mut edges = m.edges().to_vec();
    for &e in m.edges() {
        let (u, v) = instance.edge(e);
        load[u] += 1;
        load[v] += 1;
    }
    for (e, &(u, v)) in instance.edges().iter().enumerate() {
        if load[u] == 0 && load[v] < instance.capacity(v) && !m.contains(e) {
            load[u] += 1;
            load[v] += 1;
            edges.push(e);
        }
    }
    IntegralAllocation::new(edges)
}

/// Proportional allocation with the stopping rule, best-of rounding, then greedy
/// completion to a maximal allocation.
pub fn default_solver(instance: &AllocationInstance, seed: u64) -> IntegralAllocation {
    const SOLVER_EPSILON: f64 = 0.1;
    if instance.edge_count() == 0 {
        return IntegralAllocation::empty();
    }
    let max_rounds = default_tau(SOLVER_EPSILON, instance.arboricity_bound());
    let frac = run_until_terminated(instance, SOLVER_EPSILON, max_rounds)
        .expect("valid solver configuration")
        .allocation;
    let rounded = round_best_of(instance, &frac, default_copies(instance.vertex_count()), seed);
    complete_greedily(instance, &rounded)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoostTraceRow {
    pub iter: usize,
    pub matching_size: usize,
    pub walks_applied: usize,
}

pub fn write_boost_trace<W: Write>(writer: W, rows: &[BoostTraceRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["iter", "matching_size", "walks_applied"])?;
    for r in rows {
        out.write_record([
            r.iter.to_string(),
            r.matching_size.to_string(),
            r.walks_applied.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct BoostOutcome {
    pub allocation: IntegralAllocation,
    pub initial_size: usize,
    pub iterations: usize,
    /// Row 0 is the starting allocation.
    pub trace: Vec<BoostTraceRow>,
}

/// `k_max = ⌈2/ε⌉`.
pub fn max_walk_layers(epsilon: f64) -> usize {
    (2.0 / epsilon).ceil() as usize
}

/// `min(⌈k^k⌉, 10^4)` for `k = ⌈2/ε⌉`.
pub fn default_max_iterations(epsilon: f64) -> usize {
    let k = max_walk_layers(epsilon) as f64;
    let budget = k.powf(k).ceil();
    if budget >= MAX_ITERATIONS_CAP as f64 {
        MAX_ITERATIONS_CAP
    } else {
        budget as usize
    }
}

pub type Solver<'a> = dyn Fn(&AllocationInstance, u64) -> IntegralAllocation + Sync + 'a;

/// Improves the solver's allocation by augmenting walks until `max_iterations`
/// or `STAGNATION_WINDOW` iterations without growth.
pub fn boost(
    instance: &AllocationInstance,
    epsilon: f64,
    solver: &Solver,
    rng: &mut SimRng,
    max_iterations: usize,
) -> Result<BoostOutcome> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidConfig(format!("epsilon {epsilon} outside (0, 1]")));
    }
    let k_max = max_walk_layers(epsilon);
    let mut m = solver(instance, rng.next_u64());
    if !validate_integral(instance, &m) {
        return Err(Error::Infeasible("solver returned an infeasible allocation".into()));
    }
    let initial_size = m.len();
    let mut trace = vec![BoostTraceRow {
        iter: 0,
        matching_size: m.len(),
        walks_applied: 0,
    }];
    let mut last_growth = 0;
    let mut iterations = 0;
    for iter in 1..=max_iterations {
        let k = (iter - 1) % (k_max + 1);
        let split = split_to_matching_graph(instance, &m);
        let free = split.free_copies();
        let no_free_left = !free.iter().any(|&c| instance.is_left(split.owner(c)));
        let no_free_right = !free.iter().any(|&c| !instance.is_left(split.owner(c)));
        if no_free_left || no_free_right {
            break;
        }
        let layered = build_layered(&split, instance, k, rng);
        let seeds: Vec<u64> = (0..=k).map(|_| rng.next_u64()).collect();
        let chosen = (0..=k)
            .into_par_iter()
            .map(|i| {
                let (sub, origin) = layer_instance(&layered, i)?;
                if sub.edge_count() == 0 {
                    return Ok(Vec::new());
                }
                let picked = solver(&sub, seeds[i]);
                if !validate_integral(&sub, &picked) {
                    return Err(Error::Infeasible(
                        "solver returned an infeasible layer allocation".into(),
                    ));
                }
                Ok(picked.edges().iter().map(|&e| origin[e]).collect())
            })
            .collect::<Result<Vec<Vec<usize>>>>()?;
        let walks = stitch_walks(instance, &split, &layered, &chosen);
        if !walks.is_empty() {
            m = apply_walks(&m, &walks);
            debug_assert!(validate_integral(instance, &m));
            last_growth = iter;
        }
        iterations = iter;
        trace.push(BoostTraceRow {
            iter,
            matching_size: m.len(),
            walks_applied: walks.len(),
        });
        if iter - last_growth >= STAGNATION_WINDOW {
            break;
        }
    }
    Ok(BoostOutcome {
        allocation: m,
        initial_size,
        iterations,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::gen_star;

    /// u1=0, u2=1, v1=2, v2=3; edges u1–v1 (0), u1–v2 (1), u2–v1 (2).
    fn path() -> AllocationInstance {
        build_instance(2, 2, &[(0, 2), (0, 3), (1, 2)], &[1, 1]).unwrap()
    }

    #[test]
    fn split_examples() {
        let g = build_instance(1, 1, &[(0, 1)], &[2]).unwrap();
        let empty = split_to_matching_graph(&g, &IntegralAllocation::empty());
        assert_eq!(empty.copy_count(), 3);
        assert_eq!(empty.free_copies(), vec![0, 1, 2]);
        let one = split_to_matching_graph(&g, &IntegralAllocation::new(vec![0]));
        assert_eq!(
            one.matched_pairs(),
            &[MatchedPair {
                edge: 0,
                left_copy: 0,
                right_copy: 1
            }]
        );
        assert_eq!(one.free_copies(), vec![2]);

        let star = build_instance(3, 1, &[(0, 3), (1, 3), (2, 3)], &[2]).unwrap();
        let s = split_to_matching_graph(&star, &IntegralAllocation::new(vec![0, 1]));
        assert_eq!(s.copies(3), 3..5);
        assert!(!s.is_free(3) && !s.is_free(4));
        assert_eq!(s.free_copies(), vec![2]);
    }

    #[test]
    fn degenerate_layering_without_matching() {
        let g = path();
        let split = split_to_matching_graph(&g, &IntegralAllocation::empty());
        let mut src = ScriptedPlacement::new(vec![0, 0, 0]);
        let lg = build_layered(&split, &g, 1, &mut src);
        assert_eq!(lg.heads[0], vec![0, 1]);
        assert_eq!(lg.tails[2], vec![2, 3]);
        assert!(lg.arcs.is_empty());
        // i_e = 0 lands on T_1, which is empty
        assert!(lg.cross_edges.is_empty());
        assert_eq!(src.arities, vec![2, 2, 2]);
    }

    #[test]
    fn single_matched_edge_goes_to_layer_one() {
        let g = build_instance(1, 1, &[(0, 1)], &[1]).unwrap();
        let split = split_to_matching_graph(&g, &IntegralAllocation::new(vec![0]));
        let mut src = ScriptedPlacement::default();
        let lg = build_layered(&split, &g, 1, &mut src);
        assert_eq!(
            lg.arcs,
            vec![LayerArc {
                edge: 0,
                layer: 1,
                tail: 1,
                head: 0
            }]
        );
        assert!(src.arities.is_empty());
    }

    #[test]
    fn path_walk_and_flip() {
        let g = path();
        let m = IntegralAllocation::new(vec![0]);
        let split = split_to_matching_graph(&g, &m);
        // unmatched edges 1 (u1–v2) and 2 (u2–v1): need i = 1 and i = 0
        let mut src = ScriptedPlacement::new(vec![1, 0]);
        let lg = build_layered(&split, &g, 1, &mut src);
        assert_eq!(lg.cross_edges.len(), 2);
        let chosen: Vec<Vec<usize>> = (0..=1)
            .map(|i| {
                let (sub, origin) = layer_instance(&lg, i).unwrap();
                crate::oracle::opt_flow(&sub)
                    .witness
                    .edges()
                    .iter()
                    .map(|&e| origin[e])
                    .collect()
            })
            .collect();
        let walks = stitch_walks(&g, &split, &lg, &chosen);
        assert_eq!(walks, vec![(vec![2, 1], vec![0])]);
        let next = apply_walks(&m, &walks);
        assert_eq!(next.edges(), &[1, 2]);
        assert!(validate_integral(&g, &next));
    }

    #[test]
    fn boost_keeps_optimal_star() {
        let g = gen_star(5, 5).unwrap();
        let out = boost(&g, 0.25, &default_solver, &mut SimRng::new(1), 100).unwrap();
        assert_eq!(out.allocation.len(), 5);
        assert_eq!(out.initial_size, 5);
    }

    #[test]
    fn boost_fixes_path() {
        let g = path();
        let start = |_: &AllocationInstance, _: u64| IntegralAllocation::new(vec![0]);
        let full = |sub: &AllocationInstance, _: u64| crate::oracle::opt_flow(sub).witness;
        let solver = move |inst: &AllocationInstance, seed: u64| {
            if inst.edge_count() == 3 && inst.left_count() == 2 && inst.right_count() == 2 {
                start(inst, seed)
            } else {
                full(inst, seed)
            }
        };
        let out = boost(&g, 0.5, &solver, &mut SimRng::new(4), 200).unwrap();
        assert_eq!(out.initial_size, 1);
        assert_eq!(out.allocation.len(), 2);
    }

    #[test]
    fn budgets() {
        assert_eq!(max_walk_layers(0.25), 8);
        assert_eq!(default_max_iterations(0.25), 10_000);
        assert_eq!(default_max_iterations(1.0), 4);
        assert_eq!(default_max_iterations(0.5), 256);
    }

    #[test]
    fn greedy_completion_is_maximal() {
        let g = path();
        let m = complete_greedily(&g, &IntegralAllocation::empty());
        assert_eq!(m.edges(), &[0]);
        let m = complete_greedily(&g, &IntegralAllocation::new(vec![1]));
        assert_eq!(m.edges(), &[1, 2]);
    }
}
