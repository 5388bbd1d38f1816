//! Randomized rounding of a fractional allocation.
//!
//! Every edge is sampled independently with probability `x_e / 6`. A vertex
//! whose sampled degree exceeds its capacity (1 on the left, `C_v` on the
//! right) is heavy, and all sampled edges touching a heavy vertex are dropped.
//! What survives is feasible by construction.

use rayon::prelude::*;

use crate::graph::{AllocationInstance, FractionalAllocation, IntegralAllocation};
use crate::rng::SimRng;

pub const SAMPLE_DIVISOR: f64 = 6.0;

#[derive(Clone, Debug, PartialEq)]
pub struct RoundingReport {
    pub kept_edges: IntegralAllocation,
    pub sampled_count: usize,
    pub dropped_heavy_count: usize,
    pub weight_fraction_input: f64,
}

/// One rounding pass; consumes one `next_f64` draw per edge, in edge order.
pub fn round_once(instance: &AllocationInstance, frac: &FractionalAllocation, rng: &mut SimRng) -> RoundingReport {
    let m = instance.edge_count();
    let mut sampled = Vec::new();
    for e in 0..m {
        let p = (frac.value(e) / SAMPLE_DIVISOR).clamp(0.0, 1.0);
        if rng.bernoulli(p) {
            sampled.push(e);
        }
    }
    let mut degree = vec![0u32; instance.vertex_count()];
    for &e in &sampled {
        let (u, v) = instance.edge(e);
        degree[u] += 1;
        degree[v] += 1;
    }
    let heavy = |w: usize| degree[w] > instance.capacity(w);
    let kept: Vec<usize> = sampled
        .iter()
        .copied()
        .filter(|&e| {
            let (u, v) = instance.edge(e);
            !heavy(u) && !heavy(v)
        })
        .collect();
    RoundingReport {
        sampled_count: sampled.len(),
        dropped_heavy_count: sampled.len() - kept.len(),
        kept_edges: IntegralAllocation::new(kept),
        weight_fraction_input: frac.weight(),
    }
}

/// `⌈log₂ n⌉ + 1` copies for an `n`-vertex instance.
pub fn default_copies(vertex_count: usize) -> usize {
    (vertex_count.max(1) as f64).log2().ceil() as usize + 1
}

/// Largest result of `copies` independent passes; copy `i` uses
/// `SimRng::stream(seed, &[i])`. Ties go to the lowest copy index.
pub fn round_best_of(
    instance: &AllocationInstance,
    frac: &FractionalAllocation,
    copies: usize,
    seed: u64,
) -> IntegralAllocation {
    round_best_of_report(instance, frac, copies, seed).kept_edges
}

/// [`round_best_of`] returning the full report of the winning copy.
pub fn round_best_of_report(
    instance: &AllocationInstance,
    frac: &FractionalAllocation,
    copies: usize,
    seed: u64,
) -> RoundingReport {
    let copies = copies.max(1);
    let results: Vec<RoundingReport> = (0..copies)
        .into_par_iter()
        .map(|i| round_once(instance, frac, &mut SimRng::stream(seed, &[i as u64])))
        .collect();
    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.kept_edges.len() > results[best].kept_edges.len() {
            best = i;
        }
    }
    results.into_iter().nth(best).expect("at least one copy")
}
