mod common;

use common::{forest, gen};
use proptest::prelude::*;
use sparse_alloc::graph::validate_fractional;
use sparse_alloc::local::{
    default_tau, finalize, level_sets, run_rounds, run_rounds_with_history, run_until_terminated, termination_check,
    EngineConfig, LocalEngine, ThresholdSchedule,
};
use sparse_alloc::oracle::opt_flow;
use sparse_alloc::{AllocationInstance, SimRng};

/// Straightforward reimplementation with `powi` and plain left-to-right sums.
/// Returns `None` when some load lands within `1e-9` of a threshold, where the
/// two implementations may legitimately round differently.
fn naive_history(g: &AllocationInstance, eps: f64, tau: u32) -> Option<Vec<Vec<i32>>> {
    let nl = g.left_count();
    let mut exp = vec![0i32; g.right_count()];
    let mut history = Vec::new();
    for _ in 0..tau {
        let mut alloc = vec![0.0; g.right_count()];
        for u in g.left_vertices() {
            let nbrs = g.neighbors(u);
            let denom: f64 = nbrs.iter().map(|&(v, _)| (1.0 + eps).powi(exp[v - nl])).sum();
            for &(v, _) in nbrs {
                alloc[v - nl] += (1.0 + eps).powi(exp[v - nl]) / denom;
            }
        }
        for i in 0..exp.len() {
            let c = g.capacities()[i] as f64;
            let (lo, hi) = (c / (1.0 + eps), c * (1.0 + eps));
            if (alloc[i] - lo).abs() < 1e-9 || (alloc[i] - hi).abs() < 1e-9 {
                return None;
            }
            if alloc[i] <= lo {
                exp[i] += 1;
            } else if alloc[i] >= hi {
                exp[i] -= 1;
            }
        }
        history.push(exp.clone());
    }
    Some(history)
}

fn small(seed: u64) -> AllocationInstance {
    let mut rng = SimRng::new(seed);
    let nl = 2 + rng.index(30);
    let nr = 2 + rng.index(30);
    match seed % 3 {
        0 => forest(nl, nr, 1 + rng.index(4) as u32, "uniform3", seed),
        1 => gen(&format!(
            "random_bipartite:nl={nl},nr={nr},p=0.2,cap=degree,seed={seed}"
        )),
        _ => gen(&format!("random_bipartite:nl={nl},nr={nr},p=0.1,seed={seed}")),
    }
}

#[test]
fn agrees_with_naive_reference() {
    let mut compared = 0;
    for seed in 0..60 {
        let g = small(seed);
        let eps = [0.05, 0.1, 0.3][seed as usize % 3];
        let tau = 25;
        let Some(expected) = naive_history(&g, eps, tau) else {
            continue;
        };
        let (_, got) = run_rounds_with_history(&g, &EngineConfig::uniform(eps, tau)).unwrap();
        assert_eq!(got, expected, "seed {seed}");
        compared += 1;
    }
    assert!(compared >= 50, "only {compared} instances free of near ties");
}

#[test]
fn all_ones_table_equals_uniform_bit_for_bit() {
    for seed in 0..20 {
        let g = small(seed);
        let tau = 15;
        let table = vec![vec![1.0; g.right_count()]; tau as usize];
        let a = run_rounds(&g, &EngineConfig::uniform(0.1, tau)).unwrap();
        let b = run_rounds(
            &g,
            &EngineConfig {
                epsilon: 0.1,
                tau,
                schedule: ThresholdSchedule::PerVertexRound(table),
            },
        )
        .unwrap();
        assert_eq!(a.exponent, b.exponent);
        assert!(a.x.iter().zip(&b.x).all(|(p, q)| p.to_bits() == q.to_bits()));
        assert!(a.alloc.iter().zip(&b.alloc).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}

fn load_bounds_hold(g: &AllocationInstance, eps: f64, k: f64, tau: u32, table: ThresholdSchedule) {
    let config = EngineConfig {
        epsilon: eps,
        tau,
        schedule: table,
    };
    let state = run_rounds(g, &config).unwrap();
    let top = tau as i32;
    let factor = 1.0 + (k + 2.0) * eps;
    for (i, &j) in state.exponent.iter().enumerate() {
        let c = g.capacities()[i] as f64;
        if j != top {
            assert!(
                state.alloc[i] >= c / factor * (1.0 - 1e-9),
                "vertex {i} under-allocated"
            );
        }
        if j != -top {
            assert!(state.alloc[i] <= c * factor * (1.0 + 1e-9), "vertex {i} over-allocated");
        }
    }
}

#[test]
fn load_bounds_for_uniform_schedule() {
    for seed in 0..30 {
        let g = small(seed);
        load_bounds_hold(&g, 0.1, 1.0, 20, ThresholdSchedule::Uniform);
    }
}

fn random_table(rng: &mut SimRng, tau: u32, width: usize) -> Vec<Vec<f64>> {
    (0..tau)
        .map(|_| (0..width).map(|_| 0.25 + 3.75 * rng.next_f64()).collect())
        .collect()
}

#[test]
fn load_bounds_for_bounded_schedules() {
    let eps = 0.2;
    for seed in 0..30 {
        let g = small(seed);
        let mut rng = SimRng::new(1000 + seed);
        let table = random_table(&mut rng, 20, g.right_count());
        let bound = table.iter().flatten().copied().fold(0.0, f64::max);
        load_bounds_hold(&g, eps, bound, 20, ThresholdSchedule::PerVertexRound(table));
    }
}

#[test]
fn bounded_schedules_keep_the_approximation() {
    let eps = 0.2;
    for seed in 0..30u64 {
        let lambda = 1 + (seed % 4) as u32;
        let g = forest(60, 60, lambda, "uniform3", seed);
        let tau = default_tau(eps, lambda) + 10;
        let mut rng = SimRng::new(seed);
        let table = random_table(&mut rng, tau, g.right_count());
        let k = table.iter().flatten().copied().fold(0.0, f64::max);
        let config = EngineConfig {
            epsilon: eps,
            tau,
            schedule: ThresholdSchedule::PerVertexRound(table),
        };
        let w = finalize(&g, &run_rounds(&g, &config).unwrap()).weight();
        let opt = opt_flow(&g).opt_size as f64;
        assert!(
            w * (2.0 + (2.0 * k + 8.0) * eps) >= opt - 1e-6,
            "seed {seed}: {w} vs {opt}"
        );
    }
}

#[test]
fn level_sets_partition_right_side() {
    let g = forest(80, 80, 3, "degree", 5);
    let mut engine = LocalEngine::new(&g, EngineConfig::uniform(0.1, 12)).unwrap();
    for _ in 0..12 {
        engine.step();
        let view = level_sets(&g, engine.state());
        let mut all: Vec<usize> = view.levels.concat();
        all.sort_unstable();
        assert_eq!(all, g.right_vertices().collect::<Vec<_>>());
        let mut nbhd: Vec<usize> = view
            .top
            .iter()
            .flat_map(|&v| g.neighbors(v).iter().map(|&(u, _)| u))
            .collect();
        nbhd.sort_unstable();
        nbhd.dedup();
        assert_eq!(nbhd, view.top_neighborhood);
    }
}

#[test]
fn termination_output_meets_guarantee() {
    for seed in 0..40u64 {
        let lambda = 1 + (seed % 8) as u32;
        let g = forest(100, 100, lambda, "uniform3", 77 + seed);
        let eps = 0.1;
        let out = run_until_terminated(&g, eps, 200).unwrap();
        assert!(!out.budget_exhausted);
        assert!(termination_check(&g, &out.state, eps));
        assert!(out.rounds_used <= default_tau(eps, lambda), "seed {seed}");
        let opt = opt_flow(&g).opt_size as f64;
        assert!(out.allocation.weight() * (2.0 + 10.0 * eps) >= opt - 1e-6);
        assert_eq!(out.trace.len(), out.rounds_used as usize);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exponents_move_by_at_most_one(seed in 0u64..10_000, tau in 1u32..30) {
        let g = small(seed);
        let (_, history) = run_rounds_with_history(&g, &EngineConfig::uniform(0.1, tau)).unwrap();
        let mut prev = vec![0; g.right_count()];
        for (r, row) in history.iter().enumerate() {
            for (a, b) in prev.iter().zip(row) {
                prop_assert!((b - a).abs() <= 1);
                prop_assert!(b.unsigned_abs() as usize <= r + 1);
            }
            prev.clone_from(row);
        }
    }

    #[test]
    fn every_left_vertex_splits_one_unit(seed in 0u64..10_000, tau in 1u32..30) {
        let g = small(seed);
        let state = run_rounds(&g, &EngineConfig::uniform(0.25, tau)).unwrap();
        for u in g.left_vertices() {
            if g.degree(u) == 0 {
                continue;
            }
            let s: f64 = g.neighbors(u).iter().map(|&(_, e)| state.x[e]).sum();
            prop_assert!((s - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn finalized_output_is_feasible(seed in 0u64..10_000, tau in 1u32..30) {
        let g = small(seed);
        let frac = finalize(&g, &run_rounds(&g, &EngineConfig::uniform(0.1, tau)).unwrap());
        prop_assert!(validate_fractional(&g, &frac).0);
        prop_assert!(frac.weight() <= opt_flow(&g).opt_size as f64 * (1.0 + 1e-9));
    }
}
