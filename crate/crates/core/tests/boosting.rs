mod common;

use common::forest;
use sparse_alloc::boost::{
    apply_walks, boost, build_layered, default_max_iterations, default_solver, layer_instance, split_to_matching_graph,
    stitch_walks, ScriptedPlacement, STAGNATION_WINDOW,
};
use sparse_alloc::graph::{build_instance, validate_integral};
use sparse_alloc::oracle::opt_flow;
use sparse_alloc::{AllocationInstance, IntegralAllocation, SimRng};

/// Alternating path `u0 v0 u1 v1 ...` with `matched` interior edges in `m`.
/// Edge `2i` is `u_i–v_i`, edge `2i+1` is `u_{i+1}–v_i`.
fn alternating_path(matched: usize) -> (AllocationInstance, IntegralAllocation) {
    let n = matched + 1;
    let mut edges = Vec::new();
    for i in 0..n {
        edges.push((i, n + i));
        if i + 1 < n {
            edges.push((i + 1, n + i));
        }
    }
    let g = build_instance(n, n, &edges, &vec![1; n]).unwrap();
    let m = IntegralAllocation::new((0..matched).map(|i| 2 * i + 1).collect());
    (g, m)
}

/// Augments once with the given placement script, solving each layer exactly.
fn augments(g: &AllocationInstance, m: &IntegralAllocation, k: usize, script: Vec<usize>) -> (bool, Vec<usize>) {
    let split = split_to_matching_graph(g, m);
    let mut source = ScriptedPlacement::new(script);
    let layered = build_layered(&split, g, k, &mut source);
    let chosen: Vec<Vec<usize>> = (0..=k)
        .map(|i| {
            let (sub, origin) = layer_instance(&layered, i).unwrap();
            opt_flow(&sub).witness.edges().iter().map(|&e| origin[e]).collect()
        })
        .collect();
    let walks = stitch_walks(g, &split, &layered, &chosen);
    let next = apply_walks(m, &walks);
    assert!(validate_integral(g, &next));
    (next.len() > m.len(), source.arities)
}

/// Counts augmenting placements by enumerating every mixed-radix script.
fn count_augmenting(g: &AllocationInstance, m: &IntegralAllocation, k: usize) -> (usize, usize) {
    let (_, arities) = augments(g, m, k, Vec::new());
    let total: usize = arities.iter().product();
    let mut hits = 0;
    for code in 0..total {
        let mut rest = code;
        let script: Vec<usize> = arities
            .iter()
            .map(|&a| {
                let d = rest % a;
                rest /= a;
                d
            })
            .collect();
        hits += usize::from(augments(g, m, k, script).0);
    }
    (hits, total)
}

#[test]
fn single_matched_edge_survives_with_probability_one_quarter() {
    let (g, m) = alternating_path(1);
    assert_eq!(count_augmenting(&g, &m, 1), (1, 4));
    assert_eq!(count_augmenting(&g, &m, 0).0, 0);
    assert_eq!(count_augmenting(&g, &m, 2).0, 0);
}

#[test]
fn longer_walks_need_their_exact_layer_count() {
    let (g, m) = alternating_path(2);
    // two matched arcs over 2 layers, three cross edges over 3 slots
    assert_eq!(count_augmenting(&g, &m, 2), (1, 2 * 2 * 3 * 3 * 3));
    assert_eq!(count_augmenting(&g, &m, 1).0, 0);
}

#[test]
fn free_edge_augments_at_zero_layers() {
    let g = build_instance(2, 2, &[(0, 2), (1, 3)], &[1, 1]).unwrap();
    let m = IntegralAllocation::new(vec![0]);
    assert_eq!(count_augmenting(&g, &m, 0), (1, 1));
}

#[test]
fn layered_graphs_respect_sides() {
    for seed in 0..30u64 {
        let g = forest(30, 20, 2, if seed % 2 == 0 { "all_one" } else { "uniform3" }, seed);
        let m = default_solver(&g, seed);
        let split = split_to_matching_graph(&g, &m);
        assert_eq!(split.matched_pairs().len(), m.len());
        let mut rng = SimRng::new(seed);
        for k in 0..6 {
            let layered = build_layered(&split, &g, k, &mut rng);
            assert!(layered.layers[k + 1].iter().all(|&c| !g.is_left(split.owner(c))));
            assert!(layered.layers[0].iter().all(|&c| g.is_left(split.owner(c))));
            for i in 0..k + 2 {
                assert!(layered.heads[i].iter().all(|&c| g.is_left(split.owner(c))));
                assert!(layered.tails[i].iter().all(|&c| !g.is_left(split.owner(c))));
            }
            for ce in &layered.cross_edges {
                assert!(layered.heads[ce.layer].iter().any(|&c| split.owner(c) == ce.u));
                assert!(layered.tails[ce.layer + 1].iter().any(|&c| split.owner(c) == ce.v));
            }
        }
    }
}

/// With `ε = 1/2` the layer count cycles through `0..=4`, so the stagnation
/// window of 50 iterations holds ten `k = 1` attempts, each succeeding with
/// probability 1/4.
#[test]
fn bad_start_on_path_is_repaired_at_predicted_rate() {
    let (g, bad) = alternating_path(1);
    let solver = move |sub: &AllocationInstance, seed: u64| {
        if sub.edges() == g.edges() {
            bad.clone()
        } else {
            default_solver(sub, seed)
        }
    };
    let (g, _) = alternating_path(1);
    let trials = 1000;
    let mut fixed = 0;
    for seed in 0..trials {
        let out = boost(&g, 0.5, &solver, &mut SimRng::new(seed), 200).unwrap();
        assert_eq!(out.initial_size, 1);
        if out.allocation.len() == 2 {
            fixed += 1;
        } else {
            assert_eq!(out.iterations, STAGNATION_WINDOW);
        }
    }
    let p = 1.0 - 0.75f64.powi(10);
    let sd = (p * (1.0 - p) / trials as f64).sqrt();
    let rate = fixed as f64 / trials as f64;
    assert!((rate - p).abs() <= 4.0 * sd, "{rate} vs {p}");
}

#[test]
fn forest_reaches_three_quarters_of_optimum() {
    let g = forest(40, 40, 2, "all_one", 13);
    let opt = opt_flow(&g).opt_size;
    let out = boost(
        &g,
        0.25,
        &default_solver,
        &mut SimRng::new(13),
        default_max_iterations(0.25),
    )
    .unwrap();
    assert!(out.allocation.len() as f64 >= 0.75 * opt as f64);
    assert!(out.trace.windows(2).all(|w| w[0].matching_size <= w[1].matching_size));
    assert!(validate_integral(&g, &out.allocation));
}

#[test]
fn boost_is_reproducible() {
    let g = forest(30, 30, 2, "uniform2", 4);
    let a = boost(&g, 0.5, &default_solver, &mut SimRng::new(9), 60).unwrap();
    let b = boost(&g, 0.5, &default_solver, &mut SimRng::new(9), 60).unwrap();
    assert_eq!(a.allocation, b.allocation);
    assert_eq!(a.trace, b.trace);
}
