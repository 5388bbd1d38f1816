//! Helpers shared by the integration tests.
#![allow(dead_code)]

use sparse_alloc::generate::{generate, GenSpec};
use sparse_alloc::local::{
    loads, proportional_fractions, run_rounds_with_history, threshold_step, EngineConfig, Powers, Step,
    ThresholdSchedule,
};
use sparse_alloc::AllocationInstance;

pub fn gen(spec: &str) -> AllocationInstance {
    let spec: GenSpec = spec.parse().expect("valid generator spec");
    generate(&spec).expect("generator succeeds").instance
}

pub fn forest(nl: usize, nr: usize, lambda: u32, cap: &str, seed: u64) -> AllocationInstance {
    gen(&format!(
        "forest_union:nl={nl},nr={nr},lambda={lambda},cap={cap},seed={seed}"
    ))
}

/// Rebuilds, round by round, a threshold schedule with every `k` in `[1/4, 4]`
/// under which the local engine takes exactly the steps recorded in `history`.
///
/// For each vertex and round the exact load `alloc` of the recorded exponents
/// decides the multiplier:
/// - `alloc > 2C`: `k = 1`, and the recorded step must be a decrease;
/// - otherwise `k = 1/4` for an increase, `1/2` for a decrease, `3` for no move.
///
/// Returns an error naming the first `(round, vertex)` the chosen `k` does not
/// reproduce.
pub fn derive_schedule(
    instance: &AllocationInstance,
    epsilon: f64,
    history: &[Vec<i32>],
) -> Result<Vec<Vec<f64>>, String> {
    let powers = Powers::new(epsilon, history.len() as u32 + 1);
    let mut prev = vec![0i32; instance.right_count()];
    let mut x = vec![0.0; instance.edge_count()];
    let mut alloc = vec![0.0; instance.right_count()];
    let mut table = Vec::with_capacity(history.len());
    for (r, next) in history.iter().enumerate() {
        proportional_fractions(instance, &prev, &powers, &mut x);
        loads(instance, &x, &mut alloc);
        let mut row = Vec::with_capacity(next.len());
        for i in 0..next.len() {
            let cap = instance.capacities()[i] as f64;
            let step = match next[i] - prev[i] {
                1 => Step::Up,
                -1 => Step::Down,
                0 => Step::Stay,
                d => return Err(format!("round {}: vertex {i} moved by {d}", r + 1)),
            };
            let k = if alloc[i] > 2.0 * cap {
                1.0
            } else {
                match step {
                    Step::Up => 0.25,
                    Step::Down => 0.5,
                    Step::Stay => 3.0,
                }
            };
            if threshold_step(alloc[i], cap, epsilon, k) != step {
                return Err(format!(
                    "round {}: vertex {i} with alloc {} and capacity {cap} took {step:?}, not reproducible with k = {k}",
                    r + 1,
                    alloc[i]
                ));
            }
            row.push(k);
        }
        table.push(row);
        prev.clone_from(next);
    }
    Ok(table)
}

/// Replays `history` through the local engine with the derived schedule and
/// checks the trajectories coincide.
pub fn replay_matches(instance: &AllocationInstance, epsilon: f64, history: &[Vec<i32>]) -> Result<(), String> {
    if history.is_empty() {
        return Ok(());
    }
    let table = derive_schedule(instance, epsilon, history)?;
    let config = EngineConfig {
        epsilon,
        tau: history.len() as u32,
        schedule: ThresholdSchedule::PerVertexRound(table),
    };
    let (_, replayed) = run_rounds_with_history(instance, &config).map_err(|e| e.to_string())?;
    match replayed.iter().zip(history).position(|(a, b)| a != b) {
        None => Ok(()),
        Some(r) => Err(format!("replay diverges at round {}", r + 1)),
    }
}
