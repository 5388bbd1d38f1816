//! Sampled, phase-compressed simulation of the proportional allocation.
//!
//! Rounds are grouped into phases of `B` rounds. At the start of a phase every
//! vertex partitions its neighbors into level groups by their current
//! priority (`⌈log_{1+ε} β⌉`, clamped to `[-2τ, 2τ]`) and reserves, for every
//! round offset of the phase, `t` uniform samples with replacement from each
//! group larger than `t`. Inside the phase each round estimates
//!
//! ```text
//! β̂_u  = Σ_groups (|g| / t) · Σ_{sampled v ∈ g} β_v          for u ∈ L
//! ᾱ_v  = Σ_groups (|g| / t) · Σ_{sampled u ∈ g} β_v / β̂_u    for v ∈ R
//! ```
//!
//! using exact sums for groups of size at most `t`, and steps the exponents
//! with the usual inclusive thresholds applied to `ᾱ_v`. When every group of a
//! vertex is exact its aggregate is the same compensated ascending-id sum the
//! local engine computes, so without sampling the two engines agree bit for bit.
//!
//! The output is `x_{u,v} = min(1, C_v/ᾱ_v) · β_v/β̂_u` from the last round,
//! followed by a clamp of every left sum to 1 and a rescale of every right sum
//! to `C_v`, which makes it feasible regardless of estimation error.
//!
//! Machines and graph exponentiation are not materialized. The cost report
//! charges `1 + ⌈log₂ B⌉` rounds per phase and measures the largest radius-`B`
//! ball of the sampled graphs around a 1% vertex sample.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{AllocationInstance, FractionalAllocation};
use crate::local::{
    default_tau, loads, proportional_fractions, termination_check, threshold_step, Powers, PriorityState, Step,
};
use crate::rng::SimRng;
use crate::sum::{compensated_sum, Compensated};

const BALL_STREAM: u64 = 0xBA11;
/// Rounds charged for one evaluation of the stopping rule.
pub const TERMINATION_CHECK_ROUNDS: u64 = 2;

/// `max(1, ⌊min(√(a/(8ε′)), √(l/(8ε′)))⌋)` for `a = α·log₂ n`, `l = log₂ λ`.
pub fn b_from_logs(alpha_log_n: f64, log_lambda: f64, eps_prime: f64) -> u32 {
    let memory = (alpha_log_n / (8.0 * eps_prime)).sqrt();
    let sparsity = (log_lambda / (8.0 * eps_prime)).sqrt();
    let b = memory.min(sparsity).floor();
    if b.is_nan() || b < 1.0 {
        1
    } else {
        b as u32
    }
}

/// Rounds per phase for `ε′ = ε/48`.
pub fn compute_b(n: usize, lambda_guess: u64, epsilon: f64, alpha: f64) -> Result<u32> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!("compute_b needs n >= 2, got {n}")));
    }
    if lambda_guess < 2 {
        return Err(Error::InvalidConfig(format!(
            "lambda guess must be >= 2, got {lambda_guess}"
        )));
    }
    check_epsilon(epsilon)?;
    check_alpha(alpha)?;
    let eps_prime = epsilon / 48.0;
    Ok(b_from_logs(
        alpha * (n as f64).log2(),
        (lambda_guess as f64).log2(),
        eps_prime,
    ))
}

/// `⌈(1+ε)^{2B} · ε^{-5} · log₂ n⌉`, saturating at `u64::MAX`.
pub fn compute_t(n: usize, b: u32, epsilon: f64) -> u64 {
    let t = (1.0 + epsilon).powf(2.0 * b as f64) * epsilon.powi(-5) * (n.max(2) as f64).log2();
    let t = t.ceil();
    if t >= u64::MAX as f64 {
        u64::MAX
    } else {
        (t as u64).max(1)
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon <= 0.25 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("epsilon {epsilon} outside (0, 1/4]")))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("alpha {alpha} outside (0, 1)")))
    }
}

/// `t` uniform indices into `0..len` with replacement.
pub fn draw_sample(len: usize, t: u64, rng: &mut SimRng) -> Vec<usize> {
    (0..t).map(|_| rng.index(len)).collect()
}

/// Exact sum when `values.len() <= t`, otherwise `(len/t) · Σ` of `t` samples
/// drawn with replacement.
pub fn estimate_group_sum(values: &[f64], t: u64, rng: &mut SimRng) -> f64 {
    let t = t.max(1);
    if values.len() as u64 <= t {
        return compensated_sum(values.iter().copied());
    }
    let sample = draw_sample(values.len(), t, rng);
    values.len() as f64 / t as f64 * compensated_sum(sample.iter().map(|&i| values[i]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpcConfig {
    pub epsilon: f64,
    pub alpha: f64,
    pub lambda_guess: u64,
    /// Rounds per phase.
    pub b: u32,
    /// Samples per group per reserved round.
    pub t: u64,
    /// Total rounds to simulate.
    pub tau: u32,
    pub seed: u64,
    /// Record the per-round trajectory and compare every estimate with the
    /// exact load.
    pub shadow: bool,
    /// Measure ball volumes in the sampled graphs.
    pub measure_balls: bool,
}

impl MpcConfig {
    /// Parameters derived from `n`, `ε`, `α` and the arboricity guess.
    pub fn new(n: usize, epsilon: f64, alpha: f64, lambda_guess: u64, seed: u64) -> Result<Self> {
        check_epsilon(epsilon)?;
        check_alpha(alpha)?;
        let lambda_guess = lambda_guess.max(2);
        let b = compute_b(n.max(2), lambda_guess, epsilon, alpha)?;
        let tau = default_tau(epsilon, lambda_guess.min(u32::MAX as u64) as u32);
        Ok(Self {
            epsilon,
            alpha,
            lambda_guess,
            b,
            t: compute_t(n, b, epsilon),
            tau,
            seed,
            shadow: false,
            measure_balls: true,
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_epsilon(self.epsilon)?;
        check_alpha(self.alpha)?;
        if self.b == 0 || self.t == 0 || self.tau == 0 {
            return Err(Error::InvalidConfig("B, t and tau must be >= 1".into()));
        }
        Ok(())
    }

    pub fn phase_count(&self) -> u32 {
        self.tau.div_ceil(self.b)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MpcCostReport {
    pub mpc_rounds: u64,
    pub phases: u64,
    pub max_ball_volume: u64,
    pub total_memory_words: u64,
    pub per_machine_bound: u64,
}

impl MpcCostReport {
    fn absorb(&mut self, other: &MpcCostReport) {
        self.mpc_rounds += other.mpc_rounds;
        self.phases += other.phases;
        self.max_ball_volume = self.max_ball_volume.max(other.max_ball_volume);
        self.total_memory_words = self.total_memory_words.max(other.total_memory_words);
        self.per_machine_bound = other.per_machine_bound;
    }
}

/// One level group of a vertex: neighbors (as positions in its adjacency list)
/// whose priority fell in the same level at phase start.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelGroup {
    pub level: i32,
    pub members: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MpcDiagnostics {
    /// Exponents after every simulated round.
    pub exponent_history: Vec<Vec<i32>>,
    /// `ᾱ_v` per round.
    pub est_alloc_history: Vec<Vec<f64>>,
    /// Exact loads for the same exponents, per round.
    pub exact_alloc_history: Vec<Vec<f64>>,
    /// `(vertex, round)` pairs compared.
    pub checked: usize,
    /// Pairs with `|ᾱ_v − alloc_v| > (ε/4)·alloc_v`.
    pub violations: usize,
    /// Reserved `(offset, vertex, group)` entries estimated from samples.
    pub sampled_groups: usize,
    /// Reserved entries summed exactly.
    pub exact_groups: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpcPhaseState {
    pub exponent: Vec<i32>,
    /// Exponents at the start of the most recent round.
    pub prev_exponent: Vec<i32>,
    /// `β̂_u` per left vertex (exact degree-sum before the first round).
    pub beta_left: Vec<f64>,
    /// `ᾱ_v` per right vertex from the most recent round.
    pub est_alloc: Vec<f64>,
    pub phase: u32,
    pub round: u32,
    /// Groups per vertex for the current phase.
    pub level_groups: Vec<Vec<LevelGroup>>,
    /// `reserved[offset][w][g]`: sample positions into `level_groups[w][g].members`,
    /// `None` for groups summed exactly.
    pub reserved: Vec<Vec<Vec<Option<Vec<usize>>>>>,
    pub cost: MpcCostReport,
    pub diagnostics: MpcDiagnostics,
}

impl MpcPhaseState {
    pub fn initial(instance: &AllocationInstance) -> Self {
        let beta_left = instance.left_vertices().map(|u| instance.degree(u) as f64).collect();
        Self {
            exponent: vec![0; instance.right_count()],
            prev_exponent: vec![0; instance.right_count()],
            beta_left,
            est_alloc: vec![0.0; instance.right_count()],
            phase: 0,
            round: 0,
            level_groups: Vec::new(),
            reserved: Vec::new(),
            cost: MpcCostReport::default(),
            diagnostics: MpcDiagnostics::default(),
        }
    }
}

fn level_of(value: f64, ln_base: f64, limit: i32) -> i32 {
    let x = (value.ln() / ln_base - 1e-9).ceil();
    (x.clamp(-(limit as f64), limit as f64)) as i32
}

fn build_groups(instance: &AllocationInstance, state: &MpcPhaseState, config: &MpcConfig) -> Vec<Vec<LevelGroup>> {
    let nl = instance.left_count();
    let limit = 2 * config.tau as i32;
    let ln_base = (1.0 + config.epsilon).ln();
    (0..instance.vertex_count())
        .into_par_iter()
        .map(|w| {
            let mut keyed: Vec<(i32, usize)> = instance
                .neighbors(w)
                .iter()
                .enumerate()
                .map(|(pos, &(x, _))| {
                    let level = if w < nl {
                        state.exponent[x - nl].clamp(-limit, limit)
                    } else {
                        level_of(state.beta_left[x], ln_base, limit)
                    };
                    (level, pos)
                })
                .collect();
            keyed.sort_unstable();
            let mut groups: Vec<LevelGroup> = Vec::new();
            for (level, pos) in keyed {
                match groups.last_mut() {
                    Some(g) if g.level == level => g.members.push(pos),
                    _ => groups.push(LevelGroup {
                        level,
                        members: vec![pos],
                    }),
                }
            }
            groups
        })
        .collect()
}

fn reserve_samples(
    groups: &[Vec<LevelGroup>],
    offsets: u32,
    phase: u32,
    config: &MpcConfig,
) -> Vec<Vec<Vec<Option<Vec<usize>>>>> {
    (0..offsets)
        .map(|offset| {
            groups
                .par_iter()
                .enumerate()
                .map(|(w, gs)| {
                    gs.iter()
                        .map(|g| {
                            if g.members.len() as u64 <= config.t {
                                None
                            } else {
                                let mut rng = SimRng::stream(
                                    config.seed,
                                    &[phase as u64, offset as u64, w as u64, g.level as i64 as u64],
                                );
                                Some(draw_sample(g.members.len(), config.t, &mut rng))
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Stratified estimate of `Σ_{pos} f(pos)` over all adjacency positions of a vertex.
fn stratified<F: Fn(usize) -> f64>(degree: usize, groups: &[LevelGroup], reserved: &[Option<Vec<usize>>], f: F) -> f64 {
    if reserved.iter().all(Option::is_none) {
        return compensated_sum((0..degree).map(&f));
    }
    let mut total = Compensated::new();
    for (g, sample) in groups.iter().zip(reserved) {
        match sample {
            None => total.add(compensated_sum(g.members.iter().map(|&p| f(p)))),
            Some(idx) => {
                let s = compensated_sum(idx.iter().map(|&i| f(g.members[i])));
                total.add(g.members.len() as f64 / idx.len() as f64 * s);
            }
        }
    }
    total.value()
}

fn ball_volume(adj: &[Vec<usize>], start: usize, radius: u32, seen: &mut [u32], stamp: u32) -> u64 {
    let mut queue = VecDeque::from([(start, 0u32)]);
    seen[start] = stamp;
    let mut count = 1u64;
    while let Some((a, d)) = queue.pop_front() {
        if d == radius {
            continue;
        }
        for &b in &adj[a] {
            if seen[b] != stamp {
                seen[b] = stamp;
                count += 1;
                queue.push_back((b, d + 1));
            }
        }
    }
    count
}

fn measure_balls(instance: &AllocationInstance, state: &MpcPhaseState, config: &MpcConfig) -> (u64, u64) {
    let n = instance.vertex_count();
    if n == 0 {
        return (0, 0);
    }
    let probes = n.div_ceil(100).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    SimRng::stream(config.seed, &[BALL_STREAM, state.phase as u64]).shuffle(&mut order);
    let starts = &order[..probes];
    let mut seen = vec![0u32; n];
    let mut stamp = 0u32;
    let (mut max_volume, mut total) = (0u64, 0u64);
    for per_offset in &state.reserved {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (w, gs) in state.level_groups.iter().enumerate() {
            let nbrs = instance.neighbors(w);
            for (g, sample) in gs.iter().zip(&per_offset[w]) {
                let mut link = |pos: usize| {
                    let x = nbrs[pos].0;
                    adj[w].push(x);
                    adj[x].push(w);
                };
                match sample {
                    None => g.members.iter().for_each(|&p| link(p)),
                    Some(idx) => idx.iter().for_each(|&i| link(g.members[i])),
                }
            }
        }
        for &s in starts {
            stamp += 1;
            let v = ball_volume(&adj, s, config.b, &mut seen, stamp);
            max_volume = max_volume.max(v);
            total += v;
        }
    }
    (max_volume, total)
}

fn ceil_log2(b: u32) -> u64 {
    if b <= 1 {
        0
    } else {
        (32 - (b - 1).leading_zeros()) as u64
    }
}

/// Runs one phase (or the partial last phase) of the simulation.
pub fn run_mpc_phase(
    instance: &AllocationInstance,
    mut state: MpcPhaseState,
    config: &MpcConfig,
    powers: &Powers,
) -> MpcPhaseState {
    let nl = instance.left_count();
    let remaining = config.tau.saturating_sub(state.round);
    let offsets = remaining.min(config.b);
    if offsets == 0 {
        return state;
    }
    state.level_groups = build_groups(instance, &state, config);
    state.reserved = reserve_samples(&state.level_groups, offsets, state.phase, config);
    for entry in state.reserved.iter().flatten().flatten() {
        if entry.is_some() {
            state.diagnostics.sampled_groups += 1;
        } else {
            state.diagnostics.exact_groups += 1;
        }
    }
    state.cost.phases += 1;
    state.cost.mpc_rounds += 1 + ceil_log2(config.b);
    if config.measure_balls {
        let (max_volume, total) = measure_balls(instance, &state, config);
        state.cost.max_ball_volume = state.cost.max_ball_volume.max(max_volume);
        state.cost.total_memory_words = state.cost.total_memory_words.max(total + instance.edge_count() as u64);
    }

    let mut shadow_x = vec![0.0; if config.shadow { instance.edge_count() } else { 0 }];
    let mut shadow_alloc = vec![0.0; if config.shadow { instance.right_count() } else { 0 }];
    for offset in 0..offsets as usize {
        let reserved = &state.reserved[offset];
        let groups = &state.level_groups;
        let exponent = &state.exponent;
        let beta_left: Vec<f64> = instance
            .left_vertices()
            .into_par_iter()
            .map(|u| {
                let nbrs = instance.neighbors(u);
                if nbrs.is_empty() {
                    return 0.0;
                }
                stratified(nbrs.len(), &groups[u], &reserved[u], |p| {
                    powers.get(exponent[nbrs[p].0 - nl])
                })
            })
            .collect();
        let est_alloc: Vec<f64> = instance
            .right_vertices()
            .into_par_iter()
            .map(|v| {
                let nbrs = instance.neighbors(v);
                let beta_v = powers.get(exponent[v - nl]);
                stratified(nbrs.len(), &groups[v], &reserved[v], |p| beta_v / beta_left[nbrs[p].0])
            })
            .collect();

        if config.shadow {
            proportional_fractions(instance, &state.exponent, powers, &mut shadow_x);
            loads(instance, &shadow_x, &mut shadow_alloc);
            let tol = config.epsilon / 4.0;
            for (est, exact) in est_alloc.iter().zip(&shadow_alloc) {
                state.diagnostics.checked += 1;
                if (est - exact).abs() > tol * exact {
                    state.diagnostics.violations += 1;
                }
            }
            state.diagnostics.est_alloc_history.push(est_alloc.clone());
            state.diagnostics.exact_alloc_history.push(shadow_alloc.clone());
        }

        state.prev_exponent.clone_from(&state.exponent);
        for (i, j) in state.exponent.iter_mut().enumerate() {
            let cap = instance.capacities()[i] as f64;
            match threshold_step(est_alloc[i], cap, config.epsilon, 1.0) {
                Step::Up => *j += 1,
                Step::Down => *j -= 1,
                Step::Stay => {}
            }
        }
        state.beta_left = beta_left;
        state.est_alloc = est_alloc;
        state.round += 1;
        if config.shadow {
            state.diagnostics.exponent_history.push(state.exponent.clone());
        }
    }
    state.phase += 1;
    state
}

/// Final fractions from the most recent round, made feasible.
pub fn mpc_output(instance: &AllocationInstance, state: &MpcPhaseState, powers: &Powers) -> FractionalAllocation {
    let nl = instance.left_count();
    let mut values = vec![0.0; instance.edge_count()];
    if state.round == 0 {
        return FractionalAllocation::from_values(values);
    }
    for v in instance.right_vertices() {
        let i = v - nl;
        let cap = instance.capacities()[i] as f64;
        let est = state.est_alloc[i];
        let beta_v = powers.get(state.prev_exponent[i]);
        for &(u, e) in instance.neighbors(v) {
            let x = beta_v / state.beta_left[u];
            values[e] = if est > cap { x * (cap / est) } else { x };
        }
    }
    for w in 0..instance.vertex_count() {
        let nbrs = instance.neighbors(w);
        let cap = instance.capacity(w) as f64;
        let total = compensated_sum(nbrs.iter().map(|&(_, e)| values[e]));
        if total > cap {
            let scale = cap / total;
            for &(_, e) in nbrs {
                values[e] *= scale;
            }
        }
    }
    FractionalAllocation::from_values(values)
}

/// Exact loads and exponents after the simulation, in the local engine's
/// state layout (loads from the last round's starting exponents).
pub fn exact_state(instance: &AllocationInstance, state: &MpcPhaseState, epsilon: f64) -> PriorityState {
    let powers = Powers::new(epsilon, state.round + 1);
    let mut x = vec![0.0; instance.edge_count()];
    let mut alloc = vec![0.0; instance.right_count()];
    if state.round > 0 {
        proportional_fractions(instance, &state.prev_exponent, &powers, &mut x);
        loads(instance, &x, &mut alloc);
    }
    PriorityState {
        epsilon,
        exponent: state.exponent.clone(),
        round: state.round,
        alloc,
        x,
    }
}

#[derive(Clone, Debug)]
pub struct MpcRun {
    pub allocation: FractionalAllocation,
    pub cost: MpcCostReport,
    pub state: MpcPhaseState,
    pub config: MpcConfig,
}

/// Runs all phases of one configuration.
pub fn run_mpc_with_config(instance: &AllocationInstance, config: &MpcConfig) -> Result<MpcRun> {
    config.validate()?;
    let powers = Powers::new(config.epsilon, config.tau + 1);
    let mut state = MpcPhaseState::initial(instance);
    state.cost.per_machine_bound = (instance.vertex_count().max(1) as f64).powf(config.alpha).ceil() as u64;
    while state.round < config.tau {
        state = run_mpc_phase(instance, state, config, &powers);
    }
    let allocation = mpc_output(instance, &state, &powers);
    Ok(MpcRun {
        allocation,
        cost: state.cost.clone(),
        state,
        config: config.clone(),
    })
}

/// One run with `τ`, `B` and `t` derived from the arboricity guess.
pub fn run_mpc(
    instance: &AllocationInstance,
    epsilon: f64,
    alpha: f64,
    lambda_guess: u64,
    seed: u64,
) -> Result<(FractionalAllocation, MpcCostReport)> {
    let config = MpcConfig::new(instance.vertex_count(), epsilon, alpha, lambda_guess, seed)?;
    let run = run_mpc_with_config(instance, &config)?;
    Ok((run.allocation, run.cost))
}

#[derive(Clone, Debug)]
pub struct GuessingOutcome {
    pub allocation: FractionalAllocation,
    /// Accumulated over all attempts.
    pub cost: MpcCostReport,
    pub lambda_used: u64,
    /// Guesses ran past `n` and the last attempt used `λ = n` without
    /// confirming the stopping rule.
    pub guess_exhausted: bool,
    pub attempts: u32,
    /// Configuration of the final attempt.
    pub config: MpcConfig,
    pub state: MpcPhaseState,
}

/// `2^{4^i}`, or `None` past `u64`.
pub fn lambda_schedule(i: u32) -> Option<u64> {
    let exp = 4u64.checked_pow(i)?;
    if exp >= 64 {
        None
    } else {
        Some(1u64 << exp)
    }
}

/// Tries `λ_i = 2^{4^i}` for `i = 1, 2, …` until the stopping rule holds on
/// the exact loads of the final exponents. Once the next guess would exceed
/// `n`, one last attempt with `λ = n` is returned as is.
pub fn run_mpc_with_guessing(
    instance: &AllocationInstance,
    epsilon: f64,
    alpha: f64,
    seed: u64,
) -> Result<GuessingOutcome> {
    run_mpc_with_guessing_by(instance, epsilon, alpha, seed, |c| c)
}

/// [`run_mpc_with_guessing`] with a hook that may adjust each attempt's
/// configuration (for example to enable shadow diagnostics or shrink `t`).
pub fn run_mpc_with_guessing_by<F: Fn(MpcConfig) -> MpcConfig>(
    instance: &AllocationInstance,
    epsilon: f64,
    alpha: f64,
    seed: u64,
    adjust: F,
) -> Result<GuessingOutcome> {
    let n = instance.vertex_count() as u64;
    let mut cost = MpcCostReport::default();
    let mut i = 1;
    let mut lambda = lambda_schedule(1).expect("first guess fits");
    let mut attempts = 0;
    loop {
        let config = adjust(MpcConfig::new(instance.vertex_count(), epsilon, alpha, lambda, seed)?);
        let run = run_mpc_with_config(instance, &config)?;
        attempts += 1;
        cost.absorb(&run.cost);
        cost.mpc_rounds += TERMINATION_CHECK_ROUNDS;
        let exact = exact_state(instance, &run.state, epsilon);
        let finished = termination_check(instance, &exact, epsilon);
        let next = lambda_schedule(i + 1);
        let exhausted = !finished && next.is_none_or(|l| l > n);
        if finished || exhausted {
            let (run, lambda_used) = if exhausted {
                let config = adjust(MpcConfig::new(instance.vertex_count(), epsilon, alpha, n.max(2), seed)?);
                let run = run_mpc_with_config(instance, &config)?;
                attempts += 1;
                cost.absorb(&run.cost);
                (run, n.max(2))
            } else {
                (run, lambda)
            };
            return Ok(GuessingOutcome {
                allocation: run.allocation,
                cost,
                lambda_used,
                guess_exhausted: exhausted,
                attempts,
                config: run.config,
                state: run.state,
            });
        }
        i += 1;
        lambda = next.expect("checked above");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::gen_star;
    use crate::graph::{build_instance, validate_fractional};
    use crate::local::{run_rounds, EngineConfig};

    #[test]
    fn b_formula_examples() {
        let ep = 0.1 / 48.0;
        assert_eq!(b_from_logs(1e6, 8.0 * ep, ep), 1);
        assert_eq!(b_from_logs(1e6, 32.0 * ep, ep), 2);
        assert_eq!(b_from_logs(32.0 * ep, 32.0 * ep, ep), 2);
        assert_eq!(b_from_logs(1e-6, 1e6, ep), 1);
        // λ ≥ n^α: only the memory branch matters
        let n = 1 << 10;
        let a = compute_b(n, 1 << 20, 0.1, 0.5).unwrap();
        let b = compute_b(n, 1 << 40, 0.1, 0.5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, b_from_logs(5.0, f64::INFINITY, ep));
    }

    #[test]
    fn b_rejects_bad_input() {
        assert!(compute_b(1, 16, 0.1, 0.5).is_err());
        assert!(compute_b(10, 1, 0.1, 0.5).is_err());
        assert!(compute_b(10, 16, 0.3, 0.5).is_err());
        assert!(compute_b(10, 16, 0.1, 1.0).is_err());
    }

    #[test]
    fn group_sum_examples() {
        let mut rng = SimRng::new(1);
        assert_eq!(estimate_group_sum(&[5.0], 3, &mut rng), 5.0);
        assert_eq!(estimate_group_sum(&[1.0; 100], 10, &mut rng), 100.0);
    }

    #[test]
    fn schedule_of_guesses() {
        assert_eq!(lambda_schedule(1), Some(16));
        assert_eq!(lambda_schedule(2), Some(65536));
        assert_eq!(lambda_schedule(3), None);
    }

    #[test]
    fn ceil_log2_values() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(8), 3);
        assert_eq!(ceil_log2(9), 4);
    }

    #[test]
    fn star_phase_matches_local() {
        let g = gen_star(5, 5).unwrap();
        let (frac, cost) = run_mpc(&g, 0.1, 0.5, 16, 3).unwrap();
        assert_eq!(frac.weight(), 5.0);
        assert!(cost.phases >= 1);
    }

    #[test]
    fn k12_two_rounds_match_local() {
        let g = build_instance(1, 2, &[(0, 1), (0, 2)], &[1, 1]).unwrap();
        let mut config = MpcConfig::new(3, 0.1, 0.5, 16, 0).unwrap();
        config.b = 2;
        config.tau = 2;
        let run = run_mpc_with_config(&g, &config).unwrap();
        assert_eq!(run.state.exponent, vec![2, 2]);
        let local = run_rounds(&g, &EngineConfig::uniform(0.1, 2)).unwrap();
        assert_eq!(run.state.exponent, local.exponent);
        assert_eq!(run.cost.phases, 1);
        assert_eq!(run.cost.mpc_rounds, 2);
    }

    #[test]
    fn k21_weight_one() {
        let g = build_instance(2, 1, &[(0, 2), (1, 2)], &[1]).unwrap();
        let (frac, _) = run_mpc(&g, 0.1, 0.5, 16, 0).unwrap();
        assert!((frac.weight() - 1.0).abs() < 1e-6);
        assert!(validate_fractional(&g, &frac).0);
    }

    #[test]
    fn partial_last_phase() {
        let g = build_instance(1, 2, &[(0, 1), (0, 2)], &[1, 1]).unwrap();
        let mut config = MpcConfig::new(3, 0.1, 0.5, 16, 0).unwrap();
        config.b = 3;
        config.tau = 7;
        let run = run_mpc_with_config(&g, &config).unwrap();
        assert_eq!(run.state.round, 7);
        assert_eq!(run.cost.phases, 3);
        assert_eq!(run.state.reserved.len(), 1);
    }

    #[test]
    fn guessing_on_trivial_inputs() {
        let star = gen_star(5, 5).unwrap();
        let out = run_mpc_with_guessing(&star, 0.1, 0.5, 1).unwrap();
        assert_eq!(out.lambda_used, 16);
        assert_eq!(out.attempts, 1);
        assert_eq!(out.allocation.weight(), 5.0);

        let empty = build_instance(3, 3, &[], &[1, 1, 1]).unwrap();
        let out = run_mpc_with_guessing(&empty, 0.1, 0.5, 1).unwrap();
        assert_eq!(out.allocation.weight(), 0.0);
        assert_eq!(out.lambda_used, 16);
    }
}
