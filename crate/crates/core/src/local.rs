//! Exact proportional allocation.
//!
//! Every right vertex `v` carries a priority `β_v = (1+ε)^j`, stored as the
//! integer exponent `j`. A round computes
//!
//! ```text
//! x_{u,v}  = β_v / Σ_{v' ∈ N(u)} β_{v'}          for every edge
//! alloc_v  = Σ_{u ∈ N(v)} x_{u,v}
//! j_v     += +1  if alloc_v <= C_v / (1 + k_{v,r} ε)
//!            -1  if alloc_v >= C_v (1 + k_{v,r} ε)
//! ```
//!
//! with `k_{v,r} = 1` for the uniform schedule. After the last round the
//! fractions of over-allocated vertices are scaled down by `C_v / alloc_v`.
//!
//! The state keeps the fractions and loads of the last round (computed before
//! that round's exponent update), which is what the final scaling consumes.
//! Sums are compensated and run in ascending vertex-id order.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{AllocationInstance, FractionalAllocation};
use crate::sum::{compensated_sum, Compensated};

/// `(1+ε)^j` by binary exponentiation on `1+ε`; negative exponents take the
/// reciprocal of the positive power. Every caller goes through this function
/// (or a [`Powers`] table built from it), so equal exponents give equal bits.
pub fn beta_power(epsilon: f64, exponent: i32) -> f64 {
    let base = 1.0 + epsilon;
    let mut n = exponent.unsigned_abs();
    let mut result = 1.0;
    let mut square = base;
    while n > 0 {
        if n & 1 == 1 {
            result *= square;
        }
        n >>= 1;
        if n > 0 {
            square *= square;
        }
    }
    if exponent < 0 {
        1.0 / result
    } else {
        result
    }
}

/// Precomputed `(1+ε)^j` for `j` in `[-radius, radius]`.
#[derive(Clone, Debug)]
pub struct Powers {
    epsilon: f64,
    radius: i32,
    table: Vec<f64>,
}

impl Powers {
    pub fn new(epsilon: f64, radius: u32) -> Self {
        let radius = radius.min(i32::MAX as u32 / 2) as i32;
        let table = (-radius..=radius).map(|j| beta_power(epsilon, j)).collect();
        Self { epsilon, radius, table }
    }

    #[inline]
    pub fn get(&self, exponent: i32) -> f64 {
        if exponent.abs() <= self.radius {
            self.table[(exponent + self.radius) as usize]
        } else {
            beta_power(self.epsilon, exponent)
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// `⌈log_{1+ε}(4λ/ε)⌉ + 1`, the round count that certifies a `2 + 10ε` approximation
/// on graphs of arboricity at most `λ`.
pub fn default_tau(epsilon: f64, lambda: u32) -> u32 {
    let rounds = ((4.0 * lambda.max(1) as f64 / epsilon).ln() / (1.0 + epsilon).ln()).ceil();
    rounds.max(0.0) as u32 + 1
}

/// `⌈2·log₂(2|R|/ε)/ε²⌉ + ⌈1/ε⌉`, the round count of the `1 + O(ε)` regime.
pub fn high_accuracy_tau(epsilon: f64, right_count: usize) -> u32 {
    let r = right_count.max(1) as f64;
    let main = (2.0 * (2.0 * r / epsilon).log2() / (epsilon * epsilon)).ceil();
    main as u32 + (1.0 / epsilon).ceil() as u32
}

/// Per-vertex, per-round threshold multipliers `k_{v,r}`.
#[derive(Clone, Debug, PartialEq)]
pub enum ThresholdSchedule {
    /// `k_{v,r} = 1` everywhere.
    Uniform,
    /// `table[r - 1][right_index(v)]` for rounds `r = 1..=table.len()`.
    PerVertexRound(Vec<Vec<f64>>),
}

impl ThresholdSchedule {
    #[inline]
    pub fn k(&self, round: u32, right_index: usize) -> f64 {
        match self {
            ThresholdSchedule::Uniform => 1.0,
            ThresholdSchedule::PerVertexRound(table) => table[round as usize - 1][right_index],
        }
    }

    /// Smallest `k >= 1` with `1/k <= k_{v,r} <= k` for every entry.
    pub fn bound(&self) -> f64 {
        match self {
            ThresholdSchedule::Uniform => 1.0,
            ThresholdSchedule::PerVertexRound(table) => {
                table.iter().flatten().fold(1.0, |acc: f64, &k| acc.max(k).max(1.0 / k))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    pub epsilon: f64,
    pub tau: u32,
    pub schedule: ThresholdSchedule,
}

impl EngineConfig {
    pub fn uniform(epsilon: f64, tau: u32) -> Self {
        Self {
            epsilon,
            tau,
            schedule: ThresholdSchedule::Uniform,
        }
    }

    pub fn validate(&self, instance: &AllocationInstance) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::InvalidConfig(format!("epsilon {} outside (0, 1]", self.epsilon)));
        }
        if self.tau == 0 {
            return Err(Error::InvalidConfig("tau must be >= 1".into()));
        }
        if let ThresholdSchedule::PerVertexRound(table) = &self.schedule {
            if table.len() < self.tau as usize {
                return Err(Error::InvalidConfig(format!(
                    "schedule covers {} rounds, tau is {}",
                    table.len(),
                    self.tau
                )));
            }
            for row in table {
                if row.len() != instance.right_count() {
                    return Err(Error::InvalidConfig("schedule row length differs from |R|".into()));
                }
                if row.iter().any(|&k| !(k.is_finite() && k > 0.0)) {
                    return Err(Error::InvalidConfig("schedule entries must be positive".into()));
                }
            }
            let any_non_unit = table.iter().flatten().any(|&k| k != 1.0);
            let bound = self.schedule.bound();
            if any_non_unit && self.epsilon > 1.0 / bound {
                return Err(Error::InvalidConfig(format!(
                    "epsilon {} exceeds 1/k = {} for schedule bound k = {bound}",
                    self.epsilon,
                    1.0 / bound
                )));
            }
        }
        Ok(())
    }
}

/// Live state of the iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorityState {
    pub epsilon: f64,
    /// `β_v = (1+ε)^exponent[right_index(v)]`.
    pub exponent: Vec<i32>,
    /// Completed rounds.
    pub round: u32,
    /// Load per right vertex from the last completed round.
    pub alloc: Vec<f64>,
    /// Per-edge fractions from the last completed round.
    pub x: Vec<f64>,
}

impl PriorityState {
    pub fn fresh(instance: &AllocationInstance, epsilon: f64) -> Self {
        Self {
            epsilon,
            exponent: vec![0; instance.right_count()],
            round: 0,
            alloc: vec![0.0; instance.right_count()],
            x: vec![0.0; instance.edge_count()],
        }
    }
}

/// Fills `x` with the proportional fractions for the given exponents and returns
/// the per-left-vertex denominators `Σ_{v ∈ N(u)} β_v` (0 for isolated `u`).
pub fn proportional_fractions(
    instance: &AllocationInstance,
    exponent: &[i32],
    powers: &Powers,
    x: &mut [f64],
) -> Vec<f64> {
    let nl = instance.left_count();
    let mut denominators = vec![0.0; nl];
    for u in instance.left_vertices() {
        let nbrs = instance.neighbors(u);
        if nbrs.is_empty() {
            continue;
        }
        let denom = compensated_sum(nbrs.iter().map(|&(v, _)| powers.get(exponent[v - nl])));
        denominators[u] = denom;
        for &(v, e) in nbrs {
            x[e] = powers.get(exponent[v - nl]) / denom;
        }
    }
    denominators
}

/// Fills `alloc` with `Σ_{u ∈ N(v)} x_{u,v}` per right vertex.
pub fn loads(instance: &AllocationInstance, x: &[f64], alloc: &mut [f64]) {
    let nl = instance.left_count();
    for v in instance.right_vertices() {
        alloc[v - nl] = compensated_sum(instance.neighbors(v).iter().map(|&(_, e)| x[e]));
    }
}

/// Direction of one exponent update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    Up,
    Down,
    Stay,
}

impl Step {
    pub fn delta(self) -> i32 {
        match self {
            Step::Up => 1,
            Step::Down => -1,
            Step::Stay => 0,
        }
    }
}

/// Inclusive threshold rule with multiplier `k`.
#[inline]
pub fn threshold_step(alloc: f64, capacity: f64, epsilon: f64, k: f64) -> Step {
    let factor = 1.0 + k * epsilon;
    if alloc <= capacity / factor {
        Step::Up
    } else if alloc >= capacity * factor {
        Step::Down
    } else {
        Step::Stay
    }
}

/// One row of the per-round trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundStats {
    pub round: u32,
    pub num_increased: usize,
    pub num_decreased: usize,
    pub match_weight: f64,
    pub top_size: usize,
    pub bottom_size: usize,
    pub top_nbhd_size: usize,
}

/// Writes the per-round trace as CSV with a header row.
pub fn write_trace<W: Write>(writer: W, rows: &[RoundStats]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record([
        "round",
        "num_increased",
        "num_decreased",
        "match_weight",
        "top_size",
        "bottom_size",
        "top_nbhd_size",
    ])?;
    for r in rows {
        out.write_record([
            r.round.to_string(),
            r.num_increased.to_string(),
            r.num_decreased.to_string(),
            crate::experiment::fmt_float(r.match_weight),
            r.top_size.to_string(),
            r.bottom_size.to_string(),
            r.top_nbhd_size.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Round-by-round driver.
pub struct LocalEngine<'a> {
    instance: &'a AllocationInstance,
    config: EngineConfig,
    powers: Powers,
    state: PriorityState,
}

impl<'a> LocalEngine<'a> {
    /// `config.tau` sizes the power table and bounds the schedule; [`Self::step`]
    /// may run past it under the uniform schedule.
    pub fn new(instance: &'a AllocationInstance, config: EngineConfig) -> Result<Self> {
        config.validate(instance)?;
        let powers = Powers::new(config.epsilon, config.tau + 1);
        let state = PriorityState::fresh(instance, config.epsilon);
        Ok(Self {
            instance,
            config,
            powers,
            state,
        })
    }

    pub fn state(&self) -> &PriorityState {
        &self.state
    }

    pub fn into_state(self) -> PriorityState {
        self.state
    }

    /// Runs one round and returns its statistics (levels after the update).
    pub fn step(&mut self) -> RoundStats {
        let instance = self.instance;
        let round = self.state.round + 1;
        proportional_fractions(instance, &self.state.exponent, &self.powers, &mut self.state.x);
        loads(instance, &self.state.x, &mut self.state.alloc);
        let (mut up, mut down) = (0, 0);
        for (i, exponent) in self.state.exponent.iter_mut().enumerate() {
            let cap = instance.capacities()[i] as f64;
            let k = self.config.schedule.k(round, i);
            match threshold_step(self.state.alloc[i], cap, self.config.epsilon, k) {
                Step::Up => {
                    *exponent += 1;
                    up += 1;
                }
                Step::Down => {
                    *exponent -= 1;
                    down += 1;
                }
                Step::Stay => {}
            }
        }
        self.state.round = round;
        let view = level_sets(instance, &self.state);
        RoundStats {
            round,
            num_increased: up,
            num_decreased: down,
            match_weight: match_weight(instance, &self.state),
            top_size: view.top.len(),
            bottom_size: view.bottom.len(),
            top_nbhd_size: view.top_neighborhood.len(),
        }
    }

    /// Runs the remaining rounds up to `tau`, returning their statistics.
    pub fn run(&mut self) -> Vec<RoundStats> {
        let mut stats = Vec::new();
        while self.state.round < self.config.tau {
            stats.push(self.step());
        }
        stats
    }
}

/// Runs `config.tau` rounds from the all-ones priorities.
pub fn run_rounds(instance: &AllocationInstance, config: &EngineConfig) -> Result<PriorityState> {
    let mut engine = LocalEngine::new(instance, config.clone())?;
    engine.run();
    Ok(engine.into_state())
}

/// Same as [`run_rounds`], also returning the exponent vector after every round.
pub fn run_rounds_with_history(
    instance: &AllocationInstance,
    config: &EngineConfig,
) -> Result<(PriorityState, Vec<Vec<i32>>)> {
    let mut engine = LocalEngine::new(instance, config.clone())?;
    let mut history = Vec::with_capacity(config.tau as usize);
    while engine.state.round < config.tau {
        engine.step();
        history.push(engine.state.exponent.clone());
    }
    Ok((engine.into_state(), history))
}

/// Scales the fractions of over-allocated vertices by `C_v / alloc_v`.
pub fn finalize(instance: &AllocationInstance, state: &PriorityState) -> FractionalAllocation {
    let nl = instance.left_count();
    let mut values = state.x.clone();
    for v in instance.right_vertices() {
        let i = v - nl;
        let cap = instance.capacities()[i] as f64;
        let alloc = state.alloc[i];
        if alloc > cap {
            let scale = cap / alloc;
            for &(_, e) in instance.neighbors(v) {
                values[e] *= scale;
            }
        }
    }
    FractionalAllocation::from_values(values)
}

/// `Σ_v min(C_v, alloc_v)`.
pub fn match_weight(instance: &AllocationInstance, state: &PriorityState) -> f64 {
    compensated_sum(
        instance
            .capacities()
            .iter()
            .zip(&state.alloc)
            .map(|(&c, &a)| a.min(c as f64)),
    )
}

/// Partition of `R` by exponent after `round` completed rounds.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSetView {
    pub round: u32,
    /// `levels[j + round]` holds the right vertices (global ids) with exponent `j`.
    pub levels: Vec<Vec<usize>>,
    /// Exponent `+round`.
    pub top: Vec<usize>,
    /// Exponent `-round`.
    pub bottom: Vec<usize>,
    /// `N(top)`, ascending.
    pub top_neighborhood: Vec<usize>,
}

impl LevelSetView {
    pub fn level(&self, exponent: i32) -> &[usize] {
        let idx = exponent + self.round as i32;
        if idx < 0 || idx as usize >= self.levels.len() {
            &[]
        } else {
            &self.levels[idx as usize]
        }
    }
}

pub fn level_sets(instance: &AllocationInstance, state: &PriorityState) -> LevelSetView {
    let nl = instance.left_count();
    let r = state.round as i32;
    let mut levels = vec![Vec::new(); 2 * state.round as usize + 1];
    for (i, &j) in state.exponent.iter().enumerate() {
        let idx = (j + r).clamp(0, 2 * r) as usize;
        levels[idx].push(nl + i);
    }
    let top = levels[2 * state.round as usize].clone();
    let bottom = levels[0].clone();
    let mut in_nbhd = vec![false; nl];
    for &v in &top {
        for &(u, _) in instance.neighbors(v) {
            in_nbhd[u] = true;
        }
    }
    let top_neighborhood = (0..nl).filter(|&u| in_nbhd[u]).collect();
    LevelSetView {
        round: state.round,
        levels,
        top,
        bottom,
        top_neighborhood,
    }
}

/// The arboricity-free stopping rule: `|N(top)| <= |bottom|`, or the load on
/// vertices outside the bottom level reaches `(1 - ε/2)·|N(top)|`.
pub fn termination_check(instance: &AllocationInstance, state: &PriorityState, epsilon: f64) -> bool {
    if state.round == 0 {
        return false;
    }
    let view = level_sets(instance, state);
    let nbhd = view.top_neighborhood.len();
    if nbhd <= view.bottom.len() {
        return true;
    }
    let bottom_exponent = -(state.round as i32);
    let mut outside_bottom = Compensated::new();
    for (i, &j) in state.exponent.iter().enumerate() {
        if j != bottom_exponent {
            outside_bottom.add(state.alloc[i]);
        }
    }
    outside_bottom.value() >= (1.0 - epsilon / 2.0) * nbhd as f64
}

#[derive(Clone, Debug)]
pub struct AutoTermination {
    pub state: PriorityState,
    pub allocation: FractionalAllocation,
    pub rounds_used: u32,
    /// `max_rounds` ran out before the stopping rule fired.
    pub budget_exhausted: bool,
    pub trace: Vec<RoundStats>,
}

/// Runs rounds until [`termination_check`] fires or `max_rounds` is reached.
pub fn run_until_terminated(instance: &AllocationInstance, epsilon: f64, max_rounds: u32) -> Result<AutoTermination> {
    if max_rounds == 0 {
        return Err(Error::InvalidConfig("max_rounds must be >= 1".into()));
    }
    let mut engine = LocalEngine::new(instance, EngineConfig::uniform(epsilon, max_rounds))?;
    let mut trace = Vec::new();
    let mut fired = false;
    while engine.state.round < max_rounds {
        trace.push(engine.step());
        if termination_check(instance, &engine.state, epsilon) {
            fired = true;
            break;
        }
    }
    let state = engine.into_state();
    Ok(AutoTermination {
        allocation: finalize(instance, &state),
        rounds_used: state.round,
        budget_exhausted: !fired,
        state,
        trace,
    })
}
