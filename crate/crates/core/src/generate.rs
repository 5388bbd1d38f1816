//! Seeded instance generators.
//!
//! Every generator is a pure function of its [`GenSpec`]; all randomness comes
//! from [`SimRng`] streams keyed by the `GenSpec` seed.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::AllocationInstance;
use crate::rng::SimRng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GenKind {
    ForestUnion,
    Star,
    RandomBipartite,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CapacityRule {
    AllOne,
    /// Uniform in `1..=max`.
    UniformRandom(u32),
    /// `max(1, ceil(deg(v) / 2))`.
    DegreeProportional,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EdgeDensity {
    Probability(f64),
    TargetCount(usize),
}

/// Generator parameters. For stars, `left_count` is the leaf count and the
/// center capacity is `star_capacity`.
#[derive(Clone, Debug, PartialEq)]
pub struct GenSpec {
    pub kind: GenKind,
    pub left_count: usize,
    pub right_count: usize,
    pub lambda: u32,
    pub density: EdgeDensity,
    pub capacity_rule: CapacityRule,
    pub star_capacity: u32,
    pub seed: u64,
}

impl GenSpec {
    pub fn forest_union(left_count: usize, right_count: usize, lambda: u32, seed: u64) -> Self {
        Self {
            kind: GenKind::ForestUnion,
            left_count,
            right_count,
            lambda,
            density: EdgeDensity::Probability(0.0),
            capacity_rule: CapacityRule::AllOne,
            star_capacity: 1,
            seed,
        }
    }

    pub fn random_bipartite(left_count: usize, right_count: usize, p: f64, seed: u64) -> Self {
        Self {
            kind: GenKind::RandomBipartite,
            density: EdgeDensity::Probability(p),
            ..Self::forest_union(left_count, right_count, 1, seed)
        }
    }

    pub fn star(leaf_count: usize, center_capacity: u32) -> Self {
        Self {
            kind: GenKind::Star,
            star_capacity: center_capacity,
            ..Self::forest_union(leaf_count, 1, 1, 0)
        }
    }

    pub fn with_capacity_rule(mut self, rule: CapacityRule) -> Self {
        self.capacity_rule = rule;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.lambda == 0 {
            return Err(Error::InvalidConfig("lambda must be >= 1".into()));
        }
        if let EdgeDensity::Probability(p) = self.density {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("edge probability {p} outside [0, 1]")));
            }
        }
        if let CapacityRule::UniformRandom(0) = self.capacity_rule {
            return Err(Error::InvalidConfig("uniform capacity max must be >= 1".into()));
        }
        if self.kind == GenKind::Star && (self.left_count == 0 || self.star_capacity == 0) {
            return Err(Error::InvalidConfig("star needs >= 1 leaf and capacity >= 1".into()));
        }
        Ok(())
    }
}

/// Spec strings look like `forest_union:nl=100,nr=100,lambda=3,cap=all_one,seed=7`.
///
/// Recognized keys: `nl`, `nr`, `n` (sets both sides to `n/2`), `lambda`, `p`,
/// `m`, `cap` (`all_one`, `uniform<MAX>`, `degree`), `seed`, and for stars
/// `leaves` and `center_cap`.
impl FromStr for GenSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidConfig(format!("generator spec `{s}`: {msg}"));
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut spec = match kind.trim() {
            "forest_union" => GenSpec::forest_union(10, 10, 1, 0),
            "star" => GenSpec::star(1, 1),
            "random_bipartite" => GenSpec::random_bipartite(10, 10, 0.1, 0),
            other => return Err(bad(format!("unknown generator `{other}`"))),
        };
        for pair in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got `{pair}`")))?;
            let int = || {
                value
                    .parse::<usize>()
                    .map_err(|_| bad(format!("bad integer `{value}`")))
            };
            match key {
                "nl" | "leaves" => spec.left_count = int()?,
                "nr" => spec.right_count = int()?,
                "n" => {
                    let n = int()?;
                    spec.left_count = n / 2;
                    spec.right_count = n - n / 2;
                }
                "lambda" => spec.lambda = int()? as u32,
                "center_cap" => spec.star_capacity = int()? as u32,
                "seed" => spec.seed = value.parse().map_err(|_| bad(format!("bad seed `{value}`")))?,
                "p" => {
                    spec.density =
                        EdgeDensity::Probability(value.parse().map_err(|_| bad(format!("bad probability `{value}`")))?)
                }
                "m" => spec.density = EdgeDensity::TargetCount(int()?),
                "cap" => {
                    spec.capacity_rule = match value {
                        "all_one" => CapacityRule::AllOne,
                        "degree" | "degree_proportional" => CapacityRule::DegreeProportional,
                        v if v.starts_with("uniform") => CapacityRule::UniformRandom(
                            v["uniform".len()..]
                                .parse()
                                .map_err(|_| bad(format!("bad capacity rule `{v}`")))?,
                        ),
                        v => return Err(bad(format!("bad capacity rule `{v}`"))),
                    }
                }
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        if spec.kind == GenKind::Star {
            spec.right_count = 1;
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for GenSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cap = match self.capacity_rule {
            CapacityRule::AllOne => "all_one".to_string(),
            CapacityRule::UniformRandom(m) => format!("uniform{m}"),
            CapacityRule::DegreeProportional => "degree".to_string(),
        };
        match self.kind {
            GenKind::Star => write!(f, "star:leaves={},center_cap={}", self.left_count, self.star_capacity),
            GenKind::ForestUnion => write!(
                f,
                "forest_union:nl={},nr={},lambda={},cap={cap},seed={}",
                self.left_count, self.right_count, self.lambda, self.seed
            ),
            GenKind::RandomBipartite => {
                let density = match self.density {
                    EdgeDensity::Probability(p) => format!("p={p}"),
                    EdgeDensity::TargetCount(m) => format!("m={m}"),
                };
                write!(
                    f,
                    "random_bipartite:nl={},nr={},{density},cap={cap},seed={}",
                    self.left_count, self.right_count, self.seed
                )
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GenWarning {
    /// `lambda >= min(nL, nR)`: the forests cannot all be spanning, so the
    /// hint overstates the density actually produced.
    InfeasibleSpec,
}

#[derive(Clone, Debug)]
pub struct Generated {
    pub instance: AllocationInstance,
    pub warning: Option<GenWarning>,
}

/// Dispatches on `spec.kind`.
pub fn generate(spec: &GenSpec) -> Result<Generated> {
    spec.validate()?;
    match spec.kind {
        GenKind::ForestUnion => gen_forest_union(spec),
        GenKind::Star => Ok(Generated {
            instance: gen_star(spec.left_count, spec.star_capacity)?,
            warning: None,
        }),
        GenKind::RandomBipartite => Ok(Generated {
            instance: gen_random_bipartite(spec)?,
            warning: None,
        }),
    }
}

/// Union of `lambda` random bipartite forests on `L ∪ R`.
///
/// Each forest visits the vertices in a fresh random order and attaches every
/// vertex to a uniformly random earlier vertex of the opposite side (if any).
/// Every vertex gets at most one parent edge, so each layer is acyclic and the
/// union has arboricity at most `lambda`. Edges repeated across layers are kept once.
pub fn gen_forest_union(spec: &GenSpec) -> Result<Generated> {
    if spec.kind != GenKind::ForestUnion {
        return Err(Error::InvalidConfig("gen_forest_union needs kind forest_union".into()));
    }
    spec.validate()?;
    let (nl, nr) = (spec.left_count, spec.right_count);
    let n = nl + nr;
    let mut edge_set = HashSet::new();
    let mut edges = Vec::new();
    for layer in 0..spec.lambda {
        let mut rng = SimRng::stream(spec.seed, &[0xF0_4E57, layer as u64]);
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let mut seen_left: Vec<usize> = Vec::new();
        let mut seen_right: Vec<usize> = Vec::new();
        for &w in &order {
            if w < nl {
                if !seen_right.is_empty() {
                    let v = seen_right[rng.index(seen_right.len())];
                    if edge_set.insert((w, v)) {
                        edges.push((w, v));
                    }
                }
                seen_left.push(w);
            } else {
                if !seen_left.is_empty() {
                    let u = seen_left[rng.index(seen_left.len())];
                    if edge_set.insert((u, w)) {
                        edges.push((u, w));
                    }
                }
                seen_right.push(w);
            }
        }
    }
    let capacities = assign_capacities(spec, nl, nr, &edges);
    let instance = AllocationInstance::new(nl, nr, edges, capacities)?.with_arboricity_hint(spec.lambda);
    let warning = (spec.lambda as usize >= nl.min(nr)).then_some(GenWarning::InfeasibleSpec);
    Ok(Generated { instance, warning })
}

/// Star with `leaf_count` leaves in `L` and one center in `R`.
pub fn gen_star(leaf_count: usize, center_capacity: u32) -> Result<AllocationInstance> {
    if leaf_count == 0 || center_capacity == 0 {
        return Err(Error::InvalidConfig("star needs >= 1 leaf and capacity >= 1".into()));
    }
    let edges = (0..leaf_count).map(|u| (u, leaf_count)).collect();
    Ok(AllocationInstance::new(leaf_count, 1, edges, vec![center_capacity])?.with_arboricity_hint(1))
}

/// Erdős–Rényi style bipartite graph: each `L × R` pair independently with
/// probability `p`, or exactly `m` distinct pairs sampled without replacement.
pub fn gen_random_bipartite(spec: &GenSpec) -> Result<AllocationInstance> {
    if spec.kind != GenKind::RandomBipartite {
        return Err(Error::InvalidConfig(
            "gen_random_bipartite needs kind random_bipartite".into(),
        ));
    }
    spec.validate()?;
    let (nl, nr) = (spec.left_count, spec.right_count);
    let mut rng = SimRng::stream(spec.seed, &[0xB1_9A27]);
    let edges: Vec<(usize, usize)> = match spec.density {
        EdgeDensity::Probability(p) => {
            let mut edges = Vec::new();
            for u in 0..nl {
                for v in nl..nl + nr {
                    if rng.bernoulli(p) {
                        edges.push((u, v));
                    }
                }
            }
            edges
        }
        EdgeDensity::TargetCount(m) => {
            let total = (nl as u64) * (nr as u64);
            if (m as u64) > total {
                return Err(Error::InvalidConfig(format!("target m={m} exceeds {total} pairs")));
            }
            // Floyd's sampling without replacement.
            let mut chosen = HashSet::with_capacity(m);
            for j in (total - m as u64)..total {
                let t = rng.below(j + 1);
                if !chosen.insert(t) {
                    chosen.insert(j);
                }
            }
            let mut picked: Vec<u64> = chosen.into_iter().collect();
            picked.sort_unstable();
            picked
                .into_iter()
                .map(|k| ((k / nr as u64) as usize, nl + (k % nr as u64) as usize))
                .collect()
        }
    };
    let capacities = assign_capacities(spec, nl, nr, &edges);
    let instance = AllocationInstance::new(nl, nr, edges, capacities)?;
    let hint = instance.degeneracy().max(1) as u32;
    Ok(instance.with_arboricity_hint(hint))
}

fn assign_capacities(spec: &GenSpec, nl: usize, nr: usize, edges: &[(usize, usize)]) -> Vec<u32> {
    match spec.capacity_rule {
        CapacityRule::AllOne => vec![1; nr],
        CapacityRule::UniformRandom(max) => {
            let mut rng = SimRng::stream(spec.seed, &[0xCA_9AC1]);
            (0..nr).map(|_| 1 + rng.below(max as u64) as u32).collect()
        }
        CapacityRule::DegreeProportional => {
            let mut degree = vec![0u32; nr];
            for &(_, v) in edges {
                degree[v - nl] += 1;
            }
            degree.into_iter().map(|d| d.div_ceil(2).max(1)).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_forest_is_a_forest() {
        let g = gen_forest_union(&GenSpec::forest_union(4, 4, 1, 0)).unwrap().instance;
        assert!(g.edge_count() <= 7);
        assert_eq!(g.degeneracy(), 1);
        assert_eq!(g.arboricity_hint(), Some(1));
    }

    #[test]
    fn three_forests_degeneracy_bound() {
        let g = gen_forest_union(&GenSpec::forest_union(100, 100, 3, 7))
            .unwrap()
            .instance;
        assert!(g.degeneracy() <= 5, "degeneracy {}", g.degeneracy());
    }

    #[test]
    fn forest_union_is_deterministic() {
        let spec = GenSpec::forest_union(30, 25, 3, 99).with_capacity_rule(CapacityRule::UniformRandom(4));
        let a = gen_forest_union(&spec).unwrap().instance;
        let b = gen_forest_union(&spec).unwrap().instance;
        assert_eq!(a, b);
        let c = gen_forest_union(&spec.clone().with_seed(100)).unwrap().instance;
        assert_ne!(a.edges(), c.edges());
    }

    #[test]
    fn infeasible_lambda_warns_but_generates() {
        let g = gen_forest_union(&GenSpec::forest_union(3, 3, 3, 1)).unwrap();
        assert_eq!(g.warning, Some(GenWarning::InfeasibleSpec));
        assert!(g.instance.edge_count() > 0);
        assert!(gen_forest_union(&GenSpec::forest_union(10, 10, 2, 1))
            .unwrap()
            .warning
            .is_none());
    }

    #[test]
    fn stars() {
        let g = gen_star(1, 1).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
        let g = gen_star(5, 2).unwrap();
        assert_eq!(g.edge_count(), 5);
        assert_eq!(g.capacity(5), 2);
        assert!(gen_star(0, 1).is_err());
    }

    #[test]
    fn random_bipartite_extremes() {
        let empty = gen_random_bipartite(&GenSpec::random_bipartite(5, 5, 0.0, 3)).unwrap();
        assert_eq!(empty.edge_count(), 0);
        let full = gen_random_bipartite(&GenSpec::random_bipartite(3, 3, 1.0, 3)).unwrap();
        assert_eq!(full.edge_count(), 9);
        assert_eq!(full.degeneracy(), 3);
        assert_eq!(full.arboricity_hint(), Some(3));
    }

    #[test]
    fn random_bipartite_is_deterministic() {
        let spec = GenSpec::random_bipartite(20, 20, 0.3, 1);
        assert_eq!(
            gen_random_bipartite(&spec).unwrap(),
            gen_random_bipartite(&spec).unwrap()
        );
    }

    #[test]
    fn target_edge_count() {
        let spec = GenSpec {
            density: EdgeDensity::TargetCount(37),
            ..GenSpec::random_bipartite(10, 8, 0.0, 5)
        };
        let g = gen_random_bipartite(&spec).unwrap();
        assert_eq!(g.edge_count(), 37);
        let too_many = GenSpec {
            density: EdgeDensity::TargetCount(81),
            ..spec
        };
        assert!(gen_random_bipartite(&too_many).is_err());
    }

    #[test]
    fn degree_proportional_capacities() {
        let spec = GenSpec::forest_union(40, 20, 2, 4).with_capacity_rule(CapacityRule::DegreeProportional);
        let g = gen_forest_union(&spec).unwrap().instance;
        for v in g.right_vertices() {
            assert_eq!(g.capacity(v), (g.degree(v) as u32).div_ceil(2).max(1));
        }
    }

    #[test]
    fn spec_strings() {
        let spec: GenSpec = "forest_union:nl=100,nr=80,lambda=3,cap=uniform4,seed=7"
            .parse()
            .unwrap();
        assert_eq!(spec.kind, GenKind::ForestUnion);
        assert_eq!(
            (spec.left_count, spec.right_count, spec.lambda, spec.seed),
            (100, 80, 3, 7)
        );
        assert_eq!(spec.capacity_rule, CapacityRule::UniformRandom(4));
        assert_eq!(spec.to_string().parse::<GenSpec>().unwrap(), spec);
        let star: GenSpec = "star:leaves=5,center_cap=2".parse().unwrap();
        assert_eq!(generate(&star).unwrap().instance, gen_star(5, 2).unwrap());
        assert!("forest_union:lambda=0".parse::<GenSpec>().is_err());
        assert!("random_bipartite:p=1.5".parse::<GenSpec>().is_err());
        assert!("torus:n=4".parse::<GenSpec>().is_err());
        assert!("forest_union:bogus=1".parse::<GenSpec>().is_err());
    }
}
