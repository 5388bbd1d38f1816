//! Bipartite allocation instances, allocations, validators and the text format.
//!
//! Vertex ids are dense: the left side `L` occupies `0..left_count` and the right
//! side `R` occupies `left_count..left_count + right_count`. Left vertices have
//! implicit capacity 1; every right vertex `v` has capacity `C_v >= 1`.
//!
//! Adjacency lists are sorted by ascending neighbor id, which fixes the
//! iteration (and summation) order used everywhere else in the crate.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::sum::compensated_sum;

/// Relative slack used by the feasibility validators.
pub const FEASIBILITY_SLACK: f64 = 1e-9;

/// An immutable bipartite allocation instance.
#[derive(Clone, Debug, PartialEq)]
pub struct AllocationInstance {
    left_count: usize,
    right_count: usize,
    edges: Vec<(usize, usize)>,
    capacities: Vec<u32>,
    arboricity_hint: Option<u32>,
    // per vertex: (neighbor id, edge index), ascending by neighbor id
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl AllocationInstance {
    /// Validates and builds an instance.
    ///
    /// `edges` are `(u, v)` pairs of global ids with `u < left_count` and
    /// `left_count <= v < left_count + right_count`; `capacities[i]` is the
    /// capacity of right vertex `left_count + i`.
    pub fn new(
        left_count: usize,
        right_count: usize,
        edges: Vec<(usize, usize)>,
        capacities: Vec<u32>,
    ) -> Result<Self> {
        if capacities.len() != right_count {
            return Err(Error::MalformedInstance(format!(
                "expected {right_count} capacities, got {}",
                capacities.len()
            )));
        }
        if let Some(i) = capacities.iter().position(|&c| c == 0) {
            return Err(Error::MalformedInstance(format!(
                "vertex {} has zero capacity",
                left_count + i
            )));
        }
        let n = left_count + right_count;
        let mut adjacency = vec![Vec::new(); n];
        for (idx, &(u, v)) in edges.iter().enumerate() {
            if u >= left_count {
                return Err(Error::MalformedInstance(format!(
                    "edge {idx}: left endpoint {u} not in 0..{left_count}"
                )));
            }
            if v < left_count || v >= n {
                return Err(Error::MalformedInstance(format!(
                    "edge {idx}: right endpoint {v} not in {left_count}..{n}"
                )));
            }
            adjacency[u].push((v, idx));
            adjacency[v].push((u, idx));
        }
        for (w, list) in adjacency.iter_mut().enumerate() {
            list.sort_unstable();
            if let Some(pair) = list.windows(2).find(|p| p[0].0 == p[1].0) {
                let (a, b) = if w < left_count { (w, pair[0].0) } else { (pair[0].0, w) };
                return Err(Error::MalformedInstance(format!("duplicate edge ({a}, {b})")));
            }
        }
        Ok(Self {
            left_count,
            right_count,
            edges,
            capacities,
            arboricity_hint: None,
            adjacency,
        })
    }

    /// Attaches a known upper bound on the arboricity.
    pub fn with_arboricity_hint(mut self, lambda: u32) -> Self {
        self.arboricity_hint = Some(lambda.max(1));
        self
    }

    pub fn left_count(&self) -> usize {
        self.left_count
    }

    pub fn right_count(&self) -> usize {
        self.right_count
    }

    pub fn vertex_count(&self) -> usize {
        self.left_count + self.right_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, idx: usize) -> (usize, usize) {
        self.edges[idx]
    }

    pub fn arboricity_hint(&self) -> Option<u32> {
        self.arboricity_hint
    }

    pub fn is_left(&self, w: usize) -> bool {
        w < self.left_count
    }

    pub fn left_vertices(&self) -> std::ops::Range<usize> {
        0..self.left_count
    }

    pub fn right_vertices(&self) -> std::ops::Range<usize> {
        self.left_count..self.vertex_count()
    }

    /// Index of a right vertex into per-`R` arrays.
    #[inline]
    pub fn right_index(&self, v: usize) -> usize {
        debug_assert!(v >= self.left_count);
        v - self.left_count
    }

    /// Capacity of any vertex (1 for left vertices).
    #[inline]
    pub fn capacity(&self, w: usize) -> u32 {
        if w < self.left_count {
            1
        } else {
            self.capacities[w - self.left_count]
        }
    }

    /// Capacities of right vertices, indexed by `right_index`.
    pub fn capacities(&self) -> &[u32] {
        &self.capacities
    }

    /// `(neighbor, edge index)` pairs, ascending by neighbor id.
    #[inline]
    pub fn neighbors(&self, w: usize) -> &[(usize, usize)] {
        &self.adjacency[w]
    }

    #[inline]
    pub fn degree(&self, w: usize) -> usize {
        self.adjacency[w].len()
    }

    /// Sparsity certificate: the degeneracy, computed by min-degree peeling.
    ///
    /// Satisfies `λ <= degeneracy <= 2λ - 1` for arboricity `λ >= 1`.
    pub fn degeneracy(&self) -> usize {
        degeneracy(self)
    }

    /// Upper bound on the arboricity: the hint if present, otherwise the degeneracy.
    pub fn arboricity_bound(&self) -> u32 {
        self.arboricity_hint.unwrap_or_else(|| self.degeneracy().max(1) as u32)
    }

    /// Serializes the instance in the line-oriented text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "alloc {} {} {}",
            self.left_count,
            self.right_count,
            self.edges.len()
        );
        for (i, c) in self.capacities.iter().enumerate() {
            let _ = writeln!(out, "cap {} {}", self.left_count + i, c);
        }
        for &(u, v) in &self.edges {
            let _ = writeln!(out, "edge {u} {v}");
        }
        out
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    /// Parses the text format. Blank lines and `#` comments are ignored; anything
    /// else that deviates from the format is rejected.
    pub fn read_text<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = Vec::new();
        for (no, line) in reader.lines().enumerate() {
            let line = line?;
            let content = match line.find('#') {
                Some(i) => &line[..i],
                None => &line[..],
            };
            let content = content.trim();
            if !content.is_empty() {
                lines.push((no + 1, content.to_string()));
            }
        }
        let malformed = |no: usize, msg: &str| Error::MalformedInstance(format!("line {no}: {msg}"));
        let mut it = lines.into_iter();
        let (no, header) = it
            .next()
            .ok_or_else(|| Error::MalformedInstance("empty input".into()))?;
        let fields =
            parse_fields(&header, "alloc", 3).ok_or_else(|| malformed(no, "expected `alloc <nL> <nR> <m>`"))?;
        let (nl, nr, m) = (fields[0], fields[1], fields[2]);
        let mut capacities = vec![0u32; nr];
        let mut seen = vec![false; nr];
        for _ in 0..nr {
            let (no, line) = it
                .next()
                .ok_or_else(|| Error::MalformedInstance("missing cap lines".into()))?;
            let f = parse_fields(&line, "cap", 2).ok_or_else(|| malformed(no, "expected `cap <v> <C_v>`"))?;
            let (v, c) = (f[0], f[1]);
            if v < nl || v >= nl + nr {
                return Err(malformed(no, "capacity for a vertex outside R"));
            }
            if seen[v - nl] {
                return Err(malformed(no, "duplicate capacity entry"));
            }
            let c = u32::try_from(c).map_err(|_| malformed(no, "capacity out of range"))?;
            seen[v - nl] = true;
            capacities[v - nl] = c;
        }
        let mut edges = Vec::with_capacity(m);
        for _ in 0..m {
            let (no, line) = it
                .next()
                .ok_or_else(|| Error::MalformedInstance("missing edge lines".into()))?;
            let f = parse_fields(&line, "edge", 2).ok_or_else(|| malformed(no, "expected `edge <u> <v>`"))?;
            edges.push((f[0], f[1]));
        }
        if let Some((no, _)) = it.next() {
            return Err(malformed(no, "trailing content"));
        }
        Self::new(nl, nr, edges, capacities)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::read_text(text.as_bytes())
    }
}

fn parse_fields(line: &str, keyword: &str, count: usize) -> Option<Vec<usize>> {
    let mut parts = line.split_whitespace();
    if parts.next()? != keyword {
        return None;
    }
    let values: Vec<usize> = parts.map(|p| p.parse().ok()).collect::<Option<_>>()?;
    (values.len() == count).then_some(values)
}

/// Convenience constructor mirroring [`AllocationInstance::new`].
pub fn build_instance(
    left_count: usize,
    right_count: usize,
    edges: &[(usize, usize)],
    capacities: &[u32],
) -> Result<AllocationInstance> {
    AllocationInstance::new(left_count, right_count, edges.to_vec(), capacities.to_vec())
}

/// Degeneracy via bucket-queue minimum-degree peeling (Matula–Beck).
pub fn degeneracy(instance: &AllocationInstance) -> usize {
    let n = instance.vertex_count();
    if n == 0 {
        return 0;
    }
    let mut degree: Vec<usize> = (0..n).map(|w| instance.degree(w)).collect();
    let max_degree = degree.iter().copied().max().unwrap_or(0);
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); max_degree + 1];
    for (w, &d) in degree.iter().enumerate() {
        buckets[d].push(w);
    }
    let mut removed = vec![false; n];
    let mut result = 0;
    let mut cursor = 0;
    for _ in 0..n {
        // Lazy deletion: stale bucket entries are skipped.
        let w = loop {
            while buckets[cursor].is_empty() {
                cursor += 1;
            }
            let w = buckets[cursor].pop().unwrap();
            if !removed[w] && degree[w] == cursor {
                break w;
            }
        };
        result = result.max(cursor);
        removed[w] = true;
        for &(x, _) in instance.neighbors(w) {
            if !removed[x] {
                degree[x] -= 1;
                buckets[degree[x]].push(x);
                if degree[x] < cursor {
                    cursor = degree[x];
                }
            }
        }
    }
    result
}

/// A set of chosen edges, stored as sorted edge indices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IntegralAllocation {
    edges: Vec<usize>,
}

impl IntegralAllocation {
    pub fn new(mut edges: Vec<usize>) -> Self {
        edges.sort_unstable();
        edges.dedup();
        Self { edges }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, edge: usize) -> bool {
        self.edges.binary_search(&edge).is_ok()
    }
}

/// Per-edge fractional values with a cached total weight.
#[derive(Clone, Debug, PartialEq)]
pub struct FractionalAllocation {
    values: Vec<f64>,
    weight: f64,
}

impl FractionalAllocation {
    pub fn from_values(values: Vec<f64>) -> Self {
        let weight = compensated_sum(values.iter().copied());
        Self { values, weight }
    }

    pub fn zeros(edge_count: usize) -> Self {
        Self::from_values(vec![0.0; edge_count])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, edge: usize) -> f64 {
        self.values.get(edge).copied().unwrap_or(0.0)
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// `true` iff every left vertex has at most one chosen edge and every right
/// vertex `v` at most `C_v`. Out-of-range edge indices make the allocation invalid.
pub fn validate_integral(instance: &AllocationInstance, alloc: &IntegralAllocation) -> bool {
    let mut load = vec![0u32; instance.vertex_count()];
    for &e in alloc.edges() {
        if e >= instance.edge_count() {
            return false;
        }
        let (u, v) = instance.edge(e);
        load[u] += 1;
        load[v] += 1;
        if load[u] > 1 || load[v] > instance.capacity(v) {
            return false;
        }
    }
    true
}

/// Feasibility of a fractional allocation together with its recomputed weight.
///
/// Values must be finite and in `[0, 1]`; per-vertex sums may exceed the
/// capacity by at most the relative [`FEASIBILITY_SLACK`]. Missing entries
/// (a short value vector) count as zero; extra entries are infeasible.
pub fn validate_fractional(instance: &AllocationInstance, frac: &FractionalAllocation) -> (bool, f64) {
    let values = frac.values();
    let weight = compensated_sum(values.iter().copied());
    if values.len() > instance.edge_count() {
        return (false, weight);
    }
    if values
        .iter()
        .any(|&x| !x.is_finite() || !(0.0..=1.0 + FEASIBILITY_SLACK).contains(&x))
    {
        return (false, weight);
    }
    let value = |e: usize| values.get(e).copied().unwrap_or(0.0);
    for w in 0..instance.vertex_count() {
        let total = compensated_sum(instance.neighbors(w).iter().map(|&(_, e)| value(e)));
        let cap = instance.capacity(w) as f64;
        if total > cap * (1.0 + FEASIBILITY_SLACK) {
            return (false, weight);
        }
    }
    (true, weight)
}
