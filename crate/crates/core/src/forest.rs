//! Forests, union-find, maximum spanning trees and held-out pruning.
//!
//! Vertices are 0-based here; anything written for people (TSV, DOT, JSON)
//! is shifted to 1-based by the `io` module.

use std::collections::BTreeSet;
use std::fmt;

use ndarray::{Array2, ArrayView2};

use crate::density::WeightMatrix;
use crate::error::{Error, Result};

/// An undirected edge stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
}

impl Edge {
    /// Normalizes the endpoint order. Panics on a self-loop.
    pub fn new(a: usize, b: usize) -> Self {
        assert_ne!(a, b, "self-loop at vertex {a}");
        Edge {
            i: a.min(b),
            j: a.max(b),
        }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.i + 1, self.j + 1)
    }
}

/// Union-find with path compression and union by rank.
#[derive(Debug, Clone)]
pub struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
    components: usize,
}

impl DisjointSet {
    pub fn new(size: usize) -> Self {
        DisjointSet {
            parent: (0..size).collect(),
            rank: vec![0; size],
            components: size,
        }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Merges the sets of `a` and `b`; false if they were already one set.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        self.components -= 1;
        true
    }

    pub fn components(&self) -> usize {
        self.components
    }
}

/// An acyclic edge set on `d` labeled vertices with degree bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Forest {
    d: usize,
    edges: BTreeSet<Edge>,
    degrees: Vec<usize>,
}

impl Forest {
    pub fn empty(d: usize) -> Self {
        Forest {
            d,
            edges: BTreeSet::new(),
            degrees: vec![0; d],
        }
    }

    /// Builds a forest, rejecting out-of-range vertices, self-loops, repeated
    /// edges and cycles.
    pub fn from_edges(d: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut forest = Forest::empty(d);
        let mut sets = DisjointSet::new(d);
        for (a, b) in edges {
            if a >= d || b >= d {
                return Err(Error::contract(format!(
                    "edge ({}, {}) outside {d} vertices",
                    a + 1,
                    b + 1
                )));
            }
            if a == b {
                return Err(Error::contract(format!("self-loop at vertex {}", a + 1)));
            }
            if !sets.union(a, b) {
                return Err(Error::contract(format!(
                    "edge ({}, {}) closes a cycle",
                    a + 1,
                    b + 1
                )));
            }
            forest.insert(Edge::new(a, b));
        }
        Ok(forest)
    }

    fn insert(&mut self, e: Edge) {
        self.edges.insert(e);
        self.degrees[e.i] += 1;
        self.degrees[e.j] += 1;
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Edges in ascending `(i, j)` order.
    pub fn edges(&self) -> impl ExactSizeIterator<Item = Edge> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_set(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        a != b && self.edges.contains(&Edge::new(a, b))
    }

    pub fn degree(&self, vertex: usize) -> Result<usize> {
        self.degrees.get(vertex).copied().ok_or_else(|| {
            Error::contract(format!("vertex {} outside {} vertices", vertex + 1, self.d))
        })
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    /// Connected with exactly `d - 1` edges.
    pub fn is_spanning_tree(&self) -> bool {
        // Acyclicity is a construction invariant, so the edge count decides.
        self.d > 0 && self.edges.len() == self.d - 1
    }

    /// Symmetric 0/1 adjacency matrix.
    pub fn adjacency(&self) -> Array2<u8> {
        let mut a = Array2::zeros((self.d, self.d));
        for e in &self.edges {
            a[[e.i, e.j]] = 1;
            a[[e.j, e.i]] = 1;
        }
        a
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.d];
        for e in &self.edges {
            adj[e.i].push(e.j);
            adj[e.j].push(e.i);
        }
        adj
    }

    /// Sum of `w` over the forest's edges.
    pub fn total_weight(&self, w: &WeightMatrix) -> f64 {
        self.edges.iter().map(|e| w.get(e.i, e.j)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub edge: Edge,
    /// The (possibly adjusted) weight the edge was selected with.
    pub weight: f64,
}

/// Edges in the order Kruskal's algorithm inserted them.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTrace {
    d: usize,
    steps: Vec<TraceStep>,
}

impl EdgeTrace {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[TraceStep] {
        &self.steps
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.steps.iter().map(|s| s.edge)
    }

    /// The forest formed by the first `k` inserted edges.
    pub fn prefix(&self, k: usize) -> Forest {
        let mut f = Forest::empty(self.d);
        for s in &self.steps[..k.min(self.steps.len())] {
            f.insert(s.edge);
        }
        f
    }
}

/// Maximum-weight spanning tree of `w` and the order its edges were added.
pub fn kruskal(w: &WeightMatrix) -> Result<(Forest, EdgeTrace)> {
    kruskal_matrix(w.as_array().view())
}

/// [`kruskal`] on a raw matrix, which must be square and exactly symmetric.
///
/// Candidates are taken by descending weight, ties broken by the smaller
/// `(i, j)` pair. The tree is always completed, negative weights included.
pub fn kruskal_matrix(w: ArrayView2<'_, f64>) -> Result<(Forest, EdgeTrace)> {
    let (d, c) = w.dim();
    if d != c {
        return Err(Error::contract(format!("weight matrix is {d}×{c}")));
    }
    if d < 2 {
        return Err(Error::contract("need at least 2 vertices"));
    }
    let mut candidates = Vec::with_capacity(d * (d - 1) / 2);
    for i in 0..d {
        for j in (i + 1)..d {
            let v = w[[i, j]];
            if v.is_nan() || v != w[[j, i]] {
                return Err(Error::contract(format!(
                    "weight matrix not symmetric at ({}, {})",
                    i + 1,
                    j + 1
                )));
            }
            candidates.push((v, i, j));
        }
    }
    candidates.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));

    let mut sets = DisjointSet::new(d);
    let mut forest = Forest::empty(d);
    let mut steps = Vec::with_capacity(d - 1);
    for (v, i, j) in candidates {
        if sets.union(i, j) {
            let edge = Edge::new(i, j);
            forest.insert(edge);
            steps.push(TraceStep { edge, weight: v });
            if steps.len() == d - 1 {
                break;
            }
        }
    }
    Ok((forest, EdgeTrace { d, steps }))
}

/// The prefix length maximizing the cumulative sum of `terms`, with its
/// value. Ties resolve to the shortest prefix; the empty prefix scores 0.
pub fn best_prefix(terms: &[f64]) -> (usize, f64) {
    let mut best = (0, 0.0);
    let mut acc = 0.0;
    for (k, t) in terms.iter().enumerate() {
        acc += t;
        if acc > best.1 {
            best = (k + 1, acc);
        }
    }
    best
}

/// Truncates the insertion order where the held-out score peaks.
pub fn prune_by_holdout(trace: &EdgeTrace, holdout_terms: &[f64]) -> Result<Forest> {
    if trace.len() != holdout_terms.len() {
        return Err(Error::contract(format!(
            "{} held-out terms for {} trace edges",
            holdout_terms.len(),
            trace.len()
        )));
    }
    let (k, _) = best_prefix(holdout_terms);
    Ok(trace.prefix(k))
}
