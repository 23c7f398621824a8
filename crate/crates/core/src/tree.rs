//! Spherically symmetric trees described by per-level children counts.
//!
//! A tree of height `h` is fixed by `c_0, ..., c_{h-1}`: every vertex at
//! level `k` has `c_k` children. Everything else (level sizes, degrees,
//! stationary masses of the lazy walk) is derived.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default vertex cap for explicit (brute-force) trees.
pub const DEFAULT_ORACLE_CAP: u64 = 5000;

/// Environment variable overriding [`DEFAULT_ORACLE_CAP`].
pub const ORACLE_CAP_ENV: &str = "CUTOFFLAB_ORACLE_CAP";

/// Oracle cap from the environment, falling back to the default.
pub fn oracle_cap_from_env() -> u64 {
    std::env::var(ORACLE_CAP_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_ORACLE_CAP)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "TreeSpec", into = "TreeSpec")]
pub struct TreeProfile {
    children: Vec<u64>,
    level_sizes: Vec<u64>,
    degrees: Vec<u64>,
    edges: u64,
    vertices: u64,
}

/// On-disk tree description: `{"children": [2, 2, 1]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSpec {
    pub children: Vec<i64>,
}

impl TryFrom<TreeSpec> for TreeProfile {
    type Error = Error;

    fn try_from(spec: TreeSpec) -> Result<Self> {
        build_profile(&spec.children)
    }
}

impl From<TreeProfile> for TreeSpec {
    fn from(p: TreeProfile) -> Self {
        TreeSpec {
            children: p.children.iter().map(|&c| c as i64).collect(),
        }
    }
}

/// Builds a profile from children counts. An empty slice is the one-vertex tree.
pub fn build_profile(children: &[i64]) -> Result<TreeProfile> {
    let mut counts = Vec::with_capacity(children.len());
    for (level, &value) in children.iter().enumerate() {
        if value <= 0 {
            return Err(Error::NonPositiveChildrenCount { level, value });
        }
        counts.push(value as u64);
    }
    TreeProfile::new(counts)
}

impl TreeProfile {
    pub fn new(children: Vec<u64>) -> Result<Self> {
        if let Some(level) = children.iter().position(|&c| c == 0) {
            return Err(Error::NonPositiveChildrenCount { level, value: 0 });
        }
        let h = children.len();
        let mut level_sizes = Vec::with_capacity(h + 1);
        level_sizes.push(1u64);
        for &c in &children {
            let next = level_sizes
                .last()
                .unwrap()
                .checked_mul(c)
                .ok_or(Error::SizeOverflow)?;
            level_sizes.push(next);
        }
        let degrees = (0..=h)
            .map(|k| match (k, h) {
                (_, 0) => 0,
                (0, _) => children[0],
                (k, h) if k == h => 1,
                (k, _) => children[k] + 1,
            })
            .collect();
        let vertices = level_sizes
            .iter()
            .try_fold(0u64, |acc, &n| acc.checked_add(n))
            .ok_or(Error::SizeOverflow)?;
        Ok(TreeProfile {
            children,
            level_sizes,
            degrees,
            edges: vertices - 1,
            vertices,
        })
    }

    pub fn segment(h: usize) -> Self {
        Self::new(vec![1; h]).expect("segment profile is valid")
    }

    pub fn children(&self) -> &[u64] {
        &self.children
    }

    pub fn height(&self) -> usize {
        self.children.len()
    }

    pub fn level_sizes(&self) -> &[u64] {
        &self.level_sizes
    }

    pub fn degrees(&self) -> &[u64] {
        &self.degrees
    }

    pub fn level_size(&self, k: usize) -> u64 {
        self.level_sizes[k]
    }

    pub fn degree(&self, k: usize) -> u64 {
        self.degrees[k]
    }

    /// Children of a level-`k` vertex (0 at the leaves).
    pub fn children_at(&self, k: usize) -> u64 {
        self.children.get(k).copied().unwrap_or(0)
    }

    pub fn edge_count(&self) -> u64 {
        self.edges
    }

    pub fn vertex_count(&self) -> u64 {
        self.vertices
    }

    /// Stationary mass `deg_k / 2|E|` of a single level-`k` vertex.
    pub fn pi_vertex(&self, k: usize) -> f64 {
        if self.edges == 0 {
            return 1.0;
        }
        self.degrees[k] as f64 / (2 * self.edges) as f64
    }

    /// Stationary mass of the whole level `k`.
    pub fn level_mass(&self, k: usize) -> f64 {
        self.level_sizes[k] as f64 * self.pi_vertex(k)
    }

    /// Stationary mass of the subtree rooted at one level-`k` vertex.
    pub fn subtree_mass(&self, k: usize) -> f64 {
        let base = self.level_sizes[k] as f64;
        (k..=self.height())
            .map(|j| self.level_sizes[j] as f64 / base * self.pi_vertex(j))
            .sum()
    }

    /// Short identifier such as `2-2-1`; the one-vertex tree is `root`.
    pub fn label(&self) -> String {
        if self.children.is_empty() {
            return "root".to_string();
        }
        self.children
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join("-")
    }

    pub(crate) fn require_edges(&self) -> Result<()> {
        if self.height() == 0 {
            Err(Error::DegenerateTree)
        } else {
            Ok(())
        }
    }
}

/// All children-count sequences of length `1..=max_h` with entries in
/// `1..=max_children`, shorter sequences first, lexicographic within a length.
pub fn enumerate_profiles(max_h: usize, max_children: u64) -> Result<Vec<TreeProfile>> {
    if max_h == 0 || max_children == 0 {
        return Err(Error::InvalidArgument(
            "corpus bounds must both be at least 1".into(),
        ));
    }
    let mut out = Vec::new();
    for h in 1..=max_h {
        let mut digits = vec![1u64; h];
        loop {
            out.push(TreeProfile::new(digits.clone())?);
            // odometer increment, last digit fastest
            match digits.iter().rposition(|&d| d < max_children) {
                Some(i) => {
                    digits[i] += 1;
                    digits[i + 1..].fill(1);
                }
                None => break,
            }
        }
    }
    Ok(out)
}

/// Level `ℓ` of the special vertex: 0 when the root branches, otherwise the
/// first level whose vertices have two or more children, or `h` for a segment.
pub fn special_level(profile: &TreeProfile) -> Result<usize> {
    profile.require_edges()?;
    if profile.degree(0) >= 2 {
        return Ok(0);
    }
    Ok(profile
        .children()
        .iter()
        .position(|&c| c >= 2)
        .unwrap_or(profile.height()))
}

/// Symmetry class of an ordered vertex pair: levels of `x`, `y` and of their
/// nearest common ancestor `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VertexPair {
    pub lx: usize,
    pub ly: usize,
    pub lq: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    /// `x == y`.
    Same,
    /// `y` is a proper ancestor of `x`.
    YAncestor,
    /// `x` is a proper ancestor of `y`.
    XAncestor,
    /// Neither is an ancestor of the other.
    Branching,
}

impl VertexPair {
    pub const fn new(lx: usize, ly: usize, lq: usize) -> Self {
        VertexPair { lx, ly, lq }
    }

    pub fn kind(&self) -> PairKind {
        match (self.lq == self.lx, self.lq == self.ly) {
            (true, true) => PairKind::Same,
            (false, true) => PairKind::YAncestor,
            (true, false) => PairKind::XAncestor,
            (false, false) => PairKind::Branching,
        }
    }

    pub fn reversed(&self) -> Self {
        VertexPair::new(self.ly, self.lx, self.lq)
    }

    /// Graph distance between `x` and `y`.
    pub fn distance(&self) -> usize {
        (self.lx - self.lq) + (self.ly - self.lq)
    }

    pub fn validate(&self, profile: &TreeProfile) -> Result<()> {
        let h = profile.height();
        if self.lx > h || self.ly > h {
            return Err(Error::InvalidPair(format!(
                "levels ({}, {}) exceed height {h}",
                self.lx, self.ly
            )));
        }
        if self.lq > self.lx.min(self.ly) {
            return Err(Error::InvalidPair(format!(
                "ancestor level {} exceeds min({}, {})",
                self.lq, self.lx, self.ly
            )));
        }
        if self.kind() == PairKind::Branching && profile.children_at(self.lq) < 2 {
            return Err(Error::InvalidPair(format!(
                "level {} has a single child, so x and y cannot diverge there",
                self.lq
            )));
        }
        Ok(())
    }

    pub(crate) fn validate_distinct(&self, profile: &TreeProfile) -> Result<()> {
        self.validate(profile)?;
        if self.kind() == PairKind::Same {
            return Err(Error::InvalidPair("x and y are the same vertex".into()));
        }
        Ok(())
    }
}

/// Every symmetry class of ordered pairs of distinct vertices.
pub fn representative_pairs(profile: &TreeProfile) -> Vec<VertexPair> {
    let h = profile.height();
    let mut out = Vec::new();
    for lq in 0..=h {
        for lx in lq..=h {
            for ly in lq..=h {
                let pair = VertexPair::new(lx, ly, lq);
                if pair.kind() != PairKind::Same && pair.validate(profile).is_ok() {
                    out.push(pair);
                }
            }
        }
    }
    out
}

/// Stationary mass of the components of `T \ {x}` that do not contain `y`.
pub fn pi_offpath_mass(profile: &TreeProfile, pair: &VertexPair) -> Result<f64> {
    pair.validate_distinct(profile)?;
    let below_x = profile.subtree_mass(pair.lx) - profile.pi_vertex(pair.lx);
    Ok(match pair.kind() {
        // y sits in one child subtree of x; everything else except x is off-path
        PairKind::XAncestor => 1.0 - profile.pi_vertex(pair.lx) - profile.subtree_mass(pair.lx + 1),
        _ => below_x,
    })
}

/// A concrete tree with breadth-first vertex numbering (root = 0).
#[derive(Debug, Clone)]
pub struct ExplicitTree {
    adjacency: Vec<Vec<usize>>,
    level: Vec<usize>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    level_start: Vec<usize>,
}

pub fn explicit_tree(profile: &TreeProfile, cap: u64) -> Result<ExplicitTree> {
    let n = profile.vertex_count();
    if n > cap {
        return Err(Error::OracleTooLarge { n, cap });
    }
    let n = n as usize;
    let mut adjacency = vec![Vec::new(); n];
    let mut level = vec![0; n];
    let mut parent = vec![None; n];
    let mut children = vec![Vec::new(); n];
    let mut level_start = vec![0];
    let mut next = 1usize;
    let mut queue = VecDeque::from([0usize]);
    let mut current_level = 0;
    while let Some(v) = queue.pop_front() {
        if level[v] != current_level {
            current_level = level[v];
            level_start.push(v);
        }
        for _ in 0..profile.children_at(level[v]) {
            let c = next;
            next += 1;
            level[c] = level[v] + 1;
            parent[c] = Some(v);
            children[v].push(c);
            adjacency[v].push(c);
            adjacency[c].push(v);
            queue.push_back(c);
        }
    }
    level_start.push(n);
    Ok(ExplicitTree {
        adjacency,
        level,
        parent,
        children,
        level_start,
    })
}

impl ExplicitTree {
    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn height(&self) -> usize {
        self.level_start.len() - 2
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn level(&self, v: usize) -> usize {
        self.level[v]
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn level_vertices(&self, k: usize) -> std::ops::Range<usize> {
        self.level_start[k]..self.level_start[k + 1]
    }

    /// Stationary distribution `deg(v) / 2|E|` of the lazy walk.
    pub fn stationary(&self) -> Vec<f64> {
        let two_e = (2 * self.edge_count()).max(1) as f64;
        if self.vertex_count() == 1 {
            return vec![1.0];
        }
        (0..self.vertex_count())
            .map(|v| self.degree(v) as f64 / two_e)
            .collect()
    }

    /// Children counts recovered from per-level degrees.
    pub fn recover_children(&self) -> Vec<u64> {
        (0..self.height())
            .map(|k| {
                let v = self.level_start[k];
                let d = self.degree(v) as u64;
                if k == 0 {
                    d
                } else {
                    d - 1
                }
            })
            .collect()
    }

    /// Concrete vertices representing `pair`: `x` follows first children from
    /// the root, `y` takes the second child at level `lq` when the two diverge.
    pub fn pair_vertices(&self, pair: &VertexPair) -> (usize, usize) {
        let x = self.descend(0, pair.lx, None);
        let y = match pair.kind() {
            PairKind::Branching => self.descend(0, pair.ly, Some(pair.lq)),
            _ => self.descend(0, pair.ly, None),
        };
        (x, y)
    }

    /// Vertex at `level` on the first-child path.
    pub fn first_at_level(&self, level: usize) -> usize {
        self.descend(0, level, None)
    }

    fn descend(&self, mut v: usize, level: usize, branch_at: Option<usize>) -> usize {
        while self.level[v] < level {
            let idx = usize::from(branch_at == Some(self.level[v]));
            v = self.children[v][idx];
        }
        v
    }

    /// Vertices of the component of `T \ {removed}` containing `start`.
    pub fn component_without(&self, removed: usize, start: usize) -> Vec<usize> {
        let mut seen = vec![false; self.vertex_count()];
        seen[removed] = true;
        seen[start] = true;
        let mut stack = vec![start];
        let mut out = Vec::new();
        while let Some(v) = stack.pop() {
            out.push(v);
            for &w in &self.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        out
    }
}
