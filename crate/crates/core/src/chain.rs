//! Symmetry-reduced chains for the lazy walk.
//!
//! [`CollapsedChain`] identifies every vertex of a level, giving a lazy
//! birth-and-death chain on `0..=h`. [`QuotientChain`] keeps the spine (the
//! root paths to one or two marked vertices) explicit and collapses every
//! off-spine subtree by depth. Both lump the walk exactly: the stabiliser of
//! the marked vertices acts transitively on each class.

use std::collections::{HashMap, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tree::{ExplicitTree, TreeProfile, VertexPair};

/// Sparse row-stochastic transition structure shared by all chains here.
pub trait Kernel {
    fn n_states(&self) -> usize;

    /// Outgoing transitions of state `i`, including the holding probability.
    fn row(&self, i: usize) -> &[(usize, f64)];

    /// Stationary mass per state (summed over the class for lumped chains).
    fn stationary(&self) -> &[f64];
}

/// One step of the chain: returns `dist · P`.
pub fn apply_step<K: Kernel + ?Sized>(chain: &K, dist: &[f64]) -> Result<Vec<f64>> {
    if dist.len() != chain.n_states() {
        return Err(Error::DimensionMismatch {
            expected: chain.n_states(),
            got: dist.len(),
        });
    }
    let mut out = vec![0.0; dist.len()];
    step_into(chain, dist, &mut out);
    Ok(out)
}

pub(crate) fn step_into<K: Kernel + ?Sized>(chain: &K, dist: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (i, &mass) in dist.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        for &(j, p) in chain.row(i) {
            out[j] += mass * p;
        }
    }
}

/// Level (birth-and-death) projection of the lazy walk.
#[derive(Debug, Clone, Serialize)]
pub struct CollapsedChain {
    /// Probability of moving one level toward the root.
    up: Vec<f64>,
    /// Probability of moving one level away from the root.
    down: Vec<f64>,
    hold: Vec<f64>,
    multiplicity: Vec<u64>,
    mass: Vec<f64>,
    #[serde(skip)]
    rows: Vec<Vec<(usize, f64)>>,
}

pub fn collapse(profile: &TreeProfile) -> Result<CollapsedChain> {
    profile.require_edges()?;
    let h = profile.height();
    let up: Vec<f64> = (0..=h)
        .map(|k| {
            if k == 0 {
                0.0
            } else {
                1.0 / (2 * profile.degree(k)) as f64
            }
        })
        .collect();
    let down: Vec<f64> = (0..=h)
        .map(|k| {
            if k == h {
                0.0
            } else {
                profile.children_at(k) as f64 / (2 * profile.degree(k)) as f64
            }
        })
        .collect();
    let mass = (0..=h).map(|k| profile.level_mass(k)).collect();
    Ok(CollapsedChain::assemble(
        up,
        down,
        profile.level_sizes().to_vec(),
        mass,
    ))
}

impl CollapsedChain {
    /// A general lazy birth-and-death chain on `0..up.len()`.
    ///
    /// `up[0]` and the last `down` must be zero, every interior rate
    /// positive, and `up[k] + down[k] <= 1/2`. Multiplicities are all 1 and
    /// the stationary law comes from detailed balance.
    pub fn from_rates(up: Vec<f64>, down: Vec<f64>) -> Result<Self> {
        let n = up.len();
        if n < 2 || down.len() != n {
            return Err(Error::InvalidArgument(
                "birth-and-death chain needs matching rate vectors of length >= 2".into(),
            ));
        }
        if up[0] != 0.0 || down[n - 1] != 0.0 {
            return Err(Error::InvalidArgument("boundary rates must be zero".into()));
        }
        for k in 0..n {
            let interior_ok = (k == 0 || up[k] > 0.0) && (k == n - 1 || down[k] > 0.0);
            if !interior_ok || up[k] + down[k] > 0.5 + 1e-15 {
                return Err(Error::InvalidArgument(format!(
                    "rates at state {k} are not those of an irreducible lazy chain"
                )));
            }
        }
        let mut mass = vec![1.0; n];
        for k in 1..n {
            mass[k] = mass[k - 1] * down[k - 1] / up[k];
        }
        let total: f64 = mass.iter().sum();
        mass.iter_mut().for_each(|m| *m /= total);
        Ok(Self::assemble(up, down, vec![1; n], mass))
    }

    fn assemble(up: Vec<f64>, down: Vec<f64>, multiplicity: Vec<u64>, mass: Vec<f64>) -> Self {
        let n = up.len();
        let hold: Vec<f64> = (0..n).map(|k| 1.0 - up[k] - down[k]).collect();
        let rows = (0..n)
            .map(|k| {
                let mut row = Vec::with_capacity(3);
                if up[k] > 0.0 {
                    row.push((k - 1, up[k]));
                }
                row.push((k, hold[k]));
                if down[k] > 0.0 {
                    row.push((k + 1, down[k]));
                }
                row
            })
            .collect();
        CollapsedChain {
            up,
            down,
            hold,
            multiplicity,
            mass,
            rows,
        }
    }

    /// Highest state index (`h` for a tree).
    pub fn top(&self) -> usize {
        self.up.len() - 1
    }

    pub fn up(&self, k: usize) -> f64 {
        self.up[k]
    }

    pub fn down(&self, k: usize) -> f64 {
        self.down[k]
    }

    pub fn hold(&self, k: usize) -> f64 {
        self.hold[k]
    }

    pub fn multiplicity(&self, k: usize) -> u64 {
        self.multiplicity[k]
    }

    pub fn mass(&self, k: usize) -> f64 {
        self.mass[k]
    }

    /// Symmetrised form of the restriction to states `from..=top`, as
    /// (diagonal, off-diagonal). Transitions below `from` are dropped.
    pub fn symmetric_restriction(&self, from: usize) -> (Vec<f64>, Vec<f64>) {
        let top = self.top();
        let diag = (from..=top).map(|k| self.hold[k]).collect();
        let off = (from..top)
            .map(|k| (self.down[k] * self.up[k + 1]).sqrt())
            .collect();
        (diag, off)
    }
}

impl Kernel for CollapsedChain {
    fn n_states(&self) -> usize {
        self.up.len()
    }

    fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    fn stationary(&self) -> &[f64] {
        &self.mass
    }
}

/// Which path a spine state lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Branch {
    /// Shared root path, levels `0..=lq`.
    Trunk,
    /// Levels `lq+1..=lx` toward `x`.
    ToX,
    /// Levels `lq+1..=ly` toward `y`.
    ToY,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StateKind {
    Spine {
        branch: Branch,
    },
    /// All off-spine vertices `depth` levels below spine state `anchor`.
    Bush {
        anchor: usize,
        depth: usize,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct QuotientState {
    pub kind: StateKind,
    pub level: usize,
    /// Number of tree vertices in the class.
    pub multiplicity: u64,
    /// Stationary mass summed over the class.
    pub mass: f64,
}

/// Which marked vertices the spine runs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marking {
    /// One marked vertex at the given level (it plays the role of `x`).
    Vertex(usize),
    /// Two marked vertices `x` and `y`.
    Pair(VertexPair),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marked {
    X,
    Y,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuotientChain {
    states: Vec<QuotientState>,
    rows: Vec<Vec<(usize, f64)>>,
    #[serde(skip)]
    mass: Vec<f64>,
    x: usize,
    y: Option<usize>,
    absorbing: Option<usize>,
}

pub fn build_quotient(
    profile: &TreeProfile,
    marking: &Marking,
    absorbing: Option<Marked>,
) -> Result<QuotientChain> {
    profile.require_edges()?;
    let h = profile.height();
    // (lx, ly, lq) with ly == lq == lx for a single vertex
    let pair = match *marking {
        Marking::Vertex(level) => {
            if level > h {
                return Err(Error::InvalidPair(format!(
                    "level {level} exceeds height {h}"
                )));
            }
            if absorbing == Some(Marked::Y) {
                return Err(Error::InvalidPair(
                    "single-vertex marking has no y to absorb".into(),
                ));
            }
            VertexPair::new(level, level, level)
        }
        Marking::Pair(pair) => {
            pair.validate_distinct(profile)?;
            pair
        }
    };

    let mut states: Vec<QuotientState> = Vec::new();
    let mut spine_parent: Vec<Option<usize>> = Vec::new();
    let push_spine = |states: &mut Vec<QuotientState>,
                      parents: &mut Vec<Option<usize>>,
                      branch: Branch,
                      level: usize,
                      parent: Option<usize>| {
        states.push(QuotientState {
            kind: StateKind::Spine { branch },
            level,
            multiplicity: 1,
            mass: profile.pi_vertex(level),
        });
        parents.push(parent);
        states.len() - 1
    };

    let mut last = None;
    for level in 0..=pair.lq {
        last = Some(push_spine(
            &mut states,
            &mut spine_parent,
            Branch::Trunk,
            level,
            last,
        ));
    }
    let q = last.unwrap();
    let mut x = q;
    for level in pair.lq + 1..=pair.lx {
        x = push_spine(&mut states, &mut spine_parent, Branch::ToX, level, Some(x));
    }
    let mut y = q;
    for level in pair.lq + 1..=pair.ly {
        y = push_spine(&mut states, &mut spine_parent, Branch::ToY, level, Some(y));
    }
    let spine_len = states.len();

    let mut spine_children = vec![Vec::new(); spine_len];
    for (s, parent) in spine_parent.iter().enumerate() {
        if let Some(p) = parent {
            spine_children[*p].push(s);
        }
    }

    // bushes: first bush state per spine vertex, if any
    let mut bush_head = vec![None; spine_len];
    for s in 0..spine_len {
        let level = states[s].level;
        let off = profile.children_at(level) - spine_children[s].len() as u64;
        if off == 0 {
            continue;
        }
        bush_head[s] = Some(states.len());
        let first = profile.level_size(level + 1);
        for depth in 1..=h - level {
            let lvl = level + depth;
            let multiplicity = off * (profile.level_size(lvl) / first);
            states.push(QuotientState {
                kind: StateKind::Bush { anchor: s, depth },
                level: lvl,
                multiplicity,
                mass: multiplicity as f64 * profile.pi_vertex(lvl),
            });
        }
    }

    let half_over = |level: usize| 1.0 / (2 * profile.degree(level)) as f64;
    let mut rows = Vec::with_capacity(states.len());
    for (i, state) in states.iter().enumerate() {
        let level = state.level;
        let unit = half_over(level);
        let mut row = Vec::with_capacity(4);
        match state.kind {
            StateKind::Spine { .. } => {
                if let Some(p) = spine_parent[i] {
                    row.push((p, unit));
                }
                row.push((i, 0.5));
                for &c in &spine_children[i] {
                    row.push((c, unit));
                }
                if let Some(b) = bush_head[i] {
                    let off = profile.children_at(level) - spine_children[i].len() as u64;
                    row.push((b, off as f64 * unit));
                }
            }
            StateKind::Bush { anchor, depth } => {
                let parent = if depth == 1 { anchor } else { i - 1 };
                row.push((parent, unit));
                row.push((i, 0.5));
                if level < h {
                    row.push((i + 1, profile.children_at(level) as f64 * unit));
                }
            }
        }
        rows.push(row);
    }

    let absorbing = absorbing.map(|m| match m {
        Marked::X => x,
        Marked::Y => y,
    });
    if let Some(a) = absorbing {
        rows[a] = vec![(a, 1.0)];
    }
    let mass = states.iter().map(|s| s.mass).collect();
    Ok(QuotientChain {
        states,
        rows,
        mass,
        x,
        y: matches!(marking, Marking::Pair(_)).then_some(y),
        absorbing,
    })
}

impl QuotientChain {
    pub fn for_vertex(profile: &TreeProfile, level: usize) -> Result<Self> {
        build_quotient(profile, &Marking::Vertex(level), None)
    }

    /// Pair quotient with `y` absorbing.
    pub fn for_hitting(profile: &TreeProfile, pair: &VertexPair) -> Result<Self> {
        build_quotient(profile, &Marking::Pair(*pair), Some(Marked::Y))
    }

    pub fn states(&self) -> &[QuotientState] {
        &self.states
    }

    pub fn x_state(&self) -> usize {
        self.x
    }

    pub fn y_state(&self) -> Option<usize> {
        self.y
    }

    pub fn absorbing(&self) -> Option<usize> {
        self.absorbing
    }

    pub fn multiplicities(&self) -> Vec<u64> {
        self.states.iter().map(|s| s.multiplicity).collect()
    }

    /// States made of vertices in components of `T \ {x}` that avoid `y`.
    ///
    /// Classes never straddle components of `T \ {x}`, so a search on the
    /// quotient graph from `y` with `x` removed marks exactly the states on
    /// `y`'s side; the rest (minus `x`) is off-path.
    pub fn offpath_states(&self) -> Vec<bool> {
        let Some(y) = self.y else {
            return vec![false; self.states.len()];
        };
        let n = self.states.len();
        let mut adjacency = vec![Vec::new(); n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, _) in row {
                if i != j {
                    adjacency[i].push(j);
                    adjacency[j].push(i);
                }
            }
        }
        let mut reached = vec![false; n];
        reached[self.x] = true;
        reached[y] = true;
        let mut queue = VecDeque::from([y]);
        while let Some(s) = queue.pop_front() {
            for &t in &adjacency[s] {
                if !reached[t] {
                    reached[t] = true;
                    queue.push_back(t);
                }
            }
        }
        (0..n).map(|i| i != self.x && !reached[i]).collect()
    }

    /// Maps every vertex of `tree` to its class, with marked vertices placed
    /// as in [`ExplicitTree::pair_vertices`].
    pub fn classify(&self, tree: &ExplicitTree) -> Vec<usize> {
        let lx = self.states[self.x].level;
        let (xv, yv) = match self.y {
            Some(y) => {
                let ly = self.states[y].level;
                let lq = self
                    .states
                    .iter()
                    .filter(|s| {
                        matches!(
                            s.kind,
                            StateKind::Spine {
                                branch: Branch::Trunk
                            }
                        )
                    })
                    .map(|s| s.level)
                    .max()
                    .unwrap_or(0);
                tree.pair_vertices(&VertexPair::new(lx, ly, lq))
            }
            None => {
                let v = tree.first_at_level(lx);
                (v, v)
            }
        };
        let ancestor = |mut v: usize, level: usize| {
            while tree.level(v) > level {
                v = tree.parent(v).unwrap();
            }
            v
        };
        let mut spine_vertex: HashMap<usize, usize> = HashMap::new();
        let mut bush: HashMap<(usize, usize), usize> = HashMap::new();
        for (i, s) in self.states.iter().enumerate() {
            match s.kind {
                StateKind::Spine { branch } => {
                    let v = match branch {
                        Branch::Trunk | Branch::ToX => ancestor(xv, s.level),
                        Branch::ToY => ancestor(yv, s.level),
                    };
                    spine_vertex.insert(v, i);
                }
                StateKind::Bush { anchor, depth } => {
                    bush.insert((anchor, depth), i);
                }
            }
        }
        (0..tree.vertex_count())
            .map(|v| {
                let mut s = v;
                while !spine_vertex.contains_key(&s) {
                    s = tree.parent(s).expect("root is always on the spine");
                }
                let anchor = spine_vertex[&s];
                let depth = tree.level(v) - tree.level(s);
                if depth == 0 {
                    anchor
                } else {
                    bush[&(anchor, depth)]
                }
            })
            .collect()
    }

    /// Plain-text JSON dump of states, transitions and multiplicities.
    pub fn dump(&self) -> String {
        serde_json::to_string_pretty(self).expect("quotient chain serialises")
    }
}

impl Kernel for QuotientChain {
    fn n_states(&self) -> usize {
        self.states.len()
    }

    fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    fn stationary(&self) -> &[f64] {
        &self.mass
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::build_profile;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-15
    }

    #[test]
    fn collapsed_binary() {
        let c = collapse(&build_profile(&[2, 2]).unwrap()).unwrap();
        assert!(close(c.up(1), 1.0 / 6.0));
        assert!(close(c.down(1), 1.0 / 3.0));
        assert!(close(c.hold(1), 0.5));
        assert!(close(c.down(0), 0.5));
        assert!(close(c.up(2), 0.5));
    }

    #[test]
    fn collapsed_single_edge() {
        let c = collapse(&build_profile(&[1]).unwrap()).unwrap();
        assert_eq!(c.n_states(), 2);
        assert!(close(c.up(1), 0.5));
        assert!(close(c.down(0), 0.5));
    }

    #[test]
    fn collapsed_rejects_degenerate() {
        assert_eq!(
            collapse(&build_profile(&[]).unwrap()).unwrap_err(),
            Error::DegenerateTree
        );
    }

    #[test]
    fn segment_collapse_is_the_segment() {
        let c = collapse(&TreeProfile::segment(4)).unwrap();
        for k in 1..4 {
            assert!(close(c.up(k), 0.25));
            assert!(close(c.down(k), 0.25));
        }
    }

    #[test]
    fn from_rates_rejects_non_lazy() {
        assert!(CollapsedChain::from_rates(vec![0.0, 0.6], vec![0.5, 0.0]).is_err());
        assert!(CollapsedChain::from_rates(vec![0.0, 0.0], vec![0.5, 0.0]).is_err());
        let c = CollapsedChain::from_rates(vec![0.0, 0.25], vec![0.5, 0.0]).unwrap();
        assert!((c.mass(0) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn quotient_star_leaf() {
        let p = build_profile(&[2]).unwrap();
        let q = QuotientChain::for_vertex(&p, 1).unwrap();
        assert_eq!(q.n_states(), 3);
        assert_eq!(q.multiplicities(), vec![1, 1, 1]);
    }

    #[test]
    fn quotient_binary_leaf() {
        let p = build_profile(&[2, 2]).unwrap();
        let q = QuotientChain::for_vertex(&p, 2).unwrap();
        assert_eq!(q.n_states(), 6);
        assert_eq!(q.multiplicities().iter().sum::<u64>(), 7);
        let total: f64 = q.stationary().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quotient_segment_end() {
        let p = build_profile(&[1, 1]).unwrap();
        let q = QuotientChain::for_vertex(&p, 2).unwrap();
        assert_eq!(q.n_states(), 3);
        assert!(q
            .states()
            .iter()
            .all(|s| matches!(s.kind, StateKind::Spine { .. })));
    }

    #[test]
    fn quotient_rows_and_absorption() {
        let p = build_profile(&[3, 2, 2]).unwrap();
        let q = build_quotient(
            &p,
            &Marking::Pair(VertexPair::new(2, 3, 0)),
            Some(Marked::Y),
        )
        .unwrap();
        for i in 0..q.n_states() {
            let s: f64 = q.row(i).iter().map(|(_, p)| p).sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
        let a = q.absorbing().unwrap();
        assert_eq!(q.row(a), &[(a, 1.0)]);
        let mut d = vec![0.0; q.n_states()];
        d[a] = 1.0;
        assert_eq!(apply_step(&q, &d).unwrap(), d);
    }

    #[test]
    fn single_marking_cannot_absorb_y() {
        let p = build_profile(&[2]).unwrap();
        assert!(build_quotient(&p, &Marking::Vertex(1), Some(Marked::Y)).is_err());
    }

    #[test]
    fn step_examples() {
        let k2 = QuotientChain::for_vertex(&build_profile(&[1]).unwrap(), 0).unwrap();
        let d = apply_step(&k2, &[1.0, 0.0]).unwrap();
        assert_eq!(d, vec![0.5, 0.5]);

        let c = collapse(&build_profile(&[2, 2]).unwrap()).unwrap();
        let d = apply_step(&c, &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(d, vec![0.0, 0.5, 0.5]);

        assert_eq!(
            apply_step(&c, &[1.0]).unwrap_err(),
            Error::DimensionMismatch {
                expected: 3,
                got: 1
            }
        );
    }

    #[test]
    fn offpath_states_for_ancestor_start() {
        // x = root of a star, y = one leaf: the other leaf is off-path
        let p = build_profile(&[2]).unwrap();
        let q = QuotientChain::for_hitting(&p, &VertexPair::new(0, 1, 0)).unwrap();
        let off = q.offpath_states();
        let mass: f64 = off
            .iter()
            .zip(q.states())
            .filter(|(o, _)| **o)
            .map(|(_, s)| s.mass)
            .sum();
        assert!((mass - 0.25).abs() < 1e-15);
    }
}
