//! Exact first and second moments of hitting and return times.
//!
//! Every moment is a pair of linear solves on a small absorbing chain:
//! `(I - Q) e = 1` for the mean, then `(I - Q) s = 1 + 2 Q e` for the second
//! moment.

use serde::{Deserialize, Serialize};

use crate::chain::{
    build_quotient, collapse, CollapsedChain, Kernel, Marked, Marking, QuotientChain,
};
use crate::error::{Error, Result};
use crate::linalg::LuSolver;
use crate::tree::{special_level, PairKind, TreeProfile, VertexPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentMethod {
    LinearSystem,
    Fill,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingMoments {
    pub mean: f64,
    pub second_moment: f64,
    pub variance: f64,
    pub method: MomentMethod,
}

impl HittingMoments {
    fn linear(mean: f64, second_moment: f64) -> Self {
        HittingMoments {
            mean,
            second_moment,
            variance: second_moment - mean * mean,
            method: MomentMethod::LinearSystem,
        }
    }

    /// `Var / E²`.
    pub fn concentration(&self) -> f64 {
        self.variance / (self.mean * self.mean)
    }
}

/// Per-state mean and second moment of the absorption time into `target`.
pub(crate) fn absorbing_moments<K: Kernel + ?Sized>(
    chain: &K,
    target: &[bool],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = chain.n_states();
    if target.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: target.len(),
        });
    }
    let transient: Vec<usize> = (0..n).filter(|&i| !target[i]).collect();
    let mut index = vec![usize::MAX; n];
    for (k, &i) in transient.iter().enumerate() {
        index[i] = k;
    }
    let m = transient.len();
    let mut a = vec![0.0; m * m];
    for (k, &i) in transient.iter().enumerate() {
        a[k * m + k] += 1.0;
        for &(j, p) in chain.row(i) {
            if !target[j] {
                a[k * m + index[j]] -= p;
            }
        }
    }
    let mut e_full = vec![0.0; n];
    let mut s_full = vec![0.0; n];
    if m == 0 {
        return Ok((e_full, s_full));
    }
    let lu = LuSolver::new(m, a)?;
    let e = lu.solve(&vec![1.0; m])?;
    let rhs: Vec<f64> = transient
        .iter()
        .map(|&i| {
            let qe: f64 = chain
                .row(i)
                .iter()
                .filter(|(j, _)| !target[*j])
                .map(|&(j, p)| p * e[index[j]])
                .sum();
            1.0 + 2.0 * qe
        })
        .collect();
    let s = lu.solve(&rhs)?;
    for (k, &i) in transient.iter().enumerate() {
        e_full[i] = e[k];
        s_full[i] = s[k];
    }
    Ok((e_full, s_full))
}

/// Moments of `τ_y` for the walk started at `x`.
pub fn hitting_moments(profile: &TreeProfile, pair: &VertexPair) -> Result<HittingMoments> {
    let chain = QuotientChain::for_hitting(profile, pair)?;
    let y = chain.y_state().expect("pair marking has y");
    let mut target = vec![false; chain.n_states()];
    target[y] = true;
    let (e, s) = absorbing_moments(&chain, &target)?;
    let x = chain.x_state();
    Ok(HittingMoments::linear(e[x], s[x]))
}

/// Moments of `τ_y⁺` from `x`: the hitting time when `x ≠ y`, the return
/// time when they coincide.
pub fn hitting_plus_moments(profile: &TreeProfile, pair: &VertexPair) -> Result<HittingMoments> {
    pair.validate(profile)?;
    if pair.kind() == PairKind::Same {
        return_moments(profile, pair.lx)
    } else {
        hitting_moments(profile, pair)
    }
}

/// Moments of the return time `τ_x⁺` for a level-`level` vertex, by
/// first-step analysis over the classes next to `x`.
pub fn return_moments(profile: &TreeProfile, level: usize) -> Result<HittingMoments> {
    let free = QuotientChain::for_vertex(profile, level)?;
    let absorbed = build_quotient(profile, &Marking::Vertex(level), Some(Marked::X))?;
    let x = free.x_state();
    let mut target = vec![false; absorbed.n_states()];
    target[x] = true;
    let (e, s) = absorbing_moments(&absorbed, &target)?;
    let (mut first, mut second) = (0.0, 0.0);
    for &(z, p) in free.row(x) {
        first += p * (1.0 + e[z]);
        second += p * (1.0 + 2.0 * e[z] + s[z]);
    }
    Ok(HittingMoments::linear(first, second))
}

/// Exact `2|E| / deg` return time, for cross-checking [`return_moments`].
pub fn expected_return_time(profile: &TreeProfile, level: usize) -> f64 {
    1.0 / profile.pi_vertex(level)
}

/// Moments of the time for the level chain to reach `target` from `start`.
pub fn level_hitting_moments(
    chain: &CollapsedChain,
    start: usize,
    target: usize,
) -> Result<HittingMoments> {
    let (e, s) = level_hitting_all(chain, target)?;
    if start > chain.top() {
        return Err(Error::InvalidArgument(format!(
            "start state {start} exceeds {}",
            chain.top()
        )));
    }
    Ok(HittingMoments::linear(e[start], s[start]))
}

/// Means and second moments of the time to reach `target`, for every start.
pub fn level_hitting_all(chain: &CollapsedChain, target: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if target > chain.top() {
        return Err(Error::InvalidArgument(format!(
            "target state {target} exceeds {}",
            chain.top()
        )));
    }
    let mut mask = vec![false; chain.n_states()];
    mask[target] = true;
    absorbing_moments(chain, &mask)
}

/// Expected hitting time of the set `D` from stationarity, where `D` is the
/// complement of `b` of the child subtrees of the special vertex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetHitting {
    pub special_level: usize,
    /// Child subtrees of the special vertex.
    pub branches: u64,
    /// Subtrees removed from `D`.
    pub excluded: u64,
    /// `E_π(τ_D)`.
    pub expected: f64,
    pub pi_d: f64,
    pub pi_complement: f64,
}

impl SetHitting {
    /// `π(D) / π(Dᶜ) · E_π(τ_D)`, a lower bound on the relaxation time.
    pub fn gap_bound(&self) -> f64 {
        self.pi_d / self.pi_complement * self.expected
    }
}

pub fn stationary_set_hitting(profile: &TreeProfile, excluded: u64) -> Result<SetHitting> {
    let ell = special_level(profile)?;
    let branches = profile.children_at(ell);
    if branches < 2 {
        return Err(Error::NoBranching { children: branches });
    }
    if excluded == 0 || excluded >= branches {
        return Err(Error::InvalidArgument(format!(
            "number of excluded subtrees must be in 1..={}, got {excluded}",
            branches - 1
        )));
    }
    let chain = collapse(profile)?;
    let (to_special, _) = level_hitting_all(&chain, ell)?;
    let per_subtree = |j: usize| profile.level_size(j) as f64 / profile.level_size(ell + 1) as f64;
    let mut expected = 0.0;
    let mut pi_b = 0.0;
    for (j, &time) in to_special.iter().enumerate().skip(ell + 1) {
        let mass = excluded as f64 * per_subtree(j) * profile.pi_vertex(j);
        pi_b += mass;
        expected += mass * time;
    }
    Ok(SetHitting {
        special_level: ell,
        branches,
        excluded,
        expected,
        pi_d: 1.0 - pi_b,
        pi_complement: pi_b,
    })
}

/// `(𝓔(f), E_π(τ_A))` for `f(k) = E_k(τ_A)` with `A = {target}`; the two agree.
pub fn dirichlet_identity(chain: &CollapsedChain, target: usize) -> Result<(f64, f64)> {
    let (f, _) = level_hitting_all(chain, target)?;
    let energy = (0..chain.top())
        .map(|k| chain.mass(k) * chain.down(k) * (f[k + 1] - f[k]).powi(2))
        .sum();
    let expected = (0..=chain.top()).map(|k| chain.mass(k) * f[k]).sum();
    Ok((energy, expected))
}

/// Exact means of the time spent off-path (`S`) and on-path (`R`) before
/// `τ_y`, started from `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occupation {
    pub mean_r: f64,
    pub mean_s: f64,
    /// Stationary mass of the off-path set.
    pub offpath_mass: f64,
}

pub fn offpath_occupation(profile: &TreeProfile, pair: &VertexPair) -> Result<Occupation> {
    let chain = QuotientChain::for_hitting(profile, pair)?;
    let y = chain.y_state().expect("pair marking has y");
    let offpath = chain.offpath_states();
    let transient: Vec<usize> = (0..chain.n_states()).filter(|&i| i != y).collect();
    let m = transient.len();
    let mut index = vec![usize::MAX; chain.n_states()];
    for (k, &i) in transient.iter().enumerate() {
        index[i] = k;
    }
    let mut a = vec![0.0; m * m];
    for (k, &i) in transient.iter().enumerate() {
        a[k * m + k] += 1.0;
        for &(j, p) in chain.row(i) {
            if j != y {
                a[k * m + index[j]] -= p;
            }
        }
    }
    let lu = LuSolver::new(m, a)?;
    let total = lu.solve(&vec![1.0; m])?;
    let rhs: Vec<f64> = transient
        .iter()
        .map(|&i| f64::from(u8::from(offpath[i])))
        .collect();
    let s = lu.solve(&rhs)?;
    let x = index[chain.x_state()];
    let offpath_mass = offpath
        .iter()
        .zip(chain.states())
        .filter(|(o, _)| **o)
        .map(|(_, st)| st.mass)
        .sum();
    Ok(Occupation {
        mean_r: total[x] - s[x],
        mean_s: s[x],
        offpath_mass,
    })
}
