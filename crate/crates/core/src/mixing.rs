//! Total-variation distance to stationarity, mixing times, and the coupling
//! upper bound.
//!
//! The worst case over starting vertices reduces to one start per level:
//! level-preserving automorphisms act transitively on each level, so
//! same-level starts have the same distance to `π`. For each start the
//! evolution runs on the quotient whose spine is the root path to it.

use serde::{Deserialize, Serialize};

use crate::chain::{step_into, Kernel, QuotientChain};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::hitting::level_hitting_all;
use crate::tree::TreeProfile;

/// Default ε grid for mixing profiles and cutoff tables.
pub const DEFAULT_EPS_GRID: [f64; 8] = [0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99];

/// Default cap on the number of steps searched by the mixing-time routines.
pub const DEFAULT_STEP_CAP: u64 = 10_000_000;

/// `(1/2) Σ m_i |d1_i - d2_i|`, with `m_i = 1` when no multiplicities are given.
pub fn tv_distance(d1: &[f64], d2: &[f64], multiplicities: Option<&[u64]>) -> Result<f64> {
    if d1.len() != d2.len() {
        return Err(Error::DimensionMismatch {
            expected: d1.len(),
            got: d2.len(),
        });
    }
    if let Some(m) = multiplicities {
        if m.len() != d1.len() {
            return Err(Error::DimensionMismatch {
                expected: d1.len(),
                got: m.len(),
            });
        }
    }
    let sum: f64 = d1
        .iter()
        .zip(d2)
        .enumerate()
        .map(|(i, (a, b))| multiplicities.map_or(1.0, |m| m[i] as f64) * (a - b).abs())
        .sum();
    Ok(0.5 * sum)
}

/// Time-`t` law of the walk from one level representative, lumped.
#[derive(Debug, Clone)]
struct Evolution<'a> {
    chain: &'a QuotientChain,
    dist: Vec<f64>,
    scratch: Vec<f64>,
    t: u64,
}

impl<'a> Evolution<'a> {
    fn start(chain: &'a QuotientChain) -> Self {
        let mut dist = vec![0.0; chain.n_states()];
        dist[chain.x_state()] = 1.0;
        Evolution {
            chain,
            scratch: vec![0.0; dist.len()],
            dist,
            t: 0,
        }
    }

    fn advance(&mut self, steps: u64) {
        for _ in 0..steps {
            step_into(self.chain, &self.dist, &mut self.scratch);
            std::mem::swap(&mut self.dist, &mut self.scratch);
        }
        self.t += steps;
    }

    fn distance(&self) -> f64 {
        let pi = self.chain.stationary();
        0.5 * self
            .dist
            .iter()
            .zip(pi)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// Distance to `π` at time `t` for the walk started at a level-`start_level` vertex.
pub fn distance_at(profile: &TreeProfile, start_level: usize, t: u64) -> Result<f64> {
    let chain = QuotientChain::for_vertex(profile, start_level)?;
    let mut evo = Evolution::start(&chain);
    evo.advance(t);
    Ok(evo.distance())
}

/// Distances `d_L(t)` for `t = 0..=horizon` from a single start level.
pub fn distance_curve(profile: &TreeProfile, start_level: usize, horizon: u64) -> Result<Vec<f64>> {
    let chain = QuotientChain::for_vertex(profile, start_level)?;
    let mut evo = Evolution::start(&chain);
    let mut out = Vec::with_capacity(horizon as usize + 1);
    out.push(evo.distance());
    for _ in 0..horizon {
        evo.advance(1);
        out.push(evo.distance());
    }
    Ok(out)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )))
    }
}

/// First `t` with `d_L(t) <= ε` from one start level, by doubling then
/// bisection on the monotone distance.
pub fn level_mixing_time(
    profile: &TreeProfile,
    start_level: usize,
    epsilon: f64,
    cap: u64,
) -> Result<u64> {
    check_epsilon(epsilon)?;
    let chain = QuotientChain::for_vertex(profile, start_level)?;
    let mut lo = Evolution::start(&chain);
    if lo.distance() <= epsilon {
        return Ok(0);
    }
    let mut step = 1u64;
    let hi = loop {
        if lo.t + step > cap {
            // last chance: probe exactly at the cap
            let mut probe = lo.clone();
            probe.advance(cap - lo.t);
            if probe.distance() <= epsilon {
                break cap;
            }
            return Err(Error::NonConvergence { epsilon, cap });
        }
        let mut probe = lo.clone();
        probe.advance(step);
        if probe.distance() <= epsilon {
            break probe.t;
        }
        lo = probe;
        step *= 2;
    };
    let mut hi = hi;
    while hi - lo.t > 1 {
        let mid = lo.t + (hi - lo.t) / 2;
        let mut probe = lo.clone();
        probe.advance(mid - lo.t);
        if probe.distance() <= epsilon {
            hi = mid;
        } else {
            lo = probe;
        }
    }
    Ok(hi)
}

/// `t_mix(ε)` with the default step cap.
pub fn mixing_time(profile: &TreeProfile, epsilon: f64) -> Result<u64> {
    mixing_time_with(profile, epsilon, DEFAULT_STEP_CAP, Execution::default())
}

pub fn mixing_time_with(
    profile: &TreeProfile,
    epsilon: f64,
    cap: u64,
    exec: Execution,
) -> Result<u64> {
    check_epsilon(epsilon)?;
    profile.require_edges()?;
    let per_level = exec.map_range(profile.height() + 1, |level| {
        level_mixing_time(profile, level, epsilon, cap)
    });
    per_level
        .into_iter()
        .try_fold(0, |acc, t| t.map(|t| acc.max(t)))
}

/// `t_mix(ε)` for every ε in `grid` from a single forward scan per level.
pub fn mixing_times(
    profile: &TreeProfile,
    grid: &[f64],
    cap: u64,
    exec: Execution,
) -> Result<Vec<u64>> {
    for &eps in grid {
        check_epsilon(eps)?;
    }
    profile.require_edges()?;
    if grid.is_empty() {
        return Ok(Vec::new());
    }
    let smallest = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let per_level = exec.map_range(profile.height() + 1, |level| -> Result<Vec<u64>> {
        let chain = QuotientChain::for_vertex(profile, level)?;
        let mut evo = Evolution::start(&chain);
        let mut first: Vec<Option<u64>> = vec![None; grid.len()];
        loop {
            let d = evo.distance();
            for (slot, &eps) in first.iter_mut().zip(grid) {
                if slot.is_none() && d <= eps {
                    *slot = Some(evo.t);
                }
            }
            if d <= smallest {
                break;
            }
            if evo.t >= cap {
                return Err(Error::NonConvergence {
                    epsilon: smallest,
                    cap,
                });
            }
            evo.advance(1);
        }
        Ok(first.into_iter().map(|t| t.unwrap()).collect())
    });
    let mut out = vec![0u64; grid.len()];
    for level in per_level {
        for (o, t) in out.iter_mut().zip(level?) {
            *o = (*o).max(t);
        }
    }
    Ok(out)
}

/// Worst-case distance curve with the maximising start level per time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixProfile {
    /// `d(t)` for `t = 0..=horizon`.
    pub distances: Vec<f64>,
    /// Start level achieving `d(t)` (lowest level on ties).
    pub argmax_level: Vec<usize>,
    /// `(ε, t_mix(ε))` pairs.
    pub mixing_times: Vec<(f64, u64)>,
}

pub fn mix_profile(
    profile: &TreeProfile,
    horizon: u64,
    grid: &[f64],
    exec: Execution,
) -> Result<MixProfile> {
    profile.require_edges()?;
    let curves = exec.map_range(profile.height() + 1, |level| {
        distance_curve(profile, level, horizon)
    });
    let curves = curves.into_iter().collect::<Result<Vec<_>>>()?;
    let mut distances = Vec::with_capacity(horizon as usize + 1);
    let mut argmax_level = Vec::with_capacity(horizon as usize + 1);
    for t in 0..=horizon as usize {
        let (level, d) = curves.iter().enumerate().map(|(l, c)| (l, c[t])).fold(
            (0, f64::NEG_INFINITY),
            |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            },
        );
        distances.push(d);
        argmax_level.push(level);
    }
    let times = mixing_times(profile, grid, DEFAULT_STEP_CAP, exec)?;
    Ok(MixProfile {
        distances,
        argmax_level,
        mixing_times: grid.iter().copied().zip(times).collect(),
    })
}

/// Start level with the largest distance at time `t` (lowest on ties).
pub fn worst_start_level(profile: &TreeProfile, t: u64) -> Result<usize> {
    profile.require_edges()?;
    let mut best = (0, f64::NEG_INFINITY);
    for level in 0..=profile.height() {
        let d = distance_at(profile, level, t)?;
        if d > best.1 {
            best = (level, d);
        }
    }
    Ok(best.0)
}

/// Ingredients of the coupling bound `4 (E_o(τ_v*) + 2 E_v(τ_v*))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingBound {
    /// Level of `v*`: the root when it branches or the tree is a segment,
    /// otherwise the first branching level.
    pub anchor_level: usize,
    /// `E_o(τ_v*)`.
    pub from_root: f64,
    /// `E_v(τ_v*)` for a deepest leaf `v`.
    pub from_leaf: f64,
    pub bound: f64,
}

pub fn coupling_bound(profile: &TreeProfile) -> Result<CouplingBound> {
    profile.require_edges()?;
    let anchor_level = if profile.degree(0) >= 2 {
        0
    } else {
        profile.children().iter().position(|&c| c >= 2).unwrap_or(0)
    };
    let chain = crate::chain::collapse(profile)?;
    let (to_anchor, _) = level_hitting_all(&chain, anchor_level)?;
    let from_root = to_anchor[0];
    let from_leaf = to_anchor[profile.height()];
    Ok(CouplingBound {
        anchor_level,
        from_root,
        from_leaf,
        bound: 4.0 * (from_root + 2.0 * from_leaf),
    })
}
