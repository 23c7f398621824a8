//! Inequality harness: evaluates every bound on a tree (or a corpus) and
//! records both sides, the margin, and a verdict.
//!
//! A check passes when `lhs >= rhs · (1 - 1e-9)` for every instance. The
//! only hard-coded numbers are the constants 144, 484, 121 and 7, and they
//! only ever scale a right-hand side. Agreement checks (two routes to the
//! same quantity) are phrased the same way with `lhs` the tolerance and
//! `rhs` the observed discrepancy.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::chain::collapse;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::hitting::{
    dirichlet_identity, expected_return_time, hitting_moments, level_hitting_all,
    level_hitting_moments, return_moments, stationary_set_hitting, HittingMoments,
};
use crate::mixing::{
    coupling_bound, mixing_time_with, mixing_times, worst_start_level, DEFAULT_STEP_CAP,
};
use crate::spectral::{decomposed_spectrum, dense_spectrum, fill_moments, g2_lower_bound};
use crate::tree::{
    explicit_tree, pi_offpath_mass, representative_pairs, special_level, PairKind, TreeProfile,
    VertexPair, DEFAULT_ORACLE_CAP,
};

/// Bound on `t_mix / t_rel`.
pub const MIX_REL_CONSTANT: f64 = 144.0;
/// Bound on `E² / Var` for all hitting and return times.
pub const HITTING_CONSTANT: f64 = 484.0;
/// Bound on `E² / Var` when the target is an ancestor, and for level chains.
pub const ANCESTOR_CONSTANT: f64 = 121.0;
/// Denominator in the concave-function inequality.
pub const CONCAVE_CONSTANT: f64 = 7.0;

/// Relative slack allowed on every inequality.
pub const INEQUALITY_TOL: f64 = 1e-9;
/// Agreement between geometric and linear-system moments (relative).
pub const FILL_TOL: f64 = 1e-8;
/// Agreement between decomposed and dense spectra (absolute).
pub const SPECTRAL_TOL: f64 = 1e-9;
/// Agreement of the Dirichlet-form identity and path additivity (relative).
pub const IDENTITY_TOL: f64 = 1e-9;

/// Names of all checks, in report order.
pub const CHECK_NAMES: [&str; 16] = [
    "mix_rel_ratio",
    "hitting_concentration",
    "ancestor_concentration",
    "level_chain_concentration",
    "offpath_variance",
    "coupling_bound",
    "set_hitting_gap",
    "test_function_gap",
    "test_function_floor",
    "killed_perron_floor",
    "rayleigh_bound",
    "fill_agreement",
    "spectral_oracle",
    "dirichlet_identity",
    "path_additivity",
    "return_time_identity",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    /// Both sides of the tightest instance.
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs - rhs` of the tightest instance.
    pub margin: f64,
    pub pass: bool,
    /// Number of instances evaluated; 0 when the check does not apply.
    pub instances: u64,
}

struct Accumulator {
    name: &'static str,
    worst: Option<(f64, f64)>,
    pass: bool,
    instances: u64,
}

impl Accumulator {
    fn new(name: &'static str) -> Self {
        Accumulator {
            name,
            worst: None,
            pass: true,
            instances: 0,
        }
    }

    fn slack(lhs: f64, rhs: f64) -> f64 {
        if rhs > 0.0 {
            lhs / rhs
        } else if lhs >= rhs {
            f64::MAX
        } else {
            f64::MIN
        }
    }

    fn record(&mut self, lhs: f64, rhs: f64) {
        self.instances += 1;
        let ok = lhs >= rhs * (1.0 - INEQUALITY_TOL);
        self.pass &= ok;
        let tighter = match self.worst {
            None => true,
            Some((l, r)) => Self::slack(lhs, rhs) < Self::slack(l, r),
        };
        if tighter || !ok && self.pass {
            self.worst = Some((lhs, rhs));
        }
    }

    /// Records an agreement check `discrepancy <= tol`.
    fn agree(&mut self, tol: f64, discrepancy: f64) {
        // NaN discrepancies must fail
        self.record(
            tol,
            if discrepancy.is_nan() {
                f64::MAX
            } else {
                discrepancy
            },
        );
    }

    fn finish(self) -> CheckRecord {
        let (lhs, rhs) = self.worst.unwrap_or((0.0, 0.0));
        CheckRecord {
            name: self.name.to_string(),
            lhs,
            rhs,
            margin: lhs - rhs,
            pass: self.pass,
            instances: self.instances,
        }
    }
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub tree: String,
    pub children: Vec<u64>,
    pub vertices: u64,
    pub height: usize,
    pub t_mix: u64,
    pub t_rel: f64,
    /// `t_mix / t_rel`.
    pub ratio: f64,
    /// Smallest `Var / E²` over all distinct pairs and return times.
    pub min_concentration: f64,
    /// Start level with the largest distance at `t_mix`.
    pub worst_start_level: usize,
    pub checks: Vec<CheckRecord>,
    pub elapsed_ms: f64,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&CheckRecord> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    /// Largest tree for the dense spectral oracle.
    pub oracle_cap: u64,
    pub step_cap: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            oracle_cap: DEFAULT_ORACLE_CAP,
            step_cap: DEFAULT_STEP_CAP,
        }
    }
}

pub fn check_tree(profile: &TreeProfile) -> Result<VerifyReport> {
    check_tree_with(profile, &VerifyOptions::default())
}

pub fn check_tree_with(profile: &TreeProfile, options: &VerifyOptions) -> Result<VerifyReport> {
    let started = Instant::now();
    profile.require_edges()?;
    let h = profile.height();
    let chain = collapse(profile)?;
    let spectrum = decomposed_spectrum(profile)?;
    let lambda2 = spectrum.second().expect("at least two eigenvalues");
    let t_rel = 1.0 / (1.0 - lambda2);
    let t_mix = mixing_time_with(profile, 0.25, options.step_cap, Execution::Sequential)?;

    let mut mix_rel = Accumulator::new("mix_rel_ratio");
    mix_rel.record(t_rel, t_mix as f64 / MIX_REL_CONSTANT);

    // hitting and return times
    let mut hitting = Accumulator::new("hitting_concentration");
    let mut ancestor = Accumulator::new("ancestor_concentration");
    let mut offpath = Accumulator::new("offpath_variance");
    let mut additivity = Accumulator::new("path_additivity");
    let mut returns = Accumulator::new("return_time_identity");
    let mut min_concentration = f64::INFINITY;

    let pairs = representative_pairs(profile);
    let mut moments: std::collections::HashMap<VertexPair, HittingMoments> =
        std::collections::HashMap::with_capacity(pairs.len());
    for pair in &pairs {
        moments.insert(*pair, hitting_moments(profile, pair)?);
    }
    for pair in &pairs {
        let m = moments[pair];
        let e2 = m.mean * m.mean;
        min_concentration = min_concentration.min(m.variance / e2);
        hitting.record(m.variance, e2 / HITTING_CONSTANT);
        if pair.kind() == PairKind::YAncestor {
            ancestor.record(m.variance, e2 / ANCESTOR_CONSTANT);
        }
        let g = pi_offpath_mass(profile, pair)?;
        offpath.record(m.variance, g * g * e2);
        if pair.kind() == PairKind::Branching {
            let up = moments[&VertexPair::new(pair.lx, pair.lq, pair.lq)];
            let down = moments[&VertexPair::new(pair.lq, pair.ly, pair.lq)];
            additivity.agree(IDENTITY_TOL, relative_error(up.mean + down.mean, m.mean));
            additivity.agree(
                IDENTITY_TOL,
                relative_error(up.variance + down.variance, m.variance),
            );
        }
    }
    for level in 0..=h {
        let m = return_moments(profile, level)?;
        let e2 = m.mean * m.mean;
        min_concentration = min_concentration.min(m.variance / e2);
        hitting.record(m.variance, e2 / HITTING_CONSTANT);
        returns.agree(
            IDENTITY_TOL,
            relative_error(m.mean, expected_return_time(profile, level)),
        );
    }

    // level chain absorbed at the root
    let mut level_chain = Accumulator::new("level_chain_concentration");
    let (e0, s0) = level_hitting_all(&chain, 0)?;
    for start in 1..=h {
        let var = s0[start] - e0[start] * e0[start];
        level_chain.record(var, e0[start] * e0[start] / ANCESTOR_CONSTANT);
    }
    let fill = fill_moments(&chain, h, 0)?;
    let linear = level_hitting_moments(&chain, h, 0)?;
    let mut fill_check = Accumulator::new("fill_agreement");
    fill_check.agree(FILL_TOL, relative_error(fill.mean, linear.mean));
    fill_check.agree(FILL_TOL, relative_error(fill.variance, linear.variance));
    let mut perron = Accumulator::new("killed_perron_floor");
    perron.record(fill.top_eigenvalue(), 0.5);
    let mut rayleigh = Accumulator::new("rayleigh_bound");
    rayleigh.record(
        1.0 / (1.0 - fill.top_eigenvalue()),
        linear.mean / CONCAVE_CONSTANT,
    );

    let mut dirichlet = Accumulator::new("dirichlet_identity");
    for target in 0..=h {
        let (energy, expected) = dirichlet_identity(&chain, target)?;
        dirichlet.agree(IDENTITY_TOL, relative_error(energy, expected));
    }

    let mut coupling = Accumulator::new("coupling_bound");
    coupling.record(coupling_bound(profile)?.bound, t_mix as f64);

    let mut set_gap = Accumulator::new("set_hitting_gap");
    let ell = special_level(profile)?;
    let branches = profile.children_at(ell);
    for b in 1..branches {
        let s = stationary_set_hitting(profile, b)?;
        set_gap.record(t_rel, s.gap_bound());
    }

    let mut g2_gap = Accumulator::new("test_function_gap");
    let mut g2_floor = Accumulator::new("test_function_floor");
    if ell >= 1 {
        let g2 = g2_lower_bound(profile)?;
        g2_gap.record(t_rel, g2.bound);
        g2_floor.record(g2.bound, (ell * ell) as f64 / 3.0);
    }

    let mut oracle = Accumulator::new("spectral_oracle");
    if profile.vertex_count() <= options.oracle_cap {
        let tree = explicit_tree(profile, options.oracle_cap)?;
        let dense = dense_spectrum(&tree)?;
        let diff = spectrum.max_abs_difference(&dense).unwrap_or(f64::MAX);
        oracle.agree(SPECTRAL_TOL, diff);
    }

    let checks = vec![
        mix_rel,
        hitting,
        ancestor,
        level_chain,
        offpath,
        coupling,
        set_gap,
        g2_gap,
        g2_floor,
        perron,
        rayleigh,
        fill_check,
        oracle,
        dirichlet,
        additivity,
        returns,
    ]
    .into_iter()
    .map(Accumulator::finish)
    .collect();

    Ok(VerifyReport {
        tree: profile.label(),
        children: profile.children().to_vec(),
        vertices: profile.vertex_count(),
        height: h,
        t_mix,
        t_rel,
        ratio: t_mix as f64 / t_rel,
        min_concentration,
        worst_start_level: worst_start_level(profile, t_mix)?,
        checks,
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

/// Checks every profile; reports come back in corpus order.
pub fn check_corpus(
    profiles: &[TreeProfile],
    options: &VerifyOptions,
    exec: Execution,
) -> Vec<Result<VerifyReport>> {
    exec.map(profiles, |p| check_tree_with(p, options))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcaveCheck {
    /// `E_w(f²)`.
    pub lhs: f64,
    /// `f(last)² / 7`.
    pub rhs: f64,
    pub pass: bool,
}

const PRECONDITION_TOL: f64 = 1e-12;

/// `E_w(f²) >= f(h+1)² / 7` for concave increasing `f` with `f(0) = 0` and
/// weights nondecreasing on `0..=h` with `w(0) <= w(h+1)`.
pub fn check_concave_lemma(f: &[f64], w: &[f64]) -> Result<ConcaveCheck> {
    let violated = |msg: String| Err(Error::PreconditionViolated(msg));
    if f.len() < 3 {
        return violated(format!("need at least 3 points, got {}", f.len()));
    }
    if w.len() != f.len() {
        return violated(format!("f has {} points but w has {}", f.len(), w.len()));
    }
    if f[0].abs() > PRECONDITION_TOL {
        return violated(format!("f(0) = {} is not 0", f[0]));
    }
    for i in 1..f.len() {
        if f[i] < f[i - 1] - PRECONDITION_TOL {
            return violated(format!("f is not increasing at {i}"));
        }
        if i + 1 < f.len() && f[i + 1] - f[i] > f[i] - f[i - 1] + PRECONDITION_TOL {
            return violated(format!("f is not concave at {i}"));
        }
    }
    if w.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return violated("w has a negative or non-finite entry".into());
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return violated(format!("w sums to {total}, not 1"));
    }
    let last = w.len() - 1;
    for i in 1..last {
        if w[i] < w[i - 1] - PRECONDITION_TOL {
            return violated(format!("w decreases at {i}"));
        }
    }
    if w[0] > w[last] + PRECONDITION_TOL {
        return violated("w(0) exceeds the last weight".into());
    }
    let lhs: f64 = f.iter().zip(w).map(|(fi, wi)| wi * fi * fi).sum();
    let rhs = f[last] * f[last] / CONCAVE_CONSTANT;
    Ok(ConcaveCheck {
        lhs,
        rhs,
        pass: lhs >= rhs * (1.0 - INEQUALITY_TOL),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Segment,
    Binary,
    Custom,
}

/// A sequence of trees indexed by height: `{"family": "binary", "h_range": [2, 8]}`.
///
/// For `custom`, `children` is a per-level pattern repeated cyclically to
/// the member's height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub family: FamilyKind,
    pub h_range: [usize; 2],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<i64>,
}

impl FamilySpec {
    pub fn members(&self) -> Result<Vec<TreeProfile>> {
        let [lo, hi] = self.h_range;
        if lo > hi {
            return Ok(Vec::new());
        }
        if lo == 0 {
            return Err(Error::InvalidArgument(
                "family heights must start at 1 or more".into(),
            ));
        }
        if self.family == FamilyKind::Custom && self.children.is_empty() {
            return Err(Error::InvalidArgument(
                "custom family needs a non-empty children pattern".into(),
            ));
        }
        (lo..=hi)
            .map(|h| {
                let children: Vec<i64> = match self.family {
                    FamilyKind::Segment => vec![1; h],
                    FamilyKind::Binary => vec![2; h],
                    FamilyKind::Custom => self.children.iter().copied().cycle().take(h).collect(),
                };
                crate::tree::build_profile(&children)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffRow {
    pub index: usize,
    pub tree: String,
    pub height: usize,
    pub vertices: u64,
    pub t_rel: f64,
    pub epsilons: Vec<f64>,
    /// `t_mix(ε)` for each entry of `epsilons`.
    pub t_mix: Vec<u64>,
    /// `(ε, t_mix(ε) / t_mix(1 - ε))` for each `ε < 1/2` whose complement is
    /// in the grid. Infinite when `t_mix(1 - ε) = 0`.
    pub window_ratios: Vec<(f64, f64)>,
    /// `t_mix(ε) / t_rel` per grid entry.
    pub product_ratios: Vec<f64>,
    pub t_mix_quarter: u64,
    /// `t_mix(1/4) / t_rel <= 144`.
    pub bounded: bool,
    /// `t_mix` nonincreasing in ε.
    pub monotone: bool,
}

pub fn cutoff_table(
    members: &[TreeProfile],
    grid: &[f64],
    exec: Execution,
) -> Result<Vec<CutoffRow>> {
    let mut eps: Vec<f64> = grid.to_vec();
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    let rows = exec.map_range(members.len(), |index| -> Result<CutoffRow> {
        let profile = &members[index];
        let mut with_quarter = eps.clone();
        with_quarter.push(0.25);
        let mut times = mixing_times(
            profile,
            &with_quarter,
            DEFAULT_STEP_CAP,
            Execution::Sequential,
        )?;
        let t_mix_quarter = times.pop().unwrap();
        let t_rel = crate::spectral::lambda2(profile)?.t_rel;
        let window_ratios = eps
            .iter()
            .enumerate()
            .filter(|(_, &e)| e < 0.5)
            .filter_map(|(i, &e)| {
                eps.iter()
                    .position(|&o| (o - (1.0 - e)).abs() < 1e-12)
                    .map(|j| {
                        let ratio = if times[j] == 0 {
                            f64::INFINITY
                        } else {
                            times[i] as f64 / times[j] as f64
                        };
                        (e, ratio)
                    })
            })
            .collect();
        Ok(CutoffRow {
            index,
            tree: profile.label(),
            height: profile.height(),
            vertices: profile.vertex_count(),
            t_rel,
            product_ratios: times.iter().map(|&t| t as f64 / t_rel).collect(),
            monotone: times.windows(2).all(|w| w[1] <= w[0]),
            bounded: t_mix_quarter as f64 / t_rel <= MIX_REL_CONSTANT * (1.0 + INEQUALITY_TOL),
            epsilons: eps.clone(),
            t_mix: times,
            window_ratios,
            t_mix_quarter,
        })
    });
    rows.into_iter().collect()
}
