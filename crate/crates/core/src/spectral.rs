//! Spectra of the lazy walk, relaxation times, and the geometric
//! decomposition of hitting moments for birth-and-death chains.
//!
//! The full spectrum of a spherically symmetric tree splits into
//! radial modes (the spectrum of the collapsed chain) and difference modes:
//! for every level `k` with `n_k > n_{k-1}`, the collapsed chain restricted
//! to levels `k..=h` with the upward move out of level `k` killed, repeated
//! `n_k - n_{k-1}` times. [`decomposed_spectrum`] assembles this and
//! [`dense_spectrum`] provides the brute-force reference.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::chain::{collapse, CollapsedChain, Kernel};
use crate::error::{Error, Result};
use crate::linalg::tridiagonal_eigen;
use crate::tree::{special_level, ExplicitTree, TreeProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumSource {
    DenseOracle,
    Decomposition,
}

impl SpectrumSource {
    pub fn as_str(self) -> &'static str {
        match self {
            SpectrumSource::DenseOracle => "dense-oracle",
            SpectrumSource::Decomposition => "decomposition",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub value: f64,
    pub multiplicity: u64,
}

/// Eigenvalues sorted in descending order, with multiplicities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    entries: Vec<Eigenvalue>,
    source: SpectrumSource,
}

impl Spectrum {
    fn new(mut entries: Vec<Eigenvalue>, source: SpectrumSource) -> Self {
        entries.sort_by(|a, b| b.value.total_cmp(&a.value));
        Spectrum { entries, source }
    }

    pub fn entries(&self) -> &[Eigenvalue] {
        &self.entries
    }

    pub fn source(&self) -> SpectrumSource {
        self.source
    }

    /// Multiplicity-weighted number of eigenvalues.
    pub fn count(&self) -> u64 {
        self.entries.iter().map(|e| e.multiplicity).sum()
    }

    /// Every eigenvalue repeated by multiplicity, descending.
    pub fn expanded(&self) -> Vec<f64> {
        self.entries
            .iter()
            .flat_map(|e| std::iter::repeat_n(e.value, e.multiplicity as usize))
            .collect()
    }

    /// Adjacent eigenvalues within `tol` folded into one entry.
    pub fn merged(&self, tol: f64) -> Vec<Eigenvalue> {
        let mut out: Vec<Eigenvalue> = Vec::new();
        for e in &self.entries {
            match out.last_mut() {
                Some(last) if (last.value - e.value).abs() <= tol => {
                    last.multiplicity += e.multiplicity
                }
                _ => out.push(*e),
            }
        }
        out
    }

    /// Second largest eigenvalue counted with multiplicity.
    pub fn second(&self) -> Option<f64> {
        let mut seen = 0;
        for e in &self.entries {
            seen += e.multiplicity;
            if seen >= 2 {
                return Some(e.value);
            }
        }
        None
    }

    /// Largest absolute difference between the two sorted multisets, or
    /// `None` when the counts differ.
    pub fn max_abs_difference(&self, other: &Spectrum) -> Option<f64> {
        let a = self.expanded();
        let b = other.expanded();
        (a.len() == b.len()).then(|| {
            a.iter()
                .zip(&b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        })
    }
}

/// Full symmetric eigensolve of `D^{1/2} P D^{-1/2}` on an explicit tree.
///
/// nalgebra supplies the eigenvalues; they are then certified by Sylvester
/// inertia counts on the tree itself. (nalgebra's eigenvectors are not used:
/// on some highly degenerate trees they come back inaccurate even though the
/// eigenvalues are right.)
pub fn dense_spectrum(tree: &ExplicitTree) -> Result<Spectrum> {
    let n = tree.vertex_count();
    let deg: Vec<f64> = (0..n).map(|v| tree.degree(v) as f64).collect();
    let mut sym = DMatrix::<f64>::zeros(n, n);
    for u in 0..n {
        if deg[u] == 0.0 {
            sym[(u, u)] = 1.0;
            continue;
        }
        sym[(u, u)] = 0.5;
        for &w in tree.neighbors(u) {
            sym[(u, w)] = 0.5 / (deg[u] * deg[w]).sqrt();
        }
    }
    let mut values: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    certify_eigenvalues(tree, &values)?;
    let entries = values
        .iter()
        .rev()
        .map(|&value| Eigenvalue {
            value,
            multiplicity: 1,
        })
        .collect();
    Ok(Spectrum::new(entries, SpectrumSource::DenseOracle))
}

/// Values closer than this are treated as one cluster when certifying.
const CLUSTER_GAP: f64 = 1e-10;
/// Largest shift away from a cluster when counting.
const CERTIFY_SHIFT: f64 = 1e-9;

/// Number of eigenvalues of the symmetrised transition matrix below `sigma`,
/// from the signs of an `LDLᵀ` factorisation of `S - σI` eliminated leaves
/// first (no fill-in on a tree).
pub fn eigenvalues_below(tree: &ExplicitTree, sigma: f64) -> usize {
    let n = tree.vertex_count();
    if n == 1 {
        return usize::from(1.0 < sigma);
    }
    let mut pivot = vec![0.0; n];
    let mut negative = 0;
    // BFS numbering puts every child after its parent
    for v in (0..n).rev() {
        let dv = tree.degree(v) as f64;
        let mut d = 0.5 - sigma;
        for &c in tree.children(v) {
            let off = 0.5 / (dv * tree.degree(c) as f64).sqrt();
            d -= off * off / pivot[c];
        }
        if d == 0.0 {
            d = -f64::EPSILON * f64::EPSILON;
        }
        if d < 0.0 {
            negative += 1;
        }
        pivot[v] = d;
    }
    negative
}

/// Checks that every cluster of `values` (ascending) holds exactly as many
/// eigenvalues as the inertia counts around it report.
fn certify_eigenvalues(tree: &ExplicitTree, values: &[f64]) -> Result<()> {
    let mut i = 0;
    while i < values.len() {
        let mut j = i + 1;
        while j < values.len() && values[j] - values[j - 1] <= CLUSTER_GAP {
            j += 1;
        }
        let below_gap = if i > 0 {
            values[i] - values[i - 1]
        } else {
            f64::INFINITY
        };
        let above_gap = if j < values.len() {
            values[j] - values[j - 1]
        } else {
            f64::INFINITY
        };
        let lo = values[i] - CERTIFY_SHIFT.min(below_gap / 2.0);
        let hi = values[j - 1] + CERTIFY_SHIFT.min(above_gap / 2.0);
        let got = eigenvalues_below(tree, hi) - eigenvalues_below(tree, lo);
        if got != j - i {
            return Err(Error::EigenvalueCount {
                near: values[i],
                expected: (j - i) as u64,
                got: got as u64,
            });
        }
        i = j;
    }
    Ok(())
}

fn restriction_eigenvalues(chain: &CollapsedChain, from: usize) -> Result<Vec<f64>> {
    let (diag, off) = chain.symmetric_restriction(from);
    Ok(tridiagonal_eigen(&diag, &off)?.values)
}

/// Eigenvalues of the collapsed chain restricted to levels `k..=h`.
pub fn dirichlet_spectrum(profile: &TreeProfile, k: usize) -> Result<Spectrum> {
    let chain = collapse(profile)?;
    if k == 0 || k > profile.height() {
        return Err(Error::InvalidArgument(format!(
            "killed level must be in 1..={}, got {k}",
            profile.height()
        )));
    }
    let entries = restriction_eigenvalues(&chain, k)?
        .into_iter()
        .map(|value| Eigenvalue {
            value,
            multiplicity: 1,
        })
        .collect();
    Ok(Spectrum::new(entries, SpectrumSource::Decomposition))
}

/// Spectrum of the collapsed chain (the radial modes).
pub fn radial_spectrum(profile: &TreeProfile) -> Result<Spectrum> {
    let chain = collapse(profile)?;
    let entries = restriction_eigenvalues(&chain, 0)?
        .into_iter()
        .map(|value| Eigenvalue {
            value,
            multiplicity: 1,
        })
        .collect();
    Ok(Spectrum::new(entries, SpectrumSource::Decomposition))
}

/// Full spectrum from radial and difference modes.
pub fn decomposed_spectrum(profile: &TreeProfile) -> Result<Spectrum> {
    let chain = collapse(profile)?;
    let mut entries: Vec<Eigenvalue> = restriction_eigenvalues(&chain, 0)?
        .into_iter()
        .map(|value| Eigenvalue {
            value,
            multiplicity: 1,
        })
        .collect();
    for k in 1..=profile.height() {
        let extra = profile.level_size(k) - profile.level_size(k - 1);
        if extra == 0 {
            continue;
        }
        entries.extend(
            restriction_eigenvalues(&chain, k)?
                .into_iter()
                .map(|value| Eigenvalue {
                    value,
                    multiplicity: extra,
                }),
        );
    }
    let spectrum = Spectrum::new(entries, SpectrumSource::Decomposition);
    if spectrum.count() != profile.vertex_count() {
        return Err(Error::DecompositionMismatch {
            expected: profile.vertex_count(),
            got: spectrum.count(),
        });
    }
    Ok(spectrum)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Relaxation {
    pub lambda2: f64,
    pub t_rel: f64,
}

/// Second eigenvalue and relaxation time `1 / (1 - λ₂)`.
pub fn lambda2(profile: &TreeProfile) -> Result<Relaxation> {
    let spectrum = decomposed_spectrum(profile)?;
    let lambda2 = spectrum
        .second()
        .expect("a tree with an edge has at least two eigenvalues");
    Ok(Relaxation {
        lambda2,
        t_rel: 1.0 / (1.0 - lambda2),
    })
}

/// Mean and variance of the absorption time at 0 from the far end, as a sum
/// of independent geometric variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillMoments {
    pub mean: f64,
    pub variance: f64,
    /// Eigenvalues of the chain killed at 0, descending.
    pub eigenvalues: Vec<f64>,
}

impl FillMoments {
    /// Perron eigenvalue of the killed chain.
    pub fn top_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }
}

pub fn fill_moments(chain: &CollapsedChain, start: usize, target: usize) -> Result<FillMoments> {
    let top = chain.top();
    if target != 0 {
        return Err(Error::InvalidArgument(format!(
            "absorbing target must be state 0, got {target}"
        )));
    }
    if start != top {
        return Err(Error::InvalidStart {
            expected: top,
            got: start,
        });
    }
    let mut eigenvalues = restriction_eigenvalues(chain, 1)?;
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    let mean = eigenvalues.iter().map(|g| 1.0 / (1.0 - g)).sum();
    let variance = eigenvalues
        .iter()
        .map(|g| g / ((1.0 - g) * (1.0 - g)))
        .sum();
    Ok(FillMoments {
        mean,
        variance,
        eigenvalues,
    })
}

/// Rayleigh quotient of the level function `min(level, ℓ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionBound {
    pub special_level: usize,
    pub variance: f64,
    pub dirichlet: f64,
    /// `variance / dirichlet`, a lower bound on the relaxation time.
    pub bound: f64,
}

pub fn g2_lower_bound(profile: &TreeProfile) -> Result<TestFunctionBound> {
    let ell = special_level(profile)?;
    if ell == 0 {
        return Err(Error::ConstantTestFunction);
    }
    let chain = collapse(profile)?;
    let g = |k: usize| k.min(ell) as f64;
    let h = profile.height();
    let mean: f64 = (0..=h).map(|k| chain.mass(k) * g(k)).sum();
    let variance = (0..=h)
        .map(|k| chain.mass(k) * (g(k) - mean).powi(2))
        .sum::<f64>();
    // each unordered edge between levels k and k+1 appears twice in the
    // symmetric sum, cancelling the 1/2
    let dirichlet = (0..h)
        .map(|k| chain.mass(k) * chain.down(k) * (g(k + 1) - g(k)).powi(2))
        .sum::<f64>();
    Ok(TestFunctionBound {
        special_level: ell,
        variance,
        dirichlet,
        bound: variance / dirichlet,
    })
}

/// Checks that `chain` satisfies detailed balance to `tol`.
pub fn detailed_balance_defect<K: Kernel + ?Sized>(chain: &K) -> f64 {
    let pi = chain.stationary();
    let mut worst: f64 = 0.0;
    for i in 0..chain.n_states() {
        for &(j, p) in chain.row(i) {
            let back = chain
                .row(j)
                .iter()
                .find(|(k, _)| *k == i)
                .map_or(0.0, |(_, q)| *q);
            worst = worst.max((pi[i] * p - pi[j] * back).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{build_profile, explicit_tree};

    fn profile(c: &[i64]) -> TreeProfile {
        build_profile(c).unwrap()
    }

    fn assert_values(spec: &Spectrum, expected: &[f64], tol: f64) {
        let got = spec.expanded();
        assert_eq!(got.len(), expected.len(), "{got:?}");
        for (g, e) in got.iter().zip(expected) {
            assert!((g - e).abs() < tol, "{got:?} vs {expected:?}");
        }
    }

    #[test]
    fn dense_star_and_edge() {
        // characteristic polynomial of the lazy star on 3 vertices:
        // (λ - 1)(λ - 1/2)λ
        let star = explicit_tree(&profile(&[2]), 100).unwrap();
        assert_values(&dense_spectrum(&star).unwrap(), &[1.0, 0.5, 0.0], 1e-12);

        let k2 = explicit_tree(&profile(&[1]), 100).unwrap();
        assert_values(&dense_spectrum(&k2).unwrap(), &[1.0, 0.0], 1e-12);
    }

    #[test]
    fn dense_binary_count() {
        let t = explicit_tree(&profile(&[2, 2]), 100).unwrap();
        let s = dense_spectrum(&t).unwrap();
        assert_eq!(s.count(), 7);
        assert_eq!(s.source(), SpectrumSource::DenseOracle);
    }

    #[test]
    fn dirichlet_small() {
        assert_values(
            &dirichlet_spectrum(&profile(&[2]), 1).unwrap(),
            &[0.5],
            1e-15,
        );
        assert_values(
            &dirichlet_spectrum(&profile(&[2, 2]), 2).unwrap(),
            &[0.5],
            1e-15,
        );
        // killed segment [[1/2, 1/4], [1/2, 1/2]]: λ = 1/2 ± sqrt(1/8)
        let r = (0.125f64).sqrt();
        assert_values(
            &dirichlet_spectrum(&profile(&[1, 1]), 1).unwrap(),
            &[0.5 + r, 0.5 - r],
            1e-14,
        );
        assert!(dirichlet_spectrum(&profile(&[1, 1]), 0).is_err());
        assert!(dirichlet_spectrum(&profile(&[1, 1]), 3).is_err());
    }

    #[test]
    fn lambda2_examples() {
        let r = lambda2(&profile(&[2])).unwrap();
        assert!((r.lambda2 - 0.5).abs() < 1e-14);
        assert!((r.t_rel - 2.0).abs() < 1e-13);

        let r = lambda2(&profile(&[1])).unwrap();
        assert!(r.lambda2.abs() < 1e-15);
        assert!((r.t_rel - 1.0).abs() < 1e-14);

        let p = profile(&[2, 2]);
        let dec = decomposed_spectrum(&p).unwrap();
        let dense = dense_spectrum(&explicit_tree(&p, 100).unwrap()).unwrap();
        assert_eq!(dec.count(), 7);
        assert!(dec.max_abs_difference(&dense).unwrap() < 1e-12);
    }

    #[test]
    fn fill_small_cases() {
        let c = collapse(&profile(&[1])).unwrap();
        let f = fill_moments(&c, 1, 0).unwrap();
        assert_eq!(f.eigenvalues, vec![0.5]);
        assert!((f.mean - 2.0).abs() < 1e-14);
        assert!((f.variance - 2.0).abs() < 1e-14);

        // segment of length 2: far end to root takes 2·2² steps on average
        let c = collapse(&profile(&[1, 1])).unwrap();
        let f = fill_moments(&c, 2, 0).unwrap();
        assert!((f.mean - 8.0).abs() < 1e-12);

        assert_eq!(
            fill_moments(&c, 1, 0).unwrap_err(),
            Error::InvalidStart {
                expected: 2,
                got: 1
            }
        );
    }

    #[test]
    fn test_function_on_segments() {
        let b = g2_lower_bound(&profile(&[1, 1])).unwrap();
        assert!((b.variance - 0.5).abs() < 1e-15);
        assert!((b.dirichlet - 0.25).abs() < 1e-15);
        assert!((b.bound - 2.0).abs() < 1e-14);

        let b = g2_lower_bound(&profile(&[1])).unwrap();
        assert!((b.bound - 1.0).abs() < 1e-14);

        assert_eq!(
            g2_lower_bound(&profile(&[2, 2])).unwrap_err(),
            Error::ConstantTestFunction
        );
    }

    #[test]
    fn merged_folds_duplicates() {
        let s = decomposed_spectrum(&profile(&[3, 3])).unwrap();
        let merged = s.merged(1e-12);
        assert_eq!(merged.iter().map(|e| e.multiplicity).sum::<u64>(), 13);
        assert!(merged.len() < 13);
    }

    #[test]
    fn inertia_counts() {
        let tree = explicit_tree(&profile(&[2, 2]), 100).unwrap();
        assert_eq!(eigenvalues_below(&tree, -0.01), 0);
        assert_eq!(eigenvalues_below(&tree, 1.01), 7);
        // spectrum of [2,2]: 1, 0.908.., 0.5 (x3), 0.0917.., 0
        assert_eq!(eigenvalues_below(&tree, 0.49), 2);
        assert_eq!(eigenvalues_below(&tree, 0.51), 5);
    }

    #[test]
    fn dense_oracle_on_degenerate_trees() {
        for c in [[2, 1, 3, 2, 1], [2, 1, 3, 2, 3]] {
            let p = profile(&c);
            let tree = explicit_tree(&p, 5000).unwrap();
            let dense = dense_spectrum(&tree).unwrap();
            let diff = decomposed_spectrum(&p)
                .unwrap()
                .max_abs_difference(&dense)
                .unwrap();
            assert!(diff < 1e-9, "{c:?}: {diff}");
        }
    }
}
