//! Seeded Monte Carlo on quotient chains.
//!
//! Sample `i` draws from its own ChaCha8 stream `(seed, i)`, so results do
//! not depend on how samples are scheduled across threads. Reductions run
//! over the samples in index order with pairwise summation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{Kernel, QuotientChain};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::tree::{TreeProfile, VertexPair};

/// Independent random stream for one sample.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance (0 for a single sample).
fn sample_variance(xs: &[f64], m: f64) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (xs.len() - 1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub count: u64,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    pub seed: u64,
}

impl SampleStats {
    pub fn from_samples(xs: &[f64], seed: u64) -> Self {
        let m = mean(xs);
        let variance = sample_variance(xs, m);
        SampleStats {
            count: xs.len() as u64,
            mean: m,
            variance,
            std_error: (variance / xs.len() as f64).sqrt(),
            seed,
        }
    }

    /// `|mean - exact| <= k · SE`.
    pub fn within(&self, exact: f64, k: f64) -> bool {
        (self.mean - exact).abs() <= k * self.std_error
    }
}

/// Cumulative transition rows for inverse-CDF sampling.
struct Sampler {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Sampler {
    fn new(chain: &QuotientChain) -> Self {
        let rows = (0..chain.n_states())
            .map(|i| {
                let mut acc = 0.0;
                chain
                    .row(i)
                    .iter()
                    .map(|&(j, p)| {
                        acc += p;
                        (j, acc)
                    })
                    .collect()
            })
            .collect();
        Sampler { rows }
    }

    fn next(&self, state: usize, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.gen();
        let row = &self.rows[state];
        row.iter()
            .find(|&&(_, c)| u < c)
            .unwrap_or_else(|| row.last().unwrap())
            .0
    }
}

/// One trajectory from `x` to `y`: `(τ_y, R, S)` where `S` counts steps
/// taken from off-path states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Excursion {
    pub hitting_time: u64,
    pub on_path: u64,
    pub off_path: u64,
}

struct PairSimulation {
    chain: QuotientChain,
    sampler: Sampler,
    offpath: Vec<bool>,
    y: usize,
}

impl PairSimulation {
    fn new(profile: &TreeProfile, pair: &VertexPair) -> Result<Self> {
        let chain = QuotientChain::for_hitting(profile, pair)?;
        let sampler = Sampler::new(&chain);
        let offpath = chain.offpath_states();
        let y = chain.y_state().expect("pair marking has y");
        Ok(PairSimulation {
            chain,
            sampler,
            offpath,
            y,
        })
    }

    fn run(&self, seed: u64, index: u64) -> Excursion {
        let mut rng = sample_rng(seed, index);
        let mut state = self.chain.x_state();
        let mut ex = Excursion {
            hitting_time: 0,
            on_path: 0,
            off_path: 0,
        };
        while state != self.y {
            if self.offpath[state] {
                ex.off_path += 1;
            } else {
                ex.on_path += 1;
            }
            ex.hitting_time += 1;
            state = self.sampler.next(state, &mut rng);
        }
        ex
    }
}

fn check_samples(n_samples: u64) -> Result<()> {
    if n_samples == 0 {
        Err(Error::InvalidArgument(
            "sample count must be at least 1".into(),
        ))
    } else {
        Ok(())
    }
}

pub fn sample_hitting(
    profile: &TreeProfile,
    pair: &VertexPair,
    n_samples: u64,
    seed: u64,
) -> Result<SampleStats> {
    sample_hitting_with(profile, pair, n_samples, seed, Execution::default())
}

pub fn sample_hitting_with(
    profile: &TreeProfile,
    pair: &VertexPair,
    n_samples: u64,
    seed: u64,
    exec: Execution,
) -> Result<SampleStats> {
    let sims = sample_excursions(profile, pair, n_samples, seed, exec)?;
    let xs: Vec<f64> = sims.iter().map(|e| e.hitting_time as f64).collect();
    Ok(SampleStats::from_samples(&xs, seed))
}

/// Raw trajectories, in sample-index order.
pub fn sample_excursions(
    profile: &TreeProfile,
    pair: &VertexPair,
    n_samples: u64,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Excursion>> {
    check_samples(n_samples)?;
    let sim = PairSimulation::new(profile, pair)?;
    Ok(exec.map_range(n_samples as usize, |i| sim.run(seed, i as u64)))
}

/// Sample moments of the on-path time `R` and off-path time `S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RsStats {
    pub count: u64,
    pub seed: u64,
    pub mean_r: f64,
    pub mean_s: f64,
    pub std_error_s: f64,
    pub variance_s: f64,
    /// Standard error of `variance_s`, from the spread of `(S - S̄)²`.
    pub variance_s_std_error: f64,
    pub covariance: f64,
    /// Standard error of `covariance`, from the spread of `(R - R̄)(S - S̄)`.
    pub covariance_std_error: f64,
    /// No off-path states: `S ≡ 0` and `R = τ_y`.
    pub offpath_empty: bool,
}

pub fn sample_rs(
    profile: &TreeProfile,
    pair: &VertexPair,
    n_samples: u64,
    seed: u64,
) -> Result<RsStats> {
    sample_rs_with(profile, pair, n_samples, seed, Execution::default())
}

pub fn sample_rs_with(
    profile: &TreeProfile,
    pair: &VertexPair,
    n_samples: u64,
    seed: u64,
    exec: Execution,
) -> Result<RsStats> {
    check_samples(n_samples)?;
    let sim = PairSimulation::new(profile, pair)?;
    let offpath_empty = !sim.offpath.iter().any(|&o| o);
    let sims = exec.map_range(n_samples as usize, |i| sim.run(seed, i as u64));
    let r: Vec<f64> = sims.iter().map(|e| e.on_path as f64).collect();
    let s: Vec<f64> = sims.iter().map(|e| e.off_path as f64).collect();
    let n = sims.len() as f64;
    let (mr, ms) = (mean(&r), mean(&s));
    let bessel = if sims.len() > 1 { n / (n - 1.0) } else { 0.0 };

    let products: Vec<f64> = r.iter().zip(&s).map(|(a, b)| (a - mr) * (b - ms)).collect();
    let mp = mean(&products);
    let covariance = mp * bessel;
    let covariance_std_error = (sample_variance(&products, mp) / n).sqrt();

    let squares: Vec<f64> = s.iter().map(|b| (b - ms) * (b - ms)).collect();
    let msq = mean(&squares);
    let variance_s = msq * bessel;
    let variance_s_std_error = (sample_variance(&squares, msq) / n).sqrt();

    Ok(RsStats {
        count: sims.len() as u64,
        seed,
        mean_r: mr,
        mean_s: ms,
        std_error_s: (sample_variance(&s, ms) / n).sqrt(),
        variance_s,
        variance_s_std_error,
        covariance,
        covariance_std_error,
        offpath_empty,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::build_profile;

    #[test]
    fn single_edge_mean() {
        let p = build_profile(&[1]).unwrap();
        let s = sample_hitting(&p, &VertexPair::new(1, 0, 0), 10_000, 7).unwrap();
        assert!(s.within(2.0, 4.0), "{s:?}");
        assert_eq!(s.count, 10_000);
    }

    #[test]
    fn same_seed_same_stats() {
        let p = build_profile(&[2, 2]).unwrap();
        let pair = VertexPair::new(2, 0, 0);
        let a = sample_hitting(&p, &pair, 2000, 99).unwrap();
        let b = sample_hitting(&p, &pair, 2000, 99).unwrap();
        assert_eq!(a, b);
        let c = sample_hitting_with(&p, &pair, 2000, 99, Execution::Sequential).unwrap();
        assert_eq!(a, c);
        let d = sample_hitting(&p, &pair, 2000, 100).unwrap();
        assert_ne!(a.mean, d.mean);
    }

    #[test]
    fn empty_offpath_gives_zero_s() {
        let p = build_profile(&[1]).unwrap();
        let rs = sample_rs(&p, &VertexPair::new(0, 1, 0), 500, 3).unwrap();
        assert!(rs.offpath_empty);
        assert_eq!(rs.mean_s, 0.0);
        assert_eq!(rs.covariance, 0.0);
    }

    #[test]
    fn decomposition_is_exact_per_trajectory() {
        let p = build_profile(&[2, 3]).unwrap();
        for pair in [
            VertexPair::new(1, 2, 1),
            VertexPair::new(2, 0, 0),
            VertexPair::new(2, 2, 0),
        ] {
            for e in sample_excursions(&p, &pair, 300, 11, Execution::Sequential).unwrap() {
                assert_eq!(e.on_path + e.off_path, e.hitting_time);
                assert!(e.on_path as usize >= pair.distance());
            }
        }
    }

    #[test]
    fn zero_samples_rejected() {
        let p = build_profile(&[1]).unwrap();
        assert!(sample_hitting(&p, &VertexPair::new(1, 0, 0), 0, 1).is_err());
    }

    #[test]
    fn same_vertex_rejected() {
        let p = build_profile(&[2]).unwrap();
        assert!(matches!(
            sample_rs(&p, &VertexPair::new(1, 1, 1), 10, 1),
            Err(Error::InvalidPair(_))
        ));
    }
}
