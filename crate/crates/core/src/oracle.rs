//! Brute-force computations on the explicit tree.
//!
//! Nothing here uses the symmetry reductions; these are the references the
//! reduced chains are tested against. Linear algebra goes through nalgebra
//! rather than the crate's own solvers.

use nalgebra::{DMatrix, DVector};

use crate::chain::{step_into, Kernel};
use crate::error::{Error, Result};
use crate::tree::ExplicitTree;

/// Lazy simple random walk on every vertex of an explicit tree.
#[derive(Debug, Clone)]
pub struct ExplicitWalk {
    rows: Vec<Vec<(usize, f64)>>,
    stationary: Vec<f64>,
}

impl ExplicitWalk {
    pub fn new(tree: &ExplicitTree) -> Self {
        let rows = (0..tree.vertex_count())
            .map(|v| {
                let nbrs = tree.neighbors(v);
                if nbrs.is_empty() {
                    return vec![(v, 1.0)];
                }
                let p = 0.5 / nbrs.len() as f64;
                let mut row = vec![(v, 0.5)];
                row.extend(nbrs.iter().map(|&w| (w, p)));
                row
            })
            .collect();
        ExplicitWalk {
            rows,
            stationary: tree.stationary(),
        }
    }

    /// Law of the walk after `t` steps from `start`.
    pub fn distribution(&self, start: usize, t: u64) -> Vec<f64> {
        let mut dist = vec![0.0; self.rows.len()];
        dist[start] = 1.0;
        let mut scratch = dist.clone();
        for _ in 0..t {
            step_into(self, &dist, &mut scratch);
            std::mem::swap(&mut dist, &mut scratch);
        }
        dist
    }

    /// `d(t) = ‖P^t(start, ·) − π‖_TV` for `t = 0..=horizon`.
    pub fn distance_curve(&self, start: usize, horizon: u64) -> Vec<f64> {
        let mut dist = vec![0.0; self.rows.len()];
        dist[start] = 1.0;
        let mut scratch = dist.clone();
        let mut out = Vec::with_capacity(horizon as usize + 1);
        for t in 0..=horizon {
            if t > 0 {
                step_into(self, &dist, &mut scratch);
                std::mem::swap(&mut dist, &mut scratch);
            }
            out.push(half_l1(&dist, &self.stationary));
        }
        out
    }

    /// Worst-start mixing time by a plain forward scan over all vertices.
    pub fn mixing_time(&self, epsilon: f64, cap: u64) -> Result<u64> {
        let n = self.rows.len();
        let mut dists: Vec<Vec<f64>> = (0..n)
            .map(|v| {
                let mut d = vec![0.0; n];
                d[v] = 1.0;
                d
            })
            .collect();
        let mut scratch = vec![0.0; n];
        for t in 0..=cap {
            if t > 0 {
                for d in dists.iter_mut() {
                    step_into(self, d, &mut scratch);
                    std::mem::swap(d, &mut scratch);
                }
            }
            if dists
                .iter()
                .all(|d| half_l1(d, &self.stationary) <= epsilon)
            {
                return Ok(t);
            }
        }
        Err(Error::NonConvergence { epsilon, cap })
    }

    /// Mean and second moment of `τ_target` from every vertex, by dense LU.
    pub fn hitting_moments(&self, target: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut mask = vec![false; self.rows.len()];
        mask[target] = true;
        self.set_hitting_moments(&mask)
    }

    /// Mean and second moment of the hitting time of `{v : target[v]}`.
    pub fn set_hitting_moments(&self, target: &[bool]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.rows.len();
        if target.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: target.len(),
            });
        }
        let mut a = DMatrix::<f64>::identity(n, n);
        let mut q = DMatrix::<f64>::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            if target[i] {
                continue;
            }
            for &(j, p) in row {
                if !target[j] {
                    q[(i, j)] += p;
                    a[(i, j)] -= p;
                }
            }
        }
        let ones = DVector::from_fn(n, |i, _| if target[i] { 0.0 } else { 1.0 });
        let lu = a.lu();
        let singular = || Error::SingularSystem { row: 0, pivot: 0.0 };
        let e = lu.solve(&ones).ok_or_else(singular)?;
        let rhs = ones + 2.0 * &q * &e;
        let s = lu.solve(&rhs).ok_or_else(singular)?;
        Ok((e.iter().copied().collect(), s.iter().copied().collect()))
    }

    /// `(Var_π(g), 𝓔(g))` for a function on vertices.
    pub fn variance_and_energy(&self, g: &[f64]) -> (f64, f64) {
        let pi = &self.stationary;
        let mean: f64 = g.iter().zip(pi).map(|(x, p)| x * p).sum();
        let variance = g.iter().zip(pi).map(|(x, p)| p * (x - mean).powi(2)).sum();
        let energy = 0.5
            * self
                .rows
                .iter()
                .enumerate()
                .flat_map(|(i, row)| row.iter().map(move |&(j, p)| (i, j, p)))
                .map(|(i, j, p)| pi[i] * p * (g[i] - g[j]).powi(2))
                .sum::<f64>();
        (variance, energy)
    }

    /// Mean and second moment of the return time `τ_v⁺`, by a first step.
    pub fn return_moments(&self, v: usize) -> Result<(f64, f64)> {
        let (e, s) = self.hitting_moments(v)?;
        let mut mean = 0.0;
        let mut second = 0.0;
        for &(j, p) in &self.rows[v] {
            let (ej, sj) = if j == v { (0.0, 0.0) } else { (e[j], s[j]) };
            mean += p * (1.0 + ej);
            second += p * (1.0 + 2.0 * ej + sj);
        }
        Ok((mean, second))
    }
}

impl Kernel for ExplicitWalk {
    fn n_states(&self) -> usize {
        self.rows.len()
    }

    fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    fn stationary(&self) -> &[f64] {
        &self.stationary
    }
}

fn half_l1(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Sums a vertex vector over classes.
pub fn lump(values: &[f64], classes: &[usize], n_classes: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_classes];
    for (&v, &c) in values.iter().zip(classes) {
        out[c] += v;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{build_profile, explicit_tree};

    #[test]
    fn single_edge() {
        let tree = explicit_tree(&build_profile(&[1]).unwrap(), 10).unwrap();
        let walk = ExplicitWalk::new(&tree);
        assert_eq!(walk.distribution(0, 1), vec![0.5, 0.5]);
        assert_eq!(walk.distance_curve(1, 1), vec![0.5, 0.0]);
        assert_eq!(walk.mixing_time(0.25, 10).unwrap(), 1);
        let (e, s) = walk.hitting_moments(0).unwrap();
        assert!((e[1] - 2.0).abs() < 1e-12);
        // geometric(1/2): E τ² = (2 - p) / p² = 6
        assert!((s[1] - 6.0).abs() < 1e-12);
        let (m, _) = walk.return_moments(0).unwrap();
        assert!((m - 2.0).abs() < 1e-12);
    }

    #[test]
    fn distribution_conserves_mass() {
        let tree = explicit_tree(&build_profile(&[3, 2]).unwrap(), 100).unwrap();
        let walk = ExplicitWalk::new(&tree);
        let d = walk.distribution(5, 17);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }
}
