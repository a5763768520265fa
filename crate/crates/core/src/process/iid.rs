use rand_distr::{Distribution, StandardNormal};

use super::Marginal;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone)]
pub enum IidLaw {
    /// Finitely many atoms in `ℝ^℘` with probabilities.
    Discrete { atoms: Vec<Vec<f64>>, probs: Vec<f64> },
    /// Independent `N(mean, sd²)` coordinates.
    Gaussian { dim: usize, mean: f64, sd: f64 },
}

impl IidLaw {
    pub fn discrete(atoms: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != probs.len() {
            return Err(Error::InvalidModel("atoms and probabilities must match and be nonempty".into()));
        }
        let dim = atoms[0].len();
        if dim == 0 || atoms.iter().any(|a| a.len() != dim) {
            return Err(Error::InvalidModel("atoms must share a positive dimension".into()));
        }
        if probs.iter().any(|&p| !(p >= 0.0)) || ((probs.iter().sum::<f64>()) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel("probabilities must be nonnegative and sum to 1".into()));
        }
        Ok(IidLaw::Discrete { atoms, probs })
    }

    pub fn scalar(values: &[f64], probs: &[f64]) -> Result<Self> {
        Self::discrete(values.iter().map(|&v| vec![v]).collect(), probs.to_vec())
    }

    /// Symmetric ±1 signs.
    pub fn rademacher() -> Self {
        IidLaw::Discrete { atoms: vec![vec![-1.0], vec![1.0]], probs: vec![0.5, 0.5] }
    }

    pub fn gaussian(dim: usize, mean: f64, sd: f64) -> Result<Self> {
        if dim == 0 || !(sd > 0.0) || !mean.is_finite() {
            return Err(Error::InvalidModel("gaussian law needs dim ≥ 1 and sd > 0".into()));
        }
        Ok(IidLaw::Gaussian { dim, mean, sd })
    }

    pub fn dimension(&self) -> usize {
        match self {
            IidLaw::Discrete { atoms, .. } => atoms[0].len(),
            IidLaw::Gaussian { dim, .. } => *dim,
        }
    }

    pub fn marginal(&self, mc_draws: usize, seed: u64) -> Marginal {
        match self {
            IidLaw::Discrete { atoms, probs } => Marginal {
                atoms: atoms.clone(),
                weights: probs.clone(),
                exact: true,
            },
            IidLaw::Gaussian { dim, mean, sd } => {
                let m = mc_draws.max(1);
                let mut r = rng::stream(seed, rng::tag(&[0x6d61_7267]), 0);
                let atoms = (0..m)
                    .map(|_| {
                        (0..*dim)
                            .map(|_| {
                                let z: f64 = StandardNormal.sample(&mut r);
                                mean + sd * z
                            })
                            .collect::<Vec<f64>>()
                    })
                    .collect();
                Marginal { atoms, weights: vec![1.0 / m as f64; m], exact: false }
            }
        }
    }
}
