//! Stationary process generators and their mixing coefficients.

mod conditional;
mod doubling;
mod iid;
mod markov;
mod mixing;
mod sampling;

pub use conditional::{
    conditional_law, decoupling_check, fiber_conditional_check, joint_law, DecouplingReport,
    FiberReport,
};
pub use doubling::DoublingMap;
pub use iid::IidLaw;
pub use markov::{stationary_distribution, MarkovChain};
pub use mixing::{
    alpha_bruteforce, alpha_coefficient, beta_approx, beta_exact, phi_bruteforce, phi_coefficient,
    BetaProfile, DecayParams, MixingProfile,
};
pub use sampling::{sample_at_indices, IndexSampler, SamplingBudget};

use crate::error::{Error, Result};

/// A discrete marginal law: atom values in `ℝ^℘` with weights.
///
/// For Monte Carlo marginals (continuous laws) the atoms are draws with equal
/// weights and `exact` is false.
#[derive(Debug, Clone)]
pub struct Marginal {
    pub atoms: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub exact: bool,
}

impl Marginal {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.atoms.first().map_or(0, Vec::len)
    }

    /// `E |ξ|^k` under the marginal, with `|·|` the euclidean norm.
    pub fn abs_moment(&self, k: f64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| w * norm(a).powf(k))
            .sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.atoms.iter().map(|a| norm(a)).fold(0.0, f64::max)
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone)]
pub enum ProcessModel {
    Markov(MarkovChain),
    Doubling(DoublingMap),
    Iid(IidLaw),
}

impl ProcessModel {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ProcessModel::Markov(_) => "finite-markov",
            ProcessModel::Doubling(_) => "doubling-map",
            ProcessModel::Iid(_) => "iid",
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            ProcessModel::Markov(c) => c.dimension(),
            ProcessModel::Doubling(d) => d.dimension(),
            ProcessModel::Iid(l) => l.dimension(),
        }
    }

    /// True when samples are indexed by a finite set of atoms.
    pub fn is_discrete(&self) -> bool {
        !matches!(self, ProcessModel::Iid(IidLaw::Gaussian { .. }))
    }

    /// Marginal law of `ξ_n`. Continuous laws are replaced by an empirical
    /// measure of `mc_draws` points.
    pub fn marginal(&self, mc_draws: usize, seed: u64) -> Marginal {
        match self {
            ProcessModel::Markov(c) => Marginal {
                atoms: c.values().to_vec(),
                weights: c.stationary().to_vec(),
                exact: true,
            },
            ProcessModel::Doubling(d) => {
                let n = d.table().len();
                Marginal {
                    atoms: d.table().to_vec(),
                    weights: vec![1.0 / n as f64; n],
                    exact: true,
                }
            }
            ProcessModel::Iid(l) => l.marginal(mc_draws, seed),
        }
    }

    /// The model as a finite chain, when it is one (iid discrete laws become a
    /// chain whose rows all equal the law).
    pub fn as_chain(&self) -> Result<MarkovChain> {
        match self {
            ProcessModel::Markov(c) => Ok(c.clone()),
            ProcessModel::Iid(IidLaw::Discrete { atoms, probs }) => {
                let rows = vec![probs.clone(); probs.len()];
                MarkovChain::new(&rows, atoms.clone())
            }
            _ => Err(Error::Unsupported(format!(
                "{} model is not a finite chain",
                self.kind_name()
            ))),
        }
    }

    pub fn mixing_profile(&self) -> Result<MixingProfile> {
        MixingProfile::for_model(self)
    }
}
