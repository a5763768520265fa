use std::collections::HashMap;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use super::{IidLaw, ProcessModel};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy)]
pub struct SamplingBudget {
    pub max_index: u64,
    pub max_indices: usize,
}

impl Default for SamplingBudget {
    fn default() -> Self {
        SamplingBudget { max_index: 1 << 40, max_indices: 1 << 26 }
    }
}

/// Cumulative table for inverse-CDF draws. Entries after the last positive
/// weight are pushed above 1 so rounding can never select a null atom.
#[derive(Debug, Clone)]
struct Cumulative(Vec<f64>);

impl Cumulative {
    fn new(p: &[f64]) -> Self {
        let mut acc = 0.0;
        let mut c: Vec<f64> = p
            .iter()
            .map(|x| {
                acc += x;
                acc
            })
            .collect();
        let last = p.iter().rposition(|&x| x > 0.0).unwrap_or(p.len() - 1);
        for v in &mut c[last..] {
            *v = 2.0;
        }
        Cumulative(c)
    }

    #[inline]
    fn draw(&self, u: f64) -> u32 {
        let c = &self.0;
        if c.len() <= 16 {
            c.iter().position(|&x| x > u).unwrap_or(c.len() - 1) as u32
        } else {
            c.partition_point(|&x| x <= u).min(c.len() - 1) as u32
        }
    }
}

/// Most-significant-first bit reader over 64-bit words.
struct Bits<'r, R: RngCore> {
    rng: &'r mut R,
    word: u64,
    left: u32,
}

impl<'r, R: RngCore> Bits<'r, R> {
    fn new(rng: &'r mut R) -> Self {
        Bits { rng, word: 0, left: 0 }
    }

    #[inline]
    fn take(&mut self, k: u32) -> u64 {
        debug_assert!(k <= 32);
        if k == 0 {
            return 0;
        }
        if self.left >= k {
            let out = self.word >> (64 - k);
            self.word <<= k;
            self.left -= k;
            out
        } else {
            let have = self.left;
            let hi = if have == 0 { 0 } else { self.word >> (64 - have) };
            self.word = self.rng.next_u64();
            self.left = 64;
            let rest = k - have;
            let lo = self.word >> (64 - rest);
            self.word <<= rest;
            self.left -= rest;
            (hi << rest) | lo
        }
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Markov {
        start: Cumulative,
        /// Cumulative rows per distinct gap, `S` rows each.
        tables: Vec<Vec<Cumulative>>,
        /// Which table moves from position k-1 to k (entry 0 unused).
        step: Vec<u32>,
    },
    Doubling {
        level: u32,
        gaps: Vec<u64>,
    },
    IidBits(u32),
    IidCdf(Cumulative),
    Gaussian {
        dim: usize,
        mean: f64,
        sd: f64,
    },
}

/// Pre-planned sampler for a fixed sorted index set.
///
/// Work and memory are proportional to the number of indices: chains jump
/// across gaps with precomputed powers `P^g`, the doubling map only draws the
/// binary digits that some requested `ξ_n` depends on.
#[derive(Debug, Clone)]
pub struct IndexSampler<'m> {
    model: &'m ProcessModel,
    indices: Vec<u64>,
    kind: Kind,
}

impl<'m> IndexSampler<'m> {
    pub fn new(model: &'m ProcessModel, indices: Vec<u64>, budget: SamplingBudget) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("index set is empty".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("indices must be strictly increasing".into()));
        }
        let max = *indices.last().unwrap();
        if max > budget.max_index {
            return Err(Error::Budget {
                what: "largest sampled index",
                needed: max as u128,
                limit: budget.max_index as u128,
            });
        }
        if indices.len() > budget.max_indices {
            return Err(Error::Budget {
                what: "sampled index count",
                needed: indices.len() as u128,
                limit: budget.max_indices as u128,
            });
        }
        let kind = match model {
            ProcessModel::Markov(c) => {
                let p = c.transition();
                let mut by_gap: HashMap<u64, u32> = HashMap::new();
                let mut tables = Vec::new();
                let mut step = vec![0u32; indices.len()];
                for k in 1..indices.len() {
                    let g = indices[k] - indices[k - 1];
                    let id = *by_gap.entry(g).or_insert_with(|| {
                        let pg = p.pow(g);
                        tables.push((0..p.dim()).map(|i| Cumulative::new(pg.row(i))).collect());
                        (tables.len() - 1) as u32
                    });
                    step[k] = id;
                }
                Kind::Markov { start: Cumulative::new(c.stationary()), tables, step }
            }
            ProcessModel::Doubling(d) => {
                let mut gaps = vec![0u64; indices.len()];
                for k in 1..indices.len() {
                    gaps[k] = indices[k] - indices[k - 1];
                }
                Kind::Doubling { level: d.level(), gaps }
            }
            ProcessModel::Iid(IidLaw::Discrete { probs, .. }) => {
                let n = probs.len();
                let uniform = probs.iter().all(|&p| p == probs[0]);
                if uniform && n.is_power_of_two() && n > 1 && n <= 1 << 30 {
                    Kind::IidBits(n.trailing_zeros())
                } else {
                    Kind::IidCdf(Cumulative::new(probs))
                }
            }
            ProcessModel::Iid(IidLaw::Gaussian { dim, mean, sd }) => Kind::Gaussian {
                dim: *dim,
                mean: *mean,
                sd: *sd,
            },
        };
        Ok(IndexSampler { model, indices, kind })
    }

    pub fn indices(&self) -> &[u64] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn model(&self) -> &ProcessModel {
        self.model
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(self.kind, Kind::Gaussian { .. })
    }

    /// Atom (state/cell) index of `ξ` at every planned index.
    pub fn sample_states<R: Rng>(&self, rng: &mut R, out: &mut Vec<u32>) {
        out.clear();
        match &self.kind {
            Kind::Markov { start, tables, step } => {
                let mut s = start.draw(rng.random::<f64>());
                out.push(s);
                for &t in &step[1..] {
                    s = tables[t as usize][s as usize].draw(rng.random::<f64>());
                    out.push(s);
                }
            }
            Kind::Doubling { level, gaps } => {
                let l = *level;
                let mask = (1u64 << l) - 1;
                let mut bits = Bits::new(rng);
                let mut c = bits.take(l);
                out.push(c as u32);
                for &g in &gaps[1..] {
                    c = if g < l as u64 {
                        ((c << g) | bits.take(g as u32)) & mask
                    } else {
                        bits.take(l)
                    };
                    out.push(c as u32);
                }
            }
            Kind::IidBits(b) => {
                let mut bits = Bits::new(rng);
                for _ in 0..self.indices.len() {
                    out.push(bits.take(*b) as u32);
                }
            }
            Kind::IidCdf(c) => {
                for _ in 0..self.indices.len() {
                    out.push(c.draw(rng.random::<f64>()));
                }
            }
            Kind::Gaussian { .. } => panic!("continuous model has no atom indices"),
        }
    }

    /// Values `ξ_n ∈ ℝ^℘`, flattened in index order.
    pub fn sample_values<R: Rng>(&self, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        if let Kind::Gaussian { dim, mean, sd } = self.kind {
            for _ in 0..self.indices.len() * dim {
                let z: f64 = StandardNormal.sample(rng);
                out.push(mean + sd * z);
            }
            return;
        }
        let mut states = Vec::with_capacity(self.indices.len());
        self.sample_states(rng, &mut states);
        let atoms: &[Vec<f64>] = match self.model {
            ProcessModel::Markov(c) => c.values(),
            ProcessModel::Doubling(d) => d.table(),
            ProcessModel::Iid(IidLaw::Discrete { atoms, .. }) => atoms,
            ProcessModel::Iid(IidLaw::Gaussian { .. }) => unreachable!(),
        };
        for s in states {
            out.extend_from_slice(&atoms[s as usize]);
        }
    }
}

/// Sample `ξ` at the given sorted indices from a single seed.
pub fn sample_at_indices(
    model: &ProcessModel,
    indices: &[u64],
    seed: u64,
    budget: SamplingBudget,
) -> Result<Vec<(u64, Vec<f64>)>> {
    let sampler = IndexSampler::new(model, indices.to_vec(), budget)?;
    let mut r = rng::seeded(seed);
    let mut flat = Vec::new();
    sampler.sample_values(&mut r, &mut flat);
    let d = model.dimension();
    Ok(indices
        .iter()
        .zip(flat.chunks(d))
        .map(|(&i, v)| (i, v.to_vec()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{DoublingMap, MarkovChain};

    #[test]
    fn bits_reader_crosses_words() {
        struct Fixed(u64);
        impl RngCore for Fixed {
            fn next_u32(&mut self) -> u32 {
                self.0 as u32
            }
            fn next_u64(&mut self) -> u64 {
                self.0
            }
            fn fill_bytes(&mut self, _: &mut [u8]) {}
        }
        let mut r = Fixed(0xF0F0_F0F0_F0F0_F0F0);
        let mut b = Bits::new(&mut r);
        let mut v = Vec::new();
        for _ in 0..40 {
            v.push(b.take(5));
        }
        let mut expect = Vec::new();
        let stream: Vec<u64> = (0..200).map(|i| (0xF0F0_F0F0_F0F0_F0F0u64 >> (63 - (i % 64))) & 1).collect();
        for k in 0..40 {
            expect.push(stream[5 * k..5 * k + 5].iter().fold(0, |a, &x| (a << 1) | x));
        }
        assert_eq!(v, expect);
    }

    #[test]
    fn degenerate_chain_is_constant() {
        let m = ProcessModel::Markov(MarkovChain::scalar(&[vec![1.0]], &[3.5]).unwrap());
        let s = sample_at_indices(&m, &[1, 7, 1000], 11, SamplingBudget::default()).unwrap();
        assert!(s.iter().all(|(_, v)| v == &vec![3.5]));
    }

    #[test]
    fn doubling_windows_overlap_consistently() {
        // ξ_n = first digit after shifting n times; ξ_{n+1} with level 2 shares one digit.
        let d = DoublingMap::new(2, vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]], None).unwrap();
        let m = ProcessModel::Doubling(d);
        let sampler = IndexSampler::new(&m, vec![1, 2, 3, 10], SamplingBudget::default()).unwrap();
        let mut r = rng::seeded(5);
        let mut st = Vec::new();
        for _ in 0..200 {
            sampler.sample_states(&mut r, &mut st);
            assert_eq!(st[0] & 1, st[1] >> 1);
            assert_eq!(st[1] & 1, st[2] >> 1);
        }
    }

    #[test]
    fn budget_and_order_errors() {
        let m = ProcessModel::Iid(IidLaw::rademacher());
        let b = SamplingBudget { max_index: 100, max_indices: 10 };
        assert!(matches!(IndexSampler::new(&m, vec![1, 200], b), Err(Error::Budget { .. })));
        assert!(IndexSampler::new(&m, vec![3, 2], b).is_err());
        assert!(IndexSampler::new(&m, vec![], b).is_err());
    }
}
