use std::collections::HashMap;

use super::mixing::phi_coefficient;
use super::MarkovChain;
use crate::error::{budget, Error, Result};
use crate::linalg::Matrix;

const TABLE_LIMIT: u128 = 1_000_000;

/// Caches `P^g` for the gaps met while evaluating joint laws.
struct Powers<'c> {
    chain: &'c MarkovChain,
    cache: HashMap<u64, Matrix>,
}

impl<'c> Powers<'c> {
    fn new(chain: &'c MarkovChain) -> Self {
        Powers { chain, cache: HashMap::new() }
    }

    fn get(&mut self, g: u64) -> &Matrix {
        let p = self.chain.transition();
        self.cache.entry(g).or_insert_with(|| p.pow(g))
    }
}

/// Stationary probability that the chain visits `states[k]` at `positions[k]`.
/// Positions must be strictly increasing.
pub fn joint_law(chain: &MarkovChain, positions: &[u64], states: &[usize]) -> Result<f64> {
    if positions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("positions must be strictly increasing".into()));
    }
    let mut pw = Powers::new(chain);
    Ok(joint_with(&mut pw, positions, states))
}

fn joint_with(pw: &mut Powers, positions: &[u64], states: &[usize]) -> f64 {
    if positions.is_empty() {
        return 1.0;
    }
    let mut p = pw.chain.stationary()[states[0]];
    for k in 1..positions.len() {
        if p == 0.0 {
            return 0.0;
        }
        let g = positions[k] - positions[k - 1];
        p *= pw.get(g).get(states[k - 1], states[k]);
    }
    p
}

fn for_each_tuple(base: usize, len: usize, mut f: impl FnMut(&[usize])) {
    let mut t = vec![0usize; len];
    loop {
        f(&t);
        let mut k = len;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            t[k] += 1;
            if t[k] < base {
                break;
            }
            t[k] = 0;
        }
    }
}

/// Joint conditional law of the chain at `targets` given `known` (index, state)
/// pairs. The table is indexed lexicographically with the first target most
/// significant.
pub fn conditional_law(chain: &MarkovChain, known: &[(u64, usize)], targets: &[u64]) -> Result<Vec<f64>> {
    let s = chain.n_states();
    if targets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("targets must be strictly increasing".into()));
    }
    let size = (s as u128).checked_pow(targets.len() as u32).unwrap_or(u128::MAX);
    budget("conditional law table", size, TABLE_LIMIT)?;
    if let Some(&(i, st)) = known.iter().find(|(_, st)| *st >= s) {
        return Err(Error::InvalidArgument(format!("state {st} at index {i} out of range")));
    }
    let mut all: Vec<(u64, Option<usize>, usize)> = known.iter().map(|&(i, st)| (i, Some(st), 0)).collect();
    all.extend(targets.iter().enumerate().map(|(k, &i)| (i, None, k)));
    all.sort_by_key(|e| e.0);
    if all.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidArgument("an index appears twice among known and target indices".into()));
    }
    let positions: Vec<u64> = all.iter().map(|e| e.0).collect();
    let mut pw = Powers::new(chain);
    let mut table = Vec::with_capacity(size as usize);
    let mut states = vec![0usize; all.len()];
    for_each_tuple(s, targets.len(), |t| {
        for (k, e) in all.iter().enumerate() {
            states[k] = match e.1 {
                Some(st) => st,
                None => t[e.2],
            };
        }
        table.push(joint_with(&mut pw, &positions, &states));
    });
    let total: f64 = table.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroProbability(format!("known states {known:?}")));
    }
    table.iter_mut().for_each(|x| *x /= total);
    Ok(table)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecouplingReport {
    /// `|E H(U) − E H(U^{(a)})|`.
    pub value: f64,
    /// `4·sup|H|·Σ_{i≥2} φ(m_i − n_{i−1})`.
    pub bound: f64,
    pub pass: bool,
}

/// Exact comparison of `E H(U₁, …, U_L)` under the chain law with the law where
/// blocks in different groups are independent copies.
///
/// `blocks` are inclusive index windows `[m_i, n_i]`, sorted and disjoint;
/// `groups[i]` labels block `i`; `h` receives the states of all blocks in order.
pub fn decoupling_check(
    chain: &MarkovChain,
    blocks: &[(u64, u64)],
    groups: &[usize],
    h: &dyn Fn(&[usize]) -> f64,
    h_sup: f64,
    tol: f64,
) -> Result<DecouplingReport> {
    if blocks.len() != groups.len() || blocks.is_empty() {
        return Err(Error::InvalidArgument("one group label per block is required".into()));
    }
    for (k, &(m, n)) in blocks.iter().enumerate() {
        if m > n || (k > 0 && m <= blocks[k - 1].1) {
            return Err(Error::InvalidArgument(format!("block {k} overlaps or is out of order")));
        }
    }
    let positions: Vec<u64> = blocks.iter().flat_map(|&(m, n)| m..=n).collect();
    let owner: Vec<usize> = blocks
        .iter()
        .enumerate()
        .flat_map(|(k, &(m, n))| std::iter::repeat(groups[k]).take((n - m + 1) as usize))
        .collect();
    let s = chain.n_states();
    let size = (s as u128).checked_pow(positions.len() as u32).unwrap_or(u128::MAX);
    budget("decoupling enumeration", size, TABLE_LIMIT)?;
    let mut labels: Vec<usize> = groups.to_vec();
    labels.sort_unstable();
    labels.dedup();
    let members: Vec<Vec<usize>> = labels
        .iter()
        .map(|g| (0..positions.len()).filter(|&k| owner[k] == *g).collect())
        .collect();
    let group_pos: Vec<Vec<u64>> = members.iter().map(|m| m.iter().map(|&k| positions[k]).collect()).collect();
    let mut pw = Powers::new(chain);
    let mut e_joint = 0.0;
    let mut e_prod = 0.0;
    let mut sub = Vec::new();
    for_each_tuple(s, positions.len(), |t| {
        let hv = h(t);
        e_joint += joint_with(&mut pw, &positions, t) * hv;
        let mut pr = 1.0;
        for (m, gp) in members.iter().zip(&group_pos) {
            sub.clear();
            sub.extend(m.iter().map(|&k| t[k]));
            pr *= joint_with(&mut pw, gp, &sub);
            if pr == 0.0 {
                break;
            }
        }
        e_prod += pr * hv;
    });
    let value = (e_joint - e_prod).abs();
    let bound = 4.0 * h_sup * (1..blocks.len()).map(|i| phi_coefficient(chain, blocks[i].0 - blocks[i - 1].1)).sum::<f64>();
    Ok(DecouplingReport { value, bound, pass: value <= bound + tol })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiberReport {
    /// `sup_x |E[f(x,·)|𝒢] − E f(x,·)|` over past atoms of positive probability.
    pub lhs: f64,
    /// `2·C·φ(g)`.
    pub bound: f64,
    pub pass: bool,
}

/// Check `sup_x |E[f(x,·)|𝒢] − E f(x,·)| ≤ 2Cφ(g)` where `𝒢 = σ(ξ_{k−pw+1..k})`
/// and `f(x, ω)` depends on `ω` through the future window `ξ_{k+g..k+g+fw−1}`.
/// `f(x, y)` takes a grid point index and the future states.
#[allow(clippy::too_many_arguments)]
pub fn fiber_conditional_check(
    chain: &MarkovChain,
    gap: u64,
    past_window: usize,
    future_window: usize,
    grid_len: usize,
    f: &dyn Fn(usize, &[usize]) -> f64,
    c: f64,
    tol: f64,
) -> Result<FiberReport> {
    if gap == 0 || past_window == 0 || future_window == 0 {
        return Err(Error::InvalidArgument("gap and windows must be positive".into()));
    }
    let s = chain.n_states();
    let size = (s as u128).pow((past_window + future_window) as u32) * grid_len as u128;
    budget("fiber enumeration", size, TABLE_LIMIT * 10)?;
    let past_pos: Vec<u64> = (0..past_window as u64).collect();
    let k = past_window as u64 - 1;
    let fut_pos: Vec<u64> = (0..future_window as u64).map(|j| k + gap + j).collect();
    let mut pw = Powers::new(chain);
    let mut futures: Vec<(Vec<usize>, f64)> = Vec::new();
    for_each_tuple(s, future_window, |y| {
        let p = joint_with(&mut pw, &fut_pos, y);
        futures.push((y.to_vec(), p));
    });
    let mean: Vec<f64> = (0..grid_len)
        .map(|x| futures.iter().map(|(y, p)| p * f(x, y)).sum())
        .collect();
    let mut lhs: f64 = 0.0;
    let mut both = past_pos.clone();
    both.extend(&fut_pos);
    let mut st = Vec::new();
    let mut pasts = Vec::new();
    for_each_tuple(s, past_window, |x| pasts.push(x.to_vec()));
    for past in pasts {
        let pp = joint_with(&mut pw, &past_pos, &past);
        if pp == 0.0 {
            continue;
        }
        let cond: Vec<f64> = futures
            .iter()
            .map(|(y, _)| {
                st.clear();
                st.extend(&past);
                st.extend(y);
                joint_with(&mut pw, &both, &st) / pp
            })
            .collect();
        for (x, m) in mean.iter().enumerate() {
            let e: f64 = futures.iter().zip(&cond).map(|((y, _), q)| q * f(x, y)).sum();
            lhs = lhs.max((e - m).abs());
        }
    }
    let bound = 2.0 * c * phi_coefficient(chain, gap);
    Ok(FiberReport { lhs, bound, pass: lhs <= bound + tol })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain2() -> MarkovChain {
        MarkovChain::scalar(&[vec![0.9, 0.1], vec![0.2, 0.8]], &[0.0, 1.0]).unwrap()
    }

    #[test]
    fn unconditional_target_is_stationary() {
        let c = chain2();
        let t = conditional_law(&c, &[], &[5]).unwrap();
        assert!((t[0] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn next_step_is_row() {
        let c = chain2();
        let t = conditional_law(&c, &[(4, 1)], &[5]).unwrap();
        assert!((t[0] - 0.2).abs() < 1e-14 && (t[1] - 0.8).abs() < 1e-14);
    }

    #[test]
    fn two_targets_matrix_product() {
        let c = chain2();
        let p = c.transition();
        let p2 = p.pow(2);
        let t = conditional_law(&c, &[(3, 0)], &[5, 6]).unwrap();
        for j in 0..2 {
            for m in 0..2 {
                let want = p2.get(0, j) * p.get(j, m);
                assert!((t[j * 2 + m] - want).abs() < 1e-14);
            }
        }
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_condition() {
        let c = MarkovChain::scalar(&[vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5], vec![0.5, 0.0, 0.5]], &[0.0, 1.0, 2.0]).unwrap();
        assert!(matches!(conditional_law(&c, &[(1, 0), (2, 2)], &[3]), Err(Error::ZeroProbability(_))));
    }

    #[test]
    fn decoupling_trivial_cases() {
        let iid = MarkovChain::scalar(&[vec![0.4, 0.6], vec![0.4, 0.6]], &[0.0, 1.0]).unwrap();
        let h = |t: &[usize]| t.iter().product::<usize>() as f64;
        let r = decoupling_check(&iid, &[(1, 2), (4, 4), (6, 7)], &[0, 1, 2], &h, 1.0, 1e-12).unwrap();
        assert!(r.value < 1e-15);
        let c = chain2();
        let r = decoupling_check(&c, &[(1, 2), (4, 4)], &[0, 0], &h, 1.0, 1e-12).unwrap();
        assert!(r.value < 1e-15);
    }

    #[test]
    fn fiber_constant_in_omega() {
        let c = chain2();
        let r = fiber_conditional_check(&c, 1, 2, 1, 2, &|x, _| x as f64, 1.0, 1e-12).unwrap();
        assert!(r.lhs < 1e-15);
    }
}
