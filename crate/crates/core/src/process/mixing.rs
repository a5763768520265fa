use std::sync::Arc;

use statrs::function::gamma::{gamma, gamma_ur};

use super::{norm, DoublingMap, IidLaw, MarkovChain, ProcessModel};
use crate::error::{Error, Result};
use crate::linalg::{tv, Matrix};

/// Number of exact table entries kept by a profile (n = 0..=TABLE_LEN).
const TABLE_LEN: usize = 128;
/// Largest state count for which α is computed by subset enumeration.
const ALPHA_MAX_STATES: usize = 10;
/// Rate used when the coefficients vanish identically after a finite lag.
const FLAT_RATE: f64 = 30.0;
const ENUM_LIMIT: usize = 1_000_000;

/// Certified decay `φ(n) ≤ d·exp(−a·n^η)` for all `n ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayParams {
    pub a: f64,
    pub d: f64,
    pub eta: f64,
}

impl DecayParams {
    pub fn bound(&self, n: u64) -> f64 {
        self.d * (-self.a * (n as f64).powf(self.eta)).exp()
    }

    /// Upper bound for `Σ_{n > cutoff} d·exp(−a n^η)`.
    pub fn tail_sum(&self, cutoff: u64) -> f64 {
        let c = cutoff as f64;
        if self.eta == 1.0 {
            return self.d * (-self.a * (c + 1.0)).exp() / (1.0 - (-self.a).exp());
        }
        // Decreasing summand: the sum over n > c is at most the integral from c.
        let s = 1.0 / self.eta;
        self.d / (self.eta * self.a.powf(s)) * gamma(s) * gamma_ur(s, self.a * c.powf(self.eta))
    }
}

#[derive(Debug, Clone)]
pub enum BetaProfile {
    /// `ξ_n` is measurable with respect to its own index: β ≡ 0.
    Zero,
    /// Doubling map with the dyadic filtration.
    Dyadic(Arc<DoublingMap>),
}

/// Mixing data of a model: exact φ and α tables for small lags, a decay
/// certificate for the tail, and the approximation rates β.
#[derive(Debug, Clone)]
pub struct MixingProfile {
    phi: Vec<f64>,
    alpha: Vec<f64>,
    decay: Option<DecayParams>,
    beta: BetaProfile,
    doeblin: bool,
}

impl MixingProfile {
    pub fn for_model(model: &ProcessModel) -> Result<Self> {
        match model {
            ProcessModel::Markov(c) => Ok(Self::for_chain(c)),
            ProcessModel::Iid(IidLaw::Discrete { .. }) => Ok(Self::for_chain(&model.as_chain()?)),
            ProcessModel::Iid(IidLaw::Gaussian { .. }) => Ok(Self::independent(BetaProfile::Zero)),
            ProcessModel::Doubling(d) => Ok(Self::independent(BetaProfile::Dyadic(Arc::new(d.clone())))),
        }
    }

    fn independent(beta: BetaProfile) -> Self {
        let mut phi = vec![0.0; TABLE_LEN + 1];
        phi[0] = 1.0;
        let mut alpha = vec![0.0; TABLE_LEN + 1];
        alpha[0] = 0.25;
        MixingProfile {
            phi,
            alpha,
            decay: Some(DecayParams { a: FLAT_RATE, d: 1.0, eta: 1.0 }),
            beta,
            doeblin: true,
        }
    }

    pub fn for_chain(chain: &MarkovChain) -> Self {
        let p = chain.transition();
        let pi = chain.stationary();
        let s = chain.n_states();
        let mut phi = Vec::with_capacity(TABLE_LEN + 1);
        let mut alpha = Vec::with_capacity(TABLE_LEN + 1);
        let d1 = deviation(chain);
        let mut dn = deviation_at(chain, 0);
        for n in 0..=TABLE_LEN {
            if n == 1 {
                dn = d1.clone();
            } else if n > 1 {
                dn = dn.mul(p);
            }
            phi.push(if n == 0 { 1.0 } else { phi_from_deviation(&dn) });
            alpha.push(if s <= ALPHA_MAX_STATES {
                alpha_from_deviation(&dn, pi)
            } else {
                (phi[n] / 2.0).min(0.25)
            });
        }
        // Keep the tables monotone against rounding noise.
        for n in 1..phi.len() {
            phi[n] = phi[n].min(phi[n - 1]);
            alpha[n] = alpha[n].min(alpha[n - 1]);
        }
        let decay = chain_decay(p, &phi);
        MixingProfile { phi, alpha, doeblin: decay.is_some(), decay, beta: BetaProfile::Zero }
    }

    /// A profile from an explicit φ function (tabulated on `0..=TABLE_LEN`) and a decay
    /// certificate for larger lags. α is taken as `min(φ/2, 1/4)`.
    pub fn from_phi<F: Fn(u64) -> f64>(phi_fn: F, decay: Option<DecayParams>) -> Result<Self> {
        let phi: Vec<f64> = (0..=TABLE_LEN as u64)
            .map(|n| if n == 0 { 1.0 } else { phi_fn(n) })
            .collect();
        if phi.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::InvalidArgument("φ values must lie in [0, 1]".into()));
        }
        let alpha = phi.iter().map(|x| (x / 2.0).min(0.25)).collect();
        let prof = MixingProfile { phi, alpha, decay, beta: BetaProfile::Zero, doeblin: decay.is_some() };
        if let Some(d) = decay {
            prof.certify(d)?;
        }
        Ok(prof)
    }

    /// Check declared decay parameters against the exact table.
    pub fn certify(&self, d: DecayParams) -> Result<()> {
        for (n, &f) in self.phi.iter().enumerate().take(101) {
            if f > d.bound(n as u64) * (1.0 + 1e-12) + 1e-15 {
                return Err(Error::InvalidModel(format!(
                    "φ({n}) = {f:e} exceeds declared decay bound {:e}",
                    d.bound(n as u64)
                )));
            }
        }
        Ok(())
    }

    /// Replace the decay certificate with declared parameters after checking them.
    pub fn with_decay(mut self, d: DecayParams) -> Result<Self> {
        self.certify(d)?;
        self.decay = Some(d);
        Ok(self)
    }

    pub fn phi(&self, n: u64) -> f64 {
        match self.phi.get(n as usize) {
            Some(&v) => v,
            None => {
                let last = *self.phi.last().unwrap();
                self.decay.map_or(last, |d| d.bound(n).min(last))
            }
        }
    }

    pub fn alpha(&self, n: u64) -> f64 {
        match self.alpha.get(n as usize) {
            Some(&v) => v,
            None => (self.phi(n) / 2.0).min(*self.alpha.last().unwrap()),
        }
    }

    /// `β_q(r)`; `q = f64::INFINITY` gives the sup-norm rate.
    pub fn beta(&self, q: f64, r: u64) -> f64 {
        match &self.beta {
            BetaProfile::Zero => 0.0,
            BetaProfile::Dyadic(map) => dyadic_beta_bound(map, q, r),
        }
    }

    pub fn decay(&self) -> Option<DecayParams> {
        self.decay
    }

    pub fn doeblin(&self) -> bool {
        self.doeblin
    }

    pub fn table_len(&self) -> usize {
        self.phi.len()
    }
}

/// `Dₙ = Pⁿ − 𝟙π`. Since `D₁ᵃ = Pᵃ − 𝟙π` for `a ≥ 1`, powers of `D₁` keep full
/// relative precision as the entries decay, unlike `Pⁿ − 𝟙π` formed after the fact.
fn deviation(chain: &MarkovChain) -> Matrix {
    deviation_at(chain, 1)
}

fn deviation_at(chain: &MarkovChain, n: u64) -> Matrix {
    let pi = chain.stationary();
    let s = pi.len();
    if n == 0 {
        let rows: Vec<Vec<f64>> = (0..s)
            .map(|i| (0..s).map(|j| if i == j { 1.0 } else { 0.0 } - pi[j]).collect())
            .collect();
        return Matrix::from_rows(&rows).unwrap();
    }
    let p = chain.transition();
    let rows: Vec<Vec<f64>> = (0..s).map(|i| (0..s).map(|j| p.get(i, j) - pi[j]).collect()).collect();
    let d1 = Matrix::from_rows(&rows).unwrap();
    d1.pow_from_one(n)
}

fn phi_from_deviation(dn: &Matrix) -> f64 {
    (0..dn.dim())
        .map(|i| 0.5 * dn.row(i).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `max_I Σ_j (Σ_{i∈I} π_i Dₙ(i,j))₊`.
fn alpha_from_deviation(pn: &Matrix, pi: &[f64]) -> f64 {
    let s = pi.len();
    let mut best: f64 = 0.0;
    let mut acc = vec![0.0; s];
    for mask in 1u32..(1u32 << s) {
        acc.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..s {
            if mask >> i & 1 == 1 {
                for (j, a) in acc.iter_mut().enumerate() {
                    *a += pi[i] * pn.get(i, j);
                }
            }
        }
        best = best.max(acc.iter().filter(|x| **x > 0.0).sum());
    }
    best
}

fn dobrushin(m: &Matrix) -> f64 {
    let s = m.dim();
    let mut best: f64 = 0.0;
    for i in 0..s {
        for j in i + 1..s {
            best = best.max(tv(m.row(i), m.row(j)));
        }
    }
    best
}

/// From `φ(n) ≤ δ(P^m)^{⌊n/m⌋} φ(n mod m)` with δ the Dobrushin coefficient.
fn chain_decay(p: &Matrix, phi: &[f64]) -> Option<DecayParams> {
    let mut pm = p.clone();
    for m in 1..=64u64 {
        let delta = dobrushin(&pm);
        if delta < 1.0 - 1e-12 {
            let a = if delta <= 0.0 { FLAT_RATE } else { (-delta.ln() / m as f64).min(FLAT_RATE) };
            let d = (0..m as usize)
                .map(|r| phi[r] * (a * r as f64).exp())
                .fold(1.0, f64::max);
            return Some(DecayParams { a, d, eta: 1.0 });
        }
        pm = pm.mul(p);
    }
    None
}

/// `φ(n) = max_i TV(Pⁿ(i,·), π)`; `φ(0) = 1` by convention.
pub fn phi_coefficient(chain: &MarkovChain, n: u64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    phi_from_deviation(&deviation_at(chain, n))
}

/// Exact α(n). For a chain the supremum over past events reduces to unions of
/// states of `ξ_k` (the objective is convex in the conditional weights), and
/// future events to unions of states of `ξ_{k+n}` (Markov property).
pub fn alpha_coefficient(chain: &MarkovChain, n: u64) -> Result<f64> {
    let s = chain.n_states();
    if s > 20 {
        return Err(Error::Budget { what: "α subset enumeration (states)", needed: s as u128, limit: 20 });
    }
    Ok(alpha_from_deviation(&deviation_at(chain, n), chain.stationary()))
}

/// Past cylinder probabilities and the joint law with future cylinders,
/// built by forward propagation of the chain.
struct CylinderJoint {
    past: Vec<f64>,
    future: Vec<f64>,
    joint: Vec<Vec<f64>>,
}

fn digits(mut code: usize, base: usize, len: usize) -> Vec<usize> {
    let mut d = vec![0; len];
    for k in (0..len).rev() {
        d[k] = code % base;
        code /= base;
    }
    d
}

fn cylinder_joint(chain: &MarkovChain, n: u64, pw: usize, fw: usize) -> Result<CylinderJoint> {
    if pw == 0 || fw == 0 || pw > 3 || fw > 3 {
        return Err(Error::InvalidArgument("windows must lie in 1..=3".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("brute force needs n ≥ 1".into()));
    }
    let s = chain.n_states();
    let np = s.pow(pw as u32);
    let nf = s.pow(fw as u32);
    crate::error::budget("cylinder events", (np * nf) as u128, ENUM_LIMIT as u128)?;
    let p = chain.transition();
    let pi = chain.stationary();
    let path_prob = |d: &[usize], start: f64| {
        d.windows(2).fold(start, |acc, w| acc * p.get(w[0], w[1]))
    };
    // Law of ξ_{k+n} given ξ_k = i, by n single steps.
    let ahead: Vec<Vec<f64>> = (0..s)
        .map(|i| {
            let mut v = vec![0.0; s];
            v[i] = 1.0;
            for _ in 0..n {
                v = p.left_mul(&v);
            }
            v
        })
        .collect();
    let mut past = vec![0.0; np];
    let mut joint = vec![vec![0.0; nf]; np];
    for (x, px) in past.iter_mut().enumerate() {
        let dx = digits(x, s, pw);
        *px = path_prob(&dx, pi[dx[0]]);
        let last = dx[pw - 1];
        for (y, j) in joint[x].iter_mut().enumerate() {
            let dy = digits(y, s, fw);
            *j = *px * path_prob(&dy, ahead[last][dy[0]]);
        }
    }
    let future = (0..nf).map(|y| joint.iter().map(|r| r[y]).sum()).collect();
    Ok(CylinderJoint { past, future, joint })
}

fn union_sets(atoms: &[usize], max_enum: usize) -> Vec<Vec<usize>> {
    if atoms.len() <= max_enum {
        (1u64..(1u64 << atoms.len()))
            .map(|m| atoms.iter().enumerate().filter(|(k, _)| m >> k & 1 == 1).map(|(_, &a)| a).collect())
            .collect()
    } else {
        atoms.iter().map(|&a| vec![a]).collect()
    }
}

/// Supremum of `|P(B | A) − P(B)|` over unions `A` of past cylinders of length
/// `past_window` ending at `k` and unions `B` of future cylinders of length
/// `future_window` starting at `k + n`.
///
/// Past unions are enumerated in full when there are at most 12 positive past
/// cylinders; otherwise single cylinders are used, which attain the supremum
/// because `A ↦ P(·|A)` is a convex combination over the cylinders in `A`.
pub fn phi_bruteforce(chain: &MarkovChain, n: u64, past_window: usize, future_window: usize) -> Result<f64> {
    let cj = cylinder_joint(chain, n, past_window, future_window)?;
    let atoms: Vec<usize> = (0..cj.past.len()).filter(|&x| cj.past[x] > 0.0).collect();
    let mut best: f64 = 0.0;
    let mut pa_y = vec![0.0; cj.future.len()];
    for a in union_sets(&atoms, 12) {
        let pa: f64 = a.iter().map(|&x| cj.past[x]).sum();
        pa_y.iter_mut().for_each(|v| *v = 0.0);
        for &x in &a {
            for (v, j) in pa_y.iter_mut().zip(&cj.joint[x]) {
                *v += j;
            }
        }
        let sup_b: f64 = pa_y
            .iter()
            .zip(&cj.future)
            .map(|(pay, py)| (pay / pa - py).max(0.0))
            .sum();
        best = best.max(sup_b);
    }
    Ok(best)
}

/// Supremum of `|P(A∩B) − P(A)P(B)|` over unions of past and future cylinders,
/// with every past union enumerated (at most 16 positive past cylinders).
pub fn alpha_bruteforce(chain: &MarkovChain, n: u64, past_window: usize, future_window: usize) -> Result<f64> {
    let cj = cylinder_joint(chain, n, past_window, future_window)?;
    let atoms: Vec<usize> = (0..cj.past.len()).filter(|&x| cj.past[x] > 0.0).collect();
    crate::error::budget("α past cylinders", atoms.len() as u128, 16)?;
    let mut best: f64 = 0.0;
    for a in union_sets(&atoms, 16) {
        let pa: f64 = a.iter().map(|&x| cj.past[x]).sum();
        let v: f64 = (0..cj.future.len())
            .map(|y| (a.iter().map(|&x| cj.joint[x][y]).sum::<f64>() - pa * cj.future[y]).max(0.0))
            .sum();
        best = best.max(v);
    }
    Ok(best)
}

/// Certified approximation rate `β_q(r)`.
///
/// Chains and iid laws give 0. For the doubling map the value is `H·2^{−κr}`
/// when Hölder data are declared (0 once `r ≥ L`), otherwise the exact rate.
pub fn beta_approx(model: &ProcessModel, q: f64, r: u64) -> Result<f64> {
    if !(q > 0.0) {
        return Err(Error::InvalidArgument(format!("norm index {q} must be positive")));
    }
    match model {
        ProcessModel::Markov(_) | ProcessModel::Iid(_) => Ok(0.0),
        ProcessModel::Doubling(d) => Ok(dyadic_beta_bound(d, q, r)),
    }
}

fn dyadic_beta_bound(d: &DoublingMap, q: f64, r: u64) -> f64 {
    if r >= d.level() as u64 {
        return 0.0;
    }
    match d.holder() {
        Some((h, k)) => h * 2f64.powf(-k * r as f64),
        None => dyadic_beta_exact(d, q, r),
    }
}

/// Exact `‖ξ − E[ξ | digits up to r]‖_q` for the doubling map.
pub fn beta_exact(model: &ProcessModel, q: f64, r: u64) -> Result<f64> {
    match model {
        ProcessModel::Markov(_) | ProcessModel::Iid(_) => Ok(0.0),
        ProcessModel::Doubling(d) => Ok(dyadic_beta_exact(d, q, r)),
    }
}

fn dyadic_beta_exact(d: &DoublingMap, q: f64, r: u64) -> f64 {
    let l = d.level() as u64;
    if r >= l {
        return 0.0;
    }
    let table = d.table();
    let dim = d.dimension();
    let block = 1usize << (l - r);
    let mut sup: f64 = 0.0;
    let mut acc = 0.0;
    for cell in table.chunks(block) {
        let mean: Vec<f64> = (0..dim)
            .map(|c| cell.iter().map(|v| v[c]).sum::<f64>() / block as f64)
            .collect();
        for v in cell {
            let dev = norm(&v.iter().zip(&mean).map(|(a, b)| a - b).collect::<Vec<_>>());
            sup = sup.max(dev);
            if q.is_finite() {
                acc += dev.powf(q);
            }
        }
    }
    if q.is_finite() {
        (acc / table.len() as f64).powf(1.0 / q)
    } else {
        sup
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain2() -> MarkovChain {
        MarkovChain::scalar(&[vec![0.9, 0.1], vec![0.2, 0.8]], &[0.0, 1.0]).unwrap()
    }

    #[test]
    fn phi_two_state() {
        let c = chain2();
        assert!((phi_coefficient(&c, 1) - 7.0 / 15.0).abs() < 1e-14);
        // P² rows: (0.83, 0.17), (0.34, 0.66); TV to π: 0.1633…, 0.3266…
        let p2 = 0.66 - 1.0 / 3.0;
        assert!((phi_coefficient(&c, 2) - p2).abs() < 1e-14);
        assert_eq!(phi_coefficient(&c, 0), 1.0);
    }

    #[test]
    fn iid_rows_have_no_dependence() {
        let c = MarkovChain::scalar(&[vec![0.3, 0.7], vec![0.3, 0.7]], &[0.0, 1.0]).unwrap();
        for n in 1..5 {
            assert!(phi_coefficient(&c, n) < 1e-15);
            assert!(phi_bruteforce(&c, n, 2, 2).unwrap() < 1e-15);
            assert!(alpha_coefficient(&c, n).unwrap() < 1e-15);
        }
    }

    #[test]
    fn bruteforce_matches_closed_form() {
        let c = chain2();
        for n in 1..=4 {
            let a = phi_coefficient(&c, n);
            for w in 1..=3 {
                let b = phi_bruteforce(&c, n, w, w).unwrap();
                assert!((a - b).abs() < 1e-12, "n={n} w={w}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn alpha_window_one_matches_enumeration() {
        let c = chain2();
        for n in 1..=4 {
            let a = alpha_coefficient(&c, n).unwrap();
            let b = alpha_bruteforce(&c, n, 1, 1).unwrap();
            let b2 = alpha_bruteforce(&c, n, 2, 2).unwrap();
            assert!((a - b).abs() < 1e-13 && (a - b2).abs() < 1e-13);
            assert!(a <= phi_coefficient(&c, n) / 2.0 + 1e-12);
        }
        // window-1 events for n=1: A = {ξ_k = 0}: |0.6 − 2/3·2/3| = 2/3·(0.9 − 2/3) = 0.1556
        assert!((alpha_coefficient(&c, 1).unwrap() - (2.0 / 3.0) * (0.9 - 2.0 / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn large_lag_is_tiny() {
        assert!(phi_coefficient(&chain2(), 50) <= 1e-6);
    }

    #[test]
    fn decay_certificate_holds() {
        let prof = MixingProfile::for_chain(&chain2());
        let d = prof.decay().unwrap();
        assert!((d.a - (-(0.7f64).ln())).abs() < 1e-12);
        for n in 0..=100 {
            assert!(prof.phi(n) * (d.a * n as f64).exp() / d.d <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn geometric_tail() {
        let d = DecayParams { a: std::f64::consts::LN_2, d: 1.0, eta: 1.0 };
        assert!((d.tail_sum(10) - 2f64.powi(-10)).abs() < 1e-15);
        // stretched tail via incomplete gamma is above the discrete sum
        let s = DecayParams { a: 0.5, d: 1.0, eta: 0.5 };
        let direct: f64 = (11..200_000u64).map(|n| s.bound(n)).sum();
        assert!(s.tail_sum(10) >= direct);
        assert!(s.tail_sum(10) <= direct * 1.5);
    }

    #[test]
    fn doubling_beta() {
        let d = DoublingMap::from_fn(8, Some((1.0, 1.0)), |y| vec![y]).unwrap();
        let m = ProcessModel::Doubling(d);
        assert_eq!(beta_approx(&m, f64::INFINITY, 3).unwrap(), 0.125);
        assert_eq!(beta_approx(&m, f64::INFINITY, 8).unwrap(), 0.0);
        assert!(beta_exact(&m, f64::INFINITY, 3).unwrap() <= 0.125);
        let c = ProcessModel::Markov(chain2());
        assert_eq!(beta_approx(&c, 2.0, 0).unwrap(), 0.0);
    }
}
