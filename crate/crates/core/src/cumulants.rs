//! Moments and cumulants, k-statistics, and cumulant bound calculators.

use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::process::MixingProfile;
use crate::summation::Neumaier;

/// Highest order for exact conversions.
pub const EXACT_KMAX: usize = 16;
/// Highest order for sample estimation.
pub const SAMPLE_KMAX: usize = 8;
/// Above this order the moment recursion runs in exact rationals.
const RATIONAL_FROM: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Provenance {
    Exact,
    Sample { replicates: usize },
}

/// Moments and cumulants of orders `1..=k_max`; entry `k − 1` holds order `k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CumulantVector {
    pub moments: Vec<f64>,
    pub cumulants: Vec<f64>,
    /// Jackknife standard errors (orders 1..=4 for samples).
    pub se: Vec<Option<f64>>,
    pub provenance: Provenance,
}

impl CumulantVector {
    pub fn from_moments(moments: &[f64]) -> Result<Self> {
        let cumulants = moments_to_cumulants(moments)?;
        Ok(CumulantVector {
            moments: moments.to_vec(),
            se: vec![None; cumulants.len()],
            cumulants,
            provenance: Provenance::Exact,
        })
    }

    pub fn k_max(&self) -> usize {
        self.cumulants.len()
    }

    /// `Γ_k`, 1-based.
    pub fn gamma(&self, k: usize) -> f64 {
        self.cumulants[k - 1]
    }

    pub fn moment(&self, k: usize) -> f64 {
        self.moments[k - 1]
    }
}

pub fn ln_factorial(k: usize) -> f64 {
    if k < 2 {
        0.0
    } else {
        ln_gamma(k as f64 + 1.0)
    }
}

fn binomials(n: usize) -> Vec<Vec<f64>> {
    let mut c = vec![vec![1.0]];
    for i in 1..=n {
        let mut row = vec![1.0; i + 1];
        for j in 1..i {
            row[j] = c[i - 1][j - 1] + c[i - 1][j];
        }
        c.push(row);
    }
    c
}

fn check_order(k: usize) -> Result<()> {
    if k == 0 || k > EXACT_KMAX {
        return Err(Error::InvalidArgument(format!("order must be in 1..={EXACT_KMAX}, got {k}")));
    }
    Ok(())
}

/// `Γ_k = m_k − Σ_{j<k} C(k−1, j−1) Γ_j m_{k−j}`; exact rationals for `k > 10`.
pub fn moments_to_cumulants(m: &[f64]) -> Result<Vec<f64>> {
    check_order(m.len())?;
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite moment".into()));
    }
    if m.len() > RATIONAL_FROM {
        return moments_to_cumulants_exact(m);
    }
    let c = binomials(m.len());
    let mut g: Vec<f64> = Vec::with_capacity(m.len());
    for k in 1..=m.len() {
        let mut v = m[k - 1];
        for j in 1..k {
            v -= c[k - 1][j - 1] * g[j - 1] * m[k - j - 1];
        }
        g.push(v);
    }
    Ok(g)
}

fn moments_to_cumulants_exact(m: &[f64]) -> Result<Vec<f64>> {
    let mr: Vec<BigRational> = m
        .iter()
        .map(|&x| BigRational::from_float(x).ok_or_else(|| Error::InvalidArgument("non-finite moment".into())))
        .collect::<Result<_>>()?;
    let mut binom: Vec<Vec<BigInt>> = vec![vec![BigInt::from(1)]];
    for i in 1..=m.len() {
        let mut row = vec![BigInt::from(1); i + 1];
        for j in 1..i {
            row[j] = &binom[i - 1][j - 1] + &binom[i - 1][j];
        }
        binom.push(row);
    }
    let mut g: Vec<BigRational> = Vec::with_capacity(m.len());
    for k in 1..=m.len() {
        let mut v = mr[k - 1].clone();
        for j in 1..k {
            let coef = BigRational::from_integer(binom[k - 1][j - 1].clone());
            v -= coef * &g[j - 1] * &mr[k - j - 1];
        }
        g.push(v);
    }
    Ok(g.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect())
}

/// `E X^p = Σ_u (1/u!) Σ_{k₁+…+k_u=p} p!/(k₁!…k_u!) Γ_{k₁}…Γ_{k_u}` for `p = 1..=len`.
/// With `centered` the input must have `Γ₁ = 0` and parts of size 1 are dropped, so `u ≤ p/2`.
pub fn cumulants_to_moments(g: &[f64], centered: bool) -> Result<Vec<f64>> {
    check_order(g.len())?;
    if centered && g[0] != 0.0 {
        return Err(Error::InvalidArgument("centered form needs Γ₁ = 0".into()));
    }
    let pmax = g.len();
    let min_part = if centered { 2 } else { 1 };
    let fact: Vec<f64> = (0..=pmax).scan(1.0, |f, i| { if i > 0 { *f *= i as f64; } Some(*f) }).collect();
    // comp[u][p] = Σ over compositions of p into u parts of Π Γ_{k_i}/k_i!
    let mut comp = vec![vec![0.0; pmax + 1]; pmax + 1];
    comp[0][0] = 1.0;
    for u in 1..=pmax {
        for p in u * min_part..=pmax {
            let mut acc = Neumaier::new();
            for k in min_part..=p - (u - 1) * min_part {
                let prev = comp[u - 1][p - k];
                if prev != 0.0 && g[k - 1] != 0.0 {
                    acc.add(prev * g[k - 1] / fact[k]);
                }
            }
            comp[u][p] = acc.value();
        }
    }
    Ok((1..=pmax)
        .map(|p| {
            let mut acc = Neumaier::new();
            for u in 1..=p / min_part {
                acc.add(comp[u][p] * fact[p] / fact[u]);
            }
            acc.value()
        })
        .collect())
}

/// Power sums `Σ (x − c)^r`, `r = 0..=k`.
fn power_sums(xs: &[f64], c: f64, k: usize) -> Vec<f64> {
    let mut acc = vec![Neumaier::new(); k + 1];
    for &x in xs {
        let d = x - c;
        let mut p = 1.0;
        for a in acc.iter_mut() {
            a.add(p);
            p *= d;
        }
    }
    acc.iter().map(|a| a.value()).collect()
}

/// Central sums from sums about an arbitrary shift.
fn centralize(p: &[f64], n: f64, binom: &[Vec<f64>]) -> Vec<f64> {
    let mu = p[1] / n;
    (0..p.len())
        .map(|r| {
            if r == 1 {
                return 0.0;
            }
            let mut acc = Neumaier::new();
            for t in 0..=r {
                acc.add(binom[r][t] * p[t] * (-mu).powi((r - t) as i32));
            }
            acc.value()
        })
        .collect()
}

/// k-statistics `k₂..k₄` from central sums.
fn kstats(s: &[f64], n: f64) -> [f64; 3] {
    let k2 = s[2] / (n - 1.0);
    let k3 = n * s[3] / ((n - 1.0) * (n - 2.0));
    let k4 = if s.len() > 4 {
        (n * (n + 1.0) * s[4] - 3.0 * (n - 1.0) * s[2] * s[2]) / ((n - 1.0) * (n - 2.0) * (n - 3.0))
    } else {
        f64::NAN
    };
    [k2, k3, k4]
}

/// Unbiased k-statistics for orders ≤ 4, plug-in central-moment cumulants for
/// 5..=8, jackknife standard errors for orders ≤ 4.
pub fn sample_cumulants(xs: &[f64], k_max: usize) -> Result<CumulantVector> {
    if k_max == 0 || k_max > SAMPLE_KMAX {
        return Err(Error::InvalidArgument(format!("sample order must be in 1..={SAMPLE_KMAX}")));
    }
    let n = xs.len();
    if n < 10 * k_max || n < 5 {
        return Err(Error::TooFewSamples { needed: (10 * k_max).max(5), got: n });
    }
    let nf = n as f64;
    let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let shift = if lo == hi { lo } else { crate::summation::mean(xs) };
    let kk = k_max.max(4);
    let binom = binomials(kk);
    let p = power_sums(xs, shift, kk);
    let s = centralize(&p, nf, &binom);
    let mean = shift + p[1] / nf;

    let central: Vec<f64> = (1..=k_max).map(|r| if r == 1 { 0.0 } else { s[r] / nf }).collect();
    let mut cumulants = moments_to_cumulants(&central)?;
    cumulants[0] = mean;
    let ks = kstats(&s, nf);
    for k in 2..=k_max.min(4) {
        cumulants[k - 1] = ks[k - 2];
    }

    let raw = power_sums(xs, 0.0, k_max);
    let moments = (1..=k_max).map(|r| raw[r] / nf).collect();

    // leave-one-out from the same shifted sums
    let jk = k_max.min(4);
    let mut loo: Vec<Vec<f64>> = vec![Vec::with_capacity(n); jk];
    let mut pj = vec![0.0; kk + 1];
    for &x in xs {
        let d = x - shift;
        let mut pw = 1.0;
        for (r, slot) in pj.iter_mut().enumerate() {
            *slot = p[r] - pw;
            pw *= d;
        }
        let sj = centralize(&pj, nf - 1.0, &binom);
        let kj = kstats(&sj, nf - 1.0);
        loo[0].push(shift + pj[1] / (nf - 1.0));
        for k in 2..=jk {
            loo[k - 1].push(kj[k - 2]);
        }
    }
    let mut se = vec![None; k_max];
    for k in 1..=jk {
        let v = &loo[k - 1];
        let m = crate::summation::mean(v);
        let ss: f64 = crate::summation::sum(v.iter().map(|t| (t - m) * (t - m)));
        se[k - 1] = Some(((nf - 1.0) / nf * ss).sqrt());
    }
    Ok(CumulantVector { moments, cumulants, se, provenance: Provenance::Sample { replicates: n } })
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `ln λ(ε, k)` with `λ(ε,k) = k! Σ_{r=1}^{⌊k/2⌋} ε^r (3r+1)^{k−2r} / (r (k−2r)!)`.
pub fn gorc_lambda_ln(eps: f64, k: usize) -> Result<f64> {
    if k < 2 || !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidArgument(format!("need k ≥ 2 and ε ∈ [0,1], got k={k}, ε={eps}")));
    }
    if eps == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let le = eps.ln();
    let terms: Vec<f64> = (1..=k / 2)
        .map(|r| {
            let rf = r as f64;
            ln_factorial(k) + rf * le + (k - 2 * r) as f64 * (3.0 * rf + 1.0).ln() - rf.ln() - ln_factorial(k - 2 * r)
        })
        .collect();
    Ok(log_sum_exp(&terms))
}

pub fn gorc_lambda(eps: f64, k: usize) -> Result<f64> {
    Ok(gorc_lambda_ln(eps, k)?.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GammaCase {
    /// `128ℓr(φ(q_b) + β_κ(q_b)^κ)`.
    Bounded,
    /// `128ℓr(φ(q_b)^{1/2} + β_∞(q_b)^κ)`.
    Unbounded,
}

/// `γ_δ(b, r)` with `q_b = ⌊b/3⌋` and `φ(0) = 1`.
pub fn gamma_delta(b: u64, r: usize, mixing: &MixingProfile, ell: usize, kappa: f64, case: GammaCase) -> Result<f64> {
    if b == 0 || r == 0 || ell == 0 {
        return Err(Error::InvalidArgument("b, r and ℓ must be ≥ 1".into()));
    }
    let qb = b / 3;
    let phi = mixing.phi(qb);
    let v = match case {
        GammaCase::Bounded => phi + mixing.beta(kappa, qb).powf(kappa),
        GammaCase::Unbounded => phi.sqrt() + mixing.beta(f64::INFINITY, qb).powf(kappa),
    };
    Ok(128.0 * ell as f64 * r as f64 * v)
}

pub type Metric = Arc<dyn Fn(usize, usize) -> f64 + Send + Sync>;
/// `(v, t) ↦ ϱ_{v,t}`.
pub type NormProxy = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;
/// `(b, r) ↦ γ_δ(b, r)`.
pub type GammaFn = Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>;

/// Vertex set `{0..|V|}` with distance, norm proxies and the decoupling profile `γ_δ`.
#[derive(Clone)]
pub struct GorcInstance {
    pub n_vertices: usize,
    pub rho: Metric,
    pub varrho: NormProxy,
    /// `δ ∈ (0, ∞]`.
    pub delta: f64,
    pub gamma: GammaFn,
    /// Only two-set decoupling is available: `γ` is multiplied by `k`.
    pub pairwise_only: bool,
}

/// Pieces of the cumulant bound, all natural logs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GorcBound {
    pub ln_bound: f64,
    pub ln_main: f64,
    pub ln_remainder: f64,
    /// First `m` not summed in the remainder.
    pub truncated_at: u64,
    /// Size of the last summed remainder term (natural log).
    pub ln_last_term: f64,
    pub pairwise_flag: bool,
}

const MAX_VERTICES: usize = 4096;
const LN_NEGLIGIBLE: f64 = -690.8; // ln 1e-300

impl GorcInstance {
    /// Evenly spaced points with `ρ = |i − j|` and uniform `ϱ`.
    pub fn interval(n: usize, varrho: f64, delta: f64, gamma: GammaFn) -> Self {
        GorcInstance {
            n_vertices: n,
            rho: Arc::new(|a, b| (a as f64 - b as f64).abs()),
            varrho: Arc::new(move |_, _| varrho),
            delta,
            gamma,
            pairwise_only: false,
        }
    }

    fn check(&self) -> Result<()> {
        if self.n_vertices == 0 {
            return Err(Error::InvalidArgument("empty vertex set".into()));
        }
        crate::error::budget("vertex pairs", self.n_vertices as u128, MAX_VERTICES as u128)?;
        if !(self.delta > 0.0) {
            return Err(Error::InvalidArgument("δ must be positive".into()));
        }
        Ok(())
    }

    /// `C(t) = Σ_v ϱ_{v,t}`.
    pub fn c_sum(&self, t: f64) -> f64 {
        crate::summation::sum((0..self.n_vertices).map(|v| (self.varrho)(v, t)))
    }

    /// `L_s(t) = max_v Σ_{u: ρ(u,v) ≤ s} ϱ_{u,t}`.
    pub fn l_sum(&self, s: f64, t: f64) -> f64 {
        (0..self.n_vertices)
            .map(|v| {
                crate::summation::sum(
                    (0..self.n_vertices).filter(|&u| (self.rho)(u, v) <= s).map(|u| (self.varrho)(u, t)),
                )
            })
            .fold(0.0, f64::max)
    }

    /// `γ̃_δ(m, k) = max_{r≤k} γ_δ(m, r)/r` (times `k` in the pairwise regime).
    pub fn gamma_tilde(&self, m: f64, k: usize) -> f64 {
        let g = (1..=k).map(|r| (self.gamma)(m, r) / r as f64).fold(0.0, f64::max);
        if self.pairwise_only {
            g * k as f64
        } else {
            g
        }
    }

    fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for u in 0..self.n_vertices {
            for v in 0..self.n_vertices {
                d = d.max((self.rho)(u, v));
            }
        }
        d
    }

    /// `|{u : ρ(u,v) ≤ s}| ≤ c₀ s^{u₀}` for all `v` and integer `s ∈ 1..=s_max`.
    pub fn check_growth(&self, c0: f64, u0: f64, s_max: u64) -> bool {
        (1..=s_max).all(|s| {
            (0..self.n_vertices).all(|v| {
                let cnt = (0..self.n_vertices).filter(|&u| (self.rho)(u, v) <= s as f64).count();
                cnt as f64 <= c0 * (s as f64).powf(u0) * (1.0 + 1e-12)
            })
        })
    }

    /// `γ̃_δ(m, k) ≤ d e^{−a m^η}` for `m ∈ 1..=m_max`, `k ∈ 1..=k_max`.
    pub fn check_gamma_decay(&self, a: f64, d: f64, eta: f64, m_max: u64, k_max: usize) -> bool {
        (1..=m_max).all(|m| {
            (1..=k_max).all(|k| self.gamma_tilde(m as f64, k) <= d * (-a * (m as f64).powf(eta)).exp() * (1.0 + 1e-12))
        })
    }

    /// `k^k (2^k C(k) L_s(k)^{k−1} + R_s(δ, k))` in log space.
    pub fn cumulant_bound(&self, k: usize, s: f64) -> Result<GorcBound> {
        self.check()?;
        if k < 2 || !(s > 0.0) {
            return Err(Error::InvalidArgument("need k ≥ 2 and s > 0".into()));
        }
        let kf = k as f64;
        let ln_main = kf * 2f64.ln() + self.c_sum(kf).ln() + (kf - 1.0) * self.l_sum(s, kf).ln();
        let t = if self.delta.is_infinite() { f64::INFINITY } else { (1.0 + self.delta) * kf };
        let ln_c = self.c_sum(t).ln();
        let diam = self.diameter();
        let mut m = s.floor() as u64 + 1;
        let mut terms = Vec::new();
        let mut last = f64::NEG_INFINITY;
        let mut quiet = 0;
        loop {
            let eps = self.gamma_tilde(m as f64, k).min(1.0);
            let lam = gorc_lambda_ln(eps, k)?;
            let term = (kf - 1.0) * self.l_sum(m as f64, t).ln() + ln_c + lam;
            if term.is_finite() {
                terms.push(term);
                last = term;
            }
            m += 1;
            if term < LN_NEGLIGIBLE {
                quiet += 1;
            } else {
                quiet = 0;
            }
            if (quiet >= 8 && m as f64 > diam) || m > diam as u64 + 100_000 {
                break;
            }
        }
        let ln_remainder = log_sum_exp(&terms);
        let ln_bound = kf * kf.ln() + log_sum_exp(&[ln_main, ln_remainder]);
        Ok(GorcBound {
            ln_bound,
            ln_main,
            ln_remainder,
            truncated_at: m,
            ln_last_term: last,
            pairwise_flag: self.pairwise_only,
        })
    }
}

/// Moment information for the corollary bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum MomentSpec {
    /// `M_∞`, requires `δ = ∞`.
    Bounded { m_inf: f64 },
    /// `M_k` and `M_{(1+δ)k}` at the order being bounded.
    Norms { m_k: f64, m_dk: f64 },
    /// `(ϱ_{v,k})^k ≤ M^k (k!)^θ`, with absolute constant `C`.
    Growth { m: f64, theta: f64, abs_c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorollaryParams {
    pub c0: f64,
    pub u0: f64,
    pub a: f64,
    pub d: f64,
    pub eta: f64,
    pub delta: f64,
    pub n_vertices: usize,
    pub moments: MomentSpec,
    /// The corollary's unnamed constant `c`.
    pub c: Option<f64>,
}

/// Log of the corollary bound: the bounded form when `δ = ∞`, the moment-growth
/// form when `(M, θ)` is declared, the general form otherwise.
pub fn corollary_bound(p: &CorollaryParams, k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::InvalidArgument("k ≥ 2 required".into()));
    }
    let c = p.c.ok_or(Error::MissingConstant("c"))?;
    if !(c > 0.0 && p.d >= 1.0 && p.eta > 0.0 && p.u0 >= 0.0 && p.n_vertices > 0) {
        return Err(Error::InvalidArgument(format!("invalid corollary parameters {p:?}")));
    }
    let kf = k as f64;
    let lkf = ln_factorial(k);
    let common = kf * p.d.ln() + (p.n_vertices as f64).ln() + kf * c.ln();
    let expo = 1.0 + p.u0 / p.eta;
    match p.moments {
        MomentSpec::Bounded { m_inf } => {
            if !p.delta.is_infinite() {
                return Err(Error::InvalidArgument("bounded form needs δ = ∞".into()));
            }
            Ok(2f64.ln() + common + kf * m_inf.ln() + expo * lkf)
        }
        _ if p.delta.is_infinite() => Err(Error::InvalidArgument("δ = ∞ needs the bounded form".into())),
        MomentSpec::Norms { m_k, m_dk } => {
            Ok(common + expo * lkf + log_sum_exp(&[kf * m_k.ln(), kf * m_dk.ln()]))
        }
        MomentSpec::Growth { m, theta, abs_c } => Ok(3f64.ln()
            + theta / (1.0 + p.delta) * abs_c.ln()
            + common
            + kf * (1.0 + p.delta).ln()
            + kf * m.ln()
            + (expo + theta) * lkf),
    }
}

/// `ln` of `(C^{ζ(λ+1)} Q)^k (k!)^{λζ}` with `Q = λ^{ζλ} M^λ`: the bound on
/// `τ_{λk}^{λk}` implied by `τ_j^j ≤ M^j (j!)^ζ`.
pub fn tau_power_bound_ln(m: f64, zeta: f64, lambda: u32, k: usize, abs_c: f64) -> f64 {
    let l = lambda as f64;
    let kf = k as f64;
    kf * (zeta * (l + 1.0) * abs_c.ln() + zeta * l * l.ln() + l * m.ln()) + l * zeta * ln_factorial(k)
}

/// `ln(M^{λk} ((λk)!)^ζ)`, the direct moment bound for order `λk`.
pub fn tau_power_direct_ln(m: f64, zeta: f64, lambda: u32, k: usize) -> f64 {
    let j = lambda as usize * k;
    j as f64 * m.ln() + zeta * ln_factorial(j)
}

/// `ln |Γ_k(S̄_N)|` bound `N (k!)^{1+γ} c₀^{k−2}`, or for `N^{−1/2} S̄_N` when
/// `normalized`: `(k!)^{1+γ} (c₀/√N)^{k−2}`.
pub fn noncum_bound(n: u64, k: usize, c0: f64, gamma: f64, normalized: bool) -> Result<f64> {
    if k < 3 {
        return Err(Error::InvalidArgument("k ≥ 3 required".into()));
    }
    if n == 0 || !(c0 > 0.0) || !(gamma >= 0.0) {
        return Err(Error::InvalidArgument("need N ≥ 1, c₀ > 0, γ ≥ 0".into()));
    }
    let nf = n as f64;
    let base = (1.0 + gamma) * ln_factorial(k);
    Ok(if normalized {
        base + (k as f64 - 2.0) * (c0.ln() - 0.5 * nf.ln())
    } else {
        nf.ln() + base + (k as f64 - 2.0) * c0.ln()
    })
}

/// Smallest `c₀` with `|Γ_k| ≤ N (k!)^{1+γ} c₀^{k−2}`.
pub fn minimal_c0(gamma_abs: f64, n: u64, k: usize, gamma: f64) -> f64 {
    if gamma_abs <= 0.0 {
        return 0.0;
    }
    let ln = gamma_abs.ln() - (n as f64).ln() - (1.0 + gamma) * ln_factorial(k);
    (ln / (k as f64 - 2.0)).exp()
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{MarkovChain, MixingProfile};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn gaussian_and_poisson_moments() {
        let g = moments_to_cumulants(&[0.0, 1.0, 0.0, 3.0, 0.0, 15.0]).unwrap();
        assert_eq!(g, vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let p = moments_to_cumulants(&[2.0, 6.0, 22.0, 94.0]).unwrap();
        assert_eq!(p, vec![2.0, 2.0, 2.0, 2.0]);
        let c = moments_to_cumulants(&[1.5, 2.25, 3.375]).unwrap();
        assert_eq!(c, vec![1.5, 0.0, 0.0]);
    }

    #[test]
    fn moments_from_cumulants() {
        let m = cumulants_to_moments(&[0.0, 2.0, 0.0, 0.0], true).unwrap();
        assert!(close(m[3], 12.0, 1e-15));
        assert_eq!(m[2], 0.0);
        let l = 0.7;
        let m = cumulants_to_moments(&[l, l, l], false).unwrap();
        assert!(close(m[2], l + 3.0 * l * l + l * l * l, 1e-14));
        assert!(cumulants_to_moments(&[1.0, 1.0], true).is_err());
    }

    #[test]
    fn rational_path_matches_float_path() {
        let g: Vec<f64> = (1..=12).map(|k| 0.3 / k as f64).collect();
        let m = cumulants_to_moments(&g, false).unwrap();
        let back = moments_to_cumulants(&m).unwrap();
        for (a, b) in back.iter().zip(&g) {
            assert!(close(*a, *b, 1e-9), "{a} vs {b}");
        }
    }

    #[test]
    fn lambda_values() {
        assert_eq!(gorc_lambda(0.0, 5).unwrap(), 0.0);
        assert!(close(gorc_lambda(0.3, 2).unwrap(), 0.6, 1e-14));
        let e = 0.01;
        assert!(close(gorc_lambda(e, 4).unwrap(), 192.0 * e + 12.0 * e * e, 1e-13));
    }

    #[test]
    fn kstat_constant_and_scaling() {
        let c = vec![2.5; 100];
        let cv = sample_cumulants(&c, 6).unwrap();
        assert_eq!(cv.gamma(1), 2.5);
        for k in 2..=6 {
            assert_eq!(cv.gamma(k), 0.0);
        }
        let xs: Vec<f64> = (0..200).map(|i| ((i * 37 % 101) as f64).sqrt()).collect();
        let a = sample_cumulants(&xs, 4).unwrap();
        let ys: Vec<f64> = xs.iter().map(|x| 4.0 * x).collect();
        let b = sample_cumulants(&ys, 4).unwrap();
        for k in 1..=4 {
            assert_eq!(b.gamma(k), 4f64.powi(k as i32) * a.gamma(k));
        }
    }

    #[test]
    fn kstats_small_sample_exact() {
        // k₂ of {0,1,2,...} with n = 10 is the unbiased variance
        let xs: Vec<f64> = (0..50).map(|i| (i % 10) as f64).collect();
        let cv = sample_cumulants(&xs, 3).unwrap();
        let (_, v) = crate::summation::mean_var(&xs);
        assert!(close(cv.gamma(2), v, 1e-13));
        assert!(cv.gamma(3).abs() < 1e-10);
        assert!(cv.se[1].unwrap() > 0.0);
    }

    #[test]
    fn gamma_delta_cases() {
        let chain = MarkovChain::scalar(&[vec![0.9, 0.1], vec![0.2, 0.8]], &[-1.0, 1.0]).unwrap();
        let prof = MixingProfile::for_chain(&chain);
        let g = gamma_delta(6, 1, &prof, 2, 1.0, GammaCase::Bounded).unwrap();
        assert!(close(g, 256.0 * prof.phi(2), 1e-14));
        let g0 = gamma_delta(2, 1, &prof, 1, 1.0, GammaCase::Bounded).unwrap();
        assert_eq!(g0, 128.0);
    }

    #[test]
    fn gorc_interval_l_sum() {
        let inst = GorcInstance::interval(30, 0.5, f64::INFINITY, Arc::new(|_, _| 0.0));
        assert!(close(inst.l_sum(3.0, 2.0), 0.5 * 7.0, 1e-15));
        assert!(close(inst.l_sum(40.0, 2.0), 0.5 * 30.0, 1e-15));
        let b = inst.cumulant_bound(3, 2.0).unwrap();
        assert_eq!(b.ln_remainder, f64::NEG_INFINITY);
        let expect = 3.0 * 3f64.ln() + 3.0 * 2f64.ln() + (15.0f64).ln() + 2.0 * 2.5f64.ln();
        assert!(close(b.ln_bound, expect, 1e-13));
    }

    #[test]
    fn noncum_examples() {
        assert!(close(noncum_bound(10, 3, 2.0, 1.0, false).unwrap().exp(), 10.0 * 36.0 * 2.0, 1e-12));
        assert!(close(noncum_bound(100, 4, 2.0, 1.0, true).unwrap().exp(), 23.04, 1e-12));
        assert!(noncum_bound(10, 2, 1.0, 1.0, false).is_err());
    }

    #[test]
    fn corollary_bounded_substitution() {
        let p = CorollaryParams {
            c0: 1.0,
            u0: 1.0,
            a: 1.0,
            d: 1.0,
            eta: 1.0,
            delta: f64::INFINITY,
            n_vertices: 50,
            moments: MomentSpec::Bounded { m_inf: 1.0 },
            c: Some(1.0),
        };
        assert!(close(corollary_bound(&p, 2).unwrap().exp(), 2.0 * 50.0 * 4.0, 1e-13));
        let q = CorollaryParams { c: None, ..p };
        assert!(matches!(corollary_bound(&q, 2), Err(Error::MissingConstant(_))));
    }
}
