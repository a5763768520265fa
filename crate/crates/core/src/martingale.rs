//! Martingale approximation of `S_N` for finite-state chains (linear indexes
//! `q_i(n) = i·n`, `r = 0`), with exact conditional expectations.
//!
//! `Y_{i,im} = F_i(ξ_m, ξ_{2m}, …, ξ_{im})`, `R_{i,n} = Σ_{s>n} E[Y_{i,s} | ξ_0..ξ_n]`,
//! `W_{i,n} = Y_{i,n} + R_{i,n} − R_{i,n−1}` and `M_n = Σ_{m≤n} Σ_i 1{m ≤ iN} W_{i,m}`.
//! Then `S_N − M_{ℓN} = Σ_i (R_{i,0} − R_{i,iN})`.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::error::{budget, Error, Result};
use crate::linalg::Matrix;
use crate::observable::{decompose, CenteredObservable, ComponentTables, Observable};
use crate::parallel::{map_range, Execution};
use crate::process::{MarkovChain, MixingProfile, ProcessModel};
use crate::rng;
use crate::summation::Neumaier;

/// Target for the certified truncation error of each `R_{i,n}`.
pub const TRUNCATION_TARGET: f64 = 1e-8;
const MAX_HORIZON: u64 = 100_000;
const EXHAUSTIVE_LIMIT: u128 = 1 << 22;
/// Safety factor applied to calibrated constants.
pub const SAFETY: f64 = 1.5;
/// Smallest calibrated constant (before the safety factor).
pub const FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarphiSum {
    /// `Σ_{n≤cutoff} φ(n) + tail`.
    pub value: f64,
    pub partial: f64,
    /// Certified bound on `Σ_{n>cutoff} φ(n)`.
    pub tail: f64,
    pub cutoff: u64,
}

/// `ϕ = Σ_{n≥0} φ(n)` with `φ(0) = 1`: exact partial sum plus the decay tail.
pub fn varphi_sum(mixing: &MixingProfile, cutoff: u64) -> Result<VarphiSum> {
    let decay = mixing
        .decay()
        .ok_or_else(|| Error::Unsupported("no decay certificate for the φ tail".into()))?;
    let partial = crate::summation::sum((0..=cutoff).map(|n| mixing.phi(n)));
    let tail = decay.tail_sum(cutoff);
    Ok(VarphiSum { value: partial + tail, partial, tail, cutoff })
}

/// `Σ_{g>h} φ(g)`, certified.
fn phi_tail(mixing: &MixingProfile, h: u64) -> f64 {
    let top = (mixing.table_len() as u64).max(h + 1);
    let exact = crate::summation::sum((h + 1..=top).map(|g| mixing.phi(g)));
    exact + mixing.decay().map_or(f64::INFINITY, |d| d.tail_sum(top))
}

/// A finite chain carrying the model: chains themselves, discrete iid laws, and
/// doubling maps of level ≤ 6 through their digit-window chain.
pub fn chain_for(model: &ProcessModel) -> Result<MarkovChain> {
    match model {
        ProcessModel::Doubling(d) => d.window_chain(),
        _ => model.as_chain(),
    }
}

/// Constants of the construction, calibrated or configured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MartingaleConstants {
    /// `|W_{i,n}| ≤ B₁ K (ϕ + r + 1)`.
    pub b1: f64,
    /// `|S_N − M_{ℓN}| ≤ B₃ K (ϕ + r + 1)` when `β = 0`.
    pub b3: f64,
    /// `|R_{i,n}| ≤ 2 B_R K (ϕ + r + 1)`.
    pub b_r: f64,
    /// Multiplier in `δ₁′ = B K (ϕ + r + 1)`: `max(ℓB₁, B₃)`.
    pub b_delta: f64,
    /// `B` for the MGF display `exp(Bλ²Nℓδ₁ + Bλδ₂)`.
    pub b_mgf: f64,
    /// `B` for the tail display `P(S_N ≥ t + Bδ₂) ≤ exp(−t²/(4B²Nℓδ₁²))`.
    pub b_chernoff: f64,
    pub calibrated: bool,
}

/// `Σ_{i,j≤ℓ} min(i, j)`: `Σ_n (#{i : n ≤ iN})² = N·Σ min(i,j)`.
fn overlap_sum(ell: usize) -> f64 {
    let mut s = 0usize;
    for i in 1..=ell {
        for j in 1..=ell {
            s += i.min(j);
        }
    }
    s as f64
}

impl MartingaleConstants {
    /// Derive the tail and MGF constants from `B₁`, `B₃`, `B_R`.
    pub fn from_base(b1: f64, b3: f64, b_r: f64, ell: usize, delta1: f64, calibrated: bool) -> Self {
        let o = overlap_sum(ell) / ell as f64;
        MartingaleConstants {
            b1,
            b3,
            b_r,
            b_delta: (ell as f64 * b1).max(b3),
            b_mgf: b3.max(b1 * b1 * delta1 * o),
            b_chernoff: b3.max(b1 * o.sqrt()),
            calibrated,
        }
    }
}

/// Per-`(i, m)` tables `L_j(s₁..s_j) = E[F_i(s₁..s_j, ξ_{(j+1)m}, …, ξ_{im}) | ξ_{jm} = s_j]`.
#[derive(Debug, Clone)]
struct Levels {
    /// `levels[j − 1]` is `L_j`, `j = 1..=i`.
    levels: Vec<Vec<f64>>,
}

/// The construction for one `(chain, F, ℓ, N)`.
#[derive(Debug, Clone)]
pub struct MartingaleDecomposition {
    chain: MarkovChain,
    cf: CenteredObservable,
    ell: usize,
    big_n: u64,
    horizon: u64,
    truncation: f64,
    k: f64,
    varphi: VarphiSum,
    sup_fi: Vec<f64>,
    fi: Vec<Vec<f64>>,
    centered: Vec<f64>,
    powers: Vec<Matrix>,
    /// `levels[i − 1][m]`.
    levels: Vec<Vec<Levels>>,
    cumulative: Vec<Vec<f64>>,
    start: Vec<f64>,
    constants: Option<MartingaleConstants>,
}

/// Build the decomposition with the smallest horizon `H` whose certified
/// truncation error `2 sup|F_i| (T(H) + T(⌊H/i⌋))`, `T(h) = Σ_{g>h} φ(g)`, is at most
/// [`TRUNCATION_TARGET`]; `horizon` overrides the choice but must still meet it.
pub fn build_decomposition(
    model: &ProcessModel,
    f: &Observable,
    ell_family: usize,
    big_n: u64,
    horizon: Option<u64>,
) -> Result<MartingaleDecomposition> {
    let chain = chain_for(model)?;
    if f.arity() != ell_family {
        return Err(Error::InvalidArgument("family and observable arity differ".into()));
    }
    if big_n == 0 {
        return Err(Error::InvalidArgument("N must be ≥ 1".into()));
    }
    let cm = ProcessModel::Markov(chain.clone());
    let cf = decompose(f, &cm.marginal(0, 0))?;
    let tables: Arc<ComponentTables> =
        cf.tables().cloned().ok_or_else(|| Error::Unsupported("component tables unavailable".into()))?;
    let mixing = MixingProfile::for_chain(&chain);
    let varphi = varphi_sum(&mixing, mixing.table_len() as u64)?;
    let ell = f.arity();
    let s = chain.n_states();
    let sup_fi: Vec<f64> = (1..=ell).map(|i| tables.sup_component(i)).collect();
    let trunc = |h: u64| {
        (1..=ell)
            .map(|i| 2.0 * sup_fi[i - 1] * (phi_tail(&mixing, h) + phi_tail(&mixing, h / i as u64)))
            .fold(0.0, f64::max)
    };
    let h = match horizon {
        Some(h) => h.max(1),
        None => {
            let mut h = 1;
            while trunc(h) > TRUNCATION_TARGET && h < MAX_HORIZON {
                h = (h * 5 / 4).max(h + 1);
            }
            while h > 1 && trunc(h - 1) <= TRUNCATION_TARGET {
                h -= 1;
            }
            h
        }
    };
    let truncation = trunc(h);
    if truncation > TRUNCATION_TARGET {
        return Err(Error::Truncation { target: TRUNCATION_TARGET, horizon: h as usize });
    }
    let max_gap = ell as u64 * big_n + h + 1;
    let m_max = (ell as u64 * big_n + h) as usize + 1;
    let per_m: u128 = (1..=ell).map(|i| (s as u128).pow(i as u32)).sum();
    budget("martingale tables", per_m * m_max as u128 + max_gap as u128 * (s * s) as u128, 50_000_000)?;

    let p = chain.transition();
    let mut powers = Vec::with_capacity(max_gap as usize + 1);
    powers.push(Matrix::identity(s));
    for g in 1..=max_gap as usize {
        let next = powers[g - 1].mul(p);
        powers.push(next);
    }
    let fi: Vec<Vec<f64>> = (1..=ell).map(|i| tables.component_table(i)).collect();
    let mut levels = Vec::with_capacity(ell);
    for i in 1..=ell {
        let mut per = Vec::with_capacity(m_max + 1);
        for m in 0..=m_max {
            per.push(if m == 0 || m > m_max / i + 1 { Levels { levels: Vec::new() } } else { contract(&fi[i - 1], i, &powers[m], s) });
        }
        levels.push(per);
    }
    let cumulative: Vec<Vec<f64>> = (0..s).map(|x| cumulative_table(p.row(x))).collect();
    let start = cumulative_table(chain.stationary());
    let centered = tables.full().iter().map(|v| v - cf.fbar()).collect();
    Ok(MartingaleDecomposition {
        k: f.regularity().k,
        chain,
        cf,
        ell,
        big_n,
        horizon: h,
        truncation,
        varphi,
        sup_fi,
        fi,
        centered,
        powers,
        levels,
        cumulative,
        start,
        constants: None,
    })
}

/// Cumulative sums with every entry from the last positive weight on set above 1,
/// so rounding never selects a null state.
fn cumulative_table(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut c: Vec<f64> = p.iter().map(|v| { acc += v; acc }).collect();
    let last = p.iter().rposition(|&v| v > 0.0).unwrap_or(p.len() - 1);
    for v in &mut c[last..] {
        *v = 2.0;
    }
    c
}

fn contract(fi: &[f64], i: usize, pm: &Matrix, s: usize) -> Levels {
    let mut levels = vec![Vec::new(); i];
    levels[i - 1] = fi.to_vec();
    for j in (1..i).rev() {
        let next = &levels[j];
        let size = s.pow(j as u32);
        let mut cur = vec![0.0; size];
        for (code, slot) in cur.iter_mut().enumerate() {
            let sj = code % s;
            let row = pm.row(sj);
            let mut acc = Neumaier::new();
            for z in 0..s {
                acc.add(row[z] * next[code * s + z]);
            }
            *slot = acc.value();
        }
        levels[j - 1] = cur;
    }
    Levels { levels }
}

/// Values along one path `ξ_0..ξ_{ℓN}`.
#[derive(Debug, Clone, Serialize)]
pub struct PathSummary {
    pub replicate: u64,
    pub s_n: f64,
    pub m_final: f64,
    /// `S_N − M_{ℓN}`.
    pub gap: f64,
    /// `S_N − M_{ℓN} − Σ_i (R_{i,0} − R_{i,iN})`.
    pub telescoping_residual: f64,
    pub max_w: f64,
    pub max_w_component: f64,
    pub max_r: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub n: u64,
    #[serde(rename = "Y")]
    pub y: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "W")]
    pub w: f64,
    #[serde(rename = "M")]
    pub m: f64,
}

impl MartingaleDecomposition {
    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn big_n(&self) -> u64 {
        self.big_n
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn truncation_error(&self) -> f64 {
        self.truncation
    }

    pub fn varphi(&self) -> VarphiSum {
        self.varphi
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn chain(&self) -> &MarkovChain {
        &self.chain
    }

    pub fn centered(&self) -> &CenteredObservable {
        &self.cf
    }

    pub fn sup_components(&self) -> &[f64] {
        &self.sup_fi
    }

    /// `δ₁ = K(ϕ + r + 1)` with `r = 0`.
    pub fn delta1(&self) -> f64 {
        self.k * (self.varphi.value + 1.0)
    }

    pub fn with_constants(mut self, c: MartingaleConstants) -> Self {
        self.constants = Some(c);
        self
    }

    pub fn constants(&self) -> Option<MartingaleConstants> {
        self.constants
    }

    fn require_constants(&self) -> Result<MartingaleConstants> {
        self.constants.ok_or(Error::MissingConstant("B"))
    }

    /// `δ₁′ = B K (ϕ + r + 1)`.
    pub fn delta1_prime(&self) -> Result<f64> {
        Ok(self.require_constants()?.b_delta * self.delta1())
    }

    /// `δ₂′ = B K N β_∞^κ(r) + δ₁′`; `β = 0` for chains.
    pub fn delta2_prime(&self) -> Result<f64> {
        self.delta1_prime()
    }

    /// `E[Y_{i,im} | ξ_0..ξ_n]` for `im > n`.
    #[inline]
    fn cond_y(&self, i: usize, m: u64, n: u64, path: &[usize]) -> f64 {
        let s = self.chain.n_states();
        let known = ((n / m) as usize).min(i - 1);
        let lv = &self.levels[i - 1][m as usize].levels[known];
        let mut code = 0usize;
        for j in 1..=known {
            code = code * s + path[j * m as usize];
        }
        let gap = (known as u64 + 1) * m - n;
        let row = self.powers[gap as usize].row(path[n as usize]);
        let base = code * s;
        let mut acc = 0.0;
        for z in 0..s {
            acc += row[z] * lv[base + z];
        }
        acc
    }

    /// `R_{i,n}` from the path up to `n`, truncated at horizon `H`.
    pub fn r_value(&self, i: usize, n: u64, path: &[usize]) -> f64 {
        let iu = i as u64;
        let first = n / iu + 1;
        let last = (n + self.horizon) / iu;
        let mut acc = Neumaier::new();
        for m in first..=last {
            acc.add(self.cond_y(i, m, n, path));
        }
        acc.value()
    }

    /// `Y_{i,n}`.
    pub fn y_value(&self, i: usize, n: u64, path: &[usize]) -> f64 {
        let iu = i as u64;
        if n == 0 || n % iu != 0 {
            return 0.0;
        }
        let m = (n / iu) as usize;
        let s = self.chain.n_states();
        let code = (1..=i).fold(0usize, |c, j| c * s + path[j * m]);
        self.fi[i - 1][code]
    }

    /// `S_N` from a path.
    pub fn s_n(&self, path: &[usize]) -> f64 {
        let s = self.chain.n_states();
        let mut acc = Neumaier::new();
        for n in 1..=self.big_n as usize {
            let code = (1..=self.ell).fold(0usize, |c, j| c * s + path[j * n]);
            acc.add(self.centered[code]);
        }
        acc.value()
    }

    /// Draw `ξ_0..ξ_{ℓN}` from the stationary chain.
    pub fn sample_path<R: Rng>(&self, rng: &mut R, out: &mut Vec<usize>) {
        out.clear();
        let pick = |u: f64, cum: &[f64]| cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1);
        let mut x = pick(rng.random::<f64>(), &self.start);
        out.push(x);
        for _ in 0..self.ell as u64 * self.big_n {
            x = pick(rng.random::<f64>(), &self.cumulative[x]);
            out.push(x);
        }
    }

    /// Evaluate the construction along a path.
    pub fn evaluate(&self, replicate: u64, path: &[usize]) -> PathSummary {
        let ln = self.ell as u64 * self.big_n;
        let mut w_n = vec![0.0; ln as usize + 1];
        let mut max_wc: f64 = 0.0;
        let mut max_r: f64 = 0.0;
        let mut boundary = Neumaier::new();
        for i in 1..=self.ell {
            let mut prev = self.r_value(i, 0, path);
            let r0 = prev;
            max_r = max_r.max(prev.abs());
            for n in 1..=i as u64 * self.big_n {
                let r = self.r_value(i, n, path);
                let w = self.y_value(i, n, path) + r - prev;
                max_wc = max_wc.max(w.abs());
                max_r = max_r.max(r.abs());
                w_n[n as usize] += w;
                prev = r;
            }
            boundary.add(r0 - prev);
        }
        let mut m = Neumaier::new();
        let mut max_w: f64 = 0.0;
        for &w in &w_n[1..] {
            m.add(w);
            max_w = max_w.max(w.abs());
        }
        let s_n = self.s_n(path);
        let gap = s_n - m.value();
        PathSummary {
            replicate,
            s_n,
            m_final: m.value(),
            gap,
            telescoping_residual: gap - boundary.value(),
            max_w,
            max_w_component: max_wc,
            max_r,
        }
    }

    /// Per-`n` trace of `Y`, `R`, `W`, `M` along a path (`N ≤ 32`).
    pub fn trace(&self, path: &[usize]) -> Result<Vec<TraceRow>> {
        if self.big_n > 32 {
            return Err(Error::InvalidArgument("traces are limited to N ≤ 32".into()));
        }
        let ln = self.ell as u64 * self.big_n;
        let mut rows = Vec::with_capacity(ln as usize);
        let mut m = 0.0;
        for n in 1..=ln {
            let (mut y, mut r, mut w) = (0.0, 0.0, 0.0);
            for i in 1..=self.ell {
                if n <= i as u64 * self.big_n {
                    let yi = self.y_value(i, n, path);
                    let ri = self.r_value(i, n, path);
                    y += yi;
                    r += ri;
                    w += yi + ri - self.r_value(i, n - 1, path);
                }
            }
            m += w;
            rows.push(TraceRow { n, y, r, w, m });
        }
        Ok(rows)
    }

    /// Evaluate `replicates` paths, replicate `j` drawn from the stream `(master, j)`.
    pub fn simulate(&self, master: u64, replicates: usize, exec: Execution) -> Vec<PathSummary> {
        let t = rng::tag(&[0x6d61_7274, self.ell as u64, self.big_n]);
        map_range(replicates, exec, |j| {
            let mut r = rng::stream(master, t, j as u64);
            let mut path = Vec::new();
            self.sample_path(&mut r, &mut path);
            self.evaluate(j as u64, &path)
        })
    }

    /// `W_n` for every successor of `path[..=n−1]`, weighted by its transition probability;
    /// returns `E[W_n | ξ_0..ξ_{n−1}]`.
    fn conditional_w(&self, n: u64, path: &mut Vec<usize>) -> f64 {
        let s = self.chain.n_states();
        let x = path[n as usize - 1];
        let mut acc = Neumaier::new();
        let prev: Vec<f64> = (1..=self.ell)
            .map(|i| if n <= i as u64 * self.big_n { self.r_value(i, n - 1, path) } else { 0.0 })
            .collect();
        for z in 0..s {
            let p = self.chain.transition().get(x, z);
            if p == 0.0 {
                continue;
            }
            path.push(z);
            let mut w = 0.0;
            for i in 1..=self.ell {
                if n <= i as u64 * self.big_n {
                    w += self.y_value(i, n, path) + self.r_value(i, n, path) - prev[i - 1];
                }
            }
            path.pop();
            acc.add(p * w);
        }
        acc.value()
    }
}

/// Worst conditional mean of a martingale difference.
#[derive(Debug, Clone, Serialize)]
pub struct MartingaleCheck {
    pub max_abs_conditional_mean: f64,
    pub worst_n: u64,
    pub worst_past: Vec<usize>,
    pub pasts_checked: u64,
    pub tol: f64,
    pub truncation: f64,
    pub pass: bool,
}

/// Maxima collected over every path in exhaustive mode.
#[derive(Debug, Clone, Serialize)]
pub struct ExhaustiveReport {
    pub check: MartingaleCheck,
    pub max_w: f64,
    pub max_w_component: f64,
    pub max_r: f64,
    pub max_gap: f64,
    pub max_telescoping_residual: f64,
    pub leaves: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckMode {
    Exhaustive,
    /// Pasts taken from sampled paths: `(master seed, replicates)`.
    Sampled { master: u64, replicates: usize },
}

/// `max |E[W_n | ξ_0..ξ_{n−1}]|` over enumerated or sampled pasts.
pub fn check_martingale(d: &MartingaleDecomposition, mode: CheckMode, tol: f64, exec: Execution) -> Result<MartingaleCheck> {
    match mode {
        CheckMode::Exhaustive => Ok(exhaustive(d, tol)?.check),
        CheckMode::Sampled { master, replicates } => {
            let t = rng::tag(&[0x6d61_7274, d.ell as u64, d.big_n]);
            let ln = d.ell as u64 * d.big_n;
            let per = map_range(replicates, exec, |j| {
                let mut r = rng::stream(master, t, j as u64);
                let mut full = Vec::new();
                d.sample_path(&mut r, &mut full);
                let mut worst = (0.0f64, 0u64, Vec::new());
                for n in 1..=ln {
                    let mut past = full[..n as usize].to_vec();
                    let c = d.conditional_w(n, &mut past).abs();
                    if c > worst.0 {
                        worst = (c, n, past);
                    }
                }
                worst
            });
            let mut best = (0.0f64, 0u64, Vec::new());
            for w in per {
                if w.0 > best.0 {
                    best = w;
                }
            }
            let bound = tol + 2.0 * d.truncation;
            Ok(MartingaleCheck {
                max_abs_conditional_mean: best.0,
                worst_n: best.1,
                worst_past: best.2,
                pasts_checked: replicates as u64 * ln,
                tol,
                truncation: d.truncation,
                pass: best.0 <= bound,
            })
        }
    }
}

/// Enumerate every path `ξ_0..ξ_{ℓN}`: conditional means at each inner node and
/// sup-norm maxima at the leaves.
pub fn exhaustive(d: &MartingaleDecomposition, tol: f64) -> Result<ExhaustiveReport> {
    let s = d.chain.n_states() as u128;
    let depth = d.ell as u64 * d.big_n;
    budget("exhaustive paths", s.checked_pow(depth as u32 + 1).unwrap_or(u128::MAX), EXHAUSTIVE_LIMIT)?;
    let mut st = Dfs {
        d,
        path: Vec::with_capacity(depth as usize + 1),
        r: vec![vec![0.0; depth as usize + 1]; d.ell],
        w_n: vec![0.0; depth as usize + 1],
        worst: (0.0, 0, Vec::new()),
        pasts: 0,
        max_w: 0.0,
        max_wc: 0.0,
        max_r: 0.0,
        max_gap: 0.0,
        max_tel: 0.0,
        leaves: 0,
    };
    for x in 0..d.chain.n_states() {
        if d.chain.stationary()[x] == 0.0 {
            continue;
        }
        st.path.push(x);
        for i in 1..=d.ell {
            let r0 = d.r_value(i, 0, &st.path);
            st.r[i - 1][0] = r0;
            st.max_r = st.max_r.max(r0.abs());
        }
        st.visit(0);
        st.path.pop();
    }
    let bound = tol + 2.0 * d.truncation;
    Ok(ExhaustiveReport {
        check: MartingaleCheck {
            max_abs_conditional_mean: st.worst.0,
            worst_n: st.worst.1,
            worst_past: st.worst.2,
            pasts_checked: st.pasts,
            tol,
            truncation: d.truncation,
            pass: st.worst.0 <= bound,
        },
        max_w: st.max_w,
        max_w_component: st.max_wc,
        max_r: st.max_r,
        max_gap: st.max_gap,
        max_telescoping_residual: st.max_tel,
        leaves: st.leaves,
    })
}

struct Dfs<'a> {
    d: &'a MartingaleDecomposition,
    path: Vec<usize>,
    r: Vec<Vec<f64>>,
    w_n: Vec<f64>,
    worst: (f64, u64, Vec<usize>),
    pasts: u64,
    max_w: f64,
    max_wc: f64,
    max_r: f64,
    max_gap: f64,
    max_tel: f64,
    leaves: u64,
}

impl Dfs<'_> {
    /// `path` holds `ξ_0..ξ_n`.
    fn visit(&mut self, n: u64) {
        let d = self.d;
        let ln = d.ell as u64 * d.big_n;
        if n == ln {
            self.leaves += 1;
            let mut m = Neumaier::new();
            for &w in &self.w_n[1..] {
                m.add(w);
            }
            let s_n = d.s_n(&self.path);
            let gap = s_n - m.value();
            let mut boundary = Neumaier::new();
            for i in 1..=d.ell {
                boundary.add(self.r[i - 1][0] - self.r[i - 1][i * d.big_n as usize]);
            }
            self.max_gap = self.max_gap.max(gap.abs());
            self.max_tel = self.max_tel.max((gap - boundary.value()).abs());
            return;
        }
        let x = self.path[n as usize];
        let nn = n + 1;
        let mut cond = Neumaier::new();
        for z in 0..d.chain.n_states() {
            let p = d.chain.transition().get(x, z);
            if p == 0.0 {
                continue;
            }
            self.path.push(z);
            let mut w = 0.0;
            for i in 1..=d.ell {
                if nn <= i as u64 * d.big_n {
                    let r = d.r_value(i, nn, &self.path);
                    let wi = d.y_value(i, nn, &self.path) + r - self.r[i - 1][n as usize];
                    self.r[i - 1][nn as usize] = r;
                    self.max_r = self.max_r.max(r.abs());
                    self.max_wc = self.max_wc.max(wi.abs());
                    w += wi;
                }
            }
            self.w_n[nn as usize] = w;
            self.max_w = self.max_w.max(w.abs());
            cond.add(p * w);
            self.visit(nn);
            self.path.pop();
        }
        self.pasts += 1;
        let c = cond.value().abs();
        if c > self.worst.0 {
            self.worst = (c, nn, self.path.clone());
        }
    }
}

/// Constants from the exhaustive maxima: each ratio scaled by [`SAFETY`], floored.
pub fn calibrate(report: &ExhaustiveReport, d: &MartingaleDecomposition) -> MartingaleConstants {
    let scale = d.delta1();
    let fit = |v: f64| SAFETY * (v / scale).max(FLOOR);
    MartingaleConstants::from_base(
        fit(report.max_w_component),
        fit(report.max_gap),
        fit(report.max_r / 2.0),
        d.ell,
        d.delta1(),
        true,
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub n: u64,
    pub max_gap: f64,
    pub delta2_prime: f64,
    pub max_w: f64,
    /// `ℓ B₁ K (ϕ + r + 1)`.
    pub w_bound: f64,
    pub max_telescoping_residual: f64,
    pub paths: usize,
    pub pass: bool,
}

/// `max |S_N − M_{ℓN}|` over the paths against `δ₂′`. When `sums` is given it must be
/// `S_N` for the same replicates (same seeds); a mismatch is an error.
pub fn sup_gap(d: &MartingaleDecomposition, paths: &[PathSummary], sums: Option<&[f64]>) -> Result<GapReport> {
    if let Some(s) = sums {
        if s.len() != paths.len() {
            return Err(Error::SeedMismatch(format!("{} sums for {} paths", s.len(), paths.len())));
        }
        for (p, &v) in paths.iter().zip(s) {
            if (p.s_n - v).abs() > 1e-9 * (1.0 + v.abs()) {
                return Err(Error::SeedMismatch(format!("replicate {}: S_N {} vs {}", p.replicate, p.s_n, v)));
            }
        }
    }
    let c = d.require_constants()?;
    let delta2 = d.delta2_prime()?;
    let max_gap = paths.iter().map(|p| p.gap.abs()).fold(0.0, f64::max);
    let max_w = paths.iter().map(|p| p.max_w).fold(0.0, f64::max);
    let tel = paths.iter().map(|p| p.telescoping_residual.abs()).fold(0.0, f64::max);
    let w_bound = d.ell as f64 * c.b1 * d.delta1();
    Ok(GapReport {
        n: d.big_n,
        max_gap,
        delta2_prime: delta2,
        max_w,
        w_bound,
        max_telescoping_residual: tel,
        paths: paths.len(),
        pass: max_gap <= delta2 && max_w <= w_bound,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MgfRow {
    pub lambda: f64,
    pub mgf_m: f64,
    pub upper_m: f64,
    /// `exp(λ² Σ_n ‖W_n‖²_∞)` with `‖W_n‖_∞ ≤ #{i : n ≤ iN}·B₁δ₁`.
    pub bound_m: f64,
    pub mgf_s: f64,
    pub upper_s: f64,
    /// `exp(Bλ²Nℓδ₁ + Bλδ₂)`.
    pub bound_s: f64,
    /// Largest single replicate's share of the MGF sum.
    pub max_share: f64,
    pub inconclusive: bool,
    pub pass: bool,
}

/// Empirical MGFs of `M_{ℓN}` and `S_N` with bootstrap upper limits against the
/// Hoeffding-Azuma, MGF and Chernoff checks.
pub fn azuma_mgf_check(
    d: &MartingaleDecomposition,
    paths: &[PathSummary],
    lambdas: &[f64],
    seed: u64,
    exec: Execution,
) -> Result<Vec<MgfRow>> {
    let c = d.require_constants()?;
    let n = d.big_n as f64;
    let ell = d.ell;
    let d1 = d.delta1();
    let sum_sq = (c.b1 * d1).powi(2) * n * overlap_sum(ell);
    let mut rows = Vec::new();
    for (li, &lam) in lambdas.iter().enumerate() {
        let em: Vec<f64> = paths.iter().map(|p| (lam * p.m_final).exp()).collect();
        let es: Vec<f64> = paths.iter().map(|p| (lam * p.s_n).exp()).collect();
        let (mgf_m, _, upper_m) = crate::montecarlo::bootstrap_mean(&em, seed ^ (2 * li as u64), exec)?;
        let (mgf_s, _, upper_s) = crate::montecarlo::bootstrap_mean(&es, seed ^ (2 * li as u64 + 1), exec)?;
        let share = |v: &[f64]| {
            let tot: f64 = crate::summation::sum(v.iter().copied());
            v.iter().copied().fold(0.0, f64::max) / tot
        };
        let max_share = share(&em).max(share(&es));
        let bound_m = (lam * lam * sum_sq).exp();
        let bound_s = crate::bounds::mgf_bound_ln(lam, n, ell, d1, d1, c.b_mgf).exp();
        let inconclusive = max_share > 0.5;
        rows.push(MgfRow {
            lambda: lam,
            mgf_m,
            upper_m,
            bound_m,
            mgf_s,
            upper_s,
            bound_s,
            max_share,
            inconclusive,
            pass: inconclusive || (upper_m <= bound_m && upper_s <= bound_s),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::IidLaw;

    fn two_state() -> ProcessModel {
        ProcessModel::Markov(MarkovChain::scalar(&[vec![0.9, 0.1], vec![0.2, 0.8]], &[-1.0, 1.0]).unwrap())
    }

    #[test]
    fn varphi_examples() {
        let iid = ProcessModel::Iid(IidLaw::rademacher()).mixing_profile().unwrap();
        let v = varphi_sum(&iid, 60).unwrap();
        assert!((v.value - 1.0).abs() < 1e-12);
        let d = crate::process::DecayParams { a: 2f64.ln(), d: 1.0, eta: 1.0 };
        let half = MixingProfile::from_phi(|n| 0.5f64.powi(n as i32), Some(d)).unwrap();
        let v = varphi_sum(&half, 40).unwrap();
        assert!((v.value - 2.0).abs() < 1e-12);
        assert!((v.tail - 2f64.powi(-40)).abs() < 1e-20);
    }

    #[test]
    fn iid_single_index_is_its_own_martingale() {
        let model = ProcessModel::Iid(IidLaw::rademacher());
        let f = Observable::product(1, 1, 0).unwrap();
        let d = build_decomposition(&model, &f, 1, 20, None).unwrap();
        let paths = d.simulate(3, 50, Execution::Sequential);
        for p in &paths {
            assert!(p.gap.abs() < 1e-12 && p.max_r < 1e-12);
        }
        let c = check_martingale(&d, CheckMode::Sampled { master: 1, replicates: 20 }, 1e-12, Execution::Sequential).unwrap();
        assert!(c.pass);
    }

    #[test]
    fn degenerate_chain_is_zero() {
        let model = ProcessModel::Markov(MarkovChain::scalar(&[vec![1.0]], &[3.0]).unwrap());
        let f = Observable::product(2, 1, 0).unwrap();
        let d = build_decomposition(&model, &f, 2, 5, None).unwrap();
        let rep = exhaustive(&d, 1e-12).unwrap();
        assert_eq!(rep.max_w, 0.0);
        assert_eq!(rep.max_gap, 0.0);
        assert!(rep.check.pass);
    }

    #[test]
    fn exhaustive_two_state_small() {
        let model = two_state();
        let f = Observable::product(2, 1, 0).unwrap();
        let d = build_decomposition(&model, &f, 2, 4, None).unwrap();
        let rep = exhaustive(&d, 1e-8).unwrap();
        assert!(rep.check.pass, "{:?}", rep.check);
        assert!(rep.max_telescoping_residual < 1e-9);
        assert!(rep.max_gap > 0.0);
    }

    /// `R_{i,n}` from the Markov formula against averaging over every continuation
    /// of the full past, same horizon.
    #[test]
    fn r_matches_full_past_enumeration() {
        // second eigenvalue 0.1 keeps the horizon short enough to enumerate
        let model = ProcessModel::Markov(MarkovChain::scalar(&[vec![0.5, 0.5], vec![0.4, 0.6]], &[-1.0, 1.0]).unwrap());
        let f = Observable::product(2, 1, 0).unwrap();
        let d = build_decomposition(&model, &f, 2, 3, None).unwrap();
        let h = d.horizon();
        assert!(h <= 16, "horizon {h}");
        let p = d.chain().transition().clone();
        let past = vec![0usize, 1, 1, 0, 1];
        let n = 4u64;
        for i in 1..=2usize {
            let formula = d.r_value(i, n, &past);
            // enumerate ξ_{n+1}..ξ_{n+h}
            let mut total = 0.0;
            for code in 0u64..(1 << h) {
                let mut path = past.clone();
                let mut prob = 1.0;
                for k in 0..h {
                    let z = ((code >> (h - 1 - k)) & 1) as usize;
                    prob *= p.get(*path.last().unwrap(), z);
                    path.push(z);
                }
                let mut y = 0.0;
                for s in n + 1..=n + h {
                    y += d.y_value(i, s, &path);
                }
                total += prob * y;
            }
            assert!((formula - total).abs() < 1e-12, "i={i}: {formula} vs {total}");
        }
    }
}
