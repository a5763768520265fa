//! Observables `F`, their centering constant and the decomposition `F − F̄ = Σ F_i`,
//! and evaluation of nonconventional sums.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{budget, Error, Result};
use crate::indexing::IndexFamily;
use crate::linalg::Matrix;
use crate::process::{IndexSampler, Marginal, MarkovChain, ProcessModel, SamplingBudget};
use crate::rng;
use crate::summation::Neumaier;

pub type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Largest atom-tuple table built for exact integrals.
pub const TENSOR_LIMIT: u128 = 10_000_000;

/// Regularity data: `|F(x)| ≤ K(1 + Σ|x_i|^λ)` and
/// `|F(x) − F(z)| ≤ K(1 + Σ(|x_i|^λ + |z_i|^λ))·Σ|x_i − z_i|^κ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularity {
    pub k: f64,
    pub kappa: f64,
    pub lambda: u32,
}

impl Default for Regularity {
    fn default() -> Self {
        Regularity { k: 1.0, kappa: 1.0, lambda: 0 }
    }
}

/// Outcome of scanning a bound over finitely many points.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanCertificate {
    /// Largest ratio of left side to right side seen.
    pub max_ratio: f64,
    pub points: usize,
    pub pass: bool,
}

#[derive(Clone)]
pub struct Observable {
    name: String,
    arity: usize,
    dimension: usize,
    eval: Evaluator,
    regularity: Regularity,
    product_form: Option<Vec<Evaluator>>,
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Observable")
            .field("name", &self.name)
            .field("arity", &self.arity)
            .field("dimension", &self.dimension)
            .field("regularity", &self.regularity)
            .field("product_form", &self.product_form.is_some())
            .finish()
    }
}

fn check_shape(arity: usize, dimension: usize) -> Result<()> {
    if arity == 0 || dimension == 0 {
        return Err(Error::InvalidArgument("arity and dimension must be positive".into()));
    }
    Ok(())
}

impl Observable {
    /// `f` receives the `ℓ` arguments concatenated (`ℓ·℘` numbers).
    pub fn new<F>(name: &str, arity: usize, dimension: usize, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        check_shape(arity, dimension)?;
        Ok(Observable {
            name: name.to_string(),
            arity,
            dimension,
            eval: Arc::new(f),
            regularity: Regularity::default(),
            product_form: None,
        })
    }

    /// `F(x) = Π_i f_i(x_i)`.
    pub fn from_factors(name: &str, dimension: usize, factors: Vec<Evaluator>) -> Result<Self> {
        let arity = factors.len();
        check_shape(arity, dimension)?;
        let fs = factors.clone();
        let d = dimension;
        Ok(Observable {
            name: name.to_string(),
            arity,
            dimension,
            eval: Arc::new(move |x: &[f64]| fs.iter().enumerate().map(|(i, f)| f(&x[i * d..(i + 1) * d])).product()),
            regularity: Regularity::default(),
            product_form: Some(factors),
        })
    }

    /// `Π_i x_i[coord]`.
    pub fn product(arity: usize, dimension: usize, coord: usize) -> Result<Self> {
        Self::coord_check(dimension, coord)?;
        let f: Evaluator = Arc::new(move |x: &[f64]| x[coord]);
        Self::from_factors("product", dimension, vec![f; arity])
    }

    /// `Σ_i x_i[coord]`.
    pub fn sum(arity: usize, dimension: usize, coord: usize) -> Result<Self> {
        Self::coord_check(dimension, coord)?;
        let d = dimension;
        Self::new("sum", arity, dimension, move |x| (0..arity).map(|i| x[i * d + coord]).sum())
    }

    /// `Π_i 1{x_i[coord] ≥ θ}`: counts ℓ-tuples of simultaneous visits.
    pub fn indicator_product(arity: usize, dimension: usize, coord: usize, threshold: f64) -> Result<Self> {
        Self::coord_check(dimension, coord)?;
        let f: Evaluator = Arc::new(move |x: &[f64]| if x[coord] >= threshold { 1.0 } else { 0.0 });
        let mut o = Self::from_factors("indicator-product", dimension, vec![f; arity])?;
        o.name = "indicator-product".into();
        Ok(o)
    }

    /// `clamp(Π_i p(x_i[coord]), −clip, clip)` with `p` given lowest degree first.
    pub fn clipped_polynomial(arity: usize, dimension: usize, coord: usize, coeffs: Vec<f64>, clip: f64) -> Result<Self> {
        Self::coord_check(dimension, coord)?;
        if !(clip > 0.0) || coeffs.is_empty() {
            return Err(Error::InvalidArgument("clipped polynomial needs coefficients and clip > 0".into()));
        }
        let d = dimension;
        Self::new("clipped-polynomial", arity, dimension, move |x| {
            let v: f64 = (0..arity)
                .map(|i| {
                    let t = x[i * d + coord];
                    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
                })
                .product();
            v.clamp(-clip, clip)
        })
    }

    /// `Σ_i (x_i[1] − x_i[0])`; with the doubling-map pair `(h(y), h(2y))` each term is
    /// a coboundary increment.
    pub fn increment(arity: usize, dimension: usize) -> Result<Self> {
        if dimension < 2 {
            return Err(Error::InvalidArgument("increment needs dimension ≥ 2".into()));
        }
        let d = dimension;
        Self::new("increment", arity, dimension, move |x| (0..arity).map(|i| x[i * d + 1] - x[i * d]).sum())
    }

    /// `F ≡ c`.
    pub fn constant(arity: usize, dimension: usize, c: f64) -> Result<Self> {
        Self::new("constant", arity, dimension, move |_| c)
    }

    fn coord_check(dimension: usize, coord: usize) -> Result<()> {
        if coord >= dimension {
            return Err(Error::InvalidArgument(format!("coordinate {coord} ≥ dimension {dimension}")));
        }
        Ok(())
    }

    pub fn with_regularity(mut self, r: Regularity) -> Result<Self> {
        if !(r.k >= 1.0) || !(r.kappa > 0.0 && r.kappa <= 1.0) {
            return Err(Error::InvalidArgument(format!("need K ≥ 1 and κ ∈ (0,1], got {r:?}")));
        }
        self.regularity = r;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn regularity(&self) -> Regularity {
        self.regularity
    }

    pub fn product_form(&self) -> Option<&[Evaluator]> {
        self.product_form.as_deref()
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    fn weight(&self, x: &[f64]) -> f64 {
        let lam = self.regularity.lambda as f64;
        (0..self.arity)
            .map(|i| crate::process::norm(&x[i * self.dimension..(i + 1) * self.dimension]).powf(lam))
            .sum()
    }

    fn holder_dist(&self, x: &[f64], z: &[f64]) -> f64 {
        let d = self.dimension;
        (0..self.arity)
            .map(|i| {
                let diff: Vec<f64> = (0..d).map(|c| x[i * d + c] - z[i * d + c]).collect();
                crate::process::norm(&diff).powf(self.regularity.kappa)
            })
            .sum()
    }

    /// Growth bound on the given points (each `ℓ·℘` long).
    pub fn check_growth(&self, points: &[Vec<f64>]) -> ScanCertificate {
        let k = self.regularity.k;
        let mut worst: f64 = 0.0;
        for x in points {
            worst = worst.max(self.eval(x).abs() / (k * (1.0 + self.weight(x))));
        }
        ScanCertificate { max_ratio: worst, points: points.len(), pass: worst <= 1.0 + 1e-12 }
    }

    /// Hölder bound on the given pairs.
    pub fn check_holder(&self, pairs: &[(Vec<f64>, Vec<f64>)]) -> ScanCertificate {
        let k = self.regularity.k;
        let mut worst: f64 = 0.0;
        for (x, z) in pairs {
            let lhs = (self.eval(x) - self.eval(z)).abs();
            let rhs = k * (1.0 + self.weight(x) + self.weight(z)) * self.holder_dist(x, z);
            if lhs > 0.0 {
                worst = worst.max(if rhs > 0.0 { lhs / rhs } else { f64::INFINITY });
            }
        }
        ScanCertificate { max_ratio: worst, points: pairs.len(), pass: worst <= 1.0 + 1e-12 }
    }

    /// Smallest `K ≥ 1` for which growth and Hölder bounds hold on all atom tuples
    /// (pairs scanned up to `max_pairs`, deterministically thinned beyond that).
    pub fn fit_regularity(&self, marginal: &Marginal, kappa: f64, lambda: u32, max_pairs: usize) -> Result<Regularity> {
        let mut probe = self.clone();
        probe.regularity = Regularity { k: 1.0, kappa, lambda };
        let tuples = atom_tuples(marginal, self.arity, 4096);
        let g = probe.check_growth(&tuples).max_ratio;
        let n = tuples.len();
        let total = n * n.saturating_sub(1) / 2;
        let stride = (total / max_pairs.max(1)).max(1);
        let mut pairs = Vec::new();
        let mut c = 0usize;
        'outer: for a in 0..n {
            for b in a + 1..n {
                if c % stride == 0 {
                    pairs.push((tuples[a].clone(), tuples[b].clone()));
                    if pairs.len() >= max_pairs {
                        break 'outer;
                    }
                }
                c += 1;
            }
        }
        let h = probe.check_holder(&pairs).max_ratio;
        if !h.is_finite() {
            return Err(Error::InvalidArgument("no finite Hölder constant on the support".into()));
        }
        Ok(Regularity { k: g.max(h).max(1.0), kappa, lambda })
    }
}

/// Up to `limit` ℓ-tuples of atoms (first tuples in lexicographic order), concatenated.
pub fn atom_tuples(m: &Marginal, ell: usize, limit: usize) -> Vec<Vec<f64>> {
    let a = m.len();
    let total = (a as u128).checked_pow(ell as u32).unwrap_or(u128::MAX);
    let count = total.min(limit as u128) as usize;
    let stride = (total / count.max(1) as u128).max(1);
    (0..count)
        .map(|k| {
            let mut code = k as u128 * stride;
            let mut idx = vec![0usize; ell];
            for slot in idx.iter_mut().rev() {
                *slot = (code % a as u128) as usize;
                code /= a as u128;
            }
            idx.iter().flat_map(|&s| m.atoms[s].iter().copied()).collect()
        })
        .collect()
}

/// Estimate of `F̄` with its standard error (0 when exact).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Centering {
    pub value: f64,
    pub se: f64,
    pub exact: bool,
}

fn tensor_size(atoms: usize, ell: usize) -> u128 {
    (atoms as u128).checked_pow(ell as u32).unwrap_or(u128::MAX)
}

/// Values of `F` on every atom tuple, first argument most significant.
fn full_table(f: &Observable, m: &Marginal) -> Vec<f64> {
    let a = m.len();
    let ell = f.arity();
    let size = a.pow(ell as u32);
    let d = f.dimension();
    let mut x = vec![0.0; ell * d];
    let mut idx = vec![0usize; ell];
    let mut out = Vec::with_capacity(size);
    for _ in 0..size {
        for (i, &s) in idx.iter().enumerate() {
            x[i * d..(i + 1) * d].copy_from_slice(&m.atoms[s]);
        }
        out.push(f.eval(&x));
        for slot in idx.iter_mut().rev() {
            *slot += 1;
            if *slot < a {
                break;
            }
            *slot = 0;
        }
    }
    out
}

/// Contract the last argument against the weights.
fn contract(table: &[f64], w: &[f64]) -> Vec<f64> {
    let a = w.len();
    table.chunks(a).map(|c| { let mut s = Neumaier::new(); for (v, p) in c.iter().zip(w) { s.add(v * p); } s.value() }).collect()
}

/// `F̄ = ∫F dμ^{⊗ℓ}`: exact tensor sum for exact marginals within budget, otherwise a
/// Monte Carlo mean over disjoint groups of the marginal's draws.
pub fn centering_constant(f: &Observable, m: &Marginal) -> Result<Centering> {
    if m.dimension() != f.dimension() {
        return Err(Error::InvalidArgument("marginal and observable dimensions differ".into()));
    }
    let ell = f.arity();
    if m.exact {
        budget("centering tensor", tensor_size(m.len(), ell), TENSOR_LIMIT)?;
        let mut t = full_table(f, m);
        for _ in 0..ell {
            t = contract(&t, &m.weights);
        }
        return Ok(Centering { value: t[0], se: 0.0, exact: true });
    }
    let groups = m.len() / ell;
    if groups < 2 {
        return Err(Error::TooFewSamples { needed: 2 * ell, got: m.len() });
    }
    let vals: Vec<f64> = (0..groups)
        .map(|g| {
            let x: Vec<f64> = (0..ell).flat_map(|i| m.atoms[g * ell + i].iter().copied()).collect();
            f.eval(&x)
        })
        .collect();
    let (mean, var) = crate::summation::mean_var(&vals);
    Ok(Centering { value: mean, se: (var / groups as f64).sqrt(), exact: false })
}

/// `G_i` tables: `g[i]` holds `∫F(s₁..s_i, z) dμ^{⊗(ℓ−i)}(z)` on atom tuples of length `i`.
#[derive(Debug, Clone)]
pub struct ComponentTables {
    atoms: usize,
    g: Vec<Vec<f64>>,
}

impl ComponentTables {
    pub fn n_atoms(&self) -> usize {
        self.atoms
    }

    pub fn ell(&self) -> usize {
        self.g.len() - 1
    }

    /// `F_i(s₁, …, s_i)` for `i = states.len()` in `1..=ℓ`.
    #[inline]
    pub fn component(&self, states: &[usize]) -> f64 {
        let i = states.len();
        let code = states.iter().fold(0usize, |c, &s| c * self.atoms + s);
        self.g[i][code] - self.g[i - 1][code / self.atoms]
    }

    /// `F(s) − F̄` on a full tuple.
    #[inline]
    pub fn centered(&self, states: &[usize]) -> f64 {
        let code = states.iter().fold(0usize, |c, &s| c * self.atoms + s);
        self.g[self.ell()][code] - self.g[0][0]
    }

    pub fn sup_component(&self, i: usize) -> f64 {
        let a = self.atoms;
        (0..self.g[i].len())
            .map(|c| (self.g[i][c] - self.g[i - 1][c / a]).abs())
            .fold(0.0, f64::max)
    }

    /// `F_i` on all atom tuples of length `i`, first argument most significant.
    pub fn component_table(&self, i: usize) -> Vec<f64> {
        let a = self.atoms;
        (0..self.g[i].len()).map(|c| self.g[i][c] - self.g[i - 1][c / a]).collect()
    }

    pub fn full(&self) -> &[f64] {
        &self.g[self.ell()]
    }
}

/// `F` together with `F̄` and the decomposition `F − F̄ = Σ_i F_i`, where
/// `F_i(y₁..y_i) = ∫F(y₁..y_i, z) dμ(z) − ∫F(y₁..y_{i−1}, z) dμ(z)` (`z` covering
/// the remaining arguments).
#[derive(Debug, Clone)]
pub struct CenteredObservable {
    base: Observable,
    marginal: Marginal,
    centering: Centering,
    tables: Option<Arc<ComponentTables>>,
}

/// Build the centered observable. Tables over atom tuples are kept when the
/// marginal is exact and `atoms^ℓ` fits the tensor budget.
pub fn decompose(f: &Observable, m: &Marginal) -> Result<CenteredObservable> {
    let centering = centering_constant(f, m)?;
    let tables = if m.exact && tensor_size(m.len(), f.arity()) <= TENSOR_LIMIT {
        let mut g = vec![full_table(f, m)];
        for _ in 0..f.arity() {
            let next = contract(g.last().unwrap(), &m.weights);
            g.push(next);
        }
        g.reverse();
        Some(Arc::new(ComponentTables { atoms: m.len(), g }))
    } else {
        None
    };
    Ok(CenteredObservable { base: f.clone(), marginal: m.clone(), centering, tables })
}

impl CenteredObservable {
    pub fn observable(&self) -> &Observable {
        &self.base
    }

    pub fn marginal(&self) -> &Marginal {
        &self.marginal
    }

    pub fn fbar(&self) -> f64 {
        self.centering.value
    }

    pub fn centering(&self) -> Centering {
        self.centering
    }

    pub fn tables(&self) -> Option<&Arc<ComponentTables>> {
        self.tables.as_ref()
    }

    pub fn ell(&self) -> usize {
        self.base.arity()
    }

    /// `∫F(y₁..y_i, z) dμ^{⊗(ℓ−i)}(z)` at arbitrary values `y` (`i·℘` numbers).
    pub fn partial_integral(&self, y: &[f64]) -> Result<f64> {
        let d = self.base.dimension();
        let ell = self.ell();
        if y.len() % d != 0 || y.len() / d > ell {
            return Err(Error::InvalidArgument("argument length mismatch".into()));
        }
        let i = y.len() / d;
        if i == 0 {
            return Ok(self.fbar());
        }
        let rest = ell - i;
        let a = self.marginal.len();
        budget("partial integral", tensor_size(a, rest), TENSOR_LIMIT)?;
        let mut x = vec![0.0; ell * d];
        x[..i * d].copy_from_slice(y);
        let mut acc = Neumaier::new();
        let mut idx = vec![0usize; rest];
        loop {
            let mut w = 1.0;
            for (k, &s) in idx.iter().enumerate() {
                x[(i + k) * d..(i + k + 1) * d].copy_from_slice(&self.marginal.atoms[s]);
                w *= self.marginal.weights[s];
            }
            acc.add(w * self.base.eval(&x));
            let mut k = rest;
            loop {
                if k == 0 {
                    return Ok(acc.value());
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < a {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    /// `F_i(y₁..y_i)` at arbitrary values.
    pub fn component(&self, y: &[f64]) -> Result<f64> {
        let d = self.base.dimension();
        if y.is_empty() {
            return Err(Error::InvalidArgument("F_i needs i ≥ 1".into()));
        }
        Ok(self.partial_integral(y)? - self.partial_integral(&y[..y.len() - d])?)
    }
}

#[derive(Clone)]
enum TermEval {
    Table { centered: Arc<Vec<f64>>, atoms: usize },
    Values,
}

/// A prepared `S_N` evaluator: the index set, the positions of every term's
/// arguments in it, and a sampler for the model.
#[derive(Clone)]
pub struct SumPlan<'m> {
    sampler: IndexSampler<'m>,
    pos: Vec<u32>,
    ell: usize,
    big_n: u64,
    eval: TermEval,
    obs: Observable,
    fbar: f64,
}

/// Scratch buffers reused across replicates.
#[derive(Debug, Default, Clone)]
pub struct SumScratch {
    states: Vec<u32>,
    values: Vec<f64>,
    args: Vec<f64>,
}

impl<'m> SumPlan<'m> {
    pub fn new(
        model: &'m ProcessModel,
        cf: &CenteredObservable,
        family: &IndexFamily,
        big_n: u64,
        sb: SamplingBudget,
    ) -> Result<Self> {
        if big_n == 0 {
            return Err(Error::InvalidArgument("N must be ≥ 1".into()));
        }
        if family.ell() != cf.ell() {
            return Err(Error::InvalidArgument(format!(
                "family has ℓ = {}, observable arity {}",
                family.ell(),
                cf.ell()
            )));
        }
        if model.dimension() != cf.observable().dimension() {
            return Err(Error::InvalidArgument("model and observable dimensions differ".into()));
        }
        let idx = family.index_set(big_n)?;
        let mut pos = Vec::with_capacity(big_n as usize * family.ell());
        for n in 1..=big_n {
            for i in 1..=family.ell() {
                let q = family.q(i, n);
                pos.push(idx.binary_search(&q).expect("index in set") as u32);
            }
        }
        let sampler = IndexSampler::new(model, idx, sb)?;
        let eval = match cf.tables() {
            Some(t) if model.is_discrete() => TermEval::Table {
                centered: Arc::new(t.full().iter().map(|v| v - cf.fbar()).collect()),
                atoms: t.n_atoms(),
            },
            _ => TermEval::Values,
        };
        Ok(SumPlan {
            sampler,
            pos,
            ell: family.ell(),
            big_n,
            eval,
            obs: cf.observable().clone(),
            fbar: cf.fbar(),
        })
    }

    pub fn big_n(&self) -> u64 {
        self.big_n
    }

    pub fn index_count(&self) -> usize {
        self.sampler.len()
    }

    /// One replicate of `S_N` from the given stream.
    pub fn sample<R: Rng>(&self, rng: &mut R, scratch: &mut SumScratch) -> f64 {
        let mut acc = Neumaier::new();
        match &self.eval {
            TermEval::Table { centered, atoms } => {
                self.sampler.sample_states(rng, &mut scratch.states);
                let st = &scratch.states;
                if self.ell == 1 {
                    for &p in &self.pos {
                        acc.add(centered[st[p as usize] as usize]);
                    }
                } else {
                    for term in self.pos.chunks_exact(self.ell) {
                        let code = term.iter().fold(0usize, |c, &p| c * atoms + st[p as usize] as usize);
                        acc.add(centered[code]);
                    }
                }
            }
            TermEval::Values => {
                self.sampler.sample_values(rng, &mut scratch.values);
                let d = self.obs.dimension();
                for term in self.pos.chunks_exact(self.ell) {
                    scratch.args.clear();
                    for &p in term {
                        let p = p as usize;
                        scratch.args.extend_from_slice(&scratch.values[p * d..(p + 1) * d]);
                    }
                    acc.add(self.obs.eval(&scratch.args) - self.fbar);
                }
            }
        }
        acc.value()
    }
}

/// `S_N = Σ_{n≤N} (F(ξ_{q₁(n)}, …, ξ_{q_ℓ(n)}) − F̄)` for one seed.
pub fn nonconv_sum(
    model: &ProcessModel,
    cf: &CenteredObservable,
    family: &IndexFamily,
    big_n: u64,
    seed: u64,
) -> Result<f64> {
    let plan = SumPlan::new(model, cf, family, big_n, SamplingBudget::default())?;
    let mut r = rng::seeded(seed);
    Ok(plan.sample(&mut r, &mut SumScratch::default()))
}

/// `E S_N`, exact up to floating point, for discrete models.
pub fn exact_mean_sn(model: &ProcessModel, cf: &CenteredObservable, family: &IndexFamily, big_n: u64) -> Result<f64> {
    match model {
        ProcessModel::Iid(_) => {
            if cf.centering().exact {
                Ok(0.0)
            } else {
                Err(Error::Unsupported("F̄ is a Monte Carlo estimate; E S_N is not exact".into()))
            }
        }
        ProcessModel::Markov(c) => chain_mean(c, cf, family, big_n),
        ProcessModel::Doubling(d) => doubling_mean(d, cf, family, big_n),
    }
}

fn chain_mean(c: &MarkovChain, cf: &CenteredObservable, family: &IndexFamily, big_n: u64) -> Result<f64> {
    let tables = cf
        .tables()
        .ok_or_else(|| Error::Unsupported("component tables unavailable".into()))?;
    let s = c.n_states();
    let ell = family.ell();
    budget("per-term joint law", tensor_size(s, ell), 1_000_000)?;
    let mut powers: HashMap<u64, Matrix> = HashMap::new();
    let pi = c.stationary();
    let full = tables.full();
    let mut acc = Neumaier::new();
    let mut states = vec![0usize; ell];
    for n in 1..=big_n {
        let q = family.indices_at(n);
        // distinct sorted positions and where each argument sits among them
        let mut uniq = q.clone();
        uniq.sort_unstable();
        uniq.dedup();
        let slot: Vec<usize> = q.iter().map(|x| uniq.binary_search(x).unwrap()).collect();
        for k in 1..uniq.len() {
            let g = uniq[k] - uniq[k - 1];
            powers.entry(g).or_insert_with(|| c.transition().pow(g));
        }
        let u = uniq.len();
        let mut term = Neumaier::new();
        let mut t = vec![0usize; u];
        loop {
            let mut p = pi[t[0]];
            for k in 1..u {
                p *= powers[&(uniq[k] - uniq[k - 1])].get(t[k - 1], t[k]);
            }
            if p > 0.0 {
                for (a, &sl) in states.iter_mut().zip(&slot) {
                    *a = t[sl];
                }
                let code = states.iter().fold(0usize, |cd, &x| cd * s + x);
                term.add(p * full[code]);
            }
            let mut k = u;
            let done = loop {
                if k == 0 {
                    break true;
                }
                k -= 1;
                t[k] += 1;
                if t[k] < s {
                    break false;
                }
                t[k] = 0;
            };
            if done {
                break;
            }
        }
        acc.add(term.value() - cf.fbar());
    }
    Ok(acc.value())
}

fn doubling_mean(
    d: &crate::process::DoublingMap,
    cf: &CenteredObservable,
    family: &IndexFamily,
    big_n: u64,
) -> Result<f64> {
    let l = d.level() as u64;
    let table = d.table();
    let obs = cf.observable();
    let dim = d.dimension();
    let ell = family.ell();
    let mut acc = Neumaier::new();
    let mut x = vec![0.0; ell * dim];
    for n in 1..=big_n {
        let q = family.indices_at(n);
        let mut sorted = q.clone();
        sorted.sort_unstable();
        let overlapping = sorted.windows(2).any(|w| w[1] - w[0] < l);
        if !overlapping {
            // disjoint digit windows: the arguments are independent
            continue;
        }
        // digit positions q+1 ..= q+L for each argument
        let mut bits: Vec<u64> = q.iter().flat_map(|&a| a + 1..=a + l).collect();
        bits.sort_unstable();
        bits.dedup();
        budget("doubling digit enumeration", 1u128 << bits.len().min(127), 1 << 22)?;
        let nb = bits.len();
        let starts: Vec<usize> = q.iter().map(|&a| bits.binary_search(&(a + 1)).unwrap()).collect();
        let mut term = Neumaier::new();
        for assign in 0u64..(1u64 << nb) {
            for (i, &st) in starts.iter().enumerate() {
                let mut cell = 0usize;
                for k in 0..l as usize {
                    let bit = (assign >> (nb - 1 - (st + k))) & 1;
                    cell = (cell << 1) | bit as usize;
                }
                x[i * dim..(i + 1) * dim].copy_from_slice(&table[cell]);
            }
            term.add(obs.eval(&x));
        }
        acc.add(term.value() / (1u64 << nb) as f64 - cf.fbar());
    }
    Ok(acc.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::IidLaw;

    fn pm(p: f64) -> Marginal {
        Marginal { atoms: vec![vec![-1.0], vec![1.0]], weights: vec![1.0 - p, p], exact: true }
    }

    #[test]
    fn centering_examples() {
        let c = Observable::constant(2, 1, 3.25).unwrap();
        assert_eq!(centering_constant(&c, &pm(0.3)).unwrap().value, 3.25);
        let prod = Observable::product(2, 1, 0).unwrap();
        assert!(centering_constant(&prod, &pm(0.5)).unwrap().value.abs() < 1e-15);
        assert!((centering_constant(&prod, &pm(0.75)).unwrap().value - 0.25).abs() < 1e-15);
    }

    #[test]
    fn decomposition_examples() {
        let prod = Observable::product(2, 1, 0).unwrap();
        let cf = decompose(&prod, &pm(0.5)).unwrap();
        assert!(cf.component(&[1.0]).unwrap().abs() < 1e-15);
        assert!((cf.component(&[-1.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        let m = Marginal { atoms: vec![vec![0.0], vec![2.0], vec![5.0]], weights: vec![0.2, 0.5, 0.3], exact: true };
        let mean = 0.5 * 2.0 + 0.3 * 5.0;
        let sum = Observable::sum(2, 1, 0).unwrap();
        let cf = decompose(&sum, &m).unwrap();
        assert!((cf.component(&[2.0]).unwrap() - (2.0 - mean)).abs() < 1e-14);
        assert!((cf.component(&[7.0, 5.0]).unwrap() - (5.0 - mean)).abs() < 1e-14);
        let one = Observable::product(1, 1, 0).unwrap();
        let cf = decompose(&one, &m).unwrap();
        assert!((cf.component(&[3.0]).unwrap() - (3.0 - mean)).abs() < 1e-14);
    }

    #[test]
    fn tables_agree_with_direct_components() {
        let m = Marginal { atoms: vec![vec![0.0], vec![1.0], vec![3.0]], weights: vec![0.5, 0.25, 0.25], exact: true };
        let f = Observable::new("f", 3, 1, |x| x[0] * x[1] + x[2] * x[2] - x[0] * x[1] * x[2]).unwrap();
        let cf = decompose(&f, &m).unwrap();
        let t = cf.tables().unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let y = [m.atoms[a][0], m.atoms[b][0]];
                assert!((t.component(&[a, b]) - cf.component(&y).unwrap()).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn sums_of_constants_vanish() {
        let model = ProcessModel::Iid(IidLaw::rademacher());
        let c = Observable::constant(2, 1, 4.0).unwrap();
        let cf = decompose(&c, &model.marginal(0, 0)).unwrap();
        let fam = IndexFamily::linear(2).unwrap();
        assert_eq!(nonconv_sum(&model, &cf, &fam, 50, 9).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_chain_sum_is_zero() {
        let model = ProcessModel::Markov(MarkovChain::scalar(&[vec![1.0]], &[2.0]).unwrap());
        let f = Observable::new("f", 2, 1, |x| x[0].powi(3) - x[1]).unwrap();
        let cf = decompose(&f, &model.marginal(0, 0)).unwrap();
        let fam = IndexFamily::linear(2).unwrap();
        assert_eq!(nonconv_sum(&model, &cf, &fam, 40, 1).unwrap(), 0.0);
        assert_eq!(exact_mean_sn(&model, &cf, &fam, 40).unwrap(), 0.0);
    }

    #[test]
    fn fitted_regularity_passes_scans() {
        let m = pm(0.5);
        let f = Observable::product(2, 1, 0).unwrap();
        let r = f.fit_regularity(&m, 1.0, 0, 10_000).unwrap();
        let f = f.with_regularity(r).unwrap();
        let pts = atom_tuples(&m, 2, 100);
        assert!(f.check_growth(&pts).pass);
    }
}
