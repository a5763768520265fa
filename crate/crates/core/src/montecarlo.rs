//! Replicated sampling of `S_N` and the statistics computed from it.
//!
//! Replicate `j` at size `N` always draws from the stream `(seed, tag(N), j)`,
//! and every reduction runs in index order, so results do not depend on the
//! number of workers.

use rand::Rng;
use serde::Serialize;
use statrs::function::beta::inv_beta_reg;
use statrs::function::erf::erfc;

use crate::bounds::{self, BoundConstants, ConstantSource};
use crate::cumulants::{self, CumulantVector};
use crate::error::{budget, Error, Result};
use crate::indexing::IndexFamily;
use crate::observable::{exact_mean_sn, CenteredObservable, SumPlan, SumScratch};
use crate::parallel::{map_range, map_range_with, num_threads, Execution};
use crate::process::{ProcessModel, SamplingBudget};
use crate::rng;
use crate::summation;

pub const BOOTSTRAP_RESAMPLES: usize = 999;
/// Smallest replicate count for statistics that carry a confidence interval.
pub const MIN_CI_REPLICATES: usize = 100;
/// Safety factor and floor of calibrated constants.
pub const SAFETY: f64 = 1.5;
pub const FLOOR: f64 = 1e-9;
/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Everything needed to draw `S_N` replicates.
#[derive(Clone)]
pub struct Experiment<'a> {
    pub model: &'a ProcessModel,
    pub cf: &'a CenteredObservable,
    pub family: &'a IndexFamily,
    pub n_grid: Vec<u64>,
    pub replicates: usize,
    pub seed: u64,
    pub sampling: SamplingBudget,
    /// Cap on replicate storage plus per-worker scratch, in bytes.
    pub memory_limit: u64,
    pub exec: Execution,
}

impl<'a> Experiment<'a> {
    pub fn new(model: &'a ProcessModel, cf: &'a CenteredObservable, family: &'a IndexFamily, n_grid: Vec<u64>, replicates: usize, seed: u64) -> Result<Self> {
        if n_grid.is_empty() || n_grid.windows(2).any(|w| w[1] <= w[0]) || n_grid[0] == 0 {
            return Err(Error::InvalidArgument("N grid must be nonempty, positive and strictly ascending".into()));
        }
        if replicates == 0 {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        Ok(Experiment {
            model,
            cf,
            family,
            n_grid,
            replicates,
            seed,
            sampling: SamplingBudget::default(),
            memory_limit: 4 << 30,
            exec: Execution::Parallel,
        })
    }

    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_memory_limit(mut self, bytes: u64) -> Self {
        self.memory_limit = bytes;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum MeanSource {
    Exact,
    GrandMean,
}

/// `S_N` replicates and `S̄_N = S_N − E S_N`.
#[derive(Debug, Clone, Serialize)]
pub struct Sums {
    pub n: u64,
    pub raw: Vec<f64>,
    pub centered: Vec<f64>,
    pub mean: f64,
    pub mean_source: MeanSource,
}

pub fn sum_tag(n: u64) -> u64 {
    rng::tag(&[0x7375_6d73, n])
}

/// Draw `R` replicates of `S_N`.
pub fn replicate_sums(exp: &Experiment, n: u64) -> Result<Sums> {
    let plan = SumPlan::new(exp.model, exp.cf, exp.family, n, exp.sampling)?;
    let need = exp.replicates as u128 * 16 + num_threads().max(1) as u128 * plan.index_count() as u128 * 24;
    budget("replicate memory (bytes)", need, exp.memory_limit as u128)?;
    let t = sum_tag(n);
    let raw = map_range_with(exp.replicates, exp.exec, SumScratch::default, |scratch, j| {
        let mut r = rng::stream(exp.seed, t, j as u64);
        plan.sample(&mut r, scratch)
    });
    let (mean, mean_source) = match exact_mean_sn(exp.model, exp.cf, exp.family, n) {
        Ok(m) => (m, MeanSource::Exact),
        Err(Error::Unsupported(_)) | Err(Error::Budget { .. }) => (summation::mean(&raw), MeanSource::GrandMean),
        Err(e) => return Err(e),
    };
    let centered = raw.iter().map(|x| x - mean).collect();
    Ok(Sums { n, raw, centered, mean, mean_source })
}

/// Mean with a percentile bootstrap 95% interval: `(mean, lower, upper)`.
pub fn bootstrap_mean(xs: &[f64], seed: u64, exec: Execution) -> Result<(f64, f64, f64)> {
    bootstrap(xs, summation::mean, seed, exec)
}

/// Percentile bootstrap of `stat` (999 resamples, resample `b` seeded by `(seed, b)`).
pub fn bootstrap<S>(xs: &[f64], stat: S, seed: u64, exec: Execution) -> Result<(f64, f64, f64)>
where
    S: Fn(&[f64]) -> f64 + Sync + Send,
{
    let (point, reps) = bootstrap_replicates(xs, stat, seed, exec)?;
    // order statistics 25 and 975 of 999
    Ok((point, reps[24], reps[974]))
}

/// Sorted bootstrap replicates of `stat`.
pub fn bootstrap_replicates<S>(xs: &[f64], stat: S, seed: u64, exec: Execution) -> Result<(f64, Vec<f64>)>
where
    S: Fn(&[f64]) -> f64 + Sync + Send,
{
    if xs.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let n = xs.len();
    let t = rng::tag(&[0x626f_6f74, n as u64]);
    let mut reps = map_range_with(BOOTSTRAP_RESAMPLES, exec, Vec::new, |buf: &mut Vec<f64>, b| {
        let mut r = rng::stream(seed, t, b as u64);
        buf.clear();
        buf.extend((0..n).map(|_| xs[r.random_range(0..n)]));
        stat(buf)
    });
    reps.sort_by(f64::total_cmp);
    Ok((stat(xs), reps))
}

/// Bootstrap standard error of `stat`.
pub fn bootstrap_se<S>(xs: &[f64], stat: S, seed: u64, exec: Execution) -> Result<f64>
where
    S: Fn(&[f64]) -> f64 + Sync + Send,
{
    let (_, reps) = bootstrap_replicates(xs, stat, seed, exec)?;
    Ok(summation::mean_var(&reps).1.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailEstimate {
    pub x: f64,
    pub count: usize,
    pub p_hat: f64,
    pub lower: f64,
    pub upper: f64,
    pub replicates: usize,
}

/// Two-sided 95% Clopper-Pearson interval for `k` successes in `n` trials.
pub fn clopper_pearson(k: usize, n: usize) -> (f64, f64) {
    let (kf, nf) = (k as f64, n as f64);
    let lower = if k == 0 { 0.0 } else { inv_beta_reg(kf, nf - kf + 1.0, 0.025) };
    let upper = if k == n { 1.0 } else { inv_beta_reg(kf + 1.0, nf - kf, 0.975) };
    (lower, upper)
}

/// `P(X ≥ x)` with its exact binomial interval.
pub fn tail_estimate(samples: &[f64], x: f64) -> Result<TailEstimate> {
    if samples.len() < MIN_CI_REPLICATES {
        return Err(Error::TooFewSamples { needed: MIN_CI_REPLICATES, got: samples.len() });
    }
    let count = samples.iter().filter(|&&v| v >= x).count();
    let (lower, upper) = clopper_pearson(count, samples.len());
    Ok(TailEstimate { x, count, p_hat: count as f64 / samples.len() as f64, lower, upper, replicates: samples.len() })
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `sup_x |F̂(x) − Φ(x)|` for `(X − center)/scale`, evaluated at both sides of every step.
pub fn kolmogorov_distance(samples: &[f64], center: f64, scale: f64) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(Error::InvalidArgument("scale must be positive".into()));
    }
    if samples.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let mut z: Vec<f64> = samples.iter().map(|x| (x - center) / scale).collect();
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < z.len() {
        // one step per distinct value
        let mut j = i;
        while j + 1 < z.len() && z[j + 1] == z[i] {
            j += 1;
        }
        let phi = normal_cdf(z[i]);
        d = d.max((phi - i as f64 / n).abs()).max(((j + 1) as f64 / n - phi).abs());
        i = j + 1;
    }
    Ok(d)
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceFit {
    pub n_grid: Vec<u64>,
    pub variances: Vec<f64>,
    pub variance_se: Vec<f64>,
    /// Weighted least squares slope of `Var̂(S_N)` on `N` (through the origin), clamped at 0.
    pub d2: f64,
    pub d2_se: f64,
    /// Smallest `C` with `|Var̂ − D̂²N| − 2·se ≤ C√N` on the fitted points.
    pub c1: f64,
    pub residuals: Vec<f64>,
    /// Grid points held out of the fit.
    pub holdout: Vec<u64>,
    /// Envelope verdict per grid point at the conservative CI edge.
    pub envelope_pass: Vec<bool>,
}

/// Variance of the sample mean of squares: the standard error of `Var̂`.
fn variance_se(xs: &[f64]) -> f64 {
    let (m, v) = summation::mean_var(xs);
    let m4 = summation::mean(&xs.iter().map(|x| (x - m).powi(4)).collect::<Vec<_>>());
    ((m4 - v * v).max(0.0) / xs.len() as f64).sqrt()
}

/// `D̂²` and the √N envelope; the last `holdout` grid points are excluded from the fit.
pub fn variance_scan(exp: &Experiment, holdout: usize) -> Result<VarianceFit> {
    let sums: Vec<Sums> = exp.n_grid.iter().map(|&n| replicate_sums(exp, n)).collect::<Result<_>>()?;
    variance_fit(&sums, holdout)
}

pub fn variance_fit(sums: &[Sums], holdout: usize) -> Result<VarianceFit> {
    let grid: Vec<u64> = sums.iter().map(|s| s.n).collect();
    if grid.len() < holdout + 2 {
        return Err(Error::InvalidArgument("need at least two fitted grid points".into()));
    }
    let fit_n = grid.len() - holdout;
    if grid[fit_n - 1] < 16 * grid[0] {
        return Err(Error::InvalidArgument("fitted N grid must span a factor of at least 16".into()));
    }
    let mut variances = Vec::new();
    let mut ses = Vec::new();
    for s in sums {
        if s.centered.len() < MIN_CI_REPLICATES {
            return Err(Error::TooFewSamples { needed: MIN_CI_REPLICATES, got: s.centered.len() });
        }
        variances.push(summation::mean_var(&s.raw).1);
        ses.push(variance_se(&s.raw));
    }
    let (mut num, mut den) = (summation::Neumaier::new(), summation::Neumaier::new());
    for k in 0..fit_n {
        let w = 1.0 / ses[k].powi(2).max(1e-300);
        let n = grid[k] as f64;
        num.add(w * n * variances[k]);
        den.add(w * n * n);
    }
    let d2 = (num.value() / den.value()).max(0.0);
    let d2_se = if den.value() > 0.0 { (1.0 / den.value()).sqrt() } else { 0.0 };
    let residuals: Vec<f64> = grid.iter().zip(&variances).map(|(&n, v)| v - d2 * n as f64).collect();
    let slack = |k: usize| Z95 * (ses[k].powi(2) + (grid[k] as f64 * d2_se).powi(2)).sqrt();
    let c1 = (0..fit_n)
        .map(|k| (residuals[k].abs() - slack(k)).max(0.0) / (grid[k] as f64).sqrt())
        .fold(0.0, f64::max);
    let c1 = SAFETY * c1.max(FLOOR);
    let envelope_pass = (0..grid.len())
        .map(|k| Ok((residuals[k].abs() - slack(k)).max(0.0) <= bounds::variance_envelope(grid[k] as f64, c1)?))
        .collect::<Result<_>>()?;
    Ok(VarianceFit {
        n_grid: grid.clone(),
        variances,
        variance_se: ses,
        d2,
        d2_se,
        c1,
        residuals,
        holdout: grid[fit_n..].to_vec(),
        envelope_pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MdpCell {
    pub n: u64,
    pub x: f64,
    pub a_n: f64,
    pub threshold: f64,
    pub tail: TailEstimate,
    /// `−ln p̂ / a_N²`.
    pub value: f64,
    /// Band from the Clopper-Pearson limits.
    pub band: (f64, f64),
    pub rate: f64,
    pub inconclusive: bool,
}

/// Normalized log-tails of `(D̂ √N a_N)^{−1} S̄_N` against `x²/2`. `d2` fixes `D²`;
/// otherwise `Var̂(S_N)/N` at each `N` is used.
pub fn mdp_diagnostic(sums: &[Sums], a_n: &dyn Fn(f64) -> f64, d2: Option<f64>, xs: &[f64]) -> Result<Vec<MdpCell>> {
    let mut out = Vec::new();
    for s in sums {
        let nf = s.n as f64;
        let dd = match d2 {
            Some(v) => v,
            None => summation::mean_var(&s.raw).1 / nf,
        };
        if !(dd > 0.0) {
            return Err(Error::InvalidArgument("D² must be positive for the MDP normalization".into()));
        }
        let a = a_n(nf);
        let speed = bounds::mdp_speed(a);
        for &x in xs {
            let threshold = x * dd.sqrt() * nf.sqrt() * a;
            let tail = tail_estimate(&s.centered, threshold)?;
            let nl = |p: f64| if p > 0.0 { -p.ln() / speed } else { f64::INFINITY };
            out.push(MdpCell {
                n: s.n,
                x,
                a_n: a,
                threshold,
                tail,
                value: nl(tail.p_hat),
                band: (nl(tail.upper), nl(tail.lower)),
                rate: bounds::mdp_rate(x),
                inconclusive: (tail.count as f64) < 20.0,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct CumulantRow {
    pub n: u64,
    pub estimate: CumulantVector,
    /// `Γ̂_k(N^{−1/2} S̄_N) = Γ̂_k / N^{k/2}` for `k = 1..=k_max`.
    pub normalized: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CumulantScan {
    pub rows: Vec<CumulantRow>,
    pub k_max: usize,
}

impl CumulantScan {
    /// `|Γ̂_k| + 2·se`, the conservative edge.
    pub fn upper(&self, row: usize, k: usize) -> f64 {
        let e = &self.rows[row].estimate;
        e.gamma(k).abs() + 2.0 * e.se[k - 1].unwrap_or(0.0)
    }

    /// Log-log slope of `|Γ̂_k(N^{−1/2} S̄_N)|` against `N`.
    pub fn normalized_slope(&self, k: usize) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .map(|r| ((r.n as f64).ln(), r.normalized[k - 1].abs().max(1e-300).ln()))
            .collect();
        ols_slope(&pts)
    }

    /// Per-row check of `|Γ̂_k| upper CI ≤ N (k!)^{1+γ} c₀^{k−2}`.
    pub fn envelope_pass(&self, k: usize, c0: f64, gamma: f64) -> Result<Vec<bool>> {
        (0..self.rows.len())
            .map(|i| Ok(self.upper(i, k).ln() <= cumulants::noncum_bound(self.rows[i].n, k, c0, gamma, false)?))
            .collect()
    }
}

pub fn ols_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Sample cumulants of `S̄_N` at every grid size.
pub fn cumulant_scan(sums: &[Sums], k_max: usize) -> Result<CumulantScan> {
    if k_max < 2 || k_max > 4 {
        return Err(Error::InvalidArgument("cumulant scans cover orders 2..=4".into()));
    }
    let mut rows = Vec::new();
    for s in sums {
        if s.centered.len() < 10_000 {
            return Err(Error::TooFewSamples { needed: 10_000, got: s.centered.len() });
        }
        let estimate = cumulants::sample_cumulants(&s.centered, k_max)?;
        let nf = s.n as f64;
        let normalized = (1..=k_max).map(|k| estimate.gamma(k) / nf.powf(k as f64 / 2.0)).collect();
        rows.push(CumulantRow { n: s.n, estimate, normalized });
    }
    Ok(CumulantScan { rows, k_max })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentIdentity {
    pub p: usize,
    pub empirical: f64,
    pub reconstructed: f64,
    pub se: f64,
    pub pass: bool,
}

/// `E X^p` against `cumulants_to_moments(Γ̂)` for `p ≤ 4`, within 4 bootstrap SE.
pub fn moment_identity(xs: &[f64], seed: u64, exec: Execution) -> Result<Vec<MomentIdentity>> {
    let cv = cumulants::sample_cumulants(xs, 4)?;
    let rec = cumulants::cumulants_to_moments(&cv.cumulants, false)?;
    (1..=4)
        .map(|p| {
            let raw = |v: &[f64]| summation::mean(&v.iter().map(|x| x.powi(p as i32)).collect::<Vec<_>>());
            let empirical = raw(xs);
            let se = bootstrap_se(xs, raw, seed ^ p as u64, exec)?;
            let reconstructed = rec[p - 1];
            Ok(MomentIdentity { p, empirical, reconstructed, se, pass: (empirical - reconstructed).abs() <= 4.0 * se + 1e-12 * (1.0 + empirical.abs()) })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CalibrationTarget {
    C0Cumulant,
    C12Concentration,
    C1Variance,
    BMartingale,
}

/// Tails of `N^{−1/2} S̄_N` at one `N`, for concentration calibration.
#[derive(Debug, Clone, Serialize)]
pub struct TailTable {
    pub n: u64,
    pub tails: Vec<TailEstimate>,
}

pub fn tail_table(s: &Sums, xs: &[f64]) -> Result<TailTable> {
    let root = (s.n as f64).sqrt();
    let tails = xs
        .iter()
        .map(|&x| tail_estimate(&s.centered, x * root).map(|t| TailEstimate { x, ..t }))
        .collect::<Result<_>>()?;
    Ok(TailTable { n: s.n, tails })
}

fn finish(raw: f64) -> f64 {
    SAFETY * raw.max(FLOOR)
}

/// Smallest `c₀` with every `|Γ̂_k|` upper edge under the envelope, scaled by the safety factor.
pub fn calibrate_c0(scan: &CumulantScan, gamma: f64, into: &mut BoundConstants) -> Result<f64> {
    let mut c: f64 = 0.0;
    for (i, row) in scan.rows.iter().enumerate() {
        for k in 3..=scan.k_max {
            c = c.max(cumulants::minimal_c0(scan.upper(i, k), row.n, k, gamma));
        }
    }
    let v = finish(c);
    into.set("c0", v, ConstantSource::Calibrated)?;
    Ok(v)
}

/// Smallest common `c₁ = c₂` keeping the concentration bound above every lower tail edge.
pub fn calibrate_c12(tables: &[TailTable], gamma: f64, into: &mut BoundConstants) -> Result<f64> {
    let ok = |c: f64| -> Result<bool> {
        for t in tables {
            for e in &t.tails {
                if e.x > 0.0 && e.lower > 0.0 && bounds::concentration_bound_ln(e.x, t.n as f64, c, c, gamma)? < e.lower.ln() {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    };
    let (mut lo, mut hi) = (FLOOR, 1.0);
    if ok(lo)? {
        hi = lo;
    } else {
        while !ok(hi)? {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::Calibration("c1/c2".into()));
            }
        }
        for _ in 0..80 {
            let mid = (lo * hi).sqrt();
            if ok(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    let v = finish(hi);
    into.set("c1", v, ConstantSource::Calibrated)?;
    into.set("c2", v, ConstantSource::Calibrated)?;
    Ok(v)
}

/// `C₁` from a variance fit (already carries the safety factor).
pub fn calibrate_c1_variance(fit: &VarianceFit, into: &mut BoundConstants) -> Result<f64> {
    into.set("C1", fit.c1, ConstantSource::Calibrated)?;
    Ok(fit.c1)
}

/// Martingale constants from an exhaustive instance.
pub fn calibrate_b(report: &crate::martingale::ExhaustiveReport, d: &crate::martingale::MartingaleDecomposition, into: &mut BoundConstants) -> Result<crate::martingale::MartingaleConstants> {
    let c = crate::martingale::calibrate(report, d);
    into.set("B", c.b_delta, ConstantSource::Calibrated)?;
    into.set("B1", c.b1, ConstantSource::Calibrated)?;
    into.set("B3", c.b3, ConstantSource::Calibrated)?;
    Ok(c)
}

/// Parallel map re-exported for callers that time the replicate loop.
pub fn map_replicates<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, exec: Execution, f: F) -> Vec<T> {
    map_range(n, exec, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observable::{decompose, Observable};
    use crate::process::{IidLaw, MarkovChain};
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::seeded(seed);
        (0..n).map(|_| StandardNormal.sample(&mut r)).collect()
    }

    #[test]
    fn tail_endpoints() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let t = tail_estimate(&xs, -1.0).unwrap();
        assert_eq!(t.p_hat, 1.0);
        assert_eq!(t.upper, 1.0);
        let t = tail_estimate(&xs, 1e9).unwrap();
        assert_eq!(t.p_hat, 0.0);
        assert_eq!(t.lower, 0.0);
        // two-sided 95%: 1 − 0.025^{1/R} ≈ 3.69/R
        assert!((t.upper - (1.0 - 0.025f64.powf(1e-3))).abs() < 1e-9);
        assert!(t.upper > 3.0 / 1000.0 && t.upper < 3.8 / 1000.0);
        assert!(tail_estimate(&xs[..50], 0.0).is_err());
    }

    #[test]
    fn normal_tail_covers_oracle() {
        let xs = normals(100_000, 5);
        let t = tail_estimate(&xs, 1.6449).unwrap();
        let truth = 1.0 - normal_cdf(1.6449);
        assert!(t.lower <= truth && truth <= t.upper, "{t:?} vs {truth}");
    }

    #[test]
    fn kolmogorov_cases() {
        let xs = normals(100_000, 9);
        let d = kolmogorov_distance(&xs, 0.0, 1.0).unwrap();
        assert!(d <= 3.0 * 1.36 / (1e5f64).sqrt(), "{d}");
        let c = vec![0.3; 200];
        let d = kolmogorov_distance(&c, 0.0, 1.0).unwrap();
        let phi = normal_cdf(0.3);
        assert!((d - phi.max(1.0 - phi)).abs() < 1e-15);
        let scaled: Vec<f64> = xs[..5000].iter().map(|x| 4.0 * x + 2.0).collect();
        let a = kolmogorov_distance(&xs[..5000], 0.0, 1.0).unwrap();
        let b = kolmogorov_distance(&scaled, 2.0, 4.0).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(kolmogorov_distance(&xs, 0.0, 0.0).is_err());
    }

    #[test]
    fn degenerate_chain_sums_vanish() {
        let model = ProcessModel::Markov(MarkovChain::scalar(&[vec![1.0]], &[2.0]).unwrap());
        let f = Observable::product(2, 1, 0).unwrap();
        let cf = decompose(&f, &model.marginal(0, 0)).unwrap();
        let fam = IndexFamily::linear(2).unwrap();
        let exp = Experiment::new(&model, &cf, &fam, vec![16], 200, 1).unwrap();
        let s = replicate_sums(&exp, 16).unwrap();
        assert!(s.raw.iter().all(|&x| x == 0.0));
        assert_eq!(s.mean_source, MeanSource::Exact);
    }

    #[test]
    fn replicates_are_deterministic_across_execution() {
        let model = ProcessModel::Iid(IidLaw::rademacher());
        let f = Observable::product(2, 1, 0).unwrap();
        let cf = decompose(&f, &model.marginal(0, 0)).unwrap();
        let fam = IndexFamily::linear(2).unwrap();
        let exp = Experiment::new(&model, &cf, &fam, vec![64], 500, 42).unwrap();
        let a = replicate_sums(&exp.clone().with_exec(Execution::Sequential), 64).unwrap();
        let b = replicate_sums(&exp.with_exec(Execution::Parallel), 64).unwrap();
        assert_eq!(a.raw.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.raw.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn memory_budget_is_enforced() {
        let model = ProcessModel::Iid(IidLaw::rademacher());
        let f = Observable::product(1, 1, 0).unwrap();
        let cf = decompose(&f, &model.marginal(0, 0)).unwrap();
        let fam = IndexFamily::linear(1).unwrap();
        let exp = Experiment::new(&model, &cf, &fam, vec![8], 1000, 1).unwrap().with_memory_limit(1000);
        assert!(matches!(replicate_sums(&exp, 8), Err(Error::Budget { .. })));
    }

    #[test]
    fn iid_variance_slope() {
        let model = ProcessModel::Iid(IidLaw::rademacher());
        let f = Observable::product(1, 1, 0).unwrap();
        let cf = decompose(&f, &model.marginal(0, 0)).unwrap();
        let fam = IndexFamily::linear(1).unwrap();
        let exp = Experiment::new(&model, &cf, &fam, vec![4, 16, 64, 256], 4000, 3).unwrap();
        let fit = variance_scan(&exp, 1).unwrap();
        assert!((fit.d2 - 1.0).abs() <= 4.0 * fit.d2_se, "{fit:?}");
        assert_eq!(fit.residuals.len(), 4);
        let narrow = Experiment::new(&model, &cf, &fam, vec![4, 8, 16], 200, 3).unwrap();
        assert!(variance_scan(&narrow, 0).is_err());
    }

    #[test]
    fn mdp_zero_and_scaling() {
        let xs = normals(20_000, 4);
        let s = Sums { n: 100, raw: xs.clone(), centered: xs, mean: 0.0, mean_source: MeanSource::Exact };
        // at x = 0 the tail is about 1/2, so the value is ln 2 / a_N² → 0
        let cells = mdp_diagnostic(std::slice::from_ref(&s), &|_| 100.0, Some(0.01), &[0.0]).unwrap();
        assert!(cells[0].value < 1e-4 && cells[0].rate == 0.0);
        // doubling a_N at a fixed tail divides the value by 4
        let c2 = mdp_diagnostic(std::slice::from_ref(&s), &|_| 2.0, Some(0.01), &[0.5]).unwrap();
        let c1 = mdp_diagnostic(std::slice::from_ref(&s), &|_| 1.0, Some(0.01), &[1.0]).unwrap();
        assert_eq!(c2[0].tail.count, c1[0].tail.count);
        assert!((c2[0].value * 4.0 - c1[0].value).abs() < 1e-12);
    }

    #[test]
    fn moment_identity_holds() {
        let xs = normals(20_000, 8);
        for m in moment_identity(&xs, 1, Execution::Parallel).unwrap() {
            assert!(m.pass, "{m:?}");
        }
    }

    #[test]
    fn degenerate_calibration_hits_floor() {
        let s = Sums { n: 64, raw: vec![0.0; 10_000], centered: vec![0.0; 10_000], mean: 0.0, mean_source: MeanSource::Exact };
        let scan = cumulant_scan(std::slice::from_ref(&s), 4).unwrap();
        let mut bc = BoundConstants::default();
        let c0 = calibrate_c0(&scan, 1.0, &mut bc).unwrap();
        assert_eq!(c0, SAFETY * FLOOR);
        let t = tail_table(&s, &[0.5, 1.0]).unwrap();
        let c = calibrate_c12(&[t], 1.0, &mut bc).unwrap();
        assert_eq!(c, SAFETY * FLOOR);
        assert_eq!(bc.entry("c0").unwrap().source, ConstantSource::Calibrated);
    }

    #[test]
    fn bootstrap_is_seeded() {
        let xs = normals(500, 2);
        let a = bootstrap_mean(&xs, 7, Execution::Parallel).unwrap();
        let b = bootstrap_mean(&xs, 7, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        assert!(a.1 <= a.0 && a.0 <= a.2);
    }
}
