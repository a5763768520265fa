//! The acceptance criteria as runnable checks, shared by `nonconv verify` and
//! the acceptance test target.

use std::path::PathBuf;
use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::bounds;
use crate::config::{Document, RunConfig, Value};
use crate::cumulants;
use crate::error::{Error, Result};
use crate::indexing::{self, IndexFamily};
use crate::martingale::{self, CheckMode};
use crate::montecarlo::{self, Experiment};
use crate::observable::{decompose, Observable};
use crate::parallel::{with_workers, Execution};
use crate::process::{alpha_bruteforce, alpha_coefficient, phi_bruteforce, phi_coefficient, IidLaw, MarkovChain, ProcessModel};
use crate::rng;
use crate::runner;

pub const IID_PRODUCT: &str = include_str!("../../../presets/iid_product.cfg");
pub const TWO_STATE_CHAIN: &str = include_str!("../../../presets/two_state_chain.cfg");
pub const RADEMACHER_PRODUCT: &str = include_str!("../../../presets/rademacher_product.cfg");
pub const BERNOULLI_MDP: &str = include_str!("../../../presets/bernoulli_mdp.cfg");
pub const DOUBLING: &str = include_str!("../../../presets/doubling.cfg");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// Reduced replicate counts and grids.
    Quick,
    Full,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub title: &'static str,
    /// The check itself passed.
    pub ok: bool,
    pub seconds: f64,
    pub budget_seconds: f64,
    pub detail: String,
}

impl CriterionReport {
    pub fn pass(&self) -> bool {
        self.ok && self.seconds <= self.budget_seconds
    }

    pub fn line(&self) -> String {
        format!(
            "C{:<2} {} {:<34} {:>7.1}s (limit {:>4.0}s)  {}",
            self.id,
            if self.pass() { "PASS" } else { "FAIL" },
            self.title,
            self.seconds,
            self.budget_seconds,
            self.detail
        )
    }
}

pub const TITLES: [&str; 10] = [
    "mixing oracle equivalence",
    "neighborhood bound",
    "cumulant algebra",
    "martingale construction",
    "Hoeffding-Azuma / Chernoff",
    "variance and D^2",
    "cumulant growth",
    "Berry-Esseen slope",
    "MDP diagnostic",
    "determinism across workers",
];

const BUDGETS: [f64; 10] = [30.0, 10.0, 5.0, 120.0, 300.0, 600.0, 600.0, 600.0, 600.0, 600.0];

/// Criteria in a named suite.
pub fn suite(name: &str) -> Result<Vec<u8>> {
    Ok(match name {
        "quick" => vec![1, 2, 3, 4, 10],
        "full" => (1..=10).collect(),
        "martingale" => vec![4, 5],
        "cumulants" => vec![3, 7],
        "mdp" => vec![9],
        other => return Err(Error::InvalidArgument(format!("unknown suite `{other}` (quick, full, martingale, cumulants, mdp)"))),
    })
}

/// Run one criterion.
pub fn criterion(id: u8, scale: Scale) -> Result<CriterionReport> {
    if !(1..=10).contains(&id) {
        return Err(Error::InvalidArgument(format!("no criterion {id}")));
    }
    let t0 = Instant::now();
    let (ok, detail) = match id {
        1 => c1_mixing()?,
        2 => c2_neighborhood()?,
        3 => c3_cumulant_algebra()?,
        4 => c4_martingale(scale)?,
        5 => c5_azuma(scale)?,
        6 => c6_variance(scale)?,
        7 => c7_cumulant_growth(scale)?,
        8 => c8_berry_esseen(scale)?,
        9 => c9_mdp(scale)?,
        _ => c10_determinism(scale)?,
    };
    Ok(CriterionReport {
        id,
        title: TITLES[id as usize - 1],
        ok,
        seconds: t0.elapsed().as_secs_f64(),
        budget_seconds: BUDGETS[id as usize - 1],
        detail,
    })
}

fn chain(rows: &[&[f64]]) -> Result<MarkovChain> {
    let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
    let v: Vec<f64> = (0..rows.len()).map(|i| i as f64).collect();
    MarkovChain::scalar(&rows, &v)
}

pub fn test_chains() -> Result<Vec<MarkovChain>> {
    Ok(vec![
        chain(&[&[0.9, 0.1], &[0.2, 0.8]])?,
        chain(&[&[0.5, 0.5], &[0.3, 0.7]])?,
        chain(&[&[0.1, 0.9], &[0.6, 0.4]])?,
        chain(&[&[0.5, 0.3, 0.2], &[0.1, 0.6, 0.3], &[0.25, 0.25, 0.5]])?,
        chain(&[&[0.8, 0.1, 0.1], &[0.2, 0.7, 0.1], &[0.1, 0.2, 0.7]])?,
        chain(&[&[0.0, 0.5, 0.5], &[0.5, 0.0, 0.5], &[0.5, 0.5, 0.0]])?,
    ])
}

fn c1_mixing() -> Result<(bool, String)> {
    let mut worst_phi: f64 = 0.0;
    let mut worst_alpha: f64 = f64::NEG_INFINITY;
    let mut cases = 0;
    for c in test_chains()? {
        for n in 1..=6u64 {
            let phi = phi_coefficient(&c, n);
            for w in 1..=3usize {
                worst_phi = worst_phi.max((phi - phi_bruteforce(&c, n, w, w)?).abs());
                cases += 1;
                match alpha_bruteforce(&c, n, w, w) {
                    Ok(a) => worst_alpha = worst_alpha.max(a - phi / 2.0),
                    Err(Error::Budget { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            worst_alpha = worst_alpha.max(alpha_coefficient(&c, n)? - phi / 2.0);
        }
    }
    let ok = worst_phi <= 1e-10 && worst_alpha <= 1e-12;
    Ok((ok, format!("{cases} cases, max |φ − φ_brute| = {worst_phi:.2e}, max α − φ/2 = {worst_alpha:.2e}")))
}

fn c2_neighborhood() -> Result<(bool, String)> {
    const N_MAX: u64 = 500;
    let mut worst: f64 = 0.0;
    let mut checked: u64 = 0;
    for ell in 1..=4usize {
        let fam = IndexFamily::linear(ell)?;
        let bound = |s: u64| 3 * (ell * ell) as u64 * s;
        for s in 1..=50u64 {
            for n in 1..=N_MAX {
                // A_s(n, N) = A_s(n, 500) ∩ [1, N]; every N ≥ n is read off the sorted set
                let a = indexing::neighborhood(&fam, n, N_MAX, s)?;
                for big_n in n..=N_MAX {
                    let size = a.partition_point(|&m| m <= big_n) as u64;
                    worst = worst.max(size as f64 / bound(s) as f64);
                    checked += 1;
                }
            }
        }
    }
    Ok((worst <= 1.0, format!("{checked} (ℓ, s, n, N) cases, max |A_s| / 3ℓ²s = {worst:.4}")))
}

/// Raw moments of `N(μ, σ²)`.
fn gaussian_moments(mu: f64, s2: f64, p: usize) -> Vec<f64> {
    (1..=p)
        .map(|k| {
            let mut acc = 0.0;
            let mut j = 0;
            while 2 * j <= k {
                let dfact: f64 = (1..=(2 * j)).filter(|i| i % 2 == 1).map(|i| i as f64).product();
                acc += binom(k, 2 * j) * mu.powi((k - 2 * j) as i32) * s2.powi(j as i32) * dfact;
                j += 1;
            }
            acc
        })
        .collect()
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Touchard polynomials: Poisson(λ) raw moments `Σ_k S(p, k) λ^k`.
fn poisson_moments(lambda: f64, p: usize) -> Vec<f64> {
    let mut s = vec![vec![0.0f64; p + 1]; p + 1];
    s[0][0] = 1.0;
    for n in 1..=p {
        for k in 1..=n {
            s[n][k] = k as f64 * s[n - 1][k] + s[n - 1][k - 1];
        }
    }
    (1..=p).map(|n| (1..=n).map(|k| s[n][k] * lambda.powi(k as i32)).sum()).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn c3_cumulant_algebra() -> Result<(bool, String)> {
    let mut r = rng::seeded(0xC3);
    let mut worst_rt: f64 = 0.0;
    for _ in 0..200 {
        let k = r.random_range(2..=12usize);
        let g: Vec<f64> = (0..k).map(|_| r.random_range(-1.0..1.0)).collect();
        let m = cumulants::cumulants_to_moments(&g, false)?;
        let back = cumulants::moments_to_cumulants(&m)?;
        let scale = g.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        for (a, b) in back.iter().zip(&g) {
            worst_rt = worst_rt.max((a - b).abs() / scale);
        }
    }
    let mut worst_cf: f64 = 0.0;
    for &(mu, s2) in &[(0.0, 1.0), (0.5, 2.0), (-1.3, 0.7)] {
        let mut g = vec![0.0; 8];
        g[0] = mu;
        g[1] = s2;
        let m = cumulants::cumulants_to_moments(&g, false)?;
        for (a, b) in m.iter().zip(gaussian_moments(mu, s2, 8)) {
            worst_cf = worst_cf.max(rel(*a, b));
        }
        let back = cumulants::moments_to_cumulants(&gaussian_moments(mu, s2, 8))?;
        for (k, v) in back.iter().enumerate() {
            worst_cf = worst_cf.max((v - g[k]).abs() / (1.0 + g[k].abs()));
        }
    }
    for &lam in &[0.5, 2.0, 7.0] {
        let m = cumulants::cumulants_to_moments(&[lam; 8], false)?;
        for (a, b) in m.iter().zip(poisson_moments(lam, 8)) {
            worst_cf = worst_cf.max(rel(*a, b));
        }
        let back = cumulants::moments_to_cumulants(&poisson_moments(lam, 8))?;
        for v in back {
            worst_cf = worst_cf.max(rel(v, lam));
        }
    }
    Ok((worst_rt <= 1e-9 && worst_cf <= 1e-9, format!("round trip max rel err {worst_rt:.2e}, Gaussian/Poisson max rel err {worst_cf:.2e}")))
}

pub fn preset(text: &str) -> Result<RunConfig> {
    RunConfig::parse(text)
}

fn chain_preset() -> Result<ProcessModel> {
    Ok(preset(TWO_STATE_CHAIN)?.model)
}

fn c4_martingale(scale: Scale) -> Result<(bool, String)> {
    let model = chain_preset()?;
    let f = Observable::product(2, 1, 0)?;
    let d8 = martingale::build_decomposition(&model, &f, 2, 8, None)?;
    let rep = martingale::exhaustive(&d8, 1e-8)?;
    let c = martingale::calibrate(&rep, &d8);
    let paths = if scale == Scale::Full { 4000 } else { 1000 };
    let mut gaps = vec![rep.max_gap];
    let mut ok = rep.check.pass && rep.max_telescoping_residual <= 1e-9;
    let mut detail = format!(
        "exhaustive N=8: max |E[W|past]| = {:.1e} over {} pasts; ",
        rep.check.max_abs_conditional_mean, rep.check.pasts_checked
    );
    for n in [8u64, 64, 512] {
        let d = martingale::build_decomposition(&model, &f, 2, n, None)?.with_constants(c);
        let sim = d.simulate(0xC4, paths, Execution::Parallel);
        let g = martingale::sup_gap(&d, &sim, None)?;
        ok &= g.pass && g.max_telescoping_residual <= 1e-9;
        if n > 8 {
            gaps.push(g.max_gap);
        }
        detail.push_str(&format!("N={n} gap {:.4} ≤ δ₂′ {:.4}; ", g.max_gap, g.delta2_prime));
    }
    let hi = gaps.iter().copied().fold(f64::MIN, f64::max);
    let lo = gaps.iter().copied().fold(f64::MAX, f64::min);
    let spread = (hi - lo) / hi;
    ok &= spread <= 0.05;
    detail.push_str(&format!("gap spread {:.2}%", 100.0 * spread));
    Ok((ok, detail))
}

fn c5_azuma(scale: Scale) -> Result<(bool, String)> {
    let reps = if scale == Scale::Full { 100_000 } else { 10_000 };
    let lambdas = [0.01, 0.05];
    let f = Observable::product(2, 1, 0)?;
    let mut ok = true;
    let mut detail = String::new();
    let presets = [("chain", chain_preset()?), ("rademacher", preset(RADEMACHER_PRODUCT)?.model)];
    for (name, model) in &presets {
        let small = martingale::build_decomposition(model, &f, 2, 8, None)?;
        let rep = martingale::exhaustive(&small, 1e-8)?;
        let c = martingale::calibrate(&rep, &small);
        let n = 64u64;
        let d = martingale::build_decomposition(model, &f, 2, n, None)?.with_constants(c);
        let paths = d.simulate(0xC5, reps, Execution::Parallel);
        let check = martingale::check_martingale(&d, CheckMode::Sampled { master: 0xC5, replicates: 50 }, 1e-8, Execution::Parallel)?;
        ok &= check.pass;
        let rows = martingale::azuma_mgf_check(&d, &paths, &lambdas, 0xC5, Execution::Parallel)?;
        for r in &rows {
            ok &= r.pass;
            detail.push_str(&format!(
                "{name} λ={}: M {:.4}≤{:.3e}, S {:.4}≤{:.3e}{}; ",
                r.lambda,
                r.upper_m,
                r.bound_m,
                r.upper_s,
                r.bound_s,
                if r.inconclusive { " (inconclusive)" } else { "" }
            ));
        }
        // tails of S_N beyond t + Bδ₂ on a 10-point grid
        let d1 = d.delta1();
        let b = c.b_chernoff;
        let s: Vec<f64> = paths.iter().map(|p| p.s_n).collect();
        let mut worst: f64 = 0.0;
        for k in 1..=10 {
            let t = 0.5 * k as f64 * b * d1 * ((n * 2) as f64).sqrt();
            let bound = bounds::chernoff_tail_bound(t, n as f64, 2, d1, d1, b)?;
            let e = montecarlo::tail_estimate(&s, bound.threshold)?;
            worst = worst.max(e.lower - bound.bound);
        }
        ok &= worst <= 0.0;
        detail.push_str(&format!("{name} tails: max(lower − bound) = {worst:.3e}; "));
    }
    // classical oracle: Rademacher ℓ = 1, E e^{λS_N} = cosh(λ)^N ≤ e^{Nλ²/2}
    let model = ProcessModel::Iid(IidLaw::rademacher());
    let f1 = Observable::product(1, 1, 0)?;
    let d = martingale::build_decomposition(&model, &f1, 1, 64, None)?;
    let paths = d.simulate(0xC51, reps, Execution::Parallel);
    for &lam in &lambdas {
        let e: Vec<f64> = paths.iter().map(|p| (lam * p.s_n).exp()).collect();
        let (_, lower, _) = montecarlo::bootstrap_mean(&e, 0xC52, Execution::Parallel)?;
        let exact = lam.cosh().powi(64);
        ok &= lower <= exact && exact <= (64.0 * lam * lam / 2.0).exp();
    }
    Ok((ok, detail.trim_end_matches("; ").to_string()))
}

fn c6_variance(scale: Scale) -> Result<(bool, String)> {
    let cfg = preset(IID_PRODUCT)?;
    let (grid, reps) = match scale {
        Scale::Full => (vec![64, 256, 1024, 4096], 100_000),
        Scale::Quick => (vec![16, 64, 256, 1024], 10_000),
    };
    let m = cfg.model.marginal(0, 0);
    let sigma2: f64 = m.atoms.iter().zip(&m.weights).map(|(a, w)| w * a[0] * a[0]).sum();
    let cf = decompose(&cfg.observable, &m)?;
    let exp = Experiment::new(&cfg.model, &cf, &cfg.family, grid, reps, cfg.seed)?;
    let fit = montecarlo::variance_scan(&exp, 1)?;
    let target = sigma2 * sigma2;
    let z = (fit.d2 - target).abs() / fit.d2_se;
    let env = fit.envelope_pass.iter().all(|&b| b);
    Ok((
        z <= 4.0 && env,
        format!("D̂² = {:.5} ± {:.5} vs σ⁴ = {target} ({z:.2} SE); C₁ = {:.3e}; envelope {:?} (holdout N = {:?})", fit.d2, fit.d2_se, fit.c1, fit.envelope_pass, fit.holdout),
    ))
}

fn c7_cumulant_growth(scale: Scale) -> Result<(bool, String)> {
    let (grid, reps): (Vec<u64>, usize) = match scale {
        Scale::Full => (vec![64, 128, 256, 512, 1024], 1_000_000),
        Scale::Quick => (vec![32, 64, 128, 256], 20_000),
    };
    let gamma = bounds::AssumptionParams::bounded(1.0, 1.0, 1.0).gamma();
    let mut ok = true;
    let mut detail = String::new();
    for (name, text) in [("chain", TWO_STATE_CHAIN), ("iid", IID_PRODUCT)] {
        let cfg = preset(text)?;
        let cf = decompose(&cfg.observable, &cfg.model.marginal(0, 0))?;
        let exp = Experiment::new(&cfg.model, &cf, &cfg.family, grid.clone(), reps, cfg.seed ^ 0xC7)?;
        let sums: Vec<_> = grid.iter().map(|&n| montecarlo::replicate_sums(&exp, n)).collect::<Result<_>>()?;
        let scan = montecarlo::cumulant_scan(&sums, 4)?;
        let fit = montecarlo::CumulantScan { rows: scan.rows[..scan.rows.len() - 1].to_vec(), k_max: 4 };
        let mut bc = bounds::BoundConstants::default();
        let c0 = montecarlo::calibrate_c0(&fit, gamma, &mut bc)?;
        let env = scan.envelope_pass(3, c0, gamma)?.iter().all(|&b| b) && scan.envelope_pass(4, c0, gamma)?.iter().all(|&b| b);
        let slope = scan.normalized_slope(3);
        let good = env && (-0.8..=-0.2).contains(&slope);
        ok &= good;
        detail.push_str(&format!("{name}: c₀ = {c0:.3e}, envelope incl. holdout {env}, Γ̂₃(N^-1/2 S̄) slope {slope:.3}; "));
    }
    Ok((ok, detail.trim_end_matches("; ").to_string()))
}

fn c8_berry_esseen(scale: Scale) -> Result<(bool, String)> {
    let cfg = preset(IID_PRODUCT)?;
    let (grid, reps): (Vec<u64>, usize) = match scale {
        Scale::Full => ((8..=14).map(|e| 1u64 << e).collect(), 100_000),
        Scale::Quick => ((6..=10).map(|e| 1u64 << e).collect(), 20_000),
    };
    let cf = decompose(&cfg.observable, &cfg.model.marginal(0, 0))?;
    let exp = Experiment::new(&cfg.model, &cf, &cfg.family, grid.clone(), reps, cfg.seed ^ 0xC8)?;
    let mut pts = Vec::new();
    let mut ds = Vec::new();
    for &n in &grid {
        let s = montecarlo::replicate_sums(&exp, n)?;
        let sd = crate::summation::mean_var(&s.centered).1.sqrt();
        let d = montecarlo::kolmogorov_distance(&s.centered, 0.0, sd)?;
        pts.push(((n as f64).ln(), d.ln()));
        ds.push(d);
    }
    let slope = montecarlo::ols_slope(&pts);
    Ok((slope <= -0.15, format!("distances {:?}, log-log slope {slope:.3}", ds.iter().map(|d| format!("{d:.4}")).collect::<Vec<_>>())))
}

fn c9_mdp(scale: Scale) -> Result<(bool, String)> {
    let cfg = preset(BERNOULLI_MDP)?;
    let reps = if scale == Scale::Full { 1_000_000 } else { 100_000 };
    let cf = decompose(&cfg.observable, &cfg.model.marginal(0, 0))?;
    let exp = Experiment::new(&cfg.model, &cf, &cfg.family, vec![10_000], reps, cfg.seed)?;
    let s = montecarlo::replicate_sums(&exp, 10_000)?;
    let cells = montecarlo::mdp_diagnostic(std::slice::from_ref(&s), &|n: f64| n.powf(0.1), None, &[1.0])?;
    let c = &cells[0];
    let rel = (c.value - c.rate).abs() / c.rate;
    Ok((
        rel <= 0.25 && !c.inconclusive,
        format!("−ln p̂/a_N² = {:.4} (band {:.4}..{:.4}) vs x²/2 = {}; relative deviation {:.1}% (limit 25%)", c.value, c.band.0, c.band.1, c.rate, 100.0 * rel),
    ))
}

fn scratch_dir(tag: &str) -> PathBuf {
    let nanos = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
    std::env::temp_dir().join(format!("nonconv-{tag}-{}-{nanos}", std::process::id()))
}

/// Run a preset under two worker counts and compare every CSV byte for byte.
pub fn compare_workers(text: &str, replicates: Option<u64>, a: usize, b: usize) -> Result<(bool, usize)> {
    let mut doc = Document::parse(text)?;
    if let Some(r) = replicates {
        doc.set("experiment", "replicates", Value::Num(r as f64));
    }
    let cfg = RunConfig::from_document(&doc)?;
    let da = scratch_dir("wa");
    let db = scratch_dir("wb");
    let ma = with_workers(a, || runner::simulate(&cfg, &da, Execution::Parallel, &mut |_| {}))??;
    let mb = with_workers(b, || runner::simulate(&cfg, &db, Execution::Parallel, &mut |_| {}))??;
    let mut same = ma.outputs == mb.outputs;
    let mut files = 0;
    for o in &ma.outputs {
        if o.extension().is_some_and(|e| e == "csv") {
            same &= std::fs::read(da.join(o))? == std::fs::read(db.join(o))?;
            files += 1;
        }
    }
    let _ = std::fs::remove_dir_all(&da);
    let _ = std::fs::remove_dir_all(&db);
    Ok((same, files))
}

fn c10_determinism(scale: Scale) -> Result<(bool, String)> {
    let runs: Vec<(&str, &str, Option<u64>)> = match scale {
        Scale::Full => vec![
            ("iid_product", IID_PRODUCT, None),
            ("two_state_chain", TWO_STATE_CHAIN, None),
            ("rademacher_product", RADEMACHER_PRODUCT, None),
            ("doubling", DOUBLING, None),
        ],
        Scale::Quick => vec![("rademacher_product", RADEMACHER_PRODUCT, Some(200)), ("doubling", DOUBLING, Some(200)), ("iid_product", IID_PRODUCT, Some(200))],
    };
    let mut ok = true;
    let mut detail = String::new();
    for (name, text, r) in runs {
        let (same, files) = compare_workers(text, r, 1, 8)?;
        ok &= same;
        detail.push_str(&format!("{name}: {files} CSVs {}; ", if same { "identical" } else { "DIFFER" }));
    }
    Ok((ok, detail.trim_end_matches("; ").to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(gaussian_moments(0.0, 1.0, 6), vec![0.0, 1.0, 0.0, 3.0, 0.0, 15.0]);
        assert_eq!(poisson_moments(1.0, 5), vec![1.0, 2.0, 5.0, 15.0, 52.0]);
    }

    #[test]
    fn presets_parse() {
        for t in [IID_PRODUCT, TWO_STATE_CHAIN, RADEMACHER_PRODUCT, BERNOULLI_MDP, DOUBLING] {
            preset(t).unwrap();
        }
        assert!(suite("nope").is_err());
    }
}
