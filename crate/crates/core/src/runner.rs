//! The `simulate` pipeline: replicate sums, statistics, checks, reports.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::bounds::{self, ConstantSource};
use crate::config::RunConfig;
use crate::error::Result;
use crate::montecarlo::{self, Experiment, MeanSource, Sums};
use crate::observable::decompose;
use crate::parallel::Execution;
use crate::report::{CheckVerdict, RunManifest, Table, Verdict};
use crate::summation;

/// Draws used for the centering constant of continuous laws.
const MARGINAL_DRAWS: usize = 100_000;

fn verdict(name: &str, v: Verdict, detail: String) -> CheckVerdict {
    CheckVerdict { name: name.to_string(), verdict: v, detail }
}

fn pass_fail(ok: bool) -> Verdict {
    if ok { Verdict::Pass } else { Verdict::Fail }
}

/// Run a configuration and write its reports into `out_dir`.
pub fn simulate(cfg: &RunConfig, out_dir: &Path, exec: Execution, log: &mut dyn FnMut(&str)) -> Result<RunManifest> {
    let t0 = Instant::now();
    std::fs::create_dir_all(out_dir)?;
    let marginal = cfg.model.marginal(MARGINAL_DRAWS, cfg.seed ^ 0x6d61_7267);
    let cf = decompose(&cfg.observable, &marginal)?;
    let exp = Experiment::new(&cfg.model, &cf, &cfg.family, cfg.n_grid.clone(), cfg.replicates, cfg.seed)?.with_exec(exec);
    let exp = match std::env::var("NONCONV_BUDGET_MB").ok().and_then(|v| v.trim().parse::<u64>().ok()) {
        Some(mb) => exp.with_memory_limit(mb.saturating_mul(1 << 20)),
        None => exp,
    };
    let mut outputs: Vec<PathBuf> = Vec::new();
    let mut checks = Vec::new();
    let mut constants = cfg.constants.clone();
    let write = |name: &str, t: &Table, outputs: &mut Vec<PathBuf>| -> Result<()> {
        t.write(&out_dir.join(name))?;
        outputs.push(PathBuf::from(name));
        Ok(())
    };

    let mut all: Vec<Sums> = Vec::new();
    let mut sums_t = Table::new(&["n", "replicate", "s_n", "s_bar_n"]);
    for &n in &cfg.n_grid {
        log(&format!("sums: N = {n}, R = {}", cfg.replicates));
        let s = montecarlo::replicate_sums(&exp, n)?;
        for (j, (r, c)) in s.raw.iter().zip(&s.centered).enumerate() {
            sums_t.push(vec![n.into(), j.into(), (*r).into(), (*c).into()]);
        }
        all.push(s);
    }
    write("sums.csv", &sums_t, &mut outputs)?;
    let fit_rows = cfg.n_grid.len().saturating_sub(cfg.holdout).max(1);

    if cfg.checks_for("exact_mean") {
        let mut worst: f64 = 0.0;
        let mut exact = true;
        for s in &all {
            exact &= s.mean_source == MeanSource::Exact;
            let (m, v) = summation::mean_var(&s.raw);
            let se = (v / s.raw.len() as f64).sqrt();
            if se > 0.0 {
                worst = worst.max((m - s.mean).abs() / se);
            } else if m != s.mean {
                worst = f64::INFINITY;
            }
        }
        let v = if !exact { Verdict::Inconclusive } else { pass_fail(worst <= 4.0) };
        checks.push(verdict("exact_mean", v, format!("max |mean − E S_N| / SE = {worst:.3}")));
    }

    let want_tails = cfg.wants("tails") || cfg.checks_for("concentration");
    let tables: Vec<montecarlo::TailTable> = if want_tails {
        all.iter().map(|s| montecarlo::tail_table(s, &cfg.tail_x)).collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    if cfg.wants("tails") {
        log("tails");
        let mut t = Table::new(&["n", "x", "threshold", "count", "p_hat", "lower", "upper", "replicates"]);
        for tt in &tables {
            for e in &tt.tails {
                t.push(vec![tt.n.into(), e.x.into(), (e.x * (tt.n as f64).sqrt()).into(), e.count.into(), e.p_hat.into(), e.lower.into(), e.upper.into(), e.replicates.into()]);
            }
        }
        write("tails.csv", &t, &mut outputs)?;
    }
    if cfg.checks_for("concentration") {
        log("concentration check");
        let (c1, c2) = match (constants.get("c1"), constants.get("c2")) {
            (Ok(a), Ok(b)) => (a, b),
            _ => {
                let c = montecarlo::calibrate_c12(&tables[..fit_rows], cfg.gamma, &mut constants)?;
                (c, c)
            }
        };
        let mut t = Table::new(&["n", "x", "lower", "bound", "pass"]);
        let mut ok = true;
        for tt in &tables {
            for e in &tt.tails {
                let b = bounds::concentration_bound(e.x, tt.n as f64, c1, c2, cfg.gamma)?;
                let pass = e.lower <= b;
                ok &= pass;
                t.push(vec![tt.n.into(), e.x.into(), e.lower.into(), b.into(), pass.into()]);
            }
        }
        write("concentration.csv", &t, &mut outputs)?;
        checks.push(verdict("concentration", pass_fail(ok), format!("c1 = {c1:.6e}, c2 = {c2:.6e}; lower tail CI edge vs bound")));
    }

    if cfg.wants("variance") || cfg.checks_for("variance_envelope") {
        log("variance fit");
        let fit = montecarlo::variance_fit(&all, cfg.holdout.min(cfg.n_grid.len().saturating_sub(2)))?;
        montecarlo::calibrate_c1_variance(&fit, &mut constants)?;
        let mut t = Table::new(&["n", "variance", "se", "d2_hat", "d2_se", "residual", "envelope", "holdout", "pass"]);
        for (k, &n) in fit.n_grid.iter().enumerate() {
            t.push(vec![
                n.into(),
                fit.variances[k].into(),
                fit.variance_se[k].into(),
                fit.d2.into(),
                fit.d2_se.into(),
                fit.residuals[k].into(),
                bounds::variance_envelope(n as f64, fit.c1)?.into(),
                fit.holdout.contains(&n).into(),
                fit.envelope_pass[k].into(),
            ]);
        }
        write("variance.csv", &t, &mut outputs)?;
        if cfg.checks_for("variance_envelope") {
            let ok = fit.envelope_pass.iter().all(|&b| b);
            checks.push(verdict("variance_envelope", pass_fail(ok), format!("D² = {:.6e} ± {:.2e}, C1 = {:.6e}", fit.d2, fit.d2_se, fit.c1)));
        }
    }

    if cfg.wants("cumulants") || cfg.checks_for("cumulant_envelope") {
        log("cumulants");
        let scan = montecarlo::cumulant_scan(&all, cfg.k_max)?;
        let mut t = Table::new(&["n", "k", "gamma_hat", "se", "normalized"]);
        for r in &scan.rows {
            for k in 1..=scan.k_max {
                t.push(vec![r.n.into(), k.into(), r.estimate.gamma(k).into(), r.estimate.se[k - 1].unwrap_or(f64::NAN).into(), r.normalized[k - 1].into()]);
            }
        }
        write("cumulants.csv", &t, &mut outputs)?;
        if cfg.checks_for("cumulant_envelope") {
            let c0 = match constants.get("c0") {
                Ok(c) => c,
                Err(_) => {
                    let fit = montecarlo::CumulantScan { rows: scan.rows[..fit_rows].to_vec(), k_max: scan.k_max };
                    montecarlo::calibrate_c0(&fit, cfg.gamma, &mut constants)?
                }
            };
            let mut ok = true;
            for k in 3..=scan.k_max {
                ok &= scan.envelope_pass(k, c0, cfg.gamma)?.iter().all(|&b| b);
            }
            checks.push(verdict("cumulant_envelope", pass_fail(ok), format!("c0 = {c0:.6e}, γ = {}", cfg.gamma)));
        }
    }

    if cfg.wants("kolmogorov") {
        log("kolmogorov distances");
        let mut t = Table::new(&["n", "distance", "scale"]);
        for s in &all {
            let sd = summation::mean_var(&s.centered).1.sqrt();
            let d = if sd > 0.0 { montecarlo::kolmogorov_distance(&s.centered, 0.0, sd)? } else { f64::NAN };
            t.push(vec![s.n.into(), d.into(), sd.into()]);
        }
        write("kolmogorov.csv", &t, &mut outputs)?;
    }

    if cfg.wants("mdp") {
        log("mdp diagnostic");
        let e = cfg.mdp_exponent;
        let cells = montecarlo::mdp_diagnostic(&all, &|n: f64| n.powf(e), None, &cfg.mdp_x)?;
        let mut t = Table::new(&["n", "x", "a_n", "threshold", "count", "value", "band_low", "band_high", "rate", "inconclusive"]);
        for c in &cells {
            t.push(vec![c.n.into(), c.x.into(), c.a_n.into(), c.threshold.into(), c.tail.count.into(), c.value.into(), c.band.0.into(), c.band.1.into(), c.rate.into(), c.inconclusive.into()]);
        }
        write("mdp.csv", &t, &mut outputs)?;
    }

    if cfg.wants("moments") || cfg.checks_for("moment_identity") {
        log("moment identity");
        let mut t = Table::new(&["n", "p", "empirical", "reconstructed", "bootstrap_se", "pass"]);
        let mut ok = true;
        for s in &all {
            for m in montecarlo::moment_identity(&s.centered, cfg.seed ^ s.n, exec)? {
                ok &= m.pass;
                t.push(vec![s.n.into(), m.p.into(), m.empirical.into(), m.reconstructed.into(), m.se.into(), m.pass.into()]);
            }
        }
        write("moments.csv", &t, &mut outputs)?;
        if cfg.checks_for("moment_identity") {
            checks.push(verdict("moment_identity", pass_fail(ok), "within 4 bootstrap SE".into()));
        }
    }

    let manifest = RunManifest {
        config_hash: cfg.hash.clone(),
        master_seed: cfg.seed,
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        replicates: cfg.replicates,
        n_grid: cfg.n_grid.clone(),
        checks,
        outputs: {
            outputs.push(PathBuf::from("manifest.json"));
            outputs
        },
        constants: constants
            .iter()
            .map(|(k, c)| (k.to_string(), c.value, if c.source == ConstantSource::Calibrated { "calibrated" } else { "configured" }.to_string()))
            .collect(),
        note: "pass means not refuted at the conservative confidence edge; Monte Carlo cannot prove a bound".into(),
        wall_clock_seconds: t0.elapsed().as_secs_f64(),
    };
    manifest.write(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}
