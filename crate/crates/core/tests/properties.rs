use nonconv_core::config::Document;
use nonconv_core::cumulants::{cumulants_to_moments, moments_to_cumulants};
use nonconv_core::indexing::{neighborhood, IndexFamily};
use nonconv_core::martingale::build_decomposition;
use nonconv_core::montecarlo::{clopper_pearson, kolmogorov_distance, replicate_sums, Experiment};
use nonconv_core::observable::{decompose, Observable};
use nonconv_core::parallel::Execution;
use nonconv_core::process::{alpha_coefficient, phi_coefficient, MarkovChain, ProcessModel};
use nonconv_core::report::format_real;
use nonconv_core::rng;
use proptest::prelude::*;

fn stochastic_rows(s: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.05f64..1.0, s), s)
        .prop_map(|rows| rows.into_iter().map(|r| {
            let t: f64 = r.iter().sum();
            r.into_iter().map(|x| x / t).collect()
        }).collect())
}

fn chain(rows: &[Vec<f64>]) -> MarkovChain {
    let v: Vec<f64> = (0..rows.len()).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
    MarkovChain::scalar(rows, &v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cumulant_round_trip(g in prop::collection::vec(-2.0f64..2.0, 1..10)) {
        let back = moments_to_cumulants(&cumulants_to_moments(&g, false).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&g) {
            prop_assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn alpha_at_most_half_phi(rows in (2usize..=3).prop_flat_map(stochastic_rows), n in 1u64..8) {
        let c = chain(&rows);
        let phi = phi_coefficient(&c, n);
        prop_assert!((0.0..=1.0).contains(&phi));
        prop_assert!(alpha_coefficient(&c, n).unwrap() <= phi / 2.0 + 1e-12);
        prop_assert!(phi_coefficient(&c, n + 1) <= phi + 1e-12);
    }

    #[test]
    fn neighborhood_within_bound(ell in 1usize..=4, n in 1u64..300, extra in 0u64..300, s in 1u64..60) {
        let fam = IndexFamily::linear(ell).unwrap();
        let a = neighborhood(&fam, n, n + extra, s).unwrap();
        prop_assert!(a.len() as u64 <= 3 * (ell * ell) as u64 * s);
        prop_assert!(a.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(a.contains(&n));
    }

    #[test]
    fn clopper_pearson_brackets_estimate(n in 1usize..5000, frac in 0.0f64..=1.0) {
        let k = ((n as f64) * frac).floor() as usize;
        let (lo, hi) = clopper_pearson(k, n);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }

    #[test]
    fn kolmogorov_distance_in_unit_interval(xs in prop::collection::vec(-5.0f64..5.0, 1..200)) {
        let d = kolmogorov_distance(&xs, 0.0, 1.0).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn reals_survive_csv(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(format_real(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn martingale_path_telescopes(rows in stochastic_rows(2), big_n in 1u64..12, seed in any::<u64>()) {
        let model = ProcessModel::Markov(MarkovChain::scalar(&rows, &[-1.0, 1.0]).unwrap());
        let f = Observable::product(2, 1, 0).unwrap();
        let d = build_decomposition(&model, &f, 2, big_n, None).unwrap();
        let mut path = Vec::new();
        d.sample_path(&mut rng::seeded(seed), &mut path);
        let p = d.evaluate(0, &path);
        prop_assert!(p.telescoping_residual.abs() <= 1e-9);
        prop_assert!((p.s_n - d.s_n(&path)).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn sums_independent_of_execution(seed in any::<u64>(), big_n in 1u64..80) {
        let rows = vec![vec![0.7, 0.3], vec![0.4, 0.6]];
        let model = ProcessModel::Markov(MarkovChain::scalar(&rows, &[-1.0, 1.0]).unwrap());
        let f = Observable::product(2, 1, 0).unwrap();
        let fam = IndexFamily::linear(2).unwrap();
        let cf = decompose(&f, &model.marginal(0, 0)).unwrap();
        let seq = Experiment::new(&model, &cf, &fam, vec![big_n], 300, seed).unwrap().with_exec(Execution::Sequential);
        let par = Experiment::new(&model, &cf, &fam, vec![big_n], 300, seed).unwrap().with_exec(Execution::Parallel);
        let a = replicate_sums(&seq, big_n).unwrap();
        let b = replicate_sums(&par, big_n).unwrap();
        prop_assert_eq!(a.raw.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.raw.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn config_hash_ignores_key_order(seed in 0u64..1000) {
        let a = format!("[model]\nkind = iid\natoms = [0, 1]\nprobs = [0.5, 0.5]\n\n[experiment]\nseed = {seed}\nreplicates = 100\n");
        let b = format!("[experiment]\nreplicates = 100\nseed = {seed}\n# reordered\n[model]\nprobs = [0.5, 0.5]\nkind = iid\natoms = [0, 1]\n");
        prop_assert_eq!(Document::parse(&a).unwrap().canonical_hash(), Document::parse(&b).unwrap().canonical_hash());
    }
}
