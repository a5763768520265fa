use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nonconv_core::config::RunConfig;
use nonconv_core::montecarlo::{replicate_sums, Experiment};
use nonconv_core::observable::decompose;
use nonconv_core::parallel::Execution;
use nonconv_core::verify::{IID_PRODUCT, TWO_STATE_CHAIN};

fn replicates(c: &mut Criterion) {
    let mut group = c.benchmark_group("replicate_sums");
    group.sample_size(10);
    for (name, text) in [("iid_product", IID_PRODUCT), ("two_state_chain", TWO_STATE_CHAIN)] {
        let cfg = RunConfig::parse(text).unwrap();
        let cf = decompose(&cfg.observable, &cfg.model.marginal(0, 0)).unwrap();
        for exec in [Execution::Sequential, Execution::Parallel] {
            let exp = Experiment::new(&cfg.model, &cf, &cfg.family, vec![256], 4000, cfg.seed).unwrap().with_exec(exec);
            group.bench_with_input(BenchmarkId::new(name, format!("{exec:?}")), &exp, |b, exp| {
                b.iter(|| replicate_sums(exp, 256).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, replicates);
criterion_main!(benches);
