use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use icvar_core::env::{LaserTag, LaserTagAction, LaserTagSpec, LightDark, LightDarkSpec};
use icvar_core::model::gen_pf;
use icvar_core::{empirical_cvar, substream, Backup, Budget, GenerativeModel, MctsConfig, PftDpw, Pomcpow, RiskLevel, SampleSet};
use rand::Rng;
use std::hint::black_box;

fn bench_cvar(c: &mut Criterion) {
    let mut group = c.benchmark_group("empirical_cvar");
    let alpha = RiskLevel::new(0.1).unwrap();
    for n in [16usize, 256, 4096] {
        let mut rng = substream(0, n as u64);
        let set = SampleSet::new((0..n).map(|_| rng.random::<f64>()).collect()).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &set, |b, set| {
            b.iter(|| empirical_cvar(black_box(set), alpha))
        });
    }
    group.finish();
}

fn bench_gen_pf(c: &mut Criterion) {
    let mut group = c.benchmark_group("gen_pf");
    let lasertag = LaserTag::new(LaserTagSpec::default()).unwrap();
    let lightdark = LightDark::new(LightDarkSpec::default()).unwrap();
    for n in [20usize, 100] {
        let mut rng = substream(1, n as u64);
        let b = lasertag.initial_belief(n, &mut rng);
        group.bench_with_input(BenchmarkId::new("lasertag", n), &b, |bench, b| {
            bench.iter(|| gen_pf(b, &LaserTagAction::North, &lasertag, &mut rng))
        });
        let b = lightdark.initial_belief(n, &mut rng);
        group.bench_with_input(BenchmarkId::new("lightdark", n), &b, |bench, b| {
            bench.iter(|| gen_pf(b, &[0.0, 1.0], &lightdark, &mut rng))
        });
    }
    group.finish();
}

fn lasertag_config(iterations: u64) -> MctsConfig {
    MctsConfig {
        k_a: 5.0,
        alpha_a: 0.0,
        k_o: 5.0,
        alpha_o: 0.5,
        d_max: 10,
        alpha: RiskLevel::new(0.1).unwrap(),
        delta: 0.05,
        c_explore: 2150.0,
        budget: Budget::Iterations(iterations),
        gamma: 0.99,
        backup: Backup::Icvar,
    }
}

fn bench_plan(c: &mut Criterion) {
    let mut group = c.benchmark_group("plan_lasertag_200");
    group.sample_size(20);
    let model = LaserTag::new(LaserTagSpec::default()).unwrap();
    let root = model.initial_belief(20, &mut substream(2, 0));
    let cfg = lasertag_config(200);
    group.bench_function("pft_dpw", |b| {
        let planner = PftDpw::new(cfg).unwrap();
        b.iter_batched(|| substream(3, 0), |mut rng| planner.plan(&root, &model, &mut rng).unwrap(), BatchSize::SmallInput)
    });
    group.bench_function("pomcpow", |b| {
        let planner = Pomcpow::new(cfg).unwrap();
        b.iter_batched(|| substream(3, 0), |mut rng| planner.plan(&root, &model, &mut rng).unwrap(), BatchSize::SmallInput)
    });
    group.finish();
}

criterion_group!(benches, bench_cvar, bench_gen_pf, bench_plan);
criterion_main!(benches);
