use criterion::{black_box, criterion_group, criterion_main, Criterion};
use pwe_core::channel::compute_pdp;
use pwe_core::graph::Configuration;
use pwe_core::schedule::{build_model, solve_exact, ExactLimits, UpdateGraph, UpdateProblem};
use pwe_core::sim::SimSetup;
use pwe_core::{factory_scenario, parse_scenario};

fn factory() -> SimSetup {
    factory_scenario().build().unwrap().sim_setup(None).unwrap()
}

fn pdp(c: &mut Criterion) {
    let setup = factory();
    let (p, v) = setup.trajectory.state_at(8.0);
    let graph = setup.graph.with_user_position("rx", p).unwrap();
    let planned = setup.plan(p, v, &[]).unwrap();
    let empty = Configuration::empty();
    c.bench_function("factory_pdp_off", |b| b.iter(|| compute_pdp(&graph, &empty, "tx", "rx", &setup.channel).unwrap()));
    c.bench_function("factory_pdp_on", |b| b.iter(|| compute_pdp(&graph, &planned, "tx", "rx", &setup.channel).unwrap()));
    c.bench_function("factory_move_receiver", |b| b.iter(|| setup.graph.with_user_position("rx", black_box(p)).unwrap()));
}

fn planning(c: &mut Criterion) {
    let setup = factory();
    let (p, v) = setup.trajectory.state_at(8.0);
    let mut group = c.benchmark_group("planning");
    group.sample_size(10);
    group.bench_function("factory_plan", |b| b.iter(|| setup.plan(black_box(p), v, &[]).unwrap()));
    group.finish();

    let toy = parse_scenario(std::path::Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/toy.json"))).unwrap();
    c.bench_function("toy_configure", |b| {
        b.iter(|| toy.file.optimizer.configure(&toy.graph, &toy.file.objectives, &toy.file.channel).unwrap())
    });
}

fn scheduling(c: &mut Criterion) {
    let edges: Vec<(usize, usize)> = (0..6).flat_map(|u| (u + 1..6).filter(move |v| (u + v) % 3 != 0).map(move |v| (u, v))).collect();
    let problem = UpdateProblem {
        graph: UpdateGraph::undirected(6, &edges),
        initial_active: vec![true, false, true, false, true, false],
        pairs_per_round: vec![vec![(0, 5)], vec![(0, 5), (1, 4)]],
    };
    let model = build_model(&problem).unwrap();
    c.bench_function("schedule_exact_6_tiles", |b| b.iter(|| solve_exact(&model, &ExactLimits::default()).unwrap()));
}

criterion_group!(benches, pdp, planning, scheduling);
criterion_main!(benches);
