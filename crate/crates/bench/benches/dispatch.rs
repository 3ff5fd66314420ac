use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use courierlab::baselines::{max_weight_matching, WeightMatrix};
use courierlab::neural::DenseNet;
use courierlab::scenario::{build_instance, ScenarioConfig};
use courierlab::state::Variant;
use courierlab::{plan_route, run_episode, GridType, GridWorld, Ghav, Ghep, Mbm, Point, Request, RequestStatus, NUM_ACTIONS};

fn requests(n: usize, rng: &mut ChaCha8Rng) -> Vec<Request> {
    (0..n)
        .map(|i| {
            let earliest = rng.random_range(0.0..30.0);
            Request {
                id: i as u64,
                location: Point::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)),
                grid: 0,
                arrival: 0.0,
                earliest,
                latest: earliest + rng.random_range(5.0..40.0),
                service_time: 3.0,
                price: rng.random_range(1.0..10.0),
                status: RequestStatus::Pending,
            }
        })
        .collect()
}

fn routing(c: &mut Criterion) {
    let world = GridWorld::uniform(1, 1, GridType::Intense).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = c.benchmark_group("plan_route");
    for n in [4, 8, 16] {
        let reqs = requests(n, &mut rng);
        let refs: Vec<&Request> = reqs.iter().collect();
        g.bench_with_input(BenchmarkId::from_parameter(n), &refs, |b, refs| {
            b.iter(|| plan_route(&world, Point::new(0.5, 0.5), 0.0, 30.0, black_box(refs)))
        });
    }
    g.finish();
}

fn matching(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut g = c.benchmark_group("max_weight_matching");
    for (rows, cols) in [(4, 25), (10, 60), (30, 150)] {
        let w = WeightMatrix::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(format!("{rows}x{cols}")), &w, |b, w| {
            b.iter(|| max_weight_matching(black_box(w)).unwrap())
        });
    }
    g.finish();
}

fn episodes(c: &mut Criterion) {
    let mut g = c.benchmark_group("episode");
    g.sample_size(10);
    for preset in ["desk", "base"] {
        let mut cfg = ScenarioConfig::preset(preset).unwrap();
        cfg.seed = 5;
        let inst = build_instance(&cfg).unwrap();
        g.bench_function(format!("{preset}/ghav"), |b| b.iter(|| run_episode(&inst, &mut Ghav, 1).unwrap()));
        g.bench_function(format!("{preset}/ghep"), |b| b.iter(|| run_episode(&inst, &mut Ghep::default(), 1).unwrap()));
        g.bench_function(format!("{preset}/mbm"), |b| b.iter(|| run_episode(&inst, &mut Mbm::default(), 1).unwrap()));
    }
    g.finish();
}

fn network(c: &mut Criterion) {
    let input = Variant::Basic.input_len();
    let net = DenseNet::new(input, 200, NUM_ACTIONS, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x: Vec<f64> = (0..input).map(|_| rng.random_range(0.0..1.0)).collect();
    let batch = ndarray::Array2::from_shape_fn((1024, input), |_| rng.random_range(0.0..1.0));
    let up = ndarray::Array2::from_elem((1024, NUM_ACTIONS), 1e-3);
    let mut g = c.benchmark_group("dense_net");
    g.bench_function("forward/1", |b| b.iter(|| net.forward(black_box(&x)).unwrap()));
    g.sample_size(10);
    g.bench_function("forward/1024", |b| b.iter(|| net.forward_batch(black_box(batch.view())).unwrap()));
    g.bench_function("backward/1024", |b| {
        b.iter(|| net.backward_batch(black_box(batch.view()), up.view()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, routing, matching, episodes, network);
criterion_main!(benches);
