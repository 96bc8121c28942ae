use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use dpafd_core::{fault_sweep, simulate, FaultScript, Scenario, Topology};

fn scenario(n: usize, crashed: usize) -> Scenario {
    let topo = Topology::random_connected(n, 0.1, 7);
    let mut s = Scenario::new("bench", topo.clone());
    s.script = FaultScript::crash_all(1, topo.nodes().iter().skip(1).step_by(3).take(crashed).map(|n| n.label()));
    s
}

fn one_cycle(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    for n in [10, 30, 60] {
        let s = scenario(n, n / 5);
        group.bench_with_input(BenchmarkId::from_parameter(n), &s, |b, s| {
            b.iter(|| simulate(black_box(s)).unwrap())
        });
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let topo = Topology::random_connected(30, 0.1, 11);
    c.bench_function("fault_sweep/30 nodes", |b| {
        b.iter(|| fault_sweep(black_box(&topo), &[0, 4, 8], 3, 1).unwrap())
    });
}

criterion_group!(benches, one_cycle, sweep);
criterion_main!(benches);
