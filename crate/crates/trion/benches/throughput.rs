//! Parallel versus serial trajectory throughput on a representative cycle.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::f64::consts::TAU;
use trion::dynamics::CollapseBasis;
use trion::pulse::parse_sequence;
use trion::{RunPlan, SystemParams};

fn plan(cycles: u64) -> RunPlan {
    let params = SystemParams::symmetric(TAU * 8.5, TAU * 15.7, 1.0 / 1.32);
    let seq = parse_sequence(
        "period 25\n\
         pulse ent kind=drive t0=0.95 shape=gauss fwhm=0.3 target=T1 rabi_ghz=1.5656\n\
         pulse rot kind=rotate t0=4 theta_pi=0.5\n\
         pulse readout kind=drive t0=9.95 shape=gauss fwhm=0.3 target=T2 rabi_ghz=1.5656\n\
         pulse reset kind=reset t0=14.5 dur=0.2\n",
    )
    .unwrap();
    let mut p = RunPlan::new(params, seq);
    p.cycles = cycles;
    p.block_size = 512;
    p.collapse = CollapseBasis::FrequencyErased;
    p.seed = 3;
    p
}

fn bench_runs(c: &mut Criterion) {
    let mut group = c.benchmark_group("cycles");
    for &cycles in &[2_000u64, 8_000] {
        group.throughput(Throughput::Elements(cycles));
        let p = plan(cycles);
        group.bench_with_input(BenchmarkId::new("pooled", cycles), &p, |b, p| {
            b.iter(|| p.run().unwrap().events.len())
        });
        group.bench_with_input(BenchmarkId::new("serial", cycles), &p, |b, p| {
            b.iter(|| p.run_serial().unwrap().events.len())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_runs);
criterion_main!(benches);
