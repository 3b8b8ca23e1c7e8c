//! Parallel vs sequential r1 sweeps of the security analyzer.

use criterion::{criterion_group, criterion_main, Criterion};
use hammersim_core::attack::Discipline;
use hammersim_core::security::{AnalysisParams, RecurrenceTable};

fn sweeps(c: &mut Criterion) {
    let p = AnalysisParams::new(4);
    let mut g = c.benchmark_group("recurrence_table_victim_64k");
    g.sample_size(20);
    g.bench_function("parallel", |b| b.iter(|| RecurrenceTable::build(Discipline::VictimBased, &p)));
    g.bench_function("sequential", |b| b.iter(|| RecurrenceTable::build_seq(Discipline::VictimBased, &p)));
    g.finish();
}

criterion_group!(benches, sweeps);
criterion_main!(benches);
