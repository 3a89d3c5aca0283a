use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use srheat_bench::{grushin_pert, heisenberg};
use srheat_core::flag::DEFAULT_MAX_DEPTH;
use srheat_core::poly::int;
use srheat_core::{compute_flag, fd_kernel, identity_chart, mc_kernel, nilpotentize, FdConfig, HeatModel, McConfig};

fn flag_and_chart(c: &mut Criterion) {
    let fields = heisenberg();
    let p = vec![int(0); 3];
    c.bench_function("flag heisenberg", |b| b.iter(|| compute_flag(black_box(&fields), &p, DEFAULT_MAX_DEPTH).unwrap()));
    let g = grushin_pert();
    let q = vec![int(0); 2];
    let flag = compute_flag(&g, &q, DEFAULT_MAX_DEPTH).unwrap();
    c.bench_function("chart and nilpotentize grushin_pert", |b| {
        b.iter(|| {
            let chart = identity_chart(&g, &flag, &q, 6).unwrap();
            nilpotentize(black_box(&g), None, &chart, false, None).unwrap()
        })
    });
}

fn heat(c: &mut Criterion) {
    let lo = vec![-4.0, -4.0];
    let hi = vec![4.0, 4.0];
    let model = HeatModel::from_fields(grushin_pert(), lo.clone(), hi.clone()).unwrap();
    let origin = vec![0.0, 0.0];
    let targets = vec![origin.clone()];
    let fd = FdConfig::new(vec![0.1, 0.1], 0.02);
    let mut g = c.benchmark_group("kernel grushin_pert t=0.5");
    g.sample_size(10);
    g.bench_function("fd h=0.1", |b| b.iter(|| fd_kernel(&model, 0.5, &fd, &origin, &lo, &hi, black_box(&targets)).unwrap()));
    let mc = McConfig {
        steps: Some(100),
        ..McConfig::new(20_000, 1)
    };
    g.bench_function("mc 20k paths", |b| b.iter(|| mc_kernel(&model, 0.5, &origin, black_box(&targets), &mc).unwrap()));
    g.finish();
}

criterion_group!(benches, flag_and_chart, heat);
criterion_main!(benches);
