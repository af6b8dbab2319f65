use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rkhs_stability::exact::int;
use rkhs_stability::finite_norms::{opnorm_inf1_bruteforce, opnorm_inf1_naive, DenseMatrix};
use rkhs_stability::gram::{self, GramSpec};
use rkhs_stability::kernels::{counterexample_s, PChoice};
use rkhs_stability::sign_matrix::{self, SignMatrixSpec};
use rkhs_stability::stability::{self, TestInput};
use std::hint::black_box;

fn dense(rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |i, j| int(((i * 7 + j * 13) % 11) as i64 - 5)).unwrap()
}

fn bruteforce(c: &mut Criterion) {
    let mut g = c.benchmark_group("opnorm_inf1");
    for cols in [8usize, 12, 16] {
        let m = dense(cols, cols);
        g.bench_with_input(BenchmarkId::new("gray", cols), &m, |b, m| {
            b.iter(|| opnorm_inf1_bruteforce(black_box(m)).unwrap())
        });
        if cols <= 12 {
            g.bench_with_input(BenchmarkId::new("naive", cols), &m, |b, m| {
                b.iter(|| opnorm_inf1_naive(black_box(m)).unwrap())
            });
        }
    }
    g.finish();
}

fn closed_forms(c: &mut Criterion) {
    let mut g = c.benchmark_group("closed_form");
    for p in [10u32, 100, 1000] {
        let spec = SignMatrixSpec::new(p).unwrap();
        g.bench_with_input(BenchmarkId::new("opnorm_v", p), &spec, |b, s| {
            b.iter(|| sign_matrix::opnorm_inf1_closed(black_box(s)))
        });
        let gs = GramSpec::from_p(p).unwrap();
        g.bench_with_input(BenchmarkId::new("gram_ratio", p), &gs, |b, s| b.iter(|| gram::ratio(black_box(s))));
    }
    g.finish();
}

fn streaming(c: &mut Criterion) {
    let mut g = c.benchmark_group("streaming");
    for p in [4u32, 6, 8] {
        let gs = GramSpec::from_p(p).unwrap();
        let u: Vec<f64> = (0..1u64 << gs.m()).map(|i| if i % 3 == 0 { 1.0 } else { -1.0 }).collect();
        g.bench_with_input(BenchmarkId::new("gram_apply", p), &u, |b, u| {
            b.iter(|| gram::apply(&gs, black_box(u)).unwrap())
        });
    }
    let k = counterexample_s(PChoice::Linear);
    g.bench_function("witness_probe_counterexample_s", |b| {
        b.iter(|| stability::witness_probe(&k, &TestInput::Alternating, black_box(&[8, 40, 168, 680])).unwrap())
    });
    g.finish();
}

criterion_group!(benches, bruteforce, closed_forms, streaming);
criterion_main!(benches);
