use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use wasmdiff::{
    classify_failure, compute_discrepancies, default_extensions, sanitize_user_flags, scan_sources, RootCauseTagger,
    TargetKind,
};

fn scanning(c: &mut Criterion) {
    let mut group = c.benchmark_group("scan_sources");
    group.sample_size(20);
    for files in [16, 128] {
        let dir = tempfile::tempdir().unwrap();
        wasmdiff_bench::source_tree(dir.path(), files).unwrap();
        let ext = default_extensions();
        group.bench_with_input(BenchmarkId::from_parameter(files), &files, |b, _| {
            b.iter(|| scan_sources(black_box(dir.path()), &ext).unwrap())
        });
    }
    group.finish();
}

fn sanitizing(c: &mut Criterion) {
    let flags = wasmdiff_bench::flags(64);
    c.bench_function("sanitize_user_flags/64", |b| {
        b.iter(|| sanitize_user_flags(black_box(&flags), TargetKind::Wasm))
    });
}

fn diffing(c: &mut Criterion) {
    let mut group = c.benchmark_group("discrepancies");
    for n in [1_000, 10_000] {
        let pairings = wasmdiff_bench::pairings(n, 25);
        group.bench_with_input(BenchmarkId::new("count", n), &pairings, |b, p| {
            b.iter(|| compute_discrepancies(black_box(p)))
        });
        let tagger = RootCauseTagger::default();
        group.bench_with_input(BenchmarkId::new("count_and_tag", n), &pairings, |b, p| {
            b.iter(|| {
                let (_, mut records) = compute_discrepancies(black_box(p));
                tagger.apply(&mut records);
                records
            })
        });
    }
    group.finish();
}

fn classifying(c: &mut Criterion) {
    let logs = [
        include_str!("../../core/tests/fixtures/build_logs/undefined_symbols.log"),
        include_str!("../../core/tests/fixtures/build_logs/target_dependent_werror.log"),
        include_str!("../../core/tests/fixtures/build_logs/arch_platform_specific.log"),
        include_str!("../../core/tests/fixtures/build_logs/suspected_compiler_bug.log"),
    ];
    c.bench_function("classify_failure", |b| {
        b.iter(|| {
            for log in &logs {
                black_box(classify_failure("", log));
            }
        })
    });
}

criterion_group!(benches, scanning, sanitizing, diffing, classifying);
criterion_main!(benches);
