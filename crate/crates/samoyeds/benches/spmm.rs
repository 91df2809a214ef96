//! Engine throughput: sparse-sparse tiled matmul (parallel vs sequential
//! scheduler) against the dense tiled baseline on the same logical problem.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use samoyeds::{
    compress_input, dense_tiled, encode_weight, prune_to_format, spmm_tiled, DenseMatrix,
    Epilogue, SelectedInput, SamoyedsWeight, SparseFormatConfig, TileConfig,
};

fn pseudo(seed: &mut u64) -> f32 {
    *seed = seed
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    ((((*seed >> 33) % 2001) as f32) - 1000.0) / 1000.0
}

fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut s = seed;
    DenseMatrix::from_vec(rows, cols, (0..rows * cols).map(|_| pseudo(&mut s)).collect()).unwrap()
}

struct Case {
    name: &'static str,
    weight: SamoyedsWeight,
    dense: DenseMatrix,
    x: SelectedInput,
}

fn build_case(name: &'static str, dim: usize, sel_fraction: f64) -> Case {
    let cfg = SparseFormatConfig::new(1, 2, 32).unwrap();
    let raw = random_matrix(dim, dim, 42);
    let (pruned, _) = prune_to_format(&raw, &cfg).unwrap();
    let weight = encode_weight(&pruned, &cfg).unwrap();
    let tokens = random_matrix(dim, dim, 43);
    let step = (1.0 / sel_fraction).round() as usize;
    let sel: Vec<usize> = (0..dim).step_by(step).collect();
    let x = compress_input(&tokens, &sel).unwrap();
    Case {
        name,
        weight,
        dense: raw,
        x,
    }
}

fn run_in_pool<F: FnOnce() + Send>(threads: usize, f: F) {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f);
}

fn bench_spmm(c: &mut Criterion) {
    let tc = TileConfig::default();
    let threads = std::thread::available_parallelism().map_or(2, |n| n.get());
    for case in [
        build_case("512_full_sel", 512, 1.0),
        build_case("512_quarter_sel", 512, 0.25),
        build_case("1024_full_sel", 1024, 1.0),
    ] {
        let mut group = c.benchmark_group(case.name);
        group.sample_size(10);
        group.bench_function("samoyeds_sequential", |b| {
            b.iter_batched(
                || (),
                |()| {
                    run_in_pool(1, || {
                        black_box(
                            spmm_tiled(&case.weight, &case.x, &tc, &Epilogue::None).unwrap(),
                        );
                    })
                },
                BatchSize::PerIteration,
            )
        });
        group.bench_function("samoyeds_parallel", |b| {
            b.iter_batched(
                || (),
                |()| {
                    run_in_pool(threads, || {
                        black_box(
                            spmm_tiled(&case.weight, &case.x, &tc, &Epilogue::None).unwrap(),
                        );
                    })
                },
                BatchSize::PerIteration,
            )
        });
        group.bench_function("dense_sequential", |b| {
            b.iter_batched(
                || (),
                |()| {
                    run_in_pool(1, || {
                        black_box(dense_tiled(&case.dense, &case.x, &tc, &Epilogue::None).unwrap());
                    })
                },
                BatchSize::PerIteration,
            )
        });
        group.bench_function("dense_parallel", |b| {
            b.iter_batched(
                || (),
                |()| {
                    run_in_pool(threads, || {
                        black_box(dense_tiled(&case.dense, &case.x, &tc, &Epilogue::None).unwrap());
                    })
                },
                BatchSize::PerIteration,
            )
        });
        group.finish();
    }
}

criterion_group!(benches, bench_spmm);
criterion_main!(benches);
