use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use eventsom::event_study::{study_securities, DetectionRule};
use eventsom::market_model::{fit_all, fit_market_model};
use eventsom::report::{heatmap_svg, CellGrid, HeatmapStyle};
use eventsom::som::{batch_epoch_with, best_matching_unit, SomParams};
use eventsom_bench::{feature_cloud, initialized_map, study_fixture};
use std::hint::black_box;

fn market_model(c: &mut Criterion) {
    let x = feature_cloud(250, 1, 1);
    let y: Vec<f64> = x.iter().zip(feature_cloud(250, 1, 2)).map(|(a, e)| 0.001 + 1.1 * a + 0.1 * e).collect();
    c.bench_function("fit_market_model/250", |b| b.iter(|| fit_market_model(black_box(&y), black_box(&x))));

    let fx = study_fixture(500, 3);
    c.bench_function("fit_all/500", |b| b.iter(|| fit_all(&fx.panel, &fx.windows, &fx.market_ticker)));
    let fits = fit_all(&fx.panel, &fx.windows, &fx.market_ticker).unwrap();
    let rule = DetectionRule::default();
    c.bench_function("study_securities/500", |b| b.iter(|| study_securities(&fx.panel, &fx.windows, &fits, &rule)));
}

fn som(c: &mut Criterion) {
    let dim = 16;
    let mut group = c.benchmark_group("som");
    for &n in &[500usize, 2000] {
        let data = feature_cloud(n, dim, 4);
        let params = SomParams::default();
        let map = initialized_map(&data, dim, &params);
        group.bench_with_input(BenchmarkId::new("batch_epoch", n), &data, |b, data| {
            b.iter_batched(
                || map.clone(),
                |mut m| batch_epoch_with(&mut m, data, 0.5, 3),
                criterion::BatchSize::LargeInput,
            )
        });
        group.bench_with_input(BenchmarkId::new("bmu", n), &data, |b, data| {
            b.iter(|| {
                data.chunks(dim)
                    .map(|x| best_matching_unit(x, &map).unwrap().0)
                    .sum::<usize>()
            })
        });
    }
    group.finish();
}

fn heatmap(c: &mut Criterion) {
    let (rows, cols) = (20, 20);
    let values = feature_cloud(rows * cols, 1, 5);
    let grid = CellGrid {
        rows,
        cols,
        counts: vec![1; rows * cols],
        values,
    };
    let style = HeatmapStyle::default();
    c.bench_function("heatmap_svg/20x20", |b| b.iter(|| heatmap_svg(&grid, "bench", &style)));
}

criterion_group!(benches, market_model, som, heatmap);
criterion_main!(benches);
