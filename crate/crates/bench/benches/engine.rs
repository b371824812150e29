use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use geo_types::{Coord, Geometry, Point};
use odqa_bench::{index, polygon, query, FRAME_PROGRAM, LOOP_PROGRAM};
use odqa_core::geometry::measure::area;
use odqa_core::geometry::predicate::{contains, intersects};
use odqa_core::geometry::{Crs, Geom};
use odqa_core::sandbox::{parse, ResourceLimits, Session};

fn knn(c: &mut Criterion) {
    let mut group = c.benchmark_group("knn");
    for n in [1_000, 10_000] {
        let idx = index(n, 256, 1);
        let q = query(256, 2);
        group.bench_with_input(BenchmarkId::new("k5_dim256", n), &n, |b, _| b.iter(|| idx.knn(black_box(&q), 5)));
    }
    group.finish();
}

fn interpreter(c: &mut Criterion) {
    let lim = ResourceLimits::default();
    c.bench_function("interp/parse_loop", |b| b.iter(|| parse(black_box(LOOP_PROGRAM))));
    c.bench_function("interp/run_loop_20k", |b| b.iter(|| Session::new().execute(black_box(LOOP_PROGRAM), &lim)));
    c.bench_function("interp/frame_groupby_2k", |b| b.iter(|| Session::new().execute(black_box(FRAME_PROGRAM), &lim)));
}

fn geometry(c: &mut Criterion) {
    let a = polygon(64, 3);
    let b = polygon(64, 4);
    let p = Geometry::Point(Point(Coord { x: 2_683_010.0, y: 1_248_005.0 }));
    let g = Geom::new(a.clone(), Crs::parse("EPSG:2056")).expect("valid polygon");
    c.bench_function("geo/contains_point_64", |bench| bench.iter(|| contains(black_box(&a), black_box(&p))));
    c.bench_function("geo/intersects_64x64", |bench| bench.iter(|| intersects(black_box(&a), black_box(&b))));
    c.bench_function("geo/area_64", |bench| bench.iter(|| area(black_box(&g))));
}

criterion_group!(benches, knn, interpreter, geometry);
criterion_main!(benches);
