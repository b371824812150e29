//! Inputs for the micro-benchmarks.

use geo_types::{Coord, Geometry, LineString, Polygon};
use odqa_core::embedding::{EmbeddingVector, Index};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` random unit-range vectors of dimension `dim`, ids `d00000..`.
pub fn corpus(n: usize, dim: usize, seed: u64) -> Vec<(String, EmbeddingVector)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (format!("d{i:05}"), EmbeddingVector::new(v).expect("finite"))
        })
        .collect()
}

pub fn index(n: usize, dim: usize, seed: u64) -> Index {
    Index::from_vectors(corpus(n, dim, seed)).expect("non-empty corpus")
}

pub fn query(dim: usize, seed: u64) -> EmbeddingVector {
    corpus(1, dim, seed ^ 0x5eed).pop().expect("one vector").1
}

/// Star-shaped polygon with `n` vertices in a 100 m box.
pub fn polygon(n: usize, seed: u64) -> Geometry<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<Coord<f64>> = (0..n)
        .map(|i| {
            let a = i as f64 / n as f64 * std::f64::consts::TAU;
            let r = rng.gen_range(20.0..50.0);
            Coord { x: 2_683_000.0 + r * a.cos(), y: 1_248_000.0 + r * a.sin() }
        })
        .collect();
    pts.push(pts[0]);
    Geometry::Polygon(Polygon::new(LineString::from(pts), vec![]))
}

/// Sandbox programs exercised by the interpreter benchmarks.
pub const LOOP_PROGRAM: &str = "acc = 0\nfor i in range(20000):\n    if i % 3 == 0:\n        acc = acc + i\nprint(acc)";

pub const FRAME_PROGRAM: &str = r#"
rows = [{"zone": "z" + str(i % 7), "value": i * 1.5} for i in range(2000)]
f = frame.from_records(rows)
g = frame.agg(frame.group_by(f, "zone"), {"value": ["sum", "mean"]})
print(len(g))
"#;
