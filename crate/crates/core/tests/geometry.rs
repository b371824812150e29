//! Geometry predicates and measures against independent oracles: an
//! even-odd ray cast, the `geo` crate, and closed-form shapes.

use geo::{Area, Contains, Euclidean, Length};
use geo_types::{Coord, Geometry, LineString, Polygon};
use odqa_core::geometry::measure::{area, distance, haversine, length};
use odqa_core::geometry::predicate::{contains, locate_in_polygon, Location};
use odqa_core::geometry::{Crs, Geom, EARTH_RADIUS_M};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(x: f64, y: f64) -> Coord<f64> {
    Coord { x, y }
}

/// Classic even-odd crossing test over every ring.
fn ray_cast(p: Coord<f64>, poly: &Polygon<f64>) -> bool {
    let mut inside = false;
    for ring in std::iter::once(poly.exterior()).chain(poly.interiors()) {
        let v = &ring.0;
        for i in 0..v.len() - 1 {
            let (a, b) = (v[i], v[i + 1]);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

/// A random simple polygon: star-shaped around the origin, optionally with
/// a small square hole at the center. With a hole, angular gaps stay below
/// a quarter turn so the shell contains a disk of radius 14 around the hole.
fn star(rng: &mut ChaCha8Rng, with_hole: bool) -> Polygon<f64> {
    let angles = loop {
        let n = rng.gen_range(if with_hole { 6..24 } else { 3..24 });
        let mut a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
        a.sort_by(f64::total_cmp);
        a.dedup();
        let max_gap = a.windows(2).map(|w| w[1] - w[0]).fold(a[0] + std::f64::consts::TAU - a[a.len() - 1], f64::max);
        if !with_hole || max_gap < std::f64::consts::FRAC_PI_2 {
            break a;
        }
    };
    let mut pts: Vec<Coord<f64>> =
        angles.iter().map(|a| { let r = rng.gen_range(20.0..100.0); c(r * a.cos(), r * a.sin()) }).collect();
    pts.push(pts[0]);
    let holes = if with_hole {
        vec![LineString::from(vec![c(-5.0, -5.0), c(5.0, -5.0), c(5.0, 5.0), c(-5.0, 5.0), c(-5.0, -5.0)])]
    } else {
        vec![]
    };
    Polygon::new(LineString::from(pts), holes)
}

#[test]
fn point_in_polygon_agrees_with_ray_casting() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut cases = 0;
    let mut inside = 0;
    for k in 0..100 {
        let poly = star(&mut rng, k % 3 == 0);
        for _ in 0..20 {
            // off-lattice points avoid exact boundary hits
            let p = c(rng.gen_range(-110.0..110.0) + 1e-7, rng.gen_range(-110.0..110.0) + 1e-7);
            let loc = locate_in_polygon(p, &poly);
            if loc == Location::Boundary {
                continue;
            }
            let expected = ray_cast(p, &poly);
            assert_eq!(loc == Location::Inside, expected, "{p:?} in {poly:?}");
            assert_eq!(expected, poly.contains(&geo_types::Point(p)), "geo disagrees at {p:?}");
            let g = Geometry::Polygon(poly.clone());
            assert_eq!(contains(&g, &Geometry::Point(geo_types::Point(p))), expected);
            cases += 1;
            inside += usize::from(expected);
        }
    }
    assert!(cases >= 1000, "{cases}");
    assert!(inside > 100 && cases - inside > 100);
}

#[test]
fn boundary_points_are_not_contained() {
    let sq = Polygon::new(LineString::from(vec![c(0.0, 0.0), c(10.0, 0.0), c(10.0, 10.0), c(0.0, 10.0), c(0.0, 0.0)]), vec![]);
    for p in [c(0.0, 5.0), c(10.0, 10.0), c(5.0, 0.0)] {
        assert_eq!(locate_in_polygon(p, &sq), Location::Boundary);
        assert!(!contains(&Geometry::Polygon(sq.clone()), &Geometry::Point(geo_types::Point(p))));
    }
}

fn projected(shape: Geometry<f64>) -> Geom {
    Geom::new(shape, Crs::parse("EPSG:2056")).unwrap()
}

#[test]
fn planar_area_and_length_match_geo() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..300 {
        let poly = star(&mut rng, k % 2 == 0);
        let g = projected(Geometry::Polygon(poly.clone()));
        let want = poly.unsigned_area();
        assert!((area(&g) - want).abs() <= 1e-9 * want.max(1.0), "{} vs {want}", area(&g));
        let perimeter: f64 =
            Euclidean.length(poly.exterior()) + poly.interiors().iter().map(|r| Euclidean.length(r)).sum::<f64>();
        assert!((length(&g) - perimeter).abs() <= 1e-9 * perimeter);
        let line = poly.exterior().clone();
        let want = Euclidean.length(&line);
        assert!((length(&projected(Geometry::LineString(line))) - want).abs() <= 1e-9 * want);
    }
}

#[test]
fn closed_form_shapes() {
    // 3-4-5 triangle, unit square with a quarter hole, 1 km line
    let tri = projected(Geometry::Polygon(Polygon::new(
        LineString::from(vec![c(0.0, 0.0), c(3.0, 0.0), c(0.0, 4.0), c(0.0, 0.0)]),
        vec![],
    )));
    assert_eq!(area(&tri), 6.0);
    assert_eq!(length(&tri), 12.0);
    let holed = projected(Geometry::Polygon(Polygon::new(
        LineString::from(vec![c(0.0, 0.0), c(2.0, 0.0), c(2.0, 2.0), c(0.0, 2.0), c(0.0, 0.0)]),
        vec![LineString::from(vec![c(0.5, 0.5), c(1.5, 0.5), c(1.5, 1.5), c(0.5, 1.5), c(0.5, 0.5)])],
    )));
    assert_eq!(area(&holed), 3.0);
    let line = projected(Geometry::LineString(LineString::from(vec![c(2_683_000.0, 1_247_000.0), c(2_683_600.0, 1_247_800.0)])));
    assert_eq!(length(&line), 1000.0);
    let a = projected(Geometry::Point(geo_types::Point(c(0.0, 0.0))));
    let b = projected(Geometry::Point(geo_types::Point(c(6.0, 8.0))));
    assert_eq!(distance(&a, &b), 10.0);
}

/// Great-circle distance by the spherical law of cosines.
fn great_circle(a: Coord<f64>, b: Coord<f64>) -> f64 {
    let (p1, p2) = (a.y.to_radians(), b.y.to_radians());
    let d = (b.x - a.x).to_radians();
    (p1.sin() * p2.sin() + p1.cos() * p2.cos() * d.cos()).clamp(-1.0, 1.0).acos() * EARTH_RADIUS_M
}

#[test]
fn haversine_matches_law_of_cosines() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let a = c(rng.gen_range(-180.0..180.0), rng.gen_range(-80.0..80.0));
        let b = c(rng.gen_range(-180.0..180.0), rng.gen_range(-80.0..80.0));
        let want = great_circle(a, b);
        if want < 1000.0 {
            continue;
        }
        assert!((haversine(a, b) - want).abs() <= 1e-6 * want, "{a:?} {b:?}");
    }
    // one degree of latitude
    let one = haversine(c(8.5, 47.0), c(8.5, 48.0));
    assert!((one - EARTH_RADIUS_M * std::f64::consts::PI / 180.0).abs() < 1e-6);
}

#[test]
fn spherical_area_of_a_small_cell_is_close_to_planar() {
    // 0.01 x 0.01 degree cell near Zurich, against the local planar approximation
    let (lon, lat, d) = (8.54, 47.37, 0.01);
    let poly = Polygon::new(
        LineString::from(vec![c(lon, lat), c(lon + d, lat), c(lon + d, lat + d), c(lon, lat + d), c(lon, lat)]),
        vec![],
    );
    let g = Geom::new(Geometry::Polygon(poly), Crs::wgs84()).unwrap();
    let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
    let want = (d * k) * (d * k * (lat + d / 2.0).to_radians().cos());
    assert!((area(&g) - want).abs() / want < 1e-3, "{} vs {want}", area(&g));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rectangle_measures(x in -1e5f64..1e5, y in -1e5f64..1e5, w in 0.1f64..1e4, h in 0.1f64..1e4) {
        let poly = Polygon::new(
            LineString::from(vec![c(x, y), c(x + w, y), c(x + w, y + h), c(x, y + h), c(x, y)]),
            vec![],
        );
        let g = projected(Geometry::Polygon(poly.clone()));
        prop_assert!((area(&g) - w * h).abs() <= 1e-6 * (w * h).max(1.0) + 1e-6);
        prop_assert!((length(&g) - 2.0 * (w + h)).abs() <= 1e-9 * (w + h) + 1e-9);
        let centre = c(x + w / 2.0, y + h / 2.0);
        prop_assert_eq!(locate_in_polygon(centre, &poly), Location::Inside);
        prop_assert_eq!(locate_in_polygon(c(x + w * 2.0 + 1.0, y), &poly), Location::Outside);
    }

    #[test]
    fn area_is_orientation_invariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let poly = star(&mut rng, false);
        let mut rev = poly.exterior().0.clone();
        rev.reverse();
        let reversed = Polygon::new(LineString::from(rev), vec![]);
        let a = area(&projected(Geometry::Polygon(poly)));
        let b = area(&projected(Geometry::Polygon(reversed)));
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }
}
