//! Constructive operations: buffer and intersection.

use std::f64::consts::PI;

use geo::BooleanOps;
use geo_types::{Coord, Geometry, LineString, MultiLineString, MultiPoint, MultiPolygon, Point, Polygon};

use super::predicate::{self, Parts};
use super::{Geom, GeometryError};

fn circle(center: Coord<f64>, radius: f64, segments: usize) -> Polygon<f64> {
    let mut ring: Vec<Coord<f64>> = (0..segments)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / segments as f64;
            Coord { x: center.x + radius * a.cos(), y: center.y + radius * a.sin() }
        })
        .collect();
    ring.push(ring[0]);
    Polygon::new(LineString(ring), vec![])
}

/// Stadium shape around one segment: two half circles joined by the
/// segment's offset edges, counter-clockwise.
fn capsule(a: Coord<f64>, b: Coord<f64>, radius: f64, segments: usize) -> Polygon<f64> {
    if a == b {
        return circle(a, radius, segments);
    }
    let theta = (b.y - a.y).atan2(b.x - a.x);
    let half = (segments / 2).max(2);
    let mut ring = Vec::with_capacity(2 * half + 3);
    let arc = |ring: &mut Vec<Coord<f64>>, c: Coord<f64>, start: f64| {
        for i in 0..=half {
            let ang = start + PI * i as f64 / half as f64;
            ring.push(Coord { x: c.x + radius * ang.cos(), y: c.y + radius * ang.sin() });
        }
    };
    arc(&mut ring, b, theta - PI / 2.0);
    arc(&mut ring, a, theta + PI / 2.0);
    ring.push(ring[0]);
    Polygon::new(LineString(ring), vec![])
}

fn union_all(pieces: Vec<Polygon<f64>>) -> MultiPolygon<f64> {
    // pairwise reduction keeps the operands of each union small
    let mut layer: Vec<MultiPolygon<f64>> = pieces.into_iter().map(|p| MultiPolygon(vec![p])).collect();
    while layer.len() > 1 {
        let mut next = Vec::with_capacity(layer.len().div_ceil(2));
        let mut it = layer.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(a.union(&b)),
                None => next.push(a),
            }
        }
        layer = next;
    }
    layer.pop().unwrap_or_else(|| MultiPolygon(vec![]))
}

fn simplify_multi(mp: MultiPolygon<f64>) -> Option<Geometry<f64>> {
    match mp.0.len() {
        0 => None,
        1 => Some(Geometry::Polygon(mp.0.into_iter().next().unwrap())),
        _ => Some(Geometry::MultiPolygon(mp)),
    }
}

/// Buffer by `radius_m` using `segments` vertices per full circle.
/// Only projected CRSs are accepted.
pub fn buffer(g: &Geom, radius_m: f64, segments: usize) -> Result<Geom, GeometryError> {
    if g.crs.is_geographic() {
        return Err(GeometryError::Operation(format!(
            "buffer in meters is undefined for geographic CRS {}; use projected coordinates",
            g.crs
        )));
    }
    if !(radius_m.is_finite() && radius_m > 0.0) {
        return Err(GeometryError::Operation("buffer radius must be a positive number".into()));
    }
    let segments = segments.clamp(4, 1024);
    let parts = Parts::of(&g.shape);
    let mut pieces: Vec<Polygon<f64>> = parts.points.iter().map(|&p| circle(p, radius_m, segments)).collect();
    for (a, b) in parts.segments() {
        pieces.push(capsule(a, b, radius_m, segments));
    }
    pieces.extend(parts.polygons.iter().map(|p| (*p).clone()));
    let shape = simplify_multi(union_all(pieces))
        .ok_or_else(|| GeometryError::Operation("empty buffer".into()))?;
    Ok(Geom { shape, crs: g.crs.clone() })
}

fn to_multipolygon(parts: &Parts<'_>) -> MultiPolygon<f64> {
    MultiPolygon(parts.polygons.iter().map(|p| (*p).clone()).collect())
}

/// Set intersection; `Ok(None)` when the result is empty.
pub fn intersection(a: &Geom, b: &Geom) -> Result<Option<Geom>, GeometryError> {
    a.same_crs(b)?;
    let pa = Parts::of(&a.shape);
    let pb = Parts::of(&b.shape);
    let crs = a.crs.clone();
    let wrap = |shape: Option<Geometry<f64>>| shape.map(|shape| Geom { shape, crs: crs.clone() });

    // points: keep those covered by the other shape
    let point_side = |points: &Vec<Coord<f64>>, other: &Geometry<f64>| -> Option<Geometry<f64>> {
        let kept: Vec<Point<f64>> = points
            .iter()
            .filter(|&&p| predicate::intersects(&Geometry::Point(Point(p)), other))
            .map(|&p| Point(p))
            .collect();
        match kept.len() {
            0 => None,
            1 => Some(Geometry::Point(kept[0])),
            _ => Some(Geometry::MultiPoint(MultiPoint(kept))),
        }
    };
    if !pa.points.is_empty() {
        return Ok(wrap(point_side(&pa.points, &b.shape)));
    }
    if !pb.points.is_empty() {
        return Ok(wrap(point_side(&pb.points, &a.shape)));
    }

    let a_areal = !pa.polygons.is_empty();
    let b_areal = !pb.polygons.is_empty();
    let shape = match (a_areal, b_areal) {
        (true, true) => simplify_multi(to_multipolygon(&pa).intersection(&to_multipolygon(&pb))),
        (true, false) | (false, true) => {
            let (area, lines) = if a_areal { (&pa, &pb) } else { (&pb, &pa) };
            let mls = MultiLineString(lines.paths.iter().map(|p| LineString(p.to_vec())).collect());
            let clipped = to_multipolygon(area).clip(&mls, false);
            let mut lines: Vec<LineString<f64>> = clipped.0.into_iter().filter(|l| l.0.len() >= 2).collect();
            match lines.len() {
                0 => None,
                1 => Some(Geometry::LineString(lines.remove(0))),
                _ => Some(Geometry::MultiLineString(MultiLineString(lines))),
            }
        }
        (false, false) => {
            let mut pts: Vec<Point<f64>> = Vec::new();
            for (p1, p2) in pa.segments() {
                for (q1, q2) in pb.segments() {
                    if let Some(c) = predicate::segment_intersection_point(p1, p2, q1, q2) {
                        if !pts.iter().any(|p| p.0 == c) {
                            pts.push(Point(c));
                        }
                    }
                }
            }
            match pts.len() {
                0 => None,
                1 => Some(Geometry::Point(pts[0])),
                _ => Some(Geometry::MultiPoint(MultiPoint(pts))),
            }
        }
    };
    Ok(wrap(shape))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{measure, Crs};
    use geo_types::{line_string, point, polygon};

    fn proj(shape: Geometry<f64>) -> Geom {
        Geom { shape, crs: Crs::parse("EPSG:2056") }
    }

    #[test]
    fn point_buffer_area_approaches_circle() {
        let g = buffer(&proj(point!(x: 0.0, y: 0.0).into()), 10.0, 256).unwrap();
        let a = measure::area(&g);
        assert!((a / (PI * 100.0) - 1.0).abs() < 1e-3, "{a}");
    }

    #[test]
    fn segment_buffer_is_stadium() {
        let line = proj(line_string![(x: 0.0, y: 0.0), (x: 10.0, y: 0.0)].into());
        let g = buffer(&line, 1.0, 512).unwrap();
        let expected = 20.0 + PI;
        assert!((measure::area(&g) / expected - 1.0).abs() < 1e-3);
    }

    #[test]
    fn buffer_refuses_geographic() {
        let g = Geom { shape: point!(x: 8.5, y: 47.3).into(), crs: Crs::wgs84() };
        assert!(buffer(&g, 100.0, 32).is_err());
    }

    #[test]
    fn overlapping_squares_intersection() {
        let a = proj(polygon![(x: 0.0, y: 0.0), (x: 2.0, y: 0.0), (x: 2.0, y: 2.0), (x: 0.0, y: 2.0), (x: 0.0, y: 0.0)].into());
        let b = proj(polygon![(x: 1.0, y: 1.0), (x: 3.0, y: 1.0), (x: 3.0, y: 3.0), (x: 1.0, y: 3.0), (x: 1.0, y: 1.0)].into());
        let i = intersection(&a, &b).unwrap().unwrap();
        assert!((measure::area(&i) - 1.0).abs() < 1e-12);
        let far = proj(polygon![(x: 9.0, y: 9.0), (x: 10.0, y: 9.0), (x: 10.0, y: 10.0), (x: 9.0, y: 9.0)].into());
        assert!(intersection(&a, &far).unwrap().is_none());
    }

    #[test]
    fn line_clipped_by_polygon() {
        let sq = proj(polygon![(x: 0.0, y: 0.0), (x: 2.0, y: 0.0), (x: 2.0, y: 2.0), (x: 0.0, y: 2.0), (x: 0.0, y: 0.0)].into());
        let line = proj(line_string![(x: -1.0, y: 1.0), (x: 3.0, y: 1.0)].into());
        let clipped = intersection(&sq, &line).unwrap().unwrap();
        assert!((measure::length(&clipped) - 2.0).abs() < 1e-9);
    }
}
