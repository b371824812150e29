//! Topological predicates in coordinate space.
//!
//! Point-in-polygon uses the winding number with an explicit boundary test.
//! `contains` follows the interior/boundary convention: a polygon does not
//! contain a point lying exactly on its boundary.

use geo_types::{Coord, Geometry, Polygon};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Inside,
    Boundary,
    Outside,
}

fn cross(o: Coord<f64>, a: Coord<f64>, b: Coord<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn within_box(p: Coord<f64>, a: Coord<f64>, b: Coord<f64>) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

pub fn on_segment(p: Coord<f64>, a: Coord<f64>, b: Coord<f64>) -> bool {
    cross(a, b, p) == 0.0 && within_box(p, a, b)
}

/// Closed-segment intersection test, including collinear overlap.
pub fn segments_intersect(p1: Coord<f64>, p2: Coord<f64>, q1: Coord<f64>, q2: Coord<f64>) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && within_box(p1, q1, q2))
        || (d2 == 0.0 && within_box(p2, q1, q2))
        || (d3 == 0.0 && within_box(q1, p1, p2))
        || (d4 == 0.0 && within_box(q2, p1, p2))
}

/// Segments cross at a single point interior to both.
pub fn segments_cross_properly(p1: Coord<f64>, p2: Coord<f64>, q1: Coord<f64>, q2: Coord<f64>) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Intersection point of two properly crossing or touching segments.
pub fn segment_intersection_point(
    p1: Coord<f64>,
    p2: Coord<f64>,
    q1: Coord<f64>,
    q2: Coord<f64>,
) -> Option<Coord<f64>> {
    let r = Coord { x: p2.x - p1.x, y: p2.y - p1.y };
    let s = Coord { x: q2.x - q1.x, y: q2.y - q1.y };
    let denom = r.x * s.y - r.y * s.x;
    if denom == 0.0 {
        return [p1, p2].into_iter().find(|&p| on_segment(p, q1, q2));
    }
    let t = ((q1.x - p1.x) * s.y - (q1.y - p1.y) * s.x) / denom;
    let u = ((q1.x - p1.x) * r.y - (q1.y - p1.y) * r.x) / denom;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u))
        .then(|| Coord { x: p1.x + t * r.x, y: p1.y + t * r.y })
}

/// Winding number of a closed ring around `p`; `None` if `p` is on the ring.
fn winding(p: Coord<f64>, ring: &[Coord<f64>]) -> Option<i32> {
    let mut wn = 0;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if on_segment(p, a, b) {
            return None;
        }
        if a.y <= p.y {
            if b.y > p.y && cross(a, b, p) > 0.0 {
                wn += 1;
            }
        } else if b.y <= p.y && cross(a, b, p) < 0.0 {
            wn -= 1;
        }
    }
    Some(wn)
}

pub fn locate_in_polygon(p: Coord<f64>, poly: &Polygon<f64>) -> Location {
    match winding(p, &poly.exterior().0) {
        None => return Location::Boundary,
        Some(0) => return Location::Outside,
        Some(_) => {}
    }
    for hole in poly.interiors() {
        match winding(p, &hole.0) {
            None => return Location::Boundary,
            Some(0) => {}
            Some(_) => return Location::Outside,
        }
    }
    Location::Inside
}

/// Location of a position relative to any areal part of `polys`.
pub fn locate(p: Coord<f64>, polys: &[&Polygon<f64>]) -> Location {
    let mut result = Location::Outside;
    for poly in polys {
        match locate_in_polygon(p, poly) {
            Location::Inside => return Location::Inside,
            Location::Boundary => result = Location::Boundary,
            Location::Outside => {}
        }
    }
    result
}

/// A shape decomposed into isolated points, paths (line strings and polygon
/// rings) and areal parts.
pub struct Parts<'a> {
    pub points: Vec<Coord<f64>>,
    pub paths: Vec<&'a [Coord<f64>]>,
    pub polygons: Vec<&'a Polygon<f64>>,
}

impl<'a> Parts<'a> {
    pub fn of(shape: &'a Geometry<f64>) -> Parts<'a> {
        let mut parts = Parts { points: Vec::new(), paths: Vec::new(), polygons: Vec::new() };
        let add_polygon = |parts: &mut Parts<'a>, p: &'a Polygon<f64>| {
            parts.paths.push(&p.exterior().0);
            parts.paths.extend(p.interiors().iter().map(|r| r.0.as_slice()));
            parts.polygons.push(p);
        };
        match shape {
            Geometry::Point(p) => parts.points.push(p.0),
            Geometry::MultiPoint(mp) => parts.points.extend(mp.0.iter().map(|p| p.0)),
            Geometry::LineString(ls) => parts.paths.push(&ls.0),
            Geometry::MultiLineString(mls) => parts.paths.extend(mls.0.iter().map(|l| l.0.as_slice())),
            Geometry::Polygon(p) => add_polygon(&mut parts, p),
            Geometry::MultiPolygon(mp) => mp.0.iter().for_each(|p| add_polygon(&mut parts, p)),
            _ => {}
        }
        parts
    }

    pub fn segments(&self) -> impl Iterator<Item = (Coord<f64>, Coord<f64>)> + '_ {
        self.paths.iter().flat_map(|p| p.windows(2).map(|w| (w[0], w[1])))
    }

    fn covers_point(&self, p: Coord<f64>) -> bool {
        self.points.contains(&p)
            || self.segments().any(|(a, b)| on_segment(p, a, b))
            || locate(p, &self.polygons) != Location::Outside
    }
}

pub fn intersects(a: &Geometry<f64>, b: &Geometry<f64>) -> bool {
    let pa = Parts::of(a);
    let pb = Parts::of(b);
    if pa.points.iter().any(|&p| pb.covers_point(p)) || pb.points.iter().any(|&p| pa.covers_point(p)) {
        return true;
    }
    for (p1, p2) in pa.segments() {
        for (q1, q2) in pb.segments() {
            if segments_intersect(p1, p2, q1, q2) {
                return true;
            }
        }
    }
    // a path fully inside the other shape's area without touching its rings
    pa.paths.iter().any(|p| locate(p[0], &pb.polygons) != Location::Outside)
        || pb.paths.iter().any(|p| locate(p[0], &pa.polygons) != Location::Outside)
}

fn path_inside_area(path: &[Coord<f64>], container: &Parts<'_>) -> bool {
    if path.iter().any(|&p| locate(p, &container.polygons) == Location::Outside) {
        return false;
    }
    for w in path.windows(2) {
        if container.segments().any(|(q1, q2)| segments_cross_properly(w[0], w[1], q1, q2)) {
            return false;
        }
        let mid = Coord { x: (w[0].x + w[1].x) / 2.0, y: (w[0].y + w[1].y) / 2.0 };
        if locate(mid, &container.polygons) == Location::Outside {
            return false;
        }
    }
    true
}

/// `a` contains `b`: no part of `b` lies outside `a` and their interiors meet.
pub fn contains(a: &Geometry<f64>, b: &Geometry<f64>) -> bool {
    let pa = Parts::of(a);
    let pb = Parts::of(b);
    if pb.points.is_empty() && pb.paths.is_empty() {
        return false;
    }
    if pa.polygons.is_empty() {
        // points and lines contain only what lies on them
        return pb.points.iter().all(|&p| pa.covers_point(p))
            && pb.paths.iter().all(|path| {
                path.windows(2).all(|w| {
                    pa.segments().any(|(q1, q2)| on_segment(w[0], q1, q2) && on_segment(w[1], q1, q2))
                })
            });
    }
    let points_ok = pb.points.iter().all(|&p| locate(p, &pa.polygons) == Location::Inside);
    if !points_ok || !pb.paths.iter().all(|path| path_inside_area(path, &pa)) {
        return false;
    }
    // a hole of `a` (or a gap between parts) lying inside `b`
    for poly_b in &pb.polygons {
        for poly_a in &pa.polygons {
            for hole in poly_a.interiors() {
                if locate_in_polygon(hole.0[0], poly_b) == Location::Inside {
                    return false;
                }
            }
        }
    }
    if pb.points.is_empty() && pb.polygons.is_empty() {
        // a line lying entirely on the boundary is not contained
        return pb.paths.iter().any(|path| {
            path.windows(2).any(|w| {
                let mid = Coord { x: (w[0].x + w[1].x) / 2.0, y: (w[0].y + w[1].y) / 2.0 };
                locate(mid, &pa.polygons) == Location::Inside
            })
        });
    }
    true
}

pub fn within(a: &Geometry<f64>, b: &Geometry<f64>) -> bool {
    contains(b, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use geo_types::{line_string, point, polygon};

    fn square(x0: f64, y0: f64, s: f64) -> Geometry<f64> {
        polygon![(x: x0, y: y0), (x: x0 + s, y: y0), (x: x0 + s, y: y0 + s), (x: x0, y: y0 + s), (x: x0, y: y0)].into()
    }

    #[test]
    fn boundary_point_is_not_contained_but_intersects() {
        let sq = square(0.0, 0.0, 2.0);
        let edge: Geometry<f64> = point!(x: 2.0, y: 1.0).into();
        assert!(!contains(&sq, &edge));
        assert!(intersects(&sq, &edge));
        assert!(contains(&sq, &point!(x: 1.0, y: 1.0).into()));
    }

    #[test]
    fn nested_squares() {
        let big = square(0.0, 0.0, 10.0);
        let small = square(2.0, 2.0, 3.0);
        assert!(contains(&big, &small));
        assert!(within(&small, &big));
        assert!(!contains(&small, &big));
        assert!(intersects(&small, &big));
    }

    #[test]
    fn hole_excludes_point_and_polygon() {
        let with_hole: Geometry<f64> = Polygon::new(
            line_string![(x: 0.0, y: 0.0), (x: 10.0, y: 0.0), (x: 10.0, y: 10.0), (x: 0.0, y: 10.0), (x: 0.0, y: 0.0)],
            vec![line_string![(x: 4.0, y: 4.0), (x: 6.0, y: 4.0), (x: 6.0, y: 6.0), (x: 4.0, y: 6.0), (x: 4.0, y: 4.0)]],
        )
        .into();
        assert!(!contains(&with_hole, &point!(x: 5.0, y: 5.0).into()));
        assert!(!contains(&with_hole, &square(3.0, 3.0, 4.0)));
        assert!(contains(&with_hole, &square(1.0, 1.0, 2.0)));
    }

    #[test]
    fn line_crossing_polygon() {
        let sq = square(0.0, 0.0, 2.0);
        let crossing: Geometry<f64> = line_string![(x: -1.0, y: 1.0), (x: 3.0, y: 1.0)].into();
        let inside: Geometry<f64> = line_string![(x: 0.5, y: 0.5), (x: 1.5, y: 1.5)].into();
        let away: Geometry<f64> = line_string![(x: 5.0, y: 5.0), (x: 6.0, y: 6.0)].into();
        assert!(intersects(&sq, &crossing) && !contains(&sq, &crossing));
        assert!(contains(&sq, &inside));
        assert!(!intersects(&sq, &away));
    }
}
