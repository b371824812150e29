//! Planar and spherical measures.
//!
//! Projected CRSs use Euclidean formulas on the raw coordinates (meters).
//! Geographic coordinates are `(lon, lat)` degrees and use a sphere of
//! radius [`EARTH_RADIUS_M`].

use geo_types::{Coord, Geometry, LineString, Polygon};

use super::{predicate, Geom, EARTH_RADIUS_M};

/// Signed shoelace area of a ring; counter-clockwise rings are positive.
pub fn ring_signed_area(ring: &[Coord<f64>]) -> f64 {
    if ring.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for w in ring.windows(2) {
        twice += w[0].x * w[1].y - w[1].x * w[0].y;
    }
    let (first, last) = (ring[0], ring[ring.len() - 1]);
    if first != last {
        twice += last.x * first.y - first.x * last.y;
    }
    twice / 2.0
}

fn polygon_planar_area(p: &Polygon<f64>) -> f64 {
    let holes: f64 = p.interiors().iter().map(|h| ring_signed_area(&h.0).abs()).sum();
    ring_signed_area(&p.exterior().0).abs() - holes
}

/// Area on the sphere of a lon/lat ring, by the trapezoidal
/// excess approximation over each edge.
fn ring_spherical_area(ring: &[Coord<f64>]) -> f64 {
    let n = ring.len();
    if n < 4 {
        return 0.0;
    }
    let mut total = 0.0;
    // ring is closed; iterate the n-1 distinct vertices with wraparound
    let m = n - 1;
    for i in 0..m {
        let lower = ring[i];
        let middle = ring[(i + 1) % m];
        let upper = ring[(i + 2) % m];
        total += (upper.x.to_radians() - lower.x.to_radians()) * middle.y.to_radians().sin();
    }
    (total * EARTH_RADIUS_M * EARTH_RADIUS_M / 2.0).abs()
}

fn polygon_spherical_area(p: &Polygon<f64>) -> f64 {
    let holes: f64 = p.interiors().iter().map(|h| ring_spherical_area(&h.0)).sum();
    ring_spherical_area(&p.exterior().0) - holes
}

/// Area in square meters (projected) or on the sphere (geographic).
/// Points and lines have zero area.
pub fn area(g: &Geom) -> f64 {
    let poly_area = |p: &Polygon<f64>| {
        if g.crs.is_geographic() {
            polygon_spherical_area(p)
        } else {
            polygon_planar_area(p)
        }
    };
    match &g.shape {
        Geometry::Polygon(p) => poly_area(p),
        Geometry::MultiPolygon(mp) => mp.0.iter().map(poly_area).sum(),
        _ => 0.0,
    }
}

/// Great-circle distance in meters between two `(lon, lat)` positions.
pub fn haversine(a: Coord<f64>, b: Coord<f64>) -> f64 {
    let (lat1, lat2) = (a.y.to_radians(), b.y.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.x - a.x).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

fn euclid(a: Coord<f64>, b: Coord<f64>) -> f64 {
    (b.x - a.x).hypot(b.y - a.y)
}

fn path_length(coords: &[Coord<f64>], geographic: bool) -> f64 {
    coords
        .windows(2)
        .map(|w| if geographic { haversine(w[0], w[1]) } else { euclid(w[0], w[1]) })
        .sum()
}

/// Length of lines, or perimeter of polygons (all rings); zero for points.
pub fn length(g: &Geom) -> f64 {
    let geo = g.crs.is_geographic();
    let rings = |p: &Polygon<f64>| {
        path_length(&p.exterior().0, geo)
            + p.interiors().iter().map(|r| path_length(&r.0, geo)).sum::<f64>()
    };
    match &g.shape {
        Geometry::LineString(ls) => path_length(&ls.0, geo),
        Geometry::MultiLineString(mls) => mls.0.iter().map(|l| path_length(&l.0, geo)).sum(),
        Geometry::Polygon(p) => rings(p),
        Geometry::MultiPolygon(mp) => mp.0.iter().map(rings).sum(),
        _ => 0.0,
    }
}

fn ring_centroid(ring: &LineString<f64>) -> (Coord<f64>, f64) {
    let c = &ring.0;
    let mut a2 = 0.0;
    let (mut cx, mut cy) = (0.0, 0.0);
    // shift by the first vertex for numerical stability
    let o = c[0];
    for w in c.windows(2) {
        let (x0, y0) = (w[0].x - o.x, w[0].y - o.y);
        let (x1, y1) = (w[1].x - o.x, w[1].y - o.y);
        let cross = x0 * y1 - x1 * y0;
        a2 += cross;
        cx += (x0 + x1) * cross;
        cy += (y0 + y1) * cross;
    }
    if a2 == 0.0 {
        return (o, 0.0);
    }
    (Coord { x: o.x + cx / (3.0 * a2), y: o.y + cy / (3.0 * a2) }, a2 / 2.0)
}

fn polygon_moments(p: &Polygon<f64>) -> (f64, f64, f64) {
    let (c, a) = ring_centroid(p.exterior());
    let a = a.abs();
    let (mut mx, mut my, mut total) = (c.x * a, c.y * a, a);
    for h in p.interiors() {
        let (hc, ha) = ring_centroid(h);
        let ha = ha.abs();
        mx -= hc.x * ha;
        my -= hc.y * ha;
        total -= ha;
    }
    (mx, my, total)
}

fn mean(coords: impl Iterator<Item = Coord<f64>>) -> Option<Coord<f64>> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for c in coords {
        sx += c.x;
        sy += c.y;
        n += 1;
    }
    (n > 0).then(|| Coord { x: sx / n as f64, y: sy / n as f64 })
}

fn lines_centroid<'a>(lines: impl Iterator<Item = &'a LineString<f64>>) -> Option<Coord<f64>> {
    let (mut mx, mut my, mut total) = (0.0, 0.0, 0.0);
    let mut fallback = Vec::new();
    for l in lines {
        for w in l.0.windows(2) {
            let len = euclid(w[0], w[1]);
            mx += (w[0].x + w[1].x) / 2.0 * len;
            my += (w[0].y + w[1].y) / 2.0 * len;
            total += len;
        }
        fallback.extend(l.0.iter().copied());
    }
    if total > 0.0 {
        Some(Coord { x: mx / total, y: my / total })
    } else {
        mean(fallback.into_iter())
    }
}

/// Area-weighted centroid for polygons, length-weighted for lines and the
/// mean position for points. Computed in coordinate space for both CRS kinds.
pub fn centroid(g: &Geom) -> Option<Coord<f64>> {
    match &g.shape {
        Geometry::Point(p) => Some(p.0),
        Geometry::MultiPoint(mp) => mean(mp.0.iter().map(|p| p.0)),
        Geometry::LineString(ls) => lines_centroid(std::iter::once(ls)),
        Geometry::MultiLineString(mls) => lines_centroid(mls.0.iter()),
        Geometry::Polygon(p) => {
            let (mx, my, a) = polygon_moments(p);
            if a > 0.0 {
                Some(Coord { x: mx / a, y: my / a })
            } else {
                lines_centroid(std::iter::once(p.exterior()))
            }
        }
        Geometry::MultiPolygon(mp) => {
            let (mut mx, mut my, mut a) = (0.0, 0.0, 0.0);
            for p in &mp.0 {
                let (px, py, pa) = polygon_moments(p);
                mx += px;
                my += py;
                a += pa;
            }
            (a > 0.0).then(|| Coord { x: mx / a, y: my / a })
        }
        _ => None,
    }
}

/// Closest point on segment `a`-`b` to `p`.
pub fn project_on_segment(p: Coord<f64>, a: Coord<f64>, b: Coord<f64>) -> Coord<f64> {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return a;
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    Coord { x: a.x + t * dx, y: a.y + t * dy }
}

fn closest_between_segments(
    a: (Coord<f64>, Coord<f64>),
    b: (Coord<f64>, Coord<f64>),
) -> (Coord<f64>, Coord<f64>) {
    let candidates = [
        (a.0, project_on_segment(a.0, b.0, b.1)),
        (a.1, project_on_segment(a.1, b.0, b.1)),
        (project_on_segment(b.0, a.0, a.1), b.0),
        (project_on_segment(b.1, a.0, a.1), b.1),
    ];
    candidates
        .into_iter()
        .min_by(|x, y| euclid(x.0, x.1).total_cmp(&euclid(y.0, y.1)))
        .unwrap()
}

/// Closest pair of positions between two shapes in coordinate space.
/// Overlapping shapes are handled by the caller via `intersects`.
fn closest_pair(a: &Geometry<f64>, b: &Geometry<f64>) -> Option<(Coord<f64>, Coord<f64>)> {
    let pa = predicate::Parts::of(a);
    let pb = predicate::Parts::of(b);
    let mut best: Option<(Coord<f64>, Coord<f64>)> = None;
    let mut consider = |pair: (Coord<f64>, Coord<f64>)| {
        if best.map_or(true, |b| euclid(pair.0, pair.1) < euclid(b.0, b.1)) {
            best = Some(pair);
        }
    };
    for &p in &pa.points {
        for &q in &pb.points {
            consider((p, q));
        }
        for s in pb.segments() {
            consider((p, project_on_segment(p, s.0, s.1)));
        }
    }
    for s in pa.segments() {
        for &q in &pb.points {
            consider((project_on_segment(q, s.0, s.1), q));
        }
        for t in pb.segments() {
            consider(closest_between_segments(s, t));
        }
    }
    best
}

/// Minimum distance in meters; zero when the shapes intersect. For
/// geographic CRS the closest pair is found in degree space and measured
/// with the haversine formula.
pub fn distance(a: &Geom, b: &Geom) -> f64 {
    if predicate::intersects(&a.shape, &b.shape) {
        return 0.0;
    }
    match closest_pair(&a.shape, &b.shape) {
        Some((p, q)) if a.crs.is_geographic() => haversine(p, q),
        Some((p, q)) => euclid(p, q),
        None => f64::NAN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Crs;
    use geo_types::{point, polygon};

    fn projected(shape: Geometry<f64>) -> Geom {
        Geom { shape, crs: Crs::parse("EPSG:2056") }
    }

    #[test]
    fn rectangle_area_is_twelve() {
        let rect = polygon![(x: 0.0, y: 0.0), (x: 4.0, y: 0.0), (x: 4.0, y: 3.0), (x: 0.0, y: 3.0), (x: 0.0, y: 0.0)];
        assert_eq!(area(&projected(rect.into())), 12.0);
    }

    #[test]
    fn one_degree_of_latitude() {
        let d = haversine(Coord { x: 0.0, y: 0.0 }, Coord { x: 0.0, y: 1.0 });
        // R * pi / 180
        assert!((d - 111_194.926_644_558_73).abs() < 1e-6, "{d}");
    }

    #[test]
    fn hole_reduces_area_and_shifts_nothing_when_symmetric() {
        let p = Polygon::new(
            LineString::from(vec![(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0), (0.0, 0.0)]),
            vec![LineString::from(vec![(4.0, 4.0), (6.0, 4.0), (6.0, 6.0), (4.0, 6.0), (4.0, 4.0)])],
        );
        let g = projected(p.into());
        assert_eq!(area(&g), 96.0);
        let c = centroid(&g).unwrap();
        assert!((c.x - 5.0).abs() < 1e-12 && (c.y - 5.0).abs() < 1e-12);
        assert_eq!(length(&g), 48.0);
    }

    #[test]
    fn point_to_polygon_distance() {
        let sq = polygon![(x: 0.0, y: 0.0), (x: 1.0, y: 0.0), (x: 1.0, y: 1.0), (x: 0.0, y: 1.0), (x: 0.0, y: 0.0)];
        let p = point!(x: 4.0, y: 5.0);
        assert_eq!(distance(&projected(sq.clone().into()), &projected(p.into())), 5.0);
        assert_eq!(distance(&projected(sq.into()), &projected(point!(x: 0.5, y: 0.5).into())), 0.0);
    }

    #[test]
    fn spherical_area_of_small_square_is_close_to_planar_estimate() {
        // 0.01 x 0.01 degree square at the equator ~ (1111.95 m)^2
        let sq = polygon![(x: 0.0, y: 0.0), (x: 0.01, y: 0.0), (x: 0.01, y: 0.01), (x: 0.0, y: 0.01), (x: 0.0, y: 0.0)];
        let a = area(&Geom { shape: sq.into(), crs: Crs::wgs84() });
        let side = EARTH_RADIUS_M * 0.01_f64.to_radians();
        assert!((a / (side * side) - 1.0).abs() < 1e-4, "{a}");
    }
}
