//! Geometry values, coordinate reference tags and the measures, predicates
//! and constructive operations used by the sandbox's `geo` module.
//!
//! Shapes are stored as [`geo_types::Geometry`]; measures and predicates are
//! implemented in [`measure`] and [`predicate`]. Only polygon clipping
//! ([`ops::intersection`], [`ops::buffer`]) delegates to the `geo` crate's
//! boolean operations.

pub mod measure;
pub mod ops;
pub mod predicate;

use std::fmt;

use geo_types::{Coord, Geometry, LineString, MultiLineString, MultiPoint, MultiPolygon, Point, Polygon};
use serde_json::{json, Value as Json};
use wkt::TryFromWkt;
use thiserror::Error;

/// Mean earth radius used for all spherical computations, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// The default tag applied when a payload does not declare its CRS.
pub const DEFAULT_CRS: &str = "EPSG:4326";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid geometry: {0}")]
    Invalid(String),
    #[error("unsupported geometry type `{0}`")]
    Unsupported(String),
    #[error("CRS mismatch: {0} vs {1}")]
    CrsMismatch(String, String),
    #[error("{0}")]
    Operation(String),
}

/// A coordinate reference system tag, normalized to `AUTHORITY:CODE`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Crs(String);

impl Crs {
    pub fn parse(tag: &str) -> Crs {
        let t = tag.trim();
        let upper = t.to_ascii_uppercase();
        if upper.ends_with("CRS84") || upper == "WGS84" {
            return Crs(DEFAULT_CRS.to_string());
        }
        // urn:ogc:def:crs:EPSG::2056 and EPSG:2056 both become EPSG:2056
        if let Some(idx) = upper.rfind("EPSG") {
            let code: String = upper[idx + 4..]
                .chars()
                .skip_while(|c| !c.is_ascii_digit())
                .take_while(|c| c.is_ascii_digit())
                .collect();
            if !code.is_empty() {
                return Crs(format!("EPSG:{code}"));
            }
        }
        Crs(t.to_string())
    }

    pub fn wgs84() -> Crs {
        Crs(DEFAULT_CRS.to_string())
    }

    /// Longitude/latitude in degrees; measures use the spherical path.
    pub fn is_geographic(&self) -> bool {
        self.0 == DEFAULT_CRS
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Crs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A shape tagged with its CRS.
#[derive(Debug, Clone, PartialEq)]
pub struct Geom {
    pub shape: Geometry<f64>,
    pub crs: Crs,
}

impl Geom {
    pub fn new(shape: Geometry<f64>, crs: Crs) -> Result<Geom, GeometryError> {
        validate(&shape)?;
        Ok(Geom { shape, crs })
    }

    pub fn kind(&self) -> &'static str {
        kind_name(&self.shape)
    }

    /// Both operands must share a CRS for binary operations.
    pub fn same_crs(&self, other: &Geom) -> Result<(), GeometryError> {
        if self.crs == other.crs {
            Ok(())
        } else {
            Err(GeometryError::CrsMismatch(self.crs.to_string(), other.crs.to_string()))
        }
    }

    pub fn to_geojson(&self) -> Json {
        to_geojson(&self.shape)
    }

    pub fn to_wkt(&self) -> String {
        to_wkt(&self.shape)
    }
}

pub fn kind_name(shape: &Geometry<f64>) -> &'static str {
    match shape {
        Geometry::Point(_) => "Point",
        Geometry::MultiPoint(_) => "MultiPoint",
        Geometry::LineString(_) => "LineString",
        Geometry::MultiLineString(_) => "MultiLineString",
        Geometry::Polygon(_) => "Polygon",
        Geometry::MultiPolygon(_) => "MultiPolygon",
        Geometry::Line(_) => "Line",
        Geometry::GeometryCollection(_) => "GeometryCollection",
        Geometry::Rect(_) => "Rect",
        Geometry::Triangle(_) => "Triangle",
    }
}

fn check_coord(c: &Coord<f64>) -> Result<(), GeometryError> {
    if c.x.is_finite() && c.y.is_finite() {
        Ok(())
    } else {
        Err(GeometryError::Invalid("non-finite coordinate".into()))
    }
}

fn check_line(ls: &LineString<f64>) -> Result<(), GeometryError> {
    if ls.0.len() < 2 {
        return Err(GeometryError::Invalid("linestring needs at least 2 points".into()));
    }
    ls.0.iter().try_for_each(check_coord)
}

fn check_ring(ring: &LineString<f64>) -> Result<(), GeometryError> {
    if ring.0.len() < 4 {
        return Err(GeometryError::Invalid("polygon ring needs at least 4 positions".into()));
    }
    if ring.0.first() != ring.0.last() {
        return Err(GeometryError::Invalid("polygon ring is not closed".into()));
    }
    ring.0.iter().try_for_each(check_coord)
}

fn check_polygon(p: &Polygon<f64>) -> Result<(), GeometryError> {
    check_ring(p.exterior())?;
    p.interiors().iter().try_for_each(check_ring)
}

/// Structural validity: finite coordinates, linestrings with at least two
/// points and closed polygon rings.
pub fn validate(shape: &Geometry<f64>) -> Result<(), GeometryError> {
    match shape {
        Geometry::Point(p) => check_coord(&p.0),
        Geometry::MultiPoint(mp) => mp.0.iter().try_for_each(|p| check_coord(&p.0)),
        Geometry::LineString(ls) => check_line(ls),
        Geometry::MultiLineString(mls) => mls.0.iter().try_for_each(check_line),
        Geometry::Polygon(p) => check_polygon(p),
        Geometry::MultiPolygon(mp) => mp.0.iter().try_for_each(check_polygon),
        other => Err(GeometryError::Unsupported(kind_name(other).into())),
    }
}

/// Closes a ring given as a coordinate list when its ends differ.
pub fn closed_ring(mut coords: Vec<Coord<f64>>) -> LineString<f64> {
    if coords.len() >= 3 && coords.first() != coords.last() {
        let first = coords[0];
        coords.push(first);
    }
    LineString(coords)
}

fn coord_json(c: &Coord<f64>) -> Json {
    json!([c.x, c.y])
}

fn line_json(ls: &LineString<f64>) -> Json {
    Json::Array(ls.0.iter().map(coord_json).collect())
}

fn polygon_json(p: &Polygon<f64>) -> Json {
    let mut rings = vec![line_json(p.exterior())];
    rings.extend(p.interiors().iter().map(line_json));
    Json::Array(rings)
}

pub fn to_geojson(shape: &Geometry<f64>) -> Json {
    match shape {
        Geometry::Point(p) => json!({"type": "Point", "coordinates": coord_json(&p.0)}),
        Geometry::MultiPoint(mp) => json!({
            "type": "MultiPoint",
            "coordinates": mp.0.iter().map(|p| coord_json(&p.0)).collect::<Vec<_>>()
        }),
        Geometry::LineString(ls) => json!({"type": "LineString", "coordinates": line_json(ls)}),
        Geometry::MultiLineString(mls) => json!({
            "type": "MultiLineString",
            "coordinates": mls.0.iter().map(line_json).collect::<Vec<_>>()
        }),
        Geometry::Polygon(p) => json!({"type": "Polygon", "coordinates": polygon_json(p)}),
        Geometry::MultiPolygon(mp) => json!({
            "type": "MultiPolygon",
            "coordinates": mp.0.iter().map(polygon_json).collect::<Vec<_>>()
        }),
        other => json!({"type": kind_name(other), "coordinates": []}),
    }
}

fn parse_coord(v: &Json) -> Result<Coord<f64>, GeometryError> {
    let arr = v
        .as_array()
        .filter(|a| a.len() >= 2)
        .ok_or_else(|| GeometryError::Invalid("position must be an array of 2+ numbers".into()))?;
    let x = arr[0].as_f64().ok_or_else(|| GeometryError::Invalid("non-numeric x".into()))?;
    let y = arr[1].as_f64().ok_or_else(|| GeometryError::Invalid("non-numeric y".into()))?;
    Ok(Coord { x, y })
}

fn parse_coords(v: &Json) -> Result<Vec<Coord<f64>>, GeometryError> {
    v.as_array()
        .ok_or_else(|| GeometryError::Invalid("expected position array".into()))?
        .iter()
        .map(parse_coord)
        .collect()
}

fn parse_polygon(v: &Json) -> Result<Polygon<f64>, GeometryError> {
    let rings = v
        .as_array()
        .filter(|r| !r.is_empty())
        .ok_or_else(|| GeometryError::Invalid("polygon needs at least one ring".into()))?;
    let mut parsed = rings.iter().map(|r| {
        let coords = parse_coords(r)?;
        if coords.len() < 4 || coords.first() != coords.last() {
            return Err(GeometryError::Invalid("polygon ring is not closed".into()));
        }
        Ok(LineString(coords))
    });
    let exterior = parsed.next().unwrap()?;
    let holes = parsed.collect::<Result<Vec<_>, _>>()?;
    Ok(Polygon::new(exterior, holes))
}

/// Parses a GeoJSON geometry object and validates it.
pub fn from_geojson(v: &Json) -> Result<Geometry<f64>, GeometryError> {
    let ty = v
        .get("type")
        .and_then(Json::as_str)
        .ok_or_else(|| GeometryError::Invalid("geometry without `type`".into()))?;
    let coords = v.get("coordinates").unwrap_or(&Json::Null);
    let shape = match ty {
        "Point" => Geometry::Point(Point(parse_coord(coords)?)),
        "MultiPoint" => Geometry::MultiPoint(MultiPoint(
            parse_coords(coords)?.into_iter().map(Point).collect(),
        )),
        "LineString" => Geometry::LineString(LineString(parse_coords(coords)?)),
        "MultiLineString" => Geometry::MultiLineString(MultiLineString(
            coords
                .as_array()
                .ok_or_else(|| GeometryError::Invalid("expected line array".into()))?
                .iter()
                .map(|l| parse_coords(l).map(LineString))
                .collect::<Result<_, _>>()?,
        )),
        "Polygon" => Geometry::Polygon(parse_polygon(coords)?),
        "MultiPolygon" => Geometry::MultiPolygon(MultiPolygon(
            coords
                .as_array()
                .ok_or_else(|| GeometryError::Invalid("expected polygon array".into()))?
                .iter()
                .map(parse_polygon)
                .collect::<Result<_, _>>()?,
        )),
        other => return Err(GeometryError::Unsupported(other.to_string())),
    };
    validate(&shape)?;
    Ok(shape)
}

/// Parses WKT text (the geometry encoding used in CSV payloads).
pub fn from_wkt(text: &str) -> Result<Geometry<f64>, GeometryError> {
    let shape = Geometry::<f64>::try_from_wkt_str(text.trim())
        .map_err(|e| GeometryError::Invalid(format!("WKT: {e}")))?;
    validate(&shape)?;
    Ok(shape)
}

fn wkt_coords(coords: &[Coord<f64>]) -> String {
    coords.iter().map(|c| format!("{} {}", c.x, c.y)).collect::<Vec<_>>().join(", ")
}

fn wkt_polygon(p: &Polygon<f64>) -> String {
    let mut rings = vec![format!("({})", wkt_coords(&p.exterior().0))];
    rings.extend(p.interiors().iter().map(|r| format!("({})", wkt_coords(&r.0))));
    format!("({})", rings.join(", "))
}

pub fn to_wkt(shape: &Geometry<f64>) -> String {
    match shape {
        Geometry::Point(p) => format!("POINT ({} {})", p.x(), p.y()),
        Geometry::MultiPoint(mp) => format!(
            "MULTIPOINT ({})",
            mp.0.iter().map(|p| format!("({} {})", p.x(), p.y())).collect::<Vec<_>>().join(", ")
        ),
        Geometry::LineString(ls) => format!("LINESTRING ({})", wkt_coords(&ls.0)),
        Geometry::MultiLineString(mls) => format!(
            "MULTILINESTRING ({})",
            mls.0.iter().map(|l| format!("({})", wkt_coords(&l.0))).collect::<Vec<_>>().join(", ")
        ),
        Geometry::Polygon(p) => format!("POLYGON {}", wkt_polygon(p)),
        Geometry::MultiPolygon(mp) => format!(
            "MULTIPOLYGON ({})",
            mp.0.iter().map(wkt_polygon).collect::<Vec<_>>().join(", ")
        ),
        other => format!("{} EMPTY", kind_name(other).to_ascii_uppercase()),
    }
}

/// Number of vertices, used to charge bulk geometry work against the op cap.
pub fn vertex_count(shape: &Geometry<f64>) -> usize {
    use geo::CoordsIter;
    shape.coords_count()
}

/// Converts Swiss LV95 (EPSG:2056) or LV03 (EPSG:21781) coordinates to
/// WGS84 with the approximate federal formulas (about 1 m accuracy). Returns
/// `None` for other projected CRSs.
pub fn to_wgs84(g: &Geom) -> Option<Geom> {
    use geo::MapCoords;
    let (e0, n0) = match g.crs.as_str() {
        DEFAULT_CRS => return Some(g.clone()),
        "EPSG:2056" => (2_600_000.0, 1_200_000.0),
        "EPSG:21781" => (600_000.0, 200_000.0),
        _ => return None,
    };
    let shape = g.shape.map_coords(|c| {
        let y = (c.x - e0) / 1e6;
        let x = (c.y - n0) / 1e6;
        let lon = 2.677_909_4 + 4.728_982 * y + 0.791_484 * y * x + 0.130_6 * y * x * x - 0.043_6 * y * y * y;
        let lat = 16.902_389_2 + 3.238_272 * x - 0.270_978 * y * y - 0.002_528 * x * x - 0.044_7 * y * y * x
            - 0.014_0 * x * x * x;
        Coord { x: lon * 100.0 / 36.0, y: lat * 100.0 / 36.0 }
    });
    Some(Geom { shape, crs: Crs::wgs84() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lv95_matches_published_example() {
        let g = Geom { shape: Geometry::Point(Point::new(2_700_000.0, 1_100_000.0)), crs: Crs::parse("EPSG:2056") };
        let Geometry::Point(p) = to_wgs84(&g).unwrap().shape else { panic!() };
        // worked example of the federal approximation: 8 deg 43' 49.79", 46 deg 02' 38.87"
        assert!((p.x() - (8.0 + 43.0 / 60.0 + 49.79 / 3600.0)).abs() < 3e-5, "{p:?}");
        assert!((p.y() - (46.0 + 2.0 / 60.0 + 38.87 / 3600.0)).abs() < 3e-5, "{p:?}");
        assert!(to_wgs84(&Geom { shape: g.shape.clone(), crs: Crs::parse("EPSG:3857") }).is_none());
    }

    #[test]
    fn crs_tags_normalize() {
        assert_eq!(Crs::parse("urn:ogc:def:crs:EPSG::2056").as_str(), "EPSG:2056");
        assert_eq!(Crs::parse("epsg:4326").as_str(), "EPSG:4326");
        assert!(Crs::parse("urn:ogc:def:crs:OGC:1.3:CRS84").is_geographic());
        assert!(!Crs::parse("EPSG:2056").is_geographic());
    }

    #[test]
    fn geojson_polygon_roundtrip() {
        let gj = json!({"type": "Polygon", "coordinates": [[[0.0, 0.0], [4.0, 0.0], [4.0, 3.0], [0.0, 0.0]]]});
        let shape = from_geojson(&gj).unwrap();
        assert_eq!(to_geojson(&shape), gj);
    }

    #[test]
    fn open_ring_rejected() {
        let gj = json!({"type": "Polygon", "coordinates": [[[0.0, 0.0], [4.0, 0.0], [4.0, 3.0], [0.0, 3.0]]]});
        assert!(matches!(from_geojson(&gj), Err(GeometryError::Invalid(_))));
    }

    #[test]
    fn short_linestring_rejected() {
        let gj = json!({"type": "LineString", "coordinates": [[0.0, 0.0]]});
        assert!(from_geojson(&gj).is_err());
    }

    #[test]
    fn wkt_parses_point_and_polygon() {
        let p = from_wkt("POINT (8.54 47.37)").unwrap();
        assert_eq!(kind_name(&p), "Point");
        let poly = from_wkt("POLYGON ((0 0, 1 0, 1 1, 0 0))").unwrap();
        assert_eq!(to_wkt(&poly), "POLYGON ((0 0, 1 0, 1 1, 0 0))");
        assert!(from_wkt("POINT (1)").is_err());
    }
}
