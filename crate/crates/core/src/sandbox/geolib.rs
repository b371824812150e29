//! The `geo` module.

use std::sync::Arc;

use geo_types::{Coord, Geometry, LineString, Point, Polygon};

use super::builtins::{bind_args, expect_f64, expect_frame, expect_geom, expect_int, expect_str};
use super::gazetteer::Gazetteer;
use super::interp::{type_err, value_err, Interp, RResult, RtError};
use super::value::{lock, Value};
use super::ErrorKind;
use crate::geometry::{self, measure, ops, predicate, Crs, Geom, GeometryError};

pub const FUNCTIONS: &[&str] = &[
    "geo.point",
    "geo.linestring",
    "geo.polygon",
    "geo.from_wkt",
    "geo.distance",
    "geo.length",
    "geo.area",
    "geo.centroid",
    "geo.buffer",
    "geo.contains",
    "geo.within",
    "geo.intersects",
    "geo.intersection",
    "geo.overlay",
    "geo.geocode",
];

fn geo_err(e: GeometryError) -> RtError {
    match e {
        GeometryError::Invalid(m) => value_err(format!("invalid geometry: {m}")),
        other => type_err(other.to_string()),
    }
}

fn crs_arg(v: Option<Value>, name: &str) -> RResult<Crs> {
    match v {
        None | Some(Value::None) => Ok(Crs::wgs84()),
        Some(v) => Ok(Crs::parse(&expect_str(&v, name)?)),
    }
}

fn coord(v: &Value) -> RResult<Coord<f64>> {
    let pair: Vec<Value> = match v {
        Value::Tuple(t) => t.as_ref().clone(),
        Value::List(l) => lock(l).clone(),
        Value::Geom(g) => match &g.shape {
            Geometry::Point(p) => return Ok(p.0),
            _ => return Err(type_err("expected a point")),
        },
        other => return Err(type_err(format!("expected an (x, y) pair, not {}", other.type_name()))),
    };
    match pair.as_slice() {
        [x, y] => match (x.as_f64(), y.as_f64()) {
            (Some(x), Some(y)) if x.is_finite() && y.is_finite() => Ok(Coord { x, y }),
            _ => Err(type_err("coordinates must be finite numbers")),
        },
        _ => Err(value_err(format!("expected an (x, y) pair, got {} values", pair.len()))),
    }
}

fn coords(interp: &mut Interp<'_>, v: &Value) -> RResult<Vec<Coord<f64>>> {
    interp.iterate(v)?.iter().map(coord).collect()
}

fn make(shape: Geometry<f64>, crs: Crs) -> RResult<Value> {
    Ok(Value::Geom(Arc::new(Geom::new(shape, crs).map_err(geo_err)?)))
}

fn two_geoms(a: Option<Value>, b: Option<Value>, name: &str) -> RResult<(Arc<Geom>, Arc<Geom>)> {
    let (a, b) = (expect_geom(&a.unwrap(), name)?, expect_geom(&b.unwrap(), name)?);
    a.same_crs(&b).map_err(geo_err)?;
    Ok((a, b))
}

fn cost(g: &Geom) -> u64 {
    geometry::vertex_count(&g.shape).max(1) as u64
}

pub fn call(interp: &mut Interp<'_>, name: &str, args: Vec<Value>, kwargs: Vec<(String, Value)>) -> RResult<Value> {
    match name {
        "geo.point" => {
            let [x, y, crs] = bind_args(name, args, kwargs, &["x", "y", "crs"], 2)?;
            let (x, y) = (expect_f64(&x.unwrap(), name)?, expect_f64(&y.unwrap(), name)?);
            if !(x.is_finite() && y.is_finite()) {
                return Err(value_err("coordinates must be finite"));
            }
            make(Geometry::Point(Point::new(x, y)), crs_arg(crs, name)?)
        }
        "geo.linestring" => {
            let [c, crs] = bind_args(name, args, kwargs, &["coords", "crs"], 1)?;
            let cs = coords(interp, &c.unwrap())?;
            make(Geometry::LineString(LineString(cs)), crs_arg(crs, name)?)
        }
        "geo.polygon" => {
            let [c, holes, crs] = bind_args(name, args, kwargs, &["coords", "holes", "crs"], 1)?;
            let outer = geometry::closed_ring(coords(interp, &c.unwrap())?);
            let mut inner = Vec::new();
            if let Some(h) = holes.filter(|h| !matches!(h, Value::None)) {
                for ring in interp.iterate(&h)? {
                    inner.push(geometry::closed_ring(coords(interp, &ring)?));
                }
            }
            make(Geometry::Polygon(Polygon::new(outer, inner)), crs_arg(crs, name)?)
        }
        "geo.from_wkt" => {
            let [t, crs] = bind_args(name, args, kwargs, &["text", "crs"], 1)?;
            let shape = geometry::from_wkt(&expect_str(&t.unwrap(), name)?).map_err(geo_err)?;
            make(shape, crs_arg(crs, name)?)
        }
        "geo.distance" => {
            let [a, b] = bind_args(name, args, kwargs, &["a", "b"], 2)?;
            let (a, b) = two_geoms(a, b, name)?;
            interp.tick(cost(&a) * cost(&b))?;
            Ok(Value::Float(measure::distance(&a, &b)))
        }
        "geo.length" => {
            let [g] = bind_args(name, args, kwargs, &["geom"], 1)?;
            let g = expect_geom(&g.unwrap(), name)?;
            interp.tick(cost(&g))?;
            Ok(Value::Float(measure::length(&g)))
        }
        "geo.area" => {
            let [g] = bind_args(name, args, kwargs, &["geom"], 1)?;
            let g = expect_geom(&g.unwrap(), name)?;
            interp.tick(cost(&g))?;
            Ok(Value::Float(measure::area(&g)))
        }
        "geo.centroid" => {
            let [g] = bind_args(name, args, kwargs, &["geom"], 1)?;
            let g = expect_geom(&g.unwrap(), name)?;
            interp.tick(cost(&g))?;
            match measure::centroid(&g) {
                Some(c) => make(Geometry::Point(Point(c)), g.crs.clone()),
                None => Ok(Value::None),
            }
        }
        "geo.buffer" => {
            let [g, r, segments] = bind_args(name, args, kwargs, &["geom", "radius_m", "segments"], 2)?;
            let g = expect_geom(&g.unwrap(), name)?;
            let r = expect_f64(&r.unwrap(), name)?;
            let segments = segments.map(|s| expect_int(&s, name)).transpose()?.unwrap_or(32);
            if !(4..=1024).contains(&segments) {
                return Err(value_err("buffer() segments must be between 4 and 1024"));
            }
            interp.tick(cost(&g) * segments as u64)?;
            let out = ops::buffer(&g, r, segments as usize).map_err(geo_err)?;
            Ok(Value::Geom(Arc::new(out)))
        }
        "geo.contains" | "geo.within" | "geo.intersects" => {
            let [a, b] = bind_args(name, args, kwargs, &["a", "b"], 2)?;
            let (a, b) = two_geoms(a, b, name)?;
            interp.tick(cost(&a) * cost(&b))?;
            Ok(Value::Bool(match name {
                "geo.contains" => predicate::contains(&a.shape, &b.shape),
                "geo.within" => predicate::within(&a.shape, &b.shape),
                _ => predicate::intersects(&a.shape, &b.shape),
            }))
        }
        "geo.intersection" => {
            let [a, b] = bind_args(name, args, kwargs, &["a", "b"], 2)?;
            let (a, b) = two_geoms(a, b, name)?;
            interp.tick(cost(&a) * cost(&b))?;
            Ok(match ops::intersection(&a, &b).map_err(geo_err)? {
                Some(g) => Value::Geom(Arc::new(g)),
                None => Value::None,
            })
        }
        "geo.overlay" => {
            let [a, b, p] = bind_args(name, args, kwargs, &["left", "right", "predicate"], 2)?;
            let (a, b) = (expect_frame(&a.unwrap(), name)?, expect_frame(&b.unwrap(), name)?);
            let p = match p {
                Some(p) => expect_str(&p, name)?,
                None => "intersects".into(),
            };
            super::frame::overlay(interp, &a, &b, &p)
        }
        "geo.geocode" => {
            let [addr] = bind_args(name, args, kwargs, &["address"], 1)?;
            let addr = expect_str(&addr.unwrap(), name)?;
            interp.tick(1)?;
            match Gazetteer::bundled().lookup(&addr) {
                Some((x, y)) => make(Geometry::Point(Point::new(x, y)), Crs::wgs84()),
                None => Ok(Value::None),
            }
        }
        _ => Err(RtError::new(ErrorKind::AttributeMissing, format!("unknown function {name}"))),
    }
}

/// Attributes readable on geometry values.
pub fn attr(g: &Geom, name: &str) -> Option<Value> {
    Some(match name {
        "kind" => Value::str(g.kind()),
        "crs" => Value::str(g.crs.as_str()),
        "wkt" => Value::str(g.to_wkt()),
        "x" | "y" => match &g.shape {
            Geometry::Point(p) => Value::Float(if name == "x" { p.x() } else { p.y() }),
            _ => return None,
        },
        _ => return None,
    })
}

pub const ATTRIBUTES: &[&str] = &["kind", "crs", "wkt", "x", "y"];
