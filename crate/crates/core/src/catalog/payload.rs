use std::path::Path;

use chrono::NaiveDate;
use geo_types::Geometry;
use serde_json::Value as Json;

use super::{CatalogError, DatasetMetadata, FieldDescriptor, FieldType};
use crate::geometry::{self, Crs};

/// One typed value in a payload row.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    Date(NaiveDate),
    Boolean(bool),
    Geometry(Geometry<f64>),
}

/// Parsed rows of one dataset, typed per its field descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPayload {
    pub columns: Vec<FieldDescriptor>,
    pub rows: Vec<Vec<Cell>>,
    pub crs: Option<Crs>,
}

impl DatasetPayload {
    pub fn new(columns: Vec<FieldDescriptor>, rows: Vec<Vec<Cell>>, crs: Option<Crs>) -> Result<Self, String> {
        if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != columns.len()) {
            return Err(format!("row {i} has arity {} but there are {} columns", rows[i].len(), columns.len()));
        }
        Ok(DatasetPayload { columns, rows, crs })
    }

    pub fn has_geometry(&self) -> bool {
        self.columns.iter().any(|c| c.type_hint == FieldType::Geometry)
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "y" | "ja" => Some(true),
        "false" | "0" | "no" | "n" | "nein" => Some(false),
        _ => None,
    }
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    let day = s.split(['T', ' ']).next().unwrap_or(s);
    NaiveDate::parse_from_str(day, "%Y-%m-%d").ok()
}

/// Converts a textual cell (CSV) to the declared type.
fn cell_from_text(raw: &str, ty: FieldType) -> Option<Cell> {
    let s = raw.trim();
    if s.is_empty() {
        return Some(Cell::Null);
    }
    Some(match ty {
        FieldType::Integer => Cell::Integer(s.parse().ok()?),
        FieldType::Real => Cell::Real(s.parse().ok().filter(|v: &f64| v.is_finite())?),
        FieldType::Text => Cell::Text(raw.to_string()),
        FieldType::Date => Cell::Date(parse_date(s)?),
        FieldType::Boolean => Cell::Boolean(parse_bool(s)?),
        FieldType::Geometry => Cell::Geometry(geometry::from_wkt(s).ok()?),
    })
}

/// Converts a JSON property value (GeoJSON) to the declared type.
fn cell_from_json(v: &Json, ty: FieldType) -> Option<Cell> {
    match (v, ty) {
        (Json::Null, _) => Some(Cell::Null),
        (Json::String(s), _) => cell_from_text(s, ty),
        (Json::Number(n), FieldType::Integer) => n.as_i64().map(Cell::Integer),
        (Json::Number(n), FieldType::Real) => n.as_f64().map(Cell::Real),
        (Json::Number(n), FieldType::Text) => Some(Cell::Text(n.to_string())),
        (Json::Bool(b), FieldType::Boolean) => Some(Cell::Boolean(*b)),
        (Json::Bool(b), FieldType::Text) => Some(Cell::Text(b.to_string())),
        (Json::Number(n), FieldType::Boolean) => match n.as_i64() {
            Some(0) => Some(Cell::Boolean(false)),
            Some(1) => Some(Cell::Boolean(true)),
            _ => None,
        },
        (obj @ Json::Object(_), FieldType::Geometry) => geometry::from_geojson(obj).ok().map(Cell::Geometry),
        _ => None,
    }
}

fn unreadable(id: &str, reason: impl Into<String>) -> CatalogError {
    CatalogError::PayloadUnreadable { id: id.to_string(), reason: reason.into() }
}

fn load_csv(meta: &DatasetMetadata, bytes: &[u8]) -> Result<Vec<Vec<Cell>>, CatalogError> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(bytes);
    let header = reader.headers().map_err(|e| unreadable(&meta.id, e.to_string()))?.clone();
    let positions: Vec<usize> = meta
        .fields
        .iter()
        .map(|f| {
            header
                .iter()
                .position(|h| h.trim() == f.name)
                .ok_or_else(|| unreadable(&meta.id, format!("column `{}` missing from CSV header", f.name)))
        })
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for (row_index, record) in reader.records().enumerate() {
        let record = record.map_err(|e| unreadable(&meta.id, e.to_string()))?;
        let mut row = Vec::with_capacity(meta.fields.len());
        for (f, &pos) in meta.fields.iter().zip(&positions) {
            let raw = record.get(pos).unwrap_or("");
            let cell = cell_from_text(raw, f.type_hint)
                .ok_or_else(|| CatalogError::TypeMismatch { column: f.name.clone(), row_index })?;
            row.push(cell);
        }
        rows.push(row);
    }
    Ok(rows)
}

fn geojson_crs(doc: &Json) -> Option<Crs> {
    doc.pointer("/crs/properties/name").and_then(Json::as_str).map(Crs::parse)
}

fn load_geojson(meta: &DatasetMetadata, bytes: &[u8]) -> Result<(Vec<Vec<Cell>>, Option<Crs>), CatalogError> {
    let doc: Json = serde_json::from_slice(bytes).map_err(|e| unreadable(&meta.id, format!("invalid JSON: {e}")))?;
    if doc.get("type").and_then(Json::as_str) != Some("FeatureCollection") {
        return Err(unreadable(&meta.id, "expected a GeoJSON FeatureCollection"));
    }
    let features = doc
        .get("features")
        .and_then(Json::as_array)
        .ok_or_else(|| unreadable(&meta.id, "FeatureCollection without `features`"))?;
    let geometry_field = meta.geometry_field().map(|f| f.name.clone());
    let mut rows = Vec::with_capacity(features.len());
    for (row_index, feature) in features.iter().enumerate() {
        let props = feature.get("properties").unwrap_or(&Json::Null);
        let mut row = Vec::with_capacity(meta.fields.len());
        for f in &meta.fields {
            let mismatch = || CatalogError::TypeMismatch { column: f.name.clone(), row_index };
            let cell = if Some(&f.name) == geometry_field.as_ref() {
                match feature.get("geometry") {
                    None | Some(Json::Null) => Cell::Null,
                    Some(g) => Cell::Geometry(geometry::from_geojson(g).map_err(|_| mismatch())?),
                }
            } else {
                cell_from_json(props.get(&f.name).unwrap_or(&Json::Null), f.type_hint).ok_or_else(mismatch)?
            };
            row.push(cell);
        }
        rows.push(row);
    }
    Ok((rows, geojson_crs(&doc)))
}

fn read_locator(meta: &DatasetMetadata) -> Result<Vec<u8>, CatalogError> {
    let loc = &meta.payload_locator;
    if loc.starts_with("http://") || loc.starts_with("https://") {
        let resp = reqwest::blocking::get(loc).map_err(|e| unreadable(&meta.id, e.to_string()))?;
        if !resp.status().is_success() {
            return Err(unreadable(&meta.id, format!("HTTP {}", resp.status())));
        }
        return resp.bytes().map(|b| b.to_vec()).map_err(|e| unreadable(&meta.id, e.to_string()));
    }
    std::fs::read(loc).map_err(|e| unreadable(&meta.id, format!("{loc}: {e}")))
}

pub(super) fn load(meta: &DatasetMetadata) -> Result<DatasetPayload, CatalogError> {
    let bytes = read_locator(meta)?;
    load_payload_bytes(meta, &bytes)
}

fn load_payload_bytes(meta: &DatasetMetadata, bytes: &[u8]) -> Result<DatasetPayload, CatalogError> {
    let ext = Path::new(meta.payload_locator.split('?').next().unwrap_or(""))
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let (rows, declared_crs) = match ext.as_str() {
        "csv" => (load_csv(meta, bytes)?, None),
        "geojson" | "json" => load_geojson(meta, bytes)?,
        other => return Err(unreadable(&meta.id, format!("unsupported payload format `.{other}`"))),
    };
    let has_geometry = meta.geometry_field().is_some();
    let crs = declared_crs.or_else(|| meta.crs.as_deref().map(Crs::parse));
    let crs = match crs {
        Some(c) => Some(c),
        None if has_geometry => {
            tracing::warn!(dataset = %meta.id, "payload declares no CRS; assuming {}", geometry::DEFAULT_CRS);
            Some(Crs::wgs84())
        }
        None => None,
    };
    DatasetPayload::new(meta.fields.clone(), rows, crs).map_err(|e| unreadable(&meta.id, e))
}

/// Loads a payload for `meta` from an explicit file, bypassing the catalog.
pub fn load_payload_file(meta: &DatasetMetadata, path: &Path) -> Result<DatasetPayload, CatalogError> {
    let bytes = std::fs::read(path).map_err(|e| unreadable(&meta.id, e.to_string()))?;
    let mut meta = meta.clone();
    meta.payload_locator = path.to_string_lossy().into_owned();
    load_payload_bytes(&meta, &bytes)
}
