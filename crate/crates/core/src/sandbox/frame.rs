//! Tabular values and the `frame` module.

use std::sync::Arc;

use indexmap::IndexMap;

use super::builtins::{bind_args, expect_frame, expect_int, expect_str, str_list};
use super::interp::{dict_insert, norm_index, py_cmp, slice_indices, type_err, value_err, Index, Interp, RResult, RtError};
use super::value::{lock, DictMap, Key, Value};
use super::ErrorKind;
use crate::catalog::{Cell, DatasetPayload};
use crate::geometry::{Crs, Geom};

#[derive(Debug, Clone, Default)]
pub struct Frame {
    pub columns: Vec<Arc<str>>,
    pub rows: Vec<Vec<Value>>,
}

#[derive(Debug)]
pub struct Groups {
    pub column: String,
    pub groups: Vec<(Value, Arc<Frame>)>,
}

pub const FUNCTIONS: &[&str] = &[
    "frame.filter",
    "frame.select",
    "frame.sort",
    "frame.head",
    "frame.unique",
    "frame.join",
    "frame.group_by",
    "frame.agg",
    "frame.from_records",
    "frame.with_column",
];

pub fn cell_value(c: &Cell, crs: &Crs) -> Value {
    match c {
        Cell::Null => Value::None,
        Cell::Integer(i) => Value::Int(*i),
        Cell::Real(f) => Value::Float(*f),
        Cell::Text(s) => Value::str(s),
        Cell::Date(d) => Value::str(d.format("%Y-%m-%d").to_string()),
        Cell::Boolean(b) => Value::Bool(*b),
        Cell::Geometry(g) => Value::Geom(Arc::new(Geom { shape: g.clone(), crs: crs.clone() })),
    }
}

impl Frame {
    pub fn from_payload(p: &DatasetPayload) -> Frame {
        let crs = p.crs.clone().unwrap_or_else(Crs::wgs84);
        Frame {
            columns: p.columns.iter().map(|c| Arc::from(c.name.as_str())).collect(),
            rows: p.rows.iter().map(|r| r.iter().map(|c| cell_value(c, &crs)).collect()).collect(),
        }
    }

    pub fn col(&self, name: &str) -> RResult<usize> {
        self.columns.iter().position(|c| c.as_ref() == name).ok_or_else(|| {
            let known: Vec<&str> = self.columns.iter().map(|c| c.as_ref()).collect();
            RtError::new(ErrorKind::KeyNotFound, format!("no column '{name}'; columns are {known:?}"))
        })
    }

    pub fn row_dict(&self, i: usize) -> Value {
        let mut map = DictMap::new();
        for (c, v) in self.columns.iter().zip(&self.rows[i]) {
            map.insert(Key::Str(c.clone()), (Value::Str(c.clone()), v.clone()));
        }
        Value::dict(map)
    }

    fn with_rows(&self, rows: Vec<Vec<Value>>) -> Value {
        Value::Frame(Arc::new(Frame { columns: self.columns.clone(), rows }))
    }

    pub fn render(&self, n: usize) -> String {
        let cell = |v: &Value| {
            let s = match v {
                Value::Geom(g) => format!("<{}>", g.kind()),
                other => other.to_str(),
            };
            if s.chars().count() > 40 {
                format!("{}...", s.chars().take(37).collect::<String>())
            } else {
                s
            }
        };
        let mut out = self.columns.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" | ");
        for r in self.rows.iter().take(n) {
            out.push('\n');
            out.push_str(&r.iter().map(cell).collect::<Vec<_>>().join(" | "));
        }
        if self.rows.len() > n {
            out.push_str(&format!("\n... ({} rows total)", self.rows.len()));
        } else {
            out.push_str(&format!("\n({} rows)", self.rows.len()));
        }
        out
    }
}

pub fn frame_index(interp: &mut Interp<'_>, f: &Arc<Frame>, idx: &Index) -> RResult<Value> {
    match idx {
        Index::Value(Value::Str(name)) => {
            let c = f.col(name)?;
            interp.tick(f.rows.len() as u64)?;
            Ok(Value::list(f.rows.iter().map(|r| r[c].clone()).collect()))
        }
        Index::Value(v @ (Value::Int(_) | Value::Bool(_))) => Ok(f.row_dict(norm_index(v, f.rows.len(), "frame")?)),
        Index::Value(v @ (Value::List(_) | Value::Tuple(_))) => {
            let cols = str_list(v, "frame selection")?;
            select(interp, f, &cols)
        }
        Index::Value(other) => Err(type_err(format!("frame indices must be str, int or list, not {}", other.type_name()))),
        Index::Slice(a, b, c) => {
            let idx = slice_indices(f.rows.len(), *a, *b, *c);
            interp.tick(idx.len() as u64)?;
            Ok(f.with_rows(idx.into_iter().map(|i| f.rows[i].clone()).collect()))
        }
    }
}

pub fn group_get(g: &Groups, k: &Value) -> RResult<Value> {
    g.groups
        .iter()
        .find(|(key, _)| super::value::py_eq(key, k))
        .map(|(_, f)| Value::Frame(f.clone()))
        .ok_or_else(|| RtError::new(ErrorKind::KeyNotFound, k.repr()))
}

pub fn group_items(g: &Groups) -> Vec<Value> {
    g.groups.iter().map(|(k, f)| Value::tuple(vec![k.clone(), Value::Frame(f.clone())])).collect()
}

fn select(interp: &mut Interp<'_>, f: &Frame, cols: &[String]) -> RResult<Value> {
    let idx: Vec<usize> = cols.iter().map(|c| f.col(c)).collect::<RResult<_>>()?;
    interp.tick(f.rows.len() as u64)?;
    Ok(Value::Frame(Arc::new(Frame {
        columns: idx.iter().map(|&i| f.columns[i].clone()).collect(),
        rows: f.rows.iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect(),
    })))
}

/// Orders values with `None` last; incomparable pairs raise.
fn sort_key_cmp(a: &Value, b: &Value) -> RResult<std::cmp::Ordering> {
    use std::cmp::Ordering;
    match (a, b) {
        (Value::None, Value::None) => Ok(Ordering::Equal),
        (Value::None, _) => Ok(Ordering::Greater),
        (_, Value::None) => Ok(Ordering::Less),
        _ => py_cmp(a, b, "<"),
    }
}

/// Stable sort of `items` by `keys`, propagating the first comparison error.
pub fn sort_by_keys<T>(items: Vec<T>, keys: &[Value], descending: bool) -> RResult<Vec<T>> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut err = None;
    order.sort_by(|&i, &j| match sort_key_cmp(&keys[i], &keys[j]) {
        Ok(o) => {
            if descending && !matches!((&keys[i], &keys[j]), (Value::None, _) | (_, Value::None)) {
                o.reverse()
            } else {
                o
            }
        }
        Err(e) => {
            err.get_or_insert(e);
            std::cmp::Ordering::Equal
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let mut slots: Vec<Option<T>> = items.into_iter().map(Some).collect();
    Ok(order.into_iter().map(|i| slots[i].take().unwrap()).collect())
}

fn number_of(v: &Value, col: &str) -> RResult<Value> {
    match v {
        Value::Int(_) | Value::Float(_) => Ok(v.clone()),
        Value::Bool(b) => Ok(Value::Int(*b as i64)),
        other => Err(type_err(format!("column '{col}' holds non-numeric value {}", other.repr()))),
    }
}

fn aggregate(interp: &mut Interp<'_>, values: &[Value], func: &str, col: &str) -> RResult<Value> {
    let present: Vec<&Value> = values.iter().filter(|v| !matches!(v, Value::None)).collect();
    interp.tick(values.len() as u64)?;
    Ok(match func {
        "count" => Value::Int(present.len() as i64),
        "sum" | "mean" => {
            let mut acc = Value::Int(0);
            for v in &present {
                let n = number_of(v, col)?;
                acc = interp.binop(super::ast::BinOp::Add, &acc, &n)?;
            }
            if func == "sum" {
                acc
            } else if present.is_empty() {
                Value::None
            } else {
                Value::Float(acc.as_f64().unwrap() / present.len() as f64)
            }
        }
        "min" | "max" => {
            let mut best: Option<&Value> = None;
            for v in present {
                best = Some(match best {
                    None => v,
                    Some(b) => {
                        let o = py_cmp(v, b, "<")?;
                        if (func == "min" && o.is_lt()) || (func == "max" && o.is_gt()) {
                            v
                        } else {
                            b
                        }
                    }
                });
            }
            best.cloned().unwrap_or(Value::None)
        }
        other => return Err(value_err(format!("unknown aggregation '{other}'; use count, sum, mean, min or max"))),
    })
}

fn agg_spec(spec: &Value) -> RResult<Vec<(String, String)>> {
    let Value::Dict(d) = spec else {
        return Err(type_err("agg() expects a dict mapping column to function name"));
    };
    let mut out = Vec::new();
    for (k, v) in lock(d).values() {
        let col = match k {
            Value::Str(s) => s.to_string(),
            other => return Err(type_err(format!("agg() column names must be str, not {}", other.type_name()))),
        };
        match v {
            Value::Str(f) => out.push((col, f.to_string())),
            Value::List(_) | Value::Tuple(_) => {
                for f in str_list(v, "agg() functions")? {
                    out.push((col.clone(), f));
                }
            }
            other => return Err(type_err(format!("agg() function must be str or list, not {}", other.type_name()))),
        }
    }
    Ok(out)
}

fn agg_row(interp: &mut Interp<'_>, f: &Frame, spec: &[(String, String)]) -> RResult<Vec<Value>> {
    let mut row = Vec::new();
    for (col, func) in spec {
        let c = f.col(col)?;
        let values: Vec<Value> = f.rows.iter().map(|r| r[c].clone()).collect();
        row.push(aggregate(interp, &values, func, col)?);
    }
    Ok(row)
}

fn joined_columns(left: &Frame, right: &Frame, skip: Option<usize>) -> Vec<Arc<str>> {
    let mut cols = left.columns.clone();
    for (j, c) in right.columns.iter().enumerate() {
        if Some(j) == skip {
            continue;
        }
        if cols.contains(c) {
            cols.push(Arc::from(format!("{c}_right")));
        } else {
            cols.push(c.clone());
        }
    }
    cols
}

pub fn call(interp: &mut Interp<'_>, name: &str, args: Vec<Value>, kwargs: Vec<(String, Value)>) -> RResult<Value> {
    match name {
        "frame.filter" => {
            let [f, pred] = bind_args(name, args, kwargs, &["frame", "predicate"], 2)?;
            let f = expect_frame(&f.unwrap(), name)?;
            let pred = pred.unwrap();
            interp.tick(f.rows.len() as u64)?;
            let mut rows = Vec::new();
            for i in 0..f.rows.len() {
                if interp.call(&pred, vec![f.row_dict(i)], vec![])?.truthy() {
                    rows.push(f.rows[i].clone());
                }
            }
            Ok(f.with_rows(rows))
        }
        "frame.select" => {
            let [f, cols] = bind_args(name, args, kwargs, &["frame", "columns"], 2)?;
            let f = expect_frame(&f.unwrap(), name)?;
            let cols = match cols.unwrap() {
                Value::Str(s) => vec![s.to_string()],
                other => str_list(&other, "select() columns")?,
            };
            select(interp, &f, &cols)
        }
        "frame.sort" => {
            let [f, col, desc] = bind_args(name, args, kwargs, &["frame", "column", "descending"], 2)?;
            let f = expect_frame(&f.unwrap(), name)?;
            let c = f.col(&expect_str(&col.unwrap(), name)?)?;
            let desc = desc.is_some_and(|d| d.truthy());
            let n = f.rows.len() as u64;
            interp.tick(n.max(1) * (64 - n.leading_zeros() as u64).max(1))?;
            let keys: Vec<Value> = f.rows.iter().map(|r| r[c].clone()).collect();
            let rows = sort_by_keys(f.rows.clone(), &keys, desc)?;
            Ok(f.with_rows(rows))
        }
        "frame.head" => {
            let [f, n] = bind_args(name, args, kwargs, &["frame", "n"], 1)?;
            let f = expect_frame(&f.unwrap(), name)?;
            let n = n.map(|n| expect_int(&n, name)).transpose()?.unwrap_or(5).max(0) as usize;
            let rows: Vec<Vec<Value>> = f.rows.iter().take(n).cloned().collect();
            interp.tick(rows.len() as u64)?;
            Ok(f.with_rows(rows))
        }
        "frame.unique" => {
            let [f, col] = bind_args(name, args, kwargs, &["frame", "column"], 2)?;
            let f = expect_frame(&f.unwrap(), name)?;
            let c = f.col(&expect_str(&col.unwrap(), name)?)?;
            interp.tick(f.rows.len() as u64)?;
            let mut seen = DictMap::new();
            for r in &f.rows {
                dict_insert(&mut seen, r[c].clone(), Value::None)?;
            }
            Ok(Value::list(seen.into_values().map(|(k, _)| k).collect()))
        }
        "frame.join" => {
            let [l, r, lk, rk, how] =
                bind_args(name, args, kwargs, &["left", "right", "left_key", "right_key", "how"], 3)?;
            let (l, r) = (expect_frame(&l.unwrap(), name)?, expect_frame(&r.unwrap(), name)?);
            let lk = expect_str(&lk.unwrap(), name)?;
            let rk = match rk {
                Some(v) => expect_str(&v, name)?,
                None => lk.clone(),
            };
            let how = match how {
                Some(v) => expect_str(&v, name)?,
                None => "inner".into(),
            };
            if how != "inner" && how != "left" {
                return Err(value_err(format!("join() how must be 'inner' or 'left', not '{how}'")));
            }
            let (lc, rc) = (l.col(&lk)?, r.col(&rk)?);
            interp.tick((l.rows.len() + r.rows.len()) as u64)?;
            let mut index: IndexMap<Key, Vec<usize>> = IndexMap::new();
            for (j, row) in r.rows.iter().enumerate() {
                if let Some(k) = Key::from_value(&row[rc]) {
                    index.entry(k).or_default().push(j);
                }
            }
            let columns = joined_columns(&l, &r, Some(rc));
            let mut rows = Vec::new();
            for lrow in &l.rows {
                let matches = Key::from_value(&lrow[lc]).and_then(|k| index.get(&k));
                let right_part = |j: usize| r.rows[j].iter().enumerate().filter(|(c, _)| *c != rc).map(|(_, v)| v.clone());
                match matches {
                    Some(js) => {
                        for &j in js {
                            let mut row = lrow.clone();
                            row.extend(right_part(j));
                            rows.push(row);
                        }
                    }
                    None if how == "left" => {
                        let mut row = lrow.clone();
                        row.extend(std::iter::repeat_n(Value::None, r.columns.len() - 1));
                        rows.push(row);
                    }
                    None => {}
                }
                interp.check_len(rows.len())?;
            }
            interp.tick(rows.len() as u64)?;
            Ok(Value::Frame(Arc::new(Frame { columns, rows })))
        }
        "frame.group_by" => {
            let [f, col] = bind_args(name, args, kwargs, &["frame", "column"], 2)?;
            let f = expect_frame(&f.unwrap(), name)?;
            let column = expect_str(&col.unwrap(), name)?;
            let c = f.col(&column)?;
            interp.tick(f.rows.len() as u64)?;
            let mut buckets: IndexMap<Key, (Value, Vec<Vec<Value>>)> = IndexMap::new();
            for r in &f.rows {
                let k = Key::from_value(&r[c])
                    .ok_or_else(|| type_err(format!("unhashable group key {}", r[c].type_name())))?;
                buckets.entry(k).or_insert_with(|| (r[c].clone(), Vec::new())).1.push(r.clone());
            }
            let groups: Vec<(Value, Arc<Frame>)> = buckets
                .into_values()
                .map(|(k, rows)| (k, Arc::new(Frame { columns: f.columns.clone(), rows })))
                .collect();
            let keys: Vec<Value> = groups.iter().map(|(k, _)| k.clone()).collect();
            let groups = sort_by_keys(groups, &keys, false)
                .map_err(|_| type_err("group keys are not mutually comparable"))?;
            Ok(Value::Groups(Arc::new(Groups { column, groups })))
        }
        "frame.agg" => {
            let [g, spec] = bind_args(name, args, kwargs, &["groups", "spec"], 2)?;
            let spec = agg_spec(&spec.unwrap())?;
            let names = spec.iter().map(|(c, f)| Arc::from(format!("{c}_{f}")));
            match g.unwrap() {
                Value::Groups(g) => {
                    let mut columns = vec![Arc::from(g.column.as_str())];
                    columns.extend(names);
                    let mut rows = Vec::new();
                    for (k, f) in &g.groups {
                        let mut row = vec![k.clone()];
                        row.extend(agg_row(interp, f, &spec)?);
                        rows.push(row);
                    }
                    Ok(Value::Frame(Arc::new(Frame { columns, rows })))
                }
                Value::Frame(f) => {
                    let row = agg_row(interp, &f, &spec)?;
                    Ok(Value::Frame(Arc::new(Frame { columns: names.collect(), rows: vec![row] })))
                }
                other => Err(type_err(format!("agg() expects groups or a frame, not {}", other.type_name()))),
            }
        }
        "frame.from_records" => {
            let [records, cols] = bind_args(name, args, kwargs, &["records", "columns"], 1)?;
            let records = interp.iterate(&records.unwrap())?;
            interp.check_len(records.len())?;
            let mut columns: Vec<Arc<str>> = match cols {
                Some(c) => str_list(&c, "from_records() columns")?.into_iter().map(Arc::from).collect(),
                None => Vec::new(),
            };
            let fixed = !columns.is_empty();
            let mut dicts = Vec::new();
            for rec in &records {
                let Value::Dict(d) = rec else {
                    return Err(type_err(format!("from_records() expects dicts, got {}", rec.type_name())));
                };
                let d = lock(d).clone();
                if !fixed {
                    for (k, _) in d.values() {
                        let Value::Str(s) = k else {
                            return Err(type_err("record keys must be str"));
                        };
                        if !columns.contains(s) {
                            columns.push(s.clone());
                        }
                    }
                }
                dicts.push(d);
            }
            let rows = dicts
                .iter()
                .map(|d| {
                    columns
                        .iter()
                        .map(|c| d.get(&Key::Str(c.clone())).map(|(_, v)| v.clone()).unwrap_or(Value::None))
                        .collect()
                })
                .collect();
            Ok(Value::Frame(Arc::new(Frame { columns, rows })))
        }
        "frame.with_column" => {
            let [f, col, values] = bind_args(name, args, kwargs, &["frame", "name", "values"], 3)?;
            let f = expect_frame(&f.unwrap(), name)?;
            let col = expect_str(&col.unwrap(), name)?;
            let values = match values.unwrap() {
                func @ (Value::Function(_) | Value::Builtin(_) | Value::Method(_)) => {
                    let mut out = Vec::with_capacity(f.rows.len());
                    for i in 0..f.rows.len() {
                        out.push(interp.call(&func, vec![f.row_dict(i)], vec![])?);
                    }
                    out
                }
                other => interp.iterate(&other)?,
            };
            if values.len() != f.rows.len() {
                return Err(value_err(format!(
                    "with_column() got {} values for {} rows",
                    values.len(),
                    f.rows.len()
                )));
            }
            let mut out = (*f).clone();
            match out.columns.iter().position(|c| c.as_ref() == col) {
                Some(c) => {
                    for (r, v) in out.rows.iter_mut().zip(values) {
                        r[c] = v;
                    }
                }
                None => {
                    out.columns.push(Arc::from(col.as_str()));
                    for (r, v) in out.rows.iter_mut().zip(values) {
                        r.push(v);
                    }
                }
            }
            Ok(Value::Frame(Arc::new(out)))
        }
        _ => Err(RtError::new(ErrorKind::AttributeMissing, format!("unknown function {name}"))),
    }
}

/// Spatial join of two frames on their first geometry columns.
pub fn overlay(interp: &mut Interp<'_>, a: &Frame, b: &Frame, predicate: &str) -> RResult<Value> {
    let test: fn(&geo_types::Geometry<f64>, &geo_types::Geometry<f64>) -> bool = match predicate {
        "intersects" => crate::geometry::predicate::intersects,
        "contains" => crate::geometry::predicate::contains,
        "within" => crate::geometry::predicate::within,
        other => return Err(value_err(format!("overlay() predicate must be intersects, contains or within, not '{other}'"))),
    };
    let geom_col = |f: &Frame| {
        (0..f.columns.len())
            .find(|&c| f.rows.iter().any(|r| matches!(r[c], Value::Geom(_))))
            .ok_or_else(|| type_err("overlay() needs frames with a geometry column"))
    };
    let (ga, gb) = (geom_col(a)?, geom_col(b)?);
    let columns = joined_columns(a, b, None);
    let mut rows = Vec::new();
    for ra in &a.rows {
        let Value::Geom(x) = &ra[ga] else { continue };
        for rb in &b.rows {
            let Value::Geom(y) = &rb[gb] else { continue };
            x.same_crs(y).map_err(|e| type_err(e.to_string()))?;
            let cost = crate::geometry::vertex_count(&x.shape) + crate::geometry::vertex_count(&y.shape);
            interp.tick(cost as u64)?;
            if test(&x.shape, &y.shape) {
                let mut row = ra.clone();
                row.extend(rb.iter().cloned());
                rows.push(row);
                interp.check_len(rows.len())?;
            }
        }
    }
    Ok(Value::Frame(Arc::new(Frame { columns, rows })))
}
