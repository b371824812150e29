//! Builtin functions, value methods, module tables and the output operations.

use std::sync::Arc;

use serde_json::{json, Map, Value as Json};

use super::artifacts::{validate_artifact, Artifact, ArtifactKind};
use super::ast::BinOp;
use super::format::round_float;
use super::frame::{self, sort_by_keys, Frame};
use super::geolib;
use super::interp::{as_int, dict_insert, norm_index, py_cmp, type_err, value_err, Interp, RResult, RtError};
use super::value::{lock, py_eq, DictMap, Key, Value};
use super::ErrorKind;
use crate::geometry::{self, Geom};

pub const ALLOWED_MODULES: [&str; 3] = ["frame", "geo", "math"];

pub const BUILTIN_NAMES: &[&str] = &[
    "abs",
    "all",
    "any",
    "bool",
    "dict",
    "enumerate",
    "final_answer",
    "final_map",
    "final_plot",
    "final_table",
    "float",
    "int",
    "len",
    "list",
    "max",
    "min",
    "print",
    "range",
    "repr",
    "reversed",
    "round",
    "sorted",
    "str",
    "sum",
    "tuple",
    "zip",
];

pub const MATH_FUNCTIONS: &[&str] = &[
    "math.sqrt",
    "math.floor",
    "math.ceil",
    "math.log",
    "math.log10",
    "math.exp",
    "math.sin",
    "math.cos",
    "math.tan",
    "math.atan2",
    "math.radians",
    "math.degrees",
    "math.isnan",
    "math.fabs",
    "math.hypot",
];

pub const MATH_CONSTANTS: &[&str] = &["pi", "e", "inf", "nan"];

const STR_METHODS: &[&str] = &[
    "lower", "upper", "strip", "lstrip", "rstrip", "split", "join", "replace", "startswith", "endswith", "find",
    "count", "title", "isdigit", "isalpha",
];
const LIST_METHODS: &[&str] =
    &["append", "extend", "insert", "pop", "remove", "index", "count", "sort", "reverse", "copy", "clear"];
const TUPLE_METHODS: &[&str] = &["index", "count"];
const DICT_METHODS: &[&str] = &["get", "keys", "values", "items", "pop", "update", "setdefault", "copy"];
const FRAME_METHODS: &[&str] =
    &["filter", "select", "sort", "head", "unique", "join", "group_by", "with_column", "agg"];
const GROUPS_METHODS: &[&str] = &["agg"];
const FRAME_ATTRIBUTES: &[&str] = &["columns", "shape"];

fn methods_of(v: &Value) -> &'static [&'static str] {
    match v {
        Value::Str(_) => STR_METHODS,
        Value::List(_) => LIST_METHODS,
        Value::Tuple(_) => TUPLE_METHODS,
        Value::Dict(_) => DICT_METHODS,
        Value::Frame(_) => FRAME_METHODS,
        Value::Groups(_) => GROUPS_METHODS,
        _ => &[],
    }
}

fn module_members(m: &str) -> &'static [&'static str] {
    match m {
        "frame" => frame::FUNCTIONS,
        "geo" => geolib::FUNCTIONS,
        "math" => MATH_FUNCTIONS,
        _ => &[],
    }
}

/// Every name reachable from a fresh session: builtins, modules, module
/// members, value methods and readable attributes.
pub fn reachable_names() -> Vec<String> {
    let mut out: Vec<String> = BUILTIN_NAMES.iter().map(|s| s.to_string()).collect();
    for m in ALLOWED_MODULES {
        out.push(m.to_string());
        out.extend(module_members(m).iter().map(|s| s.to_string()));
    }
    out.extend(MATH_CONSTANTS.iter().map(|c| format!("math.{c}")));
    for (ty, methods) in [
        ("str", STR_METHODS),
        ("list", LIST_METHODS),
        ("tuple", TUPLE_METHODS),
        ("dict", DICT_METHODS),
        ("frame", FRAME_METHODS),
        ("groups", GROUPS_METHODS),
        ("frame", FRAME_ATTRIBUTES),
        ("geometry", geolib::ATTRIBUTES),
    ] {
        out.extend(methods.iter().map(|m| format!("{ty}.{m}")));
    }
    out
}

pub fn builtin(name: &str) -> Option<Value> {
    BUILTIN_NAMES.iter().find(|&&b| b == name).map(|&b| Value::Builtin(b))
}

pub fn import_module(module: &str) -> RResult<Value> {
    if let Some(m) = ALLOWED_MODULES.iter().find(|&&m| m == module) {
        return Ok(Value::Module(m));
    }
    let root = module.split('.').next().unwrap_or(module);
    if module.contains('.') && ALLOWED_MODULES.contains(&root) {
        return Err(RtError::new(ErrorKind::SubmoduleAccessDenied, format!("access to '{module}' is not allowed")));
    }
    Err(RtError::new(
        ErrorKind::ImportDenied,
        format!("import of '{module}' is not allowed; available modules are frame, geo and math"),
    ))
}

pub fn module_attr(m: &str, name: &str) -> RResult<Value> {
    let q = format!("{m}.{name}");
    if let Some(f) = module_members(m).iter().find(|&&f| f == q) {
        return Ok(Value::Builtin(f));
    }
    if m == "math" {
        match name {
            "pi" => return Ok(Value::Float(std::f64::consts::PI)),
            "e" => return Ok(Value::Float(std::f64::consts::E)),
            "inf" => return Ok(Value::Float(f64::INFINITY)),
            "nan" => return Ok(Value::Float(f64::NAN)),
            _ => {}
        }
    }
    Err(RtError::new(ErrorKind::SubmoduleAccessDenied, format!("access to '{q}' is not allowed")))
}

pub fn get_attr(v: &Value, name: &str) -> RResult<Value> {
    let missing = || {
        RtError::new(ErrorKind::AttributeMissing, format!("'{}' object has no attribute '{name}'", v.type_name()))
    };
    if let Value::Module(m) = v {
        return module_attr(m, name);
    }
    if name.starts_with("__") {
        return Err(missing());
    }
    match v {
        Value::Geom(g) => return geolib::attr(g, name).ok_or_else(missing),
        Value::Frame(f) if name == "columns" => {
            return Ok(Value::list(f.columns.iter().map(|c| Value::Str(c.clone())).collect()))
        }
        Value::Frame(f) if name == "shape" => {
            return Ok(Value::tuple(vec![Value::Int(f.rows.len() as i64), Value::Int(f.columns.len() as i64)]))
        }
        _ => {}
    }
    match methods_of(v).iter().find(|&&m| m == name) {
        Some(m) => Ok(Value::Method(Arc::new((v.clone(), *m)))),
        None => Err(missing()),
    }
}

// ---- argument helpers ----

pub fn bind_args<const N: usize>(
    fname: &str,
    args: Vec<Value>,
    kwargs: Vec<(String, Value)>,
    params: &[&str; N],
    required: usize,
) -> RResult<[Option<Value>; N]> {
    let short = fname.rsplit('.').next().unwrap_or(fname);
    if args.len() > N {
        return Err(type_err(format!("{short}() takes at most {N} arguments ({} given)", args.len())));
    }
    let mut out: [Option<Value>; N] = std::array::from_fn(|_| None);
    for (i, a) in args.into_iter().enumerate() {
        out[i] = Some(a);
    }
    for (k, v) in kwargs {
        let i = params
            .iter()
            .position(|p| *p == k)
            .ok_or_else(|| type_err(format!("{short}() got an unexpected keyword argument '{k}'")))?;
        if out[i].is_some() {
            return Err(type_err(format!("{short}() got multiple values for argument '{k}'")));
        }
        out[i] = Some(v);
    }
    if let Some(i) = (0..required).find(|&i| out[i].is_none()) {
        return Err(type_err(format!("{short}() missing required argument '{}'", params[i])));
    }
    Ok(out)
}

fn no_kwargs(fname: &str, kwargs: &[(String, Value)]) -> RResult<()> {
    match kwargs.first() {
        Some((k, _)) => Err(type_err(format!("{fname}() got an unexpected keyword argument '{k}'"))),
        None => Ok(()),
    }
}

fn short(fname: &str) -> &str {
    fname.rsplit('.').next().unwrap_or(fname)
}

pub fn expect_frame(v: &Value, fname: &str) -> RResult<Arc<Frame>> {
    match v {
        Value::Frame(f) => Ok(f.clone()),
        other => Err(type_err(format!("{}() expects a frame, not {}", short(fname), other.type_name()))),
    }
}

pub fn expect_str(v: &Value, fname: &str) -> RResult<String> {
    match v {
        Value::Str(s) => Ok(s.to_string()),
        other => Err(type_err(format!("{}() expects a str, not {}", short(fname), other.type_name()))),
    }
}

pub fn expect_int(v: &Value, fname: &str) -> RResult<i64> {
    match v {
        Value::Int(_) | Value::Bool(_) => Ok(as_int(v)),
        other => Err(type_err(format!("{}() expects an int, not {}", short(fname), other.type_name()))),
    }
}

pub fn expect_f64(v: &Value, fname: &str) -> RResult<f64> {
    v.as_f64().ok_or_else(|| type_err(format!("{}() expects a number, not {}", short(fname), v.type_name())))
}

pub fn expect_geom(v: &Value, fname: &str) -> RResult<Arc<Geom>> {
    match v {
        Value::Geom(g) => Ok(g.clone()),
        other => Err(type_err(format!("{}() expects a geometry, not {}", short(fname), other.type_name()))),
    }
}

pub fn str_list(v: &Value, what: &str) -> RResult<Vec<String>> {
    let items = match v {
        Value::List(l) => lock(l).clone(),
        Value::Tuple(t) => t.as_ref().clone(),
        other => return Err(type_err(format!("{what} must be a list of str, not {}", other.type_name()))),
    };
    items
        .into_iter()
        .map(|x| match x {
            Value::Str(s) => Ok(s.to_string()),
            other => Err(type_err(format!("{what} must be a list of str, found {}", other.type_name()))),
        })
        .collect()
}

fn one_arg(fname: &str, args: Vec<Value>, kwargs: &[(String, Value)]) -> RResult<Value> {
    no_kwargs(fname, kwargs)?;
    let n = args.len();
    let mut it = args.into_iter();
    match (it.next(), n) {
        (Some(v), 1) => Ok(v),
        _ => Err(type_err(format!("{fname}() takes exactly one argument ({n} given)"))),
    }
}

fn len_of(v: &Value) -> RResult<i64> {
    Ok(match v {
        Value::Str(s) => s.chars().count() as i64,
        Value::List(l) => lock(l).len() as i64,
        Value::Tuple(t) => t.len() as i64,
        Value::Dict(d) => lock(d).len() as i64,
        Value::Range { .. } => super::value::range_len(v),
        Value::Frame(f) => f.rows.len() as i64,
        Value::Groups(g) => g.groups.len() as i64,
        other => return Err(type_err(format!("object of type '{}' has no len()", other.type_name()))),
    })
}

fn float_to_int(f: f64) -> RResult<i64> {
    if f.is_nan() {
        return Err(value_err("cannot convert float NaN to integer"));
    }
    if !f.is_finite() || f >= 9.223_372_036_854_775_807e18 || f < -9.223_372_036_854_775_808e18 {
        return Err(RtError::new(ErrorKind::IntegerOverflow, "float is too large to convert to integer"));
    }
    Ok(f.trunc() as i64)
}

/// Applies `key` (when given) to each item.
fn keys_of(interp: &mut Interp<'_>, items: &[Value], key: &Option<Value>) -> RResult<Vec<Value>> {
    match key {
        None | Some(Value::None) => Ok(items.to_vec()),
        Some(f) => items.iter().map(|x| interp.call(f, vec![x.clone()], vec![])).collect(),
    }
}

fn min_max(interp: &mut Interp<'_>, name: &str, args: Vec<Value>, kwargs: Vec<(String, Value)>) -> RResult<Value> {
    let mut key = None;
    let mut default = None;
    for (k, v) in kwargs {
        match k.as_str() {
            "key" => key = Some(v),
            "default" => default = Some(v),
            _ => return Err(type_err(format!("{name}() got an unexpected keyword argument '{k}'"))),
        }
    }
    let items = match args.len() {
        0 => return Err(type_err(format!("{name}() expected at least 1 argument, got 0"))),
        1 => interp.iterate(&args[0])?,
        _ => args,
    };
    if items.is_empty() {
        return default.ok_or_else(|| value_err(format!("{name}() arg is an empty sequence")));
    }
    let keys = keys_of(interp, &items, &key)?;
    let mut best = 0;
    for i in 1..items.len() {
        let o = py_cmp(&keys[i], &keys[best], if name == "min" { "<" } else { ">" })?;
        if (name == "min" && o.is_lt()) || (name == "max" && o.is_gt()) {
            best = i;
        }
    }
    Ok(items[best].clone())
}

fn round_half_even_int(i: i64, ndigits: i64) -> RResult<i64> {
    if ndigits >= 0 {
        return Ok(i);
    }
    if ndigits < -18 {
        return Ok(0);
    }
    let p = 10i128.pow((-ndigits) as u32);
    let v = i as i128;
    let q = v.div_euclid(p);
    let r = v.rem_euclid(p);
    let q = match (2 * r).cmp(&p) {
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal if q % 2 != 0 => q + 1,
        _ => q,
    };
    i64::try_from(q * p).map_err(|_| RtError::new(ErrorKind::IntegerOverflow, "integer result does not fit in 64 bits"))
}

fn parse_int(s: &str) -> Option<i64> {
    let t = s.trim();
    if t.is_empty() || t.starts_with('_') || t.ends_with('_') || t.contains("__") {
        return None;
    }
    t.replace('_', "").parse().ok()
}

fn parse_float(s: &str) -> Option<f64> {
    let t = s.trim();
    let lower = t.to_ascii_lowercase();
    let body = lower.trim_start_matches(['+', '-']);
    if !matches!(body, "inf" | "infinity" | "nan") && !body.chars().all(|c| c.is_ascii_digit() || ".e+-_".contains(c)) {
        return None;
    }
    t.replace('_', "").parse().ok()
}

pub fn call_builtin(interp: &mut Interp<'_>, name: &str, args: Vec<Value>, kwargs: Vec<(String, Value)>) -> RResult<Value> {
    if name.starts_with("frame.") {
        return frame::call(interp, name, args, kwargs);
    }
    if name.starts_with("geo.") {
        return geolib::call(interp, name, args, kwargs);
    }
    if name.starts_with("math.") {
        return call_math(name, args, kwargs);
    }
    match name {
        "print" => {
            let mut sep = " ".to_string();
            let mut end = "\n".to_string();
            for (k, v) in kwargs {
                let s = match &v {
                    Value::None => None,
                    Value::Str(s) => Some(s.to_string()),
                    other => return Err(type_err(format!("print() {k} must be None or a string, not {}", other.type_name()))),
                };
                match k.as_str() {
                    "sep" => sep = s.unwrap_or_else(|| " ".into()),
                    "end" => end = s.unwrap_or_else(|| "\n".into()),
                    _ => return Err(type_err(format!("print() got an unexpected keyword argument '{k}'"))),
                }
            }
            let parts: Vec<String> = args.iter().map(|a| a.to_str()).collect();
            let line = parts.join(&sep) + &end;
            interp.tick(line.len() as u64 / 64)?;
            interp.write_output(&line);
            Ok(Value::None)
        }
        "len" => Ok(Value::Int(len_of(&one_arg(name, args, &kwargs)?)?)),
        "repr" => Ok(Value::str(one_arg(name, args, &kwargs)?.repr())),
        "str" => {
            if args.is_empty() && kwargs.is_empty() {
                return Ok(Value::str(""));
            }
            Ok(Value::str(one_arg(name, args, &kwargs)?.to_str()))
        }
        "bool" => {
            if args.is_empty() && kwargs.is_empty() {
                return Ok(Value::Bool(false));
            }
            Ok(Value::Bool(one_arg(name, args, &kwargs)?.truthy()))
        }
        "int" => {
            if args.is_empty() && kwargs.is_empty() {
                return Ok(Value::Int(0));
            }
            match one_arg(name, args, &kwargs)? {
                v @ (Value::Int(_) | Value::Bool(_)) => Ok(Value::Int(as_int(&v))),
                Value::Float(f) => Ok(Value::Int(float_to_int(f)?)),
                Value::Str(s) => parse_int(&s)
                    .map(Value::Int)
                    .ok_or_else(|| value_err(format!("invalid literal for int() with base 10: {}", Value::Str(s).repr()))),
                other => Err(type_err(format!("int() argument must be a string or a number, not '{}'", other.type_name()))),
            }
        }
        "float" => {
            if args.is_empty() && kwargs.is_empty() {
                return Ok(Value::Float(0.0));
            }
            match one_arg(name, args, &kwargs)? {
                v @ (Value::Int(_) | Value::Bool(_) | Value::Float(_)) => Ok(Value::Float(v.as_f64().unwrap())),
                Value::Str(s) => parse_float(&s)
                    .map(Value::Float)
                    .ok_or_else(|| value_err(format!("could not convert string to float: {}", Value::Str(s).repr()))),
                other => Err(type_err(format!("float() argument must be a string or a number, not '{}'", other.type_name()))),
            }
        }
        "abs" => match one_arg(name, args, &kwargs)? {
            v @ (Value::Int(_) | Value::Bool(_)) => as_int(&v)
                .checked_abs()
                .map(Value::Int)
                .ok_or_else(|| RtError::new(ErrorKind::IntegerOverflow, "integer result does not fit in 64 bits")),
            Value::Float(f) => Ok(Value::Float(f.abs())),
            other => Err(type_err(format!("bad operand type for abs(): '{}'", other.type_name()))),
        },
        "round" => {
            let [x, nd] = bind_args(name, args, kwargs, &["number", "ndigits"], 1)?;
            let nd = match nd {
                None | Some(Value::None) => None,
                Some(v) => Some(expect_int(&v, name)?),
            };
            match (x.unwrap(), nd) {
                (v @ (Value::Int(_) | Value::Bool(_)), nd) => Ok(Value::Int(round_half_even_int(as_int(&v), nd.unwrap_or(0))?)),
                (Value::Float(f), None) => Ok(Value::Int(float_to_int(f.round_ties_even())?)),
                (Value::Float(f), Some(n)) => Ok(Value::Float(round_float(f, n))),
                (other, _) => Err(type_err(format!("type {} doesn't define __round__ method", other.type_name()))),
            }
        }
        "range" => {
            no_kwargs(name, &kwargs)?;
            let ints: Vec<i64> = args.iter().map(|a| expect_int(a, name)).collect::<RResult<_>>()?;
            let (start, stop, step) = match ints.as_slice() {
                [stop] => (0, *stop, 1),
                [start, stop] => (*start, *stop, 1),
                [start, stop, step] => (*start, *stop, *step),
                _ => return Err(type_err(format!("range expected 1 to 3 arguments, got {}", ints.len()))),
            };
            if step == 0 {
                return Err(value_err("range() arg 3 must not be zero"));
            }
            Ok(Value::Range { start, stop, step })
        }
        "list" | "tuple" => {
            no_kwargs(name, &kwargs)?;
            let items = match args.len() {
                0 => Vec::new(),
                1 => interp.iterate(&args[0])?,
                n => return Err(type_err(format!("{name}() takes at most 1 argument ({n} given)"))),
            };
            interp.check_len(items.len())?;
            Ok(if name == "list" { Value::list(items) } else { Value::tuple(items) })
        }
        "dict" => {
            let mut map = DictMap::new();
            match args.len() {
                0 => {}
                1 => match &args[0] {
                    Value::Dict(d) => map = lock(d).clone(),
                    other => {
                        for pair in interp.iterate(other)? {
                            let kv = interp.iterate(&pair)?;
                            if kv.len() != 2 {
                                return Err(value_err("dictionary update sequence element must have length 2"));
                            }
                            let mut kv = kv.into_iter();
                            dict_insert(&mut map, kv.next().unwrap(), kv.next().unwrap())?;
                        }
                    }
                },
                n => return Err(type_err(format!("dict expected at most 1 argument, got {n}"))),
            }
            for (k, v) in kwargs {
                dict_insert(&mut map, Value::str(k), v)?;
            }
            Ok(Value::dict(map))
        }
        "enumerate" => {
            let [it, start] = bind_args(name, args, kwargs, &["iterable", "start"], 1)?;
            let start = start.map(|s| expect_int(&s, name)).transpose()?.unwrap_or(0);
            let items = interp.iterate(&it.unwrap())?;
            Ok(Value::list(
                items.into_iter().enumerate().map(|(i, x)| Value::tuple(vec![Value::Int(start + i as i64), x])).collect(),
            ))
        }
        "zip" => {
            no_kwargs(name, &kwargs)?;
            let seqs: Vec<Vec<Value>> = args.iter().map(|a| interp.iterate(a)).collect::<RResult<_>>()?;
            let n = seqs.iter().map(|s| s.len()).min().unwrap_or(0);
            Ok(Value::list((0..n).map(|i| Value::tuple(seqs.iter().map(|s| s[i].clone()).collect())).collect()))
        }
        "reversed" => {
            let mut items = interp.iterate(&one_arg(name, args, &kwargs)?)?;
            items.reverse();
            Ok(Value::list(items))
        }
        "sorted" => {
            let [it, key, reverse] = bind_args(name, args, kwargs, &["iterable", "key", "reverse"], 1)?;
            let items = interp.iterate(&it.unwrap())?;
            let n = items.len() as u64;
            interp.tick(n * (64 - n.leading_zeros() as u64).max(1))?;
            let keys = keys_of(interp, &items, &key)?;
            strict_comparable(&keys)?;
            let desc = reverse.is_some_and(|r| r.truthy());
            Ok(Value::list(sort_by_keys(items, &keys, desc)?))
        }
        "sum" => {
            let [it, start] = bind_args(name, args, kwargs, &["iterable", "start"], 1)?;
            let items = interp.iterate(&it.unwrap())?;
            let mut acc = start.unwrap_or(Value::Int(0));
            if matches!(acc, Value::Str(_)) {
                return Err(type_err("sum() can't sum strings; use ''.join(seq) instead"));
            }
            for x in &items {
                acc = interp.binop(BinOp::Add, &acc, x)?;
            }
            Ok(acc)
        }
        "min" | "max" => min_max(interp, name, args, kwargs),
        "any" | "all" => {
            let items = interp.iterate(&one_arg(name, args, &kwargs)?)?;
            Ok(Value::Bool(if name == "any" {
                items.iter().any(|x| x.truthy())
            } else {
                items.iter().all(|x| x.truthy())
            }))
        }
        "final_answer" => final_answer(interp, args, kwargs),
        "final_table" => {
            let [data, title] = bind_args(name, args, kwargs, &["data", "title"], 1)?;
            let payload = table_payload(interp, &data.unwrap(), title)?;
            push_artifact(interp, ArtifactKind::Table, payload)
        }
        "final_plot" => {
            let [data, x, y, mark, series, title] =
                bind_args(name, args, kwargs, &["data", "x", "y", "mark", "series", "title"], 3)?;
            let frame = as_frame(interp, &data.unwrap())?;
            let mut spec = Map::new();
            let mark = match mark {
                Some(m) => expect_str(&m, name)?,
                None => "bar".into(),
            };
            spec.insert("mark".into(), json!(mark));
            if let Some(t) = title.filter(|t| !matches!(t, Value::None)) {
                spec.insert("title".into(), json!(expect_str(&t, name)?));
            }
            spec.insert("x".into(), json!({"field": expect_str(&x.unwrap(), name)?}));
            spec.insert("y".into(), json!({"field": expect_str(&y.unwrap(), name)?}));
            if let Some(s) = series.filter(|s| !matches!(s, Value::None)) {
                spec.insert("series".into(), json!({"field": expect_str(&s, name)?}));
            }
            let records: Vec<Json> = frame
                .rows
                .iter()
                .map(|r| {
                    let mut o = Map::new();
                    for (c, v) in frame.columns.iter().zip(r) {
                        if !matches!(v, Value::Geom(_)) {
                            o.insert(c.to_string(), cell_json(v));
                        }
                    }
                    Json::Object(o)
                })
                .collect();
            interp.tick(records.len() as u64)?;
            spec.insert("data".into(), Json::Array(records));
            push_artifact(interp, ArtifactKind::PlotSpec, Json::Object(spec))
        }
        "final_map" => {
            let mut title = None;
            let mut base = "osm-standard".to_string();
            for (k, v) in kwargs {
                match k.as_str() {
                    "title" => title = Some(expect_str(&v, name)?),
                    "base_map" => base = expect_str(&v, name)?,
                    _ => return Err(type_err(format!("final_map() got an unexpected keyword argument '{k}'"))),
                }
            }
            if args.is_empty() {
                return Err(RtError::new(ErrorKind::InvalidFinalAnswer, "final_map() needs at least one layer"));
            }
            let mut layers = Vec::new();
            for (i, a) in args.iter().enumerate() {
                layers.push(map_layer(interp, a, i)?);
            }
            let mut spec = Map::new();
            spec.insert("base_map".into(), json!(base));
            if let Some(t) = title {
                spec.insert("title".into(), json!(t));
            }
            spec.insert("layers".into(), Json::Array(layers));
            push_artifact(interp, ArtifactKind::MapSpec, Json::Object(spec))
        }
        _ => Err(RtError::new(ErrorKind::NameUndefined, format!("name '{name}' is not defined"))),
    }
}

/// Python raises when sorting mixed incomparable keys such as `None` and
/// numbers; mirror that instead of silently ordering them.
fn strict_comparable(keys: &[Value]) -> RResult<()> {
    if keys.iter().any(|k| matches!(k, Value::None)) && keys.iter().any(|k| !matches!(k, Value::None)) {
        let other = keys.iter().find(|k| !matches!(k, Value::None)).unwrap();
        return Err(type_err(format!("'<' not supported between instances of 'NoneType' and '{}'", other.type_name())));
    }
    Ok(())
}

fn call_math(name: &str, args: Vec<Value>, kwargs: Vec<(String, Value)>) -> RResult<Value> {
    no_kwargs(short(name), &kwargs)?;
    let nums: Vec<f64> = args.iter().map(|a| expect_f64(a, name)).collect::<RResult<_>>()?;
    let arity = match name {
        "math.atan2" | "math.hypot" => 2,
        "math.log" => nums.len().clamp(1, 2),
        _ => 1,
    };
    if nums.len() != arity {
        return Err(type_err(format!("{}() takes {arity} argument(s) ({} given)", short(name), nums.len())));
    }
    let domain = || value_err("math domain error");
    let x = nums[0];
    let r = match name {
        "math.sqrt" => {
            if x < 0.0 {
                return Err(domain());
            }
            x.sqrt()
        }
        "math.floor" | "math.ceil" => {
            if let Value::Int(i) = args[0] {
                return Ok(Value::Int(i));
            }
            let f = if name == "math.floor" { x.floor() } else { x.ceil() };
            return Ok(Value::Int(float_to_int(f)?));
        }
        "math.log" | "math.log10" => {
            if x <= 0.0 {
                return Err(domain());
            }
            match (name, nums.get(1)) {
                ("math.log10", _) => x.log10(),
                (_, Some(&b)) => {
                    if b <= 0.0 || b == 1.0 {
                        return Err(domain());
                    }
                    x.ln() / b.ln()
                }
                _ => x.ln(),
            }
        }
        "math.exp" => {
            let r = x.exp();
            if r.is_infinite() && x.is_finite() {
                return Err(value_err("math range error"));
            }
            r
        }
        "math.sin" => x.sin(),
        "math.cos" => x.cos(),
        "math.tan" => x.tan(),
        "math.atan2" => x.atan2(nums[1]),
        "math.hypot" => x.hypot(nums[1]),
        "math.radians" => x.to_radians(),
        "math.degrees" => x.to_degrees(),
        "math.fabs" => x.abs(),
        "math.isnan" => return Ok(Value::Bool(x.is_nan())),
        _ => return Err(RtError::new(ErrorKind::AttributeMissing, format!("unknown function {name}"))),
    };
    Ok(Value::Float(r))
}

pub fn call_method(
    interp: &mut Interp<'_>,
    recv: &Value,
    name: &str,
    args: Vec<Value>,
    kwargs: Vec<(String, Value)>,
) -> RResult<Value> {
    match recv {
        Value::Frame(_) | Value::Groups(_) => {
            let mut all = vec![recv.clone()];
            all.extend(args);
            frame::call(interp, &format!("frame.{name}"), all, kwargs)
        }
        Value::Str(s) => str_method(interp, s, name, args, kwargs),
        Value::List(l) => list_method(interp, recv, l, name, args, kwargs),
        Value::Tuple(t) => seq_method(interp, t, name, args, kwargs),
        Value::Dict(d) => dict_method(interp, d, name, args, kwargs),
        other => Err(RtError::new(
            ErrorKind::AttributeMissing,
            format!("'{}' object has no attribute '{name}'", other.type_name()),
        )),
    }
}

fn str_method(interp: &mut Interp<'_>, s: &str, name: &str, args: Vec<Value>, kwargs: Vec<(String, Value)>) -> RResult<Value> {
    interp.tick(s.len() as u64 / 64)?;
    let opt_str = |v: &Option<Value>| -> RResult<Option<String>> {
        match v {
            None | Some(Value::None) => Ok(None),
            Some(x) => expect_str(x, name).map(Some),
        }
    };
    Ok(match name {
        "lower" | "upper" | "title" | "isdigit" | "isalpha" => {
            no_kwargs(name, &kwargs)?;
            if !args.is_empty() {
                return Err(type_err(format!("{name}() takes no arguments")));
            }
            match name {
                "lower" => Value::str(s.to_lowercase()),
                "upper" => Value::str(s.to_uppercase()),
                "isdigit" => Value::Bool(!s.is_empty() && s.chars().all(|c| c.is_ascii_digit())),
                "isalpha" => Value::Bool(!s.is_empty() && s.chars().all(char::is_alphabetic)),
                _ => {
                    let mut out = String::with_capacity(s.len());
                    let mut prev_cased = false;
                    for c in s.chars() {
                        if prev_cased {
                            out.extend(c.to_lowercase());
                        } else {
                            out.extend(c.to_uppercase());
                        }
                        prev_cased = c.is_alphabetic();
                    }
                    Value::str(out)
                }
            }
        }
        "strip" | "lstrip" | "rstrip" => {
            let [chars] = bind_args(name, args, kwargs, &["chars"], 0)?;
            let chars = opt_str(&chars)?;
            let pat = |c: char| match &chars {
                Some(cs) => cs.contains(c),
                None => c.is_whitespace(),
            };
            Value::str(match name {
                "strip" => s.trim_matches(pat),
                "lstrip" => s.trim_start_matches(pat),
                _ => s.trim_end_matches(pat),
            })
        }
        "split" => {
            let [sep, maxsplit] = bind_args(name, args, kwargs, &["sep", "maxsplit"], 0)?;
            let sep = opt_str(&sep)?;
            let max = maxsplit.map(|m| expect_int(&m, name)).transpose()?.unwrap_or(-1);
            let parts: Vec<Value> = match sep {
                Some(p) if p.is_empty() => return Err(value_err("empty separator")),
                Some(p) => {
                    if max < 0 {
                        s.split(p.as_str()).map(Value::str).collect()
                    } else {
                        s.splitn(max as usize + 1, p.as_str()).map(Value::str).collect()
                    }
                }
                None => {
                    let mut out = Vec::new();
                    let mut rest = s.trim_start();
                    while !rest.is_empty() {
                        if max >= 0 && out.len() as i64 == max {
                            out.push(Value::str(rest.trim_end()));
                            break;
                        }
                        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
                        out.push(Value::str(&rest[..end]));
                        rest = rest[end..].trim_start();
                    }
                    out
                }
            };
            interp.check_len(parts.len())?;
            Value::list(parts)
        }
        "join" => {
            let items = interp.iterate(&one_arg(name, args, &kwargs)?)?;
            let strs: Vec<String> = items
                .iter()
                .map(|x| match x {
                    Value::Str(t) => Ok(t.to_string()),
                    other => Err(type_err(format!("sequence item: expected str instance, {} found", other.type_name()))),
                })
                .collect::<RResult<_>>()?;
            let out = strs.join(s);
            interp.check_len(out.len())?;
            Value::str(out)
        }
        "replace" => {
            let [old, new, count] = bind_args(name, args, kwargs, &["old", "new", "count"], 2)?;
            let (old, new) = (expect_str(&old.unwrap(), name)?, expect_str(&new.unwrap(), name)?);
            let count = count.map(|c| expect_int(&c, name)).transpose()?.unwrap_or(-1);
            let out = if count < 0 { s.replace(&old, &new) } else { s.replacen(&old, &new, count as usize) };
            interp.check_len(out.len())?;
            Value::str(out)
        }
        "startswith" | "endswith" => {
            let arg = one_arg(name, args, &kwargs)?;
            let prefixes = match &arg {
                Value::Tuple(_) => str_list(&arg, name)?,
                other => vec![expect_str(other, name)?],
            };
            Value::Bool(prefixes.iter().any(|p| if name == "startswith" { s.starts_with(p.as_str()) } else { s.ends_with(p.as_str()) }))
        }
        "find" => {
            let sub = expect_str(&one_arg(name, args, &kwargs)?, name)?;
            Value::Int(s.find(&sub).map_or(-1, |b| s[..b].chars().count() as i64))
        }
        "count" => {
            let sub = expect_str(&one_arg(name, args, &kwargs)?, name)?;
            Value::Int(if sub.is_empty() { s.chars().count() as i64 + 1 } else { s.matches(sub.as_str()).count() as i64 })
        }
        _ => return Err(RtError::new(ErrorKind::AttributeMissing, format!("'str' object has no attribute '{name}'"))),
    })
}

fn seq_method(interp: &mut Interp<'_>, items: &[Value], name: &str, args: Vec<Value>, kwargs: Vec<(String, Value)>) -> RResult<Value> {
    let x = one_arg(name, args, &kwargs)?;
    interp.tick(items.len() as u64)?;
    match name {
        "count" => Ok(Value::Int(items.iter().filter(|y| py_eq(y, &x)).count() as i64)),
        "index" => items
            .iter()
            .position(|y| py_eq(y, &x))
            .map(|i| Value::Int(i as i64))
            .ok_or_else(|| value_err(format!("{} is not in sequence", x.repr()))),
        _ => Err(RtError::new(ErrorKind::AttributeMissing, format!("no attribute '{name}'"))),
    }
}

fn list_method(
    interp: &mut Interp<'_>,
    recv: &Value,
    l: &super::value::List,
    name: &str,
    args: Vec<Value>,
    kwargs: Vec<(String, Value)>,
) -> RResult<Value> {
    match name {
        "append" => {
            let x = one_arg(name, args, &kwargs)?;
            let n = lock(l).len() + 1;
            interp.check_len(n)?;
            lock(l).push(x);
            Ok(Value::None)
        }
        "extend" => {
            let items = interp.iterate(&one_arg(name, args, &kwargs)?)?;
            let n = lock(l).len() + items.len();
            interp.check_len(n)?;
            lock(l).extend(items);
            Ok(Value::None)
        }
        "insert" => {
            no_kwargs(name, &kwargs)?;
            let [i, x]: [Value; 2] = args.try_into().map_err(|_| type_err("insert expected 2 arguments"))?;
            let i = expect_int(&i, name)?;
            let mut v = lock(l);
            let len = v.len() as i64;
            let k = if i < 0 { (i + len).max(0) } else { i.min(len) } as usize;
            interp.tick(v.len() as u64)?;
            v.insert(k, x);
            let n = v.len();
            drop(v);
            interp.check_len(n)?;
            Ok(Value::None)
        }
        "pop" => {
            no_kwargs(name, &kwargs)?;
            let mut v = lock(l);
            if v.is_empty() {
                return Err(RtError::new(ErrorKind::IndexOutOfRange, "pop from empty list"));
            }
            let k = match args.first() {
                Some(i) => norm_index(i, v.len(), "pop")?,
                None => v.len() - 1,
            };
            Ok(v.remove(k))
        }
        "remove" => {
            let x = one_arg(name, args, &kwargs)?;
            let mut v = lock(l);
            match v.iter().position(|y| py_eq(y, &x)) {
                Some(i) => {
                    v.remove(i);
                    Ok(Value::None)
                }
                None => Err(value_err("list.remove(x): x not in list")),
            }
        }
        "index" | "count" => {
            let items = lock(l).clone();
            seq_method(interp, &items, name, args, kwargs)
        }
        "sort" => {
            if !args.is_empty() {
                return Err(type_err("sort() takes no positional arguments"));
            }
            let [key, reverse] = bind_args(name, args, kwargs, &["key", "reverse"], 0)?;
            let items = lock(l).clone();
            let n = items.len() as u64;
            interp.tick(n * (64 - n.leading_zeros() as u64).max(1))?;
            let keys = keys_of(interp, &items, &key)?;
            strict_comparable(&keys)?;
            let sorted = sort_by_keys(items, &keys, reverse.is_some_and(|r| r.truthy()))?;
            *lock(l) = sorted;
            Ok(Value::None)
        }
        "reverse" => {
            no_kwargs(name, &kwargs)?;
            lock(l).reverse();
            Ok(Value::None)
        }
        "copy" => {
            let items = lock(l).clone();
            interp.tick(items.len() as u64)?;
            Ok(Value::list(items))
        }
        "clear" => {
            lock(l).clear();
            Ok(Value::None)
        }
        _ => Err(RtError::new(
            ErrorKind::AttributeMissing,
            format!("'{}' object has no attribute '{name}'", recv.type_name()),
        )),
    }
}

fn dict_method(
    interp: &mut Interp<'_>,
    d: &super::value::Dict,
    name: &str,
    args: Vec<Value>,
    kwargs: Vec<(String, Value)>,
) -> RResult<Value> {
    let key_of = |v: &Value| Key::from_value(v).ok_or_else(|| type_err(format!("unhashable type: '{}'", v.type_name())));
    match name {
        "get" => {
            let [k, default] = bind_args(name, args, kwargs, &["key", "default"], 1)?;
            let k = key_of(&k.unwrap())?;
            Ok(lock(d).get(&k).map(|(_, v)| v.clone()).unwrap_or_else(|| default.unwrap_or(Value::None)))
        }
        "keys" | "values" | "items" => {
            no_kwargs(name, &kwargs)?;
            let m = lock(d).clone();
            interp.tick(m.len() as u64)?;
            Ok(Value::list(
                m.into_values()
                    .map(|(k, v)| match name {
                        "keys" => k,
                        "values" => v,
                        _ => Value::tuple(vec![k, v]),
                    })
                    .collect(),
            ))
        }
        "pop" => {
            let [k, default] = bind_args(name, args, kwargs, &["key", "default"], 1)?;
            let kv = k.unwrap();
            let key = key_of(&kv)?;
            match lock(d).shift_remove(&key) {
                Some((_, v)) => Ok(v),
                None => default.ok_or_else(|| RtError::new(ErrorKind::KeyNotFound, kv.repr())),
            }
        }
        "setdefault" => {
            let [k, default] = bind_args(name, args, kwargs, &["key", "default"], 1)?;
            let kv = k.unwrap();
            let key = key_of(&kv)?;
            let mut m = lock(d);
            Ok(m.entry(key).or_insert((kv, default.unwrap_or(Value::None))).1.clone())
        }
        "update" => {
            let mut pairs = Vec::new();
            for a in args {
                match &a {
                    Value::Dict(o) => pairs.extend(lock(o).values().cloned()),
                    other => {
                        for p in interp.iterate(other)? {
                            let kv = interp.iterate(&p)?;
                            if kv.len() != 2 {
                                return Err(value_err("dictionary update sequence element must have length 2"));
                            }
                            pairs.push((kv[0].clone(), kv[1].clone()));
                        }
                    }
                }
            }
            pairs.extend(kwargs.into_iter().map(|(k, v)| (Value::str(k), v)));
            interp.tick(pairs.len() as u64)?;
            let mut m = lock(d);
            for (k, v) in pairs {
                dict_insert(&mut m, k, v)?;
            }
            let n = m.len();
            drop(m);
            interp.check_len(n)?;
            Ok(Value::None)
        }
        "copy" => {
            let m = lock(d).clone();
            interp.tick(m.len() as u64)?;
            Ok(Value::dict(m))
        }
        _ => Err(RtError::new(ErrorKind::AttributeMissing, format!("'dict' object has no attribute '{name}'"))),
    }
}

// ---- output operations ----

fn push_artifact(interp: &mut Interp<'_>, kind: ArtifactKind, payload: Json) -> RResult<Value> {
    let a = Artifact::new(kind, payload).map_err(|e| RtError::new(ErrorKind::InvalidFinalAnswer, e))?;
    interp.artifacts.push(a);
    Ok(Value::None)
}

/// Scalar JSON rendering of a cell; geometries become WKT.
fn cell_json(v: &Value) -> Json {
    match v {
        Value::None => Json::Null,
        Value::Bool(b) => json!(b),
        Value::Int(i) => json!(i),
        Value::Float(f) if f.is_finite() => json!(f),
        Value::Float(_) => Json::Null,
        Value::Str(s) => json!(s.as_ref()),
        Value::Geom(g) => json!(g.to_wkt()),
        other => json!(other.to_str()),
    }
}

/// Frames pass through; lists of dicts become frames.
fn as_frame(interp: &mut Interp<'_>, v: &Value) -> RResult<Arc<Frame>> {
    match v {
        Value::Frame(f) => Ok(f.clone()),
        Value::List(_) | Value::Tuple(_) => match frame::call(interp, "frame.from_records", vec![v.clone()], vec![])? {
            Value::Frame(f) => Ok(f),
            _ => unreachable!(),
        },
        other => Err(type_err(format!("expected a frame or a list of dicts, not {}", other.type_name()))),
    }
}

fn table_payload(interp: &mut Interp<'_>, data: &Value, title: Option<Value>) -> RResult<Json> {
    let f = as_frame(interp, data)?;
    interp.tick(f.rows.len() as u64)?;
    let mut t = Map::new();
    if let Some(title) = title.filter(|t| !matches!(t, Value::None)) {
        t.insert("title".into(), json!(expect_str(&title, "final_table")?));
    }
    t.insert("columns".into(), json!(f.columns.iter().map(|c| c.as_ref()).collect::<Vec<_>>()));
    t.insert("rows".into(), Json::Array(f.rows.iter().map(|r| Json::Array(r.iter().map(cell_json).collect())).collect()));
    Ok(Json::Object(t))
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn feature(g: &Geom, props: Map<String, Json>) -> (Json, Option<String>) {
    match geometry::to_wgs84(g) {
        Some(w) => (json!({"type": "Feature", "geometry": w.to_geojson(), "properties": props}), None),
        None => (
            json!({"type": "Feature", "geometry": g.to_geojson(), "properties": props}),
            Some(g.crs.as_str().to_string()),
        ),
    }
}

fn map_layer(interp: &mut Interp<'_>, v: &Value, i: usize) -> RResult<Json> {
    let mut name = format!("layer {}", i + 1);
    let mut style = Map::new();
    style.insert("color".into(), json!(PALETTE[i % PALETTE.len()]));
    let data = match v {
        Value::Dict(d) => {
            let m = lock(d).clone();
            let mut data = None;
            for (k, val) in m.values() {
                let k = expect_str(k, "final_map")?;
                match k.as_str() {
                    "data" => data = Some(val.clone()),
                    "name" => name = expect_str(val, "final_map")?,
                    "color" | "fill_color" => {
                        style.insert(k, json!(expect_str(val, "final_map")?));
                    }
                    "weight" | "opacity" | "radius" => {
                        style.insert(k, json!(expect_f64(val, "final_map")?));
                    }
                    other => {
                        return Err(RtError::new(ErrorKind::InvalidFinalAnswer, format!("unknown map layer key '{other}'")))
                    }
                }
            }
            data.ok_or_else(|| RtError::new(ErrorKind::InvalidFinalAnswer, "map layer dict needs a 'data' entry"))?
        }
        other => other.clone(),
    };
    let mut features = Vec::new();
    let mut crs_tag = None;
    let mut add = |g: &Geom, props: Map<String, Json>| {
        let (f, tag) = feature(g, props);
        features.push(f);
        if tag.is_some() {
            crs_tag = tag;
        }
    };
    match &data {
        Value::Geom(g) => add(g, Map::new()),
        Value::Frame(f) => {
            interp.tick(f.rows.len() as u64)?;
            for r in &f.rows {
                let mut props = Map::new();
                let mut geom = None;
                for (c, v) in f.columns.iter().zip(r) {
                    match v {
                        Value::Geom(g) if geom.is_none() => geom = Some(g.clone()),
                        Value::Geom(_) => {}
                        other => {
                            props.insert(c.to_string(), cell_json(other));
                        }
                    }
                }
                if let Some(g) = geom {
                    add(&g, props);
                }
            }
        }
        Value::List(_) | Value::Tuple(_) => {
            for x in interp.iterate(&data)? {
                match x {
                    Value::Geom(g) => add(&g, Map::new()),
                    Value::None => {}
                    other => {
                        return Err(RtError::new(
                            ErrorKind::InvalidFinalAnswer,
                            format!("map layer lists must hold geometries, found {}", other.type_name()),
                        ))
                    }
                }
            }
        }
        other => {
            return Err(RtError::new(
                ErrorKind::InvalidFinalAnswer,
                format!("a map layer must be a geometry, a list of geometries or a frame, not {}", other.type_name()),
            ))
        }
    }
    if features.is_empty() {
        return Err(RtError::new(ErrorKind::InvalidFinalAnswer, format!("map layer '{name}' has no geometries")));
    }
    let mut layer = Map::new();
    layer.insert("name".into(), json!(name));
    layer.insert("geojson".into(), json!({"type": "FeatureCollection", "features": features}));
    layer.insert("style".into(), Json::Object(style));
    layer.insert("crs".into(), json!(crs_tag.unwrap_or_else(|| "EPSG:4326".into())));
    Ok(Json::Object(layer))
}

/// `final_answer(text)` or `final_answer([(kind, payload), ...])`. Ends the
/// snippet and, through the agent, the analysis loop.
fn final_answer(interp: &mut Interp<'_>, args: Vec<Value>, kwargs: Vec<(String, Value)>) -> RResult<Value> {
    let [answer] = bind_args("final_answer", args, kwargs, &["answer"], 1)?;
    let invalid = |m: String| RtError::new(ErrorKind::InvalidFinalAnswer, m);
    let mut staged = Vec::new();
    match answer.unwrap() {
        Value::None => return Err(invalid("final_answer() requires a non-empty answer".into())),
        v @ (Value::List(_) | Value::Tuple(_)) if is_result_list(&v) => {
            for item in interp.iterate(&v)? {
                let pair = interp.iterate(&item)?;
                let kind_name = expect_str(&pair[0], "final_answer")?;
                let kind = ArtifactKind::parse(&kind_name).ok_or_else(|| {
                    invalid(format!("unknown result kind '{kind_name}'; use text, table, plot_spec or map_spec"))
                })?;
                let payload = match (kind, &pair[1]) {
                    (ArtifactKind::Text, Value::Str(s)) => json!(s.as_ref()),
                    (ArtifactKind::Text, other) => json!(other.to_str()),
                    (ArtifactKind::Table, v @ (Value::Frame(_) | Value::List(_))) => table_payload(interp, v, None)?,
                    (_, other) => value_json(other),
                };
                staged.push(Artifact::new(kind, payload).map_err(invalid)?);
            }
        }
        other => {
            let text = other.to_str();
            staged.push(Artifact::new(ArtifactKind::Text, json!(text)).map_err(invalid)?);
        }
    }
    let texts: Vec<&str> = staged.iter().filter(|a| a.kind == ArtifactKind::Text).filter_map(|a| a.payload.as_str()).collect();
    if texts.is_empty() {
        return Err(invalid("final_answer() needs at least one non-empty text result".into()));
    }
    for a in &staged {
        validate_artifact(a.kind, &a.payload).map_err(invalid)?;
    }
    interp.final_answer = Some(texts.join("\n"));
    interp.artifacts.extend(staged);
    Err(RtError::new(ErrorKind::Stop, "final answer"))
}

fn is_result_list(v: &Value) -> bool {
    let items = match v {
        Value::List(l) => lock(l).clone(),
        Value::Tuple(t) => t.as_ref().clone(),
        _ => return false,
    };
    !items.is_empty()
        && items.iter().all(|x| match x {
            Value::Tuple(t) => t.len() == 2 && matches!(t[0], Value::Str(_)),
            Value::List(l) => {
                let l = lock(l);
                l.len() == 2 && matches!(l[0], Value::Str(_))
            }
            _ => false,
        })
}

/// Structural JSON rendering of a value.
pub fn value_json(v: &Value) -> Json {
    match v {
        Value::List(l) => Json::Array(lock(l).iter().map(value_json).collect()),
        Value::Tuple(t) => Json::Array(t.iter().map(value_json).collect()),
        Value::Dict(d) => {
            let mut m = Map::new();
            for (k, x) in lock(d).values() {
                m.insert(k.to_str(), value_json(x));
            }
            Json::Object(m)
        }
        Value::Geom(g) => g.to_geojson(),
        Value::Frame(f) => Json::Array(
            f.rows
                .iter()
                .map(|r| Json::Object(f.columns.iter().zip(r).map(|(c, x)| (c.to_string(), value_json(x))).collect()))
                .collect(),
        ),
        other => cell_json(other),
    }
}
