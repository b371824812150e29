use std::collections::HashSet;
use std::fmt::Write;
use std::sync::{Arc, Mutex, MutexGuard};

use indexmap::IndexMap;

use super::ast::FunctionDef;
use super::format::float_repr;
use super::frame::{Frame, Groups};
use super::interp::Env;
use crate::geometry::Geom;

pub type List = Arc<Mutex<Vec<Value>>>;
pub type Dict = Arc<Mutex<DictMap>>;

/// Insertion-ordered map keeping the first-inserted key object, as Python does.
pub type DictMap = IndexMap<Key, (Value, Value)>;

#[derive(Debug)]
pub struct Function {
    pub def: Arc<FunctionDef>,
    pub defaults: Vec<Value>,
    pub closure: Option<Arc<Env>>,
}

#[derive(Debug, Clone)]
pub enum Value {
    None,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(Arc<str>),
    List(List),
    Tuple(Arc<Vec<Value>>),
    Dict(Dict),
    Range { start: i64, stop: i64, step: i64 },
    Function(Arc<Function>),
    /// Builtin or module function, by qualified name (`len`, `geo.area`).
    Builtin(&'static str),
    Method(Arc<(Value, &'static str)>),
    Module(&'static str),
    Frame(Arc<Frame>),
    Groups(Arc<Groups>),
    Geom(Arc<Geom>),
}

pub fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// Hashable projection of a value. Numerically equal keys coincide
/// (`1 == 1.0 == True`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Key {
    None,
    Int(i64),
    Float(u64),
    Str(Arc<str>),
    Tuple(Vec<Key>),
}

impl Key {
    pub fn from_value(v: &Value) -> Option<Key> {
        Some(match v {
            Value::None => Key::None,
            Value::Bool(b) => Key::Int(*b as i64),
            Value::Int(i) => Key::Int(*i),
            Value::Float(f) => {
                if f.fract() == 0.0 && *f >= -9.2e18 && *f <= 9.2e18 {
                    Key::Int(*f as i64)
                } else {
                    Key::Float(f.to_bits())
                }
            }
            Value::Str(s) => Key::Str(s.clone()),
            Value::Tuple(items) => Key::Tuple(items.iter().map(Key::from_value).collect::<Option<_>>()?),
            _ => return None,
        })
    }
}

impl Value {
    pub fn str(s: impl AsRef<str>) -> Value {
        Value::Str(Arc::from(s.as_ref()))
    }

    pub fn list(items: Vec<Value>) -> Value {
        Value::List(Arc::new(Mutex::new(items)))
    }

    pub fn tuple(items: Vec<Value>) -> Value {
        Value::Tuple(Arc::new(items))
    }

    pub fn dict(map: DictMap) -> Value {
        Value::Dict(Arc::new(Mutex::new(map)))
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::None => "NoneType",
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Str(_) => "str",
            Value::List(_) => "list",
            Value::Tuple(_) => "tuple",
            Value::Dict(_) => "dict",
            Value::Range { .. } => "range",
            Value::Function(_) => "function",
            Value::Builtin(_) => "builtin_function",
            Value::Method(_) => "method",
            Value::Module(_) => "module",
            Value::Frame(_) => "frame",
            Value::Groups(_) => "groups",
            Value::Geom(_) => "geometry",
        }
    }

    pub fn truthy(&self) -> bool {
        match self {
            Value::None => false,
            Value::Bool(b) => *b,
            Value::Int(i) => *i != 0,
            Value::Float(f) => *f != 0.0,
            Value::Str(s) => !s.is_empty(),
            Value::List(l) => !lock(l).is_empty(),
            Value::Tuple(t) => !t.is_empty(),
            Value::Dict(d) => !lock(d).is_empty(),
            Value::Range { .. } => range_len(self) > 0,
            Value::Frame(f) => !f.rows.is_empty(),
            _ => true,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Bool(b) => Some(*b as i64 as f64),
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn is_number(&self) -> bool {
        matches!(self, Value::Bool(_) | Value::Int(_) | Value::Float(_))
    }

    /// `str(x)`
    pub fn to_str(&self) -> String {
        match self {
            Value::Str(s) => s.to_string(),
            _ => self.repr(),
        }
    }

    /// `repr(x)`
    pub fn repr(&self) -> String {
        let mut out = String::new();
        let mut seen = HashSet::new();
        repr_into(&mut out, self, &mut seen);
        out
    }
}

pub fn range_len(v: &Value) -> i64 {
    let Value::Range { start, stop, step } = *v else { return 0 };
    let (start, stop, step) = (start as i128, stop as i128, step as i128);
    let n = if step > 0 {
        (stop - start + step - 1).div_euclid(step)
    } else {
        (start - stop - step - 1).div_euclid(-step)
    };
    n.max(0) as i64
}

pub fn str_repr(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') { '"' } else { '\'' };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c if (c as u32) < 0x20 || c as u32 == 0x7f => {
                let _ = write!(out, "\\x{:02x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

fn ptr_id<T>(a: &Arc<T>) -> usize {
    Arc::as_ptr(a) as *const () as usize
}

fn repr_into(out: &mut String, v: &Value, seen: &mut HashSet<usize>) {
    match v {
        Value::None => out.push_str("None"),
        Value::Bool(true) => out.push_str("True"),
        Value::Bool(false) => out.push_str("False"),
        Value::Int(i) => {
            let _ = write!(out, "{i}");
        }
        Value::Float(f) => out.push_str(&float_repr(*f)),
        Value::Str(s) => out.push_str(&str_repr(s)),
        Value::List(l) => {
            if !seen.insert(ptr_id(l)) {
                out.push_str("[...]");
                return;
            }
            let items = lock(l).clone();
            out.push('[');
            for (i, x) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                repr_into(out, x, seen);
            }
            out.push(']');
            seen.remove(&ptr_id(l));
        }
        Value::Tuple(t) => {
            out.push('(');
            for (i, x) in t.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                repr_into(out, x, seen);
            }
            if t.len() == 1 {
                out.push(',');
            }
            out.push(')');
        }
        Value::Dict(d) => {
            if !seen.insert(ptr_id(d)) {
                out.push_str("{...}");
                return;
            }
            let items: Vec<(Value, Value)> = lock(d).values().cloned().collect();
            out.push('{');
            for (i, (k, x)) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                repr_into(out, k, seen);
                out.push_str(": ");
                repr_into(out, x, seen);
            }
            out.push('}');
            seen.remove(&ptr_id(d));
        }
        Value::Range { start, stop, step } => {
            if *step == 1 {
                let _ = write!(out, "range({start}, {stop})");
            } else {
                let _ = write!(out, "range({start}, {stop}, {step})");
            }
        }
        Value::Function(f) => {
            let _ = write!(out, "<function {}>", f.def.name);
        }
        Value::Builtin(name) => {
            let _ = write!(out, "<built-in function {name}>");
        }
        Value::Method(m) => {
            let _ = write!(out, "<method {}.{}>", m.0.type_name(), m.1);
        }
        Value::Module(name) => {
            let _ = write!(out, "<module '{name}'>");
        }
        Value::Frame(f) => out.push_str(&f.render(10)),
        Value::Groups(g) => {
            let _ = write!(out, "<groups by {}: {} groups>", str_repr(&g.column), g.groups.len());
        }
        Value::Geom(g) => {
            let _ = write!(out, "<{} {} {}>", g.kind(), g.crs, g.to_wkt());
        }
    }
}

/// Structural equality with Python semantics; identity short-circuits so
/// self-containing lists never recurse.
pub fn py_eq(a: &Value, b: &Value) -> bool {
    use Value::*;
    match (a, b) {
        (None, None) => true,
        (Str(x), Str(y)) => x == y,
        (List(x), List(y)) => {
            if Arc::ptr_eq(x, y) {
                return true;
            }
            let (xs, ys) = (lock(x).clone(), lock(y).clone());
            xs.len() == ys.len() && xs.iter().zip(&ys).all(|(p, q)| py_eq(p, q))
        }
        (Tuple(x), Tuple(y)) => x.len() == y.len() && x.iter().zip(y.iter()).all(|(p, q)| py_eq(p, q)),
        (Dict(x), Dict(y)) => {
            if Arc::ptr_eq(x, y) {
                return true;
            }
            let (xs, ys) = (lock(x).clone(), lock(y).clone());
            xs.len() == ys.len()
                && xs.iter().all(|(k, (_, v))| ys.get(k).is_some_and(|(_, w)| py_eq(v, w)))
        }
        (Range { .. }, Range { .. }) => {
            let (la, lb) = (range_len(a), range_len(b));
            match (a, b) {
                (Range { start: s1, step: t1, .. }, Range { start: s2, step: t2, .. }) => {
                    la == lb && (la == 0 || (s1 == s2 && (la == 1 || t1 == t2)))
                }
                _ => false,
            }
        }
        (Geom(x), Geom(y)) => x.crs == y.crs && x.shape == y.shape,
        (Frame(x), Frame(y)) => {
            Arc::ptr_eq(x, y)
                || (x.columns == y.columns
                    && x.rows.len() == y.rows.len()
                    && x.rows.iter().zip(&y.rows).all(|(r, s)| r.iter().zip(s).all(|(p, q)| py_eq(p, q))))
        }
        (Module(x), Module(y)) => x == y,
        (Builtin(x), Builtin(y)) => x == y,
        (Function(x), Function(y)) => Arc::ptr_eq(x, y),
        (Groups(x), Groups(y)) => Arc::ptr_eq(x, y),
        _ => match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) => match (a, b) {
                (Float(_), _) | (_, Float(_)) => x == y,
                _ => int_of(a) == int_of(b),
            },
            _ => false,
        },
    }
}

fn int_of(v: &Value) -> i64 {
    match v {
        Value::Bool(b) => *b as i64,
        Value::Int(i) => *i,
        _ => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reprs() {
        assert_eq!(Value::str("it's").repr(), "\"it's\"");
        assert_eq!(Value::str("a'b\"").repr(), "'a\\'b\"'");
        assert_eq!(Value::tuple(vec![Value::Int(1)]).repr(), "(1,)");
        assert_eq!(Value::list(vec![Value::Float(0.5), Value::None]).repr(), "[0.5, None]");
        let l = Value::list(vec![]);
        if let Value::List(inner) = &l {
            lock(inner).push(l.clone());
        }
        assert_eq!(l.repr(), "[[...]]");
        assert!(py_eq(&l, &l));
    }

    #[test]
    fn numeric_keys_coincide() {
        assert_eq!(Key::from_value(&Value::Int(1)), Key::from_value(&Value::Float(1.0)));
        assert_eq!(Key::from_value(&Value::Bool(true)), Key::from_value(&Value::Int(1)));
        assert!(Key::from_value(&Value::list(vec![])).is_none());
    }

    #[test]
    fn range_lengths() {
        let r = |start, stop, step| range_len(&Value::Range { start, stop, step });
        assert_eq!(r(0, 10, 1), 10);
        assert_eq!(r(0, 10, 3), 4);
        assert_eq!(r(10, 0, -3), 4);
        assert_eq!(r(5, 0, 1), 0);
    }
}
