use std::sync::{Arc, Mutex};

use indexmap::IndexMap;

use super::artifacts::Artifact;
use super::ast::*;
use super::builtins;
use super::format::{format_float, format_int, format_str, parse_spec};
use super::value::{lock, py_eq, range_len, DictMap, Function, Key, Value};
use super::{ErrorKind, ResourceLimits};

/// A function activation's local variables, chained to the defining scope.
#[derive(Debug)]
pub struct Env {
    pub vars: Mutex<IndexMap<String, Value>>,
    pub parent: Option<Arc<Env>>,
}

impl Env {
    fn child(parent: Option<&Arc<Env>>) -> Arc<Env> {
        Arc::new(Env { vars: Mutex::new(IndexMap::new()), parent: parent.cloned() })
    }
}

#[derive(Debug, Clone)]
pub struct RtError {
    pub kind: ErrorKind,
    pub msg: String,
    pub line: u32,
}

impl RtError {
    pub fn new(kind: ErrorKind, msg: impl Into<String>) -> RtError {
        RtError { kind, msg: msg.into(), line: 0 }
    }

    fn at(mut self, line: u32) -> RtError {
        if self.line == 0 {
            self.line = line;
        }
        self
    }
}

pub type RResult<T> = Result<T, RtError>;

pub fn type_err(msg: impl Into<String>) -> RtError {
    RtError::new(ErrorKind::TypeMismatch, msg)
}

pub fn value_err(msg: impl Into<String>) -> RtError {
    RtError::new(ErrorKind::ValueInvalid, msg)
}

enum Flow {
    Normal,
    Break,
    Continue,
    Return(Value),
}

pub const MAX_CALL_DEPTH: usize = 200;

pub struct Interp<'s> {
    pub globals: &'s mut IndexMap<String, Value>,
    pub limits: ResourceLimits,
    pub ops: u64,
    pub log: String,
    log_chars: usize,
    pub truncated: bool,
    pub artifacts: Vec<Artifact>,
    pub final_answer: Option<String>,
    depth: usize,
}

impl<'s> Interp<'s> {
    pub fn new(globals: &'s mut IndexMap<String, Value>, limits: ResourceLimits) -> Self {
        Interp {
            globals,
            limits,
            ops: 0,
            log: String::new(),
            log_chars: 0,
            truncated: false,
            artifacts: Vec::new(),
            final_answer: None,
            depth: 0,
        }
    }

    /// Charges `n` elementary operations. On exhaustion the counter is pinned
    /// at the cap.
    pub fn tick(&mut self, n: u64) -> RResult<()> {
        if self.ops.saturating_add(n) > self.limits.max_ops {
            self.ops = self.limits.max_ops;
            return Err(RtError::new(
                ErrorKind::OperationCapExceeded,
                format!("operation limit of {} exceeded", self.limits.max_ops),
            ));
        }
        self.ops += n;
        Ok(())
    }

    pub fn check_len(&self, n: usize) -> RResult<()> {
        if n as u64 > self.limits.max_collection_len {
            return Err(RtError::new(
                ErrorKind::CollectionTooLarge,
                format!("collection of {n} elements exceeds the limit of {}", self.limits.max_collection_len),
            ));
        }
        Ok(())
    }

    pub fn write_output(&mut self, s: &str) {
        if self.truncated {
            return;
        }
        let n = s.chars().count();
        let room = self.limits.max_output_chars as usize - self.log_chars;
        if n <= room {
            self.log.push_str(s);
            self.log_chars += n;
        } else {
            self.log.extend(s.chars().take(room));
            self.log_chars += room;
            self.truncated = true;
        }
    }

    pub fn run(&mut self, program: &Program) -> RResult<Option<Value>> {
        let n = program.body.len();
        for (i, stmt) in program.body.iter().enumerate() {
            if i + 1 == n {
                if let StmtKind::Expr(e) = &stmt.kind {
                    self.tick(1).map_err(|e| e.at(stmt.line))?;
                    let v = self.eval(None, e)?;
                    return Ok(if matches!(v, Value::None) { None } else { Some(v) });
                }
            }
            match self.exec(None, stmt)? {
                Flow::Normal => {}
                _ => return Err(RtError::new(ErrorKind::ValueInvalid, "'break', 'continue' or 'return' outside loop or function").at(stmt.line)),
            }
        }
        Ok(None)
    }

    // ---- statements ----

    fn exec_block(&mut self, env: Option<&Arc<Env>>, body: &[Stmt]) -> RResult<Flow> {
        for s in body {
            match self.exec(env, s)? {
                Flow::Normal => {}
                other => return Ok(other),
            }
        }
        Ok(Flow::Normal)
    }

    fn exec(&mut self, env: Option<&Arc<Env>>, s: &Stmt) -> RResult<Flow> {
        self.tick(1).map_err(|e| e.at(s.line))?;
        self.exec_inner(env, s).map_err(|e| e.at(s.line))
    }

    fn exec_inner(&mut self, env: Option<&Arc<Env>>, s: &Stmt) -> RResult<Flow> {
        match &s.kind {
            StmtKind::Expr(e) => {
                self.eval(env, e)?;
            }
            StmtKind::Assign { targets, value } => {
                let v = self.eval(env, value)?;
                for t in targets {
                    self.assign(env, t, v.clone())?;
                }
            }
            StmtKind::AugAssign { target, op, value } => {
                let current = match target {
                    Target::Name(n) => self.lookup(env, n)?,
                    Target::Subscript(obj, idx) => {
                        let o = self.eval(env, obj)?;
                        let i = self.eval_index(env, idx)?;
                        self.get_item(&o, &i)?
                    }
                    Target::Attribute(..) => return Err(type_err("cannot assign to attributes")),
                    Target::Tuple(_) => return Err(type_err("illegal expression for augmented assignment")),
                };
                let rhs = self.eval(env, value)?;
                let new = match (&current, op) {
                    // list += iterable extends in place
                    (Value::List(l), BinOp::Add) => {
                        let items = self.iterate(&rhs)?;
                        self.tick(items.len() as u64)?;
                        let len = lock(l).len() + items.len();
                        self.check_len(len)?;
                        lock(l).extend(items);
                        current.clone()
                    }
                    _ => self.binop(*op, &current, &rhs)?,
                };
                self.assign(env, target, new)?;
            }
            StmtKind::If { cond, body, orelse } => {
                let c = self.eval(env, cond)?;
                return if c.truthy() { self.exec_block(env, body) } else { self.exec_block(env, orelse) };
            }
            StmtKind::While { cond, body } => loop {
                self.tick(1)?;
                if !self.eval(env, cond)?.truthy() {
                    break;
                }
                match self.exec_block(env, body)? {
                    Flow::Break => break,
                    Flow::Return(v) => return Ok(Flow::Return(v)),
                    Flow::Normal | Flow::Continue => {}
                }
            },
            StmtKind::For { target, iter, body } => {
                let it = self.eval(env, iter)?;
                let mut cursor = Cursor::new(self, &it)?;
                while let Some(item) = cursor.next() {
                    self.tick(1)?;
                    self.assign(env, target, item)?;
                    match self.exec_block(env, body)? {
                        Flow::Break => break,
                        Flow::Return(v) => return Ok(Flow::Return(v)),
                        Flow::Normal | Flow::Continue => {}
                    }
                }
            }
            StmtKind::FunctionDef(def) => {
                let mut defaults = Vec::new();
                for p in &def.params {
                    if let Some(d) = &p.default {
                        defaults.push(self.eval(env, d)?);
                    }
                }
                let f = Value::Function(Arc::new(Function { def: def.clone(), defaults, closure: env.cloned() }));
                self.bind(env, &def.name, f);
            }
            StmtKind::Return(v) => {
                if env.is_none() {
                    return Err(value_err("'return' outside function"));
                }
                let v = match v {
                    Some(e) => self.eval(env, e)?,
                    None => Value::None,
                };
                return Ok(Flow::Return(v));
            }
            StmtKind::Break => return Ok(Flow::Break),
            StmtKind::Continue => return Ok(Flow::Continue),
            StmtKind::Pass => {}
            StmtKind::Import { module, alias } => {
                let m = builtins::import_module(module)?;
                let name = alias.clone().unwrap_or_else(|| module.clone());
                self.bind(env, &name, m);
            }
            StmtKind::FromImport { module, names } => {
                let m = builtins::import_module(module)?;
                let Value::Module(mname) = m else { unreachable!() };
                for (n, alias) in names {
                    let v = builtins::module_attr(mname, n)?;
                    self.bind(env, alias.as_ref().unwrap_or(n), v);
                }
            }
        }
        Ok(Flow::Normal)
    }

    fn bind(&mut self, env: Option<&Arc<Env>>, name: &str, v: Value) {
        match env {
            Some(e) => {
                lock(&e.vars).insert(name.to_string(), v);
            }
            None => {
                self.globals.insert(name.to_string(), v);
            }
        }
    }

    fn assign(&mut self, env: Option<&Arc<Env>>, t: &Target, v: Value) -> RResult<()> {
        match t {
            Target::Name(n) => {
                self.bind(env, n, v);
                Ok(())
            }
            Target::Tuple(targets) => {
                let items = self.iterate(&v)?;
                if items.len() != targets.len() {
                    return Err(value_err(if items.len() > targets.len() {
                        format!("too many values to unpack (expected {})", targets.len())
                    } else {
                        format!("not enough values to unpack (expected {}, got {})", targets.len(), items.len())
                    }));
                }
                for (t, item) in targets.iter().zip(items) {
                    self.assign(env, t, item)?;
                }
                Ok(())
            }
            Target::Subscript(obj, idx) => {
                let o = self.eval(env, obj)?;
                let i = self.eval_index(env, idx)?;
                self.set_item(&o, &i, v)
            }
            Target::Attribute(..) => Err(type_err("cannot assign to attributes")),
        }
    }

    pub fn lookup(&self, env: Option<&Arc<Env>>, name: &str) -> RResult<Value> {
        let mut e = env;
        while let Some(x) = e {
            if let Some(v) = lock(&x.vars).get(name) {
                return Ok(v.clone());
            }
            e = x.parent.as_ref();
        }
        if let Some(v) = self.globals.get(name) {
            return Ok(v.clone());
        }
        builtins::builtin(name).ok_or_else(|| RtError::new(ErrorKind::NameUndefined, format!("name '{name}' is not defined")))
    }

    // ---- expressions ----

    pub fn eval(&mut self, env: Option<&Arc<Env>>, e: &Expr) -> RResult<Value> {
        self.tick(1).map_err(|err| err.at(e.line))?;
        self.eval_inner(env, e).map_err(|err| err.at(e.line))
    }

    fn eval_inner(&mut self, env: Option<&Arc<Env>>, e: &Expr) -> RResult<Value> {
        Ok(match &e.kind {
            ExprKind::None => Value::None,
            ExprKind::Bool(b) => Value::Bool(*b),
            ExprKind::Int(i) => Value::Int(*i),
            ExprKind::Float(f) => Value::Float(*f),
            ExprKind::Str(s) => Value::str(s),
            ExprKind::FString(parts) => {
                let mut out = String::new();
                for p in parts {
                    match p {
                        FPart::Lit(s) => out.push_str(s),
                        FPart::Expr { expr, conversion, spec } => {
                            let v = self.eval(env, expr)?;
                            let v = match conversion {
                                Some('r') | Some('a') => Value::str(v.repr()),
                                Some('s') => Value::str(v.to_str()),
                                _ => v,
                            };
                            out.push_str(&format_value(&v, spec)?);
                        }
                    }
                }
                self.check_len(out.len())?;
                Value::str(out)
            }
            ExprKind::List(items) => {
                let mut out = Vec::with_capacity(items.len());
                for i in items {
                    out.push(self.eval(env, i)?);
                }
                Value::list(out)
            }
            ExprKind::Tuple(items) => {
                let mut out = Vec::with_capacity(items.len());
                for i in items {
                    out.push(self.eval(env, i)?);
                }
                Value::tuple(out)
            }
            ExprKind::Dict(pairs) => {
                let mut map = DictMap::new();
                for (k, v) in pairs {
                    let k = self.eval(env, k)?;
                    let v = self.eval(env, v)?;
                    dict_insert(&mut map, k, v)?;
                }
                Value::dict(map)
            }
            ExprKind::Name(n) => self.lookup(env, n)?,
            ExprKind::BinOp { op, left, right } => {
                let l = self.eval(env, left)?;
                let r = self.eval(env, right)?;
                self.binop(*op, &l, &r)?
            }
            ExprKind::Unary { op, operand } => {
                let v = self.eval(env, operand)?;
                match op {
                    UnaryOp::Not => Value::Bool(!v.truthy()),
                    UnaryOp::Neg => match v {
                        Value::Bool(b) => Value::Int(-(b as i64)),
                        Value::Int(i) => Value::Int(i.checked_neg().ok_or_else(overflow)?),
                        Value::Float(f) => Value::Float(-f),
                        other => return Err(type_err(format!("bad operand type for unary -: '{}'", other.type_name()))),
                    },
                    UnaryOp::Pos => match v {
                        Value::Bool(b) => Value::Int(b as i64),
                        Value::Int(_) | Value::Float(_) => v,
                        other => return Err(type_err(format!("bad operand type for unary +: '{}'", other.type_name()))),
                    },
                }
            }
            ExprKind::BoolOp { is_and, left, right } => {
                let l = self.eval(env, left)?;
                if l.truthy() == *is_and {
                    self.eval(env, right)?
                } else {
                    l
                }
            }
            ExprKind::Compare { first, rest } => {
                let mut left = self.eval(env, first)?;
                for (op, right) in rest {
                    let r = self.eval(env, right)?;
                    if !self.compare(*op, &left, &r)? {
                        return Ok(Value::Bool(false));
                    }
                    left = r;
                }
                Value::Bool(true)
            }
            ExprKind::IfExp { cond, then, orelse } => {
                if self.eval(env, cond)?.truthy() {
                    self.eval(env, then)?
                } else {
                    self.eval(env, orelse)?
                }
            }
            ExprKind::Call { func, args, kwargs } => {
                let f = self.eval(env, func)?;
                let mut a = Vec::with_capacity(args.len());
                for x in args {
                    a.push(self.eval(env, x)?);
                }
                let mut kw = Vec::with_capacity(kwargs.len());
                for (k, x) in kwargs {
                    kw.push((k.clone(), self.eval(env, x)?));
                }
                self.call(&f, a, kw)?
            }
            ExprKind::Attribute { value, name } => {
                let v = self.eval(env, value)?;
                builtins::get_attr(&v, name)?
            }
            ExprKind::Subscript { value, index } => {
                let v = self.eval(env, value)?;
                let i = self.eval_index(env, index)?;
                self.get_item(&v, &i)?
            }
            ExprKind::Slice { .. } => return Err(type_err("slice outside of subscript")),
            ExprKind::ListComp { elt, comp, .. } => {
                let scope = Env::child(env);
                let mut out = Vec::new();
                self.comprehend(env, &scope, comp, |this, scope| {
                    let v = this.eval(Some(scope), elt)?;
                    out.push(v);
                    this.check_len(out.len())
                })?;
                Value::list(out)
            }
            ExprKind::DictComp { key, value, comp } => {
                let scope = Env::child(env);
                let mut map = DictMap::new();
                self.comprehend(env, &scope, comp, |this, scope| {
                    let k = this.eval(Some(scope), key)?;
                    let v = this.eval(Some(scope), value)?;
                    dict_insert(&mut map, k, v)?;
                    this.check_len(map.len())
                })?;
                Value::dict(map)
            }
        })
    }

    fn comprehend(
        &mut self,
        env: Option<&Arc<Env>>,
        scope: &Arc<Env>,
        comp: &Comprehension,
        mut body: impl FnMut(&mut Self, &Arc<Env>) -> RResult<()>,
    ) -> RResult<()> {
        let it = self.eval(env, &comp.iter)?;
        let mut cursor = Cursor::new(self, &it)?;
        'outer: while let Some(item) = cursor.next() {
            self.tick(1)?;
            self.assign(Some(scope), &comp.target, item)?;
            for c in &comp.conds {
                if !self.eval(Some(scope), c)?.truthy() {
                    continue 'outer;
                }
            }
            body(self, scope)?;
        }
        Ok(())
    }

    fn eval_index(&mut self, env: Option<&Arc<Env>>, idx: &Expr) -> RResult<Index> {
        if let ExprKind::Slice { lower, upper, step } = &idx.kind {
            let mut bound = |b: &Option<Box<Expr>>| -> RResult<Option<i64>> {
                match b {
                    None => Ok(None),
                    Some(e) => match self.eval(env, e)? {
                        Value::None => Ok(None),
                        Value::Int(i) => Ok(Some(i)),
                        Value::Bool(b) => Ok(Some(b as i64)),
                        other => Err(type_err(format!("slice indices must be integers or None, not {}", other.type_name()))),
                    },
                }
            };
            let (l, u, s) = (bound(lower)?, bound(upper)?, bound(step)?);
            if s == Some(0) {
                return Err(value_err("slice step cannot be zero"));
            }
            return Ok(Index::Slice(l, u, s));
        }
        Ok(Index::Value(self.eval(env, idx)?))
    }

    pub fn call(&mut self, f: &Value, args: Vec<Value>, kwargs: Vec<(String, Value)>) -> RResult<Value> {
        match f {
            Value::Function(func) => self.call_function(func, args, kwargs),
            Value::Builtin(name) => builtins::call_builtin(self, name, args, kwargs),
            Value::Method(m) => builtins::call_method(self, &m.0, m.1, args, kwargs),
            other => Err(type_err(format!("'{}' object is not callable", other.type_name()))),
        }
    }

    fn call_function(&mut self, f: &Arc<Function>, args: Vec<Value>, kwargs: Vec<(String, Value)>) -> RResult<Value> {
        let def = &f.def;
        let params = &def.params;
        if args.len() > params.len() {
            return Err(type_err(format!(
                "{}() takes {} positional arguments but {} were given",
                def.name,
                params.len(),
                args.len()
            )));
        }
        let mut slots: Vec<Option<Value>> = args.into_iter().map(Some).collect();
        slots.resize(params.len(), None);
        for (k, v) in kwargs {
            let i = params
                .iter()
                .position(|p| p.name == k)
                .ok_or_else(|| type_err(format!("{}() got an unexpected keyword argument '{k}'", def.name)))?;
            if slots[i].is_some() {
                return Err(type_err(format!("{}() got multiple values for argument '{k}'", def.name)));
            }
            slots[i] = Some(v);
        }
        let first_default = params.len() - f.defaults.len();
        let scope = Env::child(f.closure.as_ref());
        {
            let mut vars = lock(&scope.vars);
            for (i, (p, slot)) in params.iter().zip(slots).enumerate() {
                let v = match slot {
                    Some(v) => v,
                    None if i >= first_default => f.defaults[i - first_default].clone(),
                    None => {
                        return Err(type_err(format!("{}() missing required argument: '{}'", def.name, p.name)));
                    }
                };
                vars.insert(p.name.clone(), v);
            }
        }
        if self.depth >= MAX_CALL_DEPTH {
            return Err(RtError::new(ErrorKind::RecursionLimit, "maximum recursion depth exceeded"));
        }
        self.depth += 1;
        let r = self.exec_block(Some(&scope), &def.body);
        self.depth -= 1;
        Ok(match r? {
            Flow::Return(v) => v,
            _ => Value::None,
        })
    }

    // ---- operators ----

    pub fn binop(&mut self, op: BinOp, l: &Value, r: &Value) -> RResult<Value> {
        use Value::*;
        match (l, r) {
            (Int(_) | Bool(_), Int(_) | Bool(_)) => int_op(op, as_int(l), as_int(r)),
            (Int(_) | Bool(_) | Float(_), Int(_) | Bool(_) | Float(_)) => {
                float_op(op, l.as_f64().unwrap(), r.as_f64().unwrap())
            }
            (Str(a), Str(b)) if op == BinOp::Add => {
                self.check_len(a.len() + b.len())?;
                self.tick((a.len() + b.len()) as u64 / 64)?;
                Ok(Value::str(format!("{a}{b}")))
            }
            (Str(s), Int(_) | Bool(_)) | (Int(_) | Bool(_), Str(s)) if op == BinOp::Mul => {
                let n = as_int(if matches!(l, Str(_)) { r } else { l }).max(0) as usize;
                let total = s.len().saturating_mul(n);
                self.check_len(total)?;
                self.tick(total as u64 / 64)?;
                Ok(Value::str(s.repeat(n)))
            }
            (List(a), List(b)) if op == BinOp::Add => {
                let mut out = lock(a).clone();
                out.extend(lock(b).iter().cloned());
                self.check_len(out.len())?;
                self.tick(out.len() as u64)?;
                Ok(Value::list(out))
            }
            (Tuple(a), Tuple(b)) if op == BinOp::Add => {
                let mut out = a.as_ref().clone();
                out.extend(b.iter().cloned());
                self.check_len(out.len())?;
                self.tick(out.len() as u64)?;
                Ok(Value::tuple(out))
            }
            (List(_) | Tuple(_), Int(_) | Bool(_)) | (Int(_) | Bool(_), List(_) | Tuple(_)) if op == BinOp::Mul => {
                let (seq, n) = if matches!(l, List(_) | Tuple(_)) { (l, as_int(r)) } else { (r, as_int(l)) };
                let items = match seq {
                    List(a) => lock(a).clone(),
                    Tuple(t) => t.as_ref().clone(),
                    _ => unreachable!(),
                };
                let n = n.max(0) as usize;
                let total = items.len().saturating_mul(n);
                self.check_len(total)?;
                self.tick(total as u64)?;
                let mut out = Vec::with_capacity(total);
                for _ in 0..n {
                    out.extend(items.iter().cloned());
                }
                Ok(if matches!(seq, List(_)) { Value::list(out) } else { Value::tuple(out) })
            }
            (Str(_), _) if op == BinOp::Mod => Err(type_err("'%' string formatting is not supported; use f-strings")),
            _ => Err(type_err(format!(
                "unsupported operand type(s) for {}: '{}' and '{}'",
                op.symbol(),
                l.type_name(),
                r.type_name()
            ))),
        }
    }

    pub fn compare(&mut self, op: CmpOp, l: &Value, r: &Value) -> RResult<bool> {
        Ok(match op {
            CmpOp::Eq => py_eq(l, r),
            CmpOp::Ne => !py_eq(l, r),
            CmpOp::Lt => py_cmp(l, r, "<")? == std::cmp::Ordering::Less,
            CmpOp::Le => py_cmp(l, r, "<=")? != std::cmp::Ordering::Greater,
            CmpOp::Gt => py_cmp(l, r, ">")? == std::cmp::Ordering::Greater,
            CmpOp::Ge => py_cmp(l, r, ">=")? != std::cmp::Ordering::Less,
            CmpOp::In => self.contains(r, l)?,
            CmpOp::NotIn => !self.contains(r, l)?,
            CmpOp::Is => is_same(l, r),
            CmpOp::IsNot => !is_same(l, r),
        })
    }

    fn contains(&mut self, container: &Value, item: &Value) -> RResult<bool> {
        Ok(match container {
            Value::Str(s) => match item {
                Value::Str(sub) => s.contains(sub.as_ref()),
                other => return Err(type_err(format!("'in <string>' requires string as left operand, not {}", other.type_name()))),
            },
            Value::List(l) => {
                let items = lock(l).clone();
                self.tick(items.len() as u64)?;
                items.iter().any(|x| py_eq(x, item))
            }
            Value::Tuple(t) => {
                self.tick(t.len() as u64)?;
                t.iter().any(|x| py_eq(x, item))
            }
            Value::Dict(d) => {
                let k = Key::from_value(item).ok_or_else(|| type_err(format!("unhashable type: '{}'", item.type_name())))?;
                lock(d).contains_key(&k)
            }
            Value::Range { start, step, .. } => match item {
                Value::Int(_) | Value::Bool(_) => {
                    let i = as_int(item);
                    let n = range_len(container);
                    let off = i as i128 - *start as i128;
                    off % *step as i128 == 0 && {
                        let k = off / *step as i128;
                        k >= 0 && k < n as i128
                    }
                }
                Value::Float(f) => {
                    f.fract() == 0.0 && self.contains(container, &Value::Int(*f as i64))?
                }
                _ => false,
            },
            Value::Frame(f) => match item {
                Value::Str(s) => f.columns.iter().any(|c| c.as_ref() == s.as_ref()),
                _ => false,
            },
            other => return Err(type_err(format!("argument of type '{}' is not iterable", other.type_name()))),
        })
    }

    // ---- indexing ----

    pub fn get_item(&mut self, v: &Value, idx: &Index) -> RResult<Value> {
        match (v, idx) {
            (Value::List(l), Index::Value(i)) => {
                let items = lock(l);
                let k = norm_index(i, items.len(), "list")?;
                Ok(items[k].clone())
            }
            (Value::Tuple(t), Index::Value(i)) => Ok(t[norm_index(i, t.len(), "tuple")?].clone()),
            (Value::Str(s), Index::Value(i)) => {
                let n = s.chars().count();
                let k = norm_index(i, n, "string")?;
                Ok(Value::str(s.chars().nth(k).unwrap().to_string()))
            }
            (Value::Range { start, step, .. }, Index::Value(i)) => {
                let k = norm_index(i, range_len(v) as usize, "range object")?;
                Ok(Value::Int(start + step * k as i64))
            }
            (Value::Dict(d), Index::Value(k)) => {
                let key = Key::from_value(k).ok_or_else(|| type_err(format!("unhashable type: '{}'", k.type_name())))?;
                lock(d)
                    .get(&key)
                    .map(|(_, v)| v.clone())
                    .ok_or_else(|| RtError::new(ErrorKind::KeyNotFound, k.repr()))
            }
            (Value::List(l), Index::Slice(a, b, c)) => {
                let items = lock(l).clone();
                let idx = slice_indices(items.len(), *a, *b, *c);
                self.tick(idx.len() as u64)?;
                Ok(Value::list(idx.into_iter().map(|i| items[i].clone()).collect()))
            }
            (Value::Tuple(t), Index::Slice(a, b, c)) => {
                let idx = slice_indices(t.len(), *a, *b, *c);
                self.tick(idx.len() as u64)?;
                Ok(Value::tuple(idx.into_iter().map(|i| t[i].clone()).collect()))
            }
            (Value::Str(s), Index::Slice(a, b, c)) => {
                let chars: Vec<char> = s.chars().collect();
                let idx = slice_indices(chars.len(), *a, *b, *c);
                self.tick(idx.len() as u64 / 64)?;
                Ok(Value::str(idx.into_iter().map(|i| chars[i]).collect::<String>()))
            }
            (Value::Range { start, step, .. }, Index::Slice(a, b, c)) => {
                let idx = slice_indices(range_len(v) as usize, *a, *b, *c);
                self.tick(idx.len() as u64)?;
                Ok(Value::list(idx.into_iter().map(|i| Value::Int(start + step * i as i64)).collect()))
            }
            (Value::Frame(f), _) => super::frame::frame_index(self, f, idx),
            (Value::Groups(g), Index::Value(k)) => super::frame::group_get(g, k),
            (other, _) => Err(type_err(format!("'{}' object is not subscriptable", other.type_name()))),
        }
    }

    fn set_item(&mut self, v: &Value, idx: &Index, new: Value) -> RResult<()> {
        match (v, idx) {
            (Value::List(l), Index::Value(i)) => {
                let mut items = lock(l);
                let k = norm_index(i, items.len(), "list")?;
                items[k] = new;
                Ok(())
            }
            (Value::Dict(d), Index::Value(k)) => {
                let mut map = lock(d);
                dict_insert(&mut map, k.clone(), new)?;
                let n = map.len();
                drop(map);
                self.check_len(n)
            }
            (Value::List(_), Index::Slice(..)) => Err(type_err("slice assignment is not supported")),
            (other, _) => Err(type_err(format!("'{}' object does not support item assignment", other.type_name()))),
        }
    }

    /// Materializes an iterable, charging one op per element.
    pub fn iterate(&mut self, v: &Value) -> RResult<Vec<Value>> {
        let mut cursor = Cursor::new(self, v)?;
        let mut out = Vec::new();
        while let Some(x) = cursor.next() {
            out.push(x);
        }
        self.tick(out.len() as u64)?;
        Ok(out)
    }
}

pub enum Index {
    Value(Value),
    Slice(Option<i64>, Option<i64>, Option<i64>),
}

fn overflow() -> RtError {
    RtError::new(ErrorKind::IntegerOverflow, "integer result does not fit in 64 bits")
}

pub fn as_int(v: &Value) -> i64 {
    match v {
        Value::Bool(b) => *b as i64,
        Value::Int(i) => *i,
        _ => 0,
    }
}

fn int_op(op: BinOp, a: i64, b: i64) -> RResult<Value> {
    let zero = || RtError::new(ErrorKind::DivisionByZero, "division by zero");
    Ok(match op {
        BinOp::Add => Value::Int(a.checked_add(b).ok_or_else(overflow)?),
        BinOp::Sub => Value::Int(a.checked_sub(b).ok_or_else(overflow)?),
        BinOp::Mul => Value::Int(a.checked_mul(b).ok_or_else(overflow)?),
        BinOp::Div => {
            if b == 0 {
                return Err(zero());
            }
            Value::Float(a as f64 / b as f64)
        }
        BinOp::FloorDiv => {
            if b == 0 {
                return Err(zero());
            }
            let q = a.checked_div(b).ok_or_else(overflow)?;
            Value::Int(if (a % b != 0) && ((a < 0) != (b < 0)) { q - 1 } else { q })
        }
        BinOp::Mod => {
            if b == 0 {
                return Err(zero());
            }
            let r = a.checked_rem(b).unwrap_or(0);
            Value::Int(if r != 0 && ((r < 0) != (b < 0)) { r + b } else { r })
        }
        BinOp::Pow => {
            if b < 0 {
                if a == 0 {
                    return Err(RtError::new(ErrorKind::DivisionByZero, "0.0 cannot be raised to a negative power"));
                }
                Value::Float((a as f64).powf(b as f64))
            } else {
                let e = u32::try_from(b).map_err(|_| overflow())?;
                Value::Int(a.checked_pow(e).ok_or_else(overflow)?)
            }
        }
    })
}

fn float_op(op: BinOp, a: f64, b: f64) -> RResult<Value> {
    let zero = |what: &str| RtError::new(ErrorKind::DivisionByZero, format!("float {what} by zero"));
    Ok(Value::Float(match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => {
            if b == 0.0 {
                return Err(zero("division"));
            }
            a / b
        }
        BinOp::FloorDiv | BinOp::Mod => {
            if b == 0.0 {
                return Err(zero(if op == BinOp::Mod { "modulo" } else { "floor division" }));
            }
            let (div, m) = py_divmod(a, b);
            if op == BinOp::Mod {
                m
            } else {
                div
            }
        }
        BinOp::Pow => {
            if a == 0.0 && b < 0.0 {
                return Err(RtError::new(ErrorKind::DivisionByZero, "0.0 cannot be raised to a negative power"));
            }
            if a < 0.0 && b.fract() != 0.0 {
                return Err(value_err("negative number cannot be raised to a fractional power"));
            }
            a.powf(b)
        }
    }))
}

/// CPython's float divmod.
fn py_divmod(a: f64, b: f64) -> (f64, f64) {
    let mut m = a % b;
    let mut div = (a - m) / b;
    if m != 0.0 {
        if (b < 0.0) != (m < 0.0) {
            m += b;
            div -= 1.0;
        }
    } else {
        m = 0.0f64.copysign(b);
    }
    let floordiv = if div != 0.0 {
        let f = div.floor();
        if div - f > 0.5 {
            f + 1.0
        } else {
            f
        }
    } else {
        0.0f64.copysign(a / b)
    };
    (floordiv, m)
}

pub fn py_cmp(a: &Value, b: &Value, op: &str) -> RResult<std::cmp::Ordering> {
    use std::cmp::Ordering;
    use Value::*;
    let fail = || {
        type_err(format!("'{op}' not supported between instances of '{}' and '{}'", a.type_name(), b.type_name()))
    };
    match (a, b) {
        (Int(_) | Bool(_), Int(_) | Bool(_)) => Ok(as_int(a).cmp(&as_int(b))),
        (Int(_) | Bool(_) | Float(_), Int(_) | Bool(_) | Float(_)) => {
            let (x, y) = (a.as_f64().unwrap(), b.as_f64().unwrap());
            Ok(x.partial_cmp(&y).unwrap_or(Ordering::Equal))
        }
        (Str(x), Str(y)) => Ok(x.cmp(y)),
        (List(_), List(_)) | (Tuple(_), Tuple(_)) => {
            let (xs, ys) = match (a, b) {
                (List(x), List(y)) => (lock(x).clone(), lock(y).clone()),
                (Tuple(x), Tuple(y)) => (x.as_ref().clone(), y.as_ref().clone()),
                _ => unreachable!(),
            };
            for (x, y) in xs.iter().zip(&ys) {
                if !py_eq(x, y) {
                    return py_cmp(x, y, op);
                }
            }
            Ok(xs.len().cmp(&ys.len()))
        }
        _ => Err(fail()),
    }
}

fn is_same(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::None, Value::None) => true,
        (Value::Bool(x), Value::Bool(y)) => x == y,
        (Value::List(x), Value::List(y)) => Arc::ptr_eq(x, y),
        (Value::Dict(x), Value::Dict(y)) => Arc::ptr_eq(x, y),
        (Value::Tuple(x), Value::Tuple(y)) => Arc::ptr_eq(x, y),
        (Value::Frame(x), Value::Frame(y)) => Arc::ptr_eq(x, y),
        (Value::Function(x), Value::Function(y)) => Arc::ptr_eq(x, y),
        (Value::Int(x), Value::Int(y)) => x == y,
        (Value::Str(x), Value::Str(y)) => x == y,
        (Value::Module(x), Value::Module(y)) | (Value::Builtin(x), Value::Builtin(y)) => x == y,
        _ => false,
    }
}

pub fn dict_insert(map: &mut DictMap, k: Value, v: Value) -> RResult<()> {
    let key = Key::from_value(&k).ok_or_else(|| type_err(format!("unhashable type: '{}'", k.type_name())))?;
    match map.get_mut(&key) {
        Some(slot) => slot.1 = v,
        None => {
            map.insert(key, (k, v));
        }
    }
    Ok(())
}

pub fn norm_index(i: &Value, len: usize, what: &str) -> RResult<usize> {
    let i = match i {
        Value::Int(i) => *i,
        Value::Bool(b) => *b as i64,
        other => return Err(type_err(format!("{what} indices must be integers, not {}", other.type_name()))),
    };
    let k = if i < 0 { i + len as i64 } else { i };
    if k < 0 || k >= len as i64 {
        return Err(RtError::new(ErrorKind::IndexOutOfRange, format!("{what} index out of range")));
    }
    Ok(k as usize)
}

/// Python slice semantics.
pub fn slice_indices(len: usize, lower: Option<i64>, upper: Option<i64>, step: Option<i64>) -> Vec<usize> {
    let len = len as i64;
    let step = step.unwrap_or(1);
    let clamp = |v: Option<i64>, default: i64, lo: i64, hi: i64| match v {
        None => default,
        Some(x) => {
            let x = if x < 0 { x + len } else { x };
            x.clamp(lo, hi)
        }
    };
    let mut out = Vec::new();
    if step > 0 {
        let (a, b) = (clamp(lower, 0, 0, len), clamp(upper, len, 0, len));
        let mut i = a;
        while i < b {
            out.push(i as usize);
            i += step;
        }
    } else {
        let (a, b) = (clamp(lower, len - 1, -1, len - 1), clamp(upper, -1, -1, len - 1));
        let mut i = a;
        while i > b {
            out.push(i as usize);
            i += step;
        }
    }
    out
}

pub fn format_value(v: &Value, spec: &str) -> RResult<String> {
    if spec.is_empty() {
        return Ok(v.to_str());
    }
    let s = parse_spec(spec).map_err(value_err)?;
    match v {
        Value::Int(i) => format_int(*i, &s),
        Value::Bool(b) => format_int(*b as i64, &s),
        Value::Float(f) => format_float(*f, &s),
        Value::Str(x) => format_str(x, &s),
        other => format_str(&other.to_str(), &s),
    }
    .map_err(value_err)
}

/// Lazy iteration over a value; lists are read live by index.
pub struct Cursor {
    src: CursorSrc,
    i: usize,
}

enum CursorSrc {
    List(super::value::List),
    Items(Vec<Value>),
    Range { next: i64, remaining: i64, step: i64 },
}

impl Cursor {
    pub fn new(interp: &mut Interp<'_>, v: &Value) -> RResult<Cursor> {
        let src = match v {
            Value::List(l) => CursorSrc::List(l.clone()),
            Value::Tuple(t) => CursorSrc::Items(t.as_ref().clone()),
            Value::Str(s) => CursorSrc::Items(s.chars().map(|c| Value::str(c.to_string())).collect()),
            Value::Dict(d) => CursorSrc::Items(lock(d).values().map(|(k, _)| k.clone()).collect()),
            Value::Range { start, step, .. } => CursorSrc::Range { next: *start, remaining: range_len(v), step: *step },
            Value::Frame(f) => {
                interp.tick(f.rows.len() as u64)?;
                CursorSrc::Items((0..f.rows.len()).map(|i| f.row_dict(i)).collect())
            }
            Value::Groups(g) => CursorSrc::Items(super::frame::group_items(g)),
            other => return Err(type_err(format!("'{}' object is not iterable", other.type_name()))),
        };
        Ok(Cursor { src, i: 0 })
    }

    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> Option<Value> {
        let out = match &mut self.src {
            CursorSrc::List(l) => lock(l).get(self.i).cloned(),
            CursorSrc::Items(items) => items.get(self.i).cloned(),
            CursorSrc::Range { next, remaining, step } => {
                if *remaining <= 0 {
                    None
                } else {
                    let v = *next;
                    *next = next.wrapping_add(*step);
                    *remaining -= 1;
                    Some(Value::Int(v))
                }
            }
        };
        self.i += 1;
        out
    }
}

#[allow(dead_code)]
fn _assert_send() {
    fn is_send<T: Send>() {}
    is_send::<Value>();
}
