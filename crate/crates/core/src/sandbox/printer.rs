//! Canonical source rendering of a syntax tree. Compound subexpressions are
//! fully parenthesized, so `parse(print(p)) == p`.

use std::fmt::Write;

use super::ast::*;

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for s in &p.body {
        stmt(&mut out, s, 0);
    }
    out
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("    ");
    }
}

fn block(out: &mut String, body: &[Stmt], level: usize) {
    for s in body {
        stmt(out, s, level);
    }
}

fn stmt(out: &mut String, s: &Stmt, level: usize) {
    indent(out, level);
    match &s.kind {
        StmtKind::Expr(e) => out.push_str(&expr(e)),
        StmtKind::Assign { targets, value } => {
            for t in targets {
                let _ = write!(out, "{} = ", target(t));
            }
            out.push_str(&expr(value));
        }
        StmtKind::AugAssign { target: t, op, value } => {
            let _ = write!(out, "{} {}= {}", target(t), op.symbol(), expr(value));
        }
        StmtKind::If { cond, body, orelse } => {
            let _ = writeln!(out, "if {}:", expr(cond));
            block(out, body, level + 1);
            let mut orelse = orelse;
            loop {
                match orelse.as_slice() {
                    [] => break,
                    [Stmt { kind: StmtKind::If { cond, body, orelse: next }, .. }] => {
                        indent(out, level);
                        let _ = writeln!(out, "elif {}:", expr(cond));
                        block(out, body, level + 1);
                        orelse = next;
                    }
                    rest => {
                        indent(out, level);
                        out.push_str("else:\n");
                        block(out, rest, level + 1);
                        break;
                    }
                }
            }
            return;
        }
        StmtKind::For { target: t, iter, body } => {
            let _ = writeln!(out, "for {} in {}:", target(t), expr(iter));
            block(out, body, level + 1);
            return;
        }
        StmtKind::While { cond, body } => {
            let _ = writeln!(out, "while {}:", expr(cond));
            block(out, body, level + 1);
            return;
        }
        StmtKind::FunctionDef(f) => {
            let params: Vec<String> = f
                .params
                .iter()
                .map(|p| match &p.default {
                    Some(d) => format!("{}={}", p.name, expr(d)),
                    None => p.name.clone(),
                })
                .collect();
            let _ = writeln!(out, "def {}({}):", f.name, params.join(", "));
            block(out, &f.body, level + 1);
            return;
        }
        StmtKind::Return(None) => out.push_str("return"),
        StmtKind::Return(Some(e)) => {
            let _ = write!(out, "return {}", expr(e));
        }
        StmtKind::Break => out.push_str("break"),
        StmtKind::Continue => out.push_str("continue"),
        StmtKind::Pass => out.push_str("pass"),
        StmtKind::Import { module, alias } => {
            let _ = write!(out, "import {module}");
            if let Some(a) = alias {
                let _ = write!(out, " as {a}");
            }
        }
        StmtKind::FromImport { module, names } => {
            let names: Vec<String> = names
                .iter()
                .map(|(n, a)| match a {
                    Some(a) => format!("{n} as {a}"),
                    None => n.clone(),
                })
                .collect();
            let _ = write!(out, "from {module} import {}", names.join(", "));
        }
    }
    out.push('\n');
}

pub fn target(t: &Target) -> String {
    match t {
        Target::Name(n) => n.clone(),
        Target::Tuple(items) => tuple(items.iter().map(target).collect()),
        Target::Subscript(v, i) => format!("{}[{}]", atom(v), index(i)),
        Target::Attribute(v, n) => format!("{}.{n}", atom(v)),
    }
}

fn tuple(items: Vec<String>) -> String {
    match items.len() {
        1 => format!("({},)", items[0]),
        _ => format!("({})", items.join(", ")),
    }
}

/// Number literals need parentheses before `.attr`.
fn atom(e: &Expr) -> String {
    match e.kind {
        ExprKind::Int(_) | ExprKind::Float(_) => format!("({})", expr(e)),
        _ => expr(e),
    }
}

fn index(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Slice { lower, upper, step } => {
            let b = |x: &Option<Box<Expr>>| x.as_ref().map(|e| expr(e)).unwrap_or_default();
            match step {
                Some(_) => format!("{}:{}:{}", b(lower), b(upper), b(step)),
                None => format!("{}:{}", b(lower), b(upper)),
            }
        }
        _ => expr(e),
    }
}

pub fn float_literal(f: f64) -> String {
    if f.is_infinite() {
        return "1e999".into();
    }
    format!("{f:?}")
}

pub fn string_literal(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    escape_into(&mut out, s);
    out.push('"');
    out
}

fn escape_into(out: &mut String, s: &str) {
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\'' => out.push_str("\\'"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 || c as u32 == 0x7f => {
                let _ = write!(out, "\\x{:02x}", c as u32);
            }
            c => out.push(c),
        }
    }
}

fn comp(c: &Comprehension) -> String {
    let mut s = format!(" for {} in {}", target(&c.target), expr(&c.iter));
    for cond in &c.conds {
        let _ = write!(s, " if {}", expr(cond));
    }
    s
}

pub fn expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::None => "None".into(),
        ExprKind::Bool(true) => "True".into(),
        ExprKind::Bool(false) => "False".into(),
        ExprKind::Int(i) => i.to_string(),
        ExprKind::Float(f) => float_literal(*f),
        ExprKind::Str(s) => string_literal(s),
        ExprKind::FString(parts) => {
            let mut s = String::from("f'''");
            for p in parts {
                match p {
                    FPart::Lit(l) => {
                        let mut esc = String::new();
                        escape_into(&mut esc, l);
                        s.push_str(&esc.replace('{', "{{").replace('}', "}}"));
                    }
                    FPart::Expr { expr: e, conversion, spec } => {
                        let _ = write!(s, "{{ {} ", expr(e));
                        if let Some(c) = conversion {
                            let _ = write!(s, "!{c}");
                        }
                        if !spec.is_empty() {
                            let _ = write!(s, ":{spec}");
                        }
                        s.push('}');
                    }
                }
            }
            s.push_str("'''");
            s
        }
        ExprKind::List(items) => format!("[{}]", items.iter().map(expr).collect::<Vec<_>>().join(", ")),
        ExprKind::Tuple(items) => tuple(items.iter().map(expr).collect()),
        ExprKind::Dict(pairs) => {
            let items: Vec<String> = pairs.iter().map(|(k, v)| format!("{}: {}", expr(k), expr(v))).collect();
            format!("{{{}}}", items.join(", "))
        }
        ExprKind::Name(n) => n.clone(),
        ExprKind::BinOp { op, left, right } => format!("({} {} {})", expr(left), op.symbol(), expr(right)),
        ExprKind::Unary { op, operand } => match op {
            UnaryOp::Neg => format!("(-{})", expr(operand)),
            UnaryOp::Pos => format!("(+{})", expr(operand)),
            UnaryOp::Not => format!("(not {})", expr(operand)),
        },
        ExprKind::BoolOp { is_and, left, right } => {
            format!("({} {} {})", expr(left), if *is_and { "and" } else { "or" }, expr(right))
        }
        ExprKind::Compare { first, rest } => {
            let mut s = format!("({}", expr(first));
            for (op, e) in rest {
                let _ = write!(s, " {} {}", op.symbol(), expr(e));
            }
            s.push(')');
            s
        }
        ExprKind::IfExp { cond, then, orelse } => format!("({} if {} else {})", expr(then), expr(cond), expr(orelse)),
        ExprKind::Call { func, args, kwargs } => {
            let mut items: Vec<String> = args.iter().map(expr).collect();
            items.extend(kwargs.iter().map(|(k, v)| format!("{k}={}", expr(v))));
            format!("{}({})", atom(func), items.join(", "))
        }
        ExprKind::Attribute { value, name } => format!("{}.{name}", atom(value)),
        ExprKind::Subscript { value, index: i } => format!("{}[{}]", atom(value), index(i)),
        ExprKind::Slice { .. } => format!("[{}]", index(e)),
        ExprKind::ListComp { elt, comp: c, generator } => {
            if *generator {
                format!("({}{})", expr(elt), comp(c))
            } else {
                format!("[{}{}]", expr(elt), comp(c))
            }
        }
        ExprKind::DictComp { key, value, comp: c } => format!("{{{}: {}{}}}", expr(key), expr(value), comp(c)),
    }
}
