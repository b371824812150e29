use std::sync::Arc;

use super::ast::*;
use super::lexer::{tokenize, FRaw, Tok, Token};
use super::ParseError;

const MAX_DEPTH: usize = 100;

const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del",
    "elif", "else", "except", "finally", "for", "from", "global", "if", "import", "in", "is", "lambda", "nonlocal",
    "not", "or", "pass", "raise", "return", "try", "while", "with", "yield",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

/// Parses a complete program.
pub fn parse(source: &str) -> Result<Program, ParseError> {
    let tokens = tokenize(source)?;
    let mut p = Parser { tokens, pos: 0, depth: 0, line_offset: 0 };
    let mut body = Vec::new();
    loop {
        match p.peek() {
            Tok::Eof => break,
            Tok::Newline => {
                p.pos += 1;
            }
            Tok::Indent => return Err(p.error("unexpected indent")),
            _ => body.extend(p.statement()?),
        }
    }
    Ok(Program { body })
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    depth: usize,
    line_offset: u32,
}

type PResult<T> = Result<T, ParseError>;

fn unsupported(construct: &str, line: u32) -> ParseError {
    ParseError::Unsupported { construct: construct.to_string(), line }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.tokens[(self.pos + k).min(self.tokens.len() - 1)].tok
    }

    fn line(&self) -> u32 {
        self.tokens[self.pos].line + self.line_offset
    }

    fn error(&self, msg: impl Into<String>) -> ParseError {
        let t = &self.tokens[self.pos];
        ParseError::Syntax { line: t.line + self.line_offset, col: t.col, message: msg.into() }
    }

    fn unexpected(&self) -> ParseError {
        let what = match self.peek() {
            Tok::Name(n) => format!("'{n}'"),
            Tok::Op(o) => format!("'{o}'"),
            Tok::Newline => "end of line".into(),
            Tok::Indent => "indent".into(),
            Tok::Dedent => "dedent".into(),
            Tok::Eof => "end of input".into(),
            _ => "literal".into(),
        };
        self.error(format!("invalid syntax: unexpected {what}"))
    }

    fn is_op(&self, op: &str) -> bool {
        matches!(self.peek(), Tok::Op(o) if *o == op)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Name(n) if n == kw)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.is_op(op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> PResult<()> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(self.error(format!("expected '{op}'")))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(format!("expected '{kw}'")))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Name(n) if !is_keyword(&n) => {
                self.pos += 1;
                Ok(n)
            }
            _ => Err(self.error("expected a name")),
        }
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.error("too many nested parentheses or blocks"));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    // ---- statements ----

    fn statement(&mut self) -> PResult<Vec<Stmt>> {
        let line = self.line();
        let kw = match self.peek() {
            Tok::Name(n) => n.clone(),
            Tok::Op("@") => return Err(unsupported("decorator", line)),
            _ => String::new(),
        };
        match kw.as_str() {
            "if" => Ok(vec![self.if_stmt()?]),
            "while" => {
                self.pos += 1;
                let cond = self.test()?;
                let body = self.suite()?;
                if self.is_kw("else") {
                    return Err(unsupported("while-else", self.line()));
                }
                Ok(vec![Stmt { kind: StmtKind::While { cond, body }, line }])
            }
            "for" => {
                self.pos += 1;
                let target = self.target_list()?;
                self.expect_kw("in")?;
                let iter = self.testlist()?;
                let body = self.suite()?;
                if self.is_kw("else") {
                    return Err(unsupported("for-else", self.line()));
                }
                Ok(vec![Stmt { kind: StmtKind::For { target, iter, body }, line }])
            }
            "def" => Ok(vec![self.funcdef()?]),
            "class" => Err(unsupported("class", line)),
            "try" => Err(unsupported("try", line)),
            "with" => Err(unsupported("with", line)),
            "async" => Err(unsupported("async", line)),
            "elif" | "else" | "except" | "finally" => Err(self.unexpected()),
            _ => self.simple_stmts(),
        }
    }

    fn simple_stmts(&mut self) -> PResult<Vec<Stmt>> {
        let mut out = vec![];
        loop {
            out.extend(self.simple_stmt()?);
            if !self.eat_op(";") || matches!(self.peek(), Tok::Newline) {
                break;
            }
        }
        match self.peek() {
            Tok::Newline => {
                self.pos += 1;
                Ok(out)
            }
            Tok::Eof | Tok::Dedent => Ok(out),
            _ => Err(self.unexpected()),
        }
    }

    fn simple_stmt(&mut self) -> PResult<Vec<Stmt>> {
        let line = self.line();
        let kw = match self.peek() {
            Tok::Name(n) => n.clone(),
            _ => String::new(),
        };
        let kind = match kw.as_str() {
            "pass" => {
                self.pos += 1;
                StmtKind::Pass
            }
            "break" => {
                self.pos += 1;
                StmtKind::Break
            }
            "continue" => {
                self.pos += 1;
                StmtKind::Continue
            }
            "return" => {
                self.pos += 1;
                let value = if matches!(self.peek(), Tok::Newline | Tok::Eof | Tok::Dedent | Tok::Op(";")) {
                    None
                } else {
                    Some(self.testlist()?)
                };
                StmtKind::Return(value)
            }
            "import" => {
                self.pos += 1;
                let mut out = vec![];
                loop {
                    let module = self.dotted()?;
                    let alias = if self.eat_kw("as") { Some(self.ident()?) } else { None };
                    out.push(Stmt { kind: StmtKind::Import { module, alias }, line });
                    if !self.eat_op(",") {
                        break;
                    }
                }
                return Ok(out);
            }
            "from" => {
                self.pos += 1;
                if self.is_op(".") || self.is_op("...") {
                    return Err(unsupported("relative import", line));
                }
                let module = self.dotted()?;
                self.expect_kw("import")?;
                if self.is_op("*") {
                    return Err(unsupported("wildcard import", line));
                }
                let paren = self.eat_op("(");
                let mut names = vec![];
                loop {
                    let name = self.ident()?;
                    let alias = if self.eat_kw("as") { Some(self.ident()?) } else { None };
                    names.push((name, alias));
                    if !self.eat_op(",") || (paren && self.is_op(")")) {
                        break;
                    }
                }
                if paren {
                    self.expect_op(")")?;
                }
                StmtKind::FromImport { module, names }
            }
            "raise" | "global" | "nonlocal" | "del" | "assert" | "yield" | "await" => {
                return Err(unsupported(&kw, line));
            }
            _ => return Ok(vec![self.expr_stmt()?]),
        };
        Ok(vec![Stmt { kind, line }])
    }

    fn dotted(&mut self) -> PResult<String> {
        let mut s = self.ident()?;
        while self.eat_op(".") {
            s.push('.');
            s.push_str(&self.ident()?);
        }
        Ok(s)
    }

    fn expr_stmt(&mut self) -> PResult<Stmt> {
        let line = self.line();
        let first = self.testlist_star()?;
        if let Tok::Op(op) = self.peek() {
            let aug = match *op {
                "+=" => Some(BinOp::Add),
                "-=" => Some(BinOp::Sub),
                "*=" => Some(BinOp::Mul),
                "/=" => Some(BinOp::Div),
                "//=" => Some(BinOp::FloorDiv),
                "%=" => Some(BinOp::Mod),
                "**=" => Some(BinOp::Pow),
                "&=" | "|=" | "^=" | "<<=" | ">>=" => return Err(unsupported("bitwise operator", line)),
                ":=" => return Err(unsupported("assignment expression", line)),
                _ => None,
            };
            if let Some(op) = aug {
                self.pos += 1;
                let target = self.to_target(first)?;
                if matches!(target, Target::Tuple(_)) {
                    return Err(self.error("illegal expression for augmented assignment"));
                }
                let value = self.testlist()?;
                return Ok(Stmt { kind: StmtKind::AugAssign { target, op, value }, line });
            }
        }
        if self.is_op(":") {
            // annotated assignment; the annotation is discarded
            self.pos += 1;
            let target = self.to_target(first)?;
            self.test()?;
            if self.eat_op("=") {
                let value = self.testlist()?;
                return Ok(Stmt { kind: StmtKind::Assign { targets: vec![target], value }, line });
            }
            return Ok(Stmt { kind: StmtKind::Pass, line });
        }
        if self.is_op("=") {
            let mut exprs = vec![first];
            while self.eat_op("=") {
                exprs.push(self.testlist_star()?);
            }
            let value = exprs.pop().unwrap();
            let targets = exprs.into_iter().map(|e| self.to_target(e)).collect::<PResult<_>>()?;
            return Ok(Stmt { kind: StmtKind::Assign { targets, value }, line });
        }
        Ok(Stmt { kind: StmtKind::Expr(first), line })
    }

    fn to_target(&self, e: Expr) -> PResult<Target> {
        let line = e.line;
        match e.kind {
            ExprKind::Name(n) => Ok(Target::Name(n)),
            ExprKind::Tuple(items) | ExprKind::List(items) => {
                Ok(Target::Tuple(items.into_iter().map(|i| self.to_target(i)).collect::<PResult<_>>()?))
            }
            ExprKind::Subscript { value, index } => Ok(Target::Subscript(value, index)),
            ExprKind::Attribute { value, name } => Ok(Target::Attribute(value, name)),
            _ => Err(ParseError::Syntax { line, col: 1, message: "cannot assign to expression".into() }),
        }
    }

    fn if_stmt(&mut self) -> PResult<Stmt> {
        let line = self.line();
        self.pos += 1; // `if` or `elif`
        let cond = self.test()?;
        let body = self.suite()?;
        let orelse = if self.is_kw("elif") {
            vec![self.if_stmt()?]
        } else if self.eat_kw("else") {
            self.suite()?
        } else {
            vec![]
        };
        Ok(Stmt { kind: StmtKind::If { cond, body, orelse }, line })
    }

    fn funcdef(&mut self) -> PResult<Stmt> {
        let line = self.line();
        self.pos += 1;
        let name = self.ident()?;
        self.expect_op("(")?;
        let mut params: Vec<Param> = vec![];
        while !self.is_op(")") {
            if self.is_op("*") || self.is_op("**") || self.is_op("/") {
                return Err(unsupported("starred parameters", self.line()));
            }
            let pname = self.ident()?;
            if self.eat_op(":") {
                self.test()?;
            }
            let default = if self.eat_op("=") { Some(self.test()?) } else { None };
            if default.is_none() && params.iter().any(|p| p.default.is_some()) {
                return Err(self.error("non-default argument follows default argument"));
            }
            if params.iter().any(|p| p.name == pname) {
                return Err(self.error(format!("duplicate argument '{pname}' in function definition")));
            }
            params.push(Param { name: pname, default });
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(")")?;
        if self.eat_op("->") {
            self.test()?;
        }
        let body = self.suite()?;
        Ok(Stmt { kind: StmtKind::FunctionDef(Arc::new(FunctionDef { name, params, body })), line })
    }

    fn suite(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_op(":")?;
        self.enter()?;
        let body = if matches!(self.peek(), Tok::Newline) {
            self.pos += 1;
            if !matches!(self.peek(), Tok::Indent) {
                return Err(self.error("expected an indented block"));
            }
            self.pos += 1;
            let mut body = vec![];
            while !matches!(self.peek(), Tok::Dedent | Tok::Eof) {
                if matches!(self.peek(), Tok::Newline) {
                    self.pos += 1;
                    continue;
                }
                body.extend(self.statement()?);
            }
            if matches!(self.peek(), Tok::Dedent) {
                self.pos += 1;
            }
            body
        } else {
            self.simple_stmts()?
        };
        self.leave();
        Ok(body)
    }

    // ---- expressions ----

    fn testlist(&mut self) -> PResult<Expr> {
        self.testlist_with(Self::test)
    }

    fn testlist_star(&mut self) -> PResult<Expr> {
        if self.is_op("*") {
            return Err(unsupported("starred expression", self.line()));
        }
        self.testlist()
    }

    fn target_list(&mut self) -> PResult<Target> {
        let e = self.testlist_with(Self::bitor)?;
        self.to_target(e)
    }

    fn testlist_with(&mut self, f: fn(&mut Self) -> PResult<Expr>) -> PResult<Expr> {
        let line = self.line();
        let first = f(self)?;
        if !self.is_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_expr_end() {
                break;
            }
            if self.is_op("*") {
                return Err(unsupported("starred expression", self.line()));
            }
            items.push(f(self)?);
        }
        Ok(Expr::new(ExprKind::Tuple(items), line))
    }

    fn at_expr_end(&self) -> bool {
        match self.peek() {
            Tok::Newline | Tok::Eof | Tok::Dedent => true,
            Tok::Op(o) => matches!(*o, "=" | ")" | "]" | "}" | ":" | ";" | "+=" | "-=" | "*=" | "/=" | "//=" | "%=" | "**="),
            Tok::Name(n) => n == "in",
            _ => false,
        }
    }

    fn test(&mut self) -> PResult<Expr> {
        if self.is_kw("lambda") {
            return Err(unsupported("lambda", self.line()));
        }
        self.enter()?;
        let line = self.line();
        let e = self.or_test()?;
        let out = if self.is_kw("if") && !self.in_comp_if() {
            self.pos += 1;
            let cond = self.or_test()?;
            self.expect_kw("else")?;
            let orelse = self.test()?;
            Expr::new(ExprKind::IfExp { cond: Box::new(cond), then: Box::new(e), orelse: Box::new(orelse) }, line)
        } else {
            e
        };
        self.leave();
        Ok(out)
    }

    /// An `if` without a matching `else` on this bracket level belongs to a
    /// comprehension, not to a conditional expression.
    fn in_comp_if(&self) -> bool {
        let mut depth = 0i32;
        let mut i = self.pos + 1;
        while i < self.tokens.len() {
            match &self.tokens[i].tok {
                Tok::Op("(" | "[" | "{") => depth += 1,
                Tok::Op(")" | "]" | "}") => {
                    if depth == 0 {
                        return true;
                    }
                    depth -= 1;
                }
                Tok::Name(n) if depth == 0 && n == "else" => return false,
                Tok::Name(n) if depth == 0 && (n == "for" || n == "if") => return true,
                Tok::Op(",") if depth == 0 => return true,
                Tok::Newline | Tok::Eof => return true,
                _ => {}
            }
            i += 1;
        }
        true
    }

    fn or_test(&mut self) -> PResult<Expr> {
        let line = self.line();
        let mut left = self.and_test()?;
        while self.eat_kw("or") {
            let right = self.and_test()?;
            left = Expr::new(ExprKind::BoolOp { is_and: false, left: Box::new(left), right: Box::new(right) }, line);
        }
        Ok(left)
    }

    fn and_test(&mut self) -> PResult<Expr> {
        let line = self.line();
        let mut left = self.not_test()?;
        while self.eat_kw("and") {
            let right = self.not_test()?;
            left = Expr::new(ExprKind::BoolOp { is_and: true, left: Box::new(left), right: Box::new(right) }, line);
        }
        Ok(left)
    }

    fn not_test(&mut self) -> PResult<Expr> {
        let line = self.line();
        if self.eat_kw("not") {
            self.enter()?;
            let operand = self.not_test()?;
            self.leave();
            return Ok(Expr::new(ExprKind::Unary { op: UnaryOp::Not, operand: Box::new(operand) }, line));
        }
        self.comparison()
    }

    fn comp_op(&mut self) -> Option<CmpOp> {
        let op = match self.peek() {
            Tok::Op("==") => CmpOp::Eq,
            Tok::Op("!=") => CmpOp::Ne,
            Tok::Op("<") => CmpOp::Lt,
            Tok::Op("<=") => CmpOp::Le,
            Tok::Op(">") => CmpOp::Gt,
            Tok::Op(">=") => CmpOp::Ge,
            Tok::Name(n) if n == "in" => CmpOp::In,
            Tok::Name(n) if n == "not" && matches!(self.peek_at(1), Tok::Name(m) if m == "in") => {
                self.pos += 2;
                return Some(CmpOp::NotIn);
            }
            Tok::Name(n) if n == "is" => {
                if matches!(self.peek_at(1), Tok::Name(m) if m == "not") {
                    self.pos += 2;
                    return Some(CmpOp::IsNot);
                }
                CmpOp::Is
            }
            _ => return None,
        };
        self.pos += 1;
        Some(op)
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let line = self.line();
        let first = self.bitor()?;
        let mut rest = vec![];
        while let Some(op) = self.comp_op() {
            rest.push((op, self.bitor()?));
        }
        if rest.is_empty() {
            Ok(first)
        } else {
            Ok(Expr::new(ExprKind::Compare { first: Box::new(first), rest }, line))
        }
    }

    fn bitor(&mut self) -> PResult<Expr> {
        let e = self.arith()?;
        if matches!(self.peek(), Tok::Op("|" | "^" | "&" | "<<" | ">>")) {
            return Err(unsupported("bitwise operator", self.line()));
        }
        Ok(e)
    }

    fn arith(&mut self) -> PResult<Expr> {
        let line = self.line();
        let mut left = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op("+") => BinOp::Add,
                Tok::Op("-") => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let right = self.term()?;
            left = Expr::new(ExprKind::BinOp { op, left: Box::new(left), right: Box::new(right) }, line);
        }
        Ok(left)
    }

    fn term(&mut self) -> PResult<Expr> {
        let line = self.line();
        let mut left = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Op("*") => BinOp::Mul,
                Tok::Op("/") => BinOp::Div,
                Tok::Op("//") => BinOp::FloorDiv,
                Tok::Op("%") => BinOp::Mod,
                Tok::Op("@") => return Err(unsupported("matrix multiplication", self.line())),
                _ => break,
            };
            self.pos += 1;
            let right = self.factor()?;
            left = Expr::new(ExprKind::BinOp { op, left: Box::new(left), right: Box::new(right) }, line);
        }
        Ok(left)
    }

    fn factor(&mut self) -> PResult<Expr> {
        let line = self.line();
        let op = match self.peek() {
            Tok::Op("-") => UnaryOp::Neg,
            Tok::Op("+") => UnaryOp::Pos,
            Tok::Op("~") => return Err(unsupported("bitwise operator", line)),
            _ => return self.power(),
        };
        self.pos += 1;
        self.enter()?;
        let operand = self.factor()?;
        self.leave();
        Ok(Expr::new(ExprKind::Unary { op, operand: Box::new(operand) }, line))
    }

    fn power(&mut self) -> PResult<Expr> {
        let line = self.line();
        let base = self.primary()?;
        if self.eat_op("**") {
            self.enter()?;
            let exp = self.factor()?;
            self.leave();
            return Ok(Expr::new(ExprKind::BinOp { op: BinOp::Pow, left: Box::new(base), right: Box::new(exp) }, line));
        }
        Ok(base)
    }

    fn primary(&mut self) -> PResult<Expr> {
        if self.is_kw("await") {
            return Err(unsupported("await", self.line()));
        }
        let mut e = self.atom()?;
        loop {
            let line = self.line();
            if self.eat_op(".") {
                let name = self.ident()?;
                e = Expr::new(ExprKind::Attribute { value: Box::new(e), name }, line);
            } else if self.eat_op("(") {
                self.enter()?;
                let (args, kwargs) = self.call_args()?;
                self.leave();
                e = Expr::new(ExprKind::Call { func: Box::new(e), args, kwargs }, line);
            } else if self.eat_op("[") {
                self.enter()?;
                let index = self.subscript_list()?;
                self.leave();
                self.expect_op("]")?;
                e = Expr::new(ExprKind::Subscript { value: Box::new(e), index: Box::new(index) }, line);
            } else {
                break;
            }
        }
        Ok(e)
    }

    fn call_args(&mut self) -> PResult<(Vec<Expr>, Vec<(String, Expr)>)> {
        let mut args = vec![];
        let mut kwargs: Vec<(String, Expr)> = vec![];
        while !self.is_op(")") {
            if self.is_op("*") || self.is_op("**") {
                return Err(unsupported("starred arguments", self.line()));
            }
            if let (Tok::Name(n), Tok::Op("=")) = (self.peek().clone(), self.peek_at(1)) {
                if is_keyword(&n) {
                    return Err(self.error("expression cannot contain assignment"));
                }
                self.pos += 2;
                if kwargs.iter().any(|(k, _)| *k == n) {
                    return Err(self.error(format!("keyword argument repeated: {n}")));
                }
                kwargs.push((n, self.test()?));
            } else {
                if !kwargs.is_empty() {
                    return Err(self.error("positional argument follows keyword argument"));
                }
                let line = self.line();
                let e = self.test()?;
                if self.is_kw("for") {
                    let comp = self.comprehension()?;
                    if !args.is_empty() || !self.is_op(")") {
                        return Err(self.error("generator expression must be parenthesized"));
                    }
                    args.push(Expr::new(ExprKind::ListComp { elt: Box::new(e), comp, generator: true }, line));
                    break;
                }
                args.push(e);
            }
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(")")?;
        Ok((args, kwargs))
    }

    fn subscript_list(&mut self) -> PResult<Expr> {
        let line = self.line();
        let first = self.subscript()?;
        if !self.is_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.is_op("]") {
                break;
            }
            items.push(self.subscript()?);
        }
        if items.iter().any(|e| matches!(e.kind, ExprKind::Slice { .. })) {
            return Err(unsupported("multi-dimensional slicing", line));
        }
        Ok(Expr::new(ExprKind::Tuple(items), line))
    }

    fn subscript(&mut self) -> PResult<Expr> {
        let line = self.line();
        let lower = if self.is_op(":") { None } else { Some(Box::new(self.test()?)) };
        if !self.is_op(":") {
            return Ok(*lower.unwrap());
        }
        self.pos += 1;
        let bound = |p: &mut Self| -> PResult<Option<Box<Expr>>> {
            if p.is_op(":") || p.is_op("]") || p.is_op(",") {
                Ok(None)
            } else {
                Ok(Some(Box::new(p.test()?)))
            }
        };
        let upper = bound(self)?;
        let step = if self.eat_op(":") { bound(self)? } else { None };
        Ok(Expr::new(ExprKind::Slice { lower, upper, step }, line))
    }

    fn comprehension(&mut self) -> PResult<Comprehension> {
        if self.is_kw("async") {
            return Err(unsupported("async comprehension", self.line()));
        }
        self.expect_kw("for")?;
        let target = self.target_list()?;
        self.expect_kw("in")?;
        let iter = self.or_test()?;
        let mut conds = vec![];
        while self.eat_kw("if") {
            conds.push(self.or_test()?);
        }
        if self.is_kw("for") || self.is_kw("async") {
            return Err(unsupported("comprehension with multiple for-clauses", self.line()));
        }
        Ok(Comprehension { target, iter: Box::new(iter), conds })
    }

    fn atom(&mut self) -> PResult<Expr> {
        let line = self.line();
        let tok = self.peek().clone();
        match tok {
            Tok::Int(i) => {
                self.pos += 1;
                Ok(Expr::new(ExprKind::Int(i), line))
            }
            Tok::Float(f) => {
                self.pos += 1;
                Ok(Expr::new(ExprKind::Float(f), line))
            }
            Tok::Str(_) | Tok::FStr(_) | Tok::Bytes => self.strings(),
            Tok::Name(n) => {
                self.pos += 1;
                match n.as_str() {
                    "None" => Ok(Expr::new(ExprKind::None, line)),
                    "True" => Ok(Expr::new(ExprKind::Bool(true), line)),
                    "False" => Ok(Expr::new(ExprKind::Bool(false), line)),
                    "lambda" | "yield" | "await" => Err(unsupported(&n, line)),
                    _ if is_keyword(&n) => {
                        self.pos -= 1;
                        Err(self.unexpected())
                    }
                    _ => Ok(Expr::new(ExprKind::Name(n), line)),
                }
            }
            Tok::Op("(") => {
                self.pos += 1;
                self.enter()?;
                let e = if self.eat_op(")") {
                    Expr::new(ExprKind::Tuple(vec![]), line)
                } else {
                    if self.is_kw("yield") {
                        return Err(unsupported("yield", line));
                    }
                    if self.is_op("*") {
                        return Err(unsupported("starred expression", line));
                    }
                    let first = self.test()?;
                    let e = if self.is_kw("for") {
                        let comp = self.comprehension()?;
                        Expr::new(ExprKind::ListComp { elt: Box::new(first), comp, generator: true }, line)
                    } else if self.is_op(",") {
                        let mut items = vec![first];
                        while self.eat_op(",") {
                            if self.is_op(")") {
                                break;
                            }
                            items.push(self.test()?);
                        }
                        Expr::new(ExprKind::Tuple(items), line)
                    } else if self.is_op(":=") {
                        return Err(unsupported("assignment expression", line));
                    } else {
                        first
                    };
                    self.expect_op(")")?;
                    e
                };
                self.leave();
                Ok(e)
            }
            Tok::Op("[") => {
                self.pos += 1;
                self.enter()?;
                let mut items = vec![];
                if !self.is_op("]") {
                    if self.is_op("*") {
                        return Err(unsupported("starred expression", line));
                    }
                    let first = self.test()?;
                    if self.is_kw("for") {
                        let comp = self.comprehension()?;
                        self.expect_op("]")?;
                        self.leave();
                        return Ok(Expr::new(ExprKind::ListComp { elt: Box::new(first), comp, generator: false }, line));
                    }
                    items.push(first);
                    while self.eat_op(",") {
                        if self.is_op("]") {
                            break;
                        }
                        if self.is_op("*") {
                            return Err(unsupported("starred expression", line));
                        }
                        items.push(self.test()?);
                    }
                }
                self.expect_op("]")?;
                self.leave();
                Ok(Expr::new(ExprKind::List(items), line))
            }
            Tok::Op("{") => {
                self.pos += 1;
                self.enter()?;
                let mut pairs = vec![];
                if !self.is_op("}") {
                    if self.is_op("**") {
                        return Err(unsupported("dict unpacking", line));
                    }
                    let k = self.test()?;
                    if !self.eat_op(":") {
                        return Err(unsupported("set", line));
                    }
                    let v = self.test()?;
                    if self.is_kw("for") {
                        let comp = self.comprehension()?;
                        self.expect_op("}")?;
                        self.leave();
                        return Ok(Expr::new(ExprKind::DictComp { key: Box::new(k), value: Box::new(v), comp }, line));
                    }
                    pairs.push((k, v));
                    while self.eat_op(",") {
                        if self.is_op("}") {
                            break;
                        }
                        if self.is_op("**") {
                            return Err(unsupported("dict unpacking", line));
                        }
                        let k = self.test()?;
                        self.expect_op(":")?;
                        pairs.push((k, self.test()?));
                    }
                }
                self.expect_op("}")?;
                self.leave();
                Ok(Expr::new(ExprKind::Dict(pairs), line))
            }
            Tok::Op("...") => Err(unsupported("ellipsis", line)),
            _ => Err(self.unexpected()),
        }
    }

    fn strings(&mut self) -> PResult<Expr> {
        let line = self.line();
        let mut parts: Vec<FPart> = vec![];
        let mut any_f = false;
        loop {
            match self.peek().clone() {
                Tok::Str(s) => {
                    self.pos += 1;
                    push_lit(&mut parts, s);
                }
                Tok::FStr(raw) => {
                    self.pos += 1;
                    any_f = true;
                    for r in raw {
                        match r {
                            FRaw::Lit(s) => push_lit(&mut parts, s),
                            FRaw::Expr { src, conversion, spec } => {
                                let expr = self.fstring_expr(&src, line)?;
                                parts.push(FPart::Expr { expr: Box::new(expr), conversion, spec });
                            }
                        }
                    }
                }
                Tok::Bytes => return Err(unsupported("bytes literal", line)),
                _ => break,
            }
        }
        if any_f {
            Ok(Expr::new(ExprKind::FString(parts), line))
        } else {
            let s = match parts.pop() {
                Some(FPart::Lit(s)) => s,
                _ => String::new(),
            };
            Ok(Expr::new(ExprKind::Str(s), line))
        }
    }

    fn fstring_expr(&mut self, src: &str, line: u32) -> PResult<Expr> {
        let tokens = tokenize(&format!("({src})"))?;
        let mut sub = Parser { tokens, pos: 0, depth: self.depth, line_offset: line - 1 };
        let e = sub.testlist()?;
        // strip the synthetic parentheses' trailing newline
        while matches!(sub.peek(), Tok::Newline) {
            sub.pos += 1;
        }
        if !matches!(sub.peek(), Tok::Eof) {
            return Err(sub.unexpected());
        }
        Ok(e)
    }
}

fn push_lit(parts: &mut Vec<FPart>, s: String) {
    if let Some(FPart::Lit(prev)) = parts.last_mut() {
        prev.push_str(&s);
    } else if !s.is_empty() {
        parts.push(FPart::Lit(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kind(src: &str) -> StmtKind {
        parse(src).unwrap().body.remove(0).kind
    }

    #[test]
    fn assignment() {
        let p = parse("x = 1 + 2").unwrap();
        assert_eq!(p.body.len(), 1);
        assert!(matches!(&p.body[0].kind, StmtKind::Assign { targets, .. } if targets == &[Target::Name("x".into())]));
    }

    #[test]
    fn syntax_error_position() {
        match parse("def f(:") {
            Err(ParseError::Syntax { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
        match parse("x = 1\ny = (2 +\n") {
            Err(ParseError::Syntax { .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unsupported_constructs() {
        let cases = [
            ("class A: pass", "class"),
            ("@dec\ndef f(): pass", "decorator"),
            ("with x: pass", "with"),
            ("try:\n    x\nexcept E:\n    pass", "try"),
            ("f = lambda x: x", "lambda"),
            ("[x for x in a for y in b]", "comprehension with multiple for-clauses"),
            ("def f(*a): pass", "starred parameters"),
            ("f(*a)", "starred arguments"),
            ("global x", "global"),
            ("{1, 2}", "set"),
            ("x = y | z", "bitwise operator"),
        ];
        for (src, name) in cases {
            match parse(src) {
                Err(ParseError::Unsupported { construct, line }) => {
                    assert_eq!(construct, name, "{src}");
                    assert_eq!(line, 1, "{src}");
                }
                other => panic!("{src}: {other:?}"),
            }
        }
        let err = parse("for i in x:\n    pass\nelse:\n    pass").unwrap_err();
        assert_eq!(err, ParseError::Unsupported { construct: "for-else".into(), line: 3 });
    }

    #[test]
    fn precedence() {
        let StmtKind::Expr(e) = kind("-2 ** 2") else { panic!() };
        assert!(matches!(e.kind, ExprKind::Unary { op: UnaryOp::Neg, .. }));
        let StmtKind::Expr(e) = kind("1 + 2 * 3") else { panic!() };
        assert!(matches!(e.kind, ExprKind::BinOp { op: BinOp::Add, .. }));
        let StmtKind::Expr(e) = kind("a < b < c") else { panic!() };
        assert!(matches!(e.kind, ExprKind::Compare { ref rest, .. } if rest.len() == 2));
        let StmtKind::Expr(e) = kind("x not in y") else { panic!() };
        assert!(matches!(e.kind, ExprKind::Compare { ref rest, .. } if rest[0].0 == CmpOp::NotIn));
    }

    #[test]
    fn comprehension_with_ternary() {
        let StmtKind::Expr(e) = kind("[a if a > 0 else 0 for a in xs if a]") else { panic!() };
        let ExprKind::ListComp { elt, comp, .. } = e.kind else { panic!() };
        assert!(matches!(elt.kind, ExprKind::IfExp { .. }));
        assert_eq!(comp.conds.len(), 1);
    }

    #[test]
    fn generator_argument() {
        let StmtKind::Expr(e) = kind("sum(x * 2 for x in xs)") else { panic!() };
        let ExprKind::Call { args, .. } = e.kind else { panic!() };
        assert!(matches!(args[0].kind, ExprKind::ListComp { generator: true, .. }));
    }

    #[test]
    fn elif_chain_and_inline_suite() {
        let StmtKind::If { orelse, .. } = kind("if a: x = 1\nelif b: x = 2\nelse: x = 3\n") else { panic!() };
        assert!(matches!(orelse[0].kind, StmtKind::If { .. }));
    }

    #[test]
    fn nesting_limit() {
        let deep = format!("{}1{}", "(".repeat(500), ")".repeat(500));
        assert!(matches!(parse(&deep), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn fstring_expression_lines() {
        let p = parse("a = 1\nb = f'{a + 1:>4}'\n").unwrap();
        let StmtKind::Assign { value, .. } = &p.body[1].kind else { panic!() };
        let ExprKind::FString(parts) = &value.kind else { panic!() };
        let FPart::Expr { expr, spec, .. } = &parts[0] else { panic!() };
        assert_eq!(expr.line, 2);
        assert_eq!(spec, ">4");
    }

    #[test]
    fn annotations_are_dropped() {
        assert!(matches!(kind("def f(x: int = 1) -> float:\n    return x\n"), StmtKind::FunctionDef(_)));
        assert!(matches!(kind("x: int = 5"), StmtKind::Assign { .. }));
    }
}
