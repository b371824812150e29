use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Name(String),
    Int(i64),
    Float(f64),
    Str(String),
    FStr(Vec<FRaw>),
    Bytes,
    Op(&'static str),
    Newline,
    Indent,
    Dedent,
    Eof,
}

/// Raw f-string piece; expression sources are parsed later.
#[derive(Debug, Clone, PartialEq)]
pub enum FRaw {
    Lit(String),
    Expr { src: String, conversion: Option<char>, spec: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

const OPS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "...", "**", "//", "==", "!=", "<=", ">=", "->", "+=", "-=", "*=", "/=", "%=", "&=",
    "|=", "^=", "<<", ">>", ":=", "+", "-", "*", "/", "%", "<", ">", "=", "(", ")", "[", "]", "{", "}", ",", ":",
    ".", ";", "@", "&", "|", "^", "~",
];

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    col: u32,
    indents: Vec<u32>,
    depth: i32,
    out: Vec<Token>,
}

fn err(line: u32, col: u32, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, col, message: msg.into() }
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut lx = Lexer {
        chars: src.chars().collect(),
        pos: 0,
        line: 1,
        col: 1,
        indents: vec![0],
        depth: 0,
        out: Vec::new(),
    };
    lx.run()?;
    Ok(lx.out)
}

impl Lexer {
    fn peek(&self, k: usize) -> Option<char> {
        self.chars.get(self.pos + k).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn push(&mut self, tok: Tok, line: u32, col: u32) {
        self.out.push(Token { tok, line, col });
    }

    fn run(&mut self) -> Result<(), ParseError> {
        let mut at_line_start = true;
        loop {
            if at_line_start && self.depth == 0 {
                at_line_start = false;
                if self.indentation()? {
                    continue;
                }
            }
            let Some(c) = self.peek(0) else { break };
            let (line, col) = (self.line, self.col);
            match c {
                '\n' => {
                    self.bump();
                    if self.depth == 0 {
                        if !matches!(self.out.last().map(|t| &t.tok), None | Some(Tok::Newline)) {
                            self.push(Tok::Newline, line, col);
                        }
                        at_line_start = true;
                    }
                }
                ' ' | '\t' | '\r' | '\x0c' => {
                    self.bump();
                }
                '#' => {
                    while self.peek(0).is_some_and(|c| c != '\n') {
                        self.bump();
                    }
                }
                '\\' if self.peek(1) == Some('\n') => {
                    self.bump();
                    self.bump();
                }
                '\\' if self.peek(1) == Some('\r') && self.peek(2) == Some('\n') => {
                    self.bump();
                    self.bump();
                    self.bump();
                }
                c if c.is_ascii_digit() || (c == '.' && self.peek(1).is_some_and(|d| d.is_ascii_digit())) => {
                    let tok = self.number()?;
                    self.push(tok, line, col);
                }
                c if c.is_alphabetic() || c == '_' => {
                    let mut name = String::new();
                    while let Some(c) = self.peek(0).filter(|c| c.is_alphanumeric() || *c == '_') {
                        name.push(c);
                        self.bump();
                    }
                    let quote = self.peek(0).filter(|q| *q == '"' || *q == '\'');
                    let prefix = name.to_ascii_lowercase();
                    if let (Some(q), true) =
                        (quote, matches!(prefix.as_str(), "r" | "b" | "f" | "rb" | "br" | "fr" | "rf" | "u"))
                    {
                        let raw = prefix.contains('r');
                        let body = self.string_body(q, raw, line, col)?;
                        let tok = if prefix.contains('b') {
                            Tok::Bytes
                        } else if prefix.contains('f') {
                            Tok::FStr(split_fstring(&body.1, raw, line, col)?)
                        } else {
                            Tok::Str(body.0)
                        };
                        self.push(tok, line, col);
                    } else {
                        self.push(Tok::Name(name), line, col);
                    }
                }
                '"' | '\'' => {
                    let (s, _) = self.string_body(c, false, line, col)?;
                    self.push(Tok::Str(s), line, col);
                }
                _ => {
                    let op = OPS
                        .iter()
                        .find(|op| op.chars().enumerate().all(|(i, oc)| self.peek(i) == Some(oc)))
                        .ok_or_else(|| err(line, col, format!("invalid character {c:?}")))?;
                    for _ in 0..op.chars().count() {
                        self.bump();
                    }
                    match *op {
                        "(" | "[" | "{" => self.depth += 1,
                        ")" | "]" | "}" => {
                            self.depth -= 1;
                            if self.depth < 0 {
                                return Err(err(line, col, format!("unmatched '{op}'")));
                            }
                        }
                        _ => {}
                    }
                    self.push(Tok::Op(op), line, col);
                }
            }
        }
        if self.depth > 0 {
            return Err(err(self.line, self.col, "unexpected EOF: unclosed bracket"));
        }
        if !matches!(self.out.last().map(|t| &t.tok), None | Some(Tok::Newline)) {
            self.push(Tok::Newline, self.line, self.col);
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(Tok::Dedent, self.line, self.col);
        }
        self.push(Tok::Eof, self.line, self.col);
        Ok(())
    }

    /// Measures leading whitespace; returns true if the line was blank.
    fn indentation(&mut self) -> Result<bool, ParseError> {
        let mut width = 0u32;
        loop {
            match self.peek(0) {
                Some(' ') => width += 1,
                Some('\t') => width = (width / 8 + 1) * 8,
                Some('\x0c') | Some('\r') => {}
                _ => break,
            }
            self.bump();
        }
        match self.peek(0) {
            None => return Ok(false),
            Some('\n') => {
                self.bump();
                return Ok(true);
            }
            Some('#') => {
                while self.peek(0).is_some_and(|c| c != '\n') {
                    self.bump();
                }
                if self.peek(0) == Some('\n') {
                    self.bump();
                }
                return Ok(true);
            }
            _ => {}
        }
        let (line, col) = (self.line, self.col);
        let top = *self.indents.last().unwrap();
        if width > top {
            self.indents.push(width);
            self.push(Tok::Indent, line, col);
        } else {
            while width < *self.indents.last().unwrap() {
                self.indents.pop();
                self.push(Tok::Dedent, line, col);
            }
            if width != *self.indents.last().unwrap() {
                return Err(err(line, col, "unindent does not match any outer indentation level"));
            }
        }
        Ok(false)
    }

    fn number(&mut self) -> Result<Tok, ParseError> {
        let (line, col) = (self.line, self.col);
        let mut s = String::new();
        if self.peek(0) == Some('0') && matches!(self.peek(1), Some('x' | 'X' | 'o' | 'O' | 'b' | 'B')) {
            self.bump();
            let radix = match self.bump().unwrap().to_ascii_lowercase() {
                'x' => 16,
                'o' => 8,
                _ => 2,
            };
            while let Some(c) = self.peek(0).filter(|c| c.is_ascii_alphanumeric() || *c == '_') {
                if c != '_' {
                    s.push(c);
                }
                self.bump();
            }
            return i64::from_str_radix(&s, radix)
                .map(Tok::Int)
                .map_err(|_| err(line, col, "invalid or too large integer literal"));
        }
        let mut is_float = false;
        while let Some(c) = self.peek(0) {
            if c.is_ascii_digit() || c == '_' {
                if c != '_' {
                    s.push(c);
                }
            } else if c == '.' && !is_float && !s.contains('e') {
                is_float = true;
                s.push(c);
            } else if (c == 'e' || c == 'E') && !s.contains('e') {
                let sign = matches!(self.peek(1), Some('+' | '-'));
                let digit_at = if sign { 2 } else { 1 };
                if !self.peek(digit_at).is_some_and(|d| d.is_ascii_digit()) {
                    break;
                }
                is_float = true;
                s.push('e');
                self.bump();
                if sign {
                    s.push(self.bump().unwrap());
                }
                continue;
            } else {
                break;
            }
            self.bump();
        }
        if self.peek(0).is_some_and(|c| c == 'j' || c == 'J') {
            return Err(ParseError::Unsupported { construct: "complex literal".into(), line });
        }
        if self.peek(0).is_some_and(|c| c.is_alphanumeric() || c == '_') {
            return Err(err(self.line, self.col, "invalid decimal literal"));
        }
        if is_float {
            s.parse::<f64>().map(Tok::Float).map_err(|_| err(line, col, "invalid float literal"))
        } else {
            if s.len() > 1 && s.starts_with('0') && s.chars().any(|c| c != '0') {
                return Err(err(line, col, "leading zeros in decimal integer literals are not permitted"));
            }
            s.parse::<i64>().map(Tok::Int).map_err(|_| err(line, col, "integer literal too large"))
        }
    }

    /// Returns (decoded value, raw body). The raw body is kept for f-strings,
    /// whose escapes are decoded per literal piece.
    fn string_body(&mut self, q: char, raw: bool, line: u32, col: u32) -> Result<(String, String), ParseError> {
        let triple = self.peek(1) == Some(q) && self.peek(2) == Some(q);
        let n = if triple { 3 } else { 1 };
        for _ in 0..n {
            self.bump();
        }
        let mut body = String::new();
        loop {
            let Some(c) = self.peek(0) else {
                return Err(err(line, col, "unterminated string literal"));
            };
            if c == q && (!triple || (self.peek(1) == Some(q) && self.peek(2) == Some(q))) {
                for _ in 0..n {
                    self.bump();
                }
                break;
            }
            if c == '\n' && !triple {
                return Err(err(line, col, "unterminated string literal"));
            }
            if c == '\\' {
                body.push(c);
                self.bump();
                if let Some(next) = self.bump() {
                    body.push(next);
                }
                continue;
            }
            body.push(c);
            self.bump();
        }
        let value = if raw { body.clone() } else { unescape(&body, line, col)? };
        Ok((value, body))
    }
}

pub fn unescape(s: &str, line: u32, col: u32) -> Result<String, ParseError> {
    let mut out = String::with_capacity(s.len());
    let mut it = s.chars().peekable();
    while let Some(c) = it.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        let Some(e) = it.next() else {
            out.push('\\');
            break;
        };
        match e {
            'n' => out.push('\n'),
            't' => out.push('\t'),
            'r' => out.push('\r'),
            '0' => out.push('\0'),
            'a' => out.push('\x07'),
            'b' => out.push('\x08'),
            'f' => out.push('\x0c'),
            'v' => out.push('\x0b'),
            '\\' => out.push('\\'),
            '\'' => out.push('\''),
            '"' => out.push('"'),
            '\n' => {}
            'x' | 'u' | 'U' => {
                let len = match e {
                    'x' => 2,
                    'u' => 4,
                    _ => 8,
                };
                let hex: String = (0..len).filter_map(|_| it.next()).collect();
                let ch = u32::from_str_radix(&hex, 16)
                    .ok()
                    .filter(|_| hex.len() == len)
                    .and_then(char::from_u32)
                    .ok_or_else(|| err(line, col, format!("invalid \\{e} escape")))?;
                out.push(ch);
            }
            other => {
                out.push('\\');
                out.push(other);
            }
        }
    }
    Ok(out)
}

fn split_fstring(body: &str, raw: bool, line: u32, col: u32) -> Result<Vec<FRaw>, ParseError> {
    let chars: Vec<char> = body.chars().collect();
    let mut parts = Vec::new();
    let mut lit = String::new();
    let mut i = 0;
    let flush = |lit: &mut String, parts: &mut Vec<FRaw>| -> Result<(), ParseError> {
        if !lit.is_empty() {
            let s = if raw { lit.clone() } else { unescape(lit, line, col)? };
            parts.push(FRaw::Lit(s));
            lit.clear();
        }
        Ok(())
    };
    while i < chars.len() {
        let c = chars[i];
        if c == '{' && chars.get(i + 1) == Some(&'{') {
            lit.push('{');
            i += 2;
            continue;
        }
        if c == '}' {
            if chars.get(i + 1) == Some(&'}') {
                lit.push('}');
                i += 2;
                continue;
            }
            return Err(err(line, col, "f-string: single '}' is not allowed"));
        }
        if c != '{' {
            lit.push(c);
            i += 1;
            continue;
        }
        flush(&mut lit, &mut parts)?;
        i += 1;
        let mut depth = 0;
        let mut src = String::new();
        let mut conversion = None;
        let mut spec = String::new();
        let mut closed = false;
        while i < chars.len() {
            let c = chars[i];
            match c {
                '\'' | '"' => {
                    src.push(c);
                    i += 1;
                    while i < chars.len() && chars[i] != c {
                        if chars[i] == '\\' {
                            src.push(chars[i]);
                            i += 1;
                        }
                        if i < chars.len() {
                            src.push(chars[i]);
                            i += 1;
                        }
                    }
                    if i < chars.len() {
                        src.push(c);
                        i += 1;
                    }
                    continue;
                }
                '(' | '[' | '{' => depth += 1,
                ')' | ']' => depth -= 1,
                '}' if depth > 0 => depth -= 1,
                '}' => {
                    i += 1;
                    closed = true;
                    break;
                }
                '!' if depth == 0 && chars.get(i + 1) != Some(&'=') => {
                    let conv = chars.get(i + 1).copied();
                    if !matches!(conv, Some('r' | 's' | 'a')) {
                        return Err(err(line, col, "f-string: invalid conversion character"));
                    }
                    conversion = conv;
                    i += 2;
                    if chars.get(i) == Some(&':') {
                        continue;
                    }
                    if chars.get(i) != Some(&'}') {
                        return Err(err(line, col, "f-string: expecting '}'"));
                    }
                    continue;
                }
                ':' if depth == 0 => {
                    i += 1;
                    while i < chars.len() && chars[i] != '}' {
                        if chars[i] == '{' {
                            return Err(ParseError::Unsupported { construct: "nested f-string format spec".into(), line });
                        }
                        spec.push(chars[i]);
                        i += 1;
                    }
                    continue;
                }
                _ => {}
            }
            src.push(c);
            i += 1;
        }
        if !closed {
            return Err(err(line, col, "f-string: expecting '}'"));
        }
        if src.trim().is_empty() {
            return Err(err(line, col, "f-string: empty expression not allowed"));
        }
        if src.trim_end().ends_with('=') && !src.trim_end().ends_with("==") {
            return Err(ParseError::Unsupported { construct: "f-string self-documenting expression".into(), line });
        }
        parts.push(FRaw::Expr { src, conversion, spec });
    }
    flush(&mut lit, &mut parts)?;
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn indentation_tokens() {
        let t = toks("if x:\n    y = 1\n\n    # c\nz\n");
        assert!(t.contains(&Tok::Indent));
        assert!(t.contains(&Tok::Dedent));
        assert_eq!(t.iter().filter(|t| **t == Tok::Newline).count(), 3);
    }

    #[test]
    fn numbers() {
        assert_eq!(toks("1_000 2.5 1e3 .5 0x1f")[..5], [Tok::Int(1000), Tok::Float(2.5), Tok::Float(1000.0), Tok::Float(0.5), Tok::Int(31)]);
        assert!(tokenize("99999999999999999999").is_err());
    }

    #[test]
    fn strings_and_fstrings() {
        assert_eq!(toks(r#"'a\n' "b" r'\n'"#)[..3], [Tok::Str("a\n".into()), Tok::Str("b".into()), Tok::Str("\\n".into())]);
        let t = toks(r#"f"x={x:.2f} {{y}} {d['k']!r}""#);
        let Tok::FStr(parts) = &t[0] else { panic!() };
        assert_eq!(parts.len(), 4);
        assert_eq!(parts[1], FRaw::Expr { src: "x".into(), conversion: None, spec: ".2f".into() });
        assert_eq!(parts[3], FRaw::Expr { src: "d['k']".into(), conversion: Some('r'), spec: String::new() });
    }

    #[test]
    fn brackets_join_lines() {
        let t = toks("x = (1,\n  2)\n");
        assert_eq!(t.iter().filter(|t| **t == Tok::Newline).count(), 1);
    }

    #[test]
    fn bad_dedent() {
        assert!(tokenize("if x:\n    a\n  b\n").is_err());
    }
}
