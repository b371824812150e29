//! Python-compatible number rendering: `repr(float)` and the common subset
//! of the format-spec mini-language.

/// Shortest round-trip repr, Python style (`1e+16`, `1.5e-05`, `0.1`, `2.0`).
pub fn float_repr(f: f64) -> String {
    if f.is_nan() {
        return "nan".into();
    }
    if f.is_infinite() {
        return if f > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if f == 0.0 {
        return if f.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    // `{:e}` yields the shortest round-trip digits, e.g. "1.2345e-5".
    let sci = format!("{f:e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    if (-4..16).contains(&exp) {
        let n = digits.len() as i32;
        if exp >= 0 {
            let int_len = exp + 1;
            if n <= int_len {
                out.push_str(&digits);
                out.extend(std::iter::repeat_n('0', (int_len - n) as usize));
                out.push_str(".0");
            } else {
                out.push_str(&digits[..int_len as usize]);
                out.push('.');
                out.push_str(&digits[int_len as usize..]);
            }
        } else {
            out.push_str("0.");
            out.extend(std::iter::repeat_n('0', (-exp - 1) as usize));
            out.push_str(&digits);
        }
    } else {
        out.push_str(&digits[..1]);
        if digits.len() > 1 {
            out.push('.');
            out.push_str(&digits[1..]);
        }
        out.push('e');
        out.push(if exp < 0 { '-' } else { '+' });
        out.push_str(&format!("{:02}", exp.abs()));
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Spec {
    pub fill: Option<char>,
    pub align: Option<char>,
    pub sign: Option<char>,
    pub zero: bool,
    pub width: usize,
    pub grouping: Option<char>,
    pub precision: Option<usize>,
    pub ty: Option<char>,
}

pub fn parse_spec(s: &str) -> Result<Spec, String> {
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    let mut spec = Spec::default();
    let is_align = |c: char| matches!(c, '<' | '>' | '^' | '=');
    if chars.len() >= 2 && is_align(chars[1]) {
        spec.fill = Some(chars[0]);
        spec.align = Some(chars[1]);
        i = 2;
    } else if !chars.is_empty() && is_align(chars[0]) {
        spec.align = Some(chars[0]);
        i = 1;
    }
    if i < chars.len() && matches!(chars[i], '+' | '-' | ' ') {
        spec.sign = Some(chars[i]);
        i += 1;
    }
    if i < chars.len() && chars[i] == '#' {
        return Err("alternate form '#' is not supported".into());
    }
    if i < chars.len() && chars[i] == '0' {
        spec.zero = true;
        i += 1;
    }
    let start = i;
    while i < chars.len() && chars[i].is_ascii_digit() {
        i += 1;
    }
    if i > start {
        spec.width = chars[start..i].iter().collect::<String>().parse().map_err(|_| "width too large")?;
    }
    if i < chars.len() && matches!(chars[i], ',' | '_') {
        spec.grouping = Some(chars[i]);
        i += 1;
    }
    if i < chars.len() && chars[i] == '.' {
        i += 1;
        let start = i;
        while i < chars.len() && chars[i].is_ascii_digit() {
            i += 1;
        }
        if i == start {
            return Err("format specifier missing precision".into());
        }
        spec.precision = Some(chars[start..i].iter().collect::<String>().parse().map_err(|_| "precision too large")?);
    }
    if i < chars.len() {
        let t = chars[i];
        if !matches!(t, 'd' | 'f' | 'F' | 'e' | 'E' | 'g' | 'G' | '%' | 's' | 'n') {
            return Err(format!("unknown format code '{t}'"));
        }
        spec.ty = Some(t);
        i += 1;
    }
    if i != chars.len() {
        return Err(format!("invalid format specifier '{s}'"));
    }
    Ok(spec)
}

fn group_digits(int_part: &str, sep: char) -> String {
    let bytes: Vec<char> = int_part.chars().collect();
    let mut out = String::new();
    for (i, c) in bytes.iter().enumerate() {
        if i > 0 && (bytes.len() - i) % 3 == 0 {
            out.push(sep);
        }
        out.push(*c);
    }
    out
}

fn apply_grouping(body: &str, sep: Option<char>) -> String {
    let Some(sep) = sep else { return body.to_string() };
    let split = body.find(|c: char| !c.is_ascii_digit()).unwrap_or(body.len());
    format!("{}{}", group_digits(&body[..split], sep), &body[split..])
}

/// Pads `sign + body` per the spec; `numeric` selects right-alignment default.
fn pad(sign: &str, body: &str, spec: &Spec, numeric: bool) -> String {
    let len = sign.chars().count() + body.chars().count();
    if spec.width <= len {
        return format!("{sign}{body}");
    }
    let n = spec.width - len;
    let (fill, align) = if spec.zero && spec.align.is_none() && numeric {
        ('0', '=')
    } else {
        (spec.fill.unwrap_or(' '), spec.align.unwrap_or(if numeric { '>' } else { '<' }))
    };
    let rep = |k: usize| std::iter::repeat_n(fill, k).collect::<String>();
    match align {
        '<' => format!("{sign}{body}{}", rep(n)),
        '^' => format!("{}{sign}{body}{}", rep(n / 2), rep(n - n / 2)),
        '=' => format!("{sign}{}{body}", rep(n)),
        _ => format!("{}{sign}{body}", rep(n)),
    }
}

fn sign_str(neg: bool, spec: &Spec) -> &'static str {
    match (neg, spec.sign) {
        (true, _) => "-",
        (false, Some('+')) => "+",
        (false, Some(' ')) => " ",
        _ => "",
    }
}

fn exp_notation(x: f64, prec: usize, upper: bool) -> String {
    let s = format!("{x:.prec$e}");
    let (m, e) = s.split_once('e').unwrap();
    let e: i32 = e.parse().unwrap();
    let mut out = format!("{m}{}{}{:02}", if upper { 'E' } else { 'e' }, if e < 0 { '-' } else { '+' }, e.abs());
    if upper {
        out = out.to_uppercase();
    }
    out
}

/// `g` formatting: fixed or exponent notation depending on magnitude, with
/// insignificant trailing zeros removed.
fn general(x: f64, prec: usize, upper: bool) -> String {
    let p = prec.max(1);
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.*e}", p - 1);
    let exp: i32 = sci.split_once('e').unwrap().1.parse().unwrap();
    let strip = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if exp >= -4 && exp < p as i32 {
        strip(format!("{x:.*}", (p as i32 - 1 - exp) as usize))
    } else {
        let (m, _) = sci.split_once('e').unwrap();
        let m = strip(m.to_string());
        let e = if upper { 'E' } else { 'e' };
        format!("{m}{e}{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

pub fn format_float(x: f64, spec: &Spec) -> Result<String, String> {
    let neg = x.is_sign_negative() && !x.is_nan() && x != 0.0 || (x == 0.0 && x.is_sign_negative());
    let a = x.abs();
    let body = if !a.is_finite() {
        let s = if a.is_nan() { "nan" } else { "inf" };
        if matches!(spec.ty, Some('F' | 'E' | 'G')) {
            s.to_uppercase()
        } else {
            s.to_string()
        }
    } else {
        match spec.ty {
            Some('f' | 'F') => apply_grouping(&format!("{a:.*}", spec.precision.unwrap_or(6)), spec.grouping),
            Some('e' | 'E') => exp_notation(a, spec.precision.unwrap_or(6), spec.ty == Some('E')),
            Some('%') => format!("{}%", apply_grouping(&format!("{:.*}", spec.precision.unwrap_or(6), a * 100.0), spec.grouping)),
            Some('g' | 'G' | 'n') => apply_grouping(&general(a, spec.precision.unwrap_or(6), spec.ty == Some('G')), spec.grouping),
            Some('d') => return Err("Unknown format code 'd' for object of type 'float'".into()),
            Some('s') => return Err("Unknown format code 's' for object of type 'float'".into()),
            _ => match spec.precision {
                // no type with precision behaves like 'g' but keeps at least one decimal digit
                Some(p) => {
                    let g = general(a, p, false);
                    if g.contains(['.', 'e', 'n', 'i']) {
                        g
                    } else {
                        format!("{g}.0")
                    }
                }
                None => apply_grouping(&float_repr(a), spec.grouping),
            },
        }
    };
    Ok(pad(sign_str(neg, spec), &body, spec, true))
}

pub fn format_int(i: i64, spec: &Spec) -> Result<String, String> {
    match spec.ty {
        Some('f' | 'F' | 'e' | 'E' | 'g' | 'G' | '%') => format_float(i as f64, spec),
        Some('s') => Err("Unknown format code 's' for object of type 'int'".into()),
        _ => {
            if spec.precision.is_some() {
                return Err("Precision not allowed in integer format specifier".into());
            }
            let body = apply_grouping(&i.unsigned_abs().to_string(), spec.grouping);
            Ok(pad(sign_str(i < 0, spec), &body, spec, true))
        }
    }
}

pub fn format_str(s: &str, spec: &Spec) -> Result<String, String> {
    if spec.sign.is_some() {
        return Err("Sign not allowed in string format specifier".into());
    }
    if !matches!(spec.ty, None | Some('s')) {
        return Err(format!("Unknown format code '{}' for object of type 'str'", spec.ty.unwrap()));
    }
    let body: String = match spec.precision {
        Some(p) => s.chars().take(p).collect(),
        None => s.to_string(),
    };
    Ok(pad("", &body, spec, false))
}

/// Round half to even at `ndigits` decimal places, matching `round(x, n)`.
pub fn round_float(x: f64, ndigits: i64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    if ndigits >= 0 {
        let n = ndigits.min(330) as usize;
        // Rust's fixed formatting rounds the exact binary value, half-even on ties
        format!("{x:.n$}").parse().unwrap_or(x)
    } else {
        let p = 10f64.powi((-ndigits).min(330) as i32);
        let y = (x / p).round_ties_even() * p;
        if y.is_finite() {
            y
        } else {
            0.0
        }
    }
}
