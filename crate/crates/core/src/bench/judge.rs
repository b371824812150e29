//! Answer correctness: an LLM judge with a binary verdict tool, and a
//! deterministic normalizing matcher used offline and as its fallback.

use serde_json::json;

use crate::config::JudgeMode;
use crate::llm::{ChatMessage, Gateway, ToolSpec};
use crate::prompts;

pub const VERDICT_TOOL: &str = "verdict";

/// Relative tolerance for numeric matches.
pub const NUMERIC_REL_TOL: f64 = 1e-4;

/// Reference words that are units and need not appear in the answer.
const UNIT_WORDS: &[&str] = &[
    "km", "m", "cm", "m2", "km2", "ha", "kg", "t", "chf", "fr", "usd", "eur", "prozent", "percent", "mwh", "kwh", "h",
    "min", "s",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Word(String),
}

fn is_group_sep(c: char) -> bool {
    matches!(c, ',' | '\'' | '’' | '\u{2009}' | '\u{202f}' | '\u{a0}')
}

fn tokens(text: &str) -> Vec<Tok> {
    let s: Vec<char> = text.to_lowercase().chars().collect();
    let digit = |i: usize| s.get(i).is_some_and(|c| c.is_ascii_digit());
    let mut out = Vec::new();
    let mut i = 0;
    while i < s.len() {
        let c = s[i];
        let neg = matches!(c, '-' | '−') && digit(i + 1) && (i == 0 || !s[i - 1].is_alphanumeric());
        if c.is_ascii_digit() || neg {
            let mut num = String::new();
            if neg {
                num.push('-');
                i += 1;
            }
            while digit(i) {
                num.push(s[i]);
                i += 1;
            }
            // Thousands groups: a separator followed by exactly three digits.
            while i < s.len() && is_group_sep(s[i]) && digit(i + 1) && digit(i + 2) && digit(i + 3) && !digit(i + 4) {
                num.extend(&s[i + 1..i + 4]);
                i += 4;
            }
            if i < s.len() && matches!(s[i], '.' | ',') && digit(i + 1) {
                num.push('.');
                i += 1;
                while digit(i) {
                    num.push(s[i]);
                    i += 1;
                }
            }
            if let Ok(v) = num.parse::<f64>() {
                out.push(Tok::Num(v));
            }
        } else if c.is_alphabetic() {
            let mut w = String::new();
            while i < s.len() && s[i].is_alphanumeric() {
                w.push(s[i]);
                i += 1;
            }
            out.push(Tok::Word(w));
        } else {
            i += 1;
        }
    }
    out
}

pub fn numbers_match(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= NUMERIC_REL_TOL * a.abs().max(b.abs())
}

/// Every number of the reference must appear in the answer (within the
/// relative tolerance) and every non-unit word of the reference must appear
/// as a word of the answer, after lowercasing and stripping punctuation and
/// thousands separators. Decimal commas are accepted.
pub fn judge_deterministic(answer: &str, reference: &str) -> bool {
    let reference = tokens(reference);
    if reference.is_empty() {
        return false;
    }
    let answer = tokens(answer);
    reference.iter().all(|t| match t {
        Tok::Num(r) => answer.iter().any(|a| matches!(a, Tok::Num(v) if numbers_match(*v, *r))),
        Tok::Word(w) => UNIT_WORDS.contains(&w.as_str()) || answer.iter().any(|a| matches!(a, Tok::Word(v) if v == w)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct JudgeOutcome {
    pub correct: bool,
    /// The LLM judge was requested but the deterministic one decided.
    pub fallback: bool,
    pub rationale: String,
}

pub fn verdict_tool() -> ToolSpec {
    ToolSpec {
        name: VERDICT_TOOL.into(),
        description: "Record whether the candidate answer is correct.".into(),
        parameters: json!({
            "type": "object",
            "properties": {
                "correct": {"type": "boolean"},
                "rationale": {"type": "string"}
            },
            "required": ["correct"],
            "additionalProperties": false
        }),
    }
}

pub struct Judge<'a> {
    pub mode: JudgeMode,
    pub gateway: Option<&'a Gateway>,
}

impl Judge<'_> {
    pub fn deterministic() -> Judge<'static> {
        Judge { mode: JudgeMode::Deterministic, gateway: None }
    }

    pub fn judge(&self, question: &str, answer: &str, reference: &str) -> JudgeOutcome {
        let offline = |fallback: bool, why: String| JudgeOutcome {
            correct: judge_deterministic(answer, reference),
            fallback,
            rationale: why,
        };
        let gateway = match (self.mode, self.gateway) {
            (JudgeMode::Deterministic, _) => return offline(false, "deterministic match".into()),
            (JudgeMode::Llm, None) => return offline(true, "no judge model configured".into()),
            (JudgeMode::Llm, Some(g)) => g,
        };
        let messages = [
            ChatMessage::system(prompts::JUDGE),
            ChatMessage::user(format!(
                "Question: {question}\n\nReference answer: {reference}\n\nCandidate answer: {answer}"
            )),
        ];
        match gateway.complete(&messages, &[verdict_tool()]) {
            Ok((reply, _)) => {
                let call = reply.tool_calls.iter().find(|c| c.name == VERDICT_TOOL);
                match call.and_then(|c| c.arguments.get("correct").and_then(|v| v.as_bool()).map(|b| (b, c))) {
                    Some((correct, c)) => JudgeOutcome {
                        correct,
                        fallback: false,
                        rationale: c.arguments.get("rationale").and_then(|v| v.as_str()).unwrap_or("").to_string(),
                    },
                    None => offline(true, "judge gave no verdict".into()),
                }
            }
            Err(e) => offline(true, format!("judge failed: {e}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_examples() {
        assert!(judge_deterministic("1,200 public parking spaces", "1200"));
        assert!(!judge_deterministic("42", "41"));
        assert!(judge_deterministic("12.3456%", "12.3457"));
        assert!(judge_deterministic("Es sind 31'234 Personen.", "31234"));
        assert!(judge_deterministic("Anteil: 3,52 %", "3.52"));
        assert!(judge_deterministic("Der Kreis Enge.", "Enge"));
        assert!(!judge_deterministic("Der Kreis Altstadt.", "Enge"));
        assert!(judge_deterministic("4.61 Kilometer", "4.61 km"));
        assert!(judge_deterministic("-3.5 Grad", "-3.5"));
        assert!(!judge_deterministic("anything", ""));
    }

    #[test]
    fn tokenizer_keeps_decimals_apart_from_groups() {
        assert_eq!(tokens("1,234.5"), vec![Tok::Num(1234.5)]);
        assert_eq!(tokens("1,5"), vec![Tok::Num(1.5)]);
        assert_eq!(tokens("1,2345"), vec![Tok::Num(1.2345)]);
        assert_eq!(tokens("A-1"), vec![Tok::Word("a".into()), Tok::Num(1.0)]);
    }
}
