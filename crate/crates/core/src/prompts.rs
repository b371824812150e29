//! Versioned prompt templates. Placeholders are `{name}`; the hash of the
//! raw template is recorded in every trace that used it.

use sha2::{Digest, Sha256};

pub const VERSION: &str = "v1";

pub const RETRIEVAL: &str = include_str!("../assets/prompts/v1/retrieval.txt");
pub const ANALYSIS: &str = include_str!("../assets/prompts/v1/analysis.txt");
pub const ROUTER: &str = include_str!("../assets/prompts/v1/router.txt");
pub const JUDGE: &str = include_str!("../assets/prompts/v1/judge.txt");

/// Reference for the analysis language, embedded into the analysis prompt.
pub const LANGUAGE_REFERENCE: &str = include_str!("../../../docs/language.md");

pub fn hash(template: &str) -> String {
    let digest = Sha256::digest(template.as_bytes());
    format!("{VERSION}:{}", &hex::encode(digest)[..16])
}

/// Substitutes `{key}` placeholders. Unknown placeholders are left as-is.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}
