use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

const BUNDLED: &str = include_str!("../../assets/gazetteer.csv");

/// Place name to WGS84 point lookup used by `geo.geocode`.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: HashMap<String, (f64, f64)>,
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl Gazetteer {
    pub fn bundled() -> &'static Gazetteer {
        static G: OnceLock<Gazetteer> = OnceLock::new();
        G.get_or_init(|| Gazetteer::parse(BUNDLED).expect("bundled gazetteer parses"))
    }

    /// CSV with header `name,lon,lat`.
    pub fn parse(text: &str) -> Result<Gazetteer, String> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut entries = HashMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            let num = |j: usize| -> Result<f64, String> {
                rec.get(j)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| format!("gazetteer row {}: bad coordinate", i + 1))
            };
            let name = rec.get(0).unwrap_or_default();
            entries.insert(normalize(name), (num(1)?, num(2)?));
        }
        Ok(Gazetteer { entries })
    }

    pub fn load(path: &Path) -> Result<Gazetteer, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Gazetteer::parse(&text)
    }

    /// Exact match after case folding and whitespace collapsing.
    pub fn lookup(&self, address: &str) -> Option<(f64, f64)> {
        self.entries.get(&normalize(address)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_is_case_and_space_insensitive() {
        let g = Gazetteer::bundled();
        assert!(g.len() > 30);
        assert_eq!(g.lookup("  zürich   hb "), g.lookup("Zürich HB"));
        assert!(g.lookup("Atlantis").is_none());
    }
}
