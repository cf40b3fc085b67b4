//! Line-oriented `key = value` documents split into `[section]`s.
//!
//! ```text
//! # comment
//! [giustina2013]
//! r = 0.3
//! q_set = 0.5 + 1.2e-4
//! ```
//!
//! Key order is preserved and unknown keys are kept. Numeric values may be
//! written as a sum of literals (`0.5 + 1.2e-4`), matching how the published
//! tables quote correlations near one half.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Section {
    pub name: String,
    pub entries: Vec<(String, String)>,
}

impl Section {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            entries: Vec::new(),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn number(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| {
                parse_number(v).ok_or_else(|| Error::Parse {
                    line: 0,
                    reason: format!("[{}] `{key}`: not a number: `{v}`", self.name),
                })
            })
            .transpose()
    }

    pub fn require_number(&self, key: &str) -> Result<f64> {
        self.number(key)?.ok_or_else(|| Error::MissingField {
            record: self.name.clone(),
            field: key.to_string(),
        })
    }

    /// A comma-separated list of numbers.
    pub fn numbers(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|x| {
                        parse_number(x).ok_or_else(|| Error::Parse {
                            line: 0,
                            reason: format!("[{}] `{key}`: not a number list: `{v}`", self.name),
                        })
                    })
                    .collect()
            })
            .transpose()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Document {
    pub sections: Vec<Section>,
}

impl Document {
    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.sections.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "[{}]", s.name);
            for (k, v) in &s.entries {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }
}

fn strip_quotes(v: &str) -> &str {
    let v = v.trim();
    if v.len() >= 2 && v.starts_with('"') && v.ends_with('"') {
        &v[1..v.len() - 1]
    } else {
        v
    }
}

pub fn parse(text: &str) -> Result<Document> {
    let mut doc = Document::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| Error::Parse {
                line: i + 1,
                reason: format!("unterminated section header `{line}`"),
            })?;
            doc.sections.push(Section::new(name.trim()));
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            reason: format!("expected `key = value`, got `{line}`"),
        })?;
        let section = doc.sections.last_mut().ok_or_else(|| Error::Parse {
            line: i + 1,
            reason: "entry before any [section]".to_string(),
        })?;
        section
            .entries
            .push((k.trim().to_string(), strip_quotes(v).to_string()));
    }
    Ok(doc)
}

/// Parse `x`, or a sum `x + y + ...` of float literals.
pub fn parse_number(v: &str) -> Option<f64> {
    let v = strip_quotes(v);
    if v.is_empty() {
        return None;
    }
    v.split('+')
        .map(|t| t.trim())
        .try_fold(0.0, |acc, t| t.parse::<f64>().ok().map(|x| acc + x))
        // A single literal with an explicit exponent sign, e.g. "1e+5".
        .or_else(|| v.parse::<f64>().ok())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_preserves_order() {
        let doc = parse(
            "# header\n[one]\nb = 2\na = \"text with = sign\"\n\n[two]\nx = 0.5 + 1.2e-4\nunknown_key = kept\n",
        )
        .unwrap();
        assert_eq!(doc.sections.len(), 2);
        assert_eq!(doc.sections[0].entries[0].0, "b");
        assert_eq!(doc.sections[0].get("a"), Some("text with = sign"));
        let two = doc.section("two").unwrap();
        assert!((two.number("x").unwrap().unwrap() - 0.50012).abs() < 1e-15);
        assert_eq!(two.get("unknown_key"), Some("kept"));
    }

    #[test]
    fn render_round_trips() {
        let text = "[s]\nk = v\nn = 1e-5\n\n[t]\nz = 3\n";
        let doc = parse(text).unwrap();
        assert_eq!(doc.render(), text);
        assert_eq!(parse(&doc.render()).unwrap(), doc);
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(
            parse("k = v\n"),
            Err(Error::Parse {
                line: 1,
                reason: "entry before any [section]".into()
            })
        );
        assert!(matches!(
            parse("[a]\nnot a pair\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(parse("[a\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn number_forms() {
        assert_eq!(parse_number("1.5"), Some(1.5));
        assert_eq!(parse_number("1e+5"), Some(1e5));
        assert_eq!(parse_number("abc"), None);
        assert_eq!(parse_number(""), None);
        let s = parse("[r]\neta = 0.738, 0.786\n").unwrap();
        assert_eq!(
            s.sections[0].numbers("eta").unwrap(),
            Some(vec![0.738, 0.786])
        );
        assert!(s.sections[0].require_number("missing").is_err());
    }
}
