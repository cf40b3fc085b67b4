use std::fmt::Write as _;

use bellforge_core::kv::{Document, Section};
use bellforge_core::report::sig6;

use crate::args::Format;

pub enum Value {
    Num(f64),
    Int(u64),
    Text(String),
}

/// A named list of key/value rows, rendered as aligned text or as a kv section.
pub struct Block {
    name: String,
    rows: Vec<(String, Value)>,
}

impl Block {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            rows: Vec::new(),
        }
    }

    pub fn num(&mut self, key: impl Into<String>, v: f64) -> &mut Self {
        self.rows.push((key.into(), Value::Num(v)));
        self
    }

    pub fn int(&mut self, key: impl Into<String>, v: u64) -> &mut Self {
        self.rows.push((key.into(), Value::Int(v)));
        self
    }

    pub fn text(&mut self, key: impl Into<String>, v: impl ToString) -> &mut Self {
        self.rows.push((key.into(), Value::Text(v.to_string())));
        self
    }

    fn section(&self) -> Section {
        let mut s = Section::new(self.name.clone());
        for (k, v) in &self.rows {
            match v {
                Value::Num(x) => s.set(k.clone(), full(*x)),
                Value::Int(n) => s.set(k.clone(), n),
                Value::Text(t) => s.set(k.clone(), t),
            }
        }
        s
    }

    fn render_text(&self, out: &mut String) {
        let width = self.rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let _ = writeln!(out, "{}", self.name);
        for (k, v) in &self.rows {
            let v = match v {
                Value::Num(x) => sig6(*x),
                Value::Int(n) => n.to_string(),
                Value::Text(t) => t.clone(),
            };
            let _ = writeln!(out, "  {k:<width$}  {v}");
        }
    }
}

/// Shortest round-trip form, scientific outside `[1e-4, 1e15)`.
fn full(x: f64) -> String {
    let m = x.abs();
    if m == 0.0 || (1e-4..1e15).contains(&m) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn render(blocks: &[Block], format: Format) -> String {
    match format {
        Format::Kv => Document {
            sections: blocks.iter().map(Block::section).collect(),
        }
        .render(),
        Format::Text => {
            let mut out = String::new();
            for (i, b) in blocks.iter().enumerate() {
                if i > 0 {
                    out.push('\n');
                }
                b.render_text(&mut out);
            }
            out
        }
    }
}

/// Appends a pre-rendered document after the blocks.
pub fn render_with(blocks: &[Block], format: Format, text: String, kv: Document) -> String {
    let mut out = render(blocks, format);
    match format {
        Format::Kv => {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(&kv.render());
        }
        Format::Text => {
            out.push('\n');
            out.push_str(&text);
        }
    }
    out
}
