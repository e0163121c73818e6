//! Report assembly: aligned text for the terminal, comma-delimited for files.

/// A number with 10 significant digits; plain notation for magnitudes in
/// `[1e-5, 1e10)`, scientific otherwise.
pub fn sig10(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.9e}");
    let exp: i32 = sci
        .split_once('e')
        .and_then(|(_, e)| e.parse().ok())
        .unwrap_or(0);
    if (-5..10).contains(&exp) {
        let decimals = (9 - exp) as usize;
        format!("{v:.decimals$}")
    } else {
        sci
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub rows: Vec<(String, String)>,
    pub tables: Vec<Table>,
}

impl Report {
    pub fn text(&mut self, key: &str, value: impl Into<String>) -> &mut Self {
        self.rows.push((key.to_string(), value.into()));
        self
    }

    pub fn num(&mut self, key: &str, value: f64) -> &mut Self {
        self.text(key, sig10(value))
    }

    pub fn value(&self, key: &str) -> Option<&str> {
        self.rows.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in &self.rows {
            out.push_str(&format!("{k:<width$}  {v}\n"));
        }
        for t in &self.tables {
            out.push('\n');
            out.push_str(&t.title);
            out.push('\n');
            let cols = t.header.len();
            let widths: Vec<usize> = (0..cols)
                .map(|c| {
                    t.rows
                        .iter()
                        .filter_map(|r| r.get(c))
                        .chain(std::iter::once(&t.header[c]))
                        .map(|s| s.chars().count())
                        .max()
                        .unwrap_or(0)
                })
                .collect();
            let line = |cells: &[String]| {
                cells
                    .iter()
                    .zip(&widths)
                    .map(|(c, w)| format!("{c:>w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
            };
            out.push_str(&line(&t.header));
            out.push('\n');
            for r in &t.rows {
                out.push_str(&line(r));
                out.push('\n');
            }
        }
        out
    }

    pub fn delimited(&self) -> String {
        let mut out = String::from("key,value\n");
        for (k, v) in &self.rows {
            out.push_str(&format!("{k},{v}\n"));
        }
        for t in &self.tables {
            out.push_str(&format!("# {}\n{}\n", t.title, t.header.join(",")));
            for r in &t.rows {
                out.push_str(&r.join(","));
                out.push('\n');
            }
        }
        out
    }
}
