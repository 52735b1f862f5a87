//! Aligned plain-text tables for terminal and file output.

use std::fmt;

/// Numbers are rounded only here, at render time.
pub fn fmt3(x: f64) -> String {
    if x.is_nan() {
        "NA".into()
    } else {
        format!("{x:.3}")
    }
}

#[derive(Debug, Clone, Default)]
pub struct TextTable {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub notes: Vec<String>,
}

impl TextTable {
    pub fn new(title: impl Into<String>, header: &[&str]) -> Self {
        Self {
            title: title.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            ..Self::default()
        }
    }

    pub fn row(&mut self, cells: Vec<String>) -> &mut Self {
        self.rows.push(cells);
        self
    }

    pub fn note(&mut self, note: impl Into<String>) -> &mut Self {
        self.notes.push(note.into());
        self
    }
}

impl fmt::Display for TextTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ncols = self
            .rows
            .iter()
            .map(Vec::len)
            .chain(std::iter::once(self.header.len()))
            .max()
            .unwrap_or(0);
        let mut widths = vec![0; ncols];
        for row in std::iter::once(&self.header).chain(&self.rows) {
            for (j, cell) in row.iter().enumerate() {
                widths[j] = widths[j].max(cell.chars().count());
            }
        }
        let total: usize = widths.iter().sum::<usize>() + 2 * ncols.saturating_sub(1);
        let line = |f: &mut fmt::Formatter<'_>, row: &[String]| -> fmt::Result {
            let cells: Vec<String> = (0..ncols)
                .map(|j| {
                    let c = row.get(j).map(String::as_str).unwrap_or("");
                    if j == 0 {
                        format!("{c:<w$}", w = widths[j])
                    } else {
                        format!("{c:>w$}", w = widths[j])
                    }
                })
                .collect();
            writeln!(f, "{}", cells.join("  ").trim_end())
        };
        if !self.title.is_empty() {
            writeln!(f, "{}", self.title)?;
        }
        writeln!(f, "{}", "-".repeat(total))?;
        line(f, &self.header)?;
        writeln!(f, "{}", "-".repeat(total))?;
        for row in &self.rows {
            line(f, row)?;
        }
        writeln!(f, "{}", "-".repeat(total))?;
        for n in &self.notes {
            writeln!(f, "{n}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligns_columns() {
        let mut t = TextTable::new("T", &["name", "value"]);
        t.row(vec!["a".into(), fmt3(0.27449)]);
        t.row(vec!["longer".into(), fmt3(-1.0)]);
        let s = t.to_string();
        assert!(s.contains("a        0.274"));
        assert!(s.contains("longer  -1.000"));
        assert_eq!(fmt3(f64::NAN), "NA");
    }
}
