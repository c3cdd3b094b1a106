//! CSV tables with provenance header comments.

use std::path::Path;

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Lines written as `# ...` before the header.
    pub comments: Vec<String>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new(), comments: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn comment(&mut self, line: impl Into<String>) {
        self.comments.push(line.into());
    }

    /// Index of a column by name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Parsed numeric values of one column.
    pub fn values(&self, name: &str) -> Vec<f64> {
        let i = self.column(name).unwrap_or_else(|| panic!("no column {name}"));
        self.rows.iter().map(|r| r[i].parse().unwrap_or(f64::NAN)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields"));
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        std::fs::write(path, self.to_csv()).map_err(|e| io_err(path, e))
    }
}

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io { path: path.display().to_string(), source }
}

/// Locale-independent float formatting (shortest round-trip form).
pub fn fmt(x: f64) -> String {
    format!("{x}")
}
