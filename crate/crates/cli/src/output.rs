//! Artifact files: one CSV table and one JSON summary per run.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::error::CliError;

/// Rows of stringified cells under a header.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Shortest round-trip representation, so artifacts are reproducible bit
/// for bit.
pub fn num(x: f64) -> String {
    format!("{}", x)
}

pub fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write `<stem>.csv` and `<stem>.json` into `dir` and return their paths.
pub fn write(dir: &Path, stem: &str, table: &Table, summary: &Value) -> Result<(PathBuf, PathBuf), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let csv_path = dir.join(format!("{}.csv", stem));
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| CliError::Io {
        path: csv_path.display().to_string(),
        source: e.into(),
    })?;
    let csv_err = |e: csv::Error| CliError::Io {
        path: csv_path.display().to_string(),
        source: e.into(),
    };
    w.write_record(&table.header).map_err(csv_err)?;
    for row in &table.rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(&csv_path))?;

    let json_path = dir.join(format!("{}.json", stem));
    let mut text = serde_json::to_string_pretty(summary).expect("summaries are plain JSON values");
    text.push('\n');
    fs::write(&json_path, text).map_err(io_err(&json_path))?;
    Ok((csv_path, json_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_per_rfc4180_and_json_keeps_insertion_order() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new(["name", "value"]);
        t.push(vec!["a, \"b\"".into(), num(0.1)]);
        let summary = serde_json::json!({"zeta": 1, "alpha": 2});
        let (c, j) = write(dir.path(), "x-1", &t, &summary).unwrap();
        assert_eq!(fs::read_to_string(c).unwrap(), "name,value\n\"a, \"\"b\"\"\",0.1\n");
        let text = fs::read_to_string(j).unwrap();
        assert!(text.find("zeta").unwrap() < text.find("alpha").unwrap());
    }
}
