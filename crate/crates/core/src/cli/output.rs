//! CSV and JSON writers with provenance metadata.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{FjError, Result};

/// Provenance carried by every output file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Metadata {
    fn comment_lines(&self) -> String {
        let mut out = format!(
            "# fjlab {} {}\n# config_hash={}\n# seed={}\n",
            self.command,
            env!("CARGO_PKG_VERSION"),
            self.config_hash,
            self.seed
        );
        for note in &self.notes {
            let _ = writeln!(out, "# {}", note.replace('\n', " "));
        }
        out
    }
}

/// CSV table built in memory and written in one go.
#[derive(Debug, Clone)]
pub struct CsvTable {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self, meta: &Metadata) -> String {
        let mut out = meta.comment_lines();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Shortest round-trip decimal representation.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| FjError::Io(format!("{}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.path(name);
        std::fs::write(&path, text).map_err(|e| FjError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn write_csv(&self, name: &str, table: &CsvTable, meta: &Metadata) -> Result<PathBuf> {
        self.write_text(name, &table.render(meta))
    }

    /// JSON report with the metadata under `"meta"`.
    pub fn write_json<T: Serialize>(&self, name: &str, body: &T, meta: &Metadata) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct Report<'a, T> {
            meta: &'a Metadata,
            #[serde(flatten)]
            body: &'a T,
        }
        let mut text = serde_json::to_string_pretty(&Report { meta, body })
            .map_err(|e| FjError::Io(format!("serializing {name}: {e}")))?;
        text.push('\n');
        self.write_text(name, &text)
    }
}
