//! Atomic file output with provenance stamps.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::Value;
use tempfile::NamedTempFile;

use crate::error::{CliError, CliResult};

pub struct OutDir {
    dir: PathBuf,
    config_hash: String,
    provenance: Value,
}

impl OutDir {
    pub fn create(dir: &Path, config_hash: String, provenance: Value) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            config_hash,
            provenance,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    fn write_bytes(&self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.path(name);
        let mut tmp = NamedTempFile::new_in(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
        tmp.write_all(bytes).map_err(|e| CliError::io(&path, e))?;
        tmp.persist(&path)
            .map_err(|e| CliError::io(&path, e.error))?;
        Ok(path)
    }

    /// Pretty JSON with a `provenance` block. Keys come out sorted because
    /// `serde_json::Map` is ordered.
    pub fn write_json(&self, name: &str, mut body: Value) -> CliResult<PathBuf> {
        if let Value::Object(map) = &mut body {
            map.insert("provenance".into(), self.provenance.clone());
        }
        let mut text = serde_json::to_string_pretty(&body).expect("json serializes");
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// CSV with a `# config_hash: ...` first line.
    pub fn write_csv(
        &self,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> CliResult<PathBuf> {
        let mut text = format!("# config_hash: {}\n", self.config_hash);
        text.push_str(&header.join(","));
        text.push('\n');
        for row in rows {
            let cells: Vec<String> = row.iter().map(|c| csv_cell(c)).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        self.write_bytes(name, text.as_bytes())
    }
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// File-name-safe form of a feature name.
pub fn file_stem(feature: &str) -> String {
    feature
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
