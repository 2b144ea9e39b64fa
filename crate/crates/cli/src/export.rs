//! Output directory bookkeeping: every file written through [`OutputDir`] is
//! listed in the manifest with its byte length.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Version of the on-disk layout; bumped on incompatible changes.
pub const SCHEMA_VERSION: u32 = 1;

pub type IoResult<T> = std::result::Result<T, String>;

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:e}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
}

/// Named pass/fail outcome recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: Option<f64>,
    pub threshold: Option<f64>,
}

impl Check {
    pub fn new(name: &str, passed: bool) -> Self {
        Check { name: name.into(), passed, value: None, threshold: None }
    }

    /// Passes when `value >= threshold`.
    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), passed: value >= threshold, value: Some(value), threshold: Some(threshold) }
    }

    /// Passes when `value <= threshold`.
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), passed: value <= threshold, value: Some(value), threshold: Some(threshold) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub config_hash: String,
    pub scenario: String,
    pub mode: String,
    pub exit_status: i32,
    pub error: Option<String>,
    pub checks: Vec<Check>,
    pub files: Vec<FileEntry>,
    /// Only present with `--record-timing`, since it breaks byte determinism.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_seconds: Option<f64>,
}

impl RunManifest {
    /// Verifies that every listed file exists with its recorded length.
    pub fn verify(&self, dir: &Path) -> IoResult<()> {
        for f in &self.files {
            let meta = fs::metadata(dir.join(&f.path)).map_err(|e| format!("{}: {e}", f.path))?;
            if meta.len() != f.bytes {
                return Err(format!("{}: expected {} bytes, found {}", f.path, f.bytes, meta.len()));
            }
        }
        Ok(())
    }
}

pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> IoResult<Self> {
        fs::create_dir_all(root).map_err(|e| format!("cannot create {}: {e}", root.display()))?;
        Ok(OutputDir { root: root.to_path_buf(), files: Vec::new() })
    }

    fn full(&self, rel: &str) -> IoResult<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| format!("cannot create {}: {e}", parent.display()))?;
        }
        Ok(p)
    }

    fn record(&mut self, rel: &str, bytes: u64) {
        self.files.retain(|f| f.path != rel);
        self.files.push(FileEntry { path: rel.to_string(), bytes });
    }

    pub fn write_bytes(&mut self, rel: &str, data: &[u8]) -> IoResult<()> {
        let p = self.full(rel)?;
        fs::write(&p, data).map_err(|e| format!("cannot write {}: {e}", p.display()))?;
        self.record(rel, data.len() as u64);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> IoResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| format!("{rel}: {e}"))?;
        text.push('\n');
        self.write_bytes(rel, text.as_bytes())
    }

    /// Opens a CSV file for row-by-row writing.
    pub fn csv(&mut self, rel: &str, header: &[&str]) -> IoResult<CsvFile> {
        let p = self.full(rel)?;
        let mut w = csv::Writer::from_path(&p).map_err(|e| format!("cannot open {}: {e}", p.display()))?;
        w.write_record(header).map_err(|e| format!("{rel}: {e}"))?;
        Ok(CsvFile { rel: rel.to_string(), path: p, writer: w })
    }

    /// Flushes a CSV file and records it.
    pub fn close(&mut self, file: CsvFile) -> IoResult<()> {
        let CsvFile { rel, path, mut writer } = file;
        writer.flush().map_err(|e| format!("{rel}: {e}"))?;
        drop(writer);
        let bytes = fs::metadata(&path).map_err(|e| format!("{rel}: {e}"))?.len();
        self.record(&rel, bytes);
        Ok(())
    }

    /// Writes a whole table of numbers at once.
    pub fn write_table(&mut self, rel: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> IoResult<()> {
        let mut f = self.csv(rel, header)?;
        for row in rows {
            f.row(&row)?;
        }
        self.close(f)
    }

    /// Writes the manifest last. It does not list itself.
    pub fn finish(mut self, mut manifest: RunManifest) -> IoResult<RunManifest> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        manifest.files = self.files.clone();
        self.write_json("manifest.json", &manifest)?;
        Ok(manifest)
    }
}

pub struct CsvFile {
    rel: String,
    path: PathBuf,
    writer: csv::Writer<fs::File>,
}

impl CsvFile {
    pub fn row(&mut self, values: &[f64]) -> IoResult<()> {
        self.writer.write_record(values.iter().map(|&v| fmt_f64(v))).map_err(|e| format!("{}: {e}", self.rel))
    }

    pub fn record(&mut self, fields: &[String]) -> IoResult<()> {
        self.writer.write_record(fields).map_err(|e| format!("{}: {e}", self.rel))
    }

    /// Row whose leading columns are text.
    pub fn mixed_row(&mut self, labels: &[&str], values: &[f64]) -> IoResult<()> {
        let fields = labels.iter().map(|s| s.to_string()).chain(values.iter().map(|&v| fmt_f64(v)));
        self.writer.write_record(fields).map_err(|e| format!("{}: {e}", self.rel))
    }
}
