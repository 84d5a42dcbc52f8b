use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

/// Column-oriented numeric table.
#[derive(Debug, Clone, Default)]
pub struct Table {
    headers: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, header: &str, values: Vec<f64>) {
        debug_assert!(self.columns.first().is_none_or(|c| c.len() == values.len()));
        self.headers.push(header.to_string());
        self.columns.push(values);
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    /// CSV text: dot decimals, shortest round-trip formatting, LF endings.
    pub fn to_csv(&self) -> CliResult<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let fail = |e: csv::Error| CliError::config(format!("csv: {e}"));
        w.write_record(&self.headers).map_err(fail)?;
        for r in 0..self.rows() {
            w.write_record(self.columns.iter().map(|c| format_value(c[r]))).map_err(fail)?;
        }
        w.into_inner().map_err(|e| CliError::config(format!("csv: {e}")))
    }
}

fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if v == 0.0 || (1e-5..1e16).contains(&v.abs()) {
        // Both `{}` and `{:e}` ignore locale and print the shortest
        // representation that parses back to the same value.
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Write via a sibling temporary file and rename, so readers never observe a
/// partial file and a failed run leaves no output behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let io = |e: std::io::Error| CliError::config(format!("cannot write {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Default manifest location next to a CSV output.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}
