//! Number formatting and file emission.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use crate::CliError;

pub const TOOL: &str = "pskqkd";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Nine significant digits; plain notation in `[1e-4, 1e9)`, exponent
/// notation otherwise.
pub fn sig9(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    let magnitude = rounded.abs();
    if (1e-4..1e9).contains(&magnitude) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

pub fn opt_sig9(x: Option<f64>) -> String {
    x.map(sig9).unwrap_or_default()
}

/// Writes `bytes` to `path`, or to stdout without a path.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes).and_then(|_| out.flush()).map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}

/// CSV with a `#` metadata block carrying the tool version and the resolved
/// configuration.
pub struct CsvTable {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render<C: Serialize>(&self, command: &str, config: &C) -> Result<Vec<u8>, CliError> {
        let mut buf = Vec::new();
        let config = serde_json::to_string(config).map_err(|e| CliError::usage(e.to_string()))?;
        writeln!(buf, "# {TOOL} {VERSION} {command}").expect("write to Vec");
        writeln!(buf, "# config: {config}").expect("write to Vec");
        let mut writer = csv::Writer::from_writer(buf);
        let csv_err = |e: csv::Error| CliError::usage(format!("csv: {e}"));
        writer.write_record(&self.header).map_err(csv_err)?;
        for row in &self.rows {
            writer.write_record(row).map_err(csv_err)?;
        }
        writer.into_inner().map_err(|e| CliError::usage(format!("csv: {e}")))
    }
}

/// JSON object with a leading `meta` entry.
pub fn json_report<C: Serialize, R: Serialize>(command: &str, config: &C, result: &R) -> Result<Vec<u8>, CliError> {
    let doc = json!({
        "meta": { "tool": TOOL, "version": VERSION, "command": command, "config": config },
        "result": result,
    });
    let mut bytes = serde_json::to_vec_pretty(&doc).map_err(|e| CliError::usage(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_digits() {
        assert_eq!(sig9(0.0644437928453), "0.0644437928");
        assert_eq!(sig9(1.0), "1");
        assert_eq!(sig9(-2.5e-7), "-2.5e-7");
        assert_eq!(sig9(123456789012.0), "1.23456789e11");
        assert_eq!(opt_sig9(None), "");
    }
}
