//! Deterministic artifact writing: JSON summaries and CSV tables with
//! numbers rounded to six significant digits.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::CliError;

/// Rounds to six significant digits; the JSON/CSV serializers then emit the
/// shortest representation of the rounded value, which is diff-stable.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let magnitude = x.abs().log10().floor();
    let factor = 10f64.powf(5.0 - magnitude);
    (x * factor).round() / factor
}

/// JSON number from a rounded f64; non-finite values become null.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(round_sig(x)).map_or(Value::Null, Value::Number)
}

pub fn num_vec(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

/// Rounded decimal string for CSV cells.
pub fn cell(x: f64) -> String {
    format!("{}", round_sig(x))
}

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(path).map_err(|e| {
            CliError::runtime(format!("cannot create output directory {}: {e}", path.display()))
        })?;
        Ok(OutDir {
            root: path.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_json(&self, name: &str, value: &Value) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::runtime(format!("cannot serialize {name}: {e}")))?;
        text.push('\n');
        fs::write(&path, text)
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let mut text = String::new();
        text.push_str(&header.join(","));
        text.push('\n');
        for row in rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        fs::write(&path, text)
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Shared summary envelope: schema version plus the command that produced it.
pub fn envelope(command: &str, body: Value) -> Value {
    let mut root = json!({
        "schema_version": crate::config::SCHEMA_VERSION,
        "command": command,
    });
    if let (Value::Object(target), Value::Object(extra)) = (&mut root, body) {
        for (k, v) in extra {
            target.insert(k, v);
        }
    }
    root
}
