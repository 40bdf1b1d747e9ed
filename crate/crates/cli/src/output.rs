//! Report rendering and atomic file output.

use std::io::Write;
use std::path::Path;

use serde_json::Value;

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so readers never see a partial report.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Builds a CSV document from a header and rows.
pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> Result<String, String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).map_err(|e| e.to_string())?;
    for r in rows {
        w.write_record(r).map_err(|e| e.to_string())?;
    }
    String::from_utf8(w.into_inner().map_err(|e| e.to_string())?).map_err(|e| e.to_string())
}

/// Flattens a JSON report into `(path, exact, approx)` rows. Dual values
/// fill both columns; other scalars fill `exact` only.
pub fn flatten(value: &Value) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    walk(value, String::new(), &mut rows);
    rows
}

fn walk(v: &Value, path: String, rows: &mut Vec<Vec<String>>) {
    let join = |k: &str| if path.is_empty() { k.to_string() } else { format!("{path}.{k}") };
    match v {
        Value::Object(map) => {
            if let (Some(Value::String(e)), Some(a), 2) = (map.get("exact"), map.get("approx"), map.len()) {
                rows.push(vec![path, e.clone(), a.to_string()]);
                return;
            }
            for (k, x) in map {
                walk(x, join(k), rows);
            }
        }
        Value::Array(items) => {
            for (i, x) in items.iter().enumerate() {
                walk(x, join(&i.to_string()), rows);
            }
        }
        Value::String(s) => rows.push(vec![path, s.clone(), String::new()]),
        Value::Null => rows.push(vec![path, String::new(), String::new()]),
        other => rows.push(vec![path, other.to_string(), String::new()]),
    }
}
