//! Report writing (JSON or flattened CSV) and JSON sidecars.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    Json,
    Csv,
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        Value::Array(a) if a.iter().all(|x| !x.is_object() && !x.is_array()) => {
            let joined: Vec<String> = a.iter().map(scalar).collect();
            out.push((prefix.to_string(), joined.join(";")));
        }
        Value::Array(a) => {
            for (i, v) in a.iter().enumerate() {
                flatten(&format!("{prefix}.{i}"), v, out);
            }
        }
        other => out.push((prefix.to_string(), scalar(other))),
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Renders `rows` as CSV: every row is flattened to dotted keys and the header
/// is the union of keys in first-seen order.
pub fn csv_bytes(rows: &[Value]) -> Result<Vec<u8>> {
    let flat: Vec<Vec<(String, String)>> = rows
        .iter()
        .map(|r| {
            let mut f = Vec::new();
            flatten("", r, &mut f);
            f
        })
        .collect();
    let mut header: Vec<String> = Vec::new();
    for row in &flat {
        for (k, _) in row {
            if !header.contains(k) {
                header.push(k.clone());
            }
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for row in &flat {
        let rec: Vec<&str> =
            header.iter().map(|h| row.iter().find(|(k, _)| k == h).map_or("", |(_, v)| v.as_str())).collect();
        w.write_record(&rec)?;
    }
    w.into_inner().context("flushing csv")
}

/// Writes a report. In CSV mode, `rows` (when given) become the table;
/// otherwise the report itself is a single row.
pub fn emit<T: Serialize>(report: &T, rows: Option<Vec<Value>>, format: OutFormat, out: Option<&Path>) -> Result<()> {
    let bytes = match format {
        OutFormat::Json => {
            let mut b = serde_json::to_vec_pretty(report)?;
            b.push(b'\n');
            b
        }
        OutFormat::Csv => csv_bytes(&rows.unwrap_or_else(|| vec![serde_json::to_value(report).unwrap()]))?,
    };
    match out {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

pub fn to_rows<T: Serialize>(items: &[T]) -> Vec<Value> {
    items.iter().map(|i| serde_json::to_value(i).unwrap()).collect()
}

/// `path` with `suffix` appended to the file name.
pub fn sidecar_path(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut b = serde_json::to_vec_pretty(value)?;
    b.push(b'\n');
    std::fs::write(path, b).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

pub fn object(pairs: Vec<(&str, Value)>) -> Value {
    Value::Object(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect::<Map<_, _>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn flattens_nested_rows() {
        let rows = vec![json!({"a": 1, "b": {"c": [1, 2]}, "d": null}), json!({"a": 2, "e": "x"})];
        let text = String::from_utf8(csv_bytes(&rows).unwrap()).unwrap();
        assert_eq!(text, "a,b.c,d,e\n1,1;2,,\n2,,,x\n");
    }

    #[test]
    fn sidecar_names() {
        assert_eq!(sidecar_path(Path::new("/tmp/x.fslt"), ".labels.json"), PathBuf::from("/tmp/x.fslt.labels.json"));
    }
}
