use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// Full double precision: 17 significant digits.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> std::io::Result<PathBuf> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

pub fn write_csv(dir: &Path, name: &str, header: &[String], rows: &[Vec<f64>]) -> std::io::Result<PathBuf> {
    let path = dir.join(name);
    let mut f = std::io::BufWriter::new(fs::File::create(&path)?);
    writeln!(f, "{}", header.join(","))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|&v| num(v)).collect();
        writeln!(f, "{}", line.join(","))?;
    }
    f.flush()?;
    Ok(path)
}

/// `prefix_1`, …, `prefix_n` (one-based, as in index notation).
pub fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}
