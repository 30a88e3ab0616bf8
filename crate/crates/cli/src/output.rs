use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use shapkit::{Explanation, ShapError};

type Result<T> = std::result::Result<T, ShapError>;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn explanation_json(e: &Explanation, seed: u64) -> Value {
    json!({
        "method": e.method.as_str(),
        "base_value": e.base_value,
        "attributions": e.attributions,
        "prediction": e.fx_full,
        "evaluations_used": e.evaluations_used,
        "seed": seed,
    })
}

pub fn explanation_csv(e: &Explanation, seed: u64) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "method".to_string(),
        "base_value".into(),
        "prediction".into(),
        "evaluations_used".into(),
        "seed".into(),
    ];
    header.extend((0..e.attributions.len()).map(|i| format!("phi_{i}")));
    w.write_record(&header)?;
    let mut row = vec![
        e.method.as_str().to_string(),
        e.base_value.to_string(),
        e.fx_full.to_string(),
        e.evaluations_used.to_string(),
        seed.to_string(),
    ];
    row.extend(e.attributions.iter().map(f64::to_string));
    w.write_record(&row)?;
    into_string(w)
}

/// Numeric matrix as CSV with an `x0, x1, …` header.
pub fn matrix_csv(rows: &[Vec<f64>]) -> Result<String> {
    let width = rows.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record((0..width).map(|i| format!("x{i}")))?;
    for row in rows {
        w.write_record(row.iter().map(f64::to_string))?;
    }
    into_string(w)
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| ShapError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| ShapError::Io(e.to_string()))
}

pub fn pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values serialize");
    s.push('\n');
    s
}

/// Write to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, content).map_err(|e| ShapError::Io(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(content.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

/// Files written into one directory, with their content hashes.
pub struct OutputDir {
    dir: PathBuf,
    hashes: BTreeMap<String, String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| ShapError::Io(format!("{}: {e}", dir.display())))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            hashes: BTreeMap::new(),
        })
    }

    pub fn write(&mut self, name: &str, content: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, content).map_err(|e| ShapError::Io(format!("{}: {e}", path.display())))?;
        self.hashes.insert(name.to_string(), sha256_hex(content.as_bytes()));
        Ok(())
    }

    /// Write `manifest.json` with `extra` plus the hashes of everything written so far.
    pub fn finish(self, mut manifest: Value) -> Result<()> {
        manifest["files"] = json!(self.hashes);
        let path = self.dir.join("manifest.json");
        fs::write(&path, pretty(&manifest)).map_err(|e| ShapError::Io(format!("{}: {e}", path.display())))
    }
}
