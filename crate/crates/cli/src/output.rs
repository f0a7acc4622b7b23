use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, Copy)]
pub struct Emit {
    csv: bool,
    json: bool,
    svg: bool,
}

impl Emit {
    pub fn parse(s: &str) -> Result<Self> {
        let mut e = Emit { csv: false, json: false, svg: false };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "csv" => e.csv = true,
                "json" => e.json = true,
                "svg" => e.svg = true,
                other => bail!("unknown output kind `{other}` (expected csv, json or svg)"),
            }
        }
        Ok(e)
    }

    fn wants(&self, kind: Kind) -> bool {
        match kind {
            Kind::Csv => self.csv,
            Kind::Json => self.json,
            Kind::Svg => self.svg,
        }
    }
}

/// Files produced by one command, held in memory until the command has
/// finished so that a failure leaves nothing behind.
pub struct Outputs {
    emit: Emit,
    files: Vec<(String, String)>,
}

impl Outputs {
    pub fn new(emit: Emit) -> Self {
        Self { emit, files: Vec::new() }
    }

    pub fn add(&mut self, kind: Kind, name: impl Into<String>, content: String) {
        if self.emit.wants(kind) {
            self.files.push((name.into(), content));
        }
    }

    pub fn add_json<T: Serialize>(&mut self, name: impl Into<String>, value: &T) -> Result<()> {
        if self.emit.wants(Kind::Json) {
            let text = to_json(value)?;
            self.files.push((name.into(), text));
        }
        Ok(())
    }

    /// Writes every file to a temporary name first, then renames them all.
    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut staged = Vec::new();
        for (name, content) in &self.files {
            let tmp = dir.join(format!(".{name}.partial"));
            if let Err(e) = fs::write(&tmp, content) {
                for (t, _) in &staged {
                    let _ = fs::remove_file(t);
                }
                let _ = fs::remove_file(&tmp);
                return Err(e).with_context(|| format!("writing {}", tmp.display()));
            }
            staged.push((tmp, dir.join(name)));
        }
        let mut done = Vec::new();
        for (tmp, path) in staged {
            fs::rename(&tmp, &path).with_context(|| format!("writing {}", path.display()))?;
            done.push(path);
        }
        Ok(done)
    }
}

fn has_null(v: &Value) -> bool {
    match v {
        Value::Null => true,
        Value::Array(a) => a.iter().any(has_null),
        Value::Object(o) => o.values().any(has_null),
        _ => false,
    }
}

/// Pretty JSON; refuses values that would serialize a non-finite number.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    if has_null(&v) {
        bail!("result contains a non-finite number");
    }
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

/// Short hex digest of arbitrary bytes.
pub fn digest(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}
