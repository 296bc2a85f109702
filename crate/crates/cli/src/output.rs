use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Reproducibility metadata stamped on every output file.
#[derive(Clone, Debug, Serialize)]
pub struct Meta {
    pub version: &'static str,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Meta {
    fn header(&self) -> String {
        format!(
            "# qcrystal {}\n# command: {}\n# config_sha256: {}\n# seed: {}\n",
            self.version, self.command, self.config_sha256, self.seed
        )
    }
}

pub struct Outputs {
    dir: PathBuf,
    meta: Meta,
}

impl Outputs {
    pub fn new(dir: PathBuf, meta: Meta) -> io::Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, meta })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `rows` under a `#` metadata header.
    pub fn csv<S: AsRef<str>>(&self, name: &str, columns: &[&str], rows: &[Vec<S>]) -> io::Result<PathBuf> {
        let mut out = self.meta.header().into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(columns)?;
            for row in rows {
                w.write_record(row.iter().map(|s| s.as_ref()))?;
            }
            w.flush()?;
        }
        let path = self.path(name);
        fs::write(&path, out)?;
        Ok(path)
    }

    /// Writes the body object with an added `meta` field as pretty JSON.
    pub fn json<T: Serialize>(&self, name: &str, body: &T) -> io::Result<PathBuf> {
        let mut value = serde_json::to_value(body)?;
        let meta = serde_json::to_value(&self.meta)?;
        let doc = match value.as_object_mut() {
            Some(obj) => {
                let mut doc = serde_json::Map::new();
                doc.insert("meta".into(), meta);
                doc.append(obj);
                serde_json::Value::Object(doc)
            }
            None => serde_json::json!({ "meta": meta, "data": value }),
        };
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        let path = self.path(name);
        fs::write(&path, text)?;
        Ok(path)
    }
}

/// Shortest round-trip representation, so outputs are stable across runs.
pub fn num(x: f64) -> String {
    format!("{x}")
}
